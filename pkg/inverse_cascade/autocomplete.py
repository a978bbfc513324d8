"""Shell autocompletion support for icb."""

import os

SUBCOMMANDS = ("geometry-check", "ladder", "build", "verify", "rates", "corrector", "run", "export")
GLOBAL_FLAGS = ("--help", "-h", "--config", "--params", "--out", "--seed", "--grid", "--mode", "--levels", "--log-level", "--install")
CORRECTOR_FLAGS = ("--delta", "--tbar", "--n0", "--bg")
EXPORT_FLAGS = ("--format", "--target")


def bash_script() -> str:
    return f"""# icb bash completion
_icb_complete() {{
    local cur="${{COMP_WORDS[COMP_CWORD]}}"
    local prev="${{COMP_WORDS[COMP_CWORD-1]}}"

    case "${{prev}}" in
        --config|--params|--bg|--target)
            COMPREPLY=($(compgen -f -- "${{cur}}"))
            return 0
            ;;
        --out)
            COMPREPLY=($(compgen -d -- "${{cur}}"))
            return 0
            ;;
        --mode)
            COMPREPLY=($(compgen -W "field asymptotic" -- "${{cur}}"))
            return 0
            ;;
        --format)
            COMPREPLY=($(compgen -W "csv svg" -- "${{cur}}"))
            return 0
            ;;
        --log-level)
            COMPREPLY=($(compgen -W "debug info warn error" -- "${{cur}}"))
            return 0
            ;;
        --seed|--grid|--levels|--delta|--tbar|--n0)
            return 0
            ;;
    esac

    local command=""
    for word in "${{COMP_WORDS[@]:1:COMP_CWORD-1}}"; do
        case "${{word}}" in
            {"|".join(SUBCOMMANDS)}) command="${{word}}" ;;
        esac
    done

    if [[ "${{cur}}" == -* ]]; then
        local opts="{" ".join(GLOBAL_FLAGS)}"
        case "${{command}}" in
            corrector) opts="${{opts}} {" ".join(CORRECTOR_FLAGS)}" ;;
            export) opts="${{opts}} {" ".join(EXPORT_FLAGS)}" ;;
        esac
        COMPREPLY=($(compgen -W "${{opts}}" -- "${{cur}}"))
        return 0
    fi

    if [[ -z "${{command}}" ]]; then
        COMPREPLY=($(compgen -W "{" ".join(SUBCOMMANDS)}" -- "${{cur}}"))
    elif [[ "${{command}}" == "export" ]]; then
        COMPREPLY=($(compgen -f -X '!*.cff' -- "${{cur}}"))
    fi
}}
complete -o filenames -F _icb_complete icb
"""


def zsh_script() -> str:
    commands = "\n".join(f"        '{name}'" for name in SUBCOMMANDS)
    return f"""#compdef icb
_icb() {{
    local -a commands
    commands=(
{commands}
    )

    _arguments \\
        '(--config --params)'{{--config,--params}}'[run configuration]:file:_files -g "*.(yml|yaml|json)"' \\
        '--out[output directory]:directory:_directories' \\
        '--seed[random seed]:seed:' \\
        '--grid[grid points per axis]:grid:' \\
        '--mode[ladder regime]:mode:(field asymptotic)' \\
        '--levels[highest level]:levels:' \\
        '--log-level[log verbosity]:level:(debug info warn error)' \\
        '--install[install completion]' \\
        '--delta[corrector ball radius]:delta:' \\
        '--tbar[corrector horizon]:tbar:' \\
        '--n0[background rescaling]:n0:' \\
        '--bg[background config]:file:_files' \\
        '--format[export format]:format:(csv svg)' \\
        '--target[export target]:file:_files' \\
        '1: :->command' \\
        '*:snapshot:_files -g "*.cff"'

    case $state in
        command)
            compadd -a commands
            ;;
    esac
}}

_icb "$@"
"""


def fish_script() -> str:
    lines = ["# icb fish completion", "complete -c icb -f"]
    condition = "not __fish_seen_subcommand_from " + " ".join(SUBCOMMANDS)
    for name in SUBCOMMANDS:
        lines.append(f'complete -c icb -n "{condition}" -a {name}')
    lines += [
        "complete -c icb -l config -r -F -d 'Run configuration'",
        "complete -c icb -l params -r -F -d 'Run configuration'",
        "complete -c icb -l out -r -a '(__fish_complete_directories)' -d 'Output directory'",
        "complete -c icb -l seed -x -d 'Random seed'",
        "complete -c icb -l grid -x -d 'Grid points per axis'",
        "complete -c icb -l mode -x -a 'field asymptotic' -d 'Ladder regime'",
        "complete -c icb -l levels -x -d 'Highest level'",
        "complete -c icb -l log-level -x -a 'debug info warn error' -d 'Log verbosity'",
        "complete -c icb -l install -d 'Install completion'",
        "complete -c icb -n '__fish_seen_subcommand_from corrector' -l delta -x -d 'Ball radius'",
        "complete -c icb -n '__fish_seen_subcommand_from corrector' -l tbar -x -d 'Time horizon'",
        "complete -c icb -n '__fish_seen_subcommand_from corrector' -l n0 -x -d 'Background rescaling'",
        "complete -c icb -n '__fish_seen_subcommand_from corrector' -l bg -r -F -d 'Background config'",
        "complete -c icb -n '__fish_seen_subcommand_from export' -l format -x -a 'csv svg' -d 'Export format'",
        "complete -c icb -n '__fish_seen_subcommand_from export' -l target -r -F -d 'Export target'",
        "complete -c icb -n '__fish_seen_subcommand_from export' -a '(__fish_complete_suffix .cff)'",
    ]
    return "\n".join(lines) + "\n"


def install_shell_completion() -> int:
    """Install shell completion scripts for the current shell."""
    shell = os.environ.get("SHELL", "").split("/")[-1]
    home = os.path.expanduser("~")

    success = False

    if shell == "bash":
        bash_completion_dir = f"{home}/.bash_completion.d"
        os.makedirs(bash_completion_dir, exist_ok=True)
        completion_file = f"{bash_completion_dir}/icb"
        with open(completion_file, "w", encoding="utf-8") as f:
            f.write(bash_script())

        bashrc_path = f"{home}/.bashrc"
        bashrc_content = ""
        if os.path.exists(bashrc_path):
            with open(bashrc_path, "r", encoding="utf-8") as f:
                bashrc_content = f.read()

        bash_completion_d_source = """
# Source bash completion files from ~/.bash_completion.d/
if [ -d ~/.bash_completion.d ]; then
    for file in ~/.bash_completion.d/*; do
        [ -r "$file" ] && . "$file"
    done
fi"""

        needs_update = (
            ".bash_completion.d" not in bashrc_content
            or "for file in ~/.bash_completion.d" not in bashrc_content
        )
        if needs_update:
            with open(bashrc_path, "a", encoding="utf-8") as f:
                f.write(bash_completion_d_source)
            print(f"✓ Bash completion installed to {completion_file}")
            print("✓ Added .bash_completion.d sourcing to ~/.bashrc")
        else:
            print(f"✓ Bash completion installed to {completion_file}")
            print("✓ .bashrc already configured to load completion files")
        print("Run 'source ~/.bashrc' or restart your terminal to enable completion")
        success = True

    elif shell == "zsh":
        zsh_completion_dir = f"{home}/.zsh/completions"
        os.makedirs(zsh_completion_dir, exist_ok=True)
        completion_file = f"{zsh_completion_dir}/_icb"
        with open(completion_file, "w", encoding="utf-8") as f:
            f.write(zsh_script())
        print(f"✓ Zsh completion installed to {completion_file}")
        print("Add 'fpath=(~/.zsh/completions $fpath)' to your ~/.zshrc if not already present")
        print("Run 'autoload -U compinit && compinit' or restart your terminal")
        success = True

    elif shell == "fish":
        fish_completion_dir = f"{home}/.config/fish/completions"
        os.makedirs(fish_completion_dir, exist_ok=True)
        completion_file = f"{fish_completion_dir}/icb.fish"
        with open(completion_file, "w", encoding="utf-8") as f:
            f.write(fish_script())
        print(f"✓ Fish completion installed to {completion_file}")
        print("Restart your fish shell to enable completion")
        success = True

    else:
        print(f"✗ Unknown shell: {shell}")
        print("Supported shells: bash, zsh, fish")
        print("You can manually install completion scripts:")
        print("\nBash completion script:")
        print(bash_script())
        print("\nZsh completion script:")
        print(zsh_script())
        print("\nFish completion script:")
        print(fish_script())

    return 0 if success else 1

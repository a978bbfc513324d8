#!/usr/bin/env python3
"""
icb: build and check a two-dimensional inverse cascade for the forced
Navier-Stokes system with a passive tracer.

The pipeline runs as named stages (geometry, ladder, build, verify, rates, probes,
corrector). Every stage adds named checks to a DiagnosticsReport, which is written as
CSV together with a YAML summary, CFF1 snapshots and SVG figures.
"""

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .autocomplete import install_shell_completion
from .cascade import (
    Cascade,
    amplitude_identity_residuals,
    build_cascade,
    consistency_residuals,
    difference_probe,
    equation_residual,
    leading_term_identity,
    principal_fields,
    scale_separation_table,
    support_leakage,
)
from .config import RunConfig
from .corrector import (
    PICARD_TOL,
    BackgroundPair,
    CorrectorInputs,
    CorrectorState,
    PathNormParams,
    coefficient_fields,
    corrector_residual,
    picard_solve,
    product_bound_probe,
    rescaling_symmetry,
    semigroup_bound_probe,
)
from .errors import CascadeError, ConfigError
from .geometry import EPSILON_U, run_geometry_check
from .ladder import JD_CHOICE, AsymptoticLadder, FrequencyLadder, build_ladder, cube_intersection_probe, omega_volume_fraction
from .probes import (
    LpRow,
    commutator_probe,
    critical_norm_comparison,
    critical_norm_scan,
    envelope_validation,
    field_rate_fit,
    lower_sequence,
    lp_scan,
    rate_scan,
    sup_envelope,
)
from .report import DiagnosticsReport
from .snapshot import export_csv, read_snapshot, write_manifest, write_snapshot
from .spectral_core import Grid2D, Rank, heat_semigroup, random_field, to_spectral

REPORT_NAME = "report.csv"
SUMMARY_NAME = "summary.yml"
MANIFEST_NAME = "manifest.yml"
# mild-solution residual of the corrected pair, relative to ||Lap u||
EQUATION_TOL = 1e-4


@dataclass
class RunContext:
    config: RunConfig
    report: DiagnosticsReport
    ladder: Optional[FrequencyLadder] = None
    certified: Optional[AsymptoticLadder] = None
    cascade: Optional[Cascade] = None
    artifacts: List[Path] = field(default_factory=list)

    @property
    def out(self) -> Path:
        return Path(self.config.out)

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.config.grid)

    @property
    def plots(self) -> bool:
        return self.config.probes.plots

    def rng(self, stream: int) -> np.random.Generator:
        """Independent generator per consumer, all seeded from the config seed."""
        return np.random.default_rng([self.config.seed, stream])


# -- stages -----------------------------------------------------------------------------


def stage_geometry(ctx: RunContext) -> None:
    results = run_geometry_check(ctx.config.seed, ctx.config.geometry.samples)
    report = ctx.report
    report.note("geometry.epsilon_u", results["epsilon_u"])
    report.add("geometry.sym_reconstruction", results["sym_reconstruction"], 1e-13, 0.0, "le")
    report.add("geometry.sym_min_coefficient", results["sym_min_coefficient"], 0.0, 0.0, "ge")
    report.add("geometry.tv_tensor", results["tv_tensor"], 1e-12, 0.0, "le")
    report.add("geometry.tv_vector", results["tv_vector"], 1e-12, 0.0, "le")
    report.add("geometry.tv_pressure", results["tv_pressure"], 1e-12, 0.0, "le")
    report.add("geometry.tv_alpha_beta", results["tv_alpha_beta"], 1e-12, 0.0, "le")
    report.note("geometry.tv_pair_cancellation", results["tv_pair_cancellation"])
    report.add("geometry.sym_richardson", results["sym_richardson"], 4.0, 1.0)
    report.add("geometry.tv_richardson", results["tv_richardson"], 4.0, 1.0)


def stage_ladder(ctx: RunContext) -> None:
    config = ctx.config
    report = ctx.report
    certified = build_ladder(config.rate_params())
    ctx.certified = certified
    for name, margin in certified.margins.items():
        report.add(f"ladder.certified.{name}", margin, 0.0, 0.0, "ge")

    params = config.ladder_params()
    if config.mode == "asymptotic":
        ladder = build_ladder(params)
        for name, margin in ladder.margins.items():
            report.add(f"ladder.asymptotic.{name}", margin, 0.0, 0.0, "ge")
        write_manifest(ctx.out / "ladder.yml", {"log10": ladder.log10_rows(), "margins": ladder.margins})
        return

    ladder = build_ladder(params, ctx.grid)
    ctx.ladder = ladder
    report.note("ladder.ordering_violations", len(ladder.ordering_violations(params.K)), 0.0)
    report.note("ladder.regime_warnings", len(ladder.warnings))
    write_manifest(ctx.out / "ladder.yml", {"rows": ladder.table_rows(), "warnings": ladder.warnings})

    # separation needs frequencies far apart; the certified ladder provides them
    entries = scale_separation_table(certified, 1, log_t=certified.log_t[0])
    diagonal = [e.value for e in entries if e.j == e.jp]
    report.add("separation.diagonal_min", min(diagonal), 0.45, 0.0, "ge")
    report.add("separation.diagonal_max", max(diagonal), 0.5, 0.0, "le")
    report.add("separation.offdiagonal_error", max(e.relative_error for e in entries if e.j != e.jp), 0.1, 0.0, "le")
    toy = scale_separation_table(ladder, 1, ladder.t[0])
    report.note("separation.toy_diagonal_min", min(e.value for e in toy if e.j == e.jp), 0.5)
    if ctx.plots:
        from .plots import plot_separation

        ctx.artifacts.append(plot_separation(toy, ctx.out / "figures" / "separation.svg"))


def _require_field(ctx: RunContext, stage: str) -> FrequencyLadder:
    if ctx.ladder is None:
        raise ConfigError(f"stage {stage} needs a field-mode ladder (mode={ctx.config.mode})")
    return ctx.ladder


def stage_build(ctx: RunContext) -> None:
    config = ctx.config
    ladder = _require_field(ctx, "build")
    cascade = build_cascade(ladder, ctx.grid, config.top_level, config.geometry.c)
    ctx.cascade = cascade
    report = ctx.report

    levels = []
    for level in cascade.levels:
        N = min(level.frequencies.values())
        t_ref = 1.0 / (2.0 * N * N)
        fields = principal_fields(level, t_ref)
        snapshots = ctx.out / "snapshots"
        write_snapshot(snapshots / f"level{level.k}_vbar.cff", fields.vbar)
        write_snapshot(snapshots / f"level{level.k}_hbar.cff", fields.hbar)
        levels.append(
            {
                "k": level.k,
                "c": level.amplitudes.c_small,
                "ball_margin": level.amplitudes.margin,
                "t_ref": t_ref + config.t_star,
                "leray_defect": fields.leray_defect,
            }
        )
        if level.k > 0:
            report.note(f"build.k{level.k}.support_leakage", support_leakage(level, level.masks.omega))

    if cascade.K >= 1:
        residuals = amplitude_identity_residuals(cascade.levels[0], cascade.levels[1].amplitudes)
        report.add("build.identity.tensor_u", residuals["tensor_u"], 1e-10, 0.0, "le")
        report.add("build.identity.tensor_c", residuals["tensor_c"], 1e-10, 0.0, "le")
        report.add("build.identity.vector_b", residuals["vector_b"], 1e-10, 0.0, "le")
        report.note("build.identity.curl", residuals["curl"])
        leading = leading_term_identity(cascade.levels[0], cascade.levels[1].amplitudes)
        report.note("build.leading.tensor_u", leading["tensor_u"])
        report.note("build.leading.vector_b", leading["vector_b"])

    write_manifest(
        ctx.out / MANIFEST_NAME,
        {
            "A": ladder.params.A,
            "b": ladder.params.b,
            "gamma": ladder.params.gamma,
            "delta0": ladder.delta0,
            "field_delta0": ladder.field_delta0(ctx.grid),
            "epsilon_u": EPSILON_U,
            "jd_choice": JD_CHOICE,
            "grid": ctx.grid.nx,
            "t_star": config.t_star,
            "config_hash": config.content_hash(),
            "levels": levels,
        },
    )
    if ctx.plots and cascade.K >= 1:
        from .plots import plot_masks

        ctx.artifacts.append(plot_masks(cascade.levels[1].masks, ctx.out / "figures" / "masks_k1.svg"))


def _require_cascade(ctx: RunContext, stage: str) -> Cascade:
    if ctx.cascade is None:
        raise ConfigError(f"stage {stage} needs a built cascade")
    return ctx.cascade


def add_volume_checks(ctx: RunContext, cascade: Cascade) -> None:
    """|Omega_k| at the geometric delta0, next to the masks the cascade was built with."""
    config = ctx.config
    report = ctx.report
    ladder = cascade.ladder
    if config.probes.volumes:
        rng = ctx.rng(1)
        for k in (1, 2):
            fraction = omega_volume_fraction(k, ladder, rng, config.probes.volume_samples)
            bound = 2.0 ** (-k)
            report.add(f"verify.volume.k{k}", fraction, bound, 0.02 * bound, "le")
    # synthesized masks use the grid-resolvable pipe radius, not the geometric delta0
    report.note("verify.volume.field_delta0_ratio", ladder.field_delta0(cascade.grid) / ladder.delta0, 1.0)
    for level in cascade.levels[1:]:
        report.note(f"verify.volume.built_k{level.k}", level.masks.volume_fraction(), 2.0 ** (-level.k))
    if config.probes.cube:
        probe = cube_intersection_probe(0, 1, ladder, ctx.rng(2))
        report.add("verify.cube.k1", probe.max_ratio, probe.bound, 0.05 * probe.bound, "le")


def add_lp_checks(report: DiagnosticsReport, rows: List[LpRow]) -> None:
    for row in rows:
        if row.k == 1 and row.p == 2.0:
            report.add("verify.lp.k1_p2", row.ratio_v, row.prediction, 0.05, "le")
            report.add("verify.lp.k1_p2_volume_bound", row.ratio_v, 2.0**-0.5, 0.05, "le")
        elif math.isinf(row.p):
            report.add(f"verify.lp.k{row.k}_pinf", row.ratio_v, 1.0, 1e-12)
        else:
            report.note(f"verify.lp.k{row.k}_p{row.p:g}", row.ratio_v, row.prediction)
        if row.p == 4.0:
            report.note(f"verify.lp.k{row.k}_l2l4", row.l2_time_v)


def stage_verify(ctx: RunContext) -> None:
    config = ctx.config
    report = ctx.report
    cascade = _require_cascade(ctx, "verify")
    top = cascade.levels[-1]
    n_low = min(top.frequencies.values())
    n_high = max(top.frequencies.values())
    times = [1.0 / n_high**2, 1.0 / n_low**2, 4.0 / n_low**2]

    worst = consistency_residuals(cascade, times)
    for name in ("vbar_div_Rbar", "hbar_div_Hbar", "v_div_R", "h_div_H"):
        report.add(f"verify.consistency.{name}", worst[name], 1e-10, 0.0, "le")
    report.add("verify.consistency.div_v", worst["div_v"], 1e-11, 0.0, "le")
    report.add("verify.consistency.div_vbar", worst["div_vbar"], 1e-11, 0.0, "le")

    if cascade.K >= 1:
        t = 1.0 / n_low**2
        dt = 0.02 / (2.0 * n_high) ** 2
        residual = equation_residual(cascade, t, dt)
        report.add("verify.residual.velocity_ratio", residual.velocity.richardson_ratio, 4.0, 1.0)
        report.add("verify.residual.velocity", residual.velocity.relative, 1e-6, 0.0, "le")
        if residual.scalar.at_roundoff:
            report.note("verify.residual.scalar_ratio", residual.scalar.richardson_ratio, 4.0)
        else:
            report.add("verify.residual.scalar_ratio", residual.scalar.richardson_ratio, 4.0, 1.0)
        report.add("verify.residual.scalar", residual.scalar.relative, 1e-6, 0.0, "le")
        for k, values in difference_probe(cascade, t).items():
            for name, value in values.items():
                report.note(f"verify.difference.k{k}.{name}", value)

    add_volume_checks(ctx, cascade)

    for level in cascade.levels:
        n_min, n_max = min(level.frequencies.values()), max(level.frequencies.values())
        window = np.geomspace(0.1 / n_max**2, 10.0 / n_min**2, 64)
        envelope = sup_envelope(level, window)
        gap = abs(math.log(envelope["ratio"]))
        if level.k == 0:
            report.add("verify.envelope.k0", gap, 0.0, math.log(3.0), "le")
        else:
            report.note(f"verify.envelope.k{level.k}", envelope["ratio"], 1.0)

    if config.probes.lp and cascade.K >= 1:
        level1 = cascade.levels[1]
        n_min, n_max = min(level1.frequencies.values()), max(level1.frequencies.values())
        rows = lp_scan(cascade, (2.0, 4.0, math.inf), np.geomspace(0.5 / n_max**2, 2.0 / n_min**2, 8))
        add_lp_checks(report, rows)


def stage_rates(ctx: RunContext) -> None:
    config = ctx.config
    report = ctx.report
    certified = ctx.certified if ctx.certified is not None else build_ladder(config.rate_params())
    scan = rate_scan(certified)
    report.add("rates.sup_slope", scan.sup.slope, -0.5, 0.05)
    report.add("rates.gradient_slope", scan.gradient.slope, -1.0, 0.1)
    report.add("rates.c_lower", scan.c_lower, 0.0, 0.0, "ge")
    report.add("rates.constant_ratio", scan.constant_ratio, 10.0, 0.0, "le")
    report.note("rates.decades", scan.sup.decades)
    report.add_fit("sup", scan.sup.slope, scan.sup.stderr, scan.sup.points)
    report.add_fit("gradient", scan.gradient.slope, scan.gradient.stderr, scan.gradient.points)

    if ctx.cascade is not None:
        validation = envelope_validation(ctx.cascade)
        for k, ratios in validation.items():
            if k == 0:
                report.add("rates.envelope.k0_max", ratios["max_ratio"], 2.0, 0.0, "le")
                report.add("rates.envelope.k0_min", ratios["min_ratio"], 0.5, 0.0, "ge")
            else:
                report.note(f"rates.envelope.k{k}_max", ratios["max_ratio"], 2.0)
                report.note(f"rates.envelope.k{k}_min", ratios["min_ratio"], 0.5)
        rows = lower_sequence(ctx.cascade)
        for row in rows:
            if row["k"] == 0:
                report.add(f"rates.lower_sequence.k0_j{row['j']}", row["ratio"], 1.0, 1e-8)
        report.note("rates.lower_sequence.min_ratio", min(row["ratio"] for row in rows), 1.0)
        top = ctx.cascade.levels[-1]
        n_min = min(top.frequencies.values())
        times = np.geomspace(0.25 / n_min**2, 1.0 / 25.0, 16)
        fit = field_rate_fit(ctx.cascade, times)
        report.note("rates.field_slope", fit.slope, -0.5)
        if ctx.plots:
            from .plots import plot_sup_norms

            values = np.exp(fit.log_values)
            ctx.artifacts.append(plot_sup_norms(times, values, ctx.out / "figures" / "sup_norm.svg", config.t_star))

    if config.probes.critical_norms:
        params = replace(config.ladder_params(), K=max(config.ladder.K, 3))
        slopes = critical_norm_comparison(params)
        report.add("rates.critical.l1_ratio", slopes["ratio_l1"], 2.25, 0.75)
        report.note("rates.critical.l2_ratio", slopes["ratio_l2"], 2.0)
        single = critical_norm_scan(lambda t: 5.0 * np.exp(-25.0 * t), 1e-6, 1.0)
        report.add("rates.critical.single_mode_l2", float(single.l2_squared[0]), 0.5, 1e-3, "le")
    if ctx.plots:
        from .plots import plot_rates

        ctx.artifacts.append(plot_rates(scan, ctx.out / "figures" / "rates.svg"))


def stage_probes(ctx: RunContext) -> None:
    report = ctx.report
    if ctx.config.probes.commutator:
        grid = Grid2D(128)
        x1, _ = grid.coordinates
        a = to_spectral(np.sin(2.0 * x1), grid)
        t_list = np.geomspace(1e-4, 1e-1, 16)
        base = commutator_probe(a, (0, 8), t_list)
        doubled = commutator_probe(a, (0, 16), t_list)
        constant = to_spectral(np.full((grid.nx, grid.nx), 0.7), grid)
        report.add("probes.commutator.constant_field", commutator_probe(constant, (0, 8), t_list)["lhs_max"], 0.0, 1e-13, "le")
        report.note("probes.commutator.constant", base["constant"])
        report.add("probes.commutator.doubling", doubled["constant"] / base["constant"], 1.0, 0.2, "le")

    grid = Grid2D(64)
    rng = ctx.rng(3)
    v0 = random_field(grid, Rank.VECTOR, rng, bandwidth=4, zero_mean=True)
    h0 = random_field(grid, Rank.SCALAR, rng, bandwidth=4)
    f_u = random_field(grid, Rank.SYMTENSOR, rng, bandwidth=4)
    f_b = random_field(grid, Rank.VECTOR, rng, bandwidth=4)
    gaps = rescaling_symmetry(
        lambda t: heat_semigroup(v0, t),
        lambda t: heat_semigroup(h0, t),
        lambda t: f_u,
        lambda t: f_b,
        0.05,
        1e-3,
        2,
    )
    report.add("probes.rescaling.velocity", gaps["velocity"], 0.0, 1e-10, "le")
    report.add("probes.rescaling.scalar", gaps["scalar"], 0.0, 1e-10, "le")


def residual_nodes(count: int) -> List[int]:
    """Three interior node indices spread over the time grid."""
    if count < 5:
        return list(range(1, count - 1))
    return sorted({count // 4, count // 2, (3 * count) // 4})


def add_equation_checks(
    report: DiagnosticsReport,
    state: CorrectorState,
    inputs: CorrectorInputs,
    background: BackgroundPair,
    params: PathNormParams,
) -> None:
    """Mild-solution residual of u = U + v + w, b = H + h + zeta at three interior nodes."""
    # a calibrated drive solves the system with forcing scaled by forcing_scale
    prefix = "corrector.equation" if state.forcing_scale == 1.0 else "corrector.scaled_equation"
    for index in residual_nodes(len(inputs.times)):
        residual = corrector_residual(state, inputs, background, params, index)
        report.add(f"{prefix}.velocity.n{index}", residual["velocity"], EQUATION_TOL, 0.0, "le")
        report.add(f"{prefix}.scalar.n{index}", residual["scalar"], EQUATION_TOL, 0.0, "le")
        report.note(f"{prefix}.node_gap.n{index}", residual["node_gap"])
    if state.forcing_scale != 1.0:
        report.note("corrector.forcing_scale", state.forcing_scale, 1.0)


def stage_corrector(ctx: RunContext) -> None:
    config = ctx.config
    section = config.corrector
    report = ctx.report
    params = config.path_params()
    background = config.background()
    grid = Grid2D(section.grid)
    times = params.time_nodes()
    if ctx.cascade is not None:
        inputs = CorrectorInputs.from_cascade(ctx.cascade, grid, times)
    else:
        inputs = CorrectorInputs.zeros(grid, times)

    zero = picard_solve(CorrectorInputs.zeros(grid, times), background, params, delta=1.0)
    report.add("corrector.zero_forcing", zero.x_norm, 0.0, 0.0)

    state = picard_solve(inputs, background, params, section.delta, calibrate=section.calibrate)
    report.add("corrector.residual", state.residual, 1e-7, 0.0, "le")
    report.add("corrector.contraction", state.contraction, 1.0, 0.0, "le")
    report.note("corrector.x_norm", state.x_norm, state.delta)
    report.note("corrector.product_constant", product_bound_probe(grid, params, ctx.rng(4), samples=10)["constant"])
    pairs = [(float(times[i]), float(times[j])) for i, j in ((0, len(times) // 2), (len(times) // 2, -1), (0, -1))]
    semigroup = semigroup_bound_probe(coefficient_fields(inputs, background), params, ctx.rng(5), grid, pairs)
    report.note("corrector.semigroup_constant", semigroup["constant"])
    if section.calibrate and state.ratios:
        half = picard_solve(inputs, background, params, state.delta / 2.0, calibrate=True)
        ratio = half.ratios[0] / state.ratios[0] if half.ratios and state.ratios[0] > 0 else math.nan
        report.add("corrector.delta_halving", ratio, 0.5, 0.15)
    add_equation_checks(report, state, inputs, background, params)

    history = [[row["iter"], row["update_norm"], row["rho"]] for row in state.history_rows()]
    write_manifest(ctx.out / "corrector.yml", {"delta": state.delta, "forcing_scale": state.forcing_scale, "history": history})
    write_snapshot(ctx.out / "snapshots" / "corrector_w.cff", state.w.values[-1])
    write_snapshot(ctx.out / "snapshots" / "corrector_zeta.cff", state.zeta.values[-1])
    if ctx.plots:
        from .plots import plot_picard

        ctx.artifacts.append(plot_picard(state.updates, ctx.out / "figures" / "picard.svg", PICARD_TOL))


STAGES: Dict[str, Callable[[RunContext], None]] = {
    "geometry": stage_geometry,
    "ladder": stage_ladder,
    "build": stage_build,
    "verify": stage_verify,
    "rates": stage_rates,
    "probes": stage_probes,
    "corrector": stage_corrector,
}

COMMANDS: Dict[str, List[str]] = {
    "geometry-check": ["geometry"],
    "ladder": ["ladder"],
    "build": ["ladder", "build"],
    "verify": ["ladder", "build", "verify"],
    "rates": ["ladder", "build", "rates"],
    "corrector": ["ladder", "build", "corrector"],
    "run": ["geometry", "ladder", "build", "verify", "rates", "probes"],
}

FIELD_STAGES = {"build", "verify"}


def run_pipeline(config: RunConfig, stages: List[str]) -> DiagnosticsReport:
    """Run the stages in order; a failing stage ends the run with a partial report."""
    report = DiagnosticsReport(provenance={"config_hash": config.content_hash(), "stages": ",".join(stages)})
    ctx = RunContext(config, report)
    out = ctx.out
    out.mkdir(parents=True, exist_ok=True)
    for name in stages:
        if name in FIELD_STAGES and config.mode == "asymptotic":
            logging.info(f"skipping stage {name} in asymptotic mode")
            continue
        logging.info(f"stage {name}")
        try:
            STAGES[name](ctx)
        except CascadeError as e:
            report.fail_stage(name, e)
            break
        except Exception as e:
            logging.exception(f"unexpected failure in stage {name}")
            report.fail_stage(name, e)
            break
    report.write_csv(out / REPORT_NAME)
    write_manifest(out / SUMMARY_NAME, report.summary())
    return report


# -- commands ---------------------------------------------------------------------------


def resolve_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    return config.with_overrides(grid=args.grid, mode=args.mode, seed=args.seed, out=args.out, levels=args.levels)


def cmd_pipeline(args) -> int:
    """Run the stages of one subcommand."""
    try:
        config = resolve_config(args)
        if args.command == "corrector":
            config = apply_corrector_flags(config, args)
        stages = list(COMMANDS[args.command])
        if args.command == "run" and config.probes.corrector:
            stages.append("corrector")
        report = run_pipeline(config, stages)
    except CascadeError as e:
        logging.error(f"{args.command} failed: {e}")
        return 1
    if not report.passed:
        logging.error(f"{len(report.failures)} checks failed: {', '.join(c.check_id for c in report.failures)}")
        return 1
    return 0


def apply_corrector_flags(config: RunConfig, args) -> RunConfig:
    changes = {key: getattr(args, key) for key in ("delta", "tbar", "n0") if getattr(args, key) is not None}
    if args.bg:
        background = RunConfig.load(args.bg).corrector
        changes.update(amplitude=background.amplitude, wavenumber=background.wavenumber)
        changes.setdefault("n0", background.n0)
    return replace(config, corrector=replace(config.corrector, **changes)) if changes else config


def cmd_export(args) -> int:
    """Convert a CFF1 snapshot into CSV or SVG."""
    try:
        f = read_snapshot(args.snapshot)
        target = Path(args.target) if args.target else Path(args.snapshot).with_suffix(f".{args.format}")
        if args.format == "csv":
            export_csv(f, target)
        else:
            from .plots import plot_field

            plot_field(f, target, Path(args.snapshot).stem)
        logging.info(f"exported {args.snapshot} to {target}")
        return 0
    except (CascadeError, OSError) as e:
        logging.error(f"export failed: {e}")
        return 1


def cmd_defaults(args) -> int:
    """Print the resolved configuration."""
    try:
        print(resolve_config(args).manifest(), end="")
        return 0
    except CascadeError as e:
        logging.error(f"invalid configuration: {e}")
        return 1


def cmd_install(args) -> int:  # pylint: disable=unused-argument
    """Install shell completion scripts."""
    del args  # Unused parameter
    return install_shell_completion()


def _common_flags(suppress: bool = False) -> argparse.ArgumentParser:
    """Global flags; subcommand copies suppress defaults so flags given before the subcommand survive."""
    default = argparse.SUPPRESS if suppress else None
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "--params", dest="config", default=default, help="Run configuration (.yml, .yaml or .json)")
    common.add_argument("--out", default=default, help="Output directory (default: icb_out)")
    common.add_argument("--seed", type=int, default=default, help="Seed for every random draw of the run")
    common.add_argument("--grid", type=int, default=default, help="Grid points per axis for the cascade fields")
    common.add_argument("--mode", choices=["field", "asymptotic"], default=default, help="Ladder regime")
    common.add_argument("--levels", type=int, default=default, help="Highest cascade level to build")
    common.add_argument(
        "--log-level",
        choices=["debug", "info", "warn", "error"],
        default=argparse.SUPPRESS if suppress else "info",
        help="Set log verbosity: debug, info, warn, error (default: info)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    sub_common = _common_flags(suppress=True)
    parser = argparse.ArgumentParser(
        prog="icb",
        description="""Build a level-by-level inverse cascade on the periodic plane and check its identities, rates and corrector.

With no subcommand the resolved configuration is printed.""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
        epilog="""Examples:
  icb run --levels 1 --grid 512
  icb build --config cascade.yml --out out/toy
  icb rates --mode asymptotic
  icb corrector --delta 0.01 --tbar 1.0
  icb export out/toy/snapshots/level1_vbar.cff --format svg

Commands:
  geometry-check   Fuzz the pointwise decompositions
  ladder           Build and certify the frequency ladder
  build            Build the cascade levels and write snapshots
  verify           Build, then check consistency, residuals and volumes
  rates            Fit blowup rates and critical norms
  corrector        Solve for the corrector by Picard iteration
  run              Every stage in order
  export           Convert a snapshot to CSV or SVG

Outputs:
  <out>/report.csv     check_id, value, target, tol, pass
  <out>/summary.yml    provenance, fitted exponents, failures
  <out>/snapshots/     CFF1 field snapshots
  <out>/figures/       SVG figures
""",
    )
    parser.add_argument(
        "--install",
        action="store_true",
        help="Install shell auto-completion script (bash/zsh/fish)",
    )
    sub = parser.add_subparsers(dest="command")
    for name, text in (
        ("geometry-check", "Fuzz the pointwise decompositions"),
        ("ladder", "Build and certify the frequency ladder"),
        ("build", "Build the cascade levels and write snapshots"),
        ("verify", "Check consistency, residuals and volumes"),
        ("rates", "Fit blowup rates and critical norms"),
        ("run", "Every stage in order"),
    ):
        sub.add_parser(name, parents=[sub_common], help=text)
    corrector = sub.add_parser("corrector", parents=[sub_common], help="Solve for the corrector by Picard iteration")
    corrector.add_argument("--delta", type=float, help="Radius of the X ball (default: dry-run estimate)")
    corrector.add_argument("--tbar", type=float, help="Time horizon of the path norms")
    corrector.add_argument("--n0", type=int, help="Rescaling factor of the background pair")
    corrector.add_argument("--bg", help="Config file whose corrector section sets the background pair")
    export = sub.add_parser("export", parents=[sub_common], help="Convert a snapshot to CSV or SVG")
    export.add_argument("snapshot", help="CFF1 snapshot file")
    export.add_argument("--format", choices=["csv", "svg"], default="csv")
    export.add_argument("--target", help="Output file (default: snapshot name with the format suffix)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    arg_list = argv if argv is not None else sys.argv[1:]
    parser = build_parser()

    if "--install" in arg_list:
        return cmd_install(argparse.Namespace())

    args = parser.parse_args(arg_list)
    log_level = getattr(logging, args.log_level.upper())
    logging.basicConfig(level=log_level, format="%(levelname)s: %(message)s")

    if args.command is None:
        return cmd_defaults(args)
    if args.command == "export":
        return cmd_export(args)
    return cmd_pipeline(args)


if __name__ == "__main__":
    sys.exit(main())

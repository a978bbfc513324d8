"""Static SVG figures for a run."""

import logging
import math
from pathlib import Path
from typing import List, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cascade import SeparationEntry  # noqa: E402
from .ladder import RegionMasks  # noqa: E402
from .probes import RateScan  # noqa: E402
from .spectral_core import SpectralField, pointwise_magnitude, to_physical  # noqa: E402

# fixed ids and no timestamp so reruns write identical files
plt.rcParams["svg.hashsalt"] = "icb"
SVG_METADATA = {"Date": None}


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata=SVG_METADATA)
    plt.close(fig)
    logging.debug(f"figure written to {path}")
    return path


def plot_rates(scan: RateScan, path: Union[str, Path]) -> Path:
    """Envelope samples along the lower sequence with their fitted lines, in log10 units."""
    ln10 = math.log(10.0)
    fig, ax = plt.subplots(figsize=(7, 5))
    for fit, label, style in ((scan.sup, "sup", "b"), (scan.gradient, "gradient", "r")):
        x = fit.log_times / ln10
        ax.plot(x, fit.log_values / ln10, style + "o", markersize=3, label=f"{label} envelope")
        ax.plot(x, (fit.intercept + fit.slope * fit.log_times) / ln10, style + "-", linewidth=1, label=f"slope {fit.slope:.3f}")
    ax.set_xlabel("log10 t")
    ax.set_ylabel("log10 norm")
    ax.set_title(f"Blowup rates over {scan.levels} levels")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_sup_norms(times: Sequence[float], values: Sequence[float], path: Union[str, Path], t_star: float = 0.0) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.loglog(np.asarray(times) + t_star, values, "k.-", linewidth=1)
    ax.set_xlabel("t" if t_star == 0 else f"t (offset T* = {t_star:g})")
    ax.set_ylabel("sup |v|")
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_separation(entries: List[SeparationEntry], path: Union[str, Path]) -> Path:
    """Heatmap of value / target for the scale separation table."""
    size = max(e.j for e in entries)
    grid = np.full((size, size), np.nan)
    for e in entries:
        grid[e.j - 1, e.jp - 1] = e.value / e.target
    fig, ax = plt.subplots(figsize=(6, 5))
    image = ax.imshow(grid, origin="lower", cmap="viridis", extent=(0.5, size + 0.5, 0.5, size + 0.5))
    fig.colorbar(image, ax=ax, label="value / target")
    ax.set_xlabel("j'")
    ax.set_ylabel("j")
    ax.set_title("Scale separation")
    return _save(fig, path)


def plot_masks(masks: RegionMasks, path: Union[str, Path]) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(14, 5))
    panels = (
        (masks.omega, f"Omega_{masks.k}"),
        (masks.omega_tilde, f"enlarged Omega_{masks.k}"),
        (masks.chi_values, f"chi_{masks.k}"),
    )
    for ax, (values, title) in zip(axes, panels):
        ax.imshow(np.asarray(values, dtype=float).T, origin="lower", cmap="gray", extent=(0, 2 * np.pi, 0, 2 * np.pi))
        ax.set_title(title)
        ax.set_xlabel("x1")
    axes[0].set_ylabel("x2")
    return _save(fig, path)


def plot_field(f: SpectralField, path: Union[str, Path], title: str = "") -> Path:
    """Pointwise magnitude of a field on the torus."""
    magnitude = pointwise_magnitude(to_physical(f), f.rank)
    fig, ax = plt.subplots(figsize=(6, 5))
    image = ax.imshow(magnitude.T, origin="lower", cmap="magma", extent=(0, 2 * np.pi, 0, 2 * np.pi))
    fig.colorbar(image, ax=ax)
    ax.set_title(title or f"|{f.rank.name.lower()} field|")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    return _save(fig, path)


def plot_picard(updates: Sequence[float], path: Union[str, Path], tol: float) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.semilogy(range(1, len(updates) + 1), np.maximum(updates, 1e-300), "k.-")
    ax.axhline(tol, color="gray", linestyle=":", alpha=0.5, label=f"tol={tol:g}")
    ax.set_xlabel("Iteration")
    ax.set_ylabel("update norm")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)

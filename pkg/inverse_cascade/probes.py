"""
Empirical probes of the growth estimates: blowup rates, critical norms,
intermittency gains and the heat commutator bound.

Rates over many levels use the closed-form envelope sum_j w_j N_j e^{-N_j^2 t},
evaluated in log space so that asymptotic ladders (log N of order 1e20) stay finite.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import logsumexp
from scipy.stats import linregress

from .cascade import Cascade, CascadeLevel, principal_fields
from .ladder import AsymptoticLadder, LadderParams, build_ladder
from .spectral_core import (
    SpectralField,
    derivative_sup_norm,
    heat_semigroup,
    laplacian,
    leray_project,
    lp_norm,
    scale,
    sup_norm,
    to_spectral,
)

EXPONENT_CAP = 700.0
LOWER_CONSTANT = math.exp(-0.5) / math.sqrt(2.0)


def log_frequencies(ladder, levels: Optional[Sequence[int]] = None) -> Dict[Tuple[int, int], float]:
    """log N_{j,k}; lower log bounds for asymptotic ladders."""
    if isinstance(ladder, AsymptoticLadder):
        table = {key: lo for key, (lo, _) in ladder.log_N.items()}
    else:
        table = {key: math.log(value) for key, value in ladder.N.items()}
    if levels is not None:
        table = {key: value for key, value in table.items() if key[1] in levels}
    return table


def log_envelope(log_n: np.ndarray, log_t: np.ndarray, power: int = 1, log_weights: Optional[np.ndarray] = None) -> np.ndarray:
    """log sum_j w_j N_j^power e^{-N_j^2 t} for every entry of log_t."""
    log_n = np.asarray(log_n, dtype=float)
    log_w = np.zeros_like(log_n) if log_weights is None else np.asarray(log_weights, dtype=float)
    log_t = np.atleast_1d(np.asarray(log_t, dtype=float))
    exponent = np.minimum(2.0 * log_n[None, :] + log_t[:, None], EXPONENT_CAP)
    terms = log_w[None, :] + power * log_n[None, :] - np.exp(exponent)
    return logsumexp(terms, axis=1)


@dataclass
class RateFit:
    """Least-squares log-log fit of a sup-norm against time."""

    log_times: np.ndarray
    log_values: np.ndarray
    slope: float
    intercept: float
    residual: float
    stderr: float

    @classmethod
    def fit(cls, log_times: Sequence[float], log_values: Sequence[float]) -> "RateFit":
        x = np.asarray(log_times, dtype=float)
        y = np.asarray(log_values, dtype=float)
        if len(x) < 3:
            raise ValueError(f"rate fit needs at least 3 samples, got {len(x)}")
        result = linregress(x, y)
        predicted = result.intercept + result.slope * x
        residual = float(np.sqrt(np.mean((y - predicted) ** 2)))
        return cls(x, y, float(result.slope), float(result.intercept), residual, float(result.stderr))

    @property
    def points(self) -> int:
        return len(self.log_times)

    @property
    def decades(self) -> float:
        return float((self.log_times.max() - self.log_times.min()) / math.log(10.0))

    def within(self, target: float, tol: float) -> bool:
        return abs(self.slope - target) <= tol


@dataclass
class RateScan:
    sup: RateFit
    gradient: RateFit
    c_lower: float
    c_upper: float
    levels: int

    @property
    def constant_ratio(self) -> float:
        return self.c_upper / self.c_lower if self.c_lower > 0 else math.inf


def lower_sequence_times(ladder, levels: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(log t_n, log N_n) with t_n = 1 / (2 N_n^2), increasing in t."""
    log_n = np.array(sorted(set(log_frequencies(ladder, levels).values()), reverse=True))
    return -2.0 * log_n - math.log(2.0), log_n


def rate_scan(ladder, levels: Optional[Sequence[int]] = None, amplitude: float = 1.0, dense: int = 8) -> RateScan:
    """Fit sup-norm and gradient envelopes along the lower sequence t_n = 1 / (2 N_n^2).

    c_lower is min sqrt(t_n) envelope(t_n), c_upper is the max of sqrt(t) envelope(t)
    over a dense log grid covering the same window.
    """
    if levels is None:
        levels = range(0, ladder.K + 1)
    levels = list(levels)
    table = log_frequencies(ladder, levels)
    log_n = np.array(list(table.values()))
    log_t, _ = lower_sequence_times(ladder, levels)
    log_a = math.log(amplitude)
    sup = log_envelope(log_n, log_t) + log_a
    gradient = log_envelope(log_n, log_t, power=2) + log_a
    lower = float(np.exp(np.min(0.5 * log_t + sup)))

    grid = np.concatenate(
        [np.linspace(a, b, dense, endpoint=False) for a, b in zip(log_t[:-1], log_t[1:])] + [log_t[-1:]]
    )
    upper = float(np.exp(np.max(0.5 * grid + log_envelope(log_n, grid) + log_a)))
    scan = RateScan(RateFit.fit(log_t, sup), RateFit.fit(log_t, gradient), lower, upper, len(levels))
    logging.info(
        f"rate scan over {len(levels)} levels: slopes {scan.sup.slope:.4f} / {scan.gradient.slope:.4f}, "
        f"c={lower:.4g}, C={upper:.4g}"
    )
    return scan


def field_rate_fit(cascade: Cascade, times: Sequence[float]) -> RateFit:
    """Log-log fit of ||sum_k vbar_k(t)|| on the built levels."""
    values = []
    for t in times:
        total = sum((principal_fields(level, t).vbar for level in cascade.levels[1:]), principal_fields(cascade.levels[0], t).vbar)
        values.append(math.log(max(sup_norm(total), 1e-300)))
    return RateFit.fit(np.log(times), values)


def velocity_weights(level: CascadeLevel) -> Dict[int, float]:
    """||P Lap psi_j||_inf for every nonzero velocity potential of the level."""
    return {
        j: sup_norm(leray_project(laplacian(level.potentials.velocity_potential(j))))
        for j in level.potentials.velocity_indices()
    }


def envelope_validation(cascade: Cascade, samples_per_term: int = 1) -> Dict[int, Dict[str, float]]:
    """Ratio ||vbar_k(t)|| / sum_j w_j N_j e^{-N_j^2 t} at t = 1 / (2 N_j^2) for each built level."""
    report = {}
    for level in cascade.levels:
        weights = velocity_weights(level)
        if not weights:
            continue
        ns = np.array([level.frequencies[j] for j in weights], dtype=float)
        log_w = np.log(np.array(list(weights.values())))
        ratios = []
        for N in sorted(set(ns)):
            for factor in np.geomspace(1.0, 2.0, samples_per_term):
                t = factor / (2.0 * N * N)
                proxy = float(np.exp(log_envelope(np.log(ns), [math.log(t)], log_weights=log_w)[0]))
                ratios.append(sup_norm(principal_fields(level, t).vbar) / proxy)
        report[level.k] = {"min_ratio": min(ratios), "max_ratio": max(ratios)}
    return report


def lower_sequence(cascade: Cascade) -> List[Dict[str, float]]:
    """sqrt(t_n) ||vbar_k(t_n)|| against e^{-1/2} / sqrt(2) ||P Lap psi_j|| at t_n = 1 / (2 N_j^2)."""
    rows = []
    for level in cascade.levels:
        for j, weight in velocity_weights(level).items():
            N = level.frequencies[j]
            t = 1.0 / (2.0 * N * N)
            value = math.sqrt(t) * sup_norm(principal_fields(level, t).vbar)
            bound = LOWER_CONSTANT * weight
            rows.append({"k": level.k, "j": j, "t": t, "value": value, "bound": bound, "ratio": value / bound})
    return rows


def sup_envelope(level: CascadeLevel, times: Sequence[float]) -> Dict[str, float]:
    """max_t sqrt(t) ||vbar_k(t)|| with its location, against e^{-1} max_j ||a_j||."""
    values = [math.sqrt(t) * sup_norm(principal_fields(level, t).vbar) for t in times]
    best = int(np.argmax(values))
    reference = math.exp(-1.0) * level.amplitudes.sup()
    return {
        "t_max": float(times[best]),
        "value": float(values[best]),
        "reference": reference,
        "ratio": float(values[best]) / reference if reference > 0 else math.inf,
    }


# -- critical norms ---------------------------------------------------------------------


@dataclass
class CriticalNormReport:
    log_ratio: np.ndarray
    weighted_l1: np.ndarray
    l2_squared: np.ndarray
    slope_l1: float
    slope_l2: float


def critical_norm_scan(norm_at: Callable[[np.ndarray], np.ndarray], t_lo: float, t_hi: float, samples_per_efold: int = 16) -> CriticalNormReport:
    """int_{t'}^{t} s^{-1/2} ||v(s)|| ds and int_{t'}^{t} ||v(s)||^2 ds against log(t / t').

    ``norm_at`` maps an array of times to the sup norms there. Quadrature is the
    trapezoid rule in log time.
    """
    if not 0 < t_lo < t_hi:
        raise ValueError("need 0 < t_lo < t_hi")
    count = max(8, int(math.ceil(math.log(t_hi / t_lo) * samples_per_efold)))
    s = np.linspace(math.log(t_lo), math.log(t_hi), count + 1)
    t = np.exp(s)
    norms = np.asarray(norm_at(t), dtype=float)
    # integrands in d(log t)
    l1 = np.flip(cumulative_trapezoid(np.flip(np.sqrt(t) * norms), -np.flip(s), initial=0.0))
    l2 = np.flip(cumulative_trapezoid(np.flip(t * norms**2), -np.flip(s), initial=0.0))
    log_ratio = math.log(t_hi) - s
    fit_l1 = linregress(log_ratio, l1) if np.any(l1) else None
    fit_l2 = linregress(log_ratio, l2) if np.any(l2) else None
    return CriticalNormReport(
        log_ratio,
        l1,
        l2,
        float(fit_l1.slope) if fit_l1 is not None else 0.0,
        float(fit_l2.slope) if fit_l2 is not None else 0.0,
    )


def envelope_norm(ladder, levels: Sequence[int]) -> Callable[[np.ndarray], np.ndarray]:
    """Unit-amplitude envelope sum_j N_j e^{-N_j^2 t} of the given levels."""
    log_n = np.array(list(log_frequencies(ladder, levels).values()))
    return lambda t: np.exp(log_envelope(log_n, np.log(t)))


def critical_norm_comparison(params: LadderParams, factor: float = 2.0) -> Dict[str, float]:
    """Log-slopes of the critical norms for A and factor * A on levels 1..K.

    The window runs from 1 / N_{J,K}^2 to 1 / N_{1,1}^2 of each ladder.
    """
    slopes = {}
    for label, A in (("base", params.A), ("scaled", params.A * factor)):
        ladder = build_ladder(replace(params, A=A, mode="field", delta0=None))
        levels = range(1, ladder.K + 1)
        t_lo = 1.0 / float(ladder.N[(ladder.J, ladder.K)]) ** 2
        t_hi = 1.0 / float(ladder.N[(1, 1)]) ** 2
        report = critical_norm_scan(envelope_norm(ladder, levels), t_lo, t_hi)
        slopes[f"{label}_l1"] = report.slope_l1
        slopes[f"{label}_l2"] = report.slope_l2
    slopes["ratio_l1"] = slopes["base_l1"] / slopes["scaled_l1"]
    slopes["ratio_l2"] = slopes["base_l2"] / slopes["scaled_l2"]
    logging.info(f"critical norm slopes: ratio {slopes['ratio_l1']:.3f} (L1), {slopes['ratio_l2']:.3f} (L2)")
    return slopes


# -- intermittency ----------------------------------------------------------------------


def normalized_lp(f: SpectralField, p: float) -> float:
    """(mean |f|^p)^{1/p} / ||f||_inf."""
    sup = sup_norm(f)
    if sup == 0:
        return 0.0
    if math.isinf(p):
        return 1.0
    return lp_norm(f, p) / (2.0 * math.pi) ** (2.0 / p) / sup


@dataclass
class LpRow:
    k: int
    p: float
    ratio_v: float
    ratio_h: float
    prediction: float
    l2_time_v: float


def lp_scan(cascade: Cascade, p_list: Sequence[float], times: Sequence[float]) -> List[LpRow]:
    """Intermittency gain of vbar_k, hbar_k against (|Omega_k| / (2 pi)^2)^{1/p}."""
    rows = []
    for level in cascade.levels:
        fraction = 1.0 if level.masks is None else level.masks.volume_fraction()
        fields = [principal_fields(level, t) for t in times]
        for p in p_list:
            ratios_v = [normalized_lp(f.vbar, p) for f in fields]
            ratios_h = [normalized_lp(f.hbar, p) for f in fields]
            prediction = 1.0 if math.isinf(p) else fraction ** (1.0 / p)
            in_time = [lp_norm(f.vbar, p) ** 2 for f in fields]
            l2_time = math.sqrt(trapezoid(in_time, times)) if len(times) > 1 else 0.0
            rows.append(LpRow(level.k, p, max(ratios_v), max(ratios_h), prediction, l2_time))
    return rows


# -- commutator bound -------------------------------------------------------------------


def commutator_probe(a: SpectralField, xi: Tuple[int, int], t_list: Sequence[float], n: int = 0, m: int = 3) -> Dict[str, float]:
    """Empirical constant of ||grad^n [e^{t Lap}, a] sin(xi . x)|| against its bound with constant 1."""
    if m < 3 + n:
        raise ValueError(f"need m >= 3 + n, got m={m}, n={n}")
    grid = a.grid
    x1, x2 = grid.coordinates
    carrier = to_spectral(np.sin(xi[0] * x1 + xi[1] * x2), grid)
    size = math.hypot(*xi)
    A = [derivative_sup_norm(a, i) / size**i for i in range(n + m + 1)]
    ratios, lhs_values = [], []
    for t in t_list:
        product = scale(a, carrier)
        commutator = heat_semigroup(product, t) - scale(a, heat_semigroup(carrier, t))
        lhs = derivative_sup_norm(commutator, n)
        decay = math.exp(-size * size * t / 4.0)
        rhs = size**n * sum(
            (A[i] ** (1 - 1 / m) * A[m + i] ** (1 / m) + A[i] ** (1 - 2 / m) * A[m + i] ** (2 / m)) * decay + A[m + i]
            for i in range(n + 1)
        )
        lhs_values.append(lhs)
        ratios.append(lhs / rhs if rhs > 0 else 0.0)
    return {"constant": max(ratios), "lhs_max": max(lhs_values), "lhs_min": min(lhs_values)}

"""
Corrector (w, zeta) closing the principal pair into an exact solution.

Paths are sampled on a geometric time grid in (0, Tbar]. The map F(W, Z) is evaluated
by solving the linear inhomogeneous system with coefficients (U + v, H + h) and source
Psi(W, Z) from zero data; the Picard iteration repeats F from (0, 0).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cascade import assemble_forcing, duhamel_fields, residual_fields
from .errors import DivergenceError, GridOverflowError, OffLatticeError, StepCollapseError
from .spectral_core import (
    Grid2D,
    Rank,
    SpectralField,
    derivative_sup_norm,
    div,
    dyadic_shells,
    grad,
    heat_semigroup,
    laplacian,
    leray_project,
    littlewood_paley,
    random_field,
    scale,
    sup_norm,
    sym_product,
    to_physical,
    to_spectral,
)

CFL = 0.5
PICARD_TOL = 1e-8
MAX_PICARD = 50
DIVERGENCE_PATIENCE = 5
# modes below this fraction of the largest coefficient are treated as roundoff
RESCALE_FLOOR = 1e-13
# time step of the residual check as a fraction of the node spacing
RESIDUAL_REFINEMENT = 32


@dataclass
class PathNormParams:
    """Weights of the X and Y path norms and their time grid."""

    alpha: float = 0.05
    kappa: float = 0.02
    epsilon: float = 0.025
    tbar: float = 1.0
    t_min_ratio: float = 1e-6
    nodes_per_octave: int = 4

    def __post_init__(self):
        if not 0 < self.kappa < self.alpha < 0.1:
            raise ValueError(f"need 0 < kappa < alpha < 1/10, got kappa={self.kappa}, alpha={self.alpha}")
        if not 0 < self.epsilon < self.alpha:
            raise ValueError(f"need 0 < epsilon < alpha, got {self.epsilon}")
        if not self.tbar > 0 or not 0 < self.t_min_ratio < 1:
            raise ValueError("tbar must be positive and t_min_ratio in (0, 1)")
        if self.nodes_per_octave < 1:
            raise ValueError("nodes_per_octave must be positive")

    def time_nodes(self) -> np.ndarray:
        """Geometric nodes from tbar * t_min_ratio to tbar with ratio 2^(1 / nodes_per_octave)."""
        octaves = math.log2(1.0 / self.t_min_ratio)
        count = int(math.ceil(octaves * self.nodes_per_octave))
        exponents = np.arange(-count, 1) / self.nodes_per_octave
        return self.tbar * np.exp2(exponents)


@dataclass
class FieldPath:
    """A field family sampled at increasing positive times.

    Between nodes the path is linear in time. Before the first node it either
    interpolates from zero at t = 0 or holds the first value.
    """

    times: np.ndarray
    values: List[SpectralField]
    zero_at_origin: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.values) or len(self.values) == 0:
            raise ValueError("a path needs one value per time and at least one sample")
        if np.any(np.diff(self.times) <= 0) or self.times[0] <= 0:
            raise ValueError("path times must be positive and strictly increasing")

    @property
    def grid(self) -> Grid2D:
        return self.values[0].grid

    @property
    def rank(self) -> Rank:
        return self.values[0].rank

    @classmethod
    def zeros(cls, times: np.ndarray, grid: Grid2D, rank: Rank) -> "FieldPath":
        zero = SpectralField.zeros(grid, rank)
        return cls(times, [zero] * len(times))

    @classmethod
    def sample(cls, times: np.ndarray, func: Callable[[float], SpectralField], zero_at_origin: bool = False) -> "FieldPath":
        return cls(times, [func(float(t)) for t in times], zero_at_origin)

    def at(self, t: float) -> SpectralField:
        times = self.times
        if t <= times[0]:
            if self.zero_at_origin:
                return self.values[0] * (max(t, 0.0) / times[0])
            return self.values[0]
        if t >= times[-1]:
            return self.values[-1]
        i = int(np.searchsorted(times, t)) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        return self.values[i] * (1.0 - w) + self.values[i + 1] * w

    def __sub__(self, other: "FieldPath") -> "FieldPath":
        return FieldPath(self.times, [a - b for a, b in zip(self.values, other.values)], self.zero_at_origin)

    def __mul__(self, factor: float) -> "FieldPath":
        return FieldPath(self.times, [v * factor for v in self.values], self.zero_at_origin)

    __rmul__ = __mul__


# -- norms ------------------------------------------------------------------------------


def _gradient_components(f: SpectralField) -> List[SpectralField]:
    return [grad(f.component(i)).component(d) for i in range(f.rank.components) for d in range(2)]


def holder_gradient_norm(f: SpectralField, kappa: float) -> float:
    """||grad f||_{C^kappa} as sup norm plus the dyadic proxy sup_N N^kappa ||P_N grad f||_inf."""
    parts = _gradient_components(f)
    values = np.stack([to_physical(p)[0] for p in parts])
    sup = float(np.max(np.sqrt(np.sum(values**2, axis=0))))
    semi = 0.0
    for N in dyadic_shells(f.grid):
        block = max(float(np.max(np.abs(to_physical(littlewood_paley(p, N))))) for p in parts)
        semi = max(semi, N**kappa * block)
    return sup + semi


def _weighted_norm(path: FieldPath, params: PathNormParams, p0: float, p1: float) -> float:
    if not path.values:
        raise ValueError("cannot take the norm of an empty family")
    best = 0.0
    for t, value in zip(path.times, path.values):
        best = max(best, t**p0 * sup_norm(value) + t**p1 * holder_gradient_norm(value, params.kappa))
    return best


def x_norm(path: FieldPath, params: PathNormParams) -> float:
    """sup_t t^((1-alpha)/2) ||V|| + t^((2-alpha)/2) ||grad V||_{C^kappa}."""
    return _weighted_norm(path, params, (1.0 - params.alpha) / 2.0, (2.0 - params.alpha) / 2.0)


def y_norm(path: FieldPath, params: PathNormParams) -> float:
    """sup_t t^(1-alpha) ||phi|| + t^(3/2-alpha) ||grad phi||_{C^kappa}."""
    return _weighted_norm(path, params, 1.0 - params.alpha, 1.5 - params.alpha)


def pair_x_norm(w: FieldPath, zeta: FieldPath, params: PathNormParams) -> float:
    return x_norm(w, params) + x_norm(zeta, params)


# -- background and rescaling -----------------------------------------------------------


def resample(f: SpectralField, grid: Grid2D) -> SpectralField:
    """Spectral restriction or zero-padding of f onto another grid."""
    if f.grid == grid:
        return f
    cut = min(f.grid.nx, grid.nx) // 2
    modes = grid.integer_modes
    keep = np.abs(modes) < cut
    dst = np.nonzero(keep)[0]
    src = modes[keep] % f.grid.nx
    coeffs = np.zeros((f.rank.components, grid.nx, grid.nx), np.complex128)
    coeffs[np.ix_(range(f.rank.components), dst, dst)] = f.coeffs[np.ix_(range(f.rank.components), src, src)]
    return SpectralField(grid, f.rank, coeffs)


def rescale(f: SpectralField, n0: int, direction: str = "up", power: int = 1) -> SpectralField:
    """f^{N0}(x) = N0^power f(N0 x) ("up") or its inverse ("down"), by exact reindexing."""
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    if n0 < 1 or int(n0) != n0:
        raise OffLatticeError(f"rescaling factor must be a positive integer, got {n0}")
    n0 = int(n0)
    if n0 == 1:
        return f
    grid = f.grid
    modes = grid.integer_modes
    size = np.max(np.abs(f.coeffs), axis=0)
    active = size > RESCALE_FLOOR * max(float(np.max(size)), 1e-300)
    i1, i2 = np.nonzero(active)
    m1, m2 = modes[i1], modes[i2]
    if direction == "up":
        t1, t2 = m1 * n0, m2 * n0
        if np.any(np.abs(t1) >= grid.nx // 2) or np.any(np.abs(t2) >= grid.nx // 2):
            raise GridOverflowError(f"rescaling by {n0} pushes modes beyond grid {grid.nx}")
        factor = float(n0) ** power
    else:
        if np.any(m1 % n0) or np.any(m2 % n0):
            raise OffLatticeError(f"modes of the field are not divisible by {n0}")
        t1, t2 = m1 // n0, m2 // n0
        factor = float(n0) ** -power
    coeffs = np.zeros_like(f.coeffs)
    coeffs[:, t1 % grid.nx, t2 % grid.nx] = f.coeffs[:, i1, i2] * factor
    return f.with_coeffs(coeffs)


@dataclass
class RescaleParams:
    n0: int = 1
    t_star: float = 0.0

    def time(self, t: float, direction: str = "up") -> float:
        """Time argument of the original family: N0^2 t for "up", t / N0^2 for "down"."""
        return t * self.n0**2 if direction == "up" else t / self.n0**2

    def physical_time(self, t: float) -> float:
        return t + self.t_star


@dataclass
class BackgroundPair:
    """U = a e^{-m^2 t} (sin m x2, sin m x1), H = a e^{-m^2 t} (cos m x1 - cos m x2).

    U is a shear-free cellular flow whose self-advection is a gradient, and H is a
    multiple of its stream function, so (U, H) solves the unforced system exactly.
    """

    amplitude: float = 0.2
    wavenumber: int = 1
    n0: int = 1

    def _profile(self, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
        x1, x2 = grid.coordinates
        m = self.wavenumber
        return np.stack([np.sin(m * x2), np.sin(m * x1)]), np.cos(m * x1) - np.cos(m * x2)

    @property
    def decay_rate(self) -> float:
        """d/dt (U^{1/N0}, H^{1/N0}) = -decay_rate (U^{1/N0}, H^{1/N0})."""
        return self.wavenumber**2 / self.n0**2

    def fields(self, grid: Grid2D, t: float) -> Tuple[SpectralField, SpectralField]:
        """(U^{1/N0}, H^{1/N0}) at time t."""
        u0, h0 = self._profile(grid)
        s = self.amplitude * math.exp(-self.wavenumber**2 * t / self.n0**2)
        U = to_spectral(s * u0, grid, Rank.VECTOR)
        H = to_spectral(s * h0, grid, Rank.SCALAR)
        if self.n0 == 1:
            return U, H
        return rescale(U, self.n0, "down"), rescale(H, self.n0, "down")

    def constant(self, grid: Grid2D, orders: int = 10) -> float:
        """C_{U,H} = sup_{n <= orders} (||grad^n U|| + ||grad^n H||) at t = 0."""
        U, H = self.fields(grid, 0.0)
        return max(derivative_sup_norm(U, n) + derivative_sup_norm(H, n) for n in range(orders + 1))


# -- inputs -----------------------------------------------------------------------------


@dataclass
class CorrectorInputs:
    """Principal pair (v, h) and forcing (f_u, f_b) on the corrector time nodes."""

    grid: Grid2D
    v: FieldPath
    h: FieldPath
    f_u: FieldPath
    f_b: FieldPath

    @property
    def times(self) -> np.ndarray:
        return self.v.times

    @classmethod
    def zeros(cls, grid: Grid2D, times: np.ndarray) -> "CorrectorInputs":
        return cls(
            grid,
            FieldPath.zeros(times, grid, Rank.VECTOR),
            FieldPath.zeros(times, grid, Rank.SCALAR),
            FieldPath.zeros(times, grid, Rank.SYMTENSOR),
            FieldPath.zeros(times, grid, Rank.VECTOR),
        )

    @classmethod
    def from_callables(cls, grid: Grid2D, times: np.ndarray, v_at, h_at, forcing_at) -> "CorrectorInputs":
        """``forcing_at`` returns (f_u, f_b) at a time."""
        forcing = [forcing_at(float(t)) for t in times]
        return cls(
            grid,
            FieldPath.sample(times, v_at),
            FieldPath.sample(times, h_at),
            FieldPath(times, [f[0] for f in forcing], False),
            FieldPath(times, [f[1] for f in forcing], False),
        )

    @classmethod
    def from_cascade(cls, cascade, grid: Grid2D, times: np.ndarray) -> "CorrectorInputs":
        """Sample v = sum v_k, h = sum h_k and the forcing pair, restricted to ``grid``."""
        per_level = {k: duhamel_fields(cascade.levels[k + 1], list(times)) for k in range(cascade.K)}
        v_values, h_values, fu_values, fb_values = [], [], [], []
        for i, t in enumerate(times):
            fields = {k: per_level[k][i] for k in per_level}
            forcing = assemble_forcing(cascade, float(t), fields)
            v = sum((f.v for f in fields.values()), SpectralField.zeros(cascade.grid, Rank.VECTOR))
            h = sum((f.h for f in fields.values()), SpectralField.zeros(cascade.grid, Rank.SCALAR))
            v_values.append(resample(v, grid))
            h_values.append(resample(h, grid))
            fu_values.append(resample(forcing.f_u, grid))
            fb_values.append(resample(forcing.f_b, grid))
        logging.info(f"corrector inputs sampled at {len(times)} nodes on grid {grid.nx}")
        return cls(
            grid,
            FieldPath(times, v_values, False),
            FieldPath(times, h_values, False),
            FieldPath(times, fu_values, False),
            FieldPath(times, fb_values, False),
        )


# -- linear system ----------------------------------------------------------------------


Coefficients = Callable[[float], Tuple[SpectralField, SpectralField]]
Source = Callable[[float], Optional[Tuple[SpectralField, SpectralField]]]


def _rhs(W, Z, v_t, h_t, source) -> Tuple[SpectralField, SpectralField]:
    flux_u = sym_product(v_t, W) * 2.0
    flux_b = scale(Z, v_t) + scale(h_t, W)
    if source is not None:
        flux_u = flux_u + source[0]
        flux_b = flux_b + source[1]
    return -leray_project(div(flux_u)), -div(flux_b)


def _midpoint_step(W, Z, t: float, dt: float, coefficients: Coefficients, source: Source):
    """Exponential midpoint step: heat flow exact, transport and source at the half step."""
    v0, h0 = coefficients(t)
    dW, dZ = _rhs(W, Z, v0, h0, source(t))
    W_half = heat_semigroup(W + dW * (dt / 2.0), dt / 2.0)
    Z_half = heat_semigroup(Z + dZ * (dt / 2.0), dt / 2.0)
    vm, hm = coefficients(t + dt / 2.0)
    dWm, dZm = _rhs(W_half, Z_half, vm, hm, source(t + dt / 2.0))
    W_next = heat_semigroup(W, dt) + heat_semigroup(dWm, dt / 2.0) * dt
    Z_next = heat_semigroup(Z, dt) + heat_semigroup(dZm, dt / 2.0) * dt
    return W_next, Z_next


def _substeps(t0: float, t1: float, coefficients: Coefficients, min_steps: int, max_steps: int) -> int:
    grid = coefficients(t0)[0].grid
    k_max = grid.nx / 2.0
    rate = max(sup_norm(a) + sup_norm(b) for a, b in (coefficients(t0), coefficients(t1)))
    steps = max(min_steps, int(math.ceil((t1 - t0) * rate * k_max / CFL)))
    if steps > max_steps:
        raise StepCollapseError(
            f"interval [{t0:.3e}, {t1:.3e}] needs {steps} steps (coefficient size {rate:.3e}), limit {max_steps}"
        )
    return steps


def advance(W, Z, t0: float, t1: float, coefficients: Coefficients, source: Source, min_steps: int = 2, max_steps: int = 20_000):
    """Integrate the linear system from t0 to t1."""
    if t1 <= t0:
        return W, Z
    steps = _substeps(t0, t1, coefficients, min_steps, max_steps)
    dt = (t1 - t0) / steps
    for n in range(steps):
        W, Z = _midpoint_step(W, Z, t0 + n * dt, dt, coefficients, source)
    return W, Z


def coefficient_fields(inputs: CorrectorInputs, background: BackgroundPair) -> Coefficients:
    """t -> (U^{1/N0} + v, H^{1/N0} + h)."""

    def at(t: float):
        U, H = background.fields(inputs.grid, t)
        return U + inputs.v.at(t), H + inputs.h.at(t)

    return at


def semigroup_apply(
    phi_u: SpectralField,
    phi_b: SpectralField,
    coefficients: Coefficients,
    t_prime: float,
    t: float,
    min_steps: int = 32,
    max_steps: int = 20_000,
) -> Tuple[SpectralField, SpectralField]:
    """S(t, t') applied to (phi_u, phi_b): data (P div phi_u, div phi_b) at t' flowed to t."""
    if not 0 < t_prime <= t:
        raise ValueError(f"need 0 < t' <= t, got t'={t_prime}, t={t}")
    W = leray_project(div(phi_u))
    Z = div(phi_b)
    return advance(W, Z, t_prime, t, coefficients, lambda s: None, min_steps, max_steps)


def semigroup_bound_probe(
    coefficients: Coefficients,
    params: PathNormParams,
    rng: np.random.Generator,
    grid: Grid2D,
    pairs: Sequence[Tuple[float, float]],
    bandwidth: int = 4,
) -> Dict[str, float]:
    """Implied constant of ||W(t)|| + ||Z(t)|| <= C t^-1/2 t'^(-1+alpha) (t/t')^eps ||Phi||_Y."""
    phi_u = random_field(grid, Rank.SYMTENSOR, rng, bandwidth)
    phi_b = random_field(grid, Rank.VECTOR, rng, bandwidth)
    times = params.time_nodes()
    weight = lambda s: s ** -(1.0 - params.alpha)  # noqa: E731
    norm = y_norm(FieldPath(times, [phi_u * weight(s) for s in times]), params) + y_norm(
        FieldPath(times, [phi_b * weight(s) for s in times]), params
    )
    constants = []
    for t_prime, t in pairs:
        W, Z = semigroup_apply(phi_u * weight(t_prime), phi_b * weight(t_prime), coefficients, t_prime, t)
        shape = t**-0.5 * t_prime ** (-1.0 + params.alpha) * (t / t_prime) ** params.epsilon * norm
        constants.append((sup_norm(W) + sup_norm(Z)) / shape)
    return {"constant": max(constants), "min_constant": min(constants), "pairs": float(len(pairs))}


# -- fixed point ------------------------------------------------------------------------


@dataclass
class CorrectorState:
    w: FieldPath
    zeta: FieldPath
    x_norm: float
    delta: float
    iterations: int
    updates: List[float] = field(default_factory=list)
    forcing_scale: float = 1.0
    converged: bool = False

    @property
    def ratios(self) -> List[float]:
        return [b / a for a, b in zip(self.updates, self.updates[1:]) if a > 0]

    @property
    def contraction(self) -> float:
        """Largest ratio of successive update norms; 0 when the first update already vanished."""
        return max(self.ratios, default=0.0)

    @property
    def residual(self) -> float:
        """||(w, zeta) - F(w, zeta)||_X, the last update norm."""
        return self.updates[-1] if self.updates else 0.0

    @property
    def accepted(self) -> bool:
        return self.converged and self.x_norm <= self.delta and self.contraction < 1.0

    def history_rows(self) -> List[Dict[str, float]]:
        rows = []
        for i, update in enumerate(self.updates):
            rho = self.updates[i] / self.updates[i - 1] if i > 0 and self.updates[i - 1] > 0 else float("nan")
            rows.append({"iter": i + 1, "update_norm": update, "rho": rho})
        return rows


class CorrectorMap:
    """F(W, Z)(t) = -int_0^t S(t, t') Psi(W, Z) dt' on the node grid."""

    def __init__(self, inputs: CorrectorInputs, background: BackgroundPair, params: PathNormParams, forcing_scale: float = 1.0):
        self.inputs = inputs
        self.background = background
        self.params = params
        self.forcing_scale = forcing_scale
        self.coefficients = coefficient_fields(inputs, background)

    @property
    def times(self) -> np.ndarray:
        return self.inputs.times

    def drive(self, t: float) -> Tuple[SpectralField, SpectralField]:
        """f_u + 2 U (.) v and f_b + U h + v H, the part of Psi independent of (W, Z)."""
        U, H = self.background.fields(self.inputs.grid, t)
        v, h = self.inputs.v.at(t), self.inputs.h.at(t)
        drive_u = self.inputs.f_u.at(t) + sym_product(U, v) * 2.0
        drive_b = self.inputs.f_b.at(t) + scale(h, U) + scale(H, v)
        return drive_u * self.forcing_scale, drive_b * self.forcing_scale

    def psi(self, W: SpectralField, Z: SpectralField, t: float) -> Tuple[SpectralField, SpectralField]:
        drive_u, drive_b = self.drive(t)
        return sym_product(W, W) + drive_u, scale(Z, W) + drive_b

    def source(self, w: FieldPath, zeta: FieldPath, quadratic: bool = True, drive: bool = True) -> Source:
        """t -> (W (x) W + drive_u, Z W + drive_b) with (W, Z) read off the given paths."""

        def at(t: float):
            parts = []
            if quadratic:
                W, Z = w.at(t), zeta.at(t)
                parts.append((sym_product(W, W), scale(Z, W)))
            if drive:
                parts.append(self.drive(t))
            if not parts:
                return None
            return sum((p[0] for p in parts[1:]), parts[0][0]), sum((p[1] for p in parts[1:]), parts[0][1])

        return at

    def apply(self, w: FieldPath, zeta: FieldPath, quadratic: bool = True, drive: bool = True) -> Tuple[FieldPath, FieldPath]:
        grid = self.inputs.grid
        source = self.source(w, zeta, quadratic, drive)

        W = SpectralField.zeros(grid, Rank.VECTOR)
        Z = SpectralField.zeros(grid, Rank.SCALAR)
        w_values, z_values = [], []
        previous = 0.0
        for t in self.times:
            W, Z = advance(W, Z, previous, float(t), self.coefficients, source)
            w_values.append(W)
            z_values.append(Z)
            previous = float(t)
        return FieldPath(self.times, w_values), FieldPath(self.times, z_values)


def estimate_delta(inputs: CorrectorInputs, background: BackgroundPair, params: PathNormParams) -> float:
    """delta = 1 / (4 C) with C = ||Q(X)||_X / ||X||_X^2 measured on X = F(0, 0)."""
    corrector_map = CorrectorMap(inputs, background, params)
    zero_w = FieldPath.zeros(inputs.times, inputs.grid, Rank.VECTOR)
    zero_z = FieldPath.zeros(inputs.times, inputs.grid, Rank.SCALAR)
    w1, z1 = corrector_map.apply(zero_w, zero_z, quadratic=False)
    size = pair_x_norm(w1, z1, params)
    if size == 0:
        return 1.0
    w2, z2 = corrector_map.apply(w1 * (1.0 / size), z1 * (1.0 / size), drive=False)
    constant = pair_x_norm(w2, z2, params)
    delta = 1.0 / (4.0 * constant) if constant > 0 else 1.0
    logging.info(f"dry run: quadratic constant {constant:.4g}, delta {delta:.4g}")
    return delta


def picard_solve(
    inputs: CorrectorInputs,
    background: BackgroundPair,
    params: PathNormParams,
    delta: Optional[float] = None,
    forcing_scale: float = 1.0,
    calibrate: bool = False,
    tol: float = PICARD_TOL,
    max_iterations: int = MAX_PICARD,
) -> CorrectorState:
    """Iterate F from (0, 0) until the X update falls below ``tol``.

    With ``calibrate`` the drive is rescaled so that ||F(0, 0)||_X = delta / 2.
    """
    if delta is None:
        delta = estimate_delta(inputs, background, params)
    grid = inputs.grid
    w = FieldPath.zeros(inputs.times, grid, Rank.VECTOR)
    zeta = FieldPath.zeros(inputs.times, grid, Rank.SCALAR)
    corrector_map = CorrectorMap(inputs, background, params, forcing_scale)
    if calibrate:
        w1, z1 = corrector_map.apply(w, zeta)
        size = pair_x_norm(w1, z1, params)
        if size > 0:
            corrector_map.forcing_scale = forcing_scale * delta / (2.0 * size)
        logging.info(f"drive calibrated by factor {corrector_map.forcing_scale:.4g}")

    updates: List[float] = []
    rising = 0
    converged = False
    for iteration in range(1, max_iterations + 1):
        w_next, z_next = corrector_map.apply(w, zeta)
        update = pair_x_norm(w_next - w, z_next - zeta, params)
        updates.append(update)
        w, zeta = w_next, z_next
        rho = update / updates[-2] if len(updates) > 1 and updates[-2] > 0 else 0.0
        logging.info(f"picard iteration {iteration}: update {update:.3e}, rho {rho:.3f}")
        if update < tol:
            converged = True
            break
        rising = rising + 1 if rho >= 1.0 else 0
        if rising >= DIVERGENCE_PATIENCE:
            size = pair_x_norm(w, zeta, params)
            raise DivergenceError(
                f"Picard iteration stopped contracting after {iteration} iterations",
                f"||X|| = {size:.3e}, delta = {delta:.3e}, last update {update:.3e}, rho {rho:.3f}",
            )
    size = pair_x_norm(w, zeta, params)
    if not converged:
        logging.warning(f"Picard iteration did not reach {tol:.1e} within {max_iterations} iterations")
    state = CorrectorState(w, zeta, size, delta, len(updates), updates, corrector_map.forcing_scale, converged)
    logging.info(f"corrector: ||(w, zeta)||_X = {size:.4e}, delta {delta:.4e}, rho {state.contraction:.4f}")
    return state


# -- diagnostics ------------------------------------------------------------------------


def corrector_residual(
    state: CorrectorState,
    inputs: CorrectorInputs,
    background: BackgroundPair,
    params: PathNormParams,
    index: int,
    refinement: int = RESIDUAL_REFINEMENT,
) -> Dict[str, float]:
    """Residual of the unforced system for u = U + v + w, b = H + h + zeta at interior node ``index``.

    v and h enter through their own forced equations, so only U + w and H + zeta are
    differentiated in time. d_t U is exact; d_t w comes from re-integrating the solve's
    linear system from the previous node with uniform substeps and Richardson-extrapolated
    central differences at eps = (t_i - t_{i-1}) / refinement. The equation is then evaluated
    at the stored node values, so a path that is not a fixed point leaves a residual. The
    drive carries the scale used by the solve. Values are relative to ||Lap u||, ||Lap b||.
    """
    if not 0 < index < len(inputs.times) - 1:
        raise ValueError("residual needs an interior node")
    times = inputs.times
    grid = inputs.grid
    t_prev, t = float(times[index - 1]), float(times[index])
    corrector_map = CorrectorMap(inputs, background, params, state.forcing_scale)
    coefficients = corrector_map.coefficients
    source = corrector_map.source(state.w, state.zeta)

    per_half = max(2, int(math.ceil(_substeps(t_prev, t, coefficients, 1, 20_000) / (2 * refinement))))
    total = 2 * per_half * refinement
    dt = (t - t_prev) / total
    marks = {total + o * per_half: o for o in (-2, -1, 0, 1, 2)}
    W, Z = state.w.values[index - 1], state.zeta.values[index - 1]
    samples = {}
    for n in range(total + 2 * per_half):
        W, Z = _midpoint_step(W, Z, t_prev + n * dt, dt, coefficients, source)
        if n + 1 in marks:
            samples[marks[n + 1]] = (W, Z)
    eps = 2 * per_half * dt

    def derivative(c: int) -> SpectralField:
        d1 = (samples[2][c] - samples[-2][c]) / (2.0 * eps)
        d2 = (samples[1][c] - samples[-1][c]) / eps
        return (d2 * 4.0 - d1) / 3.0

    U, H = background.fields(grid, t)
    v, h = inputs.v.values[index], inputs.h.values[index]
    w, zeta = state.w.values[index], state.zeta.values[index]
    du = derivative(0) - U * background.decay_rate
    db = derivative(1) - H * background.decay_rate
    s = state.forcing_scale
    v_tilde, h_tilde = U + v, H + h
    flux_u = (
        sym_product(U, U)
        + sym_product(v_tilde, w) * 2.0
        + sym_product(w, w)
        + (inputs.f_u.values[index] + sym_product(U, v) * 2.0) * s
    )
    flux_b = (
        scale(H, U)
        + scale(zeta, v_tilde)
        + scale(h_tilde, w)
        + scale(zeta, w)
        + (inputs.f_b.values[index] + scale(h, U) + scale(H, v)) * s
    )
    res_u = du - laplacian(U + w) + leray_project(div(flux_u))
    res_b = db - laplacian(H + zeta) + div(flux_b)
    lap_u = max(sup_norm(laplacian(U + v + w)), 1e-300)
    lap_b = max(sup_norm(laplacian(H + h + zeta)), 1e-300)
    W_t, Z_t = samples[0]
    return {
        "t": t,
        "velocity": sup_norm(res_u) / lap_u,
        "scalar": sup_norm(res_b) / lap_b,
        "node_gap": max(sup_norm(W_t - w) / lap_u, sup_norm(Z_t - zeta) / lap_b),
    }


def product_bound_probe(grid: Grid2D, params: PathNormParams, rng: np.random.Generator, samples: int = 50, bandwidth: int = 4) -> Dict[str, float]:
    """sup ||g (x) h||_Y / (||g||_X ||h||_X) over random band-limited heat paths."""
    times = params.time_nodes()
    ratios = []
    for _ in range(samples):
        g0 = random_field(grid, Rank.VECTOR, rng, bandwidth)
        h0 = random_field(grid, Rank.VECTOR, rng, bandwidth)
        g = FieldPath(times, [heat_semigroup(g0, t) * t ** -((1.0 - params.alpha) / 2.0) for t in times])
        h = FieldPath(times, [heat_semigroup(h0, t) * t ** -((1.0 - params.alpha) / 2.0) for t in times])
        product = FieldPath(times, [sym_product(a, b) for a, b in zip(g.values, h.values)])
        ratios.append(y_norm(product, params) / (x_norm(g, params) * x_norm(h, params)))
    return {"constant": max(ratios), "mean": float(np.mean(ratios)), "samples": float(samples)}


def rescaling_symmetry(v_at, h_at, f_u_at, f_b_at, t: float, dt: float, lam: int) -> Dict[str, float]:
    """Relative gap between the residual of the rescaled system and lam^3 times the reindexed original.

    The rescaled family is v_lam(x, s) = lam v(lam x, lam^2 s), b likewise, and
    f_lam(x, s) = lam^2 f(lam x, lam^2 s). Inputs must stay band-limited below
    n / (4 lam) so that products survive the reindexing.
    """
    s = lam * lam
    res_u, res_b = residual_fields(v_at, h_at, f_u_at(s * t), f_b_at(s * t), s * t, s * dt)
    scaled_u, scaled_b = residual_fields(
        lambda r: rescale(v_at(s * r), lam),
        lambda r: rescale(h_at(s * r), lam),
        rescale(f_u_at(s * t), lam, power=2),
        rescale(f_b_at(s * t), lam, power=2),
        t,
        dt,
    )
    expected_u = rescale(res_u, lam, power=3)
    expected_b = rescale(res_b, lam, power=3)
    return {
        "velocity": sup_norm(scaled_u - expected_u) / max(sup_norm(expected_u), 1e-300),
        "scalar": sup_norm(scaled_b - expected_b) / max(sup_norm(expected_b), 1e-300),
    }

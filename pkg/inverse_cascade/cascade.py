"""
Level-by-level construction of the principal pair.

Level 0 is a single shear for the velocity and twelve plain oscillations for the
tracer. Every later level k+1 is obtained from the stresses of level k through the
pointwise decompositions, localized by the pipe cutoffs and the region cutoff chi_{k+1}.
Duhamel fields v_k, h_k are computed in closed form per Fourier mode from the
principal fields of level k+1.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import GridOverflowError
from .geometry import DEFAULT_DIRECTIONS, EPSILON_U, DirectionSets, sym_coefficients, tv_coefficients
from .ladder import (
    FrequencyLadder,
    PipeCutoff,
    RegionMasks,
    build_pipe_cutoff,
    build_region_masks,
    mollifier_apply,
    oscillation,
)
from .spectral_core import (
    Grid2D,
    Rank,
    SpectralField,
    div,
    duhamel_kernel,
    grad,
    laplacian,
    leray_project,
    op_D,
    op_newD,
    op_Q,
    op_R,
    op_R1,
    pointwise_magnitude,
    scale,
    sum_fields,
    sup_norm,
    sym_grad,
    sym_product,
    to_physical,
    to_spectral,
)


@dataclass
class AmplitudeSet:
    """Amplitudes a_{j,k,u} (j in Lambda_u) and a_{j,k,b} (j in Lambda_b), with their grid values."""

    k: int
    values_u: Dict[int, np.ndarray]
    values_b: Dict[int, np.ndarray]
    c_small: Optional[float] = None
    margin: Optional[float] = None
    chi_values: Optional[np.ndarray] = None

    def a_u(self, j: int, grid: Grid2D) -> SpectralField:
        return to_spectral(self.values_u[j], grid)

    def a_b(self, j: int, grid: Grid2D) -> SpectralField:
        return to_spectral(self.values_b[j], grid)

    def sup(self) -> float:
        values = list(self.values_u.values()) + list(self.values_b.values())
        return max(float(np.max(np.abs(v))) for v in values)


@dataclass
class PotentialSet:
    """Potentials of one level.

    Vector potentials are eta_perp times a scalar profile, so only the profiles are
    stored; missing entries are identically zero.
    """

    k: int
    grid: Grid2D
    sets: DirectionSets
    profile_u: Dict[int, SpectralField]
    psi_b: Dict[int, SpectralField]
    profile_c: Dict[int, SpectralField]

    def _vector(self, j: int, profile: Optional[SpectralField]) -> SpectralField:
        if profile is None:
            return SpectralField.zeros(self.grid, Rank.VECTOR)
        p1, p2 = self.sets.direction(j).perp_vector
        c = profile.coeffs[0]
        return SpectralField(self.grid, Rank.VECTOR, np.stack([p1 * c, p2 * c]))

    def psi_u(self, j: int) -> SpectralField:
        return self._vector(j, self.profile_u.get(j))

    def psi_c(self, j: int) -> SpectralField:
        return self._vector(j, self.profile_c.get(j))

    def velocity_potential(self, j: int) -> SpectralField:
        """psi_{j,k,u} for j in Lambda_u, psi_{j,k,c} for j in Lambda_b."""
        return self.psi_u(j) if self.sets.is_u(j) else self.psi_c(j)

    def velocity_indices(self) -> List[int]:
        return sorted(set(self.profile_u) | set(self.profile_c))

    def scalar(self, j: int) -> SpectralField:
        return self.psi_b.get(j, SpectralField.zeros(self.grid))


@dataclass
class Stresses:
    S_u: SpectralField
    S_c: SpectralField
    S_b: SpectralField

    def ball_load(self) -> float:
        """max(||S_u||, ||S_c||, ||S_b||^2) entering the choice of c."""
        return max(sup_norm(self.S_u), sup_norm(self.S_c), sup_norm(self.S_b) ** 2)


@dataclass
class PrincipalFields:
    t: float
    vbar: SpectralField
    hbar: SpectralField
    Rbar: SpectralField
    Hbar: SpectralField
    leray_defect: float = 0.0


@dataclass
class DuhamelFields:
    t: float
    v: SpectralField
    h: SpectralField
    R: SpectralField
    H: SpectralField


@dataclass
class CascadeLevel:
    k: int
    frequencies: Dict[int, int]
    amplitudes: AmplitudeSet
    potentials: PotentialSet
    stresses: Stresses
    cutoffs: Dict[int, PipeCutoff] = field(default_factory=dict)
    masks: Optional[RegionMasks] = None

    @property
    def grid(self) -> Grid2D:
        return self.potentials.grid

    def combined_potentials(self, t: float) -> Tuple[SpectralField, SpectralField]:
        """(sum -N e^{-N^2 t} psi_velocity, sum -N e^{-N^2 t} psi_b)."""
        grid = self.grid
        phi = np.zeros((2, grid.nx, grid.nx), np.complex128)
        phi_b = np.zeros((1, grid.nx, grid.nx), np.complex128)
        for j in self.potentials.velocity_indices():
            N = self.frequencies[j]
            phi += -N * math.exp(-N * N * t) * self.potentials.velocity_potential(j).coeffs
        for j, psi in self.potentials.psi_b.items():
            N = self.frequencies[j]
            phi_b += -N * math.exp(-N * N * t) * psi.coeffs
        return SpectralField(grid, Rank.VECTOR, phi), SpectralField(grid, Rank.SCALAR, phi_b)


@dataclass
class Cascade:
    ladder: FrequencyLadder
    grid: Grid2D
    levels: List[CascadeLevel]
    sets: DirectionSets = DEFAULT_DIRECTIONS

    @property
    def K(self) -> int:
        return len(self.levels) - 1


# -- construction -----------------------------------------------------------------------


def level_frequencies(ladder: FrequencyLadder, k: int) -> Dict[int, int]:
    return {j: ladder.synthesis_frequency(j, k) for j in range(1, ladder.J + 1)}


def initial_amplitudes(grid: Grid2D, sets: DirectionSets = DEFAULT_DIRECTIONS) -> AmplitudeSet:
    """a_{1,0,u} = 1, every other level-0 amplitude vanishes."""
    ones = np.ones((grid.nx, grid.nx))
    zeros = np.zeros((grid.nx, grid.nx))
    values_u = {j: (ones if j == 1 else zeros) for j in sets.u_indices}
    values_b = {j: zeros for j in sets.b_indices}
    return AmplitudeSet(0, values_u, values_b)


def build_potentials(
    k: int,
    amplitudes: AmplitudeSet,
    cutoffs: Dict[int, PipeCutoff],
    ladder: FrequencyLadder,
    grid: Grid2D,
) -> PotentialSet:
    """Oscillating potentials N^-2 phi_k * (a varphi eta_perp sin(N eta . x)); no cutoff or mollifier at k = 0."""
    sets = ladder.sets
    if 4 * ladder.max_synthesis_frequency(k) > grid.nx:
        raise GridOverflowError(f"level {k} frequencies do not fit grid {grid.nx}")
    ell = ladder.ell[k]
    profile_u: Dict[int, SpectralField] = {}
    psi_b: Dict[int, SpectralField] = {}
    profile_c: Dict[int, SpectralField] = {}

    def profile(j: int, weight: Optional[np.ndarray]) -> Optional[SpectralField]:
        N = ladder.synthesis_frequency(j, k)
        carrier = oscillation(sets.direction(j), N, grid)
        if k > 0:
            carrier = carrier * cutoffs[j].values
        if weight is not None:
            if not np.any(weight):
                return None
            carrier = carrier * weight
        f = to_spectral(carrier, grid)
        if k > 0:
            f = mollifier_apply(f, ell)
        return f / float(N * N)

    for j in sets.u_indices:
        p = profile(j, amplitudes.values_u[j])
        if p is not None:
            profile_u[j] = p
    for j in sets.b_indices:
        psi_b[j] = profile(j, None)
        p = profile(j, amplitudes.values_b[j])
        if p is not None:
            profile_c[j] = p
    logging.debug(f"potentials k={k}: {len(profile_u)} u, {len(psi_b)} b, {len(profile_c)} c")
    return PotentialSet(k, grid, sets, profile_u, psi_b, profile_c)


def compute_stresses(k: int, potentials: PotentialSet, ladder: FrequencyLadder) -> Stresses:
    """S_u = 2 D sum N psi_u, S_c = 2 D sum N psi_c, S_b = 2 grad sum N psi_b."""
    sets = ladder.sets
    grid = potentials.grid
    N = level_frequencies(ladder, k)
    sum_u = sum_fields((potentials.psi_u(j) * N[j] for j in sets.u_indices), grid, Rank.VECTOR)
    sum_c = sum_fields((potentials.psi_c(j) * N[j] for j in sets.b_indices), grid, Rank.VECTOR)
    sum_b = sum_fields((potentials.scalar(j) * N[j] for j in sets.b_indices), grid, Rank.SCALAR)
    return Stresses(op_D(sum_u) * 2.0, op_D(sum_c) * 2.0, grad(sum_b) * 2.0)


def choose_c(stresses: Stresses, epsilon: float = EPSILON_U) -> float:
    """Largest c = 2^-m, m >= 0, with c * load <= epsilon / 2."""
    load = stresses.ball_load()
    c = 1.0
    while c * load > epsilon / 2.0:
        c /= 2.0
    return c


def amplitudes_next(
    k: int,
    stresses: Stresses,
    chi_values: np.ndarray,
    sets: DirectionSets = DEFAULT_DIRECTIONS,
    c: Optional[float] = None,
) -> AmplitudeSet:
    """Level k+1 amplitudes: a_u = c^-1/2 chi Gamma(Id + c S_u), a_b = c^-1/2 chi Gamma(Id + c S_c, c^1/2 S_b)."""
    if c is None:
        c = choose_c(stresses)
    S_u = to_physical(stresses.S_u)
    S_c = to_physical(stresses.S_c)
    S_b = to_physical(stresses.S_b)
    identity = np.array([1.0, 1.0, 0.0]).reshape(3, 1, 1)
    coeffs, margin_u = sym_coefficients(identity + c * S_u)
    gammas, _, margin_b = tv_coefficients(identity + c * S_c, math.sqrt(c) * S_b)
    scale_factor = chi_values / math.sqrt(c)
    values_u = {j: scale_factor * np.sqrt(np.clip(coeffs[i], 0.0, None)) for i, j in enumerate(sets.u_indices)}
    values_b = {j: scale_factor * gammas[i] for i, j in enumerate(sets.b_indices)}
    logging.info(f"amplitudes k={k + 1}: c={c:.6g}, ball margin {min(margin_u, margin_b):.4f}")
    return AmplitudeSet(k + 1, values_u, values_b, c, min(margin_u, margin_b), chi_values)


def build_level(
    k: int,
    amplitudes: AmplitudeSet,
    ladder: FrequencyLadder,
    grid: Grid2D,
    masks: Optional[RegionMasks] = None,
) -> CascadeLevel:
    cutoffs = {}
    if k > 0:
        cutoffs = {j: build_pipe_cutoff(j, k, ladder, grid) for j in range(1, ladder.J + 1)}
    potentials = build_potentials(k, amplitudes, cutoffs, ladder, grid)
    stresses = compute_stresses(k, potentials, ladder)
    return CascadeLevel(k, level_frequencies(ladder, k), amplitudes, potentials, stresses, cutoffs, masks)


def build_cascade(ladder: FrequencyLadder, grid: Grid2D, levels: Optional[int] = None, c: Optional[float] = None) -> Cascade:
    """Principal levels 0..K, built in increasing k."""
    top = ladder.K if levels is None else levels
    if top > ladder.K:
        raise ValueError(f"ladder only has levels up to {ladder.K}")
    if top == ladder.K:
        ladder.check_grid(grid)
    amplitudes = initial_amplitudes(grid, ladder.sets)
    masks = None
    built: List[CascadeLevel] = []
    for k in range(top + 1):
        level = build_level(k, amplitudes, ladder, grid, masks)
        built.append(level)
        logging.info(f"level {k} built: N in [{min(level.frequencies.values())}, {max(level.frequencies.values())}]")
        if k < top:
            masks = build_region_masks(k + 1, ladder, grid)
            amplitudes = amplitudes_next(k, level.stresses, masks.chi_values, ladder.sets, c)
    return Cascade(ladder, grid, built, ladder.sets)


# -- fields -----------------------------------------------------------------------------


def principal_fields(level: CascadeLevel, t: float) -> PrincipalFields:
    """vbar = P Lap Phi, hbar = Lap Phi_b, Rbar = newD P Phi, Hbar = grad Phi_b."""
    phi, phi_b = level.combined_potentials(t)
    lap = laplacian(phi)
    vbar = leray_project(lap)
    defect = sup_norm(lap - vbar)
    return PrincipalFields(t, vbar, laplacian(phi_b), op_newD(leray_project(phi)), grad(phi_b), defect)


def _velocity_profiles(level: CascadeLevel) -> Dict[int, np.ndarray]:
    """Physical -P Lap psi_j for the nonzero velocity potentials."""
    return {
        j: to_physical(leray_project(laplacian(level.potentials.velocity_potential(j))) * -1.0)
        for j in level.potentials.velocity_indices()
    }


def _scalar_profiles(level: CascadeLevel) -> Dict[int, np.ndarray]:
    return {j: to_physical(laplacian(psi) * -1.0)[0] for j, psi in level.potentials.psi_b.items()}


def duhamel_fields(next_level: CascadeLevel, times: Union[float, Sequence[float]]) -> Union[DuhamelFields, List[DuhamelFields]]:
    """v_k, h_k, R_k, H_k at one or several times from the principal fields of level k+1.

    vbar_{k+1}(s) = sum_j N_j e^{-N_j^2 s} V_j, so each product pair carries the single
    rate N_j^2 + N_j'^2 and its time integral is a per-mode closed form. Pairs with the
    same frequencies share one FFT.
    """
    single = np.isscalar(times)
    times = [float(times)] if single else [float(t) for t in times]
    grid = next_level.grid
    N = next_level.frequencies
    V = _velocity_profiles(next_level)
    B = _scalar_profiles(next_level)

    out = {
        name: np.zeros((len(times), rank.components, grid.nx, grid.nx), np.complex128)
        for name, rank in (("v", Rank.VECTOR), ("h", Rank.SCALAR), ("R", Rank.SYMTENSOR), ("H", Rank.VECTOR))
    }

    groups_u: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for j, jp in combinations_with_replacement(sorted(V), 2):
        key = tuple(sorted((N[j], N[jp])))
        groups_u.setdefault(key, []).append((j, jp))
    groups_b: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for j in sorted(V):
        for jp in sorted(B):
            key = tuple(sorted((N[j], N[jp])))
            groups_b.setdefault(key, []).append((j, jp))

    for (n1, n2), pairs in groups_u.items():
        lam = float(n1 * n1 + n2 * n2)
        G = np.zeros((3, grid.nx, grid.nx))
        for j, jp in pairs:
            a, b = V[j], V[jp]
            weight = N[j] * N[jp] * (1.0 if j == jp else 2.0)
            G[0] += weight * a[0] * b[0]
            G[1] += weight * a[1] * b[1]
            G[2] += weight * 0.5 * (a[0] * b[1] + a[1] * b[0])
        pdiv = leray_project(div(to_spectral(G, grid, Rank.SYMTENSOR)))
        rpdiv = op_R(pdiv)
        for i, t in enumerate(times):
            kernel = duhamel_kernel(grid.ksq, lam, t)
            out["v"][i] -= kernel * pdiv.coeffs
            out["R"][i] -= kernel * rpdiv.coeffs

    for (n1, n2), pairs in groups_b.items():
        lam = float(n1 * n1 + n2 * n2)
        G = np.zeros((2, grid.nx, grid.nx))
        for j, jp in pairs:
            G += N[j] * N[jp] * V[j] * B[jp]
        divg = div(to_spectral(G, grid, Rank.VECTOR))
        r1 = op_R1(divg)
        for i, t in enumerate(times):
            kernel = duhamel_kernel(grid.ksq, lam, t)
            out["h"][i] -= kernel * divg.coeffs
            out["H"][i] -= kernel * r1.coeffs

    results = [
        DuhamelFields(
            t,
            SpectralField(grid, Rank.VECTOR, out["v"][i]),
            SpectralField(grid, Rank.SCALAR, out["h"][i]),
            SpectralField(grid, Rank.SYMTENSOR, out["R"][i]),
            SpectralField(grid, Rank.VECTOR, out["H"][i]),
        )
        for i, t in enumerate(times)
    ]
    logging.debug(f"duhamel level {next_level.k - 1}: {len(groups_u)} + {len(groups_b)} frequency groups")
    return results[0] if single else results


# -- scale separation -------------------------------------------------------------------


@dataclass
class SeparationEntry:
    j: int
    jp: int
    log_value: float
    log_target: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def target(self) -> float:
        return math.exp(self.log_target)

    @property
    def relative_error(self) -> float:
        """value / target - 1, evaluated in log space."""
        return math.expm1(self.log_value - self.log_target)


def scale_separation_table(ladder, k: int, t: Optional[float] = None, log_t: Optional[float] = None) -> List[SeparationEntry]:
    """int_0^t N_j N_j' e^{-(N_j^2 + N_j'^2) s} ds for j >= j' at level k.

    Diagonal targets are 1/2, off-diagonal targets N_j' / N_j. Works on both ladder
    regimes; asymptotic ladders use the lower log bounds of N. Pass ``log_t`` when t underflows.
    """
    if hasattr(ladder, "log_N"):
        log_n = {j: ladder.log_N[(j, k)][0] for j in range(1, ladder.sets.J + 1)}
    else:
        log_n = {j: math.log(ladder.N[(j, k)]) for j in range(1, ladder.sets.J + 1)}
    if log_t is None:
        log_t = math.log(t)
    entries = []
    for j in sorted(log_n):
        for jp in sorted(log_n):
            if jp > j:
                continue
            a, b = log_n[j], log_n[jp]
            gap = abs(a - b)
            # log(N_j N_j' / (N_j^2 + N_j'^2)) from the gap alone; a + b - logaddexp cancels
            log_ratio = -(gap + math.log1p(math.exp(-2.0 * gap)))
            log_lam = 2.0 * max(a, b) + math.log1p(math.exp(-2.0 * gap))
            lam_t = math.exp(min(log_lam + log_t, 700.0))
            log_value = log_ratio + math.log(-math.expm1(-lam_t))
            log_target = math.log(0.5) if j == jp else b - a
            entries.append(SeparationEntry(j, jp, float(log_value), float(log_target)))
    return entries


# -- forcing and residuals --------------------------------------------------------------


@dataclass
class ForcingPair:
    t: float
    f_u: SpectralField
    f_b: SpectralField
    parts_u: Dict[int, SpectralField]
    parts_b: Dict[int, SpectralField]
    cross_u: SpectralField
    cross_b: SpectralField
    absorbed_u: SpectralField
    absorbed_b: SpectralField
    truncation_u: SpectralField
    truncation_b: SpectralField
    identity_defect: float = 0.0


def _evaluate(cascade: Cascade, t: float, duhamel: Optional[Dict[int, DuhamelFields]] = None):
    principal = {k: principal_fields(level, t) for k, level in enumerate(cascade.levels)}
    if duhamel is None:
        duhamel = {k: duhamel_fields(cascade.levels[k + 1], t) for k in range(cascade.K)}
    return principal, duhamel


def assemble_forcing(cascade: Cascade, t: float, duhamel: Optional[Dict[int, DuhamelFields]] = None) -> ForcingPair:
    """f_u = sum_k f_{k,u} + cross terms + absorbed level-0 term - truncated top level; likewise f_b."""
    grid = cascade.grid
    principal, duhamel = _evaluate(cascade, t, duhamel)
    K = cascade.K
    parts_u, parts_b = {}, {}
    defect = 0.0
    for k in range(K):
        v, h = duhamel[k].v, duhamel[k].h
        vb, hb = principal[k].vbar, principal[k].hbar
        parts_u[k] = sym_product(v, v) - sym_product(vb, vb)
        parts_b[k] = scale(h, v) - scale(hb, vb)
        split = sym_product(v - vb, v) + sym_product(vb, v - vb)
        defect = max(defect, sup_norm(parts_u[k] - split))
    cross_u = SpectralField.zeros(grid, Rank.SYMTENSOR)
    cross_b = SpectralField.zeros(grid, Rank.VECTOR)
    for k1 in range(K):
        for k2 in range(K):
            if k1 == k2:
                continue
            cross_b = cross_b + scale(duhamel[k2].h, duhamel[k1].v)
            if k1 < k2:
                cross_u = cross_u + sym_product(duhamel[k1].v, duhamel[k2].v) * 2.0
    v0, h0 = principal[0].vbar, principal[0].hbar
    vK, hK = principal[K].vbar, principal[K].hbar
    absorbed_u, absorbed_b = sym_product(v0, v0), scale(h0, v0)
    truncation_u, truncation_b = -sym_product(vK, vK), -scale(hK, vK)
    f_u = sum_fields(parts_u.values(), grid, Rank.SYMTENSOR) + cross_u + absorbed_u + truncation_u
    f_b = sum_fields(parts_b.values(), grid, Rank.VECTOR) + cross_b + absorbed_b + truncation_b
    return ForcingPair(
        t, f_u, f_b, parts_u, parts_b, cross_u, cross_b, absorbed_u, absorbed_b, truncation_u, truncation_b, defect
    )


# central differences below this fraction of the scale are roundoff, not discretisation error
ROUNDOFF_FRACTION = 1e-10


@dataclass
class ResidualStats:
    residual: float
    residual_half: float
    extrapolated: float
    scale: float
    floor: float = 0.0

    @property
    def richardson_ratio(self) -> float:
        return self.residual / self.residual_half if self.residual_half > 0 else math.inf

    @property
    def reference(self) -> float:
        return max(self.scale, self.floor)

    @property
    def relative(self) -> float:
        return self.extrapolated / self.reference if self.reference > 0 else self.extrapolated

    @property
    def at_roundoff(self) -> bool:
        """Both step sizes already sit at the roundoff level, so the ratio carries no order."""
        return self.residual_half <= ROUNDOFF_FRACTION * self.reference


@dataclass
class EquationResidual:
    t: float
    dt: float
    velocity: ResidualStats
    scalar: ResidualStats


def _stats(samples: Dict[float, SpectralField], t: float, dt: float, rest: SpectralField, lap: SpectralField, floor: float = 0.0) -> ResidualStats:
    d1 = (samples[t + dt] - samples[t - dt]) / (2.0 * dt)
    d2 = (samples[t + dt / 2] - samples[t - dt / 2]) / dt
    dx = (d2 * 4.0 - d1) / 3.0
    return ResidualStats(
        sup_norm(d1 + rest),
        sup_norm(d2 + rest),
        sup_norm(dx + rest),
        max(sup_norm(dx), sup_norm(lap)),
        floor,
    )


def _residual_parts(v_at, h_at, f_u: SpectralField, f_b: SpectralField, t: float, dt: float):
    offsets = (-dt, -dt / 2, 0.0, dt / 2, dt)
    vs = {t + o: v_at(t + o) for o in offsets}
    hs = {t + o: h_at(t + o) for o in offsets}
    v, h = vs[t], hs[t]
    lap_v, lap_h = laplacian(v), laplacian(h)
    rest_u = -lap_v + leray_project(div(sym_product(v, v) - f_u))
    rest_b = -lap_h + div(scale(h, v) - f_b)
    return vs, hs, rest_u, rest_b, lap_v, lap_h


def forced_residual(v_at, h_at, f_u: SpectralField, f_b: SpectralField, t: float, dt: float) -> EquationResidual:
    """Residual of d_t v - Lap v + P div(v (x) v) = P div f_u and d_t h - Lap h + div(v h) = div f_b.

    ``v_at`` and ``h_at`` map a time to the field; time derivatives are central
    differences at steps dt and dt/2 combined by Richardson extrapolation. The scalar
    residual is measured against max(||d_t h||, ||Lap h||) but never below the velocity scale.
    """
    vs, hs, rest_u, rest_b, lap_v, lap_h = _residual_parts(v_at, h_at, f_u, f_b, t, dt)
    velocity = _stats(vs, t, dt, rest_u, lap_v)
    return EquationResidual(t, dt, velocity, _stats(hs, t, dt, rest_b, lap_h, velocity.scale))


def residual_fields(v_at, h_at, f_u: SpectralField, f_b: SpectralField, t: float, dt: float) -> Tuple[SpectralField, SpectralField]:
    """Richardson-extrapolated residual fields of the forced system at time t."""
    vs, hs, rest_u, rest_b, _, _ = _residual_parts(v_at, h_at, f_u, f_b, t, dt)

    def extrapolated(samples):
        d1 = (samples[t + dt] - samples[t - dt]) / (2.0 * dt)
        d2 = (samples[t + dt / 2] - samples[t - dt / 2]) / dt
        return (d2 * 4.0 - d1) / 3.0

    return extrapolated(vs) + rest_u, extrapolated(hs) + rest_b


def equation_residual(cascade: Cascade, t: float, dt: float, forcing: Optional[ForcingPair] = None) -> EquationResidual:
    """Residual of the forced system for v = sum_{k<K} v_k, h = sum_{k<K} h_k."""
    if not 0 < dt < t:
        raise ValueError(f"need 0 < dt < t, got dt={dt}, t={t}")
    offsets = (-dt, -dt / 2, 0.0, dt / 2, dt)
    times = [t + o for o in offsets]
    per_level = {k: duhamel_fields(cascade.levels[k + 1], times) for k in range(cascade.K)}
    grid = cascade.grid

    def total(attr: str, rank: Rank):
        return {
            s: sum_fields((getattr(per_level[k][i], attr) for k in per_level), grid, rank)
            for i, s in enumerate(times)
        }

    vs, hs = total("v", Rank.VECTOR), total("h", Rank.SCALAR)
    if forcing is None:
        forcing = assemble_forcing(cascade, t, {k: per_level[k][2] for k in per_level})
    result = forced_residual(vs.__getitem__, hs.__getitem__, forcing.f_u, forcing.f_b, t, dt)
    logging.info(
        f"equation residual at t={t:.3e}: velocity {result.velocity.extrapolated:.3e} "
        f"(ratio {result.velocity.richardson_ratio:.2f}), scalar {result.scalar.extrapolated:.3e}"
    )
    return result


# -- diagnostics ------------------------------------------------------------------------


def amplitude_identity_residuals(level: CascadeLevel, amplitudes: AmplitudeSet) -> Dict[str, float]:
    """Residuals of the three convex-integration identities on {chi_{k+1} = 1}.

    Tensor identities are compared after removing the trace, relative to the size of
    the trace-free target; the vector identity is absolute. ``curl`` reports the curl
    of sum a_b eta_perp.
    """
    sets = level.potentials.sets
    grid = level.grid
    chi = amplitudes.chi_values if amplitudes.chi_values is not None else np.ones((grid.nx, grid.nx))
    region = np.abs(chi - 1.0) == 0.0

    def tensor_sum(values: Dict[int, np.ndarray]) -> np.ndarray:
        total = np.zeros((3, grid.nx, grid.nx))
        for j, a in values.items():
            total += (a * a)[None] * sets.direction(j).perp_tensor.reshape(3, 1, 1)
        return total

    def trace_free_values(t: np.ndarray) -> np.ndarray:
        half = 0.5 * (t[0] + t[1])
        return np.stack([t[0] - half, t[1] - half, t[2]])

    residuals = {}
    for name, values, target in (
        ("tensor_u", amplitudes.values_u, level.stresses.S_u),
        ("tensor_c", amplitudes.values_b, level.stresses.S_c),
    ):
        target_tf = trace_free_values(to_physical(target))
        diff = pointwise_magnitude(trace_free_values(tensor_sum(values)) - target_tf, Rank.SYMTENSOR)
        size = max(1.0, float(np.max(pointwise_magnitude(target_tf, Rank.SYMTENSOR))))
        residuals[name] = float(np.max(diff[region], initial=0.0)) / size

    vector = np.zeros((2, grid.nx, grid.nx))
    for j, a in amplitudes.values_b.items():
        vector += a[None] * sets.direction(j).perp_vector.reshape(2, 1, 1)
    diff = pointwise_magnitude(vector - to_physical(level.stresses.S_b), Rank.VECTOR)
    residuals["vector_b"] = float(np.max(diff[region], initial=0.0))
    residuals["curl"] = sup_norm(curl(to_spectral(vector, grid, Rank.VECTOR)))
    return residuals


def curl(f: SpectralField) -> SpectralField:
    """Scalar curl d1 f2 - d2 f1 of a vector field."""
    k1, k2 = f.grid.wavenumbers
    coeffs = 1j * k1 * f.coeffs[1] - 1j * k2 * f.coeffs[0]
    return SpectralField(f.grid, Rank.SCALAR, coeffs[None])


def leading_term_identity(level: CascadeLevel, amplitudes: AmplitudeSet) -> Dict[str, float]:
    """Mean-free leading-term identities, valid when chi_{k+1} is identically one.

    1/2 sum Q(a_u^2 eta_perp (x) eta_perp) = 2 grad (.) P sum N psi_u and
    1/2 sum R1 div(a_b eta_perp) = grad sum N psi_b.
    """
    sets = level.potentials.sets
    grid = level.grid
    N = level.frequencies
    tensor = np.zeros((3, grid.nx, grid.nx))
    for j, a in amplitudes.values_u.items():
        tensor += (a * a)[None] * sets.direction(j).perp_tensor.reshape(3, 1, 1)
    lhs_u = op_Q(to_spectral(tensor, grid, Rank.SYMTENSOR)) * 0.5
    sum_u = sum_fields((level.potentials.psi_u(j) * N[j] for j in sets.u_indices), grid, Rank.VECTOR)
    rhs_u = sym_grad(leray_project(sum_u)) * 2.0
    vector = np.zeros((2, grid.nx, grid.nx))
    for j, a in amplitudes.values_b.items():
        vector += a[None] * sets.direction(j).perp_vector.reshape(2, 1, 1)
    lhs_b = op_R1(div(to_spectral(vector, grid, Rank.VECTOR))) * 0.5
    sum_b = sum_fields((level.potentials.scalar(j) * N[j] for j in sets.b_indices), grid, Rank.SCALAR)
    rhs_b = grad(sum_b)
    return {
        "tensor_u": sup_norm(lhs_u - rhs_u) / max(sup_norm(rhs_u), 1e-300),
        "vector_b": sup_norm(lhs_b - rhs_b) / max(sup_norm(rhs_b), 1e-300),
    }


def difference_probe(cascade: Cascade, t: float) -> Dict[int, Dict[str, float]]:
    """Relative size of v_k - vbar_k, R_k - Rbar_k and H_k - Hbar_k."""
    principal, duhamel = _evaluate(cascade, t)
    report = {}
    for k, fields in duhamel.items():
        bar = principal[k]
        base = max(sup_norm(bar.vbar), 1e-300)
        report[k] = {
            "v": sup_norm(fields.v - bar.vbar) / base,
            "R": sup_norm(fields.R - bar.Rbar) / max(sup_norm(bar.Rbar), 1e-300),
            "H": sup_norm(fields.H - bar.Hbar) / max(sup_norm(bar.Hbar), 1e-300),
        }
    return report


def consistency_residuals(cascade: Cascade, times: Sequence[float]) -> Dict[str, float]:
    """max over times and levels of |v - div R|, |h - div H| (principal and Duhamel) and |div v|."""
    worst = {"vbar_div_Rbar": 0.0, "hbar_div_Hbar": 0.0, "v_div_R": 0.0, "h_div_H": 0.0, "div_v": 0.0, "div_vbar": 0.0}
    for level in cascade.levels:
        for t in times:
            p = principal_fields(level, t)
            worst["vbar_div_Rbar"] = max(worst["vbar_div_Rbar"], sup_norm(p.vbar - div(p.Rbar)))
            worst["hbar_div_Hbar"] = max(worst["hbar_div_Hbar"], sup_norm(p.hbar - div(p.Hbar)))
            worst["div_vbar"] = max(worst["div_vbar"], sup_norm(div(p.vbar)))
    for k in range(cascade.K):
        for d in duhamel_fields(cascade.levels[k + 1], list(times)):
            worst["v_div_R"] = max(worst["v_div_R"], sup_norm(d.v - div(d.R)))
            worst["h_div_H"] = max(worst["h_div_H"], sup_norm(d.h - div(d.H)))
            worst["div_v"] = max(worst["div_v"], sup_norm(div(d.v)))
    return worst


def support_leakage(level: CascadeLevel, omega: np.ndarray) -> float:
    """Relative L2 mass of the level potentials outside Omega_k."""
    inside = outside = 0.0
    for field_ in list(level.potentials.profile_u.values()) + list(level.potentials.psi_b.values()) + list(
        level.potentials.profile_c.values()
    ):
        values = to_physical(field_)[0] ** 2
        inside += float(np.sum(values[omega]))
        outside += float(np.sum(values[~omega]))
    total = inside + outside
    return outside / total if total > 0 else 0.0

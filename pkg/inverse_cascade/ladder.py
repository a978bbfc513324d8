"""
Frequency hierarchy, intermittent pipes, cutoffs and active-region masks.

Two regimes are supported. In field mode A and b are small, every table entry is an
ordinary integer and fields are synthesized on a grid. In asymptotic mode A and b may
be astronomically large; frequencies are carried as certified log-space intervals and
only the ordering inequalities are checked.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import GridOverflowError, OrderingError, ResolutionError
from .geometry import DEFAULT_DIRECTIONS, Direction, DirectionSets
from .spectral_core import (
    Grid2D,
    SpectralField,
    apply_multiplier,
    derivative_sup_norm,
    smooth_step,
    to_spectral,
)

MODES = ("field", "asymptotic")
# relative guard for ceilings and resolution limits that land exactly on an integer
CEIL_GUARD = 1e-9
# minimum pipe diameter and mask transition width, in grid cells
PIPE_CELLS = 8
MASK_GAP_CELLS = 4
JD_CHOICE = "J_d = J"


@dataclass
class LadderParams:
    """Growth parameters of the frequency ladder."""

    A: float = 2.0
    b: float = 2.0
    J: int = 16
    m_star: int = 5
    gamma: float = 0.5
    K: int = 1
    delta0: Optional[float] = None
    field_delta0: Optional[float] = None
    mode: str = "field"

    def __post_init__(self):
        if not self.A > 1 or not self.b > 1:
            raise ValueError(f"ladder needs A > 1 and b > 1, got A={self.A}, b={self.b}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.J < 1 or self.m_star < 1 or self.K < 0:
            raise ValueError("J and m_star must be positive and K nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.delta0 is not None and self.delta0 <= 0:
            raise ValueError("delta0 must be positive")

    def exponent(self, j: int, k: int) -> float:
        """b^{k + (j - 1) / J}."""
        return self.b ** (k + (j - 1) / self.J)

    def log_exponent(self, j: int, k: int) -> float:
        return (k + (j - 1) / self.J) * math.log(self.b)


def guarded_ceil(x: float) -> int:
    return math.ceil(x - CEIL_GUARD * abs(x))


def geometric_delta0(sets: DirectionSets = DEFAULT_DIRECTIONS) -> float:
    """Largest delta0 with |C_{j,k}(4 delta0)| <= 1 / (10 J) for every direction.

    The periodic cylinder of radius rho / M occupies the fraction rho q / pi of the
    torus, q being the denominator of the direction.
    """
    return min(math.pi / (4.0 * 10.0 * sets.J * d.denom) for d in sets.joint)


def pipe_volume_fraction(direction: Direction, rho: float) -> float:
    """|C_{j,k}(rho)| / |T^2|, independent of M."""
    return min(1.0, rho * direction.denom / math.pi)


@dataclass
class FrequencyLadder:
    """Integer tables N_{j,k}, M_{j,k} and the derived t_k, ell_k (field mode)."""

    params: LadderParams
    sets: DirectionSets
    N: Dict[Tuple[int, int], int]
    M: Dict[Tuple[int, int], int]
    t: Dict[int, float]
    ell: Dict[int, float]
    delta0: float
    warnings: List[str] = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.params.K

    @property
    def J(self) -> int:
        return self.sets.J

    def level(self, k: int) -> List[int]:
        return [self.N[(j, k)] for j in range(1, self.J + 1)]

    def synthesis_frequency(self, j: int, k: int) -> int:
        """N_{j,k} rounded up to a multiple of m_* so that N eta^j is a lattice vector."""
        m = self.params.m_star
        return m * math.ceil(self.N[(j, k)] / m)

    def max_synthesis_frequency(self, k: int) -> int:
        return max(self.synthesis_frequency(j, k) for j in range(1, self.J + 1))

    def ordered(self) -> List[Tuple[int, int]]:
        """Keys in lexicographic (k, j) order."""
        return sorted(self.N, key=lambda key: (key[1], key[0]))

    def ordering_violations(self, k_max: Optional[int] = None) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
        keys = [key for key in self.ordered() if k_max is None or key[1] <= k_max]
        return [(a, b) for a, b in zip(keys, keys[1:]) if not self.N[a] < self.N[b]]

    def check_grid(self, grid: Grid2D) -> None:
        top = self.max_synthesis_frequency(self.K)
        if 4 * top > grid.nx:
            raise GridOverflowError(
                f"level {self.K} needs frequency {top}; grid {grid.nx} allows at most {grid.nx // 4}"
            )

    def field_delta0(self, grid: Grid2D) -> float:
        """Pipe radius parameter used for synthesized cutoffs on this grid."""
        if self.params.field_delta0 is not None:
            return self.params.field_delta0
        top_m = max(self.M[(j, k)] for j in range(1, self.J + 1) for k in range(1, max(self.K, 1) + 1))
        return PIPE_CELLS / 2.0 * grid.spacing * top_m

    def table_rows(self) -> List[Dict[str, float]]:
        rows = []
        for j, k in self.ordered():
            rows.append(
                {
                    "j": j,
                    "k": k,
                    "N": self.N[(j, k)],
                    "M": self.M[(j, k)],
                    "synthesis_N": self.synthesis_frequency(j, k),
                }
            )
        return rows


@dataclass
class AsymptoticLadder:
    """Certified log-space intervals [lo, hi] for log N_{j,k} and log M_{j,k}."""

    params: LadderParams
    sets: DirectionSets
    log_N: Dict[Tuple[int, int], Tuple[float, float]]
    log_M: Dict[Tuple[int, int], Tuple[float, float]]
    log_t: Dict[int, float]
    log_ell: Dict[int, float]
    certified_c: float
    margins: Dict[str, float]

    @property
    def K(self) -> int:
        return self.params.K

    def log10_rows(self) -> List[Dict[str, float]]:
        ln10 = math.log(10.0)
        rows = []
        for (j, k), (lo, hi) in sorted(self.log_N.items(), key=lambda item: (item[0][1], item[0][0])):
            rows.append(
                {
                    "j": j,
                    "k": k,
                    "log10_N": lo / ln10,
                    "log10_N_hi": hi / ln10,
                    "log10_M": self.log_M[(j, k)][0] / ln10,
                }
            )
        return rows


def _log_ceil_interval(log_value: float) -> Tuple[float, float]:
    """Bounds for log ceil(e^x) with x = log_value >= 0."""
    return log_value, log_value + math.log1p(math.exp(-log_value))


def _build_field(params: LadderParams, sets: DirectionSets, grid: Optional[Grid2D]) -> FrequencyLadder:
    N: Dict[Tuple[int, int], int] = {}
    M: Dict[Tuple[int, int], int] = {}
    for k in range(params.K + 2):
        for j in range(1, sets.J + 1):
            x = params.exponent(j, k)
            N[(j, k)] = params.m_star * guarded_ceil(params.A**x)
            M[(j, k)] = guarded_ceil(params.A ** (params.gamma * x))
    N[(1, 0)] = 1
    J = sets.J
    t = {k: float(N[(J, k)]) ** -4 for k in range(params.K + 1)}
    ell = {k: (N[(1, k)] * N[(1, k + 1)]) ** -0.5 for k in range(params.K + 1)}
    delta0 = params.delta0 if params.delta0 is not None else geometric_delta0(sets)
    ladder = FrequencyLadder(params, sets, N, M, t, ell, delta0)

    for a, b in ladder.ordering_violations(params.K):
        ladder.warnings.append(f"ordering: N{a}={N[a]} is not below N{b}={N[b]}")
    for k in range(params.K + 1):
        if ell[k] > 1.0 / N[(J, k)]:
            ladder.warnings.append(f"ell_{k}={ell[k]:.4g} exceeds 1/N_(J,{k})={1.0 / N[(J, k)]:.4g}")
        if not N[(1, k + 1)] ** -2.0 < t[k] < float(N[(J, k)]) ** -3:
            ladder.warnings.append(f"t_{k}={t[k]:.4g} outside (N_(1,{k + 1})^-2, N_(J,{k})^-3)")
    for warning in ladder.warnings:
        logging.warning(f"parameter regime: {warning}")
    if grid is not None:
        ladder.check_grid(grid)
    logging.info(f"ladder built: K={params.K}, N_(1,1)={N.get((1, 1))}, N_(J,K)={N[(J, params.K)]}")
    return ladder


def _build_asymptotic(params: LadderParams, sets: DirectionSets) -> AsymptoticLadder:
    log_A = math.log(params.A)
    log_m = math.log(params.m_star)
    J = sets.J
    log_N: Dict[Tuple[int, int], Tuple[float, float]] = {}
    log_M: Dict[Tuple[int, int], Tuple[float, float]] = {}
    for k in range(params.K + 2):
        for j in range(1, J + 1):
            x_log = math.exp(params.log_exponent(j, k)) * log_A
            lo, hi = _log_ceil_interval(x_log)
            log_N[(j, k)] = (log_m + lo, log_m + hi)
            log_M[(j, k)] = _log_ceil_interval(params.gamma * x_log)
    log_N[(1, 0)] = (0.0, 0.0)
    log_t = {k: -4.0 * log_N[(J, k)][1] for k in range(params.K + 1)}
    log_ell = {k: -0.5 * (log_N[(1, k)][0] + log_N[(1, k + 1)][0]) for k in range(params.K + 1)}

    # ordering chain A^c N_{j-1,k} <= M_{j,k} <= A^-c N_{j,k}, with N_{0,k} = N_{J,k-1}
    c_bound = math.inf
    for k in range(1, params.K + 1):
        for j in range(1, J + 1):
            previous = log_N[(j - 1, k)] if j > 1 else log_N[(J, k - 1)]
            c_bound = min(
                c_bound,
                (log_M[(j, k)][0] - previous[1]) / log_A,
                (log_N[(j, k)][0] - log_M[(j, k)][1]) / log_A,
            )
    strict = min(
        log_N[b][0] - log_N[a][1]
        for a, b in zip(
            sorted(log_N, key=lambda key: (key[1], key[0])),
            sorted(log_N, key=lambda key: (key[1], key[0]))[1:],
        )
    )
    margins = {
        "ordering_chain_c": c_bound,
        "strict_ordering": strict,
        "gamma_vs_b": params.gamma - params.b ** (-1.0 / J),
        "ell_vs_N": min(-log_N[(J, k)][1] - log_ell[k] for k in range(params.K + 1)),
        "t_upper": min(-3.0 * log_N[(J, k)][1] - log_t[k] for k in range(params.K + 1)),
        "t_lower": min(log_t[k] + 2.0 * log_N[(1, k + 1)][0] for k in range(params.K + 1)),
    }
    failing = {name: value for name, value in margins.items() if not value > 0}
    if failing:
        raise OrderingError(f"asymptotic inequalities fail: {failing}")
    logging.info(f"asymptotic ladder certified with c={c_bound:.4g}")
    return AsymptoticLadder(params, sets, log_N, log_M, log_t, log_ell, c_bound, margins)


def build_ladder(params: LadderParams, grid: Optional[Grid2D] = None, sets: DirectionSets = DEFAULT_DIRECTIONS):
    """Build the ladder tables in the regime selected by ``params.mode``."""
    if params.J != sets.J:
        raise ValueError(f"ladder J={params.J} does not match the direction sets (J={sets.J})")
    if params.mode == "asymptotic":
        return _build_asymptotic(params, sets)
    return _build_field(params, sets, grid)


# -- pipes ------------------------------------------------------------------------------


def _perp_lattice(direction: Direction) -> Tuple[int, int, int]:
    """(q, p1, p2) with p = q eta_perp primitive."""
    q = direction.denom
    p1, p2 = (int(v * q) for v in direction.perp)
    return q, p1, p2


@lru_cache(maxsize=256)
def pipe_distance(direction: Direction, M: int, n: int) -> np.ndarray:
    """Periodic distance on the n x n grid to the lattice of lines R eta + 2pi Z^2 / M.

    Normal coordinates of the lines are the multiples of s = 2pi / (q M), so on grid
    points theta / s = M (p . i) / n, which is reduced exactly in integers.
    """
    q, p1, p2 = _perp_lattice(direction)
    i = np.arange(n, dtype=np.int64)
    numer = (M * (p1 * i[:, None] + p2 * i[None, :])) % n
    u = numer / n
    r = (2.0 * math.pi / (q * M)) * np.minimum(u, 1.0 - u)
    r.setflags(write=False)
    return r


def pipe_distance_points(direction: Direction, M: int, points: np.ndarray) -> np.ndarray:
    """Same distance for arbitrary points of shape (2, P)."""
    q, _, _ = _perp_lattice(direction)
    s = 2.0 * math.pi / (q * M)
    theta = direction.perp_vector @ points
    u = np.mod(theta / s, 1.0)
    return s * np.minimum(u, 1.0 - u)


def lattice_phase(grid: Grid2D, kvec: Tuple[int, int]) -> np.ndarray:
    """xi . x on the grid for an integer vector xi, reduced modulo 2pi exactly."""
    i = np.arange(grid.nx, dtype=np.int64)
    index = (kvec[0] * i[:, None] + kvec[1] * i[None, :]) % grid.nx
    return 2.0 * math.pi * index / grid.nx


def oscillation(direction: Direction, N: int, grid: Grid2D) -> np.ndarray:
    """sin(N eta . x) on the grid; N eta must be integral."""
    kvec = (direction.eta1 * N, direction.eta2 * N)
    if any(v.denominator != 1 for v in kvec):
        raise ValueError(f"{N} * {direction} is not a lattice vector")
    return np.sin(lattice_phase(grid, (int(kvec[0]), int(kvec[1]))))


def radial_bump(r: np.ndarray, radius: float) -> np.ndarray:
    """exp(-1 / (1 - (r / radius)^2)) inside the radius, zero outside."""
    x = np.asarray(r, dtype=float) / radius
    inside = x < 1.0
    safe = np.where(inside, 1.0 - x * x, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


@dataclass
class PipeCutoff:
    """Normalized cutoff phi_{j,k} supported in the periodic cylinder C_{j,k}(delta0)."""

    j: int
    k: int
    field: SpectralField
    values: np.ndarray
    norm_const: float
    radius: float
    direction: Direction
    M: int
    N: int

    def normalization(self, grid: Grid2D) -> float:
        """(2pi)^-2 int phi^2 sin^2(N eta . x) dx by grid quadrature."""
        s = oscillation(self.direction, self.N, grid)
        return float(np.mean(self.values**2 * s**2))

    def support_violations(self, grid: Grid2D) -> int:
        r = pipe_distance(self.direction, self.M, grid.nx)
        return int(np.count_nonzero(np.abs(self.values[r >= self.radius]) >= 1e-12))

    def axis_shift_defect(self) -> float:
        """max |phi(x + h q eta) - phi(x)| for the grid translation along the axis."""
        shift = tuple(int(v * self.direction.denom) for v in (self.direction.eta1, self.direction.eta2))
        return float(np.max(np.abs(np.roll(self.values, shift, axis=(0, 1)) - self.values)))

    def axis_derivative(self) -> float:
        """sup |eta . grad phi| of the trigonometric interpolant."""
        k1, k2 = self.field.grid.wavenumbers
        eta = self.direction.vector
        symbol = 1j * (eta[0] * k1 + eta[1] * k2)
        return float(np.max(np.abs(apply_multiplier(self.field, symbol).physical())))

    def derivative_constants(self, orders=(1, 2, 3)) -> Dict[int, float]:
        """C_n = ||grad^n phi||_inf / M^n."""
        return {n: derivative_sup_norm(self.field, n) / self.M**n for n in orders}


def build_pipe_cutoff(j: int, k: int, ladder: FrequencyLadder, grid: Grid2D, delta0: Optional[float] = None) -> PipeCutoff:
    """Radial bump of the periodic distance to the pipe axis, normalized against sin^2."""
    if k < 1:
        raise ValueError("pipe cutoffs exist for k >= 1")
    direction = ladder.sets.direction(j)
    M = ladder.M[(j, k)]
    delta0 = ladder.field_delta0(grid) if delta0 is None else delta0
    if delta0 >= math.pi / direction.denom:
        raise ResolutionError(f"delta0={delta0:.4g} makes neighbouring pipes of direction {direction} overlap")
    radius = delta0 / M
    if 2.0 * radius < PIPE_CELLS * grid.spacing * (1.0 - CEIL_GUARD):
        raise ResolutionError(
            f"pipe ({j},{k}) has diameter {2 * radius:.3e} below {PIPE_CELLS} cells of {grid.spacing:.3e}"
        )
    N = ladder.synthesis_frequency(j, k)
    bump = radial_bump(pipe_distance(direction, M, grid.nx), radius)
    weight = float(np.mean(bump**2 * oscillation(direction, N, grid) ** 2))
    norm_const = 1.0 / math.sqrt(weight)
    values = bump * norm_const
    logging.debug(f"pipe ({j},{k}): M={M}, radius={radius:.4g}, norm_const={norm_const:.6g}")
    return PipeCutoff(j, k, to_spectral(values, grid), values, norm_const, radius, direction, M, N)


# -- active regions ---------------------------------------------------------------------


def omega_factor(k: int, k_prime: int, tilde: bool = False) -> float:
    """Radius factor of C_{j,k'} in Omega_k (or Omega-tilde_k)."""
    scale = 0.75 if tilde else 1.0
    return 3.0 - scale * 2.0 ** (-(k - k_prime))


def _region(k: int, ladder: FrequencyLadder, delta0: float, distance, tilde: bool):
    """Intersection over k' of unions over j, given a distance callback (j, k') -> r."""
    inside = None
    for k_prime in range(1, k + 1):
        union = None
        for j in range(1, ladder.J + 1):
            M = ladder.M[(j, k_prime)]
            hit = distance(j, k_prime) < omega_factor(k, k_prime, tilde) * delta0 / M
            union = hit if union is None else union | hit
        inside = union if inside is None else inside & union
    return inside


def omega_mask(k: int, ladder: FrequencyLadder, grid: Grid2D, delta0: float, tilde: bool = False) -> np.ndarray:
    if k == 0:
        return np.ones((grid.nx, grid.nx), dtype=bool)
    return _region(
        k,
        ladder,
        delta0,
        lambda j, kp: pipe_distance(ladder.sets.direction(j), ladder.M[(j, kp)], grid.nx),
        tilde,
    )


def omega_membership(points: np.ndarray, k: int, ladder: FrequencyLadder, delta0: float, tilde: bool = False) -> np.ndarray:
    """Exact membership of points (2, P) in Omega_k."""
    if k == 0:
        return np.ones(points.shape[1], dtype=bool)
    return _region(
        k,
        ladder,
        delta0,
        lambda j, kp: pipe_distance_points(ladder.sets.direction(j), ladder.M[(j, kp)], points),
        tilde,
    )


@dataclass
class RegionMasks:
    """Omega_k, Omega-tilde_k on the grid together with chi_k and the level k-1 masks it sits between."""

    k: int
    omega: np.ndarray
    omega_tilde: np.ndarray
    omega_prev: np.ndarray
    omega_tilde_prev: np.ndarray
    chi: SpectralField
    chi_values: np.ndarray

    def chi_identity_defect(self) -> float:
        """max |chi - 1| on Omega_{k-1}."""
        return float(np.max(np.abs(self.chi_values - 1.0)[self.omega_prev], initial=0.0))

    def chi_support_defect(self) -> float:
        """max |chi| off Omega-tilde_{k-1}."""
        return float(np.max(np.abs(self.chi_values)[~self.omega_tilde_prev], initial=0.0))

    def volume_fraction(self) -> float:
        return float(np.mean(self.omega))


def _chi_values(k: int, ladder: FrequencyLadder, grid: Grid2D, delta0: float) -> np.ndarray:
    """chi_k = prod_{k'} (1 - prod_j (1 - step_j)), one smooth step per pipe.

    Each step rises from 0 on the boundary of Omega-tilde_{k-1} to 1 on the boundary of
    Omega_{k-1}, so chi_k is exactly 1 on Omega_{k-1} and exactly 0 off Omega-tilde_{k-1}.
    No mollifier is applied.
    """
    if k <= 1:
        return np.ones((grid.nx, grid.nx))
    level = k - 1
    gap = min(
        (omega_factor(level, kp, True) - omega_factor(level, kp)) * delta0 / ladder.M[(j, kp)]
        for kp in range(1, level + 1)
        for j in range(1, ladder.J + 1)
    )
    if gap < MASK_GAP_CELLS * grid.spacing * (1.0 - CEIL_GUARD):
        raise ResolutionError(
            f"Omega_{level} and its enlargement are {gap:.3e} apart, below {MASK_GAP_CELLS} cells"
        )
    chi = np.ones((grid.nx, grid.nx))
    for kp in range(1, level + 1):
        outside_all = np.ones((grid.nx, grid.nx))
        for j in range(1, ladder.J + 1):
            M = ladder.M[(j, kp)]
            inner = omega_factor(level, kp) * delta0 / M
            outer = omega_factor(level, kp, True) * delta0 / M
            r = pipe_distance(ladder.sets.direction(j), M, grid.nx)
            outside_all *= 1.0 - smooth_step((outer - r) / (outer - inner))
        chi *= 1.0 - outside_all
    return chi


def build_region_masks(k: int, ladder: FrequencyLadder, grid: Grid2D, delta0: Optional[float] = None) -> RegionMasks:
    """Sample Omega_k, Omega-tilde_k and build the smooth cutoff chi_k."""
    if k < 0 or k > ladder.K + 1:
        raise ValueError(f"masks available for 0 <= k <= {ladder.K + 1}, got {k}")
    delta0 = ladder.field_delta0(grid) if delta0 is None else delta0
    chi_values = _chi_values(k, ladder, grid, delta0)
    masks = RegionMasks(
        k=k,
        omega=omega_mask(k, ladder, grid, delta0),
        omega_tilde=omega_mask(k, ladder, grid, delta0, tilde=True),
        omega_prev=omega_mask(max(k - 1, 0), ladder, grid, delta0),
        omega_tilde_prev=omega_mask(max(k - 1, 0), ladder, grid, delta0, tilde=True),
        chi=to_spectral(chi_values, grid),
        chi_values=chi_values,
    )
    logging.debug(f"masks k={k}: |Omega_k| fraction {masks.volume_fraction():.4f}")
    return masks


def omega_volume_fraction(k: int, ladder: FrequencyLadder, rng: np.random.Generator, samples: int = 200_000, delta0: Optional[float] = None) -> float:
    """Monte-Carlo |Omega_k| / |T^2| with exact point membership."""
    delta0 = ladder.delta0 if delta0 is None else delta0
    points = rng.uniform(0.0, 2.0 * math.pi, (2, samples))
    return float(np.mean(omega_membership(points, k, ladder, delta0)))


@dataclass
class CubeProbeResult:
    k0: int
    k: int
    bound: float
    max_ratio: float
    c0: float
    sides: List[float]
    ratios: List[float]

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.bound * 1.05


def cube_intersection_probe(
    k0: int,
    k: int,
    ladder: FrequencyLadder,
    rng: np.random.Generator,
    cubes: int = 100,
    samples: int = 4000,
    c0: float = 2.0 * math.pi,
    delta0: Optional[float] = None,
) -> CubeProbeResult:
    """Max over random cubes Q of |Omega_k cap Q| / |Q| against 2^-(k - k0)."""
    if k < k0:
        raise ValueError("cube probe needs k >= k0")
    delta0 = ladder.delta0 if delta0 is None else delta0
    low = min(c0 / ladder.M[(1, k0)], 2.0 * math.pi)
    sides, ratios = [], []
    for _ in range(cubes):
        side = float(np.exp(rng.uniform(math.log(low), math.log(2.0 * math.pi))))
        corner = rng.uniform(0.0, 2.0 * math.pi, (2, 1))
        points = corner + rng.uniform(0.0, side, (2, samples))
        sides.append(side)
        ratios.append(float(np.mean(omega_membership(points, k, ladder, delta0))))
    result = CubeProbeResult(k0, k, 2.0 ** (-(k - k0)), max(ratios), c0, sides, ratios)
    logging.info(f"cube probe k0={k0}, k={k}: max ratio {result.max_ratio:.4f} vs {result.bound}")
    return result


def mollifier_apply(f: SpectralField, ell: float) -> SpectralField:
    """Gaussian mollifier at scale ell, multiplier exp(-ell^2 |xi|^2 / 2)."""
    if ell < 0:
        raise ValueError(f"mollifier scale must be nonnegative, got {ell}")
    if ell == 0:
        return f
    return apply_multiplier(f, np.exp(-0.5 * ell * ell * f.grid.ksq))

"""
Direction families and the two pointwise decompositions used to build amplitudes.

The symmetric decomposition writes a tensor R near Id as a positive combination of
the rank-one tensors eta_perp (x) eta_perp over four rational directions. The
tensor-vector decomposition additionally realizes a vector g with one shared set of
(signed) coefficients over twelve directions, at the price of a pressure multiple of Id.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import OutOfBallError


@dataclass(frozen=True)
class Direction:
    """Unit vector with rational components."""

    eta1: Fraction
    eta2: Fraction

    def __post_init__(self):
        object.__setattr__(self, "eta1", Fraction(self.eta1))
        object.__setattr__(self, "eta2", Fraction(self.eta2))
        if self.eta1**2 + self.eta2**2 != 1:
            raise ValueError(f"direction {self} is not a unit vector")

    @classmethod
    def parse(cls, spec: str) -> "Direction":
        """Parse ``"3/5,4/5"``."""
        first, second = spec.split(",", 1)
        return cls(Fraction(first.strip()), Fraction(second.strip()))

    def __str__(self) -> str:
        return f"({self.eta1},{self.eta2})"

    def __neg__(self) -> "Direction":
        return Direction(-self.eta1, -self.eta2)

    @property
    def perp(self) -> Tuple[Fraction, Fraction]:
        return (-self.eta2, self.eta1)

    @property
    def denom(self) -> int:
        """Smallest q > 0 with q * eta integral."""
        return math.lcm(self.eta1.denominator, self.eta2.denominator)

    @property
    def integer_vector(self) -> Tuple[int, int]:
        q = self.denom
        return (int(self.eta1 * q), int(self.eta2 * q))

    @property
    def vector(self) -> np.ndarray:
        return np.array([float(self.eta1), float(self.eta2)])

    @property
    def perp_vector(self) -> np.ndarray:
        return np.array([float(p) for p in self.perp])

    @property
    def perp_tensor(self) -> np.ndarray:
        """eta_perp (x) eta_perp stored as (T11, T22, T12)."""
        p1, p2 = self.perp_vector
        return np.array([p1 * p1, p2 * p2, p1 * p2])


E1 = Direction(1, 0)
E2 = Direction(0, 1)
PYTHAGOREAN_DIRECTIONS = ("3/5,4/5", "4/5,3/5", "3/5,-4/5", "4/5,-3/5")


@dataclass(frozen=True)
class DirectionSets:
    """Lambda_u, Lambda_b and the joint index set, numbered 1..J."""

    lambda_u: Tuple[Direction, ...]
    lambda_b: Tuple[Direction, ...]

    @property
    def J(self) -> int:
        return len(self.lambda_u) + len(self.lambda_b)

    @property
    def joint(self) -> Tuple[Direction, ...]:
        return self.lambda_u + self.lambda_b

    @property
    def m_star(self) -> int:
        return reduce(math.lcm, (d.denom for d in self.joint), 1)

    @property
    def u_indices(self) -> List[int]:
        return list(range(1, len(self.lambda_u) + 1))

    @property
    def b_indices(self) -> List[int]:
        return list(range(len(self.lambda_u) + 1, self.J + 1))

    def direction(self, j: int) -> Direction:
        """Direction with 1-based joint index j."""
        if not 1 <= j <= self.J:
            raise IndexError(f"direction index {j} outside 1..{self.J}")
        return self.joint[j - 1]

    def is_u(self, j: int) -> bool:
        return j <= len(self.lambda_u)


def build_direction_sets(lambda_u: Optional[Sequence[Direction]] = None) -> DirectionSets:
    """Default Lambda_u: the four denominator-5 Pythagorean directions."""
    if lambda_u is None:
        lambda_u = [Direction.parse(s) for s in PYTHAGOREAN_DIRECTIONS]
    lambda_u = tuple(lambda_u)
    axes = (E1, -E1, E2, -E2)
    if set(lambda_u) & set(axes):
        raise ValueError("Lambda_u must not contain coordinate axis directions")
    lambda_b = lambda_u + tuple(-d for d in lambda_u) + axes
    sets = DirectionSets(lambda_u, lambda_b)
    logging.debug(f"direction sets: J={sets.J}, m_star={sets.m_star}")
    return sets


# -- symmetric decomposition ------------------------------------------------------------


def frobenius(d: np.ndarray) -> np.ndarray:
    """Frobenius norm of symmetric tensors stored as (T11, T22, T12) along axis 0."""
    d = np.asarray(d, dtype=float)
    return np.sqrt(d[0] ** 2 + d[1] ** 2 + 2.0 * d[2] ** 2)


def sym_vector(R) -> np.ndarray:
    """Accept a 2x2 symmetric matrix or an (R11, R22, R12) triple."""
    R = np.asarray(R, dtype=float)
    if R.shape == (2, 2):
        return np.array([R[0, 0], R[1, 1], 0.5 * (R[0, 1] + R[1, 0])])
    if R.shape == (3,):
        return R
    raise ValueError(f"expected a 2x2 matrix or a 3-vector, got shape {R.shape}")


def direction_matrix(directions: Sequence[Direction]) -> np.ndarray:
    """3 x m matrix whose columns are eta_perp (x) eta_perp."""
    return np.stack([d.perp_tensor for d in directions], axis=1)


def sym_right_inverse(directions: Sequence[Direction]) -> np.ndarray:
    """Minimal-norm right inverse L of c -> sum c_eta eta_perp (x) eta_perp."""
    return np.linalg.pinv(direction_matrix(directions))


def sym_ball_radius(directions: Sequence[Direction]) -> float:
    """Largest Frobenius radius around Id on which every affine coefficient stays >= 0."""
    L = sym_right_inverse(directions)
    base = L @ np.array([1.0, 1.0, 0.0])
    dual = np.sqrt(L[:, 0] ** 2 + L[:, 1] ** 2 + 0.5 * L[:, 2] ** 2)
    return float(np.min(base / dual))


DEFAULT_DIRECTIONS = build_direction_sets()
SYM_INVERSE = sym_right_inverse(DEFAULT_DIRECTIONS.lambda_u)
EPSILON_U = sym_ball_radius(DEFAULT_DIRECTIONS.lambda_u)
_IDENTITY = np.array([1.0, 1.0, 0.0])


@dataclass
class SymDecomp:
    """Coefficients c_eta = Gamma_eta^2 of R = sum c_eta eta_perp (x) eta_perp."""

    coeffs: Dict[Direction, float]
    ball_radius: float = EPSILON_U

    @property
    def gammas(self) -> Dict[Direction, float]:
        return {d: math.sqrt(c) for d, c in self.coeffs.items()}

    def reconstruct(self) -> np.ndarray:
        return sum((c * d.perp_tensor for d, c in self.coeffs.items()), np.zeros(3))


@dataclass
class TVDecomp:
    """Signed coefficients over Lambda_b realizing (R - p Id, g) simultaneously."""

    gammas: Dict[Direction, float]
    pressure: float
    M: float
    s1: float
    s2: float
    alphas: Tuple[float, float] = field(default=(0.0, 0.0))
    betas: Tuple[float, float] = field(default=(0.0, 0.0))

    def reconstruct_tensor(self) -> np.ndarray:
        """sum Gamma^2 eta_perp (x) eta_perp, which equals R - p Id."""
        return sum((g * g * d.perp_tensor for d, g in self.gammas.items()), np.zeros(3))

    def reconstruct_vector(self) -> np.ndarray:
        return sum((g * d.perp_vector for d, g in self.gammas.items()), np.zeros(2))


def _check_ball(distance: np.ndarray, radius: float) -> None:
    margin = radius - distance
    worst = float(np.min(margin))
    if worst < 0:
        index = np.unravel_index(int(np.argmin(margin)), np.shape(margin))
        raise OutOfBallError(worst, tuple(int(i) for i in index) if index else None)


def sym_decompose(R, sets: DirectionSets = DEFAULT_DIRECTIONS) -> SymDecomp:
    """c_eta(R) = c_eta(Id) + L (R - Id) for R in the Frobenius ball of radius eps_u."""
    vec = sym_vector(R)
    if sets.lambda_u == DEFAULT_DIRECTIONS.lambda_u:
        inverse, radius = SYM_INVERSE, EPSILON_U
    else:
        inverse, radius = sym_right_inverse(sets.lambda_u), sym_ball_radius(sets.lambda_u)
    _check_ball(frobenius(vec - _IDENTITY), radius)
    coeffs = inverse @ vec
    return SymDecomp(dict(zip(sets.lambda_u, (float(c) for c in coeffs))), radius)


def axis_coefficients(g) -> Tuple[np.ndarray, ...]:
    """(M, s1, s2, alpha1, beta1, alpha2, beta2) of a vector or a vector field g."""
    g = np.asarray(g, dtype=float)
    g1, g2 = g[0], g[1]
    M = 1.0 + g1 * g1 + g2 * g2
    s1 = np.sqrt(2.0 * M - g1 * g1)
    s2 = np.sqrt(2.0 * M - g2 * g2)
    alpha1 = (-g1 - s1) / 2.0
    beta1 = (g1 - s1) / 2.0
    alpha2 = (g2 + s2) / 2.0
    beta2 = (s2 - g2) / 2.0
    return M, s1, s2, alpha1, beta1, alpha2, beta2


def tv_decompose(R, g, sets: DirectionSets = DEFAULT_DIRECTIONS) -> TVDecomp:
    """Simultaneous decomposition of (R, g) over Lambda_b with pressure p = -(1 + |g|^2)."""
    sym = sym_decompose(R, sets)
    M, s1, s2, alpha1, beta1, alpha2, beta2 = (float(v) for v in axis_coefficients(g))
    gammas: Dict[Direction, float] = {}
    for d in sets.lambda_u:
        half = math.sqrt(sym.coeffs[d]) / math.sqrt(2.0)
        gammas[d] = half
        gammas[-d] = half
    gammas[E1] = alpha2
    gammas[-E1] = beta2
    gammas[E2] = alpha1
    gammas[-E2] = beta1
    ordered = {d: gammas[d] for d in sets.lambda_b}
    return TVDecomp(ordered, -M, M, s1, s2, (alpha1, alpha2), (beta1, beta2))


# -- grid versions ----------------------------------------------------------------------


def sym_coefficients(R_values: np.ndarray) -> Tuple[np.ndarray, float]:
    """Pointwise c_eta over a grid of tensors (3, n, n); returns (coeffs (4, n, n), margin)."""
    R_values = np.asarray(R_values, dtype=float)
    distance = frobenius(R_values - _IDENTITY.reshape(3, *([1] * (R_values.ndim - 1))))
    _check_ball(distance, EPSILON_U)
    coeffs = np.tensordot(SYM_INVERSE, R_values, axes=(1, 0))
    return coeffs, float(EPSILON_U - np.max(distance))


def tv_coefficients(R_values: np.ndarray, g_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """Pointwise signed Gamma over Lambda_b in Lambda_b order; returns (gammas (12, ...), pressure, margin)."""
    coeffs, margin = sym_coefficients(R_values)
    half = np.sqrt(np.clip(coeffs, 0.0, None)) / math.sqrt(2.0)
    M, _, _, alpha1, beta1, alpha2, beta2 = axis_coefficients(g_values)
    gammas = np.concatenate([half, half, np.stack([alpha2, beta2, alpha1, beta1])])
    return gammas, -M, margin


# -- fuzz suite -------------------------------------------------------------------------


def random_ball_tensor(rng: np.random.Generator, radius: float) -> np.ndarray:
    """Uniformly random (R11, R22, R12) in the Frobenius ball of the given radius around Id."""
    direction = rng.standard_normal(3)
    direction /= frobenius(direction)
    return _IDENTITY + direction * radius * rng.uniform() ** (1.0 / 3.0)


def _richardson_ratio(func, point: np.ndarray, direction: np.ndarray, h: float) -> float:
    def central(step):
        return (func(point + step * direction) - func(point - step * direction)) / (2.0 * step)

    d1, d2, d3 = central(h), central(h / 2.0), central(h / 4.0)
    return float((d1 - d2) / (d2 - d3))


def run_geometry_check(seed: int = 0, samples: int = 1000) -> Dict[str, float]:
    """Fuzz both decompositions and return the worst residuals found."""
    rng = np.random.default_rng(seed)
    sets = DEFAULT_DIRECTIONS
    results = {
        "epsilon_u": EPSILON_U,
        "sym_reconstruction": 0.0,
        "sym_min_coefficient": math.inf,
        "tv_tensor": 0.0,
        "tv_vector": 0.0,
        "tv_pressure": 0.0,
        "tv_alpha_beta": 0.0,
        "tv_pair_cancellation": 0.0,
    }
    for _ in range(samples):
        R = random_ball_tensor(rng, EPSILON_U / 2.0)
        sym = sym_decompose(R, sets)
        results["sym_reconstruction"] = max(
            results["sym_reconstruction"], float(frobenius(sym.reconstruct() - R))
        )
        results["sym_min_coefficient"] = min(results["sym_min_coefficient"], min(sym.coeffs.values()))

        g = rng.uniform(-3.0, 3.0, 2)
        while np.hypot(*g) > 3.0:
            g = rng.uniform(-3.0, 3.0, 2)
        R = random_ball_tensor(rng, EPSILON_U / 2.0)
        tv = tv_decompose(R, g, sets)
        target = R - tv.pressure * _IDENTITY
        results["tv_tensor"] = max(results["tv_tensor"], float(frobenius(tv.reconstruct_tensor() - target)))
        results["tv_vector"] = max(results["tv_vector"], float(np.hypot(*(tv.reconstruct_vector() - g))))
        results["tv_pressure"] = max(results["tv_pressure"], abs(tv.pressure + (1.0 + g[0] * g[0] + g[1] * g[1])))
        (a1, a2), (b1, b2) = tv.alphas, tv.betas
        results["tv_alpha_beta"] = max(
            results["tv_alpha_beta"],
            abs(a1 - b1 + g[0]),
            abs(a2 - b2 - g[1]),
            abs(a1 * a1 + b1 * b1 - tv.M),
            abs(a2 * a2 + b2 * b2 - tv.M),
        )
        for d in sets.lambda_u:
            pair = tv.gammas[d] * d.perp_vector + tv.gammas[-d] * (-d).perp_vector
            results["tv_pair_cancellation"] = max(
                results["tv_pair_cancellation"], float(np.max(np.abs(pair)))
            )

    point = random_ball_tensor(rng, EPSILON_U / 4.0)
    direction = rng.standard_normal(3)
    direction /= frobenius(direction)
    first = sets.lambda_u[0]
    results["sym_richardson"] = _richardson_ratio(
        lambda r: sym_decompose(r, sets).gammas[first], point, direction, 1e-2
    )
    g0 = rng.uniform(-1.0, 1.0, 2)
    gdir = rng.standard_normal(2)
    gdir /= np.hypot(*gdir)
    results["tv_richardson"] = _richardson_ratio(
        lambda g: tv_decompose(_IDENTITY, g, sets).gammas[E2], g0, gdir, 1e-2
    )
    logging.info(
        f"geometry check: eps_u={EPSILON_U:.6f}, sym residual {results['sym_reconstruction']:.2e}, "
        f"tv residuals {results['tv_tensor']:.2e}/{results['tv_vector']:.2e}"
    )
    return results

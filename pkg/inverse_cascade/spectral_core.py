"""
Fourier representation of real fields on the periodic square (R / 2piZ)^2 and the
operator calculus used by the cascade construction.

Every field is stored by its complex Fourier coefficients c(xi) with
f(x) = sum_xi c(xi) exp(i xi . x), in numpy FFT order along both axes. The first
array axis is x1, the second x2 (``meshgrid(..., indexing="ij")``).

The Nyquist row and column carry zero wavenumber for every multiplier, so odd
multipliers keep the coefficients conjugate-symmetric.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .errors import DyadicError, GridMismatchError, RankError

# Littlewood-Paley profile: theta == 1 on [0, 4/3], theta == 0 on [3/2, inf)
LP_INNER = 4.0 / 3.0
LP_OUTER = 3.0 / 2.0
# series branch of the Duhamel kernel
KERNEL_SERIES_THRESHOLD = 1e-6

_warned_zero_modes = set()


class Rank(Enum):
    """Tensor rank of a field together with its stored component count."""

    SCALAR = 0
    VECTOR = 1
    SYMTENSOR = 2

    @property
    def components(self) -> int:
        return {Rank.SCALAR: 1, Rank.VECTOR: 2, Rank.SYMTENSOR: 3}[self]

    @classmethod
    def from_components(cls, count: int) -> "Rank":
        for rank in cls:
            if rank.components == count:
                return rank
        raise RankError(f"no field rank has {count} components")


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid with ``nx`` points per axis on a side of length 2pi."""

    nx: int
    ny: Optional[int] = None

    def __post_init__(self):
        if self.ny is None:
            object.__setattr__(self, "ny", self.nx)
        if self.nx != self.ny:
            raise GridMismatchError(f"grid must be square, got {self.nx}x{self.ny}")
        if self.nx < 4 or self.nx & (self.nx - 1):
            raise GridMismatchError(f"grid size must be a power of two >= 4, got {self.nx}")

    @property
    def n(self) -> int:
        return self.nx

    @property
    def spacing(self) -> float:
        return 2.0 * math.pi / self.nx

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def max_active_frequency(self) -> int:
        """Largest frequency allowed by the 4x anti-aliasing margin."""
        return self.nx // 4

    @cached_property
    def integer_modes(self) -> np.ndarray:
        """Signed integer mode numbers in FFT order, range [-n/2, n/2)."""
        return np.fft.fftfreq(self.nx, d=1.0 / self.nx).round().astype(np.int64)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Array (2, n, n) of (k1, k2) with the Nyquist wavenumber set to zero."""
        k = self.integer_modes.astype(float)
        k[self.nx // 2] = 0.0
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        return np.stack([k1, k2])

    @cached_property
    def ksq(self) -> np.ndarray:
        k1, k2 = self.wavenumbers
        return k1 * k1 + k2 * k2

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def inverse_ksq(self) -> np.ndarray:
        """1/|xi|^2 with the zero (and fully Nyquist) modes sent to zero."""
        inv = np.zeros_like(self.ksq)
        nonzero = self.ksq > 0
        inv[nonzero] = 1.0 / self.ksq[nonzero]
        return inv

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Physical grid points as an array (2, n, n)."""
        x = np.arange(self.nx) * self.spacing
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        return np.stack([x1, x2])

    def band_mask(self, bandwidth: int) -> np.ndarray:
        """Modes with |xi_1| < bandwidth and |xi_2| < bandwidth (Nyquist excluded)."""
        m = np.abs(self.integer_modes)
        inside = m < min(bandwidth, self.nx // 2)
        return np.logical_and.outer(inside, inside)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A real scalar, vector or symmetric-tensor field stored in Fourier space.

    Symmetric tensors store (T11, T22, T12). The coefficient array is read-only.
    """

    grid: Grid2D
    rank: Rank
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        expected = (self.rank.components, self.grid.nx, self.grid.ny)
        if coeffs.shape != expected:
            raise RankError(f"coefficient array has shape {coeffs.shape}, expected {expected}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, grid: Grid2D, rank: Rank = Rank.SCALAR) -> "SpectralField":
        return cls(grid, rank, np.zeros((rank.components, grid.nx, grid.ny), np.complex128))

    @classmethod
    def constant(cls, grid: Grid2D, values: Sequence[float]) -> "SpectralField":
        """Spatially constant field with the given component values."""
        values = list(values)
        coeffs = np.zeros((len(values), grid.nx, grid.ny), np.complex128)
        coeffs[:, 0, 0] = values
        return cls(grid, Rank.from_components(len(values)), coeffs)

    @classmethod
    def stack(cls, parts: Sequence["SpectralField"]) -> "SpectralField":
        """Assemble a vector or symmetric tensor from scalar components."""
        grid = _common_grid(parts)
        for part in parts:
            _require_rank(part, Rank.SCALAR)
        coeffs = np.concatenate([p.coeffs for p in parts])
        return cls(grid, Rank.from_components(len(parts)), coeffs)

    def component(self, index: int) -> "SpectralField":
        return SpectralField(self.grid, Rank.SCALAR, self.coeffs[index : index + 1])

    def physical(self) -> np.ndarray:
        return to_physical(self)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, self.rank, coeffs)

    def hermitian_defect(self) -> float:
        """Largest |c(xi) - conj(c(-xi))| over all modes and components."""
        mirrored = np.roll(np.flip(self.coeffs, axis=(1, 2)), 1, axis=(1, 2))
        return float(np.max(np.abs(self.coeffs - np.conj(mirrored)), initial=0.0))

    def _binary(self, other: "SpectralField", op) -> "SpectralField":
        if not isinstance(other, SpectralField):
            return NotImplemented
        _check_same_grid(self, other)
        if self.rank is not other.rank:
            raise RankError(f"cannot combine {self.rank.name} with {other.rank.name}")
        return self.with_coeffs(op(self.coeffs, other.coeffs))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar: float):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return self.with_coeffs(self.coeffs / scalar)


def _check_same_grid(*fields: SpectralField) -> None:
    grids = {f.grid for f in fields}
    if len(grids) > 1:
        raise GridMismatchError(f"fields live on different grids: {sorted(g.nx for g in grids)}")


def _common_grid(fields: Sequence[SpectralField]) -> Grid2D:
    if not fields:
        raise RankError("at least one field is required")
    _check_same_grid(*fields)
    return fields[0].grid


def _require_rank(f: SpectralField, *ranks: Rank) -> None:
    if f.rank not in ranks:
        names = "/".join(r.name for r in ranks)
        raise RankError(f"expected a {names} field, got {f.rank.name}")


def _warn_zero_mode(operator: str, f: SpectralField) -> None:
    if operator in _warned_zero_modes:
        return
    if np.max(np.abs(f.coeffs[:, 0, 0])) > 1e-14:
        _warned_zero_modes.add(operator)
        logging.warning(f"{operator}: nonzero mean dropped by the inverse Laplacian")


def sum_fields(fields: Iterable[SpectralField], grid: Grid2D, rank: Rank) -> SpectralField:
    """Sum of an iterable of fields, zero when empty."""
    total = np.zeros((rank.components, grid.nx, grid.ny), np.complex128)
    for f in fields:
        _require_rank(f, rank)
        total += f.coeffs
    return SpectralField(grid, rank, total)


# -- transforms -------------------------------------------------------------------------


def to_spectral(
    values: np.ndarray, grid: Optional[Grid2D] = None, rank: Optional[Rank] = None
) -> SpectralField:
    """Fourier coefficients of physical grid values of shape (n, n) or (c, n, n)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[None]
    if grid is None:
        grid = Grid2D(values.shape[-2], values.shape[-1])
    if values.shape[-2:] != (grid.nx, grid.ny):
        raise GridMismatchError(f"values of shape {values.shape[-2:]} do not match grid {grid.nx}")
    if rank is None:
        rank = Rank.from_components(values.shape[0])
    coeffs = np.fft.fft2(values, axes=(1, 2)) / (grid.nx * grid.ny)
    return SpectralField(grid, rank, coeffs)


def to_physical(f: SpectralField) -> np.ndarray:
    """Physical grid values, array of shape (components, n, n)."""
    n = f.grid.nx * f.grid.ny
    return np.fft.ifft2(f.coeffs, axes=(1, 2)).real * n


def random_field(
    grid: Grid2D,
    rank: Rank,
    rng: np.random.Generator,
    bandwidth: Optional[int] = None,
    zero_mean: bool = False,
) -> SpectralField:
    """Band-limited random real field; modes with |xi_i| >= bandwidth are zero."""
    values = rng.standard_normal((rank.components, grid.nx, grid.ny))
    f = to_spectral(values, grid, rank)
    mask = grid.band_mask(bandwidth if bandwidth is not None else grid.nx // 2)
    coeffs = f.coeffs * mask
    if zero_mean:
        coeffs[:, 0, 0] = 0.0
    return f.with_coeffs(coeffs)


# -- products and norms -----------------------------------------------------------------


def scale(s: SpectralField, f: SpectralField) -> SpectralField:
    """Pointwise product of a scalar field with a field of any rank."""
    _require_rank(s, Rank.SCALAR)
    _check_same_grid(s, f)
    return to_spectral(to_physical(s) * to_physical(f), f.grid, f.rank)


def sym_product(a: SpectralField, b: SpectralField) -> SpectralField:
    """Symmetric product a (.) b = (a (x) b + b (x) a) / 2 of two vector fields."""
    _require_rank(a, Rank.VECTOR)
    _require_rank(b, Rank.VECTOR)
    _check_same_grid(a, b)
    pa, pb = to_physical(a), to_physical(b)
    values = np.stack(
        [pa[0] * pb[0], pa[1] * pb[1], 0.5 * (pa[0] * pb[1] + pa[1] * pb[0])]
    )
    return to_spectral(values, a.grid, Rank.SYMTENSOR)


def pointwise_magnitude(values: np.ndarray, rank: Rank) -> np.ndarray:
    """Euclidean (vector) or Frobenius (symmetric tensor) magnitude of physical values."""
    if rank is Rank.SCALAR:
        return np.abs(values[0])
    if rank is Rank.VECTOR:
        return np.hypot(values[0], values[1])
    return np.sqrt(values[0] ** 2 + values[1] ** 2 + 2.0 * values[2] ** 2)


def sup_norm(f: SpectralField) -> float:
    """Grid maximum of the pointwise magnitude."""
    return float(np.max(pointwise_magnitude(to_physical(f), f.rank)))


def lp_norm(f: SpectralField, p: float) -> float:
    """Grid quadrature of the L^p norm on the torus; p = inf gives the sup norm."""
    if math.isinf(p):
        return sup_norm(f)
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    mag = pointwise_magnitude(to_physical(f), f.rank)
    return float((np.sum(mag**p) * f.grid.cell_area) ** (1.0 / p))


def derivative_sup_norm(f: SpectralField, order: int) -> float:
    """max over components and multi-indices |a| = order of sup |d^a f|."""
    if order == 0:
        return float(np.max(np.abs(to_physical(f))))
    k1, k2 = f.grid.wavenumbers
    best = 0.0
    for a in range(order + 1):
        symbol = (1j * k1) ** a * (1j * k2) ** (order - a)
        values = to_physical(f.with_coeffs(f.coeffs * symbol))
        best = max(best, float(np.max(np.abs(values))))
    return best


# -- differential operators -------------------------------------------------------------


def grad(f: SpectralField) -> SpectralField:
    """Gradient of a scalar field."""
    _require_rank(f, Rank.SCALAR)
    k1, k2 = f.grid.wavenumbers
    c = f.coeffs[0]
    return SpectralField(f.grid, Rank.VECTOR, np.stack([1j * k1 * c, 1j * k2 * c]))


def div(f: SpectralField) -> SpectralField:
    """Divergence of a vector (to scalar) or row divergence of a symmetric tensor."""
    _require_rank(f, Rank.VECTOR, Rank.SYMTENSOR)
    k1, k2 = f.grid.wavenumbers
    c = f.coeffs
    if f.rank is Rank.VECTOR:
        return SpectralField(f.grid, Rank.SCALAR, (1j * k1 * c[0] + 1j * k2 * c[1])[None])
    rows = np.stack([1j * k1 * c[0] + 1j * k2 * c[2], 1j * k1 * c[2] + 1j * k2 * c[1]])
    return SpectralField(f.grid, Rank.VECTOR, rows)


def laplacian(f: SpectralField) -> SpectralField:
    return f.with_coeffs(-f.grid.ksq * f.coeffs)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """Delta^{-1} on mean-free data; the zero mode is sent to zero."""
    _warn_zero_mode("inverse_laplacian", f)
    return f.with_coeffs(-f.grid.inverse_ksq * f.coeffs)


def zero_mean(f: SpectralField) -> SpectralField:
    """P_{!=0}: remove the zero mode."""
    coeffs = np.array(f.coeffs)
    coeffs[:, 0, 0] = 0.0
    return f.with_coeffs(coeffs)


def sym_grad(f: SpectralField) -> SpectralField:
    """Symmetric gradient grad (.) f of a vector field."""
    _require_rank(f, Rank.VECTOR)
    k1, k2 = f.grid.wavenumbers
    c = f.coeffs
    t12 = 0.5 * (1j * k1 * c[1] + 1j * k2 * c[0])
    return SpectralField(f.grid, Rank.SYMTENSOR, np.stack([1j * k1 * c[0], 1j * k2 * c[1], t12]))


def identity_tensor(s: SpectralField) -> SpectralField:
    """The symmetric tensor s * Id."""
    _require_rank(s, Rank.SCALAR)
    c = s.coeffs[0]
    return SpectralField(s.grid, Rank.SYMTENSOR, np.stack([c, c, np.zeros_like(c)]))


def trace(t: SpectralField) -> SpectralField:
    _require_rank(t, Rank.SYMTENSOR)
    return SpectralField(t.grid, Rank.SCALAR, (t.coeffs[0] + t.coeffs[1])[None])


def trace_free(t: SpectralField) -> SpectralField:
    """T - (tr T / 2) Id."""
    return t - identity_tensor(trace(t)) * 0.5


def hessian_ratio(s: SpectralField) -> SpectralField:
    """grad (x) grad Delta^{-1} applied to a scalar; zero mode sent to zero."""
    _require_rank(s, Rank.SCALAR)
    k1, k2 = s.grid.wavenumbers
    inv = s.grid.inverse_ksq
    c = s.coeffs[0]
    return SpectralField(
        s.grid, Rank.SYMTENSOR, np.stack([k1 * k1 * inv * c, k2 * k2 * inv * c, k1 * k2 * inv * c])
    )


def leray_project(f: SpectralField) -> SpectralField:
    """Leray projection Id - xi (x) xi / |xi|^2; the zero mode passes through."""
    _require_rank(f, Rank.VECTOR)
    k1, k2 = f.grid.wavenumbers
    inv = f.grid.inverse_ksq
    c0, c1 = f.coeffs
    dot = (k1 * c0 + k2 * c1) * inv
    return f.with_coeffs(np.stack([c0 - k1 * dot, c1 - k2 * dot]))


def op_D(f: SpectralField) -> SpectralField:
    """2 grad(.)f - 2 (div f) Id."""
    return sym_grad(f) * 2.0 - identity_tensor(div(f)) * 2.0


def op_newD(f: SpectralField) -> SpectralField:
    """2 grad(.)f - (div f) Id; its divergence is the Laplacian."""
    return sym_grad(f) * 2.0 - identity_tensor(div(f))


def op_R(f: SpectralField) -> SpectralField:
    """Inverse divergence Delta^{-1} newD on vector fields."""
    _warn_zero_mode("op_R", f)
    t = op_newD(f)
    return t.with_coeffs(-f.grid.inverse_ksq * t.coeffs)


def op_Q(t: SpectralField) -> SpectralField:
    """2 Delta^{-1} grad(.) P div on symmetric tensors."""
    _require_rank(t, Rank.SYMTENSOR)
    inner = sym_grad(leray_project(div(t))) * 2.0
    return inner.with_coeffs(-t.grid.inverse_ksq * inner.coeffs)


def op_R1(s: SpectralField) -> SpectralField:
    """Delta^{-1} grad on scalars."""
    _require_rank(s, Rank.SCALAR)
    _warn_zero_mode("op_R1", s)
    g = grad(s)
    return g.with_coeffs(-s.grid.inverse_ksq * g.coeffs)


def heat_semigroup(f: SpectralField, t: float) -> SpectralField:
    """e^{t Delta} f, exact per mode."""
    if not t >= 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    if t == 0:
        return f
    return f.with_coeffs(np.exp(-f.grid.ksq * t) * f.coeffs)


# -- Littlewood-Paley -------------------------------------------------------------------


def smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, built from exp(-1/x)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        left = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        right = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return left / (left + right)


def lp_theta(r: np.ndarray) -> np.ndarray:
    """Radial profile equal to 1 on [0, 4/3] and 0 on [3/2, inf)."""
    return 1.0 - smooth_step((np.asarray(r) - LP_INNER) / (LP_OUTER - LP_INNER))


def lp_bump(r: np.ndarray) -> np.ndarray:
    """Shell bump psi(r) = theta(r) - theta(2r), supported in (2/3, 3/2)."""
    r = np.asarray(r, dtype=float)
    return lp_theta(r) - lp_theta(2.0 * r)


def is_dyadic(N: Union[int, float]) -> bool:
    if N < 1 or N != int(N):
        return False
    n = int(N)
    return n & (n - 1) == 0


def dyadic_shells(grid: Grid2D) -> List[int]:
    """Dyadic N = 1, 2, 4, ... whose shells together cover every grid mode."""
    top = float(np.max(grid.kmag))
    shells = [1]
    while LP_INNER * shells[-1] < top:
        shells.append(shells[-1] * 2)
    return shells


@lru_cache(maxsize=64)
def _lp_symbol(grid: Grid2D, N: int) -> np.ndarray:
    symbol = lp_bump(grid.kmag / N)
    symbol.setflags(write=False)
    return symbol


def littlewood_paley(f: SpectralField, N: int) -> SpectralField:
    """P_N f with symbol psi(|xi| / N)."""
    if not is_dyadic(N):
        raise DyadicError(f"Littlewood-Paley frequency must be a power of two, got {N}")
    return f.with_coeffs(f.coeffs * _lp_symbol(f.grid, int(N)))


# -- Duhamel kernel ---------------------------------------------------------------------


def duhamel_kernel(mu: np.ndarray, lam: Union[float, np.ndarray], t: float) -> np.ndarray:
    """Vectorised int_0^t exp(-mu (t - s)) exp(-lam s) ds."""
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.isnan(mu).any() or np.isnan(lam).any() or math.isnan(t):
        raise ValueError("Duhamel kernel arguments must not be NaN")
    if t < 0 or (mu < 0).any() or (lam < 0).any():
        raise ValueError("Duhamel kernel arguments must be nonnegative")
    gap = np.abs(mu - lam)
    low = np.minimum(mu, lam)
    x = gap * t
    series = t * (1.0 - x / 2.0 + x * x / 6.0 - x**3 / 24.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = -np.expm1(-x) / np.where(gap > 0, gap, 1.0)
    factor = np.where(x < KERNEL_SERIES_THRESHOLD, series, closed)
    return np.exp(-low * t) * factor


def duhamel_mode_integral(mu: float, lam: float, t: float) -> float:
    """int_0^t exp(-mu (t - s)) exp(-lam s) ds = (e^{-lam t} - e^{-mu t}) / (mu - lam)."""
    return float(duhamel_kernel(np.asarray(mu), lam, t))


def apply_multiplier(f: SpectralField, symbol: np.ndarray) -> SpectralField:
    """Multiply every component by a per-mode scalar symbol."""
    return f.with_coeffs(f.coeffs * symbol)

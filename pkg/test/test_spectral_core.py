"""
Tests for the Fourier field representation and the operator calculus
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from inverse_cascade.errors import DyadicError, GridMismatchError, RankError
from inverse_cascade.spectral_core import (
    Grid2D,
    Rank,
    SpectralField,
    div,
    duhamel_kernel,
    duhamel_mode_integral,
    dyadic_shells,
    grad,
    heat_semigroup,
    hessian_ratio,
    identity_tensor,
    inverse_laplacian,
    is_dyadic,
    laplacian,
    leray_project,
    littlewood_paley,
    lp_bump,
    lp_norm,
    lp_theta,
    op_newD,
    op_Q,
    op_R,
    op_R1,
    random_field,
    smooth_step,
    sum_fields,
    sup_norm,
    sym_grad,
    sym_product,
    to_physical,
    to_spectral,
    trace,
    trace_free,
    zero_mean,
)

GRID = Grid2D(64)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def relative(a: SpectralField, b: SpectralField) -> float:
    return sup_norm(a - b) / max(sup_norm(b), 1e-300)


def band_limited(rank: Rank, seed: int, mean_free: bool = True) -> SpectralField:
    return random_field(GRID, rank, np.random.default_rng(seed), bandwidth=GRID.nx // 4, zero_mean=mean_free)


class TestGrid2D:
    """Test grid construction and wavenumber tables."""

    @pytest.mark.parametrize("n", [3, 6, 100, 2])
    def test_rejects_bad_sizes(self, n):
        """Only powers of two from 4 upward are grids."""
        with pytest.raises(GridMismatchError):
            Grid2D(n)

    def test_rejects_rectangles(self):
        """Grids are square."""
        with pytest.raises(GridMismatchError):
            Grid2D(16, 32)

    def test_nyquist_wavenumber_is_zero(self):
        """The Nyquist row and column carry zero wavenumber."""
        k1, k2 = GRID.wavenumbers
        assert np.all(k1[GRID.nx // 2, :] == 0)
        assert np.all(k2[:, GRID.nx // 2] == 0)

    def test_max_active_frequency(self):
        """Anti-aliasing allows a quarter of the grid size."""
        assert Grid2D(512).max_active_frequency == 128

    def test_band_mask_excludes_high_modes(self):
        """band_mask keeps |xi_i| < bandwidth only."""
        mask = GRID.band_mask(3)
        assert mask.sum() == 5 * 5


class TestSpectralField:
    """Test field containers and transforms."""

    def test_transform_round_trip(self):
        """Physical values survive to_spectral then to_physical."""
        values = np.random.default_rng(0).standard_normal((2, 64, 64))
        f = to_spectral(values, GRID, Rank.VECTOR)
        np.testing.assert_allclose(to_physical(f), values, atol=1e-12)

    def test_coefficients_are_read_only(self):
        """Stored coefficients cannot be mutated in place."""
        f = SpectralField.zeros(GRID, Rank.SCALAR)
        with pytest.raises(ValueError):
            f.coeffs[0, 0, 0] = 1.0

    def test_wrong_shape_raises(self):
        """Component count must match the rank."""
        with pytest.raises(RankError):
            SpectralField(GRID, Rank.VECTOR, np.zeros((3, 64, 64)))

    def test_rank_mismatch_on_addition(self):
        """Scalars and vectors do not add."""
        with pytest.raises(RankError):
            SpectralField.zeros(GRID, Rank.SCALAR) + SpectralField.zeros(GRID, Rank.VECTOR)

    def test_grid_mismatch_on_addition(self):
        """Fields on different grids do not add."""
        with pytest.raises(GridMismatchError):
            SpectralField.zeros(GRID) + SpectralField.zeros(Grid2D(32))

    def test_from_components(self):
        """Rank is recovered from the component count."""
        assert Rank.from_components(3) is Rank.SYMTENSOR
        with pytest.raises(RankError):
            Rank.from_components(4)

    def test_random_field_is_real(self):
        """Random fields keep conjugate symmetry."""
        f = band_limited(Rank.SYMTENSOR, 5)
        assert f.hermitian_defect() < 1e-14

    def test_constant_and_stack(self):
        """Constant fields and stacked components agree."""
        f = SpectralField.constant(GRID, [1.0, -2.0])
        stacked = SpectralField.stack([f.component(0), f.component(1)])
        assert stacked.rank is Rank.VECTOR
        assert sup_norm(stacked - f) == 0.0

    def test_sum_fields_empty(self):
        """An empty sum is zero."""
        total = sum_fields([], GRID, Rank.VECTOR)
        assert sup_norm(total) == 0.0


class TestNorms:
    """Test grid norms."""

    def test_lp_norm_of_constant(self):
        """||1||_p is the torus area to the power 1/p."""
        one = SpectralField.constant(GRID, [1.0])
        assert lp_norm(one, 2.0) == pytest.approx(2.0 * math.pi, rel=1e-12)
        assert lp_norm(one, 1.0) == pytest.approx(4.0 * math.pi**2, rel=1e-12)
        assert lp_norm(one, math.inf) == pytest.approx(1.0)

    def test_lp_norm_rejects_nonpositive_p(self):
        """p must be positive."""
        with pytest.raises(ValueError):
            lp_norm(SpectralField.constant(GRID, [1.0]), 0.0)

    def test_sup_norm_of_vector(self):
        """Vector sup norm is the largest Euclidean magnitude."""
        assert sup_norm(SpectralField.constant(GRID, [3.0, 4.0])) == pytest.approx(5.0)

    def test_sup_norm_of_tensor_is_frobenius(self):
        """Symmetric tensors count the off-diagonal entry twice."""
        assert sup_norm(SpectralField.constant(GRID, [1.0, 1.0, 1.0])) == pytest.approx(2.0)


class TestOperatorIdentities:
    """Fuzz the operator identities on band-limited random fields."""

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_leray_projection_is_divergence_free(self, seed):
        """div P v = 0."""
        v = band_limited(Rank.VECTOR, seed)
        assert sup_norm(div(leray_project(v))) <= 1e-11 * sup_norm(grad(v.component(0)))

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_inverse_divergence_on_vectors(self, seed):
        """div R v = v on mean-free vector fields."""
        v = band_limited(Rank.VECTOR, seed)
        assert relative(div(op_R(v)), v) <= 1e-11

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_inverse_divergence_on_scalars(self, seed):
        """div R1 s = s on mean-free scalars."""
        s = band_limited(Rank.SCALAR, seed)
        assert relative(div(op_R1(s)), s) <= 1e-11

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_newD_divergence_is_laplacian(self, seed):
        """div newD f = Lap f."""
        f = band_limited(Rank.VECTOR, seed)
        assert relative(div(op_newD(f)), laplacian(f)) <= 1e-11

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_Q_inverts_projected_divergence(self, seed):
        """div Q T = P div T."""
        t = band_limited(Rank.SYMTENSOR, seed)
        assert relative(div(op_Q(t)), leray_project(div(t))) <= 1e-11

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_hessian_ratio_trace(self, seed):
        """tr(grad grad Lap^-1 s) = s on mean-free scalars."""
        s = band_limited(Rank.SCALAR, seed)
        assert relative(trace(hessian_ratio(s)), s) <= 1e-11

    def test_laplacian_inverse(self):
        """Lap^-1 Lap s = s on mean-free scalars."""
        s = band_limited(Rank.SCALAR, 11)
        assert relative(inverse_laplacian(laplacian(s)), s) <= 1e-12

    def test_trace_free(self):
        """trace_free removes the trace."""
        t = band_limited(Rank.SYMTENSOR, 3, mean_free=False)
        assert sup_norm(trace(trace_free(t))) <= 1e-12 * sup_norm(t)

    def test_symmetric_gradient_of_gradient(self):
        """grad (.) grad s has trace Lap s."""
        s = band_limited(Rank.SCALAR, 4)
        assert relative(trace(sym_grad(grad(s))), laplacian(s)) <= 1e-12

    def test_sym_product_is_symmetric(self):
        """a (.) b = b (.) a."""
        a = band_limited(Rank.VECTOR, 1)
        b = band_limited(Rank.VECTOR, 2)
        assert sup_norm(sym_product(a, b) - sym_product(b, a)) <= 1e-13

    def test_identity_tensor_trace(self):
        """tr(s Id) = 2 s."""
        s = band_limited(Rank.SCALAR, 8)
        assert relative(trace(identity_tensor(s)), s * 2.0) <= 1e-14

    def test_operator_rejects_wrong_rank(self):
        """grad needs a scalar."""
        with pytest.raises(RankError):
            grad(SpectralField.zeros(GRID, Rank.VECTOR))


class TestHeatSemigroup:
    """Test the exact heat flow."""

    @pytest.mark.parametrize("m,t", [(1, 0.1), (3, 0.01), (5, 1e-4)])
    def test_single_mode_decay(self, m, t):
        """sin(m x1) decays by exp(-m^2 t)."""
        x1, _ = GRID.coordinates
        f = to_spectral(np.sin(m * x1), GRID)
        expected = to_spectral(np.exp(-m * m * t) * np.sin(m * x1), GRID)
        assert sup_norm(heat_semigroup(f, t) - expected) <= 1e-13

    def test_zero_time_is_identity(self):
        """e^{0 Lap} f = f."""
        f = band_limited(Rank.VECTOR, 0)
        assert heat_semigroup(f, 0.0) is f

    def test_negative_time_raises(self):
        """Backward heat flow is rejected."""
        with pytest.raises(ValueError):
            heat_semigroup(SpectralField.zeros(GRID), -1.0)


class TestLittlewoodPaley:
    """Test the dyadic decomposition."""

    def test_profile_plateaus(self):
        """theta is 1 below 4/3 and 0 above 3/2."""
        assert lp_theta(np.array([0.0, 1.0, 4.0 / 3.0])).tolist() == [1.0, 1.0, 1.0]
        assert lp_theta(np.array([1.5, 2.0])).tolist() == [0.0, 0.0]

    def test_bump_support(self):
        """psi vanishes outside (2/3, 3/2)."""
        r = np.array([0.0, 0.5, 2.0 / 3.0, 1.5, 3.0])
        np.testing.assert_array_equal(lp_bump(r), np.zeros_like(r))
        assert lp_bump(np.array([1.0]))[0] == pytest.approx(1.0)

    def test_smooth_step_limits(self):
        """The step is 0 below 0 and 1 above 1."""
        np.testing.assert_array_equal(smooth_step(np.array([-1.0, 0.0, 1.0, 2.0])), [0.0, 0.0, 1.0, 1.0])
        assert smooth_step(np.array([0.5]))[0] == pytest.approx(0.5)

    @pytest.mark.parametrize("N,expected", [(1, True), (8, True), (6, False), (0.5, False), (2.0, True)])
    def test_is_dyadic(self, N, expected):
        """Dyadic means a power of two at least 1."""
        assert is_dyadic(N) is expected

    def test_non_dyadic_frequency_raises(self):
        """P_N needs a power of two."""
        with pytest.raises(DyadicError):
            littlewood_paley(SpectralField.zeros(GRID), 3)

    def test_shells_partition_mean_free_fields(self):
        """sum_N P_N f = f - mean f."""
        f = band_limited(Rank.SCALAR, 9, mean_free=False)
        shells = dyadic_shells(GRID)
        total = sum_fields((littlewood_paley(f, N) for N in shells), GRID, Rank.SCALAR)
        assert sup_norm(total - zero_mean(f)) <= 1e-12


class TestDuhamelKernel:
    """Test the per-mode Duhamel integral."""

    @pytest.mark.parametrize(
        "mu,lam,t",
        [(1.0, 2.0, 0.5), (400.0, 25.0, 1e-3), (7.0, 7.0, 0.3), (3.0, 3.0 + 1e-9, 2.0), (0.0, 5.0, 1.0)],
    )
    def test_matches_quadrature(self, mu, lam, t):
        """Closed form agrees with adaptive quadrature."""
        expected, _ = quad(lambda s: math.exp(-mu * (t - s)) * math.exp(-lam * s), 0.0, t, epsabs=0.0, epsrel=1e-13)
        assert duhamel_mode_integral(mu, lam, t) == pytest.approx(expected, rel=1e-10)

    def test_equal_rates(self):
        """mu == lam gives t e^{-mu t}."""
        assert duhamel_mode_integral(4.0, 4.0, 0.25) == pytest.approx(0.25 * math.exp(-1.0), rel=1e-14)

    def test_vectorised(self):
        """Arrays of mu are handled elementwise."""
        mu = np.array([0.0, 1.0, 10.0])
        out = duhamel_kernel(mu, 1.0, 1.0)
        assert out.shape == (3,)
        assert out[1] == pytest.approx(math.exp(-1.0))

    @pytest.mark.parametrize("mu,lam,t", [(-1.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, -1.0)])
    def test_negative_arguments_raise(self, mu, lam, t):
        """Rates and time must be nonnegative."""
        with pytest.raises(ValueError):
            duhamel_mode_integral(mu, lam, t)

    def test_nan_raises(self):
        """NaN inputs are rejected."""
        with pytest.raises(ValueError):
            duhamel_mode_integral(math.nan, 1.0, 1.0)

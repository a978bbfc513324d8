"""
Tests for the corrector: path norms, rescaling, the linear system and the Picard iteration
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from inverse_cascade.cascade import forced_residual
from inverse_cascade.corrector import (
    BackgroundPair,
    CorrectorInputs,
    CorrectorState,
    FieldPath,
    PathNormParams,
    RescaleParams,
    advance,
    coefficient_fields,
    corrector_residual,
    estimate_delta,
    holder_gradient_norm,
    picard_solve,
    product_bound_probe,
    resample,
    rescale,
    rescaling_symmetry,
    semigroup_apply,
    semigroup_bound_probe,
    x_norm,
)
from inverse_cascade.errors import GridOverflowError, OffLatticeError, StepCollapseError
from inverse_cascade.spectral_core import (
    Grid2D,
    Rank,
    SpectralField,
    div,
    heat_semigroup,
    leray_project,
    random_field,
    sup_norm,
    to_spectral,
)

# coarse time grid: 15 nodes from 1e-2 to 1
FAST = PathNormParams(t_min_ratio=1e-2, nodes_per_octave=2)


def relative(a: SpectralField, b: SpectralField) -> float:
    return sup_norm(a - b) / sup_norm(b)


class TestPathNormParams:
    """Test the path norm weights and their time grid."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kappa": 0.06},
            {"alpha": 0.2},
            {"epsilon": 0.05},
            {"tbar": 0.0},
            {"t_min_ratio": 1.0},
            {"nodes_per_octave": 0},
        ],
    )
    def test_invalid(self, kwargs):
        """Weights outside their admissible ranges are rejected."""
        with pytest.raises(ValueError):
            PathNormParams(**kwargs)

    def test_time_nodes(self):
        """Geometric nodes ending at tbar."""
        nodes = FAST.time_nodes()
        assert len(nodes) == 15
        assert nodes[-1] == pytest.approx(1.0)
        assert nodes[0] <= 1e-2
        np.testing.assert_allclose(nodes[1:] / nodes[:-1], math.sqrt(2.0))


class TestFieldPath:
    """Test sampled field families."""

    def test_interpolation(self):
        """Linear in time between nodes, held after the last one."""
        grid = Grid2D(8)
        path = FieldPath([1.0, 2.0], [SpectralField.constant(grid, [1.0]), SpectralField.constant(grid, [3.0])])
        assert sup_norm(path.at(1.5)) == pytest.approx(2.0)
        assert sup_norm(path.at(5.0)) == pytest.approx(3.0)

    def test_before_first_node(self):
        """Either ramps up from zero or holds the first value."""
        grid = Grid2D(8)
        values = [SpectralField.constant(grid, [2.0])]
        assert sup_norm(FieldPath([1.0], values).at(0.25)) == pytest.approx(0.5)
        assert sup_norm(FieldPath([1.0], values, zero_at_origin=False).at(0.25)) == pytest.approx(2.0)

    @pytest.mark.parametrize("times", [[1.0, 1.0], [2.0, 1.0], [0.0, 1.0]])
    def test_bad_times(self, times):
        """Times must be positive and strictly increasing."""
        grid = Grid2D(8)
        with pytest.raises(ValueError):
            FieldPath(times, [SpectralField.zeros(grid)] * 2)

    def test_length_mismatch(self):
        """One value per time."""
        with pytest.raises(ValueError):
            FieldPath([1.0, 2.0], [SpectralField.zeros(Grid2D(8))])

    def test_arithmetic(self):
        """Paths subtract and scale node by node."""
        grid = Grid2D(8)
        a = FieldPath([1.0], [SpectralField.constant(grid, [3.0])])
        b = FieldPath([1.0], [SpectralField.constant(grid, [1.0])])
        assert sup_norm((a - b).values[0]) == pytest.approx(2.0)
        assert sup_norm((2.0 * a).values[0]) == pytest.approx(6.0)

    def test_zeros(self):
        """zeros() keeps rank and grid."""
        path = FieldPath.zeros(FAST.time_nodes(), Grid2D(8), Rank.SYMTENSOR)
        assert path.rank is Rank.SYMTENSOR
        assert path.grid.nx == 8


class TestNorms:
    """Test the X path norm."""

    def test_constant_has_no_gradient(self):
        """The Holder gradient norm of a constant vanishes."""
        assert holder_gradient_norm(SpectralField.constant(Grid2D(16), [1.0, 2.0]), 0.02) == pytest.approx(0.0, abs=1e-12)

    def test_zero_path(self):
        """The zero path has zero norm."""
        assert x_norm(FieldPath.zeros(FAST.time_nodes(), Grid2D(16), Rank.VECTOR), FAST) == 0.0

    def test_homogeneity(self):
        """The norm is absolutely homogeneous."""
        grid = Grid2D(16)
        f = random_field(grid, Rank.VECTOR, np.random.default_rng(0), bandwidth=4)
        path = FieldPath.sample(FAST.time_nodes(), lambda t: heat_semigroup(f, t))
        assert x_norm(path * -3.0, FAST) == pytest.approx(3.0 * x_norm(path, FAST))


class TestRescale:
    """Test exact spectral rescaling."""

    def test_single_mode(self):
        """sin(x1) becomes 2 sin(2 x1)."""
        grid = Grid2D(32)
        x1, _ = grid.coordinates
        up = rescale(to_spectral(np.sin(x1), grid), 2)
        np.testing.assert_allclose(up.physical()[0], 2.0 * np.sin(2.0 * x1), atol=1e-12)

    def test_up_then_down(self):
        """Rescaling down undoes rescaling up."""
        grid = Grid2D(64)
        f = random_field(grid, Rank.VECTOR, np.random.default_rng(1), bandwidth=6)
        assert relative(rescale(rescale(f, 3, power=2), 3, "down", power=2), f) <= 1e-12

    def test_identity(self):
        """n0 = 1 returns the field itself."""
        f = SpectralField.constant(Grid2D(8), [1.0])
        assert rescale(f, 1) is f

    @pytest.mark.parametrize("n0", [0, 1.5, -2])
    def test_invalid_factor(self, n0):
        """Factors must be positive integers."""
        with pytest.raises(OffLatticeError):
            rescale(SpectralField.constant(Grid2D(8), [1.0]), n0)

    def test_off_lattice(self):
        """Odd modes cannot be rescaled down by 2."""
        grid = Grid2D(32)
        x1, _ = grid.coordinates
        with pytest.raises(OffLatticeError):
            rescale(to_spectral(np.sin(3.0 * x1), grid), 2, "down")

    def test_overflow(self):
        """Modes pushed past the Nyquist band are refused."""
        grid = Grid2D(16)
        x1, _ = grid.coordinates
        with pytest.raises(GridOverflowError):
            rescale(to_spectral(np.sin(5.0 * x1), grid), 2)

    def test_bad_direction(self):
        """Only up and down."""
        with pytest.raises(ValueError):
            rescale(SpectralField.constant(Grid2D(8), [1.0]), 2, "sideways")

    def test_time_arguments(self):
        """Time arguments scale by N0^2."""
        params = RescaleParams(n0=3, t_star=0.5)
        assert params.time(1.0) == 9.0
        assert params.time(9.0, "down") == 1.0
        assert params.physical_time(1.0) == 1.5

    def test_resample(self):
        """Zero padding and restriction keep a band-limited field."""
        small, large = Grid2D(16), Grid2D(64)
        f = random_field(small, Rank.SCALAR, np.random.default_rng(2), bandwidth=6)
        padded = resample(f, large)
        assert padded.grid == large
        assert sup_norm(padded) == pytest.approx(sup_norm(f), rel=0.5)
        assert relative(resample(padded, small), f) <= 1e-12
        assert resample(f, small) is f

    def test_symmetry_of_forced_system(self):
        """The residual of the rescaled triple is lam^3 times the reindexed residual."""
        grid = Grid2D(64)
        rng = np.random.default_rng(3)
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
        assert gaps["velocity"] <= 1e-10
        assert gaps["scalar"] <= 1e-10


class TestBackground:
    """Test the explicit background pair."""

    def test_exact_solution(self):
        """(U, H) solves the unforced system."""
        grid = Grid2D(16)
        bg = BackgroundPair()
        zero_u = SpectralField.zeros(grid, Rank.SYMTENSOR)
        zero_b = SpectralField.zeros(grid, Rank.VECTOR)
        residual = forced_residual(
            lambda t: bg.fields(grid, t)[0], lambda t: bg.fields(grid, t)[1], zero_u, zero_b, 0.1, 1e-3
        )
        assert residual.velocity.relative <= 1e-8
        assert residual.scalar.relative <= 1e-8

    def test_values(self):
        """Amplitude and decay at t = 1."""
        grid = Grid2D(16)
        U, H = BackgroundPair(amplitude=0.2).fields(grid, 1.0)
        assert sup_norm(U) == pytest.approx(0.2 * math.sqrt(2.0) * math.exp(-1.0), rel=1e-12)
        assert sup_norm(H) == pytest.approx(0.4 * math.exp(-1.0), rel=1e-12)

    def test_rescaled(self):
        """The 1/N0 rescaling of wavenumber 2 is a wavenumber 1 pair of half the amplitude."""
        grid = Grid2D(16)
        U2, H2 = BackgroundPair(amplitude=0.2, wavenumber=2, n0=2).fields(grid, 0.3)
        U1, H1 = BackgroundPair(amplitude=0.1, wavenumber=1).fields(grid, 0.3)
        assert relative(U2, U1) <= 1e-12
        assert relative(H2, H1) <= 1e-12

    def test_rescaled_off_lattice(self):
        """Wavenumber 1 cannot be rescaled down by 2."""
        with pytest.raises(OffLatticeError):
            BackgroundPair(wavenumber=1, n0=2).fields(Grid2D(16), 0.0)

    def test_constant(self):
        """C_{U,H} is attained at order zero: a + 2a."""
        assert BackgroundPair(amplitude=0.2).constant(Grid2D(16), orders=3) == pytest.approx(0.6, rel=1e-12)


class TestLinearSystem:
    """Test the semigroup of the linearized system."""

    def test_pure_heat_flow(self):
        """Without coefficients the semigroup is the heat flow of the divergence."""
        grid = Grid2D(16)
        rng = np.random.default_rng(4)
        phi_u = random_field(grid, Rank.SYMTENSOR, rng, bandwidth=4)
        phi_b = random_field(grid, Rank.VECTOR, rng, bandwidth=4)
        inputs = CorrectorInputs.zeros(grid, FAST.time_nodes())
        coefficients = coefficient_fields(inputs, BackgroundPair(amplitude=0.0))
        W, Z = semigroup_apply(phi_u, phi_b, coefficients, 0.1, 0.3)
        assert relative(W, heat_semigroup(leray_project(div(phi_u)), 0.2)) <= 1e-12
        assert relative(Z, heat_semigroup(div(phi_b), 0.2)) <= 1e-12

    @pytest.mark.parametrize("t_prime,t", [(0.0, 1.0), (0.5, 0.25), (-1.0, 1.0)])
    def test_invalid_times(self, t_prime, t):
        """Need 0 < t' <= t."""
        grid = Grid2D(8)
        coefficients = coefficient_fields(CorrectorInputs.zeros(grid, FAST.time_nodes()), BackgroundPair())
        with pytest.raises(ValueError):
            semigroup_apply(SpectralField.zeros(grid, Rank.SYMTENSOR), SpectralField.zeros(grid, Rank.VECTOR), coefficients, t_prime, t)

    def test_step_collapse(self):
        """Large coefficients exhaust the step budget."""
        grid = Grid2D(16)
        coefficients = coefficient_fields(CorrectorInputs.zeros(grid, FAST.time_nodes()), BackgroundPair(amplitude=100.0))
        W, Z = SpectralField.zeros(grid, Rank.VECTOR), SpectralField.zeros(grid)
        with pytest.raises(StepCollapseError):
            advance(W, Z, 0.0, 1.0, coefficients, lambda s: None, max_steps=10)

    def test_semigroup_probe(self):
        """The implied constant is finite and positive."""
        grid = Grid2D(16)
        times = FAST.time_nodes()
        coefficients = coefficient_fields(CorrectorInputs.zeros(grid, times), BackgroundPair())
        pairs = [(float(times[0]), float(times[7])), (float(times[7]), float(times[-1]))]
        result = semigroup_bound_probe(coefficients, FAST, np.random.default_rng(5), grid, pairs)
        assert result["pairs"] == 2.0
        assert 0 < result["min_constant"] <= result["constant"] < math.inf

    def test_product_probe(self):
        """Products of heat paths are bounded in Y by the X norms."""
        result = product_bound_probe(Grid2D(16), FAST, np.random.default_rng(6), samples=3)
        assert result["samples"] == 3.0
        assert 0 < result["mean"] <= result["constant"] < math.inf


def _forced_inputs(grid: Grid2D, times: np.ndarray) -> CorrectorInputs:
    rng = np.random.default_rng(7)
    f_u = random_field(grid, Rank.SYMTENSOR, rng, bandwidth=3)
    f_b = random_field(grid, Rank.VECTOR, rng, bandwidth=3)
    return CorrectorInputs.from_callables(
        grid,
        times,
        lambda t: SpectralField.zeros(grid, Rank.VECTOR),
        lambda t: SpectralField.zeros(grid),
        lambda t: (f_u, f_b),
    )


class TestPicard:
    """Test the fixed point iteration."""

    def test_zero_forcing(self):
        """With no forcing the corrector vanishes identically."""
        grid = Grid2D(16)
        inputs = CorrectorInputs.zeros(grid, FAST.time_nodes())
        state = picard_solve(inputs, BackgroundPair(), FAST, delta=1.0)
        assert state.x_norm == 0.0
        assert state.converged and state.accepted
        assert state.iterations == 1
        assert state.contraction == 0.0

    def test_dry_run_without_forcing(self):
        """No drive gives the default delta."""
        grid = Grid2D(16)
        assert estimate_delta(CorrectorInputs.zeros(grid, FAST.time_nodes()), BackgroundPair(), FAST) == 1.0

    def test_calibrated_solve(self):
        """The first update equals delta / 2 and the iteration contracts to tolerance."""
        grid = Grid2D(16)
        inputs = _forced_inputs(grid, FAST.time_nodes())
        delta = 1e-4
        state = picard_solve(inputs, BackgroundPair(), FAST, delta=delta, calibrate=True)
        assert state.updates[0] == pytest.approx(delta / 2.0, rel=1e-10)
        assert state.converged
        assert state.residual < 1e-8
        assert state.contraction < 1.0
        assert state.x_norm <= delta
        rows = state.history_rows()
        assert rows[0]["iter"] == 1 and math.isnan(rows[0]["rho"])

    def test_residual_needs_interior_node(self):
        """The equation residual is evaluated at interior nodes only."""
        grid = Grid2D(16)
        times = FAST.time_nodes()
        inputs = CorrectorInputs.zeros(grid, times)
        state = picard_solve(inputs, BackgroundPair(), FAST, delta=1.0)
        with pytest.raises(ValueError):
            corrector_residual(state, inputs, BackgroundPair(), FAST, 0)
        with pytest.raises(ValueError):
            corrector_residual(state, inputs, BackgroundPair(), FAST, len(times) - 1)
        result = corrector_residual(state, inputs, BackgroundPair(), FAST, 7)
        assert result["t"] == pytest.approx(times[7])
        assert math.isfinite(result["velocity"]) and math.isfinite(result["scalar"])

    @pytest.mark.parametrize("index", [3, 7, 11])
    def test_residual_of_background(self, index):
        """Without forcing w = 0 and the exact background leaves only roundoff."""
        grid = Grid2D(16)
        inputs = CorrectorInputs.zeros(grid, FAST.time_nodes())
        state = picard_solve(inputs, BackgroundPair(), FAST, delta=1.0)
        result = corrector_residual(state, inputs, BackgroundPair(), FAST, index)
        assert result["velocity"] <= 1e-10
        assert result["scalar"] <= 1e-10
        assert result["node_gap"] <= 1e-10

    def test_residual_detects_wrong_node(self):
        """A stored value that does not follow the evolution leaves a residual above 1e-4."""
        grid = Grid2D(16)
        times = FAST.time_nodes()
        inputs = CorrectorInputs.zeros(grid, times)
        state = picard_solve(inputs, BackgroundPair(), FAST, delta=1.0)
        bump = leray_project(random_field(grid, Rank.VECTOR, np.random.default_rng(3), bandwidth=3, zero_mean=True))
        bump = bump * (1e-3 / sup_norm(bump))
        values = list(state.w.values)
        values[7] = values[7] + bump
        perturbed = replace(state, w=FieldPath(times, values))
        result = corrector_residual(perturbed, inputs, BackgroundPair(), FAST, 7)
        assert result["velocity"] > 1e-4
        assert result["node_gap"] > 1e-4


class TestCorrectorState:
    """Test the bookkeeping of a solve."""

    def test_ratios(self):
        """Ratios of successive updates."""
        grid = Grid2D(8)
        path = FieldPath.zeros([1.0], grid, Rank.VECTOR)
        state = CorrectorState(path, path, 0.1, 1.0, 3, [1.0, 0.5, 0.125], converged=True)
        assert state.ratios == [0.5, 0.25]
        assert state.contraction == 0.5
        assert state.residual == 0.125
        assert state.accepted

    def test_not_accepted_above_delta(self):
        """A corrector larger than delta is rejected."""
        grid = Grid2D(8)
        path = FieldPath.zeros([1.0], grid, Rank.VECTOR)
        state = CorrectorState(path, path, 2.0, 1.0, 1, [1e-9], converged=True)
        assert not state.accepted

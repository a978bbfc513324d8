"""
Tests for the level-by-level cascade on a small ladder (A = 2, b = 1.5, K = 1, grid 256)
"""

import math

import numpy as np
import pytest

from inverse_cascade.cascade import (
    Cascade,
    ResidualStats,
    SeparationEntry,
    amplitude_identity_residuals,
    amplitudes_next,
    assemble_forcing,
    build_cascade,
    choose_c,
    consistency_residuals,
    curl,
    difference_probe,
    duhamel_fields,
    equation_residual,
    initial_amplitudes,
    leading_term_identity,
    level_frequencies,
    principal_fields,
    scale_separation_table,
    support_leakage,
)
from inverse_cascade.config import RunConfig
from inverse_cascade.errors import GridOverflowError
from inverse_cascade.geometry import DEFAULT_DIRECTIONS, EPSILON_U
from inverse_cascade.ladder import LadderParams, build_ladder
from inverse_cascade.spectral_core import Grid2D, Rank, div, grad, random_field, sup_norm

CERTIFIED = LadderParams(A=1e5, b=131072.0, K=6, mode="asymptotic")


class TestConstruction:
    """Test the levels and their ingredients."""

    def test_small_ladder(self, small_ladder):
        """Frequencies of the small ladder."""
        assert small_ladder.synthesis_frequency(1, 0) == 5
        assert small_ladder.N[(16, 0)] == 15
        assert small_ladder.N[(1, 1)] == 15
        assert small_ladder.N[(16, 1)] == 25

    def test_levels(self, small_cascade):
        """Levels 0..K are built in order."""
        assert isinstance(small_cascade, Cascade)
        assert small_cascade.K == 1
        assert [level.k for level in small_cascade.levels] == [0, 1]
        assert small_cascade.levels[0].cutoffs == {}
        assert set(small_cascade.levels[1].cutoffs) == set(range(1, 17))

    def test_initial_amplitudes(self, small_grid):
        """Only the first velocity amplitude is switched on at level 0."""
        amplitudes = initial_amplitudes(small_grid)
        assert np.all(amplitudes.values_u[1] == 1.0)
        assert all(not np.any(amplitudes.values_u[j]) for j in (2, 3, 4))
        assert all(not np.any(amplitudes.values_b[j]) for j in DEFAULT_DIRECTIONS.b_indices)
        assert amplitudes.sup() == 1.0

    def test_level_zero_potentials(self, small_cascade):
        """One shear potential and twelve tracer potentials at level 0."""
        potentials = small_cascade.levels[0].potentials
        assert set(potentials.profile_u) == {1}
        assert set(potentials.psi_b) == set(DEFAULT_DIRECTIONS.b_indices)
        assert potentials.profile_c == {}
        assert potentials.velocity_indices() == [1]
        assert sup_norm(potentials.psi_c(5)) == 0.0

    def test_frequencies(self, small_cascade, small_ladder):
        """Each level carries its synthesized frequencies."""
        assert small_cascade.levels[1].frequencies == level_frequencies(small_ladder, 1)

    def test_choose_c(self, small_cascade):
        """c is a power of two keeping Id + c S inside half the ball."""
        stresses = small_cascade.levels[0].stresses
        c = choose_c(stresses)
        assert c <= 1.0
        assert math.log2(c) == int(math.log2(c))
        assert c * stresses.ball_load() <= EPSILON_U / 2.0
        assert small_cascade.levels[1].amplitudes.c_small == c
        assert small_cascade.levels[1].amplitudes.margin > 0

    def test_too_many_levels(self, small_ladder, small_grid):
        """The cascade cannot go beyond the ladder."""
        with pytest.raises(ValueError):
            build_cascade(small_ladder, small_grid, levels=2)

    def test_grid_too_small(self, small_ladder):
        """The top level must fit the anti-aliasing margin."""
        with pytest.raises(GridOverflowError):
            build_cascade(small_ladder, Grid2D(64))

    def test_support_leakage(self, small_cascade):
        """Potentials of level 1 live in Omega_1 up to mollification."""
        level = small_cascade.levels[1]
        leakage = support_leakage(level, level.masks.omega)
        assert 0.0 <= leakage < 0.5


class TestIdentities:
    """Test the pointwise and differential identities of the construction."""

    def test_amplitude_identities(self, small_cascade):
        """Quadratic sums of amplitudes reproduce the level 0 stresses."""
        residuals = amplitude_identity_residuals(small_cascade.levels[0], small_cascade.levels[1].amplitudes)
        assert residuals["tensor_u"] <= 1e-10
        assert residuals["tensor_c"] <= 1e-10
        assert residuals["vector_b"] <= 1e-10
        assert residuals["curl"] >= 0.0

    @pytest.mark.parametrize("factor", [1.0, 0.5, 0.25])
    def test_tracer_identities_for_any_c(self, small_cascade, factor):
        """Id + c S_c and c^1/2 S_b are decomposed together, so the tracer identities do not depend on c."""
        level = small_cascade.levels[0]
        c = choose_c(level.stresses) * factor
        amplitudes = amplitudes_next(0, level.stresses, np.ones((level.grid.nx, level.grid.nx)), c=c)
        residuals = amplitude_identity_residuals(level, amplitudes)
        assert amplitudes.c_small == c
        assert residuals["tensor_u"] <= 1e-10
        assert residuals["tensor_c"] <= 1e-10
        assert residuals["vector_b"] <= 1e-10

    def test_principal_fields_divergence_free(self, small_cascade):
        """vbar is divergence free and the shear needs no projection."""
        fields = principal_fields(small_cascade.levels[0], 1e-3)
        assert sup_norm(div(fields.vbar)) <= 1e-11
        assert fields.leray_defect <= 1e-10 * max(1.0, sup_norm(fields.vbar))

    def test_consistency(self, small_cascade):
        """v = div R and h = div H for principal and Duhamel fields."""
        n = 25
        worst = consistency_residuals(small_cascade, [1.0 / n**2, 4.0 / 15**2])
        for name in ("vbar_div_Rbar", "hbar_div_Hbar", "v_div_R", "h_div_H"):
            assert worst[name] <= 1e-10, name
        assert worst["div_v"] <= 1e-11
        assert worst["div_vbar"] <= 1e-11

    def test_leading_terms(self, small_cascade):
        """Leading-term defects are finite relative sizes."""
        defects = leading_term_identity(small_cascade.levels[0], small_cascade.levels[1].amplitudes)
        assert set(defects) == {"tensor_u", "vector_b"}
        assert all(math.isfinite(value) and value >= 0 for value in defects.values())

    def test_curl_of_gradient(self, small_grid):
        """curl grad = 0."""
        s = random_field(small_grid, Rank.SCALAR, np.random.default_rng(0), bandwidth=8)
        assert sup_norm(curl(grad(s))) <= 1e-10 * sup_norm(grad(s))


class TestDuhamel:
    """Test the closed-form Duhamel fields."""

    def test_zero_time(self, small_cascade):
        """Nothing has accumulated at t = 0."""
        fields = duhamel_fields(small_cascade.levels[1], 0.0)
        assert sup_norm(fields.v) == 0.0
        assert sup_norm(fields.h) == 0.0

    def test_scalar_and_list_agree(self, small_cascade):
        """A single time gives the same fields as the matching list entry."""
        t = 1e-3
        single = duhamel_fields(small_cascade.levels[1], t)
        several = duhamel_fields(small_cascade.levels[1], [0.5 * t, t])
        assert len(several) == 2
        assert several[1].t == single.t
        np.testing.assert_allclose(several[1].v.coeffs, single.v.coeffs)
        np.testing.assert_allclose(several[1].H.coeffs, single.H.coeffs)

    def test_difference_probe(self, small_cascade):
        """One entry per Duhamel level, all finite."""
        report = difference_probe(small_cascade, 1e-3)
        assert set(report) == {0}
        assert set(report[0]) == {"v", "R", "H"}
        assert all(math.isfinite(value) and value >= 0 for value in report[0].values())

    def test_ranks(self, small_cascade):
        """v and H are vectors, h a scalar, R a symmetric tensor."""
        fields = duhamel_fields(small_cascade.levels[1], 1e-3)
        assert fields.v.rank is Rank.VECTOR
        assert fields.h.rank is Rank.SCALAR
        assert fields.R.rank is Rank.SYMTENSOR
        assert fields.H.rank is Rank.VECTOR


class TestSeparation:
    """Test the scale separation table."""

    def test_certified_ladder(self):
        """Diagonal entries approach 1/2, off-diagonal ones N_j' / N_j."""
        ladder = build_ladder(CERTIFIED)
        entries = scale_separation_table(ladder, 1, log_t=ladder.log_t[0])
        assert len(entries) == 16 * 17 // 2
        diagonal = [e.value for e in entries if e.j == e.jp]
        assert min(diagonal) >= 0.45
        assert max(diagonal) <= 0.5
        assert max(e.relative_error for e in entries if e.j != e.jp) <= 0.1

    def test_diagonal_cap_on_rate_ladder(self):
        """Frequencies near e^(1e11) keep the diagonal at or below 1/2 exactly."""
        ladder = build_ladder(RunConfig().rate_params())
        entries = scale_separation_table(ladder, 1, log_t=ladder.log_t[0])
        diagonal = [e for e in entries if e.j == e.jp]
        assert max(e.value for e in diagonal) <= 0.5
        top = max(diagonal, key=lambda e: ladder.log_N[(e.j, 1)][0])
        assert ladder.log_N[(top.j, 1)][0] > 1e10
        assert top.log_value == pytest.approx(math.log(0.5), abs=1e-15)

    def test_field_ladder(self, small_ladder):
        """Field ladders are accepted with a plain time."""
        entries = scale_separation_table(small_ladder, 1, small_ladder.t[0])
        assert all(0 < e.value <= 0.5 + 1e-12 for e in entries)

    def test_entry(self):
        """value, target and relative error follow the logs."""
        entry = SeparationEntry(2, 1, math.log(0.25), math.log(0.5))
        assert entry.value == pytest.approx(0.25)
        assert entry.target == pytest.approx(0.5)
        assert entry.relative_error == pytest.approx(-0.5)


class TestForcing:
    """Test the forcing and the residual of the forced system."""

    def test_forcing_parts(self, small_cascade):
        """The level splitting identity holds and the forcing has the right ranks."""
        forcing = assemble_forcing(small_cascade, 1.0 / 15**2)
        assert forcing.f_u.rank is Rank.SYMTENSOR
        assert forcing.f_b.rank is Rank.VECTOR
        assert set(forcing.parts_u) == {0}
        assert forcing.identity_defect <= 1e-10 * max(1.0, sup_norm(forcing.f_u))

    def test_equation_residual(self, small_cascade):
        """The forced system is solved up to time discretisation error."""
        t = 1.0 / 15**2
        dt = 0.02 / (2.0 * 25) ** 2
        residual = equation_residual(small_cascade, t, dt)
        assert residual.velocity.relative <= 1e-6
        assert residual.scalar.relative <= 1e-6
        assert residual.scalar.reference >= residual.velocity.scale
        assert residual.velocity.richardson_ratio == pytest.approx(4.0, abs=1.0)
        if not residual.scalar.at_roundoff:
            assert residual.scalar.richardson_ratio == pytest.approx(4.0, abs=1.0)

    def test_vanishing_scalar(self):
        """A tracer at roundoff is measured against the velocity scale and carries no order."""
        stats = ResidualStats(2.3059e-11, 2.3059e-11, 2.3059e-11, 2.7209e-11, floor=1.0)
        assert stats.reference == 1.0
        assert stats.relative == pytest.approx(2.3059e-11)
        assert stats.at_roundoff
        assert stats.richardson_ratio == pytest.approx(1.0)
        unfloored = ResidualStats(2.3059e-11, 2.3059e-11, 2.3059e-11, 2.7209e-11)
        assert unfloored.relative == pytest.approx(0.8475, rel=1e-3)
        assert not ResidualStats(4e-6, 1e-6, 1e-9, 1.0).at_roundoff

    @pytest.mark.parametrize("t,dt", [(1e-3, 0.0), (1e-3, 1e-3), (1e-3, 2e-3)])
    def test_invalid_step(self, small_cascade, t, dt):
        """dt must lie strictly between 0 and t."""
        with pytest.raises(ValueError):
            equation_residual(small_cascade, t, dt)

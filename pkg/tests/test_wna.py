import math
from dataclasses import replace

import numpy as np
import pytest

from qspattern import laplace
from qspattern.errors import DegenerateBifurcation, NoLocalBranch, NotBracketed
from qspattern.model import anchor_motility, default_params
from qspattern.series import q_table, s_table, w_table
from qspattern.wna import (
    amplitude_ode,
    branch_prediction,
    coefficient_b,
    compute_c20,
    compute_c22,
    compute_integrals,
    compute_mu,
    find_mu_crossing,
    wna_report,
)


def constant_D_report(params, g2_zero=False):
    """Context/tables with a flat motility profile at onset (q rows j >= 1 vanish)."""
    rep = wna_report(params)
    ctx = rep.context
    se = ctx.series
    D = np.zeros_like(se.D_coeffs)
    D[0] = se.D_coeffs[0]
    se2 = replace(se, D_coeffs=D, g2=0.0 if g2_zero else se.g2)
    ctx2 = replace(ctx, series=se2)
    return ctx2, q_table(se2, 4, 16)


class TestSecondOrderCoefficients:
    def test_c20_zero_when_sources_vanish(self, params):
        # flat motility kills (lam q[1,0] + q[0,2]); g''* = 0 kills the rest
        ctx2, q = constant_D_report(params, g2_zero=True)
        assert q.get(1, 0) == 0.0 and q.get(0, 2) == 0.0
        assert compute_c20(ctx2, q) == 0.0

    def test_c20_denominator_positive(self, report):
        se = report.context.series
        assert se.lam * report.context.beta - se.alpha0 * se.rho_star * se.g1 > 0.0

    def test_c22_constant_g_limit(self, params):
        # g'* -> 0 leaves only the curvature source over the doubled-mode balance
        rep = wna_report(params)
        se = replace(rep.context.series, g1=0.0)
        ctx = replace(rep.context, series=se)
        q = q_table(se, 4, 16)
        wt = w_table(se, 4, 16, k_multiplier=2)
        expected = (
            se.rho_star * se.g2 * wt.get(0, 1)
            / (4.0 * (4.0 * ctx.D_c * se.k**2 + ctx.beta))
        )
        assert compute_c22(ctx, q, wt) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("name", ["c20", "c22"])
    def test_quadrature_oracle_epsilon_trend(self, report, name):
        closed = getattr(report, name)
        fn = laplace.c20_quadrature if name == "c20" else laplace.c22_quadrature
        errs = [abs(fn(report.context, report.tables["q"], eps) - closed) for eps in (1e-3, 5e-4)]
        assert errs[1] < errs[0]
        assert 1.5 < errs[0] / errs[1] < 2.5


class TestOverlapIntegrals:
    def test_I0_flat_profile_reduction(self, params):
        ctx2, q = constant_D_report(params)
        se = ctx2.series
        w = w_table(se, 4, 16)
        s = s_table(se, q, 0.0, 4, 16)
        ints = compute_integrals(ctx2, q, w, s, 0.0)
        Q = se.D_coeffs[0] * se.k**2
        R = Q + se.lam
        assert ints["I0"] == pytest.approx(se.alpha0 * se.rho_star * se.g1 / R**2, rel=1e-12)

    def test_I0_positive_at_negative_onset_slope(self, report):
        assert report.D_prime_critical < 0.0
        assert report.I0 > 0.0

    def test_I2_negative(self, report):
        assert report.I2 < 0.0

    def test_insufficient_depth_names_entry(self, report):
        se = report.context.series
        q = q_table(se, 1, 6)
        w = w_table(se, 1, 6)
        s = s_table(se, q, report.c22, 1, 6)
        with pytest.raises(IndexError, match="s-table entry \\(j=2"):
            compute_integrals(report.context, q, w, s, report.c20)

    def test_quadrature_oracle_all_six(self, report):
        vals = {}
        for eps in (1e-3, 5e-4):
            vals[eps] = laplace.integrals_quadrature(
                report.context, report.tables, report.c20, report.c22, eps
            )
        for key, closed in report.integrals().items():
            e1 = abs(vals[1e-3][key] - closed)
            e2 = abs(vals[5e-4][key] - closed)
            assert 1.5 < e1 / e2 < 2.5, key


class TestMu:
    def test_all_zero_inputs_give_zero(self, report):
        ctx = replace(report.context, g3=0.0, series=replace(report.context.series, g2=0.0))
        ints = {"I2": report.I2, "I3": 0.0, "I4": 0.0, "I5": 0.0}
        assert compute_mu(ctx, 0.3, 0.1, ints) == 0.0

    def test_sign_sets_criticality(self, params, report):
        assert report.mu > 0.0
        assert report.criticality == "supercritical"
        p_low, _ = anchor_motility(params.with_rho_star(0.3))
        rep_low = wna_report(p_low)
        assert rep_low.mu < 0.0
        assert rep_low.criticality == "subcritical"

    def test_single_crossing_on_default_family(self, params):
        rho_c = find_mu_crossing(params, 0.3, 0.6)
        assert 0.33 < rho_c < 0.45
        with pytest.raises(NotBracketed):
            find_mu_crossing(params, 0.55, 0.75, n_scan=8)


class TestAmplitudeEquation:
    def test_zero_offset_zero_linear_rate(self, report):
        lin, _ = amplitude_ode(report, 0.0)
        assert lin == 0.0

    def test_linear_rate_opposes_offset(self, report):
        lin_m, _ = amplitude_ode(report, -0.1)
        lin_p, _ = amplitude_ode(report, +0.1)
        assert lin_m > 0.0 > lin_p

    def test_fixed_points_annihilate_rhs(self, report):
        lin, cub = amplitude_ode(report, -0.05)
        assert lin > 0.0 and cub < 0.0
        A = math.sqrt(-lin / cub)
        for sign in (+1.0, -1.0):
            rhs = lin * (sign * A) + cub * (sign * A) ** 3
            assert abs(rhs) < 1e-14 * lin * A


class TestBranchLaw:
    def test_amplitude_vanishes_at_onset(self, report):
        pred = branch_prediction(report, report.D_prime_critical)
        assert pred.amplitude == 0.0

    def test_delta_rho_is_twice_amplitude(self, report):
        pred = branch_prediction(report, report.D_prime_critical - 0.01)
        prof = pred.rho_profile(np.array([0.0, math.pi / report.k]))
        assert pred.delta_rho == pytest.approx(abs(prof[0] - prof[1]), rel=1e-14)

    def test_amplitude_squared_linear_in_offset(self, report):
        offs = np.array([1e-4, 2e-4, 4e-4])
        amps = np.array(
            [branch_prediction(report, report.D_prime_critical - o).amplitude for o in offs]
        )
        np.testing.assert_allclose(amps**2 / offs, amps[0] ** 2 / offs[0], rtol=1e-12)

    def test_wrong_side_raises(self, report):
        with pytest.raises(NoLocalBranch):
            branch_prediction(report, report.D_prime_critical + 0.01)

    def test_b_positive_and_consistent(self, report):
        b = coefficient_b(report)
        assert b > 0.0
        off = 3e-3
        pred = branch_prediction(report, report.D_prime_critical - off)
        assert b * math.sqrt(off) * report.context.series.rho_star == pytest.approx(
            pred.delta_rho, rel=1e-13
        )

    def test_degenerate_mu_rejected(self, report):
        broken = replace(report, mu=0.0)
        with pytest.raises(DegenerateBifurcation):
            coefficient_b(broken)
        with pytest.raises(DegenerateBifurcation):
            branch_prediction(broken, report.D_prime_critical - 0.01)


class TestIdentities:
    def test_adjoint_identity_epsilon_trend(self, report):
        gaps = [
            abs(laplace.adjoint_identity_gap(report.context, report.tables["q"], report.tables["w"], eps))
            for eps in (2e-3, 1e-3)
        ]
        scale = report.context.D_c * report.k**2 + report.context.beta
        assert gaps[0] < 0.05 * scale
        assert gaps[1] < 0.6 * gaps[0]

    def test_onset_balance_recovers_bifurcation(self, report):
        gaps = [
            abs(laplace.onset_balance_gap(report.context, report.tables["q"], eps))
            for eps in (2e-3, 1e-3)
        ]
        assert 1.7 < gaps[0] / gaps[1] < 2.3

    def test_second_order_solvability_trivial(self, params, report):
        mass_gap, adj_gap = laplace.second_order_solvability_gaps(
            report.context, report.tables, 1e-3, params
        )
        scale = report.context.series.rho_star
        assert abs(mass_gap) < 1e-10 * scale
        assert abs(adj_gap) < 1e-10 * scale


class TestReport:
    def test_to_dict_round_trip_fields(self, report):
        d = report.to_dict()
        for key in ("c20", "c22", "mu", "b", "D_prime_critical", "criticality", "I0", "I5"):
            assert key in d

    def test_linear_rate_matches_amplitude_ode(self, report):
        lin, _ = amplitude_ode(report, -0.07)
        assert lin == pytest.approx(report.linear_rate_per_dprime * (-0.07), rel=1e-12)

    def test_cubic_rate_grouping(self, report):
        assert report.cubic_rate == pytest.approx(-report.mu / (report.I0 + 1.0), rel=1e-14)

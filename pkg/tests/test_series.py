import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_context
from qspattern.series import (
    SeriesContext,
    eval_series,
    oracle_series,
    q_table,
    s_table,
    w_table,
)


def table_close(a, b, rtol=1e-10, atol=1e-14):
    """Entrywise comparison over the valid triangular region."""
    assert a.j_max == b.j_max and a.l_max == b.l_max
    for j in range(a.j_max + 1):
        ra, rb = a.row(j), b.row(j)
        np.testing.assert_allclose(ra, rb, rtol=rtol, atol=atol)


def constant_D_context(**kw) -> SeriesContext:
    D = np.zeros(8)
    D[0] = kw.pop("D0", 1.0)
    defaults = dict(k=0.5, D_coeffs=D, lam=1.0, rho_star=0.65, alpha0=1.0,
                    u_star=2.0, g1=0.4, g2=-0.2)
    defaults.update(kw)
    return SeriesContext(**defaults)


class TestDisplayedEntries:
    def test_q_first_entries(self, report):
        se = report.context.series
        q = report.tables["q"]
        assert q.get(0, 0) == 0.0
        expected = se.source_amp / (se.D_coeffs[0] * se.k**2 + se.lam)
        assert q.get(0, 1) == pytest.approx(expected, rel=1e-15)

    def test_w_first_entries(self, report):
        se = report.context.series
        w = report.tables["w"]
        D0k2 = se.D_coeffs[0] * se.k**2
        assert w.get(0, 0) == pytest.approx(se.alpha0 * se.u_star / D0k2, rel=1e-15)
        expected = (se.alpha0 - w.get(0, 0) * se.D_coeffs[1] * se.k**2) / (D0k2 + se.lam)
        assert w.get(0, 1) == pytest.approx(expected, rel=1e-14)

    def test_s_leading_zeros(self, report):
        s = report.tables["s"]
        assert s.get(0, 0) == 0.0
        assert s.get(0, 1) == 0.0


class TestStructure:
    def test_constant_motility_truncates_w_row(self):
        ctx = constant_D_context()
        w = w_table(ctx, 3, 12)
        assert np.all(w.row(0)[2:] == 0.0)

    def test_constant_motility_kills_higher_q_rows(self):
        # the j = 0 row is linear in (u - u*), so its second derivative and
        # every subsequent row vanish identically
        ctx = constant_D_context()
        q = q_table(ctx, 4, 14)
        assert q.get(0, 1) != 0.0
        for j in range(1, 5):
            assert np.all(q.row(j) == 0.0)

    def test_source_enters_only_first_column(self):
        # killing g'* removes the only inhomogeneity of the q hierarchy
        ctx = replace(constant_D_context(), g1=0.0)
        q = q_table(ctx, 3, 12)
        assert np.all(q.coeffs[~np.isnan(q.coeffs)] == 0.0)

    def test_constant_g_zero_s_row(self):
        ctx = replace(constant_D_context(), g1=0.0)
        q = q_table(ctx, 3, 12)
        s = s_table(ctx, q, 0.37, 3, 12)
        assert np.all(s.row(0) == 0.0)

    def test_doubling_source_doubles_q(self):
        ctx = constant_D_context()
        ctx2 = replace(ctx, rho_star=2.0 * ctx.rho_star)
        q1, q2 = q_table(ctx, 3, 12), q_table(ctx2, 3, 12)
        np.testing.assert_allclose(2.0 * q1.row(0), q2.row(0), rtol=1e-15)

    def test_invalid_region_masked(self, report):
        q = report.tables["q"]
        assert np.isnan(q.coeffs[1, q.l_max])
        with pytest.raises(IndexError, match="unavailable"):
            q.get(1, q.l_max)

    def test_depth_validation(self, report):
        with pytest.raises(ValueError, match="l_max"):
            q_table(report.context.series, 4, 8)

    def test_deep_tables_finite(self, report):
        se = report.context.series
        q = q_table(se, 8, 64)
        w = w_table(se, 8, 64)
        for j in range(9):
            assert np.all(np.isfinite(q.row(j)))
            assert np.all(np.isfinite(w.row(j)))


class TestOracleEquivalence:
    def test_twenty_random_draws(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            ctx = random_context(rng)
            c22 = float(rng.uniform(-1.0, 1.0))
            q = q_table(ctx, 4, 12)
            table_close(q, oracle_series("q", ctx, 4, 12))
            table_close(w_table(ctx, 3, 10), oracle_series("w", ctx, 3, 10))
            table_close(
                w_table(ctx, 3, 10, k_multiplier=2), oracle_series("wtilde", ctx, 3, 10)
            )
            table_close(
                s_table(ctx, q, c22, 4, 12), oracle_series("s", ctx, 4, 12, c22=c22)
            )

    def test_wtilde_equals_w_at_doubled_wavenumber(self):
        rng = np.random.default_rng(5)
        ctx = random_context(rng)
        wt = w_table(ctx, 3, 10, k_multiplier=2)
        w2k = w_table(replace(ctx, k=2.0 * ctx.k), 3, 10, k_multiplier=1)
        for j in range(4):
            np.testing.assert_array_equal(wt.row(j), w2k.row(j))

    def test_oracle_zero_inhomogeneity(self):
        rng = np.random.default_rng(9)
        ctx = replace(random_context(rng), g1=0.0)
        table = oracle_series("q", ctx, 3, 10)
        assert np.all(table.coeffs[~np.isnan(table.coeffs)] == 0.0)


class TestEvalSeries:
    def test_value_at_center_is_column_zero(self, report):
        q = report.tables["q"]
        eps = 2e-3
        expected = sum(eps**j * q.get(j, 0) for j in range(q.j_max + 1))
        got = float(eval_series(q, q.context.u_star, eps))
        assert got == pytest.approx(expected, rel=1e-14)

    def test_envelope_gaussian_decay(self, report):
        q = report.tables["q"]
        se = q.context
        eps = 1e-3
        width = math.sqrt(eps / se.lam)
        peak_arg = se.u_star + 0.35 * width
        far = se.u_star + 3.0 * width
        v_far = float(eval_series(q, far, eps, envelope=True))
        plain_far = float(eval_series(q, far, eps))
        assert v_far == pytest.approx(plain_far * eps ** (-1.5) * math.exp(-4.5), rel=1e-12)

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_envelope_rejected_for_adjoint(self, report):
        with pytest.raises(ValueError):
            eval_series(report.tables["w"], 2.0, 1e-3, envelope=True)

    def test_derivative_matches_finite_difference(self, report):
        q = report.tables["q"]
        u0 = q.context.u_star + 0.08
        eps = 2e-3
        h = 1e-6
        for envelope in (False, True):
            fd = (
                float(eval_series(q, u0 + h, eps, envelope=envelope))
                - float(eval_series(q, u0 - h, eps, envelope=envelope))
            ) / (2 * h)
            an = float(eval_series(q, u0, eps, envelope=envelope, deriv=1))
            assert an == pytest.approx(fd, rel=1e-7)

    def test_divergence_warning_outside_radius(self, report):
        q = report.tables["q"]
        far = q.context.u_star + 1.6  # beyond the motility Taylor radius
        with pytest.warns(UserWarning, match="convergence radius"):
            eval_series(q, far, 1e-3)

    def test_matches_collocation_of_the_singular_ode(self, report):
        # Solve eps q'' - lam s q' - D0 k^2 q = -rho* g'* sqrt(lam^3/2pi) s
        # as a two-point BVP with boundary values from the series itself;
        # the truncated series at j <= 1 must agree to O(eps^2) inside.
        from scipy.integrate import solve_bvp

        se = report.context.series
        q = report.tables["q"]
        sb = 0.2
        diffs = []
        for eps in (1e-3, 2e-3):
            def rhs(s, y):
                Dk2 = np.polynomial.polynomial.polyval(s, se.D_coeffs) * se.k**2
                return np.vstack(
                    [y[1], (se.lam * s * y[1] + Dk2 * y[0] - se.source_amp * s) / eps]
                )

            def bc(ya, yb):
                left = float(eval_series(q, se.u_star - sb, eps, j_cutoff=1))
                right = float(eval_series(q, se.u_star + sb, eps, j_cutoff=1))
                return np.array([ya[0] - left, yb[0] - right])

            s_mesh = np.linspace(-sb, sb, 801)
            y0 = np.vstack([
                eval_series(q, se.u_star + s_mesh, eps, j_cutoff=1),
                eval_series(q, se.u_star + s_mesh, eps, j_cutoff=1, deriv=1),
            ])
            sol = solve_bvp(rhs, bc, s_mesh, y0, tol=1e-10, max_nodes=200000)
            assert sol.success
            interior = np.linspace(-0.15, 0.15, 41)
            series_vals = eval_series(q, se.u_star + interior, eps, j_cutoff=1)
            diffs.append(float(np.max(np.abs(sol.sol(interior)[0] - series_vals))))
        scale = abs(q.get(0, 1)) * 0.2
        assert diffs[0] < 50.0 * (1e-3) ** 2 * scale
        ratio = diffs[1] / diffs[0]
        assert 2.0 < ratio < 8.0  # consistent with an O(eps^2) truncation error

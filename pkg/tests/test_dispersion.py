import math

import numpy as np
import pytest

from qspattern.dispersion import (
    build_cubic,
    critical_Dprime,
    critical_slope_value,
    growth_rates,
    growth_spectrum,
    logistic_dispersion,
)
from qspattern.errors import ConfigError
from qspattern.model import anchor_motility, default_params, derivatives_of_g, solve_steady_state


def random_params(rng):
    base = default_params()
    p = base.with_rho_star(float(rng.uniform(0.4, 1.0)))
    p, _ = anchor_motility(p)
    return p.with_motility_slope(float(rng.uniform(-3.0, -0.5)))


class TestCubic:
    def test_monic(self, params, steady):
        cub = build_cubic(params, steady, params.wavenumber(1))
        assert cub.coefficients[0] == 1.0

    def test_uniform_mode_stable_under_margin(self, params, steady):
        # k = 0: the nontrivial factor is (sigma+beta)(sigma+lam) = alpha0 g'* rho*
        g1 = float(derivatives_of_g(params.production, steady.c_star, 1))
        G = params.alpha0 * g1 * params.rho_star
        roots = np.roots([1.0, params.beta + params.lam, params.beta * params.lam - G])
        assert np.all(roots.real < 0.0)

    def test_constant_coefficient_vanishes_at_onset(self, params, steady):
        k = params.wavenumber(1)
        dcrit = critical_Dprime(params, steady, k)
        cub = build_cubic(params.with_motility_slope(dcrit), steady, k)
        scale = abs(cub.coefficients[1]) + abs(cub.coefficients[2])
        assert abs(cub.coefficients[3]) < 1e-12 * scale
        # sigma = 0 is then a root
        assert abs(cub(0.0)) < 1e-12 * scale

    def test_roots_satisfy_rational_relation(self):
        rng = np.random.default_rng(7)
        for _ in range(12):
            p = random_params(rng)
            st = solve_steady_state(p)[0]
            cub = build_cubic(p, st, p.wavenumber(1))
            for z in cub.roots():
                assert abs(cub.rational_residual(z)) < 1e-9

    def test_roots_match_companion_matrix(self, params, steady):
        cub = build_cubic(params, steady, params.wavenumber(1))
        comp = np.sort_complex(np.linalg.eigvals(cub.companion()))
        mine = np.sort_complex(cub.roots())
        assert np.allclose(comp, mine, atol=1e-12, rtol=1e-12)

    def test_offgrid_wavenumber_warns(self, params, steady):
        with pytest.warns(UserWarning):
            build_cubic(params, steady, 0.3333 * math.pi / params.L)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            build_cubic(params, steady, 0.3333 * math.pi / params.L, allow_offgrid=True)


class TestGrowthRates:
    def test_unstable_past_critical(self, params, steady):
        k = params.wavenumber(1)
        dcrit = critical_Dprime(params, steady, k)
        _, roots = growth_rates(params.with_motility_slope(1.1 * dcrit), steady, k)
        assert roots[0].real > 0.0
        # a real positive eigenvalue, as the onset analysis demands
        assert abs(roots[0].imag) == 0.0

    def test_stable_above_critical(self, params, steady):
        k = params.wavenumber(1)
        dcrit = critical_Dprime(params, steady, k)
        _, roots = growth_rates(params.with_motility_slope(0.9 * dcrit), steady, k)
        assert roots[0].real < 0.0

    def test_first_mode_is_critical_near_onset(self, params, steady):
        k = params.wavenumber(1)
        dcrit = critical_Dprime(params, steady, k)
        spec = growth_spectrum(params.with_motility_slope(1.05 * dcrit), steady, range(0, 8))
        assert spec.critical_k == pytest.approx(k)
        # only the first mode is unstable this close to onset
        for kk, roots in spec.entries:
            if kk > k:
                assert np.max(roots.real) < 0.0


class TestCriticalSlope:
    def test_zero_when_bracket_vanishes(self):
        # (D_c k^2 + beta)(D0 k^2 + lam) = G makes the bracket vanish
        k = 0.7
        D0, u, D_c, beta, lam = 1.3, 2.0, 0.9, 1.1, 0.8
        G = (D_c * k**2 + beta) * (D0 * k**2 + lam)
        assert critical_slope_value(D0, u, D_c, beta, lam, G, k) == 0.0

    def test_negative_under_uniform_stability(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            p = random_params(rng)
            st = solve_steady_state(p)[0]
            assert critical_Dprime(p, st, p.wavenumber(1)) < 0.0

    def test_precondition_enforced(self, params):
        # concave production with a > 0 always satisfies the restriction at a
        # true base state, so exercise the guard with an off-balance state
        # where g' is steep enough to destabilize the uniform mode
        from qspattern.model import SteadyState

        fake = SteadyState(c_star=0.01, u_star=0.5, N=1.0)
        assert params.uniform_mode_margin(fake) < 0.0
        with pytest.raises(ConfigError):
            critical_Dprime(params, fake, params.wavenumber(1))

    def test_single_sign_change_of_constant_coefficient(self, params, steady):
        k = params.wavenumber(1)
        dcrit = critical_Dprime(params, steady, k)
        slopes = np.linspace(2.0 * dcrit, 0.5 * dcrit, 400)
        c0 = np.array(
            [build_cubic(params.with_motility_slope(s), steady, k).coefficients[3] for s in slopes]
        )
        changes = int(np.sum(c0[1:] * c0[:-1] < 0.0)) + int(np.sum(c0 == 0.0))
        assert changes == 1


class TestLogisticVariant:
    def test_reduces_to_base_cubic(self, params, steady):
        k = params.wavenumber(1)
        base = build_cubic(params, steady, k)
        log = logistic_dispersion(params, steady, k, r_star=0.0, rho_c=params.rho_star)
        assert np.allclose(base.coefficients, log.coefficients, rtol=1e-15)

    def test_rational_residual(self, params, steady):
        k = params.wavenumber(1)
        cub = logistic_dispersion(params, steady, k, r_star=0.35, rho_c=0.8)
        for z in cub.roots():
            assert abs(cub.rational_residual(z)) < 1e-9

    def test_zero_locus_moves_continuously_with_growth_rate(self, params, steady):
        # constant coefficient of the cubic at fixed slope, swept over r*
        k = params.wavenumber(1)
        r_values = np.linspace(0.0, 0.5, 21)
        c0 = np.array(
            [
                logistic_dispersion(params, steady, k, r_star=float(r), rho_c=params.rho_star).coefficients[3]
                for r in r_values
            ]
        )
        steps = np.abs(np.diff(c0))
        assert np.all(steps < 0.2 * (abs(c0[0]) + 1.0))
        assert np.all(np.diff(c0) > 0.0) or np.all(np.diff(c0) < 0.0)

    def test_negative_growth_rejected(self, params, steady):
        with pytest.raises(ConfigError):
            logistic_dispersion(params, steady, params.wavenumber(1), r_star=-1.0, rho_c=1.0)

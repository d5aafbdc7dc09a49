import math

import numpy as np
import pytest
import scipy.linalg as sla

from qspattern.dispersion import growth_rates
from qspattern.errors import NumericalError
from qspattern.pde import (
    Discretization,
    Field,
    SolverOptions,
    _bernoulli,
    _bernoulli_deriv,
    build_grid,
    observables,
)
from qspattern.wna import branch_prediction, wna_report


@pytest.fixture(scope="module")
def disc(params, steady):
    grid = build_grid(params, steady.u_star, nx=48)
    return Discretization(params, grid)


@pytest.fixture(scope="module")
def uniform(disc, steady):
    return disc.uniform_steady(steady)


class TestGrid:
    def test_faces_and_resolution(self, params, steady):
        g = build_grid(params, steady.u_star, nx=32, cells_per_width=14.0)
        assert g.u_faces[0] == 0.0
        assert np.all(np.diff(g.u_faces) > 0.0)
        w = params.gaussian_width()
        near_peak = np.abs(g.u_centers - steady.u_star) < 3.0 * w
        assert np.max(g.u_widths[near_peak]) <= w / 12.0
        assert g.u_max >= steady.u_star + 12.0 * w

    def test_nu_override(self, params, steady):
        g = build_grid(params, steady.u_star, nx=16, nu=120)
        assert g.nu == 120
        assert g.u_faces[0] == 0.0 and g.u_faces[-1] == g.u_max


class TestBernoulli:
    def test_reflection_identity(self):
        w = np.array([-30.0, -2.0, -1e-6, 0.0, 1e-6, 2.0, 30.0])
        np.testing.assert_allclose(_bernoulli(-w), _bernoulli(w) + w, rtol=1e-10, atol=1e-14)

    def test_series_matches_direct(self):
        w = np.array([1e-6, 5e-6])
        direct = w / np.expm1(w)
        np.testing.assert_allclose(_bernoulli(w), direct, rtol=1e-10)

    def test_derivative_matches_finite_difference(self):
        for w0 in (-3.0, -0.01, 0.02, 1.5, 20.0):
            h = 1e-6 * max(1.0, abs(w0))
            fd = (_bernoulli(np.array([w0 + h])) - _bernoulli(np.array([w0 - h]))) / (2 * h)
            assert _bernoulli_deriv(np.array([w0]))[0] == pytest.approx(fd[0], rel=1e-7)


class TestUniformState:
    def test_discrete_fixed_point(self, disc, uniform):
        res = disc.residual(uniform)
        assert np.max(np.abs(res)) < 1e-10 * disc.char_scale

    def test_mass_normalized(self, disc, uniform, params):
        assert uniform.mass() == pytest.approx(params.rho_star * params.L, rel=1e-13)

    def test_density_close_to_analytic_gaussian(self, disc, uniform, params, steady):
        g = disc.grid
        exact = steady.density(g.u_centers, params)
        # cell averages vs centre values agree to O(h^2) near the peak
        near = np.abs(g.u_centers - steady.u_star) < 2.0 * params.gaussian_width()
        rel = np.abs(uniform.n[0, near] - exact[near]) / exact[near].max()
        assert np.max(rel) < 2e-3


class TestJacobian:
    def test_matches_finite_differences(self, disc, uniform):
        rng = np.random.default_rng(11)
        fld = uniform.copy()
        fld.n *= 1.0 + 0.05 * rng.standard_normal(fld.n.shape)
        fld.c *= 1.0 + 0.05 * rng.standard_normal(fld.c.shape)
        J = disc.jacobian(fld)
        y0, F0 = fld.pack(), disc.residual(fld)
        for col in rng.choice(disc.grid.n_unknowns, 40, replace=False):
            h = 1e-7 * max(1.0, abs(y0[col]))
            yp = y0.copy()
            yp[col] += h
            fd = (disc.residual(Field.unpack(disc.grid, yp)) - F0) / h
            an = J[:, [col]].toarray().ravel()
            assert np.max(np.abs(fd - an)) < 1e-6 * max(1.0, np.max(np.abs(an)))

    def test_parameter_derivative_matches_fd(self, disc, uniform):
        rng = np.random.default_rng(3)
        fld = uniform.copy()
        fld.n *= 1.0 + 0.05 * rng.standard_normal(fld.n.shape)
        p0 = disc.params.motility.D_prime_star
        dp = 1e-6
        disc.set_motility_slope(p0 + dp)
        Fp = disc.residual(fld)
        disc.set_motility_slope(p0 - dp)
        Fm = disc.residual(fld)
        disc.set_motility_slope(p0)
        fd = (Fp - Fm) / (2 * dp)
        an = disc.parameter_derivative(fld)
        assert np.max(np.abs(fd - an)) < 1e-6 * max(1.0, np.max(np.abs(an)))

    def test_mass_row_annihilates_jacobian(self, disc, uniform):
        # volume-weighted sum of the n-rows vanishes: discrete conservation
        J = disc.jacobian(uniform)
        vols = disc._mass_row()
        left = vols @ J
        assert np.max(np.abs(left)) < 1e-10 * disc.char_scale


class TestSymmetry:
    def test_residual_commutes_with_reflection(self, disc, uniform):
        rng = np.random.default_rng(5)
        fld = uniform.copy()
        fld.n *= 1.0 + 0.1 * rng.standard_normal(fld.n.shape)
        fld.c *= 1.0 + 0.1 * rng.standard_normal(fld.c.shape)
        r1 = disc.residual(fld.reflected())
        nxnu = disc.grid.nx * disc.grid.nu
        direct = disc.residual(fld)
        reflected_resid = np.concatenate([
            direct[:nxnu].reshape(disc.grid.nx, disc.grid.nu)[::-1].ravel(),
            direct[nxnu:][::-1],
        ])
        # equal up to summation-order round-off of the stencil arithmetic
        np.testing.assert_allclose(r1, reflected_resid, atol=1e-12 * disc.char_scale)


class TestManufactured:
    @staticmethod
    def _manufactured(params, grid):
        L = params.L
        u_hat, sigma, c_bar = 3.2, 0.15, 2.0
        x = grid.x_centers
        u = grid.u_centers
        X, U = np.meshgrid(x, u, indexing="ij")
        amp = 1.0 + 0.3 * np.cos(math.pi * X / L)
        G = np.exp(-((U - u_hat) ** 2) / (2 * sigma**2))
        n = amp * G
        c = c_bar * (1.0 + 0.2 * np.cos(math.pi * x / L))

        k = math.pi / L
        d2x_n = -0.3 * k**2 * np.cos(k * X) * G
        dn_du = n * (-(U - u_hat) / sigma**2)
        d2n_du2 = n * (((U - u_hat) / sigma**2) ** 2 - 1.0 / sigma**2)
        f = params.production.g(c)[:, None] - params.lam * U
        div_fu = f * dn_du - params.lam * n
        Rn = params.D(u)[None, :] * d2x_n + params.epsilon * d2n_du2 - div_fu
        moment = np.sqrt(2 * math.pi) * sigma * u_hat * amp[:, 0] * (1.0 + 0.0)
        # exact first moment of the Gaussian in u times the x-amplitude
        moment = amp[:, 0] * np.sqrt(2 * math.pi) * sigma * u_hat
        Rc = -params.D_c * c_bar * 0.2 * k**2 * np.cos(k * x) - params.beta * c + params.alpha0 * moment
        return Field(grid, n, c), np.concatenate([Rn.ravel(), Rc])

    def test_second_order_convergence(self, params, steady):
        # volume-weighted L1 truncation error: pointwise consistency drops an
        # order where the graded spacing jumps, but those cells carry O(h)
        # measure, so the conservative scheme still converges at order 2
        errors = []
        for nx, nu in ((24, 140), (48, 280)):
            grid = build_grid(
                params, steady.u_star, nx=nx, nu=nu, cells_per_width=10.0, peak_halfwidths=12.0
            )
            d = Discretization(params, grid)
            fld, exact = self._manufactured(params, grid)
            vols = np.concatenate([grid.cell_volumes().ravel(), np.full(grid.nx, grid.dx)])
            err = float(np.sum(vols * np.abs(d.residual(fld) - exact)))
            errors.append(err)
        order = math.log2(errors[0] / errors[1])
        assert order >= 1.9

    def test_near_solution_residual_shrinks_quadratically(self, params, steady):
        norms = []
        for nx, nu in ((24, 120), (48, 240)):
            grid = build_grid(params, steady.u_star, nx=nx, nu=nu)
            d = Discretization(params, grid)
            n = np.broadcast_to(steady.density(grid.u_centers, params), (nx, nu)).copy()
            fld = Field(grid, n, np.full(nx, steady.c_star))
            vols = np.concatenate([grid.cell_volumes().ravel(), np.full(grid.nx, grid.dx)])
            norms.append(float(np.sum(vols * np.abs(d.residual(fld)))))
        assert norms[1] < norms[0] / 3.0


class TestTimeStepping:
    def test_uniform_state_is_fixed_point(self, disc, uniform):
        nxt = disc.step(uniform, SolverOptions(dt=1.0))
        rel = np.max(np.abs(nxt.n - uniform.n)) / np.max(uniform.n)
        assert rel < 1e-10

    def test_mass_conserved_100_steps(self, params, steady):
        grid = build_grid(params, steady.u_star, nx=16, cells_per_width=8.0)
        d = Discretization(params, grid)
        fld = d.uniform_steady(steady)
        fld.n *= 1.0 + 1e-3 * np.cos(math.pi * grid.x_centers / params.L)[:, None]
        m0 = fld.mass()
        opts = SolverOptions(dt=0.25)
        for _ in range(100):
            fld = d.step(fld, opts)
        assert abs(fld.mass() - m0) / m0 < 1e-12

    def test_growth_rate_matches_discrete_eigenvalue(self, disc, uniform, params):
        k = params.wavenumber(1)
        block = disc.mode_matrix(uniform, 1)
        lam_disc = float(np.max(sla.eigvals(block).real))
        fld = uniform.copy()
        fld.n += 1e-7 * np.cos(k * disc.grid.x_centers)[:, None] * uniform.n
        dt = 1.0
        opts = SolverOptions(dt=dt)
        cosx = np.cos(k * disc.grid.x_centers)
        amps = []
        for _ in range(25):
            fld = disc.step(fld, opts)
            amps.append(2.0 / disc.grid.nx * float(np.dot(fld.c - fld.c.mean(), cosx)))
        # implicit Euler amplifies by 1/(1 - sigma dt) per step exactly
        ratio = amps[-1] / amps[-2]
        sigma_measured = (1.0 - 1.0 / ratio) / dt
        assert sigma_measured == pytest.approx(lam_disc, rel=0.02)

    def test_imex_theta_matches_implicit_for_small_dt(self, disc, uniform):
        fld = uniform.copy()
        fld.n *= 1.0 + 1e-3 * np.cos(math.pi * disc.grid.x_centers / disc.params.L)[:, None]
        a = disc.step(fld, SolverOptions(dt=0.01, scheme="implicit-euler"))
        b = disc.step(fld, SolverOptions(dt=0.01, scheme="imex-theta", theta=1.0))
        m0 = fld.mass()
        assert abs(b.mass() - m0) / m0 < 1e-12
        assert np.max(np.abs(a.n - b.n)) < 1e-5 * np.max(fld.n)

    def test_options_validation(self):
        with pytest.raises(ValueError):
            SolverOptions(dt=-1.0)
        with pytest.raises(ValueError):
            SolverOptions(scheme="leapfrog")


class TestSpectra:
    def test_block_and_arpack_agree(self, disc, uniform):
        block = disc.mode_matrix(uniform, 1)
        lam_block = float(np.max(sla.eigvals(block).real))
        lam_full = disc.leading_pattern_eigenvalue(uniform)
        assert lam_full == pytest.approx(lam_block, abs=1e-9)

    def test_mode_matrix_requires_uniform(self, disc, uniform):
        fld = uniform.copy()
        fld.n[0] *= 1.5
        with pytest.raises(ValueError):
            disc.mode_matrix(fld, 1)


class TestNewtonSteady:
    def test_converges_from_exact_guess(self, disc, uniform):
        # count iterations via the tolerance: an exact guess returns unchanged
        sol = disc.newton_steady(uniform, max_iter=3)
        assert np.max(np.abs(sol.n - uniform.n)) < 1e-9 * np.max(uniform.n)

    @pytest.mark.slow
    def test_wna_seeded_pattern_state(self, params, steady, report):
        # seed with the predicted branch profile (critical mode shape at the
        # predicted amplitude) just past onset and compare the converged
        # order parameter with the local theory
        from qspattern.continuation import critical_mode, detect_bifurcation

        grid = build_grid(params, steady.u_star, nx=48)
        d = Discretization(params, grid)
        dcrit = report.D_prime_critical
        D_hat = detect_bifurcation(d, (1.2 * dcrit, 0.85 * dcrit))
        # the slope offset is measured from each description's own onset:
        # the finite-eps system bifurcates at D_hat, the leading-order
        # theory at dcrit, and the branch law is a function of the offset
        offset = 3e-3 * abs(dcrit)
        p = params.with_motility_slope(D_hat - offset)
        d.set_motility_slope(D_hat - offset)
        uni = d.uniform_steady(steady)
        pred = branch_prediction(report, dcrit - offset)
        phi = critical_mode(d, uni)
        amp = pred.delta_rho / (2.0 * params.rho_star)  # rho-mode amplitude of rho/rho*
        fld = Field.unpack(grid, uni.pack() + amp * phi, 0.0)
        sol = d.newton_steady(fld)
        obs = observables(sol)
        assert obs["delta_rho"] > 0.0
        assert obs["delta_rho"] == pytest.approx(pred.delta_rho, rel=0.20)
        # reflection maps the steady state to the mirror steady state
        mirrored = sol.reflected()
        assert np.max(np.abs(d.residual(mirrored))) < 10 * d.options.newton_tol * d.char_scale
        # internal-state slices near the boundary peak at g(c)/lam
        for ix in (0, grid.nx - 1):
            j_peak = int(np.argmax(sol.n[ix]))
            u_peak = grid.u_centers[j_peak]
            target = float(p.production.g(sol.c[ix])) / p.lam
            assert abs(u_peak - target) < 3.0 * p.gaussian_width()


class TestObservables:
    def test_uniform_flat(self, uniform):
        obs = observables(uniform)
        assert obs["delta_rho"] < 1e-12
        assert obs["mass"] == pytest.approx(uniform.mass(), rel=1e-15)

    def test_cosine_branch_delta_rho(self, disc, uniform, params):
        amp = 0.05
        fld = uniform.copy()
        fld.n *= 1.0 + amp * np.cos(math.pi * disc.grid.x_centers / params.L)[:, None]
        obs = observables(fld)
        assert obs["delta_rho"] == pytest.approx(2.0 * amp * params.rho_star, rel=1e-3)

    def test_rho_integrates_to_mass(self, disc, uniform, params):
        obs = observables(uniform)
        total = float(np.sum(obs["rho"]) * disc.grid.dx)
        assert total == pytest.approx(params.rho_star * params.L, rel=1e-13)

    def test_quadrature_variants_close(self, uniform):
        mid = observables(uniform, "midpoint")
        trap = observables(uniform, "trapezoid")
        simp = observables(uniform, "simpson")
        assert np.max(np.abs(mid["rho"] - trap["rho"])) < 5e-3 * np.max(mid["rho"])
        assert np.max(np.abs(mid["rho"] - simp["rho"])) < 5e-3 * np.max(mid["rho"])
        with pytest.raises(ValueError):
            observables(uniform, "riemann")

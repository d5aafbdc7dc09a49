"""Conservative finite-volume solver for the structured population model.

The governing equations are discretized on a tensor grid of cell-centred
finite volumes: x-cells are uniform on [0, L], u-cells are graded so the
Gaussian base state of width sqrt(eps/lam) is resolved by a prescribed
number of cells while the far field coarsens geometrically.  The
u-direction flux eps n_u - f(u, c) n uses exponential fitting
(Scharfetter-Gummel): with B(w) = w / (e^w - 1) and w = f delta / eps the
face flux reads (eps/delta) [B(w) n_up - B(-w) n_down], which is exact for
locally constant f, strictly positivity-preserving and second order on
smooth grids.  Both directions telescope, so the discrete total mass
changes only by the residual tolerance of the nonlinear solves.

The signal equation couples every u-cell at fixed x through the secretion
moment alpha0 * sum_j h_j u_j n_ij; its rows are dense in the n-block and
the Jacobian is assembled sparse with those row blocks in place.  On an
x-uniform state the discrete operator block-diagonalises exactly over
cosine modes, which ``mode_matrix`` exploits to extract per-mode spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import NewtonDivergence, NumericalError
from .model import ModelParams, SteadyState, derivatives_of_g, solve_steady_state

__all__ = [
    "Grid2D",
    "Field",
    "SolverOptions",
    "Discretization",
    "build_grid",
    "observables",
]


# -- grid -------------------------------------------------------------------


@dataclass(frozen=True)
class Grid2D:
    """Tensor product of uniform x-cells and graded u-cells."""

    L: float
    x_centers: np.ndarray
    u_faces: np.ndarray
    u_centers: np.ndarray
    u_widths: np.ndarray

    @property
    def nx(self) -> int:
        return len(self.x_centers)

    @property
    def nu(self) -> int:
        return len(self.u_centers)

    @property
    def dx(self) -> float:
        return self.L / self.nx

    @property
    def u_max(self) -> float:
        return float(self.u_faces[-1])

    @property
    def n_unknowns(self) -> int:
        return self.nx * self.nu + self.nx

    def cell_volumes(self) -> np.ndarray:
        """(nx, nu) array of dx * h_j."""
        return np.broadcast_to(self.dx * self.u_widths, (self.nx, self.nu)).copy()


def _march_faces(start: float, stop: float, h0: float, peak_extent: float,
                 growth: float, h_cap: float) -> list[float]:
    """Faces from start toward stop (either direction), fine near start."""
    direction = 1.0 if stop > start else -1.0
    faces = []
    pos = start
    h = h0
    while (stop - pos) * direction > 1e-14:
        if abs(pos - start) > peak_extent:
            h = min(h * growth, h_cap)
        nxt = pos + direction * h
        if (stop - nxt) * direction < 0.45 * h:
            faces.append(stop)
            break
        faces.append(nxt)
        pos = nxt
    else:
        if not faces or faces[-1] != stop:
            faces.append(stop)
    return faces


def build_grid(
    params: ModelParams,
    u_star: float,
    nx: int = 64,
    nu: int | None = None,
    u_max: float | None = None,
    cells_per_width: float = 14.0,
    peak_halfwidths: float = 6.0,
    growth: float = 1.15,
) -> Grid2D:
    """Grid resolving the inner Gaussian region around u*.

    Cell size is w/cells_per_width within peak_halfwidths inner widths
    w = sqrt(eps/lam) of u*, then grows geometrically.  If nu is given the
    natural face distribution is resampled to exactly nu cells (preserving
    the grading shape).
    """
    w = params.gaussian_width()
    if u_max is None:
        u_max = u_star + max(12.0 * w, 0.5 * u_star)
    h0 = w / cells_per_width
    h_cap = max((u_max - u_star) / 12.0, 4.0 * w)
    up = _march_faces(u_star, u_max, h0, peak_halfwidths * w, growth, h_cap)
    down = _march_faces(u_star, 0.0, h0, peak_halfwidths * w, growth, h_cap)
    faces = np.array(sorted(set(down) | {u_star} | set(up)))
    if nu is not None:
        idx = np.linspace(0.0, len(faces) - 1.0, nu + 1)
        faces = np.interp(idx, np.arange(len(faces)), faces)
        faces[0], faces[-1] = 0.0, u_max
    centers = 0.5 * (faces[1:] + faces[:-1])
    widths = np.diff(faces)
    if np.any(widths <= 0.0):
        raise NumericalError("u-grid construction produced non-increasing faces")
    xc = (np.arange(nx) + 0.5) * (params.L / nx)
    return Grid2D(L=params.L, x_centers=xc, u_faces=faces, u_centers=centers, u_widths=widths)


# -- state ------------------------------------------------------------------


@dataclass
class Field:
    """Discrete state: cell averages of n and the signal trace c."""

    grid: Grid2D
    n: np.ndarray        # (nx, nu)
    c: np.ndarray        # (nx,)
    time: float = 0.0

    def pack(self) -> np.ndarray:
        return np.concatenate([self.n.ravel(), self.c])

    @classmethod
    def unpack(cls, grid: Grid2D, y: np.ndarray, time: float = 0.0) -> "Field":
        nx, nu = grid.nx, grid.nu
        return cls(grid=grid, n=y[: nx * nu].reshape(nx, nu).copy(), c=y[nx * nu :].copy(), time=time)

    def mass(self) -> float:
        return float(np.sum(self.n @ self.grid.u_widths) * self.grid.dx)

    def copy(self) -> "Field":
        return Field(self.grid, self.n.copy(), self.c.copy(), self.time)

    def reflected(self) -> "Field":
        """State under x -> L - x."""
        return Field(self.grid, self.n[::-1].copy(), self.c[::-1].copy(), self.time)


@dataclass(frozen=True)
class SolverOptions:
    scheme: str = "implicit-euler"      # or "imex-theta"
    dt: float = 0.1
    theta: float = 1.0                  # used by imex-theta
    newton_tol: float = 1e-11
    newton_max_iter: int = 16
    linear_solver: str = "direct"
    quadrature: str = "midpoint"        # for observables: midpoint|trapezoid|simpson

    def __post_init__(self):
        if self.dt <= 0.0 or self.newton_tol <= 0.0:
            raise ValueError("dt and newton_tol must be positive")
        if self.scheme not in ("implicit-euler", "imex-theta"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


# -- Bernoulli function for exponential fitting -----------------------------


def _bernoulli(w: np.ndarray) -> np.ndarray:
    """B(w) = w / (e^w - 1), stable for small and large |w|."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-5
    ws = w[small]
    out[small] = 1.0 - ws / 2.0 + ws**2 / 12.0
    wl = w[~small]
    with np.errstate(over="ignore"):
        out[~small] = np.where(
            wl > 0.0,
            wl * np.exp(-wl) / (-np.expm1(-wl)),
            wl / np.expm1(wl),
        )
    return out


def _bernoulli_deriv(w: np.ndarray) -> np.ndarray:
    """B'(w) = B(w)(1 - B(-w))/w with a series branch near zero."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-4
    ws = w[small]
    out[small] = -0.5 + ws / 6.0 - ws**3 / 180.0
    wl = w[~small]
    bw = _bernoulli(wl)
    bmw = bw + wl  # B(-w) = B(w) + w
    out[~small] = bw * (1.0 - bmw) / wl
    return out


# -- discretization ---------------------------------------------------------


class Discretization:
    """Residual and Jacobian assembly bound to one (params, grid) pair."""

    def __init__(self, params: ModelParams, grid: Grid2D, options: SolverOptions | None = None):
        self.params = params
        self.grid = grid
        self.options = options or SolverOptions()
        g = grid
        self.D_u = params.D(g.u_centers)                    # (nu,)
        self.delta = np.diff(g.u_centers)                   # (nu-1,) interior face spacings
        self.u_ifaces = g.u_faces[1:-1]                     # interior face positions
        self.mom_weights = g.u_widths * g.u_centers         # secretion quadrature
        self._pattern = None
        # characteristic residual magnitude: stiffest diffusive term
        self.char_scale = max(
            1.0,
            params.epsilon / np.min(self.delta) ** 2,
            np.max(self.D_u) / g.dx**2,
        )

    def set_motility_slope(self, D_prime_star: float) -> None:
        """Rebind to another member of the motility family (same grid).

        Only the x-diffusion row coefficients change; the sparsity pattern
        and grid are reused.  Cached step factorizations are invalidated.
        """
        self.params = self.params.with_motility_slope(D_prime_star)
        self.D_u = self.params.D(self.grid.u_centers)
        self._step_lu = None
        self._step_dt = None

    def parameter_derivative(self, fld: Field) -> np.ndarray:
        """d(residual)/d(D_prime_star) at fixed state.

        The slope parameter only enters through D(u) in the x-diffusion
        term; the sensitivity profile dD/dD'* is supplied by the motility
        family.
        """
        g = self.grid
        n = fld.n
        dx2 = g.dx**2
        sens = self.params.motility.slope_sensitivity(g.u_centers)
        xlap = np.zeros_like(n)
        xlap[1:-1] = n[2:] - 2.0 * n[1:-1] + n[:-2]
        xlap[0] = n[1] - n[0]
        xlap[-1] = n[-2] - n[-1]
        out = np.zeros(g.n_unknowns)
        out[: g.nx * g.nu] = (sens[None, :] * xlap / dx2).ravel()
        return out

    # residual ---------------------------------------------------------

    def _u_flux(self, n: np.ndarray, c: np.ndarray):
        """Interior-face fluxes (nx, nu-1) and the Bernoulli factors used."""
        eps = self.params.epsilon
        f_face = self.params.g(c)[:, None] - self.params.lam * self.u_ifaces[None, :]
        w = f_face * self.delta[None, :] / eps
        bw = _bernoulli(w)
        bmw = bw + w
        G = eps / self.delta[None, :] * (bw * n[:, 1:] - bmw * n[:, :-1])
        return G, w, bw, bmw

    def residual(self, fld: Field) -> np.ndarray:
        """Semi-discrete right-hand side (dn/dt, dc/dt) as one flat vector."""
        p, g = self.params, self.grid
        n, c = fld.n, fld.c
        if not (np.all(np.isfinite(n)) and np.all(np.isfinite(c))):
            raise NumericalError("non-finite state passed to residual assembly")
        dx2 = g.dx**2

        xlap = np.zeros_like(n)
        xlap[1:-1] = n[2:] - 2.0 * n[1:-1] + n[:-2]
        xlap[0] = n[1] - n[0]
        xlap[-1] = n[-2] - n[-1]
        Rn = self.D_u[None, :] * xlap / dx2

        G, _, _, _ = self._u_flux(n, c)
        Rn[:, 0] += G[:, 0] / g.u_widths[0]
        Rn[:, 1:-1] += (G[:, 1:] - G[:, :-1]) / g.u_widths[None, 1:-1]
        Rn[:, -1] += -G[:, -1] / g.u_widths[-1]

        clap = np.zeros_like(c)
        clap[1:-1] = c[2:] - 2.0 * c[1:-1] + c[:-2]
        clap[0] = c[1] - c[0]
        clap[-1] = c[-2] - c[-1]
        Rc = p.D_c * clap / dx2 - p.beta * c + p.alpha0 * (n @ self.mom_weights)
        return np.concatenate([Rn.ravel(), Rc])

    # Jacobian ----------------------------------------------------------

    def _build_pattern(self):
        nx, nu = self.grid.nx, self.grid.nu
        N = nx * nu
        rows, cols = [], []

        def nidx(i, j):
            return i * nu + j

        ii, jj = np.meshgrid(np.arange(nx), np.arange(nu), indexing="ij")
        base = (ii * nu + jj).ravel()

        # n-n: diagonal
        rows.append(base); cols.append(base)
        # n-n: x neighbours
        west = base[nu:]; rows.append(west); cols.append(west - nu)
        east = base[:-nu]; rows.append(east); cols.append(east + nu)
        # n-n: u neighbours
        mask_s = (jj > 0).ravel()
        rows.append(base[mask_s]); cols.append(base[mask_s] - 1)
        mask_n = (jj < nu - 1).ravel()
        rows.append(base[mask_n]); cols.append(base[mask_n] + 1)
        # n-c
        rows.append(base); cols.append(N + ii.ravel())
        # c-c: tridiagonal
        ci = np.arange(nx)
        rows.append(N + ci); cols.append(N + ci)
        rows.append(N + ci[1:]); cols.append(N + ci[1:] - 1)
        rows.append(N + ci[:-1]); cols.append(N + ci[:-1] + 1)
        # c-n: dense row block
        rows.append(np.repeat(N + ci, nu)); cols.append(base)

        self._slices = []
        start = 0
        for r in rows:
            self._slices.append(slice(start, start + len(r)))
            start += len(r)
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._nnz = start

    def jacobian(self, fld: Field) -> sp.csc_matrix:
        """Analytic Jacobian of the semi-discrete right-hand side."""
        if self._pattern is None:
            self._build_pattern()
            self._pattern = True
        p, g = self.params, self.grid
        nx, nu = g.nx, g.nu
        n, c = fld.n, fld.c
        dx2 = g.dx**2
        eps = p.epsilon
        hu = g.u_widths

        G, w, bw, bmw = self._u_flux(n, c)
        # flux coefficients: dG_face/dn_up = (eps/delta) B(w), /dn_down = -(eps/delta) B(-w)
        a_up = eps / self.delta[None, :] * bw          # (nx, nu-1)
        a_dn = -eps / self.delta[None, :] * bmw

        diag = np.empty((nx, nu))
        diag[:, :] = -2.0 * self.D_u[None, :] / dx2
        diag[0, :] = -self.D_u / dx2
        diag[-1, :] = -self.D_u / dx2
        # u-part of the diagonal: cell j loses through both faces
        diag[:, 0] += a_dn[:, 0] / hu[0]
        diag[:, 1:-1] += (a_dn[:, 1:] - a_up[:, :-1]) / hu[None, 1:-1]
        diag[:, -1] += -a_up[:, -1] / hu[-1]

        xoff = (self.D_u / dx2)[None, :].repeat(nx, axis=0)
        west = xoff.ravel()[nu:]
        east = xoff.ravel()[: nx * nu - nu]

        south = np.zeros((nx, nu))
        south[:, 1:-1] = -a_dn[:, :-1] / hu[None, 1:-1]
        south[:, -1] = -a_dn[:, -1] / hu[-1]
        north = np.zeros((nx, nu))
        north[:, 0] = a_up[:, 0] / hu[0]
        north[:, 1:-1] = a_up[:, 1:] / hu[None, 1:-1]

        g1c = derivatives_of_g(p.production, c, 1)          # (nx,)
        dbw = _bernoulli_deriv(w)
        # dG/dc = g'(c) * (B'(w) n_up + B'(-w) n_down) with B'(-w) = -B'(w) - 1
        dG_dc = g1c[:, None] * (dbw * n[:, 1:] - (dbw + 1.0) * n[:, :-1])
        ncol = np.zeros((nx, nu))
        ncol[:, 0] = dG_dc[:, 0] / hu[0]
        ncol[:, 1:-1] = (dG_dc[:, 1:] - dG_dc[:, :-1]) / hu[None, 1:-1]
        ncol[:, -1] = -dG_dc[:, -1] / hu[-1]

        cdiag = np.full(nx, -p.beta)
        cdiag[1:-1] += -2.0 * p.D_c / dx2
        cdiag[0] += -p.D_c / dx2
        cdiag[-1] += -p.D_c / dx2
        coff_w = np.full(nx - 1, p.D_c / dx2)
        coff_e = np.full(nx - 1, p.D_c / dx2)
        cn = np.broadcast_to(p.alpha0 * self.mom_weights, (nx, nu)).ravel()

        data = np.empty(self._nnz)
        parts = [
            diag.ravel(), west, east,
            south[:, 1:].ravel(), north[:, :-1].ravel(),
            ncol.ravel(),
            cdiag, coff_w, coff_e, cn,
        ]
        for sl, part in zip(self._slices, parts):
            data[sl] = part
        J = sp.csc_matrix((data, (self._rows, self._cols)), shape=(g.n_unknowns, g.n_unknowns))
        return J

    # uniform states ------------------------------------------------------

    def gibbs_profile(self, c_value: float) -> np.ndarray:
        """Zero-flux u-profile for a fixed signal level, mass-normalized.

        Exponential fitting makes the discrete equilibrium exact:
        n_{j}/n_{j-1} = exp(w_face), the discrete Gibbs ratio.
        """
        g = self.grid
        eps = self.params.epsilon
        f_face = float(self.params.g(c_value)) - self.params.lam * self.u_ifaces
        w = f_face * self.delta / eps
        logn = np.concatenate([[0.0], np.cumsum(w)])
        logn -= logn.max()
        n = np.exp(logn)
        mass = float(np.dot(n, g.u_widths))
        return n * (self.params.rho_star / mass)

    def uniform_steady(self, steady_hint: SteadyState | None = None) -> Field:
        """Discrete x-uniform steady state via a scalar balance in c.

        The u-profile is the discrete Gibbs state at signal level c; the
        balance beta c = alpha0 * moment(c) is solved by bracketed root
        finding around the analytic steady state.
        """
        p = self.params
        if steady_hint is None:
            steady_hint = solve_steady_state(p)[0]

        def balance(cv: float) -> float:
            n = self.gibbs_profile(cv)
            return p.beta * cv - p.alpha0 * float(np.dot(n, self.mom_weights))

        c0 = steady_hint.c_star
        lo, hi = 0.5 * c0, 2.0 * c0
        flo, fhi = balance(lo), balance(hi)
        tries = 0
        while flo * fhi > 0.0 and tries < 40:
            lo *= 0.8
            hi *= 1.25
            flo, fhi = balance(lo), balance(hi)
            tries += 1
        if flo * fhi > 0.0:
            raise NumericalError("could not bracket the discrete uniform steady state")
        c_star = brentq(balance, lo, hi, xtol=1e-15 * max(1.0, c0))
        n_prof = self.gibbs_profile(c_star)
        g = self.grid
        return Field(
            grid=g,
            n=np.broadcast_to(n_prof, (g.nx, g.nu)).copy(),
            c=np.full(g.nx, c_star),
        )

    # nonlinear solves ------------------------------------------------------

    def _mass_row(self) -> np.ndarray:
        g = self.grid
        row = np.zeros(g.n_unknowns)
        row[: g.nx * g.nu] = g.cell_volumes().ravel()
        return row

    def steady_system(self, fld: Field, pinned_cell: tuple[int, int] | None = None):
        """Steady residual and Jacobian with the mass constraint installed.

        The volume-weighted sum of the n-rows vanishes identically, so one
        n-equation is redundant; it is replaced by the normalization
        (total mass - rho* L) / (rho* L).
        """
        p, g = self.params, self.grid
        if pinned_cell is None:
            j_peak = int(np.argmax(fld.n[0]))
            pinned_cell = (0, j_peak)
        r = pinned_cell[0] * g.nu + pinned_cell[1]
        target = p.rho_star * p.L

        F = self.residual(fld)
        F[r] = (fld.mass() - target) / target
        J = self.jacobian(fld).tolil()
        J[r, :] = self._mass_row() / target
        return F, J.tocsc(), r

    def newton_steady(
        self,
        guess: Field,
        tol: float | None = None,
        max_iter: int | None = None,
        damping: bool = True,
    ) -> Field:
        """Damped Newton for the steady problem with mass normalization."""
        tol = tol if tol is not None else self.options.newton_tol
        max_iter = max_iter if max_iter is not None else self.options.newton_max_iter
        fld = guess.copy()
        tol_abs = tol * self.char_scale
        j_peak = int(np.argmax(fld.n[0]))
        pinned = (0, j_peak)
        best = math.inf
        for it in range(max_iter):
            F, J, _ = self.steady_system(fld, pinned)
            rnorm = float(np.max(np.abs(F)))
            if rnorm < tol_abs:
                return fld
            step = spla.spsolve(J, -F)
            if not np.all(np.isfinite(step)):
                raise NewtonDivergence("linear solve produced non-finite step", fld, rnorm)
            alpha = 1.0
            while True:
                trial = Field.unpack(self.grid, fld.pack() + alpha * step, fld.time)
                Ft, _, _ = self.steady_system(trial, pinned)
                tnorm = float(np.max(np.abs(Ft)))
                if tnorm < max(rnorm * (1.0 - 0.25 * alpha), tol_abs) or not damping:
                    fld = trial
                    break
                alpha *= 0.5
                if alpha < 1.0 / 64.0:
                    fld = trial
                    break
            best = min(best, rnorm)
        F, _, _ = self.steady_system(fld, pinned)
        rnorm = float(np.max(np.abs(F)))
        if rnorm < tol_abs:
            return fld
        raise NewtonDivergence(
            f"steady Newton stalled at |F| = {rnorm:.3e} (tol {tol_abs:.3e})", fld, rnorm
        )

    def step(self, fld: Field, options: SolverOptions | None = None) -> Field:
        """One time step; implicit Euler by default.

        implicit-euler: full Newton on (y+ - y)/dt = R(y+); iterates until
        the residual hits its round-off floor, which keeps the per-step
        mass error at the level of the linear algebra.
        imex-theta: one linear solve with the signal-coupling coefficients
        frozen at the current state, (I/dt - theta J) dy = R(y).
        """
        opts = options or self.options
        dt = opts.dt
        N = self.grid.n_unknowns
        y0 = fld.pack()

        if opts.scheme == "imex-theta":
            J = self.jacobian(fld)
            A = sp.eye(N, format="csc") / dt - opts.theta * J
            rhs = self.residual(fld)
            dy = spla.spsolve(A, rhs)
            return Field.unpack(self.grid, y0 + dy, fld.time + dt)

        yk = y0.copy()
        tol_abs = opts.newton_tol * self.char_scale
        prev = math.inf
        fresh = False
        if getattr(self, "_step_dt", None) != dt:
            self._step_lu = None
            self._step_dt = dt
        for it in range(opts.newton_max_iter):
            cur = Field.unpack(self.grid, yk, fld.time)
            F = (yk - y0) / dt - self.residual(cur)
            rnorm = float(np.max(np.abs(F)))
            if rnorm < tol_abs:
                break
            slow = it > 0 and rnorm > 0.35 * prev
            if slow and fresh:
                if rnorm < 100.0 * tol_abs:
                    break  # round-off floor of the residual assembly
                raise NewtonDivergence(
                    f"implicit step stagnated (|F| = {rnorm:.3e})", cur, rnorm
                )
            if self._step_lu is None or slow:
                J = self.jacobian(cur)
                A = sp.eye(N, format="csc") / dt - J
                self._step_lu = spla.splu(A)
                fresh = True
            prev = rnorm
            yk = yk - self._step_lu.solve(F)
            if not np.all(np.isfinite(yk)):
                raise NewtonDivergence("time step produced non-finite state", cur, rnorm)
        else:
            raise NewtonDivergence(
                f"implicit step failed to converge (|F| = {rnorm:.3e})",
                Field.unpack(self.grid, yk, fld.time),
                rnorm,
            )
        return Field.unpack(self.grid, yk, fld.time + dt)

    # spectra ----------------------------------------------------------------

    def mode_matrix(self, fld: Field, mode: int) -> np.ndarray:
        """Dense (nu+1) x (nu+1) block of the Jacobian on the cos(m pi x / L)
        sector of an x-uniform state.

        Exact block reduction: the cosine sector is invariant because the
        state and all coefficients are x-independent, so the block is read
        off by applying the sparse Jacobian to cosine-modulated basis
        vectors and projecting back.
        """
        g = self.grid
        nx, nu = g.nx, g.nu
        if np.max(np.abs(fld.n - fld.n[0])) > 1e-9 * max(1.0, np.max(np.abs(fld.n))):
            raise ValueError("mode_matrix requires an x-uniform state")
        J = self.jacobian(fld)
        k = mode * math.pi / g.L
        cosx = np.cos(k * g.x_centers)
        norm = float(np.dot(cosx, cosx))
        block = np.empty((nu + 1, nu + 1))
        vec = np.zeros(g.n_unknowns)
        for q in range(nu + 1):
            vec[:] = 0.0
            if q < nu:
                vec[: nx * nu].reshape(nx, nu)[:, q] = cosx
            else:
                vec[nx * nu :] = cosx
            out = J @ vec
            block[:nu, q] = (out[: nx * nu].reshape(nx, nu).T @ cosx) / norm
            block[nu, q] = float(np.dot(out[nx * nu :], cosx)) / norm
        return block

    def leading_pattern_eigenvalue(
        self,
        fld: Field,
        n_eigs: int = 8,
        sigma: float | None = None,
        return_vector: bool = False,
    ):
        """Rightmost eigenvalue of the time-linearization, excluding the
        conserved-mass zero mode.

        Shift-invert Arnoldi around sigma (default a small positive rate);
        eigenvectors with non-negligible total mass belong to the conserved
        direction and are filtered out.
        """
        J = self.jacobian(fld)
        if sigma is None:
            sigma = 0.037  # small positive rate, away from the exact zero mode
        vols = self._mass_row()
        try:
            vals, vecs = spla.eigs(J, k=n_eigs, sigma=sigma, which="LM")
        except Exception as exc:  # ARPACK breakdowns: widen the search
            try:
                vals, vecs = spla.eigs(J, k=n_eigs + 4, sigma=sigma * 1.7 + 1e-3, which="LM")
            except Exception:
                raise NumericalError(f"eigensolver failed: {exc}") from exc
        best = None
        for idx in np.argsort(-vals.real):
            v = vecs[:, idx]
            mass = abs(np.dot(vols, v.real)) + abs(np.dot(vols, v.imag))
            scale = float(np.dot(vols, np.abs(v)))
            if scale > 0 and mass / scale > 1e-6 and abs(vals[idx]) < 1e-6 * self.char_scale:
                continue  # conserved-mass mode
            best = (float(vals[idx].real), v)
            break
        if best is None:
            raise NumericalError("no non-mass eigenvalue found near the shift")
        if return_vector:
            return best
        return best[0]


# -- observables -------------------------------------------------------------


def observables(fld: Field, quadrature: str = "midpoint") -> dict:
    """rho(x), the order parameter delta_rho, mean internal state and c.

    rho is extrapolated to the domain endpoints with the no-flux parabola
    through the two nearest cell centres, so delta_rho reflects x = 0, L
    rather than the first cell centres.
    """
    g = fld.grid
    if quadrature == "midpoint":
        rho = fld.n @ g.u_widths
        mom = fld.n @ (g.u_widths * g.u_centers)
    elif quadrature == "trapezoid":
        rho = np.trapezoid(fld.n, g.u_centers, axis=1)
        mom = np.trapezoid(fld.n * g.u_centers, g.u_centers, axis=1)
    elif quadrature == "simpson":
        from scipy.integrate import simpson

        rho = simpson(fld.n, x=g.u_centers, axis=1)
        mom = simpson(fld.n * g.u_centers, x=g.u_centers, axis=1)
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")

    rho_left = (9.0 * rho[0] - rho[1]) / 8.0
    rho_right = (9.0 * rho[-1] - rho[-2]) / 8.0
    with np.errstate(invalid="ignore", divide="ignore"):
        u_mean = np.where(rho > 0.0, mom / np.maximum(rho, 1e-300), 0.0)
    return {
        "x": g.x_centers,
        "rho": rho,
        "delta_rho": abs(rho_right - rho_left),
        "u_mean": u_mean,
        "c": fld.c,
        "mass": fld.mass(),
    }

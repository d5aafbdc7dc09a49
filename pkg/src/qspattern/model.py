"""Model parameters, functional forms and the spatially uniform base state.

The model couples a cell density n(x, u, t), structured by an internal
chemical concentration u, to an external signal c(x, t):

    n_t = D(u) n_xx + eps * n_uu - (f(u, c) n)_u,   f(u, c) = g(c) - lam * u
    c_t = D_c c_xx - beta * c + alpha0 * int_0^inf u n du

with no-flux boundary conditions in both x and u.  The motility D(u) is a
tanh step centred on the uniform internal state and the production g(c) is
a basal-plus-saturating (Michaelis-Menten) positive feedback:

    D(u) = D_star - (D_star - D_inf) * tanh(w(u)),
    w(u) = -D_prime_star / (D_star - D_inf) * (u - u_star_ref),
    g(c) = a + V c / (K + c).

By construction D(u_star_ref) = D_star and D'(u_star_ref) = D_prime_star
for every value of the slope parameter, so varying D_prime_star tilts the
motility profile without moving its value at the base state.

The spatially uniform steady state is a Gaussian in u of width
sqrt(eps / lam) centred at u* = g(c*) / lam, with c* solving the signal
balance g(c*) = lam * beta * c* / (alpha0 * rho*).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, NoSteadyState

__all__ = [
    "MotilitySpec",
    "ProductionSpec",
    "ModelParams",
    "SteadyState",
    "derivatives_of_g",
    "motility_taylor",
    "solve_steady_state",
    "default_params",
]


@dataclass(frozen=True)
class MotilitySpec:
    """Tanh motility profile; ``D_prime_star`` is the bifurcation parameter."""

    D_star: float
    D_inf: float
    D_prime_star: float
    u_star_ref: float

    def __post_init__(self):
        if self.D_star <= 0.0 or self.D_inf <= 0.0:
            raise ConfigError("motility plateau and far value must be positive")
        if self.D_star == self.D_inf:
            raise ConfigError("motility requires D_star != D_inf (degenerate tanh width)")
        if self.u_star_ref < 0.0:
            raise ConfigError("motility centre u_star_ref must be non-negative")

    @property
    def slope_scale(self) -> float:
        """Prefactor of (u - u_ref) inside the tanh argument."""
        return -self.D_prime_star / (self.D_star - self.D_inf)

    def value(self, u):
        u = np.asarray(u, dtype=float)
        w = self.slope_scale * (u - self.u_star_ref)
        return self.D_star - (self.D_star - self.D_inf) * np.tanh(w)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        w = self.slope_scale * (u - self.u_star_ref)
        return -(self.D_star - self.D_inf) * self.slope_scale / np.cosh(w) ** 2

    def slope_sensitivity(self, u):
        """d D(u) / d D_prime_star at fixed (D_star, D_inf, u_star_ref).

        Vanishes at u = u_star_ref and has unit derivative there, so the
        parameter moves the slope at the centre without moving the value.
        """
        u = np.asarray(u, dtype=float)
        w = self.slope_scale * (u - self.u_star_ref)
        return (u - self.u_star_ref) / np.cosh(w) ** 2

    def taylor_radius(self) -> float:
        """Distance from u_star_ref to the nearest complex singularity of D."""
        if self.D_prime_star == 0.0:
            return math.inf
        return (math.pi / 2.0) / abs(self.slope_scale)

    def check_positive(self, u_max: float, n_samples: int = 4096) -> None:
        u = np.linspace(0.0, u_max, n_samples)
        d = self.value(u)
        if np.any(d <= 0.0):
            raise ConfigError(
                f"motility non-positive on [0, {u_max}]: min D = {d.min():.3e}"
            )

    def with_slope(self, D_prime_star: float) -> "MotilitySpec":
        return replace(self, D_prime_star=D_prime_star)


@dataclass(frozen=True)
class ProductionSpec:
    """Signal-dependent production g(c) = a + V c / (K + c)."""

    a: float
    V: float
    K: float

    def __post_init__(self):
        if self.a <= 0.0 or self.V < 0.0 or self.K <= 0.0:
            raise ConfigError("production requires a > 0, V >= 0, K > 0")

    def g(self, c):
        c = np.asarray(c, dtype=float)
        return self.a + self.V * c / (self.K + c)

    def g_derivative(self, c, order: int = 1):
        return derivatives_of_g(self, c, order)


def derivatives_of_g(spec: ProductionSpec, c, order: int):
    """Closed-form d^order g / dc^order for the saturating production law.

    For order >= 1 the derivative is (-1)^(order+1) order! V K / (K+c)^(order+1).
    """
    if order < 0 or order > 3:
        raise ValueError(f"order must be in 0..3, got {order}")
    c = np.asarray(c, dtype=float)
    if np.any(c < 0.0):
        raise ValueError("g(c) is defined for non-negative concentrations only")
    if order == 0:
        return spec.a + spec.V * c / (spec.K + c)
    sign = 1.0 if order % 2 == 1 else -1.0
    return sign * math.factorial(order) * spec.V * spec.K / (spec.K + c) ** (order + 1)


def _tanh_taylor(z0: float, m_max: int) -> np.ndarray:
    """Taylor coefficients t_m of tanh(z0 + z) about z = 0, m = 0..m_max.

    Uses the ODE T' = 1 - T^2: (m+1) t_{m+1} = delta_{m0} - sum_i t_i t_{m-i}.
    """
    t = np.zeros(m_max + 1)
    t[0] = math.tanh(z0)
    for m in range(m_max):
        conv = float(np.dot(t[: m + 1], t[m::-1]))
        t[m + 1] = ((1.0 if m == 0 else 0.0) - conv) / (m + 1)
    return t


def motility_taylor(spec: MotilitySpec, u_star: float, m_max: int) -> np.ndarray:
    """Derivatives D^(m)(u_star), m = 0..m_max, of the tanh motility profile.

    Returned values are the plain derivatives (not divided by m!).  At the
    anchor point the tanh symmetry forces every even derivative with m >= 2
    to vanish.
    """
    if m_max < 0:
        raise ValueError("m_max must be non-negative")
    c1 = spec.slope_scale
    z0 = c1 * (u_star - spec.u_star_ref)
    t = _tanh_taylor(z0, m_max)
    out = np.empty(m_max + 1)
    out[0] = spec.D_star - (spec.D_star - spec.D_inf) * t[0]
    amp = spec.D_star - spec.D_inf
    for m in range(1, m_max + 1):
        # chain rule for the linear argument: D^(m)/m! = -amp * t_m * c1^m
        out[m] = -amp * t[m] * c1**m * math.factorial(m)
    return out


@dataclass(frozen=True)
class ModelParams:
    """All physical constants plus the parametric forms of D(u) and g(c)."""

    D_c: float
    beta: float
    alpha0: float
    lam: float
    epsilon: float
    L: float
    rho_star: float
    motility: MotilitySpec
    production: ProductionSpec
    epsilon_bound_factor: float = 1.0  # sanity bound epsilon < factor * lam * L

    def __post_init__(self):
        positives = {
            "D_c": self.D_c,
            "beta": self.beta,
            "alpha0": self.alpha0,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "L": self.L,
            "rho_star": self.rho_star,
        }
        for name, value in positives.items():
            if not (value > 0.0) or not math.isfinite(value):
                raise ConfigError(f"parameter {name} must be positive and finite, got {value}")
        if self.epsilon >= self.epsilon_bound_factor * self.lam * self.L:
            raise ConfigError(
                f"epsilon = {self.epsilon} violates the sanity bound "
                f"epsilon < {self.epsilon_bound_factor} * lambda * L"
            )

    # -- functional forms -------------------------------------------------

    def g(self, c):
        return self.production.g(c)

    def f(self, u, c):
        """Internal kinetics f(u, c) = g(c) - lam * u."""
        return self.production.g(c) - self.lam * np.asarray(u, dtype=float)

    def D(self, u):
        return self.motility.value(u)

    # -- wavenumbers -------------------------------------------------------

    def wavenumber(self, mode: int = 1) -> float:
        """k = mode * pi / L, the discrete no-flux spectrum."""
        return mode * math.pi / self.L

    # -- convenience -------------------------------------------------------

    def gaussian_width(self) -> float:
        """Inner width sqrt(eps / lam) of the base state in u."""
        return math.sqrt(self.epsilon / self.lam)

    def uniform_mode_margin(self, steady: "SteadyState") -> float:
        """lam*beta - alpha0*rho* g'(c*); positive iff the k=0 mode is stable."""
        g1 = derivatives_of_g(self.production, steady.c_star, 1)
        return self.lam * self.beta - self.alpha0 * self.rho_star * g1

    def with_epsilon(self, epsilon: float) -> "ModelParams":
        return replace(self, epsilon=epsilon)

    def with_motility_slope(self, D_prime_star: float) -> "ModelParams":
        return replace(self, motility=self.motility.with_slope(D_prime_star))

    def with_rho_star(self, rho_star: float) -> "ModelParams":
        return replace(self, rho_star=rho_star)


@dataclass(frozen=True)
class SteadyState:
    """Spatially uniform base state (c*, u*, Gaussian prefactor N)."""

    c_star: float
    u_star: float
    N: float
    branch_index: int = 0

    def density(self, u, params: ModelParams):
        """n*(u) = N exp(-lam (u - u*)^2 / (2 eps))."""
        u = np.asarray(u, dtype=float)
        return self.N * np.exp(-params.lam * (u - self.u_star) ** 2 / (2.0 * params.epsilon))

    def density_derivative(self, u, params: ModelParams):
        u = np.asarray(u, dtype=float)
        return -params.lam * (u - self.u_star) / params.epsilon * self.density(u, params)


def _balance_residual(params: ModelParams, c: float) -> float:
    """g(c) - lam*beta*c / (alpha0*rho*); roots are steady signal levels."""
    slope = params.lam * params.beta / (params.alpha0 * params.rho_star)
    return float(params.production.g(c)) - slope * c


def solve_steady_state(
    params: ModelParams,
    c_max: float | None = None,
    n_scan: int = 4000,
    tol: float = 1e-14,
) -> list[SteadyState]:
    """All positive roots of the signal balance, sorted by c*.

    The bracket default 10*(a+V)*alpha0*rho*/(lam*beta) contains every root
    because g is bounded by a + V.  Each sign change found on a dense scan
    is refined by brentq and polished with Newton steps on the residual.
    """
    prod = params.production
    if c_max is None:
        c_max = 10.0 * (prod.a + prod.V) * params.alpha0 * params.rho_star / (params.lam * params.beta)
    cs = np.linspace(0.0, c_max, n_scan)
    vals = np.array([_balance_residual(params, c) for c in cs])

    roots: list[float] = []
    for i in range(n_scan - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(float(cs[i]))
        elif a * b < 0.0:
            roots.append(float(brentq(lambda c: _balance_residual(params, c), cs[i], cs[i + 1], xtol=1e-15)))
    if vals[-1] == 0.0:
        roots.append(float(cs[-1]))

    slope = params.lam * params.beta / (params.alpha0 * params.rho_star)
    polished: list[float] = []
    for c in roots:
        # Newton polish; the derivative of the residual is g'(c) - slope
        for _ in range(8):
            r = _balance_residual(params, c)
            dr = derivatives_of_g(prod, c, 1) - slope
            if dr == 0.0:
                break
            step = r / dr
            c -= step
            if abs(step) < 1e-16 * max(1.0, abs(c)):
                break
        if c > 0.0 and abs(_balance_residual(params, c)) < tol * max(1.0, abs(c)) * slope:
            polished.append(c)

    # de-duplicate roots that collapsed onto each other during polishing
    unique: list[float] = []
    for c in sorted(polished):
        if not unique or abs(c - unique[-1]) > 1e-10 * max(1.0, c):
            unique.append(c)

    if not unique:
        raise NoSteadyState(f"no positive steady state in (0, {c_max}]")

    N = params.rho_star * math.sqrt(params.lam / (2.0 * math.pi * params.epsilon))
    return [
        SteadyState(c_star=c, u_star=float(prod.g(c)) / params.lam, N=N, branch_index=i)
        for i, c in enumerate(unique)
    ]


def anchor_motility(params: ModelParams, branch_index: int = 0) -> tuple[ModelParams, SteadyState]:
    """Re-centre the motility profile on the computed base state.

    The tanh family is defined relative to u*, so changing rho_star or the
    production law moves the anchor.  Returns updated params and the steady
    state they are anchored to.
    """
    states = solve_steady_state(params)
    steady = states[branch_index]
    motility = replace(params.motility, u_star_ref=steady.u_star)
    return replace(params, motility=motility), steady


def default_params(epsilon: float = 5e-3) -> ModelParams:
    """Reference parameter set used throughout the examples and tests.

    Chosen so that the first no-flux mode k = pi/L destabilises at a
    moderate motility slope (critical slope near -1.47), the uniform mode
    is comfortably stable, and the pitchfork is supercritical at
    rho* = 0.65, turning subcritical as the mean density drops through
    rho* ~ 0.37.  The slope D_prime_star = -1.6 sits a little past the
    bifurcation so time stepping from a perturbed uniform state patterns.
    """
    motility = MotilitySpec(D_star=1.0, D_inf=0.1, D_prime_star=-1.6, u_star_ref=3.201788778602337)
    production = ProductionSpec(a=0.5, V=4.0, K=1.0)
    params = ModelParams(
        D_c=1.0,
        beta=1.0,
        alpha0=1.0,
        lam=1.0,
        epsilon=epsilon,
        L=2.0 * math.pi,
        rho_star=0.65,
        motility=motility,
        production=production,
    )
    params, _ = anchor_motility(params)
    return params

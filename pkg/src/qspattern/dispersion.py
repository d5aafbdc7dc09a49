"""Linear stability of the uniform state: eigenvalue cubic and onset slope.

Perturbations ~ exp(sigma t) cos(k x) of the uniform base state satisfy, to
leading order in eps, the rational eigenvalue relation

    sigma + D_c k^2 + beta
      - alpha0 g'* rho* (sigma + (D* - u* D'*) k^2)
        / ((sigma + D* k^2)(sigma + D* k^2 + lam)) = 0.

Clearing denominators gives a monic cubic in sigma; the rational form is
kept only as a residual oracle because the cleared polynomial introduces
no spurious roots while the rational form has poles at sigma = -D* k^2 and
-D* k^2 - lam.  The constant coefficient changes sign exactly where the
first non-uniform mode destabilises, which defines the critical slope

    D'0* = -(D0*/u*) [ (D_c k^2 + beta)(D0* k^2 + lam)
                       / (alpha0 rho* g'*) - 1 ].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import ModelParams, SteadyState, derivatives_of_g

__all__ = [
    "DispersionCubic",
    "GrowthSpectrum",
    "build_cubic",
    "growth_rates",
    "growth_spectrum",
    "critical_Dprime",
    "logistic_dispersion",
]


@dataclass(frozen=True)
class DispersionCubic:
    """Monic cubic in sigma plus the parameter snapshot it was built from."""

    coefficients: tuple[float, float, float, float]  # (1, c2, c1, c0)
    k: float
    derivation_params: dict

    def __post_init__(self):
        if self.coefficients[0] != 1.0:
            raise ValueError("dispersion cubic must be monic")

    def __call__(self, sigma):
        c3, c2, c1, c0 = self.coefficients
        return ((c3 * sigma + c2) * sigma + c1) * sigma + c0

    def roots(self) -> np.ndarray:
        """Three roots, sorted by real part descending."""
        r = np.roots(self.coefficients)
        return r[np.argsort(-r.real)]

    def companion(self) -> np.ndarray:
        _, c2, c1, c0 = self.coefficients
        return np.array([[-c2, -c1, -c0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])

    def rational_residual(self, sigma) -> complex:
        """Residual of the unexpanded rational relation at sigma.

        Vanishes at the cubic's roots except at the two removable poles the
        polynomial clearing introduced.
        """
        p = self.derivation_params
        k2 = self.k**2
        pole1 = sigma + p["D0"] * k2 + p.get("r_star", 0.0)
        pole2 = sigma + p["D0"] * k2 + p["lam"]
        num = sigma + (p["D0"] - p["u_star"] * p["D1"]) * k2 + p.get("r_star", 0.0)
        return sigma + p["D_c"] * k2 + p["beta"] - p["G"] * num / (pole1 * pole2)


@dataclass(frozen=True)
class GrowthSpectrum:
    """Growth rates over a set of wavenumbers."""

    entries: list  # (k, roots sorted by Re descending)
    max_real_part: float
    critical_k: float


def _validate_wavenumber(params: ModelParams, k: float, allow_offgrid: bool) -> None:
    m = k * params.L / math.pi
    if abs(m - round(m)) > 1e-9 * max(1.0, abs(m)):
        if not allow_offgrid:
            warnings.warn(
                f"k = {k} is not an integer multiple of pi/L = {math.pi / params.L}; "
                "no-flux modes are discrete (pass allow_offgrid=True to silence)",
                stacklevel=3,
            )


def _snapshot(params: ModelParams, steady: SteadyState, **extra) -> dict:
    g1 = float(derivatives_of_g(params.production, steady.c_star, 1))
    snap = {
        "D0": float(params.D(steady.u_star)),
        "D1": float(params.motility.derivative(steady.u_star)),
        "u_star": steady.u_star,
        "g1": g1,
        "G": params.alpha0 * g1 * params.rho_star,
        "D_c": params.D_c,
        "beta": params.beta,
        "lam": params.lam,
    }
    snap.update(extra)
    return snap


def build_cubic(
    params: ModelParams,
    steady: SteadyState,
    k: float,
    allow_offgrid: bool = False,
) -> DispersionCubic:
    """Monic cubic whose roots are the O(1)-in-eps eigenvalues at wavenumber k."""
    _validate_wavenumber(params, k, allow_offgrid)
    s = _snapshot(params, steady)
    k2 = k * k
    P = s["D_c"] * k2 + s["beta"]
    A = s["D0"] * k2
    B = s["D0"] * k2 + s["lam"]
    G = s["G"]
    c2 = P + A + B
    c1 = P * A + P * B + A * B - G
    c0 = P * A * B - G * (s["D0"] - s["u_star"] * s["D1"]) * k2
    return DispersionCubic(coefficients=(1.0, c2, c1, c0), k=k, derivation_params=s)


def logistic_dispersion(
    params: ModelParams,
    steady: SteadyState,
    k: float,
    r_star: float,
    rho_c: float,
    allow_offgrid: bool = False,
) -> DispersionCubic:
    """Eigenvalue cubic with a logistic growth term r(u*) and carrying capacity rho_c.

    Setting r_star = 0 and rho_c = rho* recovers ``build_cubic`` exactly.
    """
    if r_star < 0.0:
        raise ConfigError("r_star must be non-negative")
    _validate_wavenumber(params, k, allow_offgrid)
    g1 = float(derivatives_of_g(params.production, steady.c_star, 1))
    G = params.alpha0 * g1 * rho_c
    s = _snapshot(params, steady, r_star=float(r_star))
    s["G"] = G
    k2 = k * k
    P = s["D_c"] * k2 + s["beta"]
    A = s["D0"] * k2 + r_star
    B = s["D0"] * k2 + s["lam"]
    c2 = P + A + B
    c1 = P * A + P * B + A * B - G
    c0 = P * A * B - G * ((s["D0"] - s["u_star"] * s["D1"]) * k2 + r_star)
    return DispersionCubic(coefficients=(1.0, c2, c1, c0), k=k, derivation_params=s)


def growth_rates(
    params: ModelParams,
    steady: SteadyState,
    k: float,
    allow_offgrid: bool = False,
) -> tuple[float, np.ndarray]:
    """(k, three eigenvalues sorted by real part descending)."""
    cubic = build_cubic(params, steady, k, allow_offgrid=allow_offgrid)
    return k, cubic.roots()


def growth_spectrum(
    params: ModelParams,
    steady: SteadyState,
    modes: range | list[int] = range(0, 9),
) -> GrowthSpectrum:
    """Growth rates over the discrete no-flux modes k = m pi / L."""
    entries = []
    best = (-math.inf, 0.0)
    for m in modes:
        k = params.wavenumber(m)
        if m == 0:
            # k = 0: the cubic degenerates to sigma * quadratic; keep the
            # quadratic roots plus the conserved-mass zero eigenvalue
            g1 = float(derivatives_of_g(params.production, steady.c_star, 1))
            G = params.alpha0 * g1 * params.rho_star
            quad = np.roots([1.0, params.beta + params.lam, params.beta * params.lam - G])
            roots = np.array(sorted(np.append(quad, 0.0), key=lambda z: -z.real))
        else:
            _, roots = growth_rates(params, steady, k)
        entries.append((k, roots))
        lead = float(np.max(roots.real)) if m > 0 else float(np.max(roots.real[roots.real < 0]) if np.any(roots.real < 0) else 0.0)
        top = float(np.max(roots.real)) if m > 0 else lead
        if top > best[0]:
            best = (top, k)
    return GrowthSpectrum(entries=entries, max_real_part=best[0], critical_k=best[1])


def critical_slope_value(
    D0: float, u_star: float, D_c: float, beta: float, lam: float, G: float, k: float
) -> float:
    """Raw onset-slope formula -(D0/u*)[(D_c k^2 + beta)(D0 k^2 + lam)/G - 1]."""
    k2 = k * k
    return -(D0 / u_star) * ((D_c * k2 + beta) * (D0 * k2 + lam) / G - 1.0)


def critical_Dprime(params: ModelParams, steady: SteadyState, k: float) -> float:
    """Motility slope at which the mode k has a zero eigenvalue (leading order).

    Requires the uniform mode to be stable, i.e. g'(c*) < lam beta / (alpha0 rho*);
    under that restriction the returned slope is negative.
    """
    margin = params.uniform_mode_margin(steady)
    if margin <= 0.0:
        raise ConfigError(
            "uniform mode already unstable: g'(c*) >= lam*beta/(alpha0*rho*); "
            "no patterned bifurcation from a stable uniform state"
        )
    g1 = float(derivatives_of_g(params.production, steady.c_star, 1))
    G = params.alpha0 * params.rho_star * g1
    D0 = float(params.D(steady.u_star))
    return critical_slope_value(D0, steady.u_star, params.D_c, params.beta, params.lam, G, k)

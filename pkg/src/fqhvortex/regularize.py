"""Regularization ingredients: cutoff, backgrounds, profiles, sources, weight.

The singular vortex sources are absorbed by compactly supported
backgrounds built from a smooth log cutoff, the far-field behavior is
carried by explicit logarithmic profiles, and the remaining data (f, h,
U, V, h0) feed the variational problem.  Everything here is a pure
construction from ModelParams + Grid; all Laplacians of the radial
pieces are analytic closed forms, never discrete stencils of
log-singular fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    LOG_FLOOR,
    Grid,
    ModelParams,
    ParameterError,
    ScalarField,
    trapezoid_integral,
)

__all__ = [
    "RegularizedData",
    "rho",
    "rho_d1",
    "rho_d2",
    "log_profile",
    "log_profile_laplacian",
    "build_backgrounds",
    "build_profiles",
    "build_sources",
    "build_coefficients",
    "build_weight",
    "build_all",
]

_LN2 = math.log(2.0)

# Degree-9 Hermite blend on t in [1/2, 1], written in s = 2t - 1 in [0, 1].
# Matches value and four derivatives of ln t at t = 1/2 and of 0 at t = 1,
# so the cutoff is C^4 and the annulus source below is C^2.  A C^2 source
# keeps the trapezoid error of its integral far below the 1e-5 identity
# tolerance on the default grid (a merely continuous source leaves
# oscillatory quadrature error two orders larger).  The first five
# coefficients are the Taylor coefficients of ln((1+s)/2); the rest solve
# the five vanishing conditions at s = 1 (exact rationals in ln 2).
_BLEND = np.array([
    -_LN2,                        # s^0
    1.0,                          # s^1
    -0.5,                         # s^2
    1.0 / 3.0,                    # s^3
    -0.25,                        # s^4
    -225.0 / 4.0 + 126.0 * _LN2,  # s^5
    547.0 / 3.0 - 420.0 * _LN2,   # s^6
    -459.0 / 2.0 + 540.0 * _LN2,  # s^7
    527.0 / 4.0 - 315.0 * _LN2,   # s^8
    -347.0 / 12.0 + 70.0 * _LN2,  # s^9
])
_BLEND_D1 = _BLEND[1:] * np.arange(1, len(_BLEND))
_BLEND_D2 = _BLEND_D1[1:] * np.arange(1, len(_BLEND_D1))


def _polyval(coeffs: np.ndarray, s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    for c in coeffs[::-1]:
        out = out * s + c
    return out


def rho(t):
    """Smooth nonpositive increasing cutoff: ln t below 1/2, zero above 1.

    C^4 across both seams; rejects t <= 0.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr <= 0.0):
        raise ParameterError("rho requires t > 0")
    out = np.zeros_like(t_arr)
    lo = t_arr <= 0.5
    mid = (t_arr > 0.5) & (t_arr < 1.0)
    out[lo] = np.log(t_arr[lo])
    out[mid] = _polyval(_BLEND, 2.0 * t_arr[mid] - 1.0)
    return out if np.ndim(t) else float(out)


def rho_d1(t):
    """First derivative of the cutoff."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr <= 0.0):
        raise ParameterError("rho requires t > 0")
    out = np.zeros_like(t_arr)
    lo = t_arr <= 0.5
    mid = (t_arr > 0.5) & (t_arr < 1.0)
    out[lo] = 1.0 / t_arr[lo]
    out[mid] = 2.0 * _polyval(_BLEND_D1, 2.0 * t_arr[mid] - 1.0)
    return out if np.ndim(t) else float(out)


def rho_d2(t):
    """Second derivative of the cutoff."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr <= 0.0):
        raise ParameterError("rho requires t > 0")
    out = np.zeros_like(t_arr)
    lo = t_arr <= 0.5
    mid = (t_arr > 0.5) & (t_arr < 1.0)
    out[lo] = -1.0 / t_arr[lo] ** 2
    out[mid] = 4.0 * _polyval(_BLEND_D2, 2.0 * t_arr[mid] - 1.0)
    return out if np.ndim(t) else float(out)


# ---------------------------------------------------------------------------
# Radial closed forms shared with the 1D oracle
# ---------------------------------------------------------------------------

def background_log(r, delta: float):
    """One unit-vortex background 2*rho(r/delta), clamped at LOG_FLOOR."""
    r_arr = np.asarray(r, dtype=np.float64)
    t = np.maximum(r_arr / delta, 1e-304)
    out = 2.0 * rho(t)
    out = np.maximum(out, LOG_FLOOR)
    return out if np.ndim(r) else float(out)


def vortex_source_bump(r, delta: float):
    """Smeared source of one unit vortex, supported on delta/2 <= r <= delta.

    Equals minus the classical Laplacian of the background 2*rho(r/delta)
    away from the center (the log core is harmonic, the outside is zero),
    so its integral over the plane is exactly 4*pi.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    t = r_arr / delta
    out = np.zeros_like(t)
    mid = (t > 0.5) & (t < 1.0)
    tm = t[mid]
    out[mid] = -(2.0 / delta**2) * (rho_d2(tm) + rho_d1(tm) / tm)
    return out if np.ndim(r) else float(out)


def _log_series(s: np.ndarray) -> np.ndarray:
    # Degree-5 truncation of ln(1+s); used for r < 1 with s = r^2 - 1.
    return s * (1.0 + s * (-0.5 + s * (1.0 / 3.0 + s * (-0.25 + s * 0.2))))


def log_profile(r):
    """Unit log profile: ln r for r >= 1, (1/2) S5(r^2 - 1) inside.

    S5 is the degree-5 truncated series of ln(1+s), which makes the
    profile C^4 across r = 1 and finite at the origin.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    out = np.empty_like(r_arr)
    outer = r_arr >= 1.0
    out[outer] = np.log(r_arr[outer])
    inner = ~outer
    out[inner] = 0.5 * _log_series(r_arr[inner] ** 2 - 1.0)
    return out if np.ndim(r) else float(out)


def log_profile_laplacian(r):
    """Analytic Laplacian of the unit log profile: 10 (r^2-1)^4 inside r < 1.

    The log tail is harmonic; the interior follows from the series
    (cross terms in (1+s) S5'' + S5' telescope to 5 s^4).  Its integral
    over the unit disk is exactly 2*pi.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r_arr)
    inner = r_arr < 1.0
    s = r_arr[inner] ** 2 - 1.0
    out[inner] = 10.0 * s**4
    return out if np.ndim(r) else float(out)


# ---------------------------------------------------------------------------
# Field builders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularizedData:
    """All regularization fields for one parameter set on one grid."""

    u0: ScalarField
    v0: ScalarField
    g1: ScalarField
    g2: ScalarField
    u3: ScalarField
    v3: ScalarField
    f: ScalarField
    h: ScalarField
    U: ScalarField
    V: ScalarField
    h0: ScalarField
    mu_mass: float

    @property
    def grid(self) -> Grid:
        return self.u0.grid


def _family_fields(
    grid: Grid, centers: list[tuple[float, float, int]], delta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Background and smeared source summed over one vortex family."""
    X, Y = grid.nodes()
    bg = np.zeros((grid.n, grid.n))
    src = np.zeros((grid.n, grid.n))
    for cx, cy, mult in centers:
        r = np.hypot(X - cx, Y - cy)
        bg += mult * background_log(r, delta)
        src += mult * vortex_source_bump(r, delta)
    bg = np.maximum(bg, LOG_FLOOR)
    return bg, src


def build_backgrounds(
    params: ModelParams, grid: Grid
) -> tuple[ScalarField, ScalarField, ScalarField, ScalarField]:
    """Backgrounds u0, v0 and smeared sources g1, g2 for both families.

    u0 <= 0 and vanishes identically outside the union of delta-balls
    around the up-vortices; integral(g1) = 4*pi*N1 up to quadrature.
    ModelParams has already rejected overlapping balls, which would break
    the disjoint-cover construction.
    """
    d = params.delta_effective
    u0_vals, g1_vals = _family_fields(grid, params.up_centers(), d)
    v0_vals, g2_vals = _family_fields(grid, params.down_centers(), d)
    return (
        ScalarField(grid, u0_vals),
        ScalarField(grid, g1_vals),
        ScalarField(grid, v0_vals),
        ScalarField(grid, g2_vals),
    )


def build_profiles(params: ModelParams, grid: Grid) -> tuple[ScalarField, ScalarField]:
    """Log profiles u3 = alpha0 * L(r) and v3 = -beta0 * L(r)."""
    r = np.sqrt(grid.radius_sq())
    L = log_profile(r)
    return (
        ScalarField(grid, params.alpha0 * L),
        ScalarField(grid, -params.beta0 * L),
    )


def build_sources(
    params: ModelParams,
    grid: Grid,
    backgrounds: tuple[ScalarField, ScalarField, ScalarField, ScalarField],
    profiles: tuple[ScalarField, ScalarField],
) -> tuple[ScalarField, ScalarField]:
    """Compactly supported sources of the triangular system.

        f = -lap(u3) - (2 k12/k11) g1 + 2 g2,   integral(f) = -2 pi alpha
        h = -lap(v3) - (2 k12/k11) g1,          integral(h) = +2 pi beta

    The profile Laplacians are the analytic closed forms (zero outside
    the unit disk), so f and h vanish exactly outside the unit disk and
    the vortex annuli.
    """
    del profiles  # profile content enters through the analytic Laplacian
    K = params.coupling
    r = np.sqrt(grid.radius_sq())
    lap_L = log_profile_laplacian(r)
    g1 = backgrounds[1].values
    g2 = backgrounds[3].values
    c = 2.0 * K.k12 / K.k11
    f_vals = -params.alpha0 * lap_L - c * g1 + 2.0 * g2
    h_vals = params.beta0 * lap_L - c * g1
    return ScalarField(grid, f_vals), ScalarField(grid, h_vals)


def build_coefficients(
    params: ModelParams,
    grid: Grid,
    backgrounds: tuple[ScalarField, ScalarField, ScalarField, ScalarField],
    profiles: tuple[ScalarField, ScalarField],
) -> tuple[ScalarField, ScalarField]:
    """Positive coefficient fields of the exponential nonlinearities.

        U = exp(-|x|^2 + u0 - (k11/2k12) v3)
        V = exp(-|x|^2 + v0 + (u3 - v3)/2)

    Both are O(exp(-|x|)) at large |x|; U vanishes at up-vortex nodes
    only through the clamped u0 (the quadratic zeros reappear in the
    reconstructed densities).
    """
    K = params.coupling
    if K.k12 == 0.0:
        raise ParameterError("requires k12 != 0 (p != q)")
    u0, _, v0, _ = backgrounds
    u3, v3 = profiles
    r_sq = grid.radius_sq()
    exp_u = -r_sq + u0.values - (K.k11 / (2.0 * K.k12)) * v3.values
    exp_v = -r_sq + v0.values + 0.5 * (u3.values - v3.values)
    return ScalarField(grid, np.exp(exp_u)), ScalarField(grid, np.exp(exp_v))


def build_weight(params: ModelParams, grid: Grid) -> tuple[ScalarField, float]:
    """Weight h0 = (1+|x|^2)^(-kappa/2) and its total mass.

    The tail matches the required |x|^(-kappa) decay (kappa > 4) while
    staying smooth at the origin and radially nonincreasing.
    """
    if params.kappa <= 4.0:
        raise ParameterError(f"requires kappa > 4, got kappa={params.kappa}")
    h0_vals = (1.0 + grid.radius_sq()) ** (-params.kappa / 2.0)
    h0 = ScalarField(grid, h0_vals)
    return h0, trapezoid_integral(h0)


def build_all(params: ModelParams, grid: Grid | None = None) -> RegularizedData:
    """Assemble every regularization field for one parameter set."""
    if grid is None:
        grid = params.grid()
    backgrounds = build_backgrounds(params, grid)
    profiles = build_profiles(params, grid)
    f, h = build_sources(params, grid, backgrounds, profiles)
    U, V = build_coefficients(params, grid, backgrounds, profiles)
    h0, mu_mass = build_weight(params, grid)
    u0, g1, v0, g2 = backgrounds
    u3, v3 = profiles
    return RegularizedData(
        u0=u0, v0=v0, g1=g1, g2=g2, u3=u3, v3=v3,
        f=f, h=h, U=U, V=V, h0=h0, mu_mass=mu_mass,
    )

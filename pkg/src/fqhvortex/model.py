"""Shared numerical primitives: parameters, coupling matrix, grid, fields.

Everything downstream (regularization, functionals, solvers, checks) is
built on the types here.  All types are immutable after construction and
all operations are pure, so field-wise work can be evaluated in parallel
without shared mutable state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ParameterError",
    "CouplingMatrix",
    "coupling_from",
    "Grid",
    "ScalarField",
    "ModelParams",
    "trapezoid_integral",
    "laplacian",
    "gradient_sq_integral",
]

# Nodal log-fields are clamped here instead of -inf when a vortex center
# coincides with a grid node; exp(-1400.0) underflows to exactly 0.0.
LOG_FLOOR = -1400.0


class ParameterError(ValueError):
    """Raised when model parameters violate an admissibility condition."""


# ---------------------------------------------------------------------------
# Coupling matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric 2x2 layer-coupling matrix (1/p)[[p+q, p-q], [p-q, p+q]].

    Only the two independent entries and the determinant are stored; the
    matrix is symmetric with k21 = k12 and k22 = k11.
    """

    k11: float
    k12: float
    det: float

    @property
    def eigenvalues(self) -> tuple[float, float]:
        # k11 + k12 = 2 and k11 - k12 = 2q/p exactly.
        return (self.k11 + self.k12, self.k11 - self.k12)

    @property
    def positive_definite(self) -> bool:
        return self.eigenvalues[0] > 0.0 and self.eigenvalues[1] > 0.0

    @property
    def classification(self) -> str:
        return "positive-definite" if self.positive_definite else "indefinite"

    @property
    def sigma(self) -> float:
        """Weight det/k12**2 multiplying the second-field terms of the action."""
        if self.k12 == 0.0:
            raise ParameterError("sigma undefined for k12 = 0 (requires p != q)")
        return self.det / self.k12**2

    def as_array(self) -> np.ndarray:
        return np.array([[self.k11, self.k12], [self.k12, self.k11]])


def coupling_from(p: float, q: float) -> CouplingMatrix:
    """Build the coupling matrix from the two layer parameters.

    Requires p > 0 and q != 0 (nondegenerate layers) and p != q (a
    genuinely coupled system; p = q would give k12 = 0 and decouple).
    The determinant is stored as 4q/p, which is exact and free of the
    cancellation in k11**2 - k12**2.
    """
    if not (np.isfinite(p) and np.isfinite(q)):
        raise ParameterError("p and q must be finite")
    if p <= 0.0:
        raise ParameterError(f"requires p > 0, got p={p}")
    if q == 0.0:
        raise ParameterError("requires q != 0")
    if p == q:
        raise ParameterError("requires p != q (coupled system)")
    return CouplingMatrix(k11=(p + q) / p, k12=(p - q) / p, det=4.0 * q / p)


# ---------------------------------------------------------------------------
# Grid and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid on the truncated square [-R, R]^2.

    n is odd so the origin is a node (profile centers sit on the grid),
    and n >= 33 keeps the one-sided boundary stencils meaningful.
    """

    R: float
    n: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.R) and self.R > 0.0):
            raise ParameterError(f"requires R > 0, got R={self.R}")
        if self.n < 33:
            raise ParameterError(f"requires n >= 33, got n={self.n}")
        if self.n % 2 == 0:
            raise ParameterError(f"requires odd n (origin must be a node), got n={self.n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.R / (self.n - 1)

    def axis(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.n)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as (X, Y) arrays with values[i, j] <-> (x_i, y_j)."""
        x = self.axis()
        return np.meshgrid(x, x, indexing="ij")

    def radius_sq(self) -> np.ndarray:
        X, Y = self.nodes()
        return X**2 + Y**2

    def trapezoid_weights(self) -> np.ndarray:
        """Product trapezoid weights; integral(f) ~= sum(w * f)."""
        w1 = np.full(self.n, self.spacing)
        w1[0] *= 0.5
        w1[-1] *= 0.5
        return np.outer(w1, w1)


@dataclass(frozen=True)
class ScalarField:
    """Nodal values of a scalar field on a Grid.

    values[i, j] is the value at (x_i, y_j).  Fields are combinable only
    on identical grids; values must be finite.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.grid.n, self.grid.n):
            raise ParameterError(
                f"field shape {vals.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(vals)):
            raise ParameterError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    def same_grid(self, other: "ScalarField") -> None:
        if self.grid != other.grid:
            raise ParameterError("fields live on different grids")

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self.same_grid(other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self.same_grid(other)
        return ScalarField(self.grid, self.values - other.values)


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

def _group_points(points: Sequence[Sequence[float]]) -> list[tuple[float, float, int]]:
    """Collapse repeated points into (x, y, multiplicity) triples.

    Repetition of a vortex center encodes multiplicity; the covering
    construction treats m coincident unit vortices as one center of
    multiplicity m.
    """
    grouped: dict[tuple[float, float], int] = {}
    for pt in points:
        if len(pt) != 2:
            raise ParameterError(f"vortex point {pt!r} is not a 2D point")
        key = (float(pt[0]), float(pt[1]))
        if not (np.isfinite(key[0]) and np.isfinite(key[1])):
            raise ParameterError(f"vortex point {pt!r} is not finite")
        grouped[key] = grouped.get(key, 0) + 1
    return [(x, y, m) for (x, y), m in grouped.items()]


@dataclass(frozen=True)
class ModelParams:
    """Physical and regularization parameters for one problem instance.

    vortices_up / vortices_down are the prescribed zeros of the two layer
    densities (repetition = multiplicity).  alpha0 and beta0 set the
    logarithmic profile amplitudes; the derived totals

        alpha = alpha0 + (4 k12/k11) N1 - 4 N2 > 0
        beta  = beta0  - (4 k12/k11) N1      > 0

    must both be positive.  kappa > 4 is the power-weight exponent, delta
    the vortex ball radius (None selects the default rule), rho_bar the
    mean density in code units, and (R, n) the grid.
    """

    p: float
    q: float
    vortices_up: tuple[tuple[float, float], ...] = ()
    vortices_down: tuple[tuple[float, float], ...] = ()
    alpha0: float = 1.0
    beta0: float = 1.0
    kappa: float = 5.0
    delta: float | None = None
    rho_bar: float = 1.0
    R: float = 6.0
    n: int = 513

    def __post_init__(self) -> None:
        K = coupling_from(self.p, self.q)  # validates p, q
        if K.k11 == 0.0:
            raise ParameterError("requires k11 != 0 (q = -p is excluded)")
        object.__setattr__(self, "vortices_up", tuple(tuple(map(float, pt)) for pt in self.vortices_up))
        object.__setattr__(self, "vortices_down", tuple(tuple(map(float, pt)) for pt in self.vortices_down))
        _group_points(self.vortices_up)
        _group_points(self.vortices_down)
        if self.kappa <= 4.0:
            raise ParameterError(f"requires kappa > 4, got kappa={self.kappa}")
        if self.rho_bar <= 0.0:
            raise ParameterError(f"requires rho_bar > 0, got {self.rho_bar}")
        Grid(self.R, self.n)  # validates R, n
        d = self.delta_effective
        if not (0.0 < d):
            raise ParameterError(f"requires delta > 0, got delta={d}")
        ratio = self.N1  # noqa: F841  (forces alpha/beta evaluation below)
        c = 4.0 * K.k12 / K.k11
        alpha0_min = -c * self.N1 + 4.0 * self.N2
        beta0_min = c * self.N1
        if not self.alpha0 > max(alpha0_min, 0.0):
            raise ParameterError(
                f"requires alpha0 > max(-(4 k12/k11) N1 + 4 N2, 0) = "
                f"{max(alpha0_min, 0.0):.6g}, got alpha0={self.alpha0}"
            )
        if not self.beta0 > max(beta0_min, 0.0):
            raise ParameterError(
                f"requires beta0 > max((4 k12/k11) N1, 0) = "
                f"{max(beta0_min, 0.0):.6g}, got beta0={self.beta0}"
            )
        # alpha > 0 / beta > 0 follow from the alpha0/beta0 bounds, but are
        # asserted directly since they gate every admissibility argument.
        if not self.alpha > 0.0:
            raise ParameterError(f"requires alpha > 0, got alpha={self.alpha:.6g}")
        if not self.beta > 0.0:
            raise ParameterError(f"requires beta > 0, got beta={self.beta:.6g}")
        self._check_vortex_geometry()

    def _check_vortex_geometry(self) -> None:
        d = self.delta_effective
        bound = self.R - 2.0 * d
        for fam_name, fam in (("vortices_up", self.vortices_up), ("vortices_down", self.vortices_down)):
            centers = _group_points(fam)
            for x, y, _ in centers:
                if not (abs(x) < bound and abs(y) < bound):
                    raise ParameterError(
                        f"{fam_name} point ({x}, {y}) must lie strictly inside "
                        f"[-R+2delta, R-2delta]^2 = [{-bound:.6g}, {bound:.6g}]^2"
                    )
            for i in range(len(centers)):
                for j in range(i + 1, len(centers)):
                    dx = centers[i][0] - centers[j][0]
                    dy = centers[i][1] - centers[j][1]
                    if dx * dx + dy * dy < (2.0 * d) ** 2:
                        raise ParameterError(
                            f"{fam_name} delta-balls overlap: distinct centers "
                            f"{centers[i][:2]} and {centers[j][:2]} are closer than 2*delta={2*d:.6g}"
                        )

    # -- derived quantities -------------------------------------------------

    @property
    def coupling(self) -> CouplingMatrix:
        return coupling_from(self.p, self.q)

    @property
    def N1(self) -> int:
        return len(self.vortices_up)

    @property
    def N2(self) -> int:
        return len(self.vortices_down)

    @property
    def alpha(self) -> float:
        K = self.coupling
        return self.alpha0 + (4.0 * K.k12 / K.k11) * self.N1 - 4.0 * self.N2

    @property
    def beta(self) -> float:
        K = self.coupling
        return self.beta0 - (4.0 * K.k12 / K.k11) * self.N1

    @property
    def delta_effective(self) -> float:
        """Ball radius: explicit delta, or min(1, d_min/2)/2 by default.

        d_min is the smallest pairwise distance between distinct centers
        within either family (infinite when every family has at most one
        distinct center).
        """
        if self.delta is not None:
            return float(self.delta)
        d_min = np.inf
        for fam in (self.vortices_up, self.vortices_down):
            centers = _group_points(fam)
            for i in range(len(centers)):
                for j in range(i + 1, len(centers)):
                    dx = centers[i][0] - centers[j][0]
                    dy = centers[i][1] - centers[j][1]
                    d_min = min(d_min, float(np.hypot(dx, dy)))
        return min(1.0, d_min / 2.0) / 2.0

    def grid(self) -> Grid:
        return Grid(self.R, self.n)

    def up_centers(self) -> list[tuple[float, float, int]]:
        return _group_points(self.vortices_up)

    def down_centers(self) -> list[tuple[float, float, int]]:
        return _group_points(self.vortices_down)


# ---------------------------------------------------------------------------
# Quadrature and difference operators
# ---------------------------------------------------------------------------

def trapezoid_integral(field: ScalarField) -> float:
    """2D trapezoidal rule over [-R, R]^2; exact for bilinear fields."""
    return float(np.sum(field.grid.trapezoid_weights() * field.values))


def laplacian(field: ScalarField) -> ScalarField:
    """Five-point Laplacian; one-sided second-order stencils on the boundary.

    Interior nodes use the standard 5-point stencil.  Boundary rows and
    columns use the one-sided second derivative (2, -5, 4, -1)/h^2, which
    is exact on quadratics, so affine fields are annihilated everywhere
    and |x|^2 maps to the constant 4.
    """
    v = field.values
    h2 = field.grid.spacing ** 2

    def second_derivative(a: np.ndarray, axis: int) -> np.ndarray:
        d = np.empty_like(a)
        mid = np.moveaxis(d, axis, 0)
        src = np.moveaxis(a, axis, 0)
        mid[1:-1] = src[2:] - 2.0 * src[1:-1] + src[:-2]
        mid[0] = 2.0 * src[0] - 5.0 * src[1] + 4.0 * src[2] - src[3]
        mid[-1] = 2.0 * src[-1] - 5.0 * src[-2] + 4.0 * src[-3] - src[-4]
        return d

    out = (second_derivative(v, 0) + second_derivative(v, 1)) / h2
    return ScalarField(field.grid, out)


def _central_gradient(field: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    v = field.values
    h = field.grid.spacing
    gx = np.empty_like(v)
    gy = np.empty_like(v)
    gx[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2.0 * h)
    gx[0, :] = (-3.0 * v[0, :] + 4.0 * v[1, :] - v[2, :]) / (2.0 * h)
    gx[-1, :] = (3.0 * v[-1, :] - 4.0 * v[-2, :] + v[-3, :]) / (2.0 * h)
    gy[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * h)
    gy[:, 0] = (-3.0 * v[:, 0] + 4.0 * v[:, 1] - v[:, 2]) / (2.0 * h)
    gy[:, -1] = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) / (2.0 * h)
    return gx, gy


def gradient_sq_integral(field: ScalarField) -> float:
    """Trapezoidal integral of |grad field|^2 using central differences."""
    gx, gy = _central_gradient(field)
    w = field.grid.trapezoid_weights()
    return float(np.sum(w * (gx * gx + gy * gy)))

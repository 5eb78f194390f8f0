"""Weighted-space decomposition, constrained action, and its gradients.

The constrained problem is solved in reduced form: the unknowns are the
zero-mean components (primes) and the means are closed-form functions of
the primes that enforce both constraint integrals exactly at every
iterate.  The gradients returned here are the exact derivatives of the
discrete objects (differentiate-the-discretization), so central
finite differences of the values match them to roundoff.

Discretization conventions, used consistently everywhere:

* integrals: product trapezoid weights w,
* Dirichlet energy: half the sum of squared nodal differences over grid
  edges (the P1 triangulation energy, whose exact gradient is the
  unit-weight graph Laplacian A with natural boundary).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CouplingMatrix, Grid, ScalarField
from .regularize import RegularizedData

__all__ = [
    "InadmissibleRegimeError",
    "OverflowGuardError",
    "Decomposition",
    "ConstraintTargets",
    "dmu_decompose",
    "constraint_integrals",
    "closed_form_means",
    "reduced_action",
    "reduced_action_grad",
    "full_action",
    "full_action_grad",
    "DiscreteProblem",
    "graph_laplacian_apply",
    "dirichlet_energy",
]

EXPONENT_CAP = 700.0


class InadmissibleRegimeError(ValueError):
    """Parameters put a constraint target on the wrong side of zero."""


class OverflowGuardError(FloatingPointError):
    """A nodal exponent exceeded the cap; the iterate has diverged."""


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    """Split of a field into its weighted mean and zero-mean remainder."""

    mean: float
    prime: ScalarField


def dmu_decompose(field: ScalarField, h0: ScalarField, mu_mass: float) -> Decomposition:
    """Decompose field = mean + prime with integral(prime * h0 dx) = 0."""
    if mu_mass <= 0.0:
        raise ValueError(f"requires mu_mass > 0, got {mu_mass}")
    field.same_grid(h0)
    w = field.grid.trapezoid_weights()
    mean = float(np.sum(w * h0.values * field.values) / mu_mass)
    return Decomposition(mean=mean, prime=ScalarField(field.grid, field.values - mean))


# ---------------------------------------------------------------------------
# Difference operators of the discrete action
# ---------------------------------------------------------------------------

def graph_laplacian_apply(x: np.ndarray) -> np.ndarray:
    """Unit-weight graph Laplacian of the grid (natural boundary rows).

    Exact gradient of dirichlet_energy; equals -spacing^2 * (five-point
    Laplacian) at interior nodes.
    """
    out = np.zeros_like(x)
    dx = x[1:, :] - x[:-1, :]
    out[1:, :] += dx
    out[:-1, :] -= dx
    dy = x[:, 1:] - x[:, :-1]
    out[:, 1:] += dy
    out[:, :-1] -= dy
    return out


def dirichlet_energy(x: np.ndarray) -> float:
    """Half the sum of squared nodal differences; consistent with
    (1/2) integral |grad x|^2 on the uniform grid."""
    dx = x[1:, :] - x[:-1, :]
    dy = x[:, 1:] - x[:, :-1]
    return 0.5 * (float(np.sum(dx * dx)) + float(np.sum(dy * dy)))


# ---------------------------------------------------------------------------
# Constraint targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintTargets:
    """Prescribed values of the two constraint integrals.

    J1_target = pi*alpha*k11/det; J2_target = (pi/k12)(beta - alpha*k12^2/det).
    Both must be strictly positive for the constraints to be satisfiable.
    """

    J1_target: float
    J2_target: float

    @classmethod
    def from_parameters(cls, K: CouplingMatrix, alpha: float, beta: float) -> "ConstraintTargets":
        if K.k12 == 0.0:
            raise InadmissibleRegimeError("requires k12 != 0 (p != q)")
        j1 = np.pi * alpha * K.k11 / K.det
        j2 = (np.pi / K.k12) * (beta - alpha * K.k12**2 / K.det)
        if not j1 > 0.0:
            raise InadmissibleRegimeError(
                f"first constraint target pi*alpha*k11/det = {j1:.6g} must be positive "
                "(requires alpha > 0 and positive-definite coupling)"
            )
        if not j2 > 0.0:
            side = "beta > alpha*k12^2/det" if K.k12 > 0 else "0 < beta < alpha*k12^2/det"
            raise InadmissibleRegimeError(
                f"second constraint target (pi/k12)(beta - alpha*k12^2/det) = {j2:.6g} "
                f"must be positive (requires {side}, i.e. beta on the correct side of "
                f"(alpha/4)(p/q + q/p - 2) = {alpha * K.k12**2 / K.det:.6g})"
            )
        return cls(J1_target=float(j1), J2_target=float(j2))


# ---------------------------------------------------------------------------
# Discrete problem
# ---------------------------------------------------------------------------

class DiscreteProblem:
    """Precomputed arrays and exact value/gradient evaluations.

    Owns no mutable state beyond caches of constants; every evaluation is
    a pure function of its argument vector.
    """

    def __init__(
        self,
        data: RegularizedData,
        K: CouplingMatrix,
        alpha: float | None = None,
        beta: float | None = None,
    ):
        grid = data.grid
        self.grid = grid
        self.K = K
        self.alpha = None if alpha is None else float(alpha)
        self.beta = None if beta is None else float(beta)
        self.sigma = K.sigma
        self._targets: ConstraintTargets | None = None

        self.w = grid.trapezoid_weights()
        self.f = data.f.values
        self.h = data.h.values
        self.U = data.U.values
        self.V = data.V.values
        self.h0 = data.h0.values
        self.c = self.w * self.h0
        self.mu_mass = float(np.sum(self.c))
        self.c_norm_sq = float(np.sum(self.c * self.c))
        self.wf = self.w * self.f
        self.wh = self.w * self.h
        self.sum_wf = float(np.sum(self.wf))
        self.sum_wh = float(np.sum(self.wh))
        # h0-direction used to project returned gradient densities.
        wh0_sq = float(np.sum(self.w * self.h0 * self.h0))
        self._h0_scale = wh0_sq

        with np.errstate(divide="ignore"):
            self.lnU = np.where(self.U > 0.0, np.log(np.maximum(self.U, 1e-320)), -np.inf)
            self.lnV = np.where(self.V > 0.0, np.log(np.maximum(self.V, 1e-320)), -np.inf)

        # exponent coefficient of the U-term
        self.e2 = -K.k11 / (2.0 * K.k12)
        self.n_nodes = grid.n * grid.n

    @property
    def targets(self) -> ConstraintTargets:
        """Constraint targets; only the reduced (constrained) path needs them."""
        if self._targets is None:
            if self.alpha is None or self.beta is None:
                raise InadmissibleRegimeError("constraint targets require alpha and beta")
            self._targets = ConstraintTargets.from_parameters(self.K, self.alpha, self.beta)
        return self._targets

    # -- vector packing ------------------------------------------------------

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.grid.n
        return z[: n * n].reshape(n, n), z[n * n :].reshape(n, n)

    def join(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.concatenate([a.ravel(), b.ravel()])

    # -- subspace helpers ----------------------------------------------------

    def dmu_mean(self, x: np.ndarray) -> float:
        return float(np.sum(self.c * x) / self.mu_mass)

    def remove_mean(self, x: np.ndarray) -> np.ndarray:
        return x - self.dmu_mean(x)

    def project_iterate(self, z: np.ndarray) -> np.ndarray:
        a, b = self.split(z)
        return self.join(self.remove_mean(a), self.remove_mean(b))

    def project_gradient(self, g2d: np.ndarray) -> np.ndarray:
        """Euclidean-orthogonal projection killing the constraint direction."""
        coef = float(np.sum(self.c * g2d)) / self.c_norm_sq
        return g2d - coef * self.c

    def project_density(self, gamma: np.ndarray) -> np.ndarray:
        """Remove the h0-multiple so the density has zero weighted mean while
        pairings against zero-mean directions are unchanged."""
        coef = float(np.sum(self.w * self.h0 * gamma)) / self._h0_scale
        return gamma - coef * self.h0

    # -- guarded exponentials --------------------------------------------------

    def _guard(self, exponent: np.ndarray, label: str) -> None:
        m = float(np.max(exponent))
        if not np.isfinite(m) or m > EXPONENT_CAP:
            raise OverflowGuardError(
                f"{label} exponent reached {m:.3g} > {EXPONENT_CAP:.0f}; iterate diverged"
            )

    def masses(self, xp: np.ndarray, zp: np.ndarray) -> tuple[float, float, np.ndarray, np.ndarray]:
        """Weighted exponential masses S1, S2 and their integrand arrays."""
        a1 = 0.5 * (xp - zp)
        a2 = self.e2 * zp
        with np.errstate(invalid="ignore"):
            self._guard(self.lnV + a1, "V-term")
            self._guard(self.lnU + a2, "U-term")
        ev = self.V * np.exp(a1)
        eu = self.U * np.exp(a2)
        S1 = float(np.sum(self.w * ev))
        S2 = float(np.sum(self.w * eu))
        return S1, S2, ev, eu

    def means(self, xp: np.ndarray, zp: np.ndarray) -> tuple[float, float]:
        S1, S2, _, _ = self.masses(xp, zp)
        zeta_bar = (2.0 * self.K.k12 / self.K.k11) * (np.log(S2) - np.log(self.targets.J2_target))
        xi_bar = zeta_bar + 2.0 * (np.log(self.targets.J1_target) - np.log(S1))
        return float(xi_bar), float(zeta_bar)

    # -- reduced (constrained) action -----------------------------------------

    def reduced_value_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        """Value and exact nodal gradient of the reduced action.

        The gradient is returned raw (no projection); the optimizer and
        the public op apply their respective projections.
        """
        xp, zp = self.split(z)
        K, sig = self.K, self.sigma
        S1, S2, ev, eu = self.masses(xp, zp)
        T1, T2 = self.targets.J1_target, self.targets.J2_target
        zeta_bar = (2.0 * K.k12 / K.k11) * (np.log(S2) - np.log(T2))
        xi_bar = zeta_bar + 2.0 * (np.log(T1) - np.log(S1))

        value = (
            dirichlet_energy(xp)
            + sig * dirichlet_energy(zp)
            + float(np.sum(self.wf * xp))
            + sig * float(np.sum(self.wh * zp))
            - 2.0 * np.pi * self.alpha * xi_bar
            + 2.0 * np.pi * self.beta * sig * zeta_bar
        )

        m1 = T1 / S1
        m2 = T2 / S2
        cv = 2.0 * K.det / K.k11
        cu = 2.0 * K.det / K.k12
        g_xi = graph_laplacian_apply(xp) + self.w * (self.f + cv * m1 * ev)
        g_zeta = sig * graph_laplacian_apply(zp) + self.w * (
            sig * self.h - cv * m1 * ev - cu * m2 * eu
        )
        return value, self.join(g_xi, g_zeta)

    # -- full (unconstrained) action -------------------------------------------

    def full_value(self, z: np.ndarray) -> float:
        xi, zeta = self.split(z)
        K, sig = self.K, self.sigma
        a1 = 0.5 * (xi - zeta)
        a2 = self.e2 * zeta
        with np.errstate(invalid="ignore"):
            self._guard(self.lnV + a1, "V-term")
            self._guard(self.lnU + a2, "U-term")
        cve = 4.0 * K.det / K.k11
        bulk = cve * (self.V * np.expm1(a1) + self.U * np.expm1(a2))
        return (
            dirichlet_energy(xi)
            + sig * dirichlet_energy(zeta)
            + float(np.sum(self.w * bulk))
            + float(np.sum(self.wf * xi))
            + sig * float(np.sum(self.wh * zeta))
        )

    def full_grad(self, z: np.ndarray) -> np.ndarray:
        xi, zeta = self.split(z)
        K, sig = self.K, self.sigma
        a1 = 0.5 * (xi - zeta)
        a2 = self.e2 * zeta
        with np.errstate(invalid="ignore"):
            self._guard(self.lnV + a1, "V-term")
            self._guard(self.lnU + a2, "U-term")
        ev = self.V * np.exp(a1)
        eu = self.U * np.exp(a2)
        cv = 2.0 * K.det / K.k11
        cu = 2.0 * K.det / K.k12
        g_xi = graph_laplacian_apply(xi) + self.w * (self.f + cv * ev)
        g_zeta = sig * graph_laplacian_apply(zeta) + self.w * (
            sig * self.h - cv * ev - cu * eu
        )
        return self.join(g_xi, g_zeta)

    def full_value_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        return self.full_value(z), self.full_grad(z)

    # -- closed-form ray through constant pairs --------------------------------

    def constant_ray_value(self, c: float) -> float:
        """Full action at the constant pair (c, c); the V-term cancels."""
        cve = 4.0 * self.K.det / self.K.k11
        S_U = float(np.sum(self.w * self.U))
        linear = self.sum_wf + self.sigma * self.sum_wh
        return cve * S_U * float(np.expm1(self.e2 * c)) + c * linear

    def constant_ray_minimum(self) -> tuple[float, float]:
        """Minimizing c and value of the full action along (c, c).

        Solves d/dc = 0 in closed form.  Raises InadmissibleRegimeError
        when the ray has no interior minimum (linear slope and
        exponential decay on the same side).
        """
        cve = 4.0 * self.K.det / self.K.k11
        S_U = float(np.sum(self.w * self.U))
        linear = self.sum_wf + self.sigma * self.sum_wh
        rhs = -linear / (cve * S_U * self.e2)
        if not rhs > 0.0:
            raise InadmissibleRegimeError(
                "constant ray has no interior minimum: linear coefficient "
                f"{linear:.6g} and exponent rate {self.e2:.6g} do not oppose"
            )
        c_star = float(np.log(rhs) / self.e2)
        return c_star, self.constant_ray_value(c_star)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def _check_zero_mean(prob: DiscreteProblem, arr: np.ndarray, name: str) -> None:
    m = abs(prob.dmu_mean(arr))
    scale = 1.0 + float(np.max(np.abs(arr)))
    if m > 1e-8 * scale:
        raise ValueError(f"{name} must have zero weighted mean (got mean {m:.3g})")


def constraint_integrals(
    xi: ScalarField, zeta: ScalarField, U: ScalarField, V: ScalarField, K: CouplingMatrix
) -> tuple[float, float]:
    """Trapezoidal values of the two constraint integrals for full fields.

    J1 = integral V exp((xi-zeta)/2); J2 = integral U exp(-(k11/2k12) zeta).
    Raises OverflowGuardError when any nodal exponent exceeds the cap.
    """
    xi.same_grid(zeta)
    xi.same_grid(U)
    xi.same_grid(V)
    w = xi.grid.trapezoid_weights()
    a1 = 0.5 * (xi.values - zeta.values)
    a2 = (-K.k11 / (2.0 * K.k12)) * zeta.values
    with np.errstate(divide="ignore", invalid="ignore"):
        lnV = np.where(V.values > 0.0, np.log(np.maximum(V.values, 1e-320)), -np.inf)
        lnU = np.where(U.values > 0.0, np.log(np.maximum(U.values, 1e-320)), -np.inf)
        for expo, label in ((lnV + a1, "V-term"), (lnU + a2, "U-term")):
            m = float(np.max(expo))
            if not np.isfinite(m) or m > EXPONENT_CAP:
                raise OverflowGuardError(
                    f"{label} exponent reached {m:.3g} > {EXPONENT_CAP:.0f}"
                )
    J1 = float(np.sum(w * V.values * np.exp(a1)))
    J2 = float(np.sum(w * U.values * np.exp(a2)))
    return J1, J2


def closed_form_means(
    xi_prime: ScalarField,
    zeta_prime: ScalarField,
    targets: ConstraintTargets,
    U: ScalarField,
    V: ScalarField,
    K: CouplingMatrix,
    alpha: float,
    beta: float,
) -> tuple[float, float]:
    """Means that make (mean + prime) satisfy both constraints exactly.

    zeta_bar = (2 k12/k11) [ln S2 - ln J2_target],
    xi_bar   = zeta_bar + 2 [ln J1_target - ln S1],

    where S1, S2 are the prime-field exponential masses.  Raising on a
    nonpositive target happens in ConstraintTargets; alpha/beta are
    accepted for interface symmetry with the action evaluations.
    """
    del alpha, beta
    xi_prime.same_grid(zeta_prime)
    w = xi_prime.grid.trapezoid_weights()
    a1 = 0.5 * (xi_prime.values - zeta_prime.values)
    a2 = (-K.k11 / (2.0 * K.k12)) * zeta_prime.values
    if float(np.max(a1)) > EXPONENT_CAP or float(np.max(a2)) > EXPONENT_CAP:
        raise OverflowGuardError("prime exponent exceeds cap")
    S1 = float(np.sum(w * V.values * np.exp(a1)))
    S2 = float(np.sum(w * U.values * np.exp(a2)))
    zeta_bar = (2.0 * K.k12 / K.k11) * (np.log(S2) - np.log(targets.J2_target))
    xi_bar = zeta_bar + 2.0 * (np.log(targets.J1_target) - np.log(S1))
    return float(xi_bar), float(zeta_bar)


def reduced_action(
    xi_prime: ScalarField,
    zeta_prime: ScalarField,
    data: RegularizedData,
    K: CouplingMatrix,
    alpha: float,
    beta: float,
) -> float:
    """Constrained action of zero-mean primes with closed-form means."""
    prob = DiscreteProblem(data, K, alpha, beta)
    _check_zero_mean(prob, xi_prime.values, "xi_prime")
    _check_zero_mean(prob, zeta_prime.values, "zeta_prime")
    value, _ = prob.reduced_value_grad(prob.join(xi_prime.values, zeta_prime.values))
    return value


def reduced_action_grad(
    xi_prime: ScalarField,
    zeta_prime: ScalarField,
    data: RegularizedData,
    K: CouplingMatrix,
    alpha: float,
    beta: float,
) -> tuple[ScalarField, ScalarField]:
    """Gradient densities of the reduced action, zero-weighted-mean projected.

    Pairing the returned fields against any zero-mean direction with the
    trapezoid weights reproduces the directional derivative exactly.
    """
    prob = DiscreteProblem(data, K, alpha, beta)
    _check_zero_mean(prob, xi_prime.values, "xi_prime")
    _check_zero_mean(prob, zeta_prime.values, "zeta_prime")
    _, g = prob.reduced_value_grad(prob.join(xi_prime.values, zeta_prime.values))
    g_xi, g_zeta = prob.split(g)
    with np.errstate(invalid="ignore"):
        gamma_xi = prob.project_density(g_xi / prob.w)
        gamma_zeta = prob.project_density(g_zeta / prob.w)
    return ScalarField(data.grid, gamma_xi), ScalarField(data.grid, gamma_zeta)


def full_action(
    xi: ScalarField, zeta: ScalarField, data: RegularizedData, K: CouplingMatrix
) -> float:
    """Unconstrained action over full fields; exactly zero at (0, 0)."""
    prob = DiscreteProblem(data, K)
    return prob.full_value(prob.join(xi.values, zeta.values))


def full_action_grad(
    xi: ScalarField, zeta: ScalarField, data: RegularizedData, K: CouplingMatrix
) -> tuple[ScalarField, ScalarField]:
    """First-variation densities of the unconstrained action."""
    prob = DiscreteProblem(data, K)
    g = prob.full_grad(prob.join(xi.values, zeta.values))
    g_xi, g_zeta = prob.split(g)
    return (
        ScalarField(data.grid, g_xi / prob.w),
        ScalarField(data.grid, g_zeta / prob.w),
    )

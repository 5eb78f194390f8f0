"""Regime validation, constrained minimization, and the saddle search.

The constrained minimization runs in reduced form over zero-mean primes
(means enforced in closed form at every iterate); the saddle search
deforms a path of field pairs under the unconstrained action and then
polishes the path maximum to a genuine critical point by driving the
gradient norm to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .functional import DiscreteProblem, InadmissibleRegimeError
from .model import CouplingMatrix, ModelParams, ParameterError, ScalarField
from .optim import OptResult, grid_inverse_metric, lbfgs
from .regularize import RegularizedData

__all__ = [
    "RegimeError",
    "EndpointNotNegativeError",
    "RegimeInfo",
    "SolverConfig",
    "SolutionBundle",
    "validate_regime",
    "minimize",
    "mountain_pass",
]

MIN_NEG_K12 = "min-neg-k12"
MIN_POS_K12 = "min-pos-k12"
MOUNTAIN_PASS = "mountain-pass"


class RegimeError(ParameterError):
    """Parameters fall in no admissible solution regime."""


class EndpointNotNegativeError(RuntimeError):
    """No constant pair with negative action exists for the path endpoint."""


@dataclass(frozen=True)
class RegimeInfo:
    """Classified solution regime with the bounds that were checked."""

    tag: str
    mountain_pass_eligible: bool
    beta_threshold: float      # (alpha/4)(p/q + q/p - 2) = alpha k12^2 / det
    mp_alpha_bound: float      # 8 det / (k11 k12) for k12 > 0, else nan


def validate_regime(
    params: ModelParams, K: CouplingMatrix, alpha: float, beta: float
) -> RegimeInfo:
    """Classify (alpha, beta) against the admissible regions.

    min-neg-k12: k12 < 0 and 0 < beta < alpha k12^2/det;
    min-pos-k12: k12 > 0 and beta > alpha k12^2/det.  The latter is
    additionally saddle-search eligible when alpha < 8 det/(k11 k12).
    Indefinite couplings and parameters in neither region are rejected
    with the violated condition spelled out.
    """
    del params
    if not K.positive_definite:
        raise RegimeError(
            f"requires a positive definite coupling (q > 0); eigenvalues are "
            f"{K.eigenvalues[0]:.6g}, {K.eigenvalues[1]:.6g}"
        )
    if alpha <= 0.0:
        raise RegimeError(f"requires alpha > 0, got alpha={alpha:.6g}")
    threshold = alpha * K.k12**2 / K.det
    if K.k12 < 0.0:
        if not (0.0 < beta < threshold):
            raise RegimeError(
                "requires 0 < beta < (alpha/4)(p/q + q/p - 2) = "
                f"{threshold:.6g} when q > p > 0; got beta={beta:.6g}"
            )
        return RegimeInfo(MIN_NEG_K12, False, threshold, float("nan"))
    if not beta > threshold:
        raise RegimeError(
            "requires beta > (alpha/4)(p/q + q/p - 2) = "
            f"{threshold:.6g} when p > q > 0; got beta={beta:.6g}"
        )
    mp_bound = 8.0 * K.det / (K.k11 * K.k12)
    return RegimeInfo(MIN_POS_K12, alpha < mp_bound, threshold, mp_bound)


# ---------------------------------------------------------------------------
# Solver configuration and result bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Iteration and line-search controls shared by both solvers."""

    max_iters: int = 2000
    grad_tol: float = 1e-9
    memory: int = 10
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    path_points: int = 21
    deform_steps: int = 400
    c_endpoint: float | None = None
    use_inverse_metric: bool = True

    def __post_init__(self) -> None:
        if not self.grad_tol > 0.0:
            raise ParameterError(f"requires grad_tol > 0, got {self.grad_tol}")
        if self.path_points < 11:
            raise ParameterError(f"requires path_points >= 11, got {self.path_points}")
        if not (0.0 < self.shrink < 1.0):
            raise ParameterError(f"requires 0 < shrink < 1, got {self.shrink}")
        if self.max_iters < 1 or self.deform_steps < 1:
            raise ParameterError("iteration budgets must be positive")
        if not (0.0 < self.sufficient_decrease < 0.5):
            raise ParameterError(
                f"requires 0 < sufficient_decrease < 1/2, got {self.sufficient_decrease}"
            )


@dataclass(frozen=True)
class SolutionBundle:
    """A solved field pair with trace and convergence metadata.

    xi and zeta are full fields (means included); trace rows are
    (iteration, objective value, gradient norm).  For minimization runs
    the accepted values are nonincreasing by the line-search contract.
    """

    xi: ScalarField
    zeta: ScalarField
    xi_bar: float
    zeta_bar: float
    regime: str
    trace: tuple[tuple[int, float, float], ...]
    converged: bool
    status: str
    value: float
    grad_norm: float
    info: dict = field(default_factory=dict)

    @property
    def xi_prime(self) -> ScalarField:
        return ScalarField(self.xi.grid, self.xi.values - self.xi_bar)

    @property
    def zeta_prime(self) -> ScalarField:
        return ScalarField(self.zeta.grid, self.zeta.values - self.zeta_bar)


# ---------------------------------------------------------------------------
# Constrained minimization
# ---------------------------------------------------------------------------

def _metric_shifts(prob: DiscreteProblem) -> tuple[float, float]:
    """Curvature floor for the inverse metric, from the zero iterate."""
    z0 = np.zeros(2 * prob.n_nodes)
    xp, zp = prob.split(z0)
    S1, S2, ev, eu = prob.masses(xp, zp)
    m1 = prob.targets.J1_target / S1
    m2 = prob.targets.J2_target / S2
    K = prob.K
    curv_xi = (K.det / K.k11) * m1 * float(np.mean(prob.w * ev))
    curv_zeta = curv_xi + abs(prob.e2) * (2.0 * K.det / abs(K.k12)) * m2 * float(
        np.mean(prob.w * eu)
    )
    floor = 1e-12
    return max(curv_xi, floor), max(curv_zeta, floor)


def minimize(
    params: ModelParams,
    data: RegularizedData,
    K: CouplingMatrix,
    config: SolverConfig = SolverConfig(),
) -> SolutionBundle:
    """Constrained minimizer of the reduced action.

    Limited-memory quasi-Newton over zero-mean primes with weighted-mean
    re-projection each iterate and an Armijo backtracking line search;
    the returned fields carry the closed-form means, so both constraint
    integrals hold exactly up to quadrature at every iterate including
    the last.
    """
    alpha, beta = params.alpha, params.beta
    regime = validate_regime(params, K, alpha, beta)
    prob = DiscreteProblem(data, K, alpha, beta)

    def value_and_grad(z: np.ndarray) -> tuple[float, np.ndarray]:
        val, g = prob.reduced_value_grad(z)
        g_xi, g_zeta = prob.split(g)
        return val, prob.join(prob.project_gradient(g_xi), prob.project_gradient(g_zeta))

    inverse_metric = None
    if config.use_inverse_metric:
        t1, t2 = _metric_shifts(prob)
        inverse_metric = grid_inverse_metric(
            prob.grid.n, (1.0, prob.sigma), (t1, t2)
        )

    def project_direction(d: np.ndarray) -> np.ndarray:
        a, b = prob.split(d)
        return prob.join(prob.project_gradient(a), prob.project_gradient(b))

    result = lbfgs(
        value_and_grad,
        np.zeros(2 * prob.n_nodes),
        grad_tol=config.grad_tol,
        max_iters=config.max_iters,
        memory=config.memory,
        shrink=config.shrink,
        sufficient_decrease=config.sufficient_decrease,
        project_iterate=prob.project_iterate,
        project_direction=project_direction,
        inverse_metric=inverse_metric,
    )

    xp, zp = prob.split(result.x)
    xi_bar, zeta_bar = prob.means(xp, zp)
    return SolutionBundle(
        xi=ScalarField(prob.grid, xp + xi_bar),
        zeta=ScalarField(prob.grid, zp + zeta_bar),
        xi_bar=xi_bar,
        zeta_bar=zeta_bar,
        regime=regime.tag,
        trace=tuple(result.trace),
        converged=result.converged,
        status=result.status,
        value=result.value,
        grad_norm=result.grad_norm,
        info={"iterations": result.iterations},
    )


# ---------------------------------------------------------------------------
# Saddle search on the unconstrained action
# ---------------------------------------------------------------------------

def _respace_path(path: np.ndarray) -> np.ndarray:
    """Reparametrize the polyline to uniform arclength (endpoints fixed)."""
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arclen = np.concatenate([[0.0], np.cumsum(seg)])
    total = arclen[-1]
    if total <= 0.0:
        return path
    targets = np.linspace(0.0, total, path.shape[0])
    out = np.empty_like(path)
    out[0] = path[0]
    out[-1] = path[-1]
    j = 0
    for k in range(1, path.shape[0] - 1):
        t = targets[k]
        while arclen[j + 1] < t and j < len(seg) - 1:
            j += 1
        span = arclen[j + 1] - arclen[j]
        lam = 0.0 if span == 0.0 else (t - arclen[j]) / span
        out[k] = (1.0 - lam) * path[j] + lam * path[j + 1]
    return out


def mountain_pass(
    params: ModelParams,
    data: RegularizedData,
    K: CouplingMatrix,
    config: SolverConfig = SolverConfig(),
) -> SolutionBundle:
    """Path-deformation saddle search for the unconstrained action.

    A path of field pairs from (0,0) to the negative-action constant
    endpoint is repeatedly re-spaced while its maximum is pushed along
    the negative gradient.  Because every term of the action is convex
    (quadratic gradient energies plus positive multiples of exponentials
    of linear maps), the landscape has a unique critical point: once the
    deformation stalls, the path maximum is polished into that critical
    point by minimizing the squared gradient norm, and the result is
    classified by a curvature probe downstream.  The endpoint is the
    closed-form minimizer of the action along the constant ray; growing
    c without bound is useless since the ray tends to +inf on both sides.
    """
    alpha, beta = params.alpha, params.beta
    regime = validate_regime(params, K, alpha, beta)
    if not regime.mountain_pass_eligible:
        raise RegimeError(
            "saddle search requires k12 > 0 and alpha < 8 det/(k11 k12) = "
            f"{regime.mp_alpha_bound:.6g}; got alpha={alpha:.6g}"
        )
    prob = DiscreteProblem(data, K, alpha, beta)

    if config.c_endpoint is not None:
        c_end = float(config.c_endpoint)
        e_end = prob.constant_ray_value(c_end)
    else:
        try:
            c_end, e_end = prob.constant_ray_minimum()
        except InadmissibleRegimeError as exc:
            raise EndpointNotNegativeError(str(exc)) from exc
    if not e_end < 0.0:
        raise EndpointNotNegativeError(
            f"constant-ray action at its minimum c={c_end:.6g} is {e_end:.6g} >= 0; "
            "no negative endpoint on the constant ray"
        )

    n_pts = config.path_points
    dim = 2 * prob.n_nodes
    base = np.full(dim, 1.0)
    path = np.linspace(0.0, c_end, n_pts)[:, None] * base[None, :]

    trace: list[tuple[int, float, float]] = []
    stall_window = 30
    best_levels: list[float] = []
    status = "max-iters-exceeded"
    saddle_converged = False

    values = np.array([prob.full_value(path[k]) for k in range(n_pts)])
    m = 1 + int(np.argmax(values[1:-1]))
    g = prob.full_grad(path[m])
    gnorm = float(np.linalg.norm(g))

    for it in range(1, config.deform_steps + 1):
        trace.append((it - 1, float(values[m]), gnorm))
        if gnorm <= config.grad_tol:
            status, saddle_converged = "converged", True
            break

        # push the maximum downhill with a backtracked step
        step = 1.0 / max(gnorm, 1e-12)
        moved = False
        for _ in range(40):
            cand = path[m] - step * g
            try:
                v_cand = prob.full_value(cand)
            except Exception:
                v_cand = np.inf
            if np.isfinite(v_cand) and v_cand < values[m]:
                moved = True
                break
            step *= config.shrink
        if moved:
            path[m] = cand
            values[m] = v_cand
            # nudge the neighbors along the same descent direction
            for nb, frac in ((m - 1, 0.5), (m + 1, 0.5)):
                if 0 < nb < n_pts - 1:
                    path[nb] = path[nb] - frac * step * g
                    values[nb] = prob.full_value(path[nb])

        path = _respace_path(path)
        values = np.array([prob.full_value(path[k]) for k in range(n_pts)])
        m = 1 + int(np.argmax(values[1:-1]))
        g = prob.full_grad(path[m])
        gnorm = float(np.linalg.norm(g))

        best_levels.append(float(values[m]))
        if len(best_levels) > stall_window:
            best_levels.pop(0)
            spread = max(best_levels) - min(best_levels)
            scale = 1.0 + abs(best_levels[-1])
            if spread < 1e-10 * scale:
                status = "deformation-stalled"
                break

    deform_iters = len(trace)
    z = path[m].copy()

    polish: OptResult | None = None
    if not saddle_converged:
        polish = _polish_critical_point(prob, z, config)
        z = polish.x
        for k, (_, val, gn) in enumerate(polish.trace):
            trace.append((deform_iters + k, val, gn))
        saddle_converged = polish.converged
        status = polish.status if polish.converged else status

    value = prob.full_value(z)
    gnorm = float(np.linalg.norm(prob.full_grad(z)))
    xi_vals, zeta_vals = prob.split(z)
    xi_bar = prob.dmu_mean(xi_vals)
    zeta_bar = prob.dmu_mean(zeta_vals)
    return SolutionBundle(
        xi=ScalarField(prob.grid, xi_vals),
        zeta=ScalarField(prob.grid, zeta_vals),
        xi_bar=xi_bar,
        zeta_bar=zeta_bar,
        regime=MOUNTAIN_PASS,
        trace=tuple(trace),
        converged=saddle_converged,
        status=status,
        value=float(value),
        grad_norm=gnorm,
        info={
            "endpoint_c": c_end,
            "endpoint_value": float(e_end),
            "deform_iterations": deform_iters,
            "origin_value": 0.0,
        },
    )


def _polish_critical_point(
    prob: DiscreteProblem, z0: np.ndarray, config: SolverConfig
) -> OptResult:
    """Drive the gradient norm to zero from the deformation output.

    Minimizes half the squared gradient norm; its gradient H*g is formed
    by central differencing of the action gradient along g, so each step
    costs three gradient evaluations.
    """

    def value_and_grad(z: np.ndarray) -> tuple[float, np.ndarray]:
        g = prob.full_grad(z)
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            return 0.0, np.zeros_like(g)
        eps = 1e-6 * (1.0 + float(np.linalg.norm(z))) / gnorm
        hg = (prob.full_grad(z + eps * g) - prob.full_grad(z - eps * g)) / (2.0 * eps)
        return 0.5 * gnorm**2, hg

    return lbfgs(
        value_and_grad,
        z0,
        grad_tol=config.grad_tol,
        max_iters=config.max_iters,
        memory=config.memory,
        shrink=config.shrink,
        sufficient_decrease=config.sufficient_decrease,
    )

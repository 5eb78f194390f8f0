"""Limited-memory quasi-Newton descent with backtracking line search.

Generic over the objective: the caller supplies a value-and-gradient
closure, optional feasibility projections, and an optional inverse
metric (initial Hessian approximation).  For the grid actions the
natural inverse metric is the inverse of the shifted graph Laplacian,
applied per block through cosine transforms; that turns the
mesh-dependent conditioning of the Dirichlet term into a mesh-free
iteration count.

Deterministic by construction: no randomized steps anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.fft import dctn, idctn

from .functional import OverflowGuardError

__all__ = ["OptResult", "lbfgs", "grid_inverse_metric"]


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    grad_norm: float
    converged: bool
    status: str
    iterations: int
    trace: list[tuple[int, float, float]] = field(repr=False, default_factory=list)


def lbfgs(
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    *,
    grad_tol: float,
    max_iters: int,
    memory: int = 10,
    shrink: float = 0.5,
    sufficient_decrease: float = 1e-4,
    project_iterate: Callable[[np.ndarray], np.ndarray] | None = None,
    project_direction: Callable[[np.ndarray], np.ndarray] | None = None,
    inverse_metric: Callable[[np.ndarray], np.ndarray] | None = None,
    max_backtracks: int = 60,
) -> OptResult:
    """Minimize a smooth objective; the trace of accepted values is
    nonincreasing by the Armijo test.

    value_and_grad must return the gradient already projected onto the
    feasible subspace when there is one; project_direction keeps search
    directions in that subspace and project_iterate restores iterate
    feasibility after each step.
    """
    ident = lambda v: v  # noqa: E731
    project_iterate = project_iterate or ident
    project_direction = project_direction or ident

    x = project_iterate(np.array(x0, dtype=np.float64))
    f, g = value_and_grad(x)
    gnorm = float(np.linalg.norm(g))
    trace: list[tuple[int, float, float]] = [(0, f, gnorm)]

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    status = "max-iters-exceeded"
    converged = False
    it = 0

    for it in range(1, max_iters + 1):
        if gnorm <= grad_tol:
            status, converged = "converged", True
            it -= 1
            break

        d = -_two_loop(g, s_hist, y_hist, rho_hist, inverse_metric)
        d = project_direction(d)
        slope = float(np.dot(g, d))
        if slope >= 0.0:
            # fall back to (preconditioned) steepest descent
            d = -(inverse_metric(g) if inverse_metric is not None else g)
            d = project_direction(d)
            slope = float(np.dot(g, d))
            if slope >= 0.0:
                d = -g
                slope = -gnorm**2

        step = 1.0
        accepted = False
        for _ in range(max_backtracks):
            cand = project_iterate(x + step * d)
            try:
                f_cand, g_cand = value_and_grad(cand)
            except OverflowGuardError:
                f_cand, g_cand = np.inf, g
            if np.isfinite(f_cand) and f_cand <= f + sufficient_decrease * step * slope:
                accepted = True
                break
            step *= shrink
        if not accepted:
            status, converged = "line-search-failure", False
            break

        g_prev = g
        x, f, g = cand, f_cand, g_cand
        gnorm = float(np.linalg.norm(g))
        trace.append((it, f, gnorm))

        s = step * d
        y = g - g_prev
        sy = float(np.dot(s, y))
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
    else:
        it = max_iters

    if gnorm <= grad_tol:
        status, converged = "converged", True

    return OptResult(
        x=x, value=f, grad_norm=gnorm, converged=converged,
        status=status, iterations=it, trace=trace,
    )


def _two_loop(
    g: np.ndarray,
    s_hist: list[np.ndarray],
    y_hist: list[np.ndarray],
    rho_hist: list[float],
    inverse_metric: Callable[[np.ndarray], np.ndarray] | None,
) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, r in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = r * float(np.dot(s, q))
        alphas.append(a)
        q -= a * y
    if inverse_metric is not None:
        q = inverse_metric(q)
    elif s_hist:
        y = y_hist[-1]
        q *= float(np.dot(s_hist[-1], y)) / float(np.dot(y, y))
    for (s, y, r), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = r * float(np.dot(y, q))
        q += (a - b) * s
    return q


def grid_inverse_metric(n: int, block_scales: tuple[float, ...], shifts: tuple[float, ...]):
    """Inverse of blockdiag(scale_b * A + shift_b * I) via cosine transforms.

    A is the unit-weight graph Laplacian of the n x n grid, diagonalized
    by the type-II cosine basis with eigenvalues
    (2 - 2 cos(pi i / n)) + (2 - 2 cos(pi j / n)).
    """
    lam1 = 2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)
    lam = lam1[:, None] + lam1[None, :]
    denominators = [scale * lam + shift for scale, shift in zip(block_scales, shifts)]

    def apply(g: np.ndarray) -> np.ndarray:
        out = np.empty_like(g)
        m = n * n
        for b, den in enumerate(denominators):
            blk = g[b * m : (b + 1) * m].reshape(n, n)
            spec = dctn(blk, type=2, norm="ortho")
            out[b * m : (b + 1) * m] = idctn(spec / den, type=2, norm="ortho").ravel()
        return out

    return apply

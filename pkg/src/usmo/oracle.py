"""Dense reference solvers for the dual, for small instances only.

Eliminating delta analytically leaves

    G(s) = 1/2 s'Qs - b's - 1/2 sum_u min(2 s_u, 2 (c2 - s_u), c2)
         = 1/2 s'Qs - b's + sum_u |s_u - c2/2| - n c2 / 2

over the capped simplex {0 <= s <= c2, sum(s) = c1 p}. G is convex, so a
proximal-gradient method with an exact prox converges to the global optimum.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import ConfigurationError, InputError
from .kernel import KernelSpec, kernel_matrix
from .solver import DerivedConstants

MAX_DENSE = 2000
MAX_ENUM = 4

ACCELERATED = "accelerated"
SUBGRADIENT = "subgradient"
GRID = "grid"


@dataclass(frozen=True)
class OracleSolution:
    sigma: np.ndarray
    delta: np.ndarray
    objective: float
    method: str
    certified_gap: float = math.nan
    iterations: int = 0


def reduce_delta(sigma, c2):
    sigma = np.asarray(sigma, dtype=float)
    tol = 1e-12 * max(1.0, c2)
    if np.any(sigma < -tol) or np.any(sigma > c2 + tol):
        raise InputError("sigma outside [0, c2]")
    return np.minimum(np.minimum(2.0 * sigma, 2.0 * (c2 - sigma)), c2)


def dense_problem(dataset: Dataset, c: DerivedConstants, kernel: KernelSpec):
    """(Q, b) with Q = K[U, U] and b = c1 K[U, P] 1."""
    if dataset.p + dataset.n > MAX_DENSE:
        raise InputError(f"dense oracle limited to {MAX_DENSE} samples, got {dataset.p + dataset.n}")
    Q = kernel_matrix(kernel, dataset.unlabeled, dataset.unlabeled)
    Q = 0.5 * (Q + Q.T)
    b = c.c1 * kernel_matrix(kernel, dataset.unlabeled, dataset.positives).sum(axis=1)
    return Q, b


def reduced_objective(sigma, Q, b, c2):
    """G(sigma); accepts a single vector or a stack of row vectors."""
    S = np.atleast_2d(sigma)
    quad = 0.5 * np.einsum("ki,ij,kj->k", S, Q, S)
    cap = np.minimum(np.minimum(2.0 * S, 2.0 * (c2 - S)), c2)
    val = quad - S @ b - 0.5 * cap.sum(axis=1)
    return val if np.ndim(sigma) == 2 else float(val[0])


def prox_capped_simplex(v, t, c2, total):
    """argmin_s 1/2|s - v|^2 + t sum|s - c2/2|  s.t. 0 <= s <= c2, sum(s) = total.

    Each coordinate is s_u(nu) = clip(c2/2 + soft(v_u - nu - c2/2, t), 0, c2),
    piecewise linear and non-increasing in the multiplier nu; the root of
    sum(s(nu)) = total is found exactly by sweeping the sorted breakpoints.
    ``t = 0`` gives the Euclidean projection onto the capped simplex.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    h = c2 / 2.0
    # per coordinate, slope of s_u w.r.t. nu changes by -1, +1, -1, +1 here
    events = np.concatenate([v - c2 - t, v - h - t, v - h + t, v + t])
    change = np.repeat([-1.0, 1.0, -1.0, 1.0], n)
    order = np.argsort(events, kind="stable")
    events, change = events[order], change[order]
    slope = np.cumsum(change)
    # S at each breakpoint, starting from n*c2 where every coordinate is capped
    S = np.empty(events.size)
    S[0] = n * c2
    S[1:] = n * c2 + np.cumsum(slope[:-1] * np.diff(events))
    k = int(np.searchsorted(-S, -total, side="right")) - 1
    k = min(max(k, 0), events.size - 1)
    if k == events.size - 1 or slope[k] == 0.0:
        nu = events[k]
    else:
        nu = events[k] + (total - S[k]) / slope[k]
    w = v - nu - h
    s = h + np.sign(w) * np.maximum(np.abs(w) - t, 0.0)
    return np.clip(s, 0.0, c2)


def _accelerated(Q, b, c, max_iter, tol, window=500):
    n = b.size
    L = max(float(np.linalg.eigvalsh(Q)[-1]), 1e-12)
    step = 1.0 / L
    x = prox_capped_simplex(np.full(n, c.target_sum / n), 0.0, c.c2, c.target_sum)
    y, t_k = x.copy(), 1.0
    g_x = reduced_objective(x, Q, b, c.c2)
    best, best_val = x.copy(), g_x
    anchor = best_val
    it = 0
    for it in range(1, max_iter + 1):
        if it % window == 0:
            # stalled: the best value moved less than tol (relative) over a window
            if anchor - best_val <= tol * max(1.0, abs(best_val)):
                break
            anchor = best_val
        grad = Q @ y - b
        x_new = prox_capped_simplex(y - step * grad, step, c.c2, c.target_sum)
        g_new = reduced_objective(x_new, Q, b, c.c2)
        if g_new < best_val:
            best, best_val = x_new.copy(), g_new
        moved = float(np.max(np.abs(x_new - y))) if n else 0.0
        if g_new > g_x:
            # adaptive restart: drop momentum when the objective goes up
            y, t_k = x.copy(), 1.0
            continue
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_k * t_k))
        y = x_new + ((t_k - 1.0) / t_next) * (x_new - x)
        x, g_x, t_k = x_new, g_new, t_next
        if moved == 0.0:
            break
    return best, best_val, it


def _subgradient(Q, b, c, max_iter, tol, window=5000):
    """Projected subgradient with steps 1 / (L sqrt(k)); returns the best iterate."""
    n = b.size
    L = max(float(np.linalg.eigvalsh(Q)[-1]), 1e-12)
    x = prox_capped_simplex(np.full(n, c.target_sum / n), 0.0, c.c2, c.target_sum)
    best, best_val = x.copy(), reduced_objective(x, Q, b, c.c2)
    anchor = best_val
    it = 0
    for it in range(1, max_iter + 1):
        g = Q @ x - b + np.sign(x - c.c2 / 2.0)
        x = prox_capped_simplex(x - g / (L * math.sqrt(it)), 0.0, c.c2, c.target_sum)
        val = reduced_objective(x, Q, b, c.c2)
        if val < best_val:
            best, best_val = x.copy(), val
        if it % window == 0:
            if anchor - best_val <= tol * max(1.0, abs(best_val)):
                break
            anchor = best_val
    return best, best_val, it


def solve_dense(dataset: Dataset, c: DerivedConstants, kernel: KernelSpec,
                method: str = ACCELERATED, max_iter=None, tol=None) -> OracleSolution:
    """Minimize G with a dense Gram matrix. Deterministic for fixed inputs."""
    _check_feasible(c)
    Q, b = dense_problem(dataset, c, kernel)
    if dataset.n == 1:
        sigma = np.array([c.target_sum])
        return OracleSolution(sigma, reduce_delta(sigma, c.c2),
                              reduced_objective(sigma, Q, b, c.c2), method, 0.0)
    if method == ACCELERATED:
        sigma, val, it = _accelerated(Q, b, c, max_iter or 100_000, 1e-14 if tol is None else tol)
    elif method == SUBGRADIENT:
        sigma, val, it = _subgradient(Q, b, c, max_iter or 100_000, 1e-12 if tol is None else tol)
    else:
        raise ConfigurationError(f"unknown oracle method {method!r}")
    return OracleSolution(sigma, reduce_delta(sigma, c.c2), float(val), method, math.nan, it)


def _check_feasible(c: DerivedConstants):
    if not 0.0 <= c.target_sum <= c.n * c.c2 * (1.0 + 1e-12):
        raise ConfigurationError(f"infeasible dual: target {c.target_sum:g} outside [0, n*c2 = {c.n * c.c2:g}]")


def lipschitz_bound(Q, b, c2):
    """Euclidean Lipschitz constant of G on the box [0, c2]^n."""
    per_coord = np.abs(Q).sum(axis=1) * c2 + np.abs(b) + 1.0
    return float(np.linalg.norm(per_coord))


def enumerate_tiny(dataset: Dataset, c: DerivedConstants, kernel: KernelSpec, steps: int = 101,
                   chunk=250_000) -> OracleSolution:
    """Best point of a regular grid over the feasible set, with a certified gap.

    The first n-1 coordinates run over ``steps`` evenly spaced values in
    [0, c2]; the last is fixed by the equality constraint. Every feasible
    point has a feasible grid neighbour within h * sqrt(n (n-1)), h the
    spacing, so ``certified_gap = L * h * sqrt(n (n-1))``.
    """
    n = dataset.n
    if n > MAX_ENUM:
        raise InputError(f"grid enumeration limited to n <= {MAX_ENUM}, got {n}")
    if steps < 2:
        raise InputError("need at least 2 grid steps")
    _check_feasible(c)
    Q, b = dense_problem(dataset, c, kernel)
    if n == 1:
        sigma = np.array([c.target_sum])
        return OracleSolution(sigma, reduce_delta(sigma, c.c2),
                              reduced_objective(sigma, Q, b, c.c2), GRID, 0.0)
    h = c.c2 / (steps - 1)
    levels = np.linspace(0.0, c.c2, steps)
    tol = 1e-12 * max(1.0, c.c2)
    best, best_val = None, math.inf
    total = steps ** (n - 1)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        digits = np.stack(np.unravel_index(flat, (steps,) * (n - 1)), axis=1)
        free = levels[digits]
        last = c.target_sum - free.sum(axis=1)
        ok = (last >= -tol) & (last <= c.c2 + tol)
        if not ok.any():
            continue
        S = np.column_stack([free[ok], np.clip(last[ok], 0.0, c.c2)])
        vals = reduced_objective(S, Q, b, c.c2)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best, best_val = S[k].copy(), float(vals[k])
    if best is None:
        raise InputError("no feasible grid point; increase steps")
    gap = lipschitz_bound(Q, b, c.c2) * h * math.sqrt(n * (n - 1))
    return OracleSolution(best, reduce_delta(best, c.c2), best_val, GRID, gap, total)

"""Starting point for USMO: rank the unlabeled pool, then fill five groups.

Ranked ascending by how positive a sample looks, the pool is cut into

    group 1  sigma = 0,       delta = 0        (confident negatives)
    group 2  sigma = s2,      delta = 2 s2     (0 < s2 < c2/2)
    group 3  sigma = c2/2,    delta = c2
    group 4  sigma = s4,      delta = 2(c2-s4) (c2/2 < s4 < c2)
    group 5  sigma = c2,      delta = 0        (confident positives)

with sizes chosen so the equality constraint is (nearly) met, then repaired
exactly.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .data import Dataset
from .exceptions import ConfigurationError
from .kernel import KernelSpec, kernel_matrix
from .solver import DerivedConstants, DualState, Hyperparams, derive_constants, optimal_delta

RANKED = "ranked"
UNIFORM = "uniform"


@dataclass(frozen=True)
class InitPlan:
    a: float
    b: float
    c: float
    sigma2: float
    sigma4: float
    sizes: tuple
    residual: float
    kind: str = RANKED

    @property
    def is_fallback(self):
        return self.kind != RANKED


def kernel_mean_score(dataset: Dataset, kernel: KernelSpec, block=512) -> np.ndarray:
    """s(x_u) = mean_i k(x_u, x_i) over the labeled positives."""
    U = dataset.unlabeled
    out = np.empty(U.shape[0])
    for start in range(0, U.shape[0], block):
        out[start:start + block] = kernel_matrix(kernel, U[start:start + block], dataset.positives).mean(axis=1)
    return out


def rank_unlabeled(dataset: Dataset, kernel: KernelSpec, scorer: Optional[Callable] = None) -> np.ndarray:
    """Unlabeled indices sorted by ascending score, ties by index.

    ``scorer(dataset, kernel) -> scores`` replaces the kernel mean score, e.g.
    with the decision values of a one-class SVM fitted on the positives.
    """
    scores = (scorer or kernel_mean_score)(dataset, kernel)
    scores = np.asarray(scores, dtype=float)
    return np.argsort(scores, kind="stable")


def plan_residual(c: DerivedConstants, pi, n, a, b, cc, s2, s4):
    """Signed shortfall of the equality constraint for a continuous plan."""
    return c.c1 * c.p - b * n * s2 - cc * n * s4 - c.c2 * n * (pi * a + (1.0 - a - b - cc) / 2.0)


def plan_box(pi, n):
    """(a_lo, a_hi, bc_lo, bc_hi) or None when the constraint box is empty."""
    a_lo = max(1.0 / (pi * n), 1.0 / ((1.0 - pi) * n))
    a_hi = min(1.0 / (1.0 - pi), 1.0 / pi, 1.0 - 1.0 / n - 2.0 / n)
    bc_lo, bc_hi = 1.0 / n, math.log(n) / n
    if a_lo > a_hi or bc_lo > bc_hi:
        return None
    return a_lo, a_hi, bc_lo, bc_hi


def _open_grid(lo, hi, m):
    return np.linspace(lo, hi, m + 2)[1:-1]


def grid_candidates(c: DerivedConstants, pi, n, grid=20):
    """All grid points of the plan box as arrays (a, b, cc, s2, s4) and squared residuals."""
    box = plan_box(pi, n)
    if box is None:
        return None
    a_lo, a_hi, bc_lo, bc_hi = box
    h = c.c2 / 2.0
    A, B, C, S2, S4 = np.meshgrid(
        np.linspace(a_lo, a_hi, grid),
        np.linspace(bc_lo, bc_hi, grid),
        np.linspace(bc_lo, bc_hi, grid),
        _open_grid(0.0, h, grid),
        _open_grid(h, c.c2, grid),
        indexing="ij",
        sparse=True,
    )
    ok = (A + B + C) <= 1.0 - 1.0 / n
    res = plan_residual(c, pi, n, A, B, C, S2, S4) ** 2
    res = np.where(ok, res, np.inf)
    return (A, B, C, S2, S4), res


def plan_groups(c: DerivedConstants, pi: float, p: int, n: int, grid: int = 20) -> InitPlan:
    """Group fractions and the two free sigma levels minimizing the squared residual.

    Dense grid search over the constraint box, then an exact line solve in
    the two sigma levels (the residual is affine in each). Falls back to the
    uniform plan when the box is empty.
    """
    found = grid_candidates(c, pi, n, grid)
    if found is None:
        return uniform_plan(c, n)
    axes, res = found
    k = np.unravel_index(np.argmin(res), res.shape)
    if not np.isfinite(res[k]):
        return uniform_plan(c, n)
    a, b, cc, s2, s4 = (float(ax.ravel()[k[d]]) for d, ax in enumerate(axes))

    h = c.c2 / 2.0
    margin = 1e-6 * h
    r = plan_residual(c, pi, n, a, b, cc, s2, s4)
    s2 = min(max(s2 + r / (b * n), margin), h - margin)
    r = plan_residual(c, pi, n, a, b, cc, s2, s4)
    s4 = min(max(s4 + r / (cc * n), h + margin), c.c2 - margin)
    residual = plan_residual(c, pi, n, a, b, cc, s2, s4) ** 2
    if residual > res[k]:
        a, b, cc, s2, s4 = (float(ax.ravel()[k[d]]) for d, ax in enumerate(axes))
        residual = float(res[k])

    n1 = int(round((1.0 - pi) * a * n))
    n2 = int(round(b * n))
    n4 = int(round(cc * n))
    n5 = int(round(pi * a * n))
    sizes = [n1, n2, 0, n4, n5]
    while sum(sizes) > n:
        g = max((0, 4, 1, 3), key=lambda t: sizes[t])
        sizes[g] -= 1
    sizes[2] = n - sum(sizes)
    return InitPlan(a, b, cc, s2, s4, tuple(sizes), float(residual))


def uniform_plan(c: DerivedConstants, n: int) -> InitPlan:
    s = c.target_sum / n
    return InitPlan(0.0, 0.0, 0.0, s, s, (0, 0, n, 0, 0), 0.0, kind=UNIFORM)


def _fill(sigma, idx, r, bound, raise_):
    """Move sigma[idx] toward ``bound`` sharing ``r`` equally; returns what is left."""
    idx = np.asarray(idx, dtype=int)
    while idx.size and abs(r) > 0.0:
        room = (bound - sigma[idx]) if raise_ else (sigma[idx] - bound)
        live = room > 0.0
        idx, room = idx[live], room[live]
        if not idx.size:
            break
        share = abs(r) / idx.size
        step = np.minimum(room, share)
        sigma[idx] += step if raise_ else -step
        moved = float(step.sum())
        r = r - moved if raise_ else r + moved
        if np.all(step < share):
            break
        if abs(r) <= 1e-15 * max(1.0, abs(moved)):
            r = 0.0
    return r


def _one_by_one(sigma, idx, r, bound, raise_):
    for u in idx:
        if r == 0.0:
            break
        room = (bound - sigma[u]) if raise_ else (sigma[u] - bound)
        if room <= 0.0:
            continue
        step = min(room, abs(r))
        sigma[u] += step if raise_ else -step
        r = r - step if raise_ else r + step
    return r


def assign_initial(plan: InitPlan, order, c: DerivedConstants) -> DualState:
    """Lay the plan over the ranked pool and repair the equality residual."""
    order = np.asarray(order, dtype=int)
    n = order.size
    h = c.c2 / 2.0
    if plan.kind == UNIFORM:
        sigma = np.full(n, c.target_sum / n)
        return DualState(sigma, optimal_delta(sigma, c.c2))
    if sum(plan.sizes) != n:
        raise ConfigurationError(f"plan covers {sum(plan.sizes)} samples, pool has {n}")

    bounds = np.cumsum((0,) + tuple(plan.sizes))
    groups = [order[bounds[g]:bounds[g + 1]] for g in range(5)]
    sigma = np.empty(n)
    for g, level in enumerate((0.0, plan.sigma2, h, plan.sigma4, c.c2)):
        sigma[groups[g]] = level

    r = c.target_sum - sigma.sum()
    if r > 0.0:
        r = _fill(sigma, groups[1], r, h, True)
        r = _fill(sigma, groups[3], r, c.c2, True)
        r = _one_by_one(sigma, groups[0][::-1], r, h, True)    # group 1 -> 2
        r = _one_by_one(sigma, groups[2][::-1], r, c.c2, True)
        r = _one_by_one(sigma, order[::-1], r, c.c2, True)
    elif r < 0.0:
        r = _fill(sigma, groups[3], r, h, False)
        r = _fill(sigma, groups[1], r, 0.0, False)
        r = _one_by_one(sigma, groups[4], r, h, False)         # group 5 -> 4
        r = _one_by_one(sigma, groups[2], r, 0.0, False)
        r = _one_by_one(sigma, order, r, 0.0, False)
    # absorb the last rounding crumbs on one sample with room
    r = c.target_sum - sigma.sum()
    if r != 0.0:
        room = (c.c2 - sigma) if r > 0 else sigma
        u = int(np.argmax(room))
        sigma[u] = min(max(sigma[u] + r, 0.0), c.c2)
    if abs(sigma.sum() - c.target_sum) > 1e-10 * max(1.0, c.target_sum):
        raise ConfigurationError("cannot place the initial point on the equality constraint")
    return DualState(sigma, optimal_delta(sigma, c.c2))


def initial_state(dataset: Dataset, h: Hyperparams, mode: str = RANKED, scorer=None, grid=20) -> DualState:
    c = derive_constants(h, dataset.p, dataset.n)
    if mode == UNIFORM:
        return assign_initial(uniform_plan(c, dataset.n), np.arange(dataset.n), c)
    if mode != RANKED:
        raise ConfigurationError(f"unknown init mode {mode!r}")
    order = rank_unlabeled(dataset, h.kernel, scorer)
    plan = plan_groups(c, h.pi, dataset.p, dataset.n, grid)
    return assign_initial(plan, order, c)

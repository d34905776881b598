"""USMO: sequential minimal optimization for the double-hinge PU dual.

The dual lives on the unlabeled samples only::

    min  1/2 s' Q s - b' s - 1/2 sum(d)
    s.t. sum(s) = c1 * p,  s + d/2 <= c2,  s - d/2 >= 0,  0 <= d <= c2

with ``Q = K[U, U]`` and ``b = c1 * K[U, P] 1``. Each iteration optimizes a
pair of unlabeled coordinates analytically over four closed-form cases, and
keeps the bias-free decision values ``F(x_u) = sum_j alpha_j k(x_u, x_j)``
up to date with rank-two updates (the "function cache").
"""

import csv
import enum
import io
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .data import Dataset
from .exceptions import (
    BudgetExceededError,
    ConfigurationError,
    InputError,
    InternalStateError,
)
from .kernel import GramCache, KernelSpec

NONBOUND = "nonbound"
FULL = "full"

EQUALITY_RTOL = 1e-10
ETA_FLOOR = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    """Solver settings.

    ``set_eps`` of ``None`` means ``1e-9 * c2``. ``cache_rows`` pins the Gram
    cache capacity; otherwise it follows ``max(64, 2 * |non-bound|)`` capped
    at ``cache_mb`` megabytes of rows.
    """

    pi: float
    lam: float
    tau: float = 1e-3
    kernel: KernelSpec = field(default_factory=KernelSpec)
    set_eps: Optional[float] = None
    max_full_scans: int = 1000
    max_iter: Optional[int] = None
    cache_rows: Optional[int] = None
    cache_mb: float = 200.0

    def __post_init__(self):
        if not 0.0 < self.pi < 1.0:
            raise ConfigurationError(f"class prior pi must lie in (0, 1), got {self.pi}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigurationError(f"lambda must be > 0, got {self.lam}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ConfigurationError(f"tau must be > 0, got {self.tau}")
        if self.set_eps is not None and not self.set_eps >= 0:
            raise ConfigurationError(f"set_eps must be >= 0, got {self.set_eps}")
        if self.max_full_scans < 1:
            raise ConfigurationError("max_full_scans must be >= 1")
        if self.cache_rows is not None and self.cache_rows < 2:
            raise ConfigurationError("cache_rows must be >= 2")
        if not self.cache_mb > 0:
            raise ConfigurationError("cache_mb must be > 0")


@dataclass(frozen=True)
class DerivedConstants:
    c1: float
    c2: float
    target_sum: float
    p: int
    n: int


def derive_constants(h: Hyperparams, p: int, n: int) -> DerivedConstants:
    if p < 1 or n < 1:
        raise InputError(f"need p >= 1 and n >= 1, got p={p}, n={n}")
    c1 = h.pi / (2.0 * h.lam * p)
    c2 = 1.0 / (2.0 * h.lam * n)
    target = c1 * p
    if target > n * c2 * (1.0 + 1e-12):
        raise ConfigurationError(
            f"infeasible dual: c1*p = {target:g} exceeds n*c2 = {n * c2:g} "
            f"(pi={h.pi}, lambda={h.lam}); lower pi"
        )
    return DerivedConstants(c1, c2, target, p, n)


def default_set_eps(h: Hyperparams, c: DerivedConstants) -> float:
    return 1e-9 * c.c2 if h.set_eps is None else h.set_eps


def optimal_delta(sigma, c2):
    """The only delta compatible with sigma among the two admissible forms."""
    sigma = np.asarray(sigma, dtype=float)
    return np.minimum(2.0 * sigma, 2.0 * (c2 - sigma))


# ---------------------------------------------------------------------------
# set membership


class Membership(enum.IntFlag):
    NONE = 0
    D1 = 1
    D2 = 2
    D3 = 4


def classify_membership(sigma_u, delta_u, c, eps) -> Membership:
    c2 = c.c2 if isinstance(c, DerivedConstants) else float(c)
    lower = abs(sigma_u - delta_u / 2.0) <= eps
    upper = abs(sigma_u - (c2 - delta_u / 2.0)) <= eps
    if not (lower or upper):
        raise InternalStateError(
            f"(sigma={sigma_u!r}, delta={delta_u!r}) is in neither two-form family (c2={c2!r})"
        )
    m = Membership.NONE
    below_cap = delta_u < c2 - eps
    if below_cap and lower:
        m |= Membership.D1
    if below_cap and upper:
        m |= Membership.D2
    if delta_u > eps:
        m |= Membership.D3
    return m


def membership_masks(sigma, delta, c2, eps):
    """Vectorized :func:`classify_membership`: boolean masks (D1, D2, D3)."""
    lower = np.abs(sigma - delta / 2.0) <= eps
    upper = np.abs(sigma - (c2 - delta / 2.0)) <= eps
    below_cap = delta < c2 - eps
    return below_cap & lower, below_cap & upper, delta > eps


def is_nonbound(sigma_u, delta_u, c2, eps):
    return eps < delta_u < c2 - eps


# ---------------------------------------------------------------------------
# state


@dataclass
class DualState:
    sigma: np.ndarray
    delta: np.ndarray
    fcache: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iteration: int = 0

    def copy(self):
        return DualState(
            self.sigma.copy(),
            self.delta.copy(),
            None if self.fcache is None else self.fcache.copy(),
            self.objective,
            self.iteration,
        )

    @property
    def n(self):
        return self.sigma.shape[0]


def feasibility_violations(state: DualState, c: DerivedConstants, eps: float, box_tol=1e-12):
    """List of human-readable invariant violations (empty when the state is valid)."""
    s, d = state.sigma, state.delta
    problems = []
    if s.shape != (c.n,) or d.shape != (c.n,):
        return [f"sigma/delta must have shape ({c.n},)"]
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(d))):
        return ["non-finite sigma/delta"]
    tol = box_tol * max(1.0, c.c2)
    if s.min() < -tol or s.max() > c.c2 + tol:
        problems.append("sigma outside [0, c2]")
    if d.min() < -tol or d.max() > c.c2 + tol:
        problems.append("delta outside [0, c2]")
    if np.any(s + d / 2.0 > c.c2 + eps + tol):
        problems.append("sigma + delta/2 exceeds c2")
    if np.any(s - d / 2.0 < -eps - tol):
        problems.append("sigma - delta/2 below 0")
    gap = abs(s.sum() - c.target_sum)
    if gap > EQUALITY_RTOL * max(1.0, c.target_sum):
        problems.append(f"equality constraint off by {gap:.3e}")
    lower = np.abs(s - d / 2.0) <= eps
    upper = np.abs(s - (c.c2 - d / 2.0)) <= eps
    if not np.all(lower | upper):
        problems.append(f"{int(np.sum(~(lower | upper)))} coordinates outside the two-form family")
    return problems


def dual_objective(sigma, delta, fcache, lin):
    """F(sigma, delta) from the function cache: Q sigma = lin - F, so
    1/2 s'Qs - lin's = -1/2 s'(lin + F)."""
    return float(-0.5 * np.dot(sigma, lin + fcache) - 0.5 * np.sum(delta))


def recover_alpha(sigma, c: DerivedConstants, p: int) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    return np.concatenate([np.full(p, c.c1), -sigma])


# ---------------------------------------------------------------------------
# most critical values and violating pairs


@dataclass
class MostCriticalValues:
    m1_max: float = -math.inf
    m2_min: float = math.inf
    m3_min: float = math.inf
    m3_max: float = -math.inf
    i1_max: int = -1
    i2_min: int = -1
    i3_min: int = -1
    i3_max: int = -1

    def include(self, u, f_u, in1, in2, in3):
        if in1 and f_u > self.m1_max:
            self.m1_max, self.i1_max = f_u, u
        if in2 and f_u < self.m2_min:
            self.m2_min, self.i2_min = f_u, u
        if in3:
            if f_u < self.m3_min:
                self.m3_min, self.i3_min = f_u, u
            if f_u > self.m3_max:
                self.m3_max, self.i3_max = f_u, u


def most_critical_values(fcache, d1, d2, d3, mask=None) -> MostCriticalValues:
    """Extremes of the cached decision values over D1, D2, D3 (restricted to ``mask``)."""
    if mask is not None:
        d1, d2, d3 = d1 & mask, d2 & mask, d3 & mask
    mcv = MostCriticalValues()
    if d1.any():
        idx = np.flatnonzero(d1)
        k = idx[np.argmax(fcache[idx])]
        mcv.m1_max, mcv.i1_max = float(fcache[k]), int(k)
    if d2.any():
        idx = np.flatnonzero(d2)
        k = idx[np.argmin(fcache[idx])]
        mcv.m2_min, mcv.i2_min = float(fcache[k]), int(k)
    if d3.any():
        idx = np.flatnonzero(d3)
        vals = fcache[idx]
        k_lo, k_hi = idx[np.argmin(vals)], idx[np.argmax(vals)]
        mcv.m3_min, mcv.i3_min = float(fcache[k_lo]), int(k_lo)
        mcv.m3_max, mcv.i3_max = float(fcache[k_hi]), int(k_hi)
    return mcv


def _margins(mcv: MostCriticalValues):
    """(violation, i, j) for the four extremal pairings; -inf when a set is empty."""
    out = []
    if mcv.i1_max >= 0 and mcv.i3_min >= 0:
        out.append((mcv.m1_max - mcv.m3_min, mcv.i1_max, mcv.i3_min))
    if mcv.i3_max >= 0 and mcv.i2_min >= 0:
        out.append((mcv.m3_max - mcv.m2_min, mcv.i3_max, mcv.i2_min))
    if mcv.i1_max >= 0 and mcv.i2_min >= 0:
        out.append((mcv.m1_max - mcv.m2_min + 2.0, mcv.i1_max, mcv.i2_min))
    if mcv.i3_max >= 0 and mcv.i3_min >= 0:
        out.append((mcv.m3_max - mcv.m3_min - 2.0, mcv.i3_max, mcv.i3_min))
    return out


def check_tau_optimality(mcv: MostCriticalValues, tau: float) -> bool:
    """Compact tau-optimality test. Empty sets make their terms vacuous.

    Besides the three classic inequalities this also requires
    ``m3_max - m3_min - 2 <= tau``: two D3 samples whose values differ by more
    than two admit a descent direction that none of the other tests see.
    """
    return all(v <= tau for v, _, _ in _margins(mcv))


def pair_violation(m_i: Membership, m_j: Membership, f_i: float, f_j: float) -> float:
    """Largest violation over the pairwise conditions (> tau means violating)."""
    D1, D2, D3 = Membership.D1, Membership.D2, Membership.D3
    best = -math.inf
    diff = f_i - f_j
    if m_i & D1 and m_j & D3:
        best = max(best, diff)
    if m_i & D3 and m_j & D1:
        best = max(best, -diff)
    if m_i & D2 and m_j & D3:
        best = max(best, -diff)
    if m_i & D3 and m_j & D2:
        best = max(best, diff)
    if m_i & D1 and m_j & D2:
        best = max(best, diff + 2.0)
    if m_i & D2 and m_j & D1:
        best = max(best, -diff + 2.0)
    if m_i & D3 and m_j & D3:
        best = max(best, abs(diff) - 2.0)
    return best


def is_violating_pair(m_i, m_j, f_i, f_j, tau) -> bool:
    return pair_violation(m_i, m_j, f_i, f_j) > tau


def _best_partner(u, f_u, in1, in2, in3, mcv: MostCriticalValues):
    """Most violating counterpart for sample u among the tracked extremes."""
    cands = []
    if in1:
        if mcv.i3_min >= 0:
            cands.append((f_u - mcv.m3_min, mcv.i3_min))
        if mcv.i2_min >= 0:
            cands.append((f_u - mcv.m2_min + 2.0, mcv.i2_min))
    if in2:
        if mcv.i3_max >= 0:
            cands.append((mcv.m3_max - f_u, mcv.i3_max))
        if mcv.i1_max >= 0:
            cands.append((mcv.m1_max - f_u + 2.0, mcv.i1_max))
    if in3:
        if mcv.i1_max >= 0:
            cands.append((mcv.m1_max - f_u, mcv.i1_max))
        if mcv.i2_min >= 0:
            cands.append((f_u - mcv.m2_min, mcv.i2_min))
        if mcv.i3_max >= 0:
            cands.append((mcv.m3_max - f_u - 2.0, mcv.i3_max))
        if mcv.i3_min >= 0:
            cands.append((f_u - mcv.m3_min - 2.0, mcv.i3_min))
    best = (-math.inf, -1)
    for v, j in cands:
        if j != u and v > best[0]:
            best = (v, j)
    return best


class FullScan:
    """Resumable sweep over every unlabeled sample.

    The most critical values are taken over the non-bound set plus every
    sample examined so far, so once the sweep completes they match their
    whole-set definition. Call :meth:`invalidate` after modifying the state.
    """

    def __init__(self, fcache, masks, nonbound, tau):
        self.fcache = fcache
        self.masks = masks
        self.nonbound = nonbound
        self.tau = tau
        self.pos = 0
        self.examined = np.zeros(fcache.shape[0], dtype=bool)
        self._mcv = None

    def invalidate(self):
        self._mcv = None

    def _current(self):
        if self._mcv is None:
            d1, d2, d3 = self.masks
            self._mcv = most_critical_values(
                self.fcache, d1, d2, d3, self.nonbound | self.examined
            )
        return self._mcv

    def next_pair(self):
        d1, d2, d3 = self.masks
        n = self.fcache.shape[0]
        while self.pos < n:
            u = self.pos
            self.pos += 1
            mcv = self._current()
            f_u = float(self.fcache[u])
            in1, in2, in3 = bool(d1[u]), bool(d2[u]), bool(d3[u])
            v, partner = _best_partner(u, f_u, in1, in2, in3, mcv)
            self.examined[u] = True
            if v > self.tau:
                self._mcv = None
                return u, partner, v
            mcv.include(u, f_u, in1, in2, in3)
        return None

    @property
    def complete(self):
        return self.pos >= self.fcache.shape[0]

    def final_values(self):
        return self._current()


def select_working_set(state: DualState, scope: str, c: DerivedConstants, tau: float, eps: float):
    """Pick a violating pair from ``state`` (whose fcache must be current).

    ``nonbound``: the maximal violating pair among non-bound samples.
    ``full``: the first violating pair met while sweeping all samples.
    Returns ``(i, j, violation)`` or ``None``.
    """
    masks = membership_masks(state.sigma, state.delta, c.c2, eps)
    nonbound = (state.delta > eps) & (state.delta < c.c2 - eps)
    if scope == NONBOUND:
        return _max_violating_pair(state.fcache, masks, nonbound, tau)
    if scope == FULL:
        return FullScan(state.fcache, masks, nonbound, tau).next_pair()
    raise ValueError(f"unknown scope {scope!r}")


def _max_violating_pair(fcache, masks, scope_mask, tau):
    if not scope_mask.any():
        return None
    d1, d2, d3 = masks
    mcv = most_critical_values(fcache, d1, d2, d3, scope_mask)
    best = None
    for v, i, j in _margins(mcv):
        if i != j and v > tau and (best is None or v > best[2]):
            best = (i, j, v)
    return best


# ---------------------------------------------------------------------------
# two-variable subproblem


class SubproblemInputs(NamedTuple):
    """Everything the analytic pair update needs.

    ``e`` is ``K[S, S̄] sigma_S̄ - c1 K[S, P] 1``; ``a`` is what the pair must sum
    to. ``k_ii, k_ij, k_jj`` are the pair's Gram entries and
    ``sigma_i, sigma_j, delta_i, delta_j`` the current values.
    """

    e1: float
    e2: float
    eta: float
    a: float
    k_ii: float
    k_ij: float
    k_jj: float
    sigma_i: float
    sigma_j: float
    delta_i: float
    delta_j: float


class SubproblemResult(NamedTuple):
    sigma_i: float
    sigma_j: float
    delta_i: float
    delta_j: float
    case: int
    objective_change: float


# (i form, j form, numerator shift): True = upper form sigma = c2 - delta/2
_CASES = {
    1: (True, True, 0.0),
    2: (True, False, 2.0),
    3: (False, True, -2.0),
    4: (False, False, 0.0),
}


def case_interval(case: int, a: float, c2: float):
    """Admissible sigma_j range for one of the four two-form cases."""
    h = c2 / 2.0
    if case == 1:
        return max(h, a - c2), min(c2, a - h)
    if case == 2:
        return max(0.0, a - c2), min(h, a - h)
    if case == 3:
        return max(h, a - h), min(c2, a)
    if case == 4:
        return max(0.0, a - h), min(h, a)
    raise ValueError(case)


def _delta_for(sigma, upper, c2):
    d = 2.0 * (c2 - sigma) if upper else 2.0 * sigma
    return min(max(d, 0.0), c2)


def solve_subproblem(s: SubproblemInputs, c: DerivedConstants) -> SubproblemResult:
    """Minimize the pair subproblem exactly over its four two-form cases."""
    c2 = c.c2
    # gradient of the quadratic+linear part at the current point (= -F on S)
    g_i = s.k_ii * s.sigma_i + s.k_ij * s.sigma_j + s.e1
    g_j = s.k_ij * s.sigma_i + s.k_jj * s.sigma_j + s.e2
    base = s.a * (s.k_ii - s.k_ij) + s.e1 - s.e2
    best = None
    for case, (up_i, up_j, shift) in _CASES.items():
        lo, hi = case_interval(case, s.a, c2)
        if lo > hi:
            if lo - hi > 1e-12 * max(1.0, c2):
                continue
            hi = lo
        if s.eta > ETA_FLOOR:
            candidates = (min(max((base + shift) / s.eta, lo), hi),)
        else:
            candidates = (lo, hi)
        for sj in candidates:
            si = min(max(s.a - sj, 0.0), c2)
            di = _delta_for(si, up_i, c2)
            dj = _delta_for(sj, up_j, c2)
            ds_i, ds_j = si - s.sigma_i, sj - s.sigma_j
            change = (
                g_i * ds_i
                + g_j * ds_j
                + 0.5 * (s.k_ii * ds_i * ds_i + 2.0 * s.k_ij * ds_i * ds_j + s.k_jj * ds_j * ds_j)
                - 0.5 * ((di - s.delta_i) + (dj - s.delta_j))
            )
            if best is None or change < best.objective_change:
                best = SubproblemResult(si, sj, di, dj, case, change)
    if best is None:
        raise InternalStateError(f"all four case intervals are empty (a={s.a!r}, c2={c2!r})")
    return best


# ---------------------------------------------------------------------------
# cache maintenance, bias


def update_function_cache(fcache, row_i, row_j, d_alpha_i, d_alpha_j, p):
    """In place: F(x_u) += d_alpha_i k(x_i, x_u) + d_alpha_j k(x_j, x_u)."""
    if d_alpha_i != 0.0:
        fcache += d_alpha_i * row_i[p:]
    if d_alpha_j != 0.0:
        fcache += d_alpha_j * row_j[p:]
    return fcache


def compute_bias(sigma, delta, fcache, c2, eps) -> float:
    """Bias from the non-bound samples, where the decision value is exactly -1 or +1.

    With no non-bound sample, fall back to the midpoint of the bias interval
    allowed by the capped (delta = c2) samples, or failing those, by the
    bound samples' one-sided conditions.
    """
    d1, d2, d3 = membership_masks(sigma, delta, c2, eps)
    nb = d3 & (delta < c2 - eps)
    if nb.any():
        vals = np.where(d1[nb], -1.0, 1.0) - fcache[nb]
        return float(np.mean(vals))
    capped = delta >= c2 - eps
    if capped.any():
        lo = -1.0 - fcache[capped]
        hi = 1.0 - fcache[capped]
    else:
        lo = np.where(d2, 1.0 - fcache, -math.inf)
        hi = np.where(d1, -1.0 - fcache, math.inf)
    return _interval_center(lo, hi)


def _interval_center(lo, hi):
    left, right = float(np.max(lo)), float(np.min(hi))
    if left <= right:
        if math.isinf(left) and math.isinf(right):
            return 0.0
        if math.isinf(left):
            return right
        if math.isinf(right):
            return left
        return 0.5 * (left + right)
    # empty intersection: minimize total distance to the intervals, a convex
    # piecewise-linear function whose minimum sits on a finite endpoint
    pts = np.unique(np.concatenate([lo[np.isfinite(lo)], hi[np.isfinite(hi)]]))
    lo_f = np.where(np.isfinite(lo), lo, -np.inf)
    hi_f = np.where(np.isfinite(hi), hi, np.inf)
    cost = (
        np.maximum(lo_f[None, :] - pts[:, None], 0.0).sum(axis=1)
        + np.maximum(pts[:, None] - hi_f[None, :], 0.0).sum(axis=1)
    )
    best = np.flatnonzero(cost <= cost.min() * (1 + 1e-12) + 1e-300)
    return float(0.5 * (pts[best[0]] + pts[best[-1]]))


# ---------------------------------------------------------------------------
# trace


TRACE_HEADER = ("iter", "scope", "i", "j", "objective", "violation", "kernel_evals", "ms")


@dataclass
class SolverTrace:
    """Per-iteration log plus run-level counters.

    ``ms`` is cumulative wall time since the solver started.
    """

    rows: list = field(default_factory=list)
    full_scans: int = 0
    iterations: int = 0
    kernel_evals: int = 0
    cache_misses: int = 0
    cache_hits: int = 0
    peak_cache_rows: int = 0
    max_capacity: int = 0
    capacity_history: list = field(default_factory=list)
    initial_objective: Optional[float] = None
    final_objective: Optional[float] = None
    elapsed_ms: float = 0.0
    state: Optional[DualState] = None
    constants: Optional[DerivedConstants] = None

    def record(self, it, scope, i, j, objective, violation, kernel_evals, ms):
        self.rows.append((it, scope, i, j, objective, violation, kernel_evals, ms))

    def to_csv(self, sink):
        if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
            with open(sink, "w", newline="", encoding="utf-8") as fh:
                self.to_csv(fh)
            return
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for it, scope, i, j, obj, viol, ke, ms in self.rows:
            w.writerow([it, scope, i, j, repr(float(obj)), repr(float(viol)), ke, f"{ms:.3f}"])

    def csv_text(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


# ---------------------------------------------------------------------------
# main loop


class StepInfo(NamedTuple):
    """What a per-iteration callback receives."""

    iteration: int
    scope: str
    i: int
    j: int
    violation: float
    sigma_before: tuple
    sigma_after: tuple
    objective_change: float
    case: int


class _USMO:
    def __init__(self, dataset: Dataset, h: Hyperparams, state: DualState, callback=None, check=False):
        self.ds = dataset
        self.h = h
        self.c = derive_constants(h, dataset.p, dataset.n)
        self.eps = default_set_eps(h, self.c)
        self.p = dataset.p
        self.callback = callback
        self.check = check
        self.state = state
        self.row_cap = max(2, int(h.cache_mb * 2**20 // (8 * (dataset.p + dataset.n))))
        self.cache = GramCache(h.kernel, dataset.X, capacity=self._capacity(0))
        self.trace = SolverTrace(constants=self.c)
        self._t0 = time.perf_counter()

    def _capacity(self, n_nonbound):
        if self.h.cache_rows is not None:
            return self.h.cache_rows
        return max(2, min(max(64, 2 * n_nonbound), self.row_cap))

    def _ms(self):
        return 1000.0 * (time.perf_counter() - self._t0)

    def _initialize(self):
        st = self.state
        problems = feasibility_violations(st, self.c, self.eps)
        if problems:
            raise InputError("infeasible initial state: " + "; ".join(problems))
        p, n = self.p, self.c.n
        # linear coefficients and initial cache, streamed one row block at a time
        alpha = recover_alpha(st.sigma, self.c, p)
        active = np.flatnonzero(alpha != 0.0)
        self.lin = np.empty(n)
        fc = np.empty(n)
        for start in range(0, n, 256):
            idx = np.arange(start, min(start + 256, n)) + p
            block = self.cache.uncached_rows(idx)
            self.lin[idx - p] = self.c.c1 * block[:, :p].sum(axis=1)
            fc[idx - p] = block[:, active] @ alpha[active]
        st.fcache = fc
        st.objective = dual_objective(st.sigma, st.delta, fc, self.lin)
        self.trace.initial_objective = st.objective
        self.masks = membership_masks(st.sigma, st.delta, self.c.c2, self.eps)
        self.nonbound = (st.delta > self.eps) & (st.delta < self.c.c2 - self.eps)

    def _refresh_membership(self, u):
        st, c2, eps = self.state, self.c.c2, self.eps
        s, d = st.sigma[u], st.delta[u]
        m = classify_membership(s, d, c2, eps)
        d1, d2, d3 = self.masks
        d1[u] = bool(m & Membership.D1)
        d2[u] = bool(m & Membership.D2)
        d3[u] = bool(m & Membership.D3)
        self.nonbound[u] = eps < d < c2 - eps

    def _step(self, i, j, violation, scope):
        st, p = self.state, self.p
        row_i = self.cache.row(p + i)
        row_j = self.cache.row(p + j)
        k_ii, k_jj, k_ij = row_i[p + i], row_j[p + j], row_i[p + j]
        s_i, s_j = st.sigma[i], st.sigma[j]
        f_i, f_j = st.fcache[i], st.fcache[j]
        inputs = SubproblemInputs(
            e1=-f_i - (k_ii * s_i + k_ij * s_j),
            e2=-f_j - (k_ij * s_i + k_jj * s_j),
            eta=k_ii + k_jj - 2.0 * k_ij,
            a=s_i + s_j,
            k_ii=k_ii,
            k_ij=k_ij,
            k_jj=k_jj,
            sigma_i=s_i,
            sigma_j=s_j,
            delta_i=st.delta[i],
            delta_j=st.delta[j],
        )
        if inputs.eta < -1e-12:
            raise InternalStateError(f"negative curvature {inputs.eta!r}; kernel is not PSD")
        res = solve_subproblem(inputs, self.c)
        st.sigma[i], st.sigma[j] = res.sigma_i, res.sigma_j
        st.delta[i], st.delta[j] = res.delta_i, res.delta_j
        # alpha_u = -sigma_u for unlabeled samples
        update_function_cache(st.fcache, row_i, row_j, -(res.sigma_i - s_i), -(res.sigma_j - s_j), p)
        st.objective += res.objective_change
        st.iteration += 1
        self._refresh_membership(i)
        self._refresh_membership(j)
        self.trace.record(
            st.iteration, scope, i, j, st.objective, violation, self.cache.kernel_evals, self._ms()
        )
        if self.check:
            self._check_step(i, j, res, math.hypot(res.sigma_i - s_i, res.sigma_j - s_j))
        if self.callback is not None:
            self.callback(
                StepInfo(st.iteration, scope, i, j, violation, (s_i, s_j),
                         (res.sigma_i, res.sigma_j), res.objective_change, res.case),
                st,
            )
        if self.h.max_iter is not None and st.iteration >= self.h.max_iter:
            self._budget(f"iteration budget of {self.h.max_iter} exhausted")

    def _check_step(self, i, j, res, moved):
        st = self.state
        problems = feasibility_violations(st, self.c, self.eps)
        if problems:
            raise InternalStateError(f"iteration {st.iteration}: " + "; ".join(problems))
        if not res.objective_change < 0.0:
            raise InternalStateError(f"iteration {st.iteration}: objective did not decrease")
        # sufficient decrease: a pair violating by more than tau gains at least tau/2 per unit step
        if not -res.objective_change > self.h.tau / (2.0 * math.sqrt(2.0)) * moved:
            raise InternalStateError(f"iteration {st.iteration}: decrease below tau/(2 sqrt 2) bound")
        m_i = classify_membership(st.sigma[i], st.delta[i], self.c.c2, self.eps)
        m_j = classify_membership(st.sigma[j], st.delta[j], self.c.c2, self.eps)
        if is_violating_pair(m_i, m_j, st.fcache[i], st.fcache[j], self.h.tau):
            raise InternalStateError(f"iteration {st.iteration}: pair ({i}, {j}) still violating")

    def _budget(self, message):
        self._finish_trace()
        raise BudgetExceededError(message, state=self.state, trace=self.trace)

    def _finish_trace(self):
        t, cache = self.trace, self.cache
        t.iterations = self.state.iteration
        t.kernel_evals = cache.kernel_evals
        t.cache_misses = cache.misses
        t.cache_hits = cache.hits
        t.peak_cache_rows = cache.peak_rows
        t.final_objective = self.state.objective
        t.elapsed_ms = self._ms()
        t.state = self.state

    def solve(self):
        self._initialize()
        st = self.state
        tau = self.h.tau
        while True:
            cap = self._capacity(int(self.nonbound.sum()))
            self.cache.capacity = cap
            self.trace.capacity_history.append(cap)
            self.trace.max_capacity = max(self.trace.max_capacity, cap)

            while True:
                pair = _max_violating_pair(st.fcache, self.masks, self.nonbound, tau)
                if pair is None:
                    break
                self._step(pair[0], pair[1], pair[2], NONBOUND)

            if self.trace.full_scans >= self.h.max_full_scans:
                self._budget(f"no tau-optimal point within {self.h.max_full_scans} full scans")
            self.trace.full_scans += 1
            scan = FullScan(st.fcache, self.masks, self.nonbound, tau)
            changed = 0
            while True:
                pair = scan.next_pair()
                if pair is None:
                    break
                self._step(pair[0], pair[1], pair[2], FULL)
                scan.invalidate()
                changed += 1
            st.objective = dual_objective(st.sigma, st.delta, st.fcache, self.lin)
            if changed == 0 and check_tau_optimality(scan.final_values(), tau):
                break

        self._finish_trace()
        alpha = recover_alpha(st.sigma, self.c, self.p)
        bias = compute_bias(st.sigma, st.delta, st.fcache, self.c.c2, self.eps)
        from .model import Model

        keep = alpha != 0.0
        model = Model(self.h.kernel, bias, alpha[keep], self.ds.X[keep])
        return model, self.trace


def run(dataset: Dataset, h: Hyperparams, init: Optional[DualState] = None, *,
        callback=None, check_invariants=False):
    """Train on ``dataset``; returns ``(Model, SolverTrace)``.

    ``init`` defaults to the ranked five-group start. ``callback(info, state)``
    fires after every pair update; ``check_invariants`` re-validates the
    state after each one and raises :class:`InternalStateError` on failure.
    """
    if init is None:
        from .initializer import initial_state

        init = initial_state(dataset, h)
    state = DualState(np.array(init.sigma, dtype=float), np.array(init.delta, dtype=float))
    return _USMO(dataset, h, state, callback=callback, check=check_invariants).solve()

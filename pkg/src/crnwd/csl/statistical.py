"""Statistical CSL checking on SSA runs.

Each probabilistic operator at the start state is estimated from ``runs``
trajectories and compared with its bound through a Wilson score interval.
Operands without probabilistic subformulas are checked inside a compiled
path kernel; nested operands are labelled by re-simulating ``m_sub`` short
runs from every visited state (results are then flagged approximate).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numba as nb
import numpy as np
from scipy import stats

from ..crn import Crn
from ..rng import derive_seed, derive_seed_jit, seed_state, uniform_closed_open, uniform_open_closed
from ..ssa import SimConfig, check_predicate as _check, fill_propensities, select_reaction, simulate, thread_count
from .exact import FAILS, HOLDS, UNDECIDED, VerificationResult
from .formula import (
    And, Formula, GloballyAll, Implies, Not, Or, PredicateContext, ProbEventually, ProbGlobally,
    ProbWeakUntil, compile_predicate, eval_state, is_probabilistic, max_time_bound, prob_depth,
    to_text,
)

EVENTUALLY, GLOBALLY, WEAK_UNTIL = 0, 1, 2
SUCCESS, FAILURE, UNRESOLVED = 0, 1, 2


class StatisticalConfigError(ValueError):
    pass


def wilson_interval(k: int, n: int, alpha: float = 0.01) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion at level ``1 - alpha``."""
    if n <= 0:
        return 0.0, 1.0
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return float(lo), float(hi)


# --- compiled path checking ----------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _one_path(spec, stoich, count, scale, change, init, seed, max_events, mode, t_bound,
              p1, k1, c1, o1, r1, a1, p2, k2, c2, o2, r2, a2):
    """Outcome of one run for F<=t p1, G<=t p1 or (p1 W p2) within t_bound."""
    rng = seed_state(seed)
    x = init.copy()
    cum = np.empty(scale.shape[0], dtype=np.float64)
    stack = np.empty(p1.shape[0] + p2.shape[0] + 1, dtype=np.bool_)
    t = 0.0
    n = 0
    while True:
        a_ok = _check(x, p1, k1, c1, o1, r1, a1, stack)
        if mode == 0:
            if a_ok:
                return 0
        elif mode == 1:
            if not a_ok:
                return 1
        else:
            if _check(x, p2, k2, c2, o2, r2, a2, stack):
                return 0
            if not a_ok:
                return 1
        a0 = fill_propensities(x, spec, stoich, count, scale, cum)
        if a0 == 0.0:
            # absorbed: the current state persists forever
            return 1 if mode == 0 else 0
        if n >= max_events:
            return 2
        t += -math.log(uniform_open_closed(rng)) / a0
        if t > t_bound:
            if mode == 0:
                return 1
            if mode == 1:
                return 0
            return 2
        j = select_reaction(cum, a0, uniform_closed_open(rng))
        for s in range(x.shape[0]):
            x[s] += change[j, s]
        n += 1


@nb.njit(cache=True, nogil=True)
def _path_batch(spec, stoich, count, scale, change, init, master, start, n_runs, max_events,
                mode, t_bound, p1, k1, c1, o1, r1, a1, p2, k2, c2, o2, r2, a2):
    out = np.zeros(3, dtype=np.int64)
    for i in range(start, start + n_runs):
        seed = derive_seed_jit(master, np.uint64(i))
        res = _one_path(spec, stoich, count, scale, change, init, seed, max_events, mode, t_bound,
                        p1, k1, c1, o1, r1, a1, p2, k2, c2, o2, r2, a2)
        out[res] += 1
    return out


def path_counts(crn: Crn, init, mode: int, t_bound: float, phi: Formula, psi: Formula | None,
                ctx: PredicateContext, runs: int, seed: int,
                max_events: int = 50_000_000) -> np.ndarray:
    """``[successes, failures, unresolved]`` over ``runs`` seeded runs.

    Run ``i`` uses the ensemble seed ``derive_seed(seed, i)``.
    """
    x0 = crn.check_state(init)
    spec, stoich, cnt, scale = crn.kinetic_tables
    change = np.ascontiguousarray(crn.change_matrix)
    c1 = compile_predicate(phi, ctx).arrays()
    c2 = compile_predicate(psi, ctx).arrays() if psi is not None else c1
    master = np.uint64(int(seed) & ((1 << 64) - 1))

    def work(bounds):
        lo, hi = bounds
        return _path_batch(spec, stoich, cnt, scale, change, x0, master, lo, hi - lo, max_events,
                           mode, float(t_bound), *c1, *c2)

    workers = min(thread_count(), max(1, runs // 256))
    edges = np.linspace(0, runs, workers + 1).astype(int)
    chunks = list(zip(edges[:-1], edges[1:]))
    if workers <= 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, chunks))
    return np.sum(parts, axis=0)


# --- evaluator -----------------------------------------------------------------


class _Statistical:
    def __init__(self, crn: Crn, ctx: PredicateContext, horizon: float, alpha: float, m_sub: int,
                 max_events: int):
        self.crn = crn
        self.ctx = ctx
        self.horizon = horizon
        self.alpha = alpha
        self.m_sub = m_sub
        self.max_events = max_events
        self.approximate = False
        self.notes: list[str] = []
        self.cache: dict[tuple[Formula, bytes], bool] = {}

    def time_of(self, f) -> float:
        if isinstance(f, (ProbEventually, ProbGlobally)):
            return min(f.time, self.horizon)
        return self.horizon

    def operands(self, f):
        if isinstance(f, ProbEventually):
            return EVENTUALLY, f.arg, None
        if isinstance(f, ProbGlobally):
            return GLOBALLY, f.arg, None
        if isinstance(f, GloballyAll):
            return GLOBALLY, f.arg, None
        return WEAK_UNTIL, f.left, f.right

    def counts(self, f, x0, runs: int, seed: int) -> np.ndarray:
        mode, phi, psi = self.operands(f)
        t = self.time_of(f)
        nested = prob_depth(phi) > 0 or (psi is not None and prob_depth(psi) > 0)
        if not nested:
            return path_counts(self.crn, x0, mode, t, phi, psi, self.ctx, runs, seed, self.max_events)
        self.approximate = True
        out = np.zeros(3, dtype=np.int64)
        cfg = SimConfig(t_end=t, max_events=self.max_events)
        for i in range(runs):
            run_seed = derive_seed(seed, i)
            traj = simulate(self.crn, x0, cfg, seed=run_seed)
            states = traj.states(self.crn)
            out[self.walk(mode, phi, psi, states, traj, run_seed)] += 1
        return out

    def walk(self, mode, phi, psi, states, traj, run_seed) -> int:
        for pos, x in enumerate(states):
            a_ok = self.state_sat(phi, x, derive_seed(run_seed, pos))
            if mode == EVENTUALLY and a_ok:
                return SUCCESS
            if mode == GLOBALLY and not a_ok:
                return FAILURE
            if mode == WEAK_UNTIL:
                if self.state_sat(psi, x, derive_seed(run_seed, pos)):
                    return SUCCESS
                if not a_ok:
                    return FAILURE
        if traj.terminated_by == "absorbed":
            return FAILURE if mode == EVENTUALLY else SUCCESS
        if traj.terminated_by == "event_cap":
            return UNRESOLVED
        if mode == EVENTUALLY:
            return FAILURE
        return SUCCESS if mode == GLOBALLY else UNRESOLVED

    def state_sat(self, f: Formula, x: np.ndarray, seed: int) -> bool:
        """Two-valued label of a (possibly nested) state formula at ``x``."""
        if not prob_depth(f):
            return bool(eval_state(f, x[None, :], self.ctx)[0])
        if isinstance(f, Not):
            return not self.state_sat(f.arg, x, seed)
        if isinstance(f, And):
            return self.state_sat(f.left, x, seed) and self.state_sat(f.right, x, seed)
        if isinstance(f, Or):
            return self.state_sat(f.left, x, seed) or self.state_sat(f.right, x, seed)
        if isinstance(f, Implies):
            return (not self.state_sat(f.left, x, seed)) or self.state_sat(f.right, x, seed)
        key = (f, x.tobytes())
        hit = self.cache.get(key)
        if hit is None:
            c = self.counts(f, x, self.m_sub, seed)
            n = int(c.sum())
            p = (c[SUCCESS] + (c[UNRESOLVED] if not isinstance(f, ProbEventually) else 0)) / n
            hit = bool(p >= f.bound) if not getattr(f, "strict", False) else bool(p > f.bound)
            if isinstance(f, GloballyAll):
                hit = c[FAILURE] == 0
            self.cache[key] = hit
        return hit


def _kleene_and(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def _kleene_not(a):
    return None if a is None else not a


def evaluate_statistical(crn: Crn, init, formula: Formula, ctx: PredicateContext, runs: int = 10_000,
                         horizon: float | None = None, seed: int = 0, alpha: float = 0.01,
                         m_sub: int = 200, max_events: int = 50_000_000) -> VerificationResult:
    """Monte Carlo verdict for ``formula`` at ``init``.

    ``horizon`` bounds every run and must cover the largest finite time
    bound in the formula.  Unbounded operators (``W``, ``P>=1 [ G ... ]``)
    are checked only up to the horizon and flagged approximate.
    """
    if runs < 1:
        raise StatisticalConfigError("runs must be positive")
    bound = max_time_bound(formula)
    finite = [] if math.isinf(bound) else [bound]
    need = max(finite, default=0.0)
    if horizon is None:
        horizon = need
    if horizon < need:
        raise StatisticalConfigError(f"horizon {horizon} is below the largest time bound {need}")
    if not horizon > 0:
        raise StatisticalConfigError("horizon must be positive")
    x0 = crn.check_state(init)
    ev = _Statistical(crn, ctx, float(horizon), alpha, m_sub, max_events)
    probs: dict[str, float] = {}
    cis: dict[str, tuple[float, float]] = {}

    def tv(f):
        if not prob_depth(f):
            return bool(eval_state(f, x0[None, :], ctx)[0])
        if isinstance(f, Not):
            return _kleene_not(tv(f.arg))
        if isinstance(f, And):
            return _kleene_and(tv(f.left), tv(f.right))
        if isinstance(f, Or):
            return _kleene_not(_kleene_and(_kleene_not(tv(f.left)), _kleene_not(tv(f.right))))
        if isinstance(f, Implies):
            return _kleene_not(_kleene_and(tv(f.left), _kleene_not(tv(f.right))))
        c = ev.counts(f, x0, runs, seed)
        n = int(c.sum())
        if c[UNRESOLVED]:
            ev.approximate = True
            ev.notes.append(f"{to_text(f)}: {int(c[UNRESOLVED])} runs unresolved at the horizon")
        key = to_text(f)
        if isinstance(f, GloballyAll):
            probs[key] = float(c[SUCCESS] + c[UNRESOLVED]) / n
            cis[key] = wilson_interval(int(c[SUCCESS] + c[UNRESOLVED]), n, alpha)
            ev.approximate = True
            ev.notes.append(f"{key}: checked on visited states up to the horizon only")
            return bool(c[FAILURE] == 0)
        k = int(c[SUCCESS]) + (int(c[UNRESOLVED]) if isinstance(f, ProbWeakUntil) else 0)
        p = k / n
        lo, hi = wilson_interval(k, n, alpha)
        probs[key] = p
        cis[key] = (lo, hi)
        if not f.strict and f.bound <= 0:
            return True
        if f.strict and f.bound >= 1:
            return False
        if lo > f.bound:
            return True
        if hi < f.bound or (f.strict and hi <= f.bound):
            return False
        return None

    v = tv(formula)
    verdict = HOLDS if v is True else FAILS if v is False else UNDECIDED
    return VerificationResult(verdict, probs, "statistical", cis, False, ev.approximate, ev.notes)

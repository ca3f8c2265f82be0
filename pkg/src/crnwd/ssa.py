"""Gillespie direct-method simulation with reproducible seeding.

Every run draws from its own xoshiro256** stream.  Ensemble run ``i`` is
seeded with ``derive_seed(master_seed, i)`` so any single run can be
reproduced in isolation with :func:`simulate`.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .crn import COUNT_LIMIT, Crn
from .csl.formula import Formula, PredicateContext, compile_predicate
from .rng import derive_seed, derive_seed_jit, seed_state, uniform_closed_open, uniform_open_closed

HORIZON, ABSORBED, EVENT_CAP = "horizon", "absorbed", "event_cap"
_STATUS = {0: HORIZON, 1: ABSORBED, 2: EVENT_CAP}
DEFAULT_MAX_EVENTS = 50_000_000


class SimulationError(RuntimeError):
    """Propensity overflow, NaN or molecule-count overflow during simulation."""


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    master_seed: int = 0
    max_events: int = DEFAULT_MAX_EVENTS
    sample_grid: float | None = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.max_events <= 0:
            raise ValueError("max_events must be positive")
        if self.sample_grid is not None and not self.sample_grid > 0:
            raise ValueError("sample_grid must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    reactions: np.ndarray
    initial: np.ndarray
    final: np.ndarray
    end_time: float
    terminated_by: str
    t_end: float
    seed: int
    # (event position after which the species was zeroed, species index)
    injection: tuple[int, int] | None = None

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.reactions.tolist()))

    @property
    def n_events(self) -> int:
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.reactions, other.reactions)
            and np.array_equal(self.initial, other.initial)
            and np.array_equal(self.final, other.final)
            and self.end_time == other.end_time
            and self.terminated_by == other.terminated_by
            and self.injection == other.injection
        )

    def states(self, crn: Crn) -> np.ndarray:
        """States visited, row ``i`` being the state after ``i`` events."""
        deltas = crn.change_matrix[self.reactions]
        out = np.empty((self.n_events + 1, crn.n_species), dtype=np.int64)
        out[0] = self.initial
        np.cumsum(deltas, axis=0, out=out[1:])
        out[1:] += self.initial
        if self.injection is not None:
            pos, sp = self.injection
            out[pos + 1:, sp] -= out[pos + 1, sp]
        return out


# --- kernels ---------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def fill_propensities(x, spec, stoich, count, scale, cum):
    """Cumulative propensities into ``cum``; returns the total."""
    a0 = 0.0
    for j in range(scale.shape[0]):
        a = scale[j]
        for i in range(count[j]):
            n = x[spec[j, i]]
            s = stoich[j, i]
            if n < s:
                a = 0.0
                break
            for k in range(s):
                a *= n - k
        a0 += a
        cum[j] = a0
    return a0


@nb.njit(cache=True, nogil=True)
def select_reaction(cum, a0, u):
    target = u * a0
    last = -1
    for j in range(cum.shape[0]):
        if target < cum[j]:
            return j
        prev = cum[j - 1] if j > 0 else 0.0
        if cum[j] > prev:
            last = j
    return last


@nb.njit(cache=True, nogil=True)
def check_predicate(x, prog, kind, coef, op, rhs, abc, stack):
    """Evaluate a compiled state predicate (stack program) at ``x``."""
    sp = 0
    for k in range(prog.shape[0]):
        code = prog[k, 0]
        if code == 0:
            a = prog[k, 1]
            if kind[a] == 0:
                v = 0.0
                for s in range(x.shape[0]):
                    v += coef[a, s] * x[s]
                o = op[a]
                r = rhs[a]
                if o == 0:
                    res = v >= r
                elif o == 1:
                    res = v <= r
                elif o == 2:
                    res = v > r
                elif o == 3:
                    res = v < r
                elif o == 4:
                    res = v == r
                else:
                    res = v != r
            else:
                ia = float(x[abc[a, 0]])
                ib = float(x[abc[a, 1]])
                ic = float(x[abc[a, 2]])
                spread = (ia - ib) ** 2 + (ib - ic) ** 2 + (ic - ia) ** 2
                res = ia > 0 and ib > 0 and ic > 0 and spread > rhs[a]
            stack[sp] = res
            sp += 1
        elif code == 1:
            stack[sp - 1] = not stack[sp - 1]
        elif code == 2:
            stack[sp - 2] = stack[sp - 2] and stack[sp - 1]
            sp -= 1
        elif code == 3:
            stack[sp - 2] = stack[sp - 2] or stack[sp - 1]
            sp -= 1
        elif code == 4:
            stack[sp] = True
            sp += 1
        else:
            stack[sp] = False
            sp += 1
    return stack[0]


@nb.njit(cache=True, nogil=True)
def _simulate_kernel(spec, stoich, count, scale, change, init, t_end, max_events, seed,
                     inject_time, inject_species, record):
    rng = seed_state(seed)
    x = init.copy()
    cum = np.empty(scale.shape[0], dtype=np.float64)
    cap = 1024 if record else 1
    times = np.empty(cap, dtype=np.float64)
    rxns = np.empty(cap, dtype=np.int32)
    n = 0
    t = 0.0
    status = 0
    inject_pos = -1
    while True:
        a0 = fill_propensities(x, spec, stoich, count, scale, cum)
        if a0 == 0.0:
            status = 1
            break
        if not (a0 < np.inf):
            status = 3
            break
        if n >= max_events:
            status = 2
            break
        tau = -math.log(uniform_open_closed(rng)) / a0
        if t + tau > t_end:
            t = t_end
            status = 0
            break
        t += tau
        j = select_reaction(cum, a0, uniform_closed_open(rng))
        for s in range(x.shape[0]):
            x[s] += change[j, s]
            if x[s] > COUNT_LIMIT:
                status = 4
        if status == 4:
            break
        if record:
            if n == cap:
                cap *= 2
                nt = np.empty(cap, dtype=np.float64)
                nr = np.empty(cap, dtype=np.int32)
                nt[:n] = times[:n]
                nr[:n] = rxns[:n]
                times = nt
                rxns = nr
            times[n] = t
            rxns[n] = j
        n += 1
        if inject_species >= 0 and inject_pos < 0 and t >= inject_time:
            x[inject_species] = 0
            inject_pos = n - 1
    return times[:n] if record else times[:0], rxns[:n] if record else rxns[:0], n, x, t, status, inject_pos


def _kernel_args(crn: Crn):
    spec, stoich, count, scale = crn.kinetic_tables
    return spec, stoich, count, scale, np.ascontiguousarray(crn.change_matrix)


def simulate(crn: Crn, init, cfg: SimConfig, seed: int | None = None,
             inject: tuple[str, float] | None = None) -> Trajectory:
    """One direct-method trajectory.

    ``seed`` defaults to ``cfg.master_seed``.  ``inject=(species, t)`` zeroes
    that species right after the first event at time >= t.
    """
    x0 = crn.check_state(init)
    seed = cfg.master_seed if seed is None else seed
    sp_inject, t_inject = -1, math.inf
    if inject is not None:
        sp_inject, t_inject = crn.index(inject[0]), float(inject[1])
    times, rxns, n, final, t, status, pos = _simulate_kernel(
        *_kernel_args(crn), x0, float(cfg.t_end), int(cfg.max_events),
        np.uint64(int(seed) & ((1 << 64) - 1)), t_inject, sp_inject, True,
    )
    if status == 3:
        raise SimulationError("total propensity is not finite")
    if status == 4:
        raise SimulationError("molecule count overflow")
    return Trajectory(
        times=times.copy(), reactions=rxns.copy(), initial=x0.copy(), final=final,
        end_time=float(t), terminated_by=_STATUS[status], t_end=float(cfg.t_end),
        seed=int(seed), injection=None if pos < 0 else (int(pos), sp_inject),
    )


def thread_count() -> int:
    env = os.environ.get("CRNWD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate_ensemble(crn: Crn, init, cfg: SimConfig, n_runs: int,
                      inject: tuple[str, float] | None = None) -> list[Trajectory]:
    if n_runs < 0:
        raise ValueError("n_runs must be nonnegative")
    seeds = [derive_seed(cfg.master_seed, i) for i in range(n_runs)]
    workers = min(thread_count(), max(n_runs, 1))
    if workers <= 1:
        return [simulate(crn, init, cfg, seed=s, inject=inject) for s in seeds]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(lambda s: simulate(crn, init, cfg, seed=s, inject=inject), seeds))


def sample_on_grid(traj: Trajectory, step: float, crn: Crn | None = None,
                   t_end: float | None = None) -> list[tuple[float, np.ndarray]]:
    """Left-continuous sampling: the state after the last event at or before t."""
    if not step > 0:
        raise ValueError("step must be positive")
    t_end = traj.t_end if t_end is None else t_end
    n_points = int(math.floor(t_end / step + 1e-9)) + 1
    grid = np.arange(n_points) * step
    if crn is None:
        if traj.n_events:
            raise ValueError("a CRN is needed to replay a trajectory with events")
        return [(float(t), traj.initial.copy()) for t in grid]
    states = traj.states(crn)
    idx = np.searchsorted(traj.times, grid, side="right")
    return [(float(t), states[i]) for t, i in zip(grid, idx)]


@nb.njit(cache=True, nogil=True)
def _hitting_batch(spec, stoich, count, scale, change, init, master, start, n_runs, t_end, max_events,
                   prog, kind, coef, op, rhs, abc):
    # same seeds and draw order as _simulate_kernel, stopped at the first hit
    out = np.full(n_runs, np.nan)
    cum = np.empty(scale.shape[0], dtype=np.float64)
    stack = np.empty(prog.shape[0] + 1, dtype=np.bool_)
    for i in range(n_runs):
        rng = seed_state(derive_seed_jit(master, np.uint64(start + i)))
        x = init.copy()
        t = 0.0
        n = 0
        while True:
            if check_predicate(x, prog, kind, coef, op, rhs, abc, stack):
                out[i] = t
                break
            a0 = fill_propensities(x, spec, stoich, count, scale, cum)
            if a0 == 0.0 or not (a0 < np.inf) or n >= max_events:
                break
            t += -math.log(uniform_open_closed(rng)) / a0
            if t > t_end:
                break
            j = select_reaction(cum, a0, uniform_closed_open(rng))
            for s in range(x.shape[0]):
                x[s] += change[j, s]
            n += 1
    return out


def first_passage_times(crn: Crn, init, predicate, cfg: SimConfig, n_runs: int,
                        ctx: PredicateContext | None = None) -> np.ndarray:
    """Time each ensemble run first visits a state where ``predicate`` holds (nan if never).

    ``predicate`` is a state formula (compiled, runs stop at the first hit)
    or a callable on a ``(n, n_species)`` state array (full runs replayed).
    """
    if n_runs < 0:
        raise ValueError("n_runs must be nonnegative")
    if isinstance(predicate, Formula):
        ctx = ctx or PredicateContext(tuple(crn.names))
        arrays = compile_predicate(predicate, ctx).arrays()
        x0 = crn.check_state(init)
        master = np.uint64(int(cfg.master_seed) & ((1 << 64) - 1))

        def work(bounds):
            lo, hi = bounds
            return _hitting_batch(*_kernel_args(crn), x0, master, lo, hi - lo, float(cfg.t_end),
                                  int(cfg.max_events), *arrays)

        workers = min(thread_count(), max(1, n_runs // 256))
        edges = np.linspace(0, n_runs, workers + 1).astype(int)
        chunks = list(zip(edges[:-1], edges[1:]))
        if workers <= 1:
            parts = [work(c) for c in chunks]
        else:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(work, chunks))
        return np.concatenate(parts) if parts else np.empty(0)
    out = np.full(n_runs, np.nan)
    for i, traj in enumerate(simulate_ensemble(crn, init, cfg, n_runs)):
        states = traj.states(crn)
        hits = np.flatnonzero(predicate(states))
        if hits.size:
            out[i] = 0.0 if hits[0] == 0 else traj.times[hits[0] - 1]
    return out

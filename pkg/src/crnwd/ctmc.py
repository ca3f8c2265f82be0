"""Explicit-state CTMC of a CRN and its time-bounded reachability analysis.

States are explored breadth first from the initial state; state ``i`` is the
``i``-th distinct state discovered, successors being generated in reaction
order.  Transitions that would leave a per-species cap are not stored; their
rate is kept as a *leak* so that reachability probabilities on a truncated
chain are genuine lower bounds.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats

from .crn import Crn, propensities

POISSON_TAIL = 1e-10
DIRECT_SOLVE_LIMIT = 50_000
ITERATIVE_TOL = 1e-10


class ExplorationError(RuntimeError):
    def __init__(self, message: str, partial_count: int):
        super().__init__(message)
        self.partial_count = partial_count


class TruncatedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExploreCaps:
    max_states: int = 2_000_000
    per_species_cap: tuple[int, ...] | dict | int | None = None

    def __post_init__(self):
        if self.max_states <= 0:
            raise ValueError("max_states must be positive")

    def cap_vector(self, crn: Crn) -> np.ndarray | None:
        caps = self.per_species_cap
        if caps is None:
            return None
        if isinstance(caps, int):
            vec = np.full(crn.n_species, caps, dtype=np.int64)
        elif isinstance(caps, dict):
            vec = np.full(crn.n_species, np.iinfo(np.int64).max, dtype=np.int64)
            for name, c in caps.items():
                vec[crn.index(name)] = c
        else:
            vec = np.asarray(caps, dtype=np.int64)
            if vec.shape != (crn.n_species,):
                raise ValueError("per_species_cap length must match species count")
        if (vec <= 0).any():
            raise ValueError("caps must be positive")
        return vec


@dataclass(frozen=True, eq=False)
class Ctmc:
    states: np.ndarray
    rate_matrix: sp.csr_matrix
    initial_index: int = 0
    truncated: bool = False
    leak_rates: np.ndarray | None = None
    species: tuple[str, ...] = ()

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @cached_property
    def exit_rates(self) -> np.ndarray:
        return np.asarray(self.rate_matrix.sum(axis=1)).ravel()

    @cached_property
    def total_out(self) -> np.ndarray:
        leak = self.leak_rates if self.leak_rates is not None else 0.0
        return self.exit_rates + leak

    @property
    def transitions(self) -> list[tuple[int, int, float]]:
        coo = self.rate_matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[k]), int(coo.col[k]), float(coo.data[k])) for k in order]

    @property
    def n_transitions(self) -> int:
        return self.rate_matrix.nnz

    def mask(self, target) -> np.ndarray:
        """Coerce a predicate (callable on the state matrix) or a bool vector."""
        if callable(target):
            m = np.asarray(target(self.states), dtype=bool)
        else:
            m = np.asarray(target, dtype=bool)
        if m.shape != (self.n_states,):
            raise ValueError("predicate must yield one boolean per state")
        return m

    def index_of(self, state) -> int:
        hits = np.flatnonzero((self.states == np.asarray(state)).all(axis=1))
        if not hits.size:
            raise KeyError("state not in the CTMC")
        return int(hits[0])

    def export_csv(self, states_path, transitions_path) -> None:
        with open(states_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", *self.species])
            for i, row in enumerate(self.states.tolist()):
                w.writerow([i, *row])
        with open(transitions_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["from", "to", "rate"])
            for a, b, r in self.transitions:
                w.writerow([a, b, repr(r)])


def from_rates(n_states: int, transitions, initial_index: int = 0, states=None) -> Ctmc:
    """CTMC from an explicit transition list ``[(from, to, rate), ...]``."""
    rows, cols, vals = (np.array(v) for v in zip(*transitions)) if transitions else ([], [], [])
    keep = np.asarray(rows) != np.asarray(cols)
    R = sp.csr_matrix(
        (np.asarray(vals, dtype=float)[keep], (np.asarray(rows, dtype=np.int64)[keep], np.asarray(cols, dtype=np.int64)[keep])),
        shape=(n_states, n_states),
    )
    R.sum_duplicates()
    if states is None:
        states = np.eye(n_states, dtype=np.int64)
    return Ctmc(states=np.asarray(states, dtype=np.int64), rate_matrix=R, initial_index=initial_index,
                species=tuple(f"s{i}" for i in range(n_states)))


def enumerate_ctmc(crn: Crn, init, caps: ExploreCaps | None = None) -> Ctmc:
    """Breadth-first state-space exploration of ``crn`` from ``init``."""
    caps = caps or ExploreCaps()
    x0 = crn.check_state(init)
    cap_vec = caps.cap_vector(crn)
    if cap_vec is not None and (x0 > cap_vec).any():
        raise ValueError("initial state exceeds the per-species caps")
    S = crn.n_species
    change = np.asarray(crn.change_matrix)
    n_rxn = change.shape[0]
    void = np.dtype((np.void, 8 * S))

    seen: dict[bytes, int] = {x0.tobytes(): 0}
    chunks = [x0[None, :]]
    frontier = x0[None, :]
    first = 0
    rows, cols, vals = [], [], []
    leak: list[float] = []
    truncated = False
    while frontier.shape[0]:
        props = propensities(crn, frontier) if n_rxn else np.zeros((frontier.shape[0], 0))
        src = np.arange(first, first + frontier.shape[0])
        if n_rxn == 0:
            break
        succ = frontier[:, None, :] + change[None, :, :]
        valid = props > 0
        if cap_vec is not None:
            over = (succ > cap_vec).any(axis=2) & valid
            if over.any():
                truncated = True
            leak.extend(np.where(over, props, 0.0).sum(axis=1).tolist())
            valid &= ~over
        else:
            leak.extend([0.0] * frontier.shape[0])

        pi, rj = np.nonzero(valid)  # row-major: parent order, then reaction order
        cand = np.ascontiguousarray(succ[pi, rj])
        rates = props[pi, rj]
        # drop zero-change (self-loop) reactions
        moving = (change[rj] != 0).any(axis=1)
        pi, cand, rates = pi[moving], cand[moving], rates[moving]
        if not len(cand):
            first += frontier.shape[0]
            frontier = np.empty((0, S), dtype=np.int64)
            break
        keys = cand.view(void).ravel()
        uniq, first_pos, inverse = np.unique(keys, return_index=True, return_inverse=True)
        dest_u = np.empty(len(uniq), dtype=np.int64)
        new_rows = []
        n_seen = len(seen)
        for u in np.argsort(first_pos, kind="stable"):
            k = uniq[u].tobytes()
            idx = seen.get(k)
            if idx is None:
                idx = n_seen
                seen[k] = idx
                n_seen += 1
                new_rows.append(first_pos[u])
            dest_u[u] = idx
        if n_seen > caps.max_states:
            raise ExplorationError(
                f"state space exceeds max_states={caps.max_states}", partial_count=n_seen
            )
        rows.append(src[pi])
        cols.append(dest_u[inverse.ravel()])
        vals.append(rates)
        first += frontier.shape[0]
        frontier = cand[np.asarray(new_rows, dtype=np.int64)]
        if frontier.shape[0]:
            chunks.append(frontier)

    states = np.concatenate(chunks, axis=0)
    n = states.shape[0]
    if rows:
        R = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        R.sum_duplicates()
    else:
        R = sp.csr_matrix((n, n))
    leak_arr = np.zeros(n)
    leak_arr[: len(leak)] = leak
    return Ctmc(
        states=states, rate_matrix=R, initial_index=0, truncated=truncated,
        leak_rates=leak_arr if truncated else None, species=tuple(crn.names),
    )


# --- uniformization ----------------------------------------------------------


def poisson_weights(qt: float, tail: float = POISSON_TAIL) -> tuple[int, np.ndarray]:
    """Left truncation point and normalised Poisson(qt) weights covering 1 - tail."""
    if qt <= 0:
        return 0, np.ones(1)
    left = int(stats.poisson.ppf(tail / 2, qt))
    right = int(stats.poisson.isf(tail / 2, qt)) + 1
    left = max(0, min(left, right))
    w = stats.poisson.pmf(np.arange(left, right + 1), qt)
    return left, w / w.sum()


def _generator_parts(ctmc: Ctmc, absorbing: np.ndarray | None = None):
    R = ctmc.rate_matrix
    out = ctmc.total_out.copy()
    if absorbing is not None and absorbing.any():
        keep = sp.diags((~absorbing).astype(float))
        R = (keep @ R).tocsr()
        out[absorbing] = 0.0
    return R, out


def _series(R: sp.csr_matrix, out: np.ndarray, vec: np.ndarray, t: float, forward: bool) -> np.ndarray:
    lam = float(out.max()) if out.size else 0.0
    if t == 0 or lam == 0:
        return vec.copy()
    left, w = poisson_weights(lam * t)
    M = (R.T.tocsr() if forward else R) / lam
    stay = 1.0 - out / lam
    v = vec.astype(float).copy()
    acc = np.zeros_like(v)
    for n in range(left + len(w)):
        if n >= left:
            acc += w[n - left] * v
        v = M @ v + stay * v
    return acc


def transient(ctmc: Ctmc, t: float, allow_truncated: bool = False) -> np.ndarray:
    """Distribution over states at time ``t`` from the initial state."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if ctmc.truncated and not allow_truncated:
        raise TruncatedError("CTMC is truncated; pass allow_truncated=True for lower-bound semantics")
    p0 = np.zeros(ctmc.n_states)
    p0[ctmc.initial_index] = 1.0
    R, out = _generator_parts(ctmc)
    p = _series(R, out, p0, t, forward=True)
    p[p < 0] = 0.0
    return p


@dataclass(frozen=True)
class ProbResult:
    """Probability at the initial state plus the per-state vector."""

    value: float
    per_state: np.ndarray = field(repr=False)
    truncated: bool = False

    def __float__(self):
        return self.value


def prob_until(ctmc: Ctmc, phi, psi) -> np.ndarray:
    """Per-state P(phi U psi), unbounded, via the embedded jump chain."""
    phi, psi = ctmc.mask(phi), ctmc.mask(psi)
    n = ctmc.n_states
    x = psi.astype(float)
    maybe = phi & ~psi
    if not maybe.any():
        return x
    # backward reachability of psi through maybe-states
    Rt = ctmc.rate_matrix.T.tocsr()
    reach = psi.copy()
    frontier = np.flatnonzero(psi)
    while frontier.size:
        preds = np.unique(Rt[frontier].indices)
        preds = preds[maybe[preds] & ~reach[preds]]
        reach[preds] = True
        frontier = preds
    M = np.flatnonzero(maybe & reach)
    if not M.size:
        return x
    R = ctmc.rate_matrix
    A = sp.diags(ctmc.total_out[M]) - R[M][:, M]
    b = np.asarray(R[M][:, np.flatnonzero(psi)].sum(axis=1)).ravel()
    if M.size < DIRECT_SOLVE_LIMIT:
        sol = spla.spsolve(A.tocsc(), b)
    else:
        sol, info = spla.bicgstab(A.tocsr(), b, rtol=ITERATIVE_TOL, atol=0.0, maxiter=100_000)
        if info != 0:
            raise np.linalg.LinAlgError(f"iterative solve did not converge (info={info})")
    sol = np.atleast_1d(sol)
    if not np.isfinite(sol).all():
        raise np.linalg.LinAlgError("singular until system")
    x[M] = np.clip(sol, 0.0, 1.0)
    return x


def prob_eventually_bounded(ctmc: Ctmc, target, t: float) -> ProbResult:
    """P(F<=t target) from every state; ``t = inf`` gives unbounded reachability."""
    if t < 0:
        raise ValueError("time bound must be nonnegative")
    tgt = ctmc.mask(target)
    if np.isinf(t):
        vec = prob_until(ctmc, np.ones(ctmc.n_states, bool), tgt)
    else:
        R, out = _generator_parts(ctmc, absorbing=tgt)
        vec = _series(R, out, tgt.astype(float), t, forward=False)
        vec = np.clip(vec, 0.0, 1.0)
        vec[tgt] = 1.0
    return ProbResult(float(vec[ctmc.initial_index]), vec, ctmc.truncated)


def prob_globally_bounded(ctmc: Ctmc, inv, t: float) -> ProbResult:
    bad = ~ctmc.mask(inv)
    ev = prob_eventually_bounded(ctmc, bad, t)
    vec = 1.0 - ev.per_state
    return ProbResult(float(vec[ctmc.initial_index]), vec, ctmc.truncated)


def prob_weak_until(ctmc: Ctmc, phi, psi) -> ProbResult:
    """Per-state P(phi W psi) = 1 - P((phi & !psi) U (!phi & !psi))."""
    phi, psi = ctmc.mask(phi), ctmc.mask(psi)
    vec = 1.0 - prob_until(ctmc, phi & ~psi, ~phi & ~psi)
    return ProbResult(float(vec[ctmc.initial_index]), vec, ctmc.truncated)


def reachable_from(ctmc: Ctmc, index: int) -> np.ndarray:
    """Boolean mask of states reachable from ``index`` (including itself)."""
    R = ctmc.rate_matrix
    seen = np.zeros(ctmc.n_states, bool)
    seen[index] = True
    frontier = np.array([index])
    while frontier.size:
        succ = np.unique(R[frontier].indices)
        succ = succ[~seen[succ]]
        seen[succ] = True
        frontier = succ
    return seen

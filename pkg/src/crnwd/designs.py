"""Builders for the delay ladders, the watchdog timer, the oscillator and
the recovery module, plus the state predicates the goals are written over.

Every builder returns a :class:`Model`, which unpacks as ``crn, init``.
Rung species are named ``<prefix><i>``; the detector top rung is aliased
``Y`` and the filter top rung ``D``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg, stats

from .crn import Crn, CrnError, Reaction, merge
from .csl.formula import Compare, Formula, Healthy, PredicateContext
from .ctmc import enumerate_ctmc, prob_eventually_bounded, transient

UNREACHABLE = "unreachable"


@dataclass(frozen=True)
class Model:
    crn: Crn
    init: np.ndarray
    aliases: dict[str, str] = field(default_factory=dict)
    predicates: dict[str, Formula] = field(default_factory=dict)
    meta: dict[str, object] = field(default_factory=dict)

    def __iter__(self):
        return iter((self.crn, self.init))

    def context(self, labels=None) -> PredicateContext:
        return PredicateContext(species=tuple(self.crn.names), named=dict(self.predicates),
                                labels=dict(labels or {}), aliases=dict(self.aliases))


# --- ladders -----------------------------------------------------------------


@dataclass(frozen=True)
class LadderSpec:
    k: int
    u: float = 1.0
    r: float = 1.0
    p: int = 1
    rung_prefix: str = "X"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("ladder height k must be >= 1")
        if not (self.u > 0 and self.r > 0):
            raise ValueError("ladder rates must be positive")
        if self.p < 1:
            raise ValueError("ladder population must be >= 1")

    @property
    def rungs(self) -> list[str]:
        return [f"{self.rung_prefix}{i}" for i in range(self.k + 1)]


def build_unary_ladder(spec: LadderSpec) -> Model:
    x = spec.rungs
    up = [Reaction({x[i]: 1}, {x[i + 1]: 1}, spec.u) for i in range(spec.k)]
    reset = [Reaction({x[i]: 1}, {x[0]: 1}, spec.r) for i in range(1, spec.k + 1)]
    crn = Crn(species=tuple(x), reactions=tuple(up + reset))
    return Model(crn, crn.state({x[0]: spec.p}), meta={"kind": "unary-ladder", "k": spec.k,
                                                       "u": spec.u, "r": spec.r, "p": spec.p})


def _catalyzed_reactions(rungs: Sequence[str], up: str, reset: str) -> list[Reaction]:
    k = len(rungs) - 1
    out = [Reaction({rungs[i]: 1, up: 1}, {rungs[i + 1]: 1, up: 1}, 1.0) for i in range(k)]
    out += [Reaction({rungs[i]: 1, reset: 1}, {rungs[0]: 1, reset: 1}, 1.0) for i in range(1, k + 1)]
    return out


def build_catalyzed_ladder(spec: LadderSpec, up_catalyst: str = "U", reset_catalyst: str = "R",
                           up_count: int = 1, reset_count: int = 1, volume: float = 1.0) -> Model:
    """Ladder whose climbs need ``up_catalyst`` and resets need ``reset_catalyst``.

    All rate constants are 1; the catalyst counts set the effective rates
    ``#U/V`` and ``#R/V``.  ``spec.u`` and ``spec.r`` are ignored.
    """
    rungs = spec.rungs
    if up_catalyst in rungs or reset_catalyst in rungs:
        raise CrnError("catalyst name collides with a rung species")
    if up_catalyst == reset_catalyst:
        raise CrnError("up and reset catalysts must differ")
    crn = Crn(species=tuple(rungs) + (up_catalyst, reset_catalyst),
              reactions=tuple(_catalyzed_reactions(rungs, up_catalyst, reset_catalyst)), volume=volume)
    init = crn.state({rungs[0]: spec.p, up_catalyst: up_count, reset_catalyst: reset_count})
    return Model(crn, init, meta={"kind": "catalyzed-ladder", "k": spec.k, "p": spec.p,
                                  "up_count": up_count, "reset_count": reset_count})


# --- molecular watchdog timer --------------------------------------------------


@dataclass(frozen=True)
class MwtConfig:
    k_d: int = 3
    p_L: int = 5
    k_t: int = 3
    p_T: int = 5
    u_count: int = 1
    r_count: int = 1
    reset_fraction: float = 0.9
    reset_rung_cut: int | None = None
    y_threshold: int | None = None
    y_low: int | None = None
    d_threshold: int | None = None
    hb_high: int = 5
    volume: float = 1.0
    heartbeat: str = "H"

    def __post_init__(self):
        if self.k_d < 1 or self.k_t < 1:
            raise ValueError("ladder heights must be >= 1")
        if self.p_L < 1 or self.p_T < 1:
            raise ValueError("ladder populations must be >= 1")
        if self.u_count < 1 or self.r_count < 1:
            raise ValueError("u_count and r_count must be >= 1")
        if not 0 < self.reset_fraction <= 1:
            raise ValueError("reset_fraction must lie in (0, 1]")
        if not 0 <= self.cut <= self.k_d:
            raise ValueError("reset_rung_cut must lie in 0..k_d")
        if not self.y_lo < self.y_hi:
            raise ValueError("y_low must be below y_threshold")

    @property
    def cut(self) -> int:
        return self.k_d // 2 if self.reset_rung_cut is None else self.reset_rung_cut

    @property
    def y_hi(self) -> int:
        return math.ceil(0.5 * self.p_L) if self.y_threshold is None else self.y_threshold

    @property
    def y_lo(self) -> int:
        if self.y_low is not None:
            return self.y_low
        return min(math.ceil(0.1 * self.p_L), self.y_hi - 1)

    @property
    def d_hi(self) -> int:
        return math.ceil(0.5 * self.p_T) if self.d_threshold is None else self.d_threshold

    @property
    def detector(self) -> list[str]:
        return [f"L{i}" for i in range(self.k_d + 1)]

    @property
    def filter(self) -> list[str]:
        return [f"T{i}" for i in range(self.k_t + 1)]


def _ge(name: str, n: float) -> Compare:
    return Compare(((name, 1.0),), ">=", float(n))


def _le(name: str, n: float) -> Compare:
    return Compare(((name, 1.0),), "<=", float(n))


def mwt_predicates(cfg: MwtConfig) -> dict[str, Formula]:
    low = tuple((name, 1.0) for name in cfg.detector[: cfg.cut + 1])
    return {
        "Reset": Compare(low, ">=", cfg.reset_fraction * cfg.p_L),
        "ThH": _ge("Y", cfg.y_hi),
        "ThL": _le("Y", cfg.y_lo),
        "Alarm": _ge("D", cfg.d_hi),
        "Hpres": _ge(cfg.heartbeat, cfg.hb_high),
        "Hdet": _ge(cfg.heartbeat, 1),
    }


def build_mwt(cfg: MwtConfig) -> Model:
    """Absence Detector (reset by heartbeats) feeding a Threshold Filter."""
    det, fil = cfg.detector, cfg.filter
    h = cfg.heartbeat
    for name in ("U", "R", h):
        if name in det or name in fil:
            raise CrnError(f"species {name} collides with a rung name")
    reactions = _catalyzed_reactions(det, "U", h) + _catalyzed_reactions(fil, det[-1], "R")
    crn = Crn(species=tuple(det) + tuple(fil) + ("U", "R", h), reactions=tuple(reactions),
              volume=cfg.volume)
    init = crn.state({det[0]: cfg.p_L, fil[0]: cfg.p_T, "U": cfg.u_count, "R": cfg.r_count})
    meta = {"kind": "mwt", "kd": cfg.k_d, "kt": cfg.k_t, "pl": cfg.p_L, "pt": cfg.p_T,
            "u": cfg.u_count, "r": cfg.r_count, "volume": cfg.volume}
    return Model(crn, init, aliases={"Y": det[-1], "D": fil[-1]}, predicates=mwt_predicates(cfg),
                 meta=meta)


def build_heartbeat_source(pool: int, on_rate: float = 1.0, off_rate: float = 1.0,
                           heartbeat: str = "H", volume: float = 1.0) -> Model:
    """Abstract monitored system: ``pool`` heartbeat molecules toggling Z <-> H.

    Keeps the heartbeat count bounded so a composed MWT has a finite CTMC.
    """
    if pool < 1:
        raise ValueError("pool must be >= 1")
    crn = Crn(species=("Z", heartbeat),
              reactions=(Reaction({"Z": 1}, {heartbeat: 1}, on_rate),
                         Reaction({heartbeat: 1}, {"Z": 1}, off_rate)),
              volume=volume)
    return Model(crn, crn.state(Z=pool), meta={"kind": "heartbeat-source", "pool": pool})


def build_monitored_mwt(cfg: MwtConfig, pool: int = 5, on_rate: float = 1.0,
                        off_rate: float = 1.0) -> Model:
    """MWT composed with the abstract heartbeat source (finite, so exactly checkable)."""
    mwt = build_mwt(cfg)
    src = build_heartbeat_source(pool, on_rate, off_rate, cfg.heartbeat, cfg.volume)
    crn = merge([mwt.crn, src.crn])
    init = crn.state({**mwt.crn.as_dict(mwt.init), **src.crn.as_dict(src.init)})
    meta = {**mwt.meta, "kind": "monitored-mwt", "pool": pool, "on": on_rate, "off": off_rate}
    return Model(crn, init, aliases=mwt.aliases, predicates=mwt.predicates, meta=meta)


# --- oscillator and recovery -------------------------------------------------


@dataclass(frozen=True)
class OscillatorConfig:
    k: float = 1.0
    k2: float = 0.1
    init_A: int = 800
    init_B: int = 100
    init_C: int = 100
    tau: float | None = None
    volume: float = 1.0
    hb_high: int = 5
    hb_low: int = 1

    def __post_init__(self):
        if not (self.k > 0 and self.k2 > 0):
            raise ValueError("rate constants must be positive")
        if min(self.init_A, self.init_B, self.init_C) < 0 or self.total < 1:
            raise ValueError("initial counts must be >= 0 with a positive total")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if not self.hb_low < self.hb_high:
            raise ValueError("hb_low must be below hb_high")

    @property
    def total(self) -> int:
        return self.init_A + self.init_B + self.init_C

    @property
    def threshold(self) -> float:
        return (0.1 * self.total) ** 2 if self.tau is None else float(self.tau)

    @classmethod
    def from_total(cls, total: int, split: Sequence[float] = (80, 10, 10), **kw) -> "OscillatorConfig":
        """Split ``total`` by percentages; rounding remainders go to the largest fractions."""
        if len(split) != 3 or min(split) < 0 or sum(split) <= 0:
            raise ValueError("split needs three nonnegative weights")
        exact = np.asarray(split, float) / sum(split) * total
        counts = np.floor(exact).astype(int)
        for i in np.argsort(-(exact - counts), kind="stable")[: total - counts.sum()]:
            counts[i] += 1
        return cls(init_A=int(counts[0]), init_B=int(counts[1]), init_C=int(counts[2]), **kw)


def oscillator_predicates(cfg: OscillatorConfig, heartbeat: str = "H") -> dict[str, Formula]:
    return {
        "healthy": Healthy(cfg.threshold),
        "hbHigh": _ge(heartbeat, cfg.hb_high),
        "hbLow": _le(heartbeat, cfg.hb_low),
    }


def build_oscillator(cfg: OscillatorConfig, with_heartbeat: bool = True) -> Model:
    k = cfg.k
    first = Reaction({"A": 1, "B": 1}, {"B": 2, "H": 1} if with_heartbeat else {"B": 2}, k)
    reactions = [first,
                 Reaction({"B": 1, "C": 1}, {"C": 2}, k),
                 Reaction({"C": 1, "A": 1}, {"A": 2}, k)]
    if with_heartbeat:
        reactions.append(Reaction({"H": 1}, {}, cfg.k2))
    species = ("A", "B", "C", "H") if with_heartbeat else ("A", "B", "C")
    crn = Crn(species=species, reactions=tuple(reactions), volume=cfg.volume)
    init = crn.state(A=cfg.init_A, B=cfg.init_B, C=cfg.init_C)
    preds = oscillator_predicates(cfg) if with_heartbeat else {"healthy": Healthy(cfg.threshold)}
    meta = {"kind": "oscillator", "k": k, "k2": cfg.k2, "A": cfg.init_A, "B": cfg.init_B,
            "C": cfg.init_C, "heartbeat": with_heartbeat, "volume": cfg.volume}
    return Model(crn, init, predicates=preds, meta=meta)


def build_recovery(cfg: OscillatorConfig, catalyst: str = "D",
                   rates: Sequence[float] | None = None) -> Crn:
    """Catalytic rotation A -> B -> C -> A gated by the alarm species.

    ``rates`` defaults to ``(k, k, k2)`` of the oscillator.
    """
    d = catalyst
    r1, r2, r3 = (cfg.k, cfg.k, cfg.k2) if rates is None else rates
    return Crn(species=("A", "B", "C", d), reactions=(
        Reaction({d: 1, "A": 1}, {d: 1, "B": 1}, r1),
        Reaction({d: 1, "B": 1}, {d: 1, "C": 1}, r2),
        Reaction({d: 1, "C": 1}, {d: 1, "A": 1}, r3),
    ), volume=cfg.volume)


def build_composed_demo(osc: OscillatorConfig, mwt: MwtConfig,
                        recovery_rates: Sequence[float] | None = None) -> Model:
    """Oscillator with heartbeat, watchdog and recovery in one network.

    Heartbeats H reset the detector and the filter top rung drives recovery.
    Both configs must use the same volume.
    """
    o = build_oscillator(osc, with_heartbeat=True)
    w = build_mwt(mwt)
    rec = build_recovery(osc, catalyst=w.aliases["D"], rates=recovery_rates)
    crn = merge([o.crn, w.crn, rec])
    init = crn.state({**o.crn.as_dict(o.init), **w.crn.as_dict(w.init)})
    preds = {**w.predicates, **o.predicates}
    meta = {**{f"osc_{k}": v for k, v in o.meta.items() if k != "kind"},
            **{f"mwt_{k}": v for k, v in w.meta.items() if k != "kind"}, "kind": "composed-demo"}
    return Model(crn, init, aliases=w.aliases, predicates=preds, meta=meta)


# --- predicates on concrete states ---------------------------------------------


def healthy(state, tau: float, species: Sequence[str] | None = None) -> bool:
    """A, B, C all present and far enough from equilibrium."""
    if species is not None:
        state = dict(zip(species, np.asarray(state).tolist()))
    if not isinstance(state, Mapping):
        raise CrnError("healthy needs a mapping or a species list")
    try:
        a, b, c = (int(state[s]) for s in ("A", "B", "C"))
    except KeyError as exc:
        raise CrnError(f"state has no species {exc.args[0]}") from None
    return a > 0 and b > 0 and c > 0 and (a - b) ** 2 + (b - c) ** 2 + (c - a) ** 2 > tau


# --- ladder timing -----------------------------------------------------------


@dataclass(frozen=True)
class FirstPassage:
    mean: float
    times: np.ndarray
    cdf: np.ndarray


def ladder_mean_first_passage(spec: LadderSpec) -> float:
    """Expected time for one molecule to climb from rung 0 to rung k."""
    k, u, r = spec.k, spec.u, spec.r
    # unknowns T_0..T_{k-1}; T_k = 0
    A = np.zeros((k, k))
    b = np.ones(k)
    A[0, 0] = u
    if k > 1:
        A[0, 1] = -u
    for i in range(1, k):
        A[i, i] = u + r
        A[i, 0] -= r
        if i + 1 < k:
            A[i, i + 1] -= u
    return float(np.linalg.solve(A, b)[0])


def ladder_first_passage(spec: LadderSpec, times: Sequence[float] | None = None) -> FirstPassage:
    """Mean hitting time of the top rung and its distribution on a time grid."""
    mean = ladder_mean_first_passage(spec)
    if times is None:
        times = np.linspace(0.0, 5.0 * mean, 51)
    times = np.asarray(times, float)
    single = build_unary_ladder(LadderSpec(spec.k, spec.u, spec.r, 1, spec.rung_prefix))
    chain = enumerate_ctmc(single.crn, single.init)
    top = chain.states[:, spec.k] >= 1
    cdf = np.array([prob_eventually_bounded(chain, top, t).value for t in times])
    return FirstPassage(mean, times, cdf)


def top_rung_occupancy(spec: LadderSpec, times: Sequence[float]) -> np.ndarray:
    """Single-molecule probability of sitting on rung k at each time."""
    single = build_unary_ladder(LadderSpec(spec.k, spec.u, spec.r, 1, spec.rung_prefix))
    chain = enumerate_ctmc(single.crn, single.init)
    top = chain.states[:, spec.k] >= 1
    return np.array([transient(chain, float(t))[top].sum() for t in times])


def _occupancy_on_grid(spec: LadderSpec, step: float, n: int) -> np.ndarray:
    # one-molecule chain has k+1 states: propagate with a dense exp(Q step)
    single = build_unary_ladder(LadderSpec(spec.k, spec.u, spec.r, 1, spec.rung_prefix))
    chain = enumerate_ctmc(single.crn, single.init)
    Q = chain.rate_matrix.toarray()
    Q -= np.diag(Q.sum(axis=1))
    P = linalg.expm(Q * step)
    top = chain.states[:, spec.k] >= 1
    out = np.empty(n)
    p = np.zeros(chain.n_states)
    p[chain.initial_index] = 1.0
    for i in range(n):
        out[i] = p[top].sum()
        p = p @ P
    return out


def fraction_threshold_time(spec: LadderSpec, theta: float, confidence: float,
                            step: float | None = None, t_max: float | None = None):
    """Least grid time at which at least ceil(theta * p) molecules sit on the
    top rung with probability >= ``confidence``.

    The p molecules climb independently, so the top-rung count is
    Binomial(p, pi_k(t)).  Returns :data:`UNREACHABLE` when the occupancy
    never gets high enough.
    """
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    need = math.ceil(theta * spec.p)
    if need == 0:
        return 0.0
    mean = ladder_mean_first_passage(spec)
    step = step or mean / 50.0
    t_max = t_max or 40.0 * mean + 40.0 * spec.k / spec.r

    def tail(pi):
        return stats.binom.sf(need - 1, spec.p, np.clip(pi, 0.0, 1.0))

    grid = np.arange(0.0, t_max + step / 2, step)
    occ = _occupancy_on_grid(spec, step, grid.size)
    ok = np.flatnonzero(tail(occ) >= confidence)
    if ok.size:
        return float(grid[ok[0]])
    # the grid runs far past the mixing time, so the occupancy limit fails too
    return UNREACHABLE

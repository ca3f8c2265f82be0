"""Failure and recovery demo: oscillator, heartbeat, watchdog and recovery composed."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .csl.formula import Named, eval_state
from .designs import Model, MwtConfig, OscillatorConfig, build_composed_demo
from .ssa import SimConfig, Trajectory, simulate
from .rng import derive_seed

NONE = "none"
NO_RECOVERY = "no-recovery"


@dataclass(frozen=True)
class DemoConfig:
    total: int = 300
    split: tuple[float, float, float] = (80.0, 10.0, 10.0)
    # bimolecular oscillator rate; None means 1/total (population-scaled kinetics)
    k: float | None = None
    k2: float = 0.05
    recovery_rates: tuple[float, float, float] = (1.0, 1.0, 0.1)
    k_d: int = 3
    p_L: int = 5
    k_t: int = 3
    p_T: int = 5
    u_count: int = 1
    r_count: int = 1
    d_threshold: int = 1
    horizon: float = 600.0
    inject_species: str | None = "B"
    inject_time: float = 10.0

    def __post_init__(self):
        if self.total < 3:
            raise ValueError("total population must be >= 3")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def inject(self) -> tuple[str, float] | None:
        if self.inject_species is None:
            return None
        return self.inject_species, self.inject_time

    def oscillator(self) -> OscillatorConfig:
        k = 1.0 / self.total if self.k is None else self.k
        return OscillatorConfig.from_total(self.total, self.split, k=k, k2=self.k2)

    def mwt(self) -> MwtConfig:
        return MwtConfig(k_d=self.k_d, p_L=self.p_L, k_t=self.k_t, p_T=self.p_T,
                         u_count=self.u_count, r_count=self.r_count, d_threshold=self.d_threshold)

    def model(self) -> Model:
        return build_composed_demo(self.oscillator(), self.mwt(), self.recovery_rates)


@dataclass
class RunSummary:
    seed: int
    t_fail: float | str
    t_alarm: float | str
    t_recover: float | str
    t_resume: float | str = NONE
    t_reset: float | str = NONE
    t_clear: float | str = NONE
    false_alarm: bool = False

    @property
    def recovered(self) -> bool:
        return not isinstance(self.t_alarm, str) and not isinstance(self.t_recover, str)

    @property
    def reusable(self) -> bool:
        return self.recovered and not isinstance(self.t_reset, str) and not isinstance(self.t_clear, str)

    def row(self) -> list:
        def fmt(x):
            return x if isinstance(x, str) else f"{x:.6g}"
        return [self.seed, fmt(self.t_fail), fmt(self.t_alarm), fmt(self.t_recover),
                fmt(self.t_resume), fmt(self.t_reset), fmt(self.t_clear), int(self.false_alarm)]


SUMMARY_HEADER = ["seed", "t_fail", "t_alarm", "t_recover", "t_resume", "t_reset", "t_clear",
                  "false_alarm"]


def _first(mask: np.ndarray, times: np.ndarray, after: float, strict: bool = False):
    ok = mask & ((times > after) if strict else (times >= after))
    hit = np.flatnonzero(ok)
    return float(times[hit[0]]) if hit.size else None


def analyse_run(model: Model, traj: Trajectory) -> RunSummary:
    """Event times of one composed-demo trajectory."""
    crn = model.crn
    ctx = model.context()
    states = traj.states(crn)
    # time at which each visited state was entered
    times = np.concatenate([[0.0], traj.times])
    alarm = eval_state(Named("Alarm"), states, ctx)
    healthy = eval_state(Named("healthy"), states, ctx)
    reset = eval_state(Named("Reset"), states, ctx)
    abc = states[:, [crn.index(s) for s in ("A", "B", "C")]]

    if traj.injection is not None:
        t_fail = float(traj.times[traj.injection[0]])
    else:
        t_fail = _first(abc.min(axis=1) == 0, times, 0.0)
    if t_fail is None:
        return RunSummary(traj.seed, NONE, _fmt_none(_first(alarm, times, 0.0)), NONE,
                          false_alarm=bool(alarm.any()))
    false_alarm = bool(alarm[times < t_fail].any())
    t_alarm = _first(alarm, times, t_fail)
    if t_alarm is None:
        return RunSummary(traj.seed, t_fail, NONE, NO_RECOVERY, false_alarm=false_alarm)
    t_rec = _first(healthy, times, t_alarm)
    out = RunSummary(traj.seed, t_fail, t_alarm, NO_RECOVERY if t_rec is None else t_rec,
                     false_alarm=false_alarm)
    # heartbeats resume at the first firing of the H-producing reaction after the alarm
    hb = [j for j, r in enumerate(crn.reactions) if dict(r.products).get("H", 0) > dict(r.reactants).get("H", 0)]
    fired = np.isin(traj.reactions, hb) & (traj.times >= t_alarm)
    if fired.any():
        t_resume = float(traj.times[np.flatnonzero(fired)[0]])
        out.t_resume = t_resume
        out.t_reset = _fmt_none(_first(reset, times, t_resume))
        out.t_clear = _fmt_none(_first(~alarm, times, t_resume))
    return out


def _fmt_none(x):
    return NONE if x is None else x


@dataclass
class DemoReport:
    config: DemoConfig
    runs: list[RunSummary] = field(default_factory=list)

    @property
    def failed(self) -> list[RunSummary]:
        return [r for r in self.runs if not isinstance(r.t_fail, str)]

    @property
    def recovery_fraction(self) -> float:
        f = self.failed
        return sum(r.recovered for r in f) / len(f) if f else math.nan

    @property
    def reuse_fraction(self) -> float:
        rec = [r for r in self.runs if r.recovered]
        return sum(r.reusable for r in rec) / len(rec) if rec else math.nan

    @property
    def false_alarm_fraction(self) -> float:
        return sum(r.false_alarm for r in self.runs) / len(self.runs) if self.runs else math.nan


def run_demo(cfg: DemoConfig, n_runs: int, master_seed: int = 0) -> tuple[DemoReport, list[Trajectory]]:
    model = cfg.model()
    sim = SimConfig(t_end=cfg.horizon, master_seed=master_seed)
    report, trajs = DemoReport(cfg), []
    for i in range(n_runs):
        traj = simulate(model.crn, model.init, sim, seed=derive_seed(master_seed, i), inject=cfg.inject)
        report.runs.append(analyse_run(model, traj))
        trajs.append(traj)
    return report, trajs

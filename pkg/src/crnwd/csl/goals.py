"""Goal catalog of the watchdog timer and the oscillator heartbeat goals."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..params import ClientPolytope, HeartbeatGoalParams, InternalParams, as_bindings
from .formula import Formula, conj, parse_formula

SYSTEM, AD, TF = "System", "AbsenceDetector", "ThresholdFilter"


@dataclass(frozen=True)
class GoalInstance:
    name: str
    formula: Formula
    agent: str
    row: int
    parent: int | None = None
    params: dict[str, float] = field(default_factory=dict, compare=False, repr=False)

    @property
    def leaf(self) -> bool:
        return self.agent != SYSTEM


# reusable conjuncts; parameter names are bound at parse time
_F = {
    "no_alarm_u": "P>=1-eps [ G<=u !Alarm ]",
    "pres_quiet": "P>=1 [ G (Hpres => P>=1-eps1 [ F<=g P>=1-eps2 [ G<=u !Alarm ] ]) ]",
    "absent_alarm": "P>=1 [ G (!Hpres => P>=1-delta1 [ F<=v-w_a (Alarm | Hpres) ]) ]",
    "det_when_pres": "P>=1 [ G (Hpres => P>=1-beta [ F<=w_h Hdet ]) ]",
    "no_det_when_absent": "P>=1 [ G (!Hpres => P>=1-beta [ F<=w_h P>=1-alpha [ (!Hdet) W Hpres ] ]) ]",
    "det_quiet_table": "P>=1 [ G (Hdet => P>=1-eps1p [ F<=g P>=1-eps2p [ G<=u !Alarm ] ]) ]",
    "undet_alarm_table": "P>=1 [ G (!Hdet => P>=1-delta1p [ F<=v-w_a (Alarm | Hpres) ]) ]",
    "det_quiet": "P>=1 [ G (Hdet => P>=1-eps1p [ F<=g-w_h P>=1-eps2p [ G<=u !Alarm ] ]) ]",
    "undet_alarm": "P>=1 [ G (!Hdet => P>=1-delta1p [ F<=v-w_a-w_h (Alarm | Hdet) ]) ]",
    "reset": "Reset",
    "reset_if_det": "P>=1 [ G (Hdet => P>=1-lambda1 [ F<=w_on Reset ]) ]",
    "delay_if_reset": "P>=1 [ G (Reset => P>=1-gamma1 [ G<=u ThL ]) ]",
    "low_not_high": "ThL => !ThH",
    "threshold_if_absent": ("P>=1 [ G (!Hdet => P>=1-eta1 [ F<=v-w_a-2*w_h-w_th "
                            "P>=1-eta2 [ ThH W P>=1-eta3 [ F<=w_h Hdet ] ] ]) ]"),
    "quiet_if_low": "P>=1 [ G (ThL => P>=1-lambda2 [ F<=w_off P>=1-lambda3 [ G<=u !Alarm ] ]) ]",
    "alarm_if_high": "P>=1 [ G (ThH => P>=1-eta4 [ F<=w_th (Alarm | !ThH) ]) ]",
    "quiet_until_high": "P>=1-gamma2 [ (!Alarm) W (!ThL) ]",
}

# (row, name, conjunct keys, agent, parent row)
_TABLE = [
    (1, "Achieve[Alarm iff no Heartbeat provided within t time]",
     ("no_alarm_u", "pres_quiet", "absent_alarm"), SYSTEM, None),
    (2, "Achieve[Heartbeat Detected correctly tracks the presence of Heartbeats]",
     ("det_when_pres", "no_det_when_absent"), SYSTEM, 1),
    (3, "Achieve[Alarm iff no Heartbeat detected within t' time]",
     ("no_alarm_u", "det_quiet_table", "undet_alarm_table"), SYSTEM, 1),
    (4, "Avoid[Heartbeat Detected when Heartbeat not present]", ("no_det_when_absent",), AD, 2),
    (5, "Achieve[Heartbeat Detected when Heartbeat present]", ("det_when_pres",), AD, 2),
    (6, "Achieve[Correct Timer Reset]", ("reset", "reset_if_det"), SYSTEM, 3),
    (7, "Achieve[Correct Delay]", ("delay_if_reset", "low_not_high", "threshold_if_absent"), SYSTEM, 3),
    (8, "Achieve[Alarm iff Threshold met]", ("quiet_if_low", "alarm_if_high", "quiet_until_high"),
     SYSTEM, 3),
    (9, "Achieve[Initialize to Reset]", ("reset",), AD, 6),
    (10, "Achieve[Reset if Hdet]", ("reset_if_det",), AD, 6),
    (11, "Achieve[Threshold delay if Reset]", ("delay_if_reset",), AD, 7),
    (12, "Achieve[Threshold if Hdet is absent]", ("threshold_if_absent",), AD, 7),
    (13, "Avoid[Alarm if Reset]", ("quiet_if_low",), TF, 8),
    (14, "Achieve[Alarm if Threshold for some time]", ("alarm_if_high",), TF, 8),
    (15, "Avoid[Alarm until first Threshold]", ("quiet_until_high",), TF, 8),
]


def fragment(key: str, params: InternalParams, client: ClientPolytope) -> Formula:
    return parse_formula(_F[key], as_bindings(params, client))


def _build(keys, bindings) -> Formula:
    return conj(*(parse_formula(_F[k], bindings) for k in keys))


def goal_catalog(params: InternalParams, client: ClientPolytope) -> list[GoalInstance]:
    """All fifteen goals, breadth first; leaves carry their agent."""
    b = as_bindings(params, client)
    return [GoalInstance(name, _build(keys, b), agent, row, parent, b)
            for row, name, keys, agent, parent in _TABLE]


def leaf_goals(params: InternalParams, client: ClientPolytope) -> list[GoalInstance]:
    return [g for g in goal_catalog(params, client) if g.leaf]


# refinement theorems: (parent conjunct keys, child conjunct keys)
THEOREMS = {
    "T3.1": (("no_alarm_u", "pres_quiet", "absent_alarm"),
             ("det_when_pres", "no_det_when_absent", "no_alarm_u", "det_quiet", "undet_alarm")),
    "T3.2": (("det_when_pres", "no_det_when_absent"), ("no_det_when_absent", "det_when_pres")),
    "T3.3": (("no_alarm_u", "det_quiet", "undet_alarm"),
             ("reset", "reset_if_det", "delay_if_reset", "threshold_if_absent", "quiet_if_low",
              "alarm_if_high", "quiet_until_high")),
}


def theorem_parts(theorem: str, params: InternalParams, client: ClientPolytope):
    """``[(parent formulas, child formulas), ...]`` for a refinement theorem.

    T3.4 covers every goal whose children are all leaves.
    """
    b = as_bindings(params, client)
    if theorem == "T3.4":
        cat = goal_catalog(params, client)
        out = []
        for parent in cat:
            kids = [g for g in cat if g.parent == parent.row]
            if kids and all(k.leaf for k in kids):
                out.append((parent.name, [parent.formula], [k.formula for k in kids]))
        return out
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}")
    up, down = THEOREMS[theorem]
    return [(theorem, [parse_formula(_F[k], b) for k in up], [parse_formula(_F[k], b) for k in down])]


# --- oscillator heartbeat interface ---------------------------------------------

_OSC = [
    ("Achieve[Produce heartbeats while healthy]",
     "P>=1 [ G (healthy => P>=1-delta_1 [ F<=t1 (hbHigh | !healthy) ]) ]"),
    ("Avoid[Produce heartbeats while unhealthy]",
     "P>=1 [ G (!healthy => P>=1-delta_2 [ F<=t2 P>=1-delta_3 [ hbLow W P>=1-delta_4 [ G<=t3 healthy ] ] ]) ]"),
    ("Achieve[Heartbeat decays]",
     "P>=1 [ G (hbHigh => P>=1-delta_5 [ F<=t4 !hbHigh ]) ]"),
]


def oscillator_goals(hb: HeartbeatGoalParams) -> list[GoalInstance]:
    b = {k: float(v) for k, v in vars(hb).items()}
    return [GoalInstance(name, parse_formula(text, b), SYSTEM, i + 1, None, b)
            for i, (name, text) in enumerate(_OSC)]

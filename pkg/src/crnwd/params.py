"""Client polytope, internal goal parameters and the refinement constraints.

The client fixes ``(u, v, eps, delta)`` plus the heartbeat pulse range; the
internal parameters split those budgets across the goal tree.  Constraint
ids 1..11 follow the order used throughout the goal proofs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping

BACKOFF = 1e-12


@dataclass(frozen=True)
class ClientPolytope:
    u: float
    v: float
    eps: float
    delta: float
    pulse_min: int = 1
    pulse_max: int = 5

    def __post_init__(self):
        if not 0 < self.u < self.v:
            raise ValueError("need 0 < u < v")
        # eps = 1 or delta = 1 are accepted here and reported infeasible by synthesize
        for name in ("eps", "delta"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 1 <= self.pulse_min <= self.pulse_max:
            raise ValueError("need 1 <= pulse_min <= pulse_max")


PROB_FIELDS = ("eps1", "eps2", "eps1p", "eps2p", "alpha", "beta", "delta1", "delta1p", "gamma1",
               "gamma2", "eta1", "eta2", "eta3", "eta4", "lambda1", "lambda2", "lambda3")
TIME_FIELDS = ("w_a", "w_h", "g", "w_on", "w_off", "w_th")


@dataclass(frozen=True)
class InternalParams:
    eps1: float = 0.0
    eps2: float = 0.0
    eps1p: float = 0.0
    eps2p: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    delta1: float = 0.0
    delta1p: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    eta1: float = 0.0
    eta2: float = 0.0
    eta3: float = 0.0
    eta4: float = 0.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    w_a: float = 0.0
    w_h: float = 0.0
    g: float = 0.0
    w_on: float = 0.0
    w_off: float = 0.0
    w_th: float = 0.0

    def __post_init__(self):
        for name in PROB_FIELDS:
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        for name in TIME_FIELDS:
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class HeartbeatGoalParams:
    delta_1: float = 0.1
    delta_2: float = 0.1
    delta_3: float = 0.1
    delta_4: float = 0.1
    delta_5: float = 0.1
    t1: float = 10.0
    t2: float = 10.0
    t3: float = 1.0
    t4: float = 10.0
    hb_high: int = 5
    hb_low: int = 1

    def __post_init__(self):
        for i in range(1, 6):
            if not 0 <= getattr(self, f"delta_{i}") < 1:
                raise ValueError(f"delta_{i} must lie in [0, 1)")
        for i in range(1, 5):
            if not getattr(self, f"t{i}") >= 0:
                raise ValueError(f"t{i} must be nonnegative")
        if not self.hb_low < self.hb_high:
            raise ValueError("hb_low must be below hb_high")


# --- constraints -------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintCheck:
    id: int
    relation: str
    left: float
    right: float
    ok: bool

    @property
    def name(self) -> str:
        return f"constr{self.id}"


def check_constraints(p: InternalParams, client: ClientPolytope) -> list[ConstraintCheck]:
    """All eleven constraints with both sides evaluated."""
    q = lambda x: 1.0 - x
    rows = [
        (1, "<=", q(p.eps1), q(p.beta) * q(p.eps1p)),
        (2, "<=", q(p.eps2), q(p.eps2p)),
        (3, "<=", p.w_h, p.g),
        (4, "<=", q(p.delta1), q(p.alpha) * q(p.beta) * q(p.delta1p)),
        (5, "<=", q(client.eps), 1.0 - p.gamma1 - p.gamma2),
        (6, "<=", q(p.eps1p) * q(p.eps2p), q(p.lambda1) * q(p.lambda2) * q(p.lambda3) * q(p.gamma1)),
        (7, ">=", p.g - p.w_h, p.w_on + p.w_off),
        (8, "<", p.gamma1, 1.0),
        (9, "<=", q(p.eps1p), q(p.lambda1) * q(p.lambda2)),
        (10, "<=", q(p.eps2p), q(p.lambda3)),
        (11, "<=", q(p.delta1p), q(p.eta1) * q(p.eta2) * q(p.eta3) * q(p.eta4)),
    ]
    ops = {"<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b, "<": lambda a, b: a < b}
    return [ConstraintCheck(i, rel, l, r, ops[rel](l, r)) for i, rel, l, r in rows]


def validate_constraints(p: InternalParams, client: ClientPolytope) -> list[ConstraintCheck]:
    """Violated constraints (empty when the assignment is admissible)."""
    return [c for c in check_constraints(p, client) if not c.ok]


# --- synthesis -----------------------------------------------------------------


@dataclass(frozen=True)
class Infeasible:
    binding: str
    reason: str

    def __bool__(self):
        return False


def _less(x: float) -> float:
    return max(0.0, x - BACKOFF)


def synthesize(client: ClientPolytope, w_h_frac: float = 0.1, g_frac: float = 0.5,
               w_a_frac: float = 0.1, w_th_frac: float = 0.1) -> InternalParams | Infeasible:
    """Deterministic budget split satisfying every constraint.

    Multiplicative budgets are divided evenly in log space; equalities are
    backed off by 1e-12 on the slack side.
    """
    eps, delta = float(client.eps), float(client.delta)
    if eps >= 1:
        return Infeasible("constr1", "eps = 1 leaves no budget: eps1 would have to be 1")
    if delta >= 1:
        return Infeasible("constr4", "delta = 1 leaves no budget: delta1 would have to be 1")

    delta1 = float(delta)
    eps1 = eps2 = 1.0 - math.sqrt(1.0 - eps)
    # constr1 and constr4 share beta; take the looser of the two even splits
    keep_b = max(math.sqrt(1.0 - eps1), (1.0 - delta1) ** (1.0 / 3.0))
    beta = _less(1.0 - keep_b)
    eps1p = _less(1.0 - (1.0 - eps1) / (1.0 - beta))
    alpha = delta1p = _less(1.0 - math.sqrt((1.0 - delta1) / (1.0 - beta)))
    eps2p = _less(eps2)
    gamma1 = gamma2 = _less(eps / 2.0)

    a = -math.log1p(-eps1p)
    b = -math.log1p(-eps2p)
    g1 = -math.log1p(-gamma1)
    if a + b < g1:
        return Infeasible("constr6", "gamma1 exceeds the combined eps1'/eps2' budget")
    f = (a + b - g1) / (a + b) if a + b > 0 else 0.0
    lam1 = lam2 = _less(-math.expm1(-a * f / 2.0))
    lam3 = _less(-math.expm1(-b * f))
    eta = _less(1.0 - (1.0 - delta1p) ** 0.25)

    w_h = w_h_frac * client.u
    g = g_frac * client.u
    if w_h > g:
        return Infeasible("constr3", "w_h fraction exceeds g fraction")
    w_on = w_off = max(0.0, (g - w_h) / 2.0 - BACKOFF)
    w_a = w_a_frac * (client.v - client.u)
    w_th = w_th_frac * (client.v - client.u)

    p = InternalParams(eps1=eps1, eps2=eps2, eps1p=eps1p, eps2p=eps2p, alpha=alpha, beta=beta,
                       delta1=delta1, delta1p=delta1p, gamma1=gamma1, gamma2=gamma2,
                       eta1=eta, eta2=eta, eta3=eta, eta4=eta, lambda1=lam1, lambda2=lam2,
                       lambda3=lam3, w_a=w_a, w_h=w_h, g=g, w_on=w_on, w_off=w_off, w_th=w_th)
    bad = validate_constraints(p, client)
    if bad:
        return Infeasible(bad[0].name, "synthesised split violates " + ", ".join(c.name for c in bad))
    return p


# --- key=value files -------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def dumps(obj) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(obj).items())


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def loads(cls, text: str | Mapping[str, str], partial: bool = True):
    """Build ``cls`` from key=value text; with ``partial`` missing keys keep defaults."""
    kv = parse_kv(text) if isinstance(text, str) else dict(text)
    names = {f.name: f for f in fields(cls)}
    unknown = set(kv) - set(names)
    if unknown:
        raise ValueError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    values = {}
    for k, v in kv.items():
        typ = names[k].type
        values[k] = int(v) if typ in ("int", int) else float(v)
    if not partial:
        missing = [n for n in names if n not in values]
        if missing:
            raise ValueError(f"missing parameter(s): {', '.join(missing)}")
    return cls(**values)


def as_bindings(p: InternalParams, client: ClientPolytope) -> dict[str, float]:
    """Name -> value map used to bind formula parameters."""
    out = {k: float(v) for k, v in asdict(p).items()}
    out.update(u=client.u, v=client.v, eps=client.eps, delta=client.delta)
    return out


def with_values(p: InternalParams, **kw) -> InternalParams:
    return replace(p, **kw)

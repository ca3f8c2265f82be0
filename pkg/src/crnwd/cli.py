"""Command-line harness: build, simulate, check, sweep and the recovery demo.

Every command that writes files puts them in ``--out`` and writes
``manifest.txt`` there last.  The manifest is an INI-style key=value file;
``crnwd rerun MANIFEST --out DIR`` (or ``crnwd CMD --config MANIFEST``)
reproduces the same output bytes.

Options may come from ``--config FILE``: keys of the ``[common]`` section
and of the section named after the command, spelled like the long flags
(``t-end`` or ``t_end``).  Flags on the command line win over the file.

Exit codes: 0 success (every checked formula holds), 1 some formula fails
or a parameter set is infeasible, 2 some verdict is undecided, 3 configuration
error, 4 runtime error (simulation or I/O).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .crn import CrnError
from .csl.exact import FAILS, HOLDS, UNDECIDED, evaluate_exact
from .csl.formula import (
    FormulaError, Healthy, eval_state, parse_csl_file, parse_formula, to_text,
)
from .csl.goals import goal_catalog, leaf_goals, oscillator_goals
from .csl.statistical import StatisticalConfigError, evaluate_statistical
from .ctmc import ExplorationError, ExploreCaps, enumerate_ctmc
from .demo import SUMMARY_HEADER, DemoConfig, analyse_run, run_demo
from .designs import (
    LadderSpec, Model, MwtConfig, OscillatorConfig, build_catalyzed_ladder, build_monitored_mwt,
    build_mwt, build_oscillator, build_recovery, build_unary_ladder, ladder_mean_first_passage,
)
from .params import (
    ClientPolytope, HeartbeatGoalParams, Infeasible, InternalParams, as_bindings, check_constraints,
    dumps, loads, parse_kv, synthesize,
)
from .parser import CrnSyntaxError, document_from_crn, load_crn, serialize_crn
from .rng import derive_seed
from .ssa import SimConfig, SimulationError, first_passage_times, sample_on_grid, simulate_ensemble

EXIT_OK, EXIT_FAIL, EXIT_UNDECIDED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3, 4
MAX_POINTS = 10_000
MANIFEST = "manifest.txt"


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# --- value types -----------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in str(text).replace(";", ",").split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _triple(text: str) -> tuple[float, float, float]:
    out = _floats(text)
    if len(out) != 3:
        raise argparse.ArgumentTypeError(f"expected three numbers, got {text!r}")
    return out


def _counts(text: str) -> dict[str, int]:
    out = {}
    for item in str(text).replace(";", ",").split(","):
        if not item.strip():
            continue
        name, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected NAME=COUNT, got {item!r}")
        try:
            out[name.strip()] = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"count for {name.strip()} is not an integer") from None
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, dict):
        return ",".join(f"{k}={v}" for k, v in x.items())
    if isinstance(x, (list, tuple)):
        sep = ";" if any(isinstance(v, str) for v in x) else ","
        return sep.join(_fmt(v) for v in x)
    return str(x)


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


# --- model builders --------------------------------------------------------------

# dest -> (type, help); flags are --dest with dashes
MODEL_OPTS = {
    "k": (int, "ladder height"),
    "u": (float, "ladder climb rate, or U count for catalyzed ladders and the MWT"),
    "r": (float, "ladder reset rate, or R count for catalyzed ladders and the MWT"),
    "p": (int, "ladder population"),
    "kd": (int, "absence detector height"),
    "kt": (int, "threshold filter height"),
    "pl": (int, "absence detector population"),
    "pt": (int, "threshold filter population"),
    "reset_fraction": (float, "fraction of detector molecules low for Reset"),
    "y_threshold": (int, "ThH threshold on Y"),
    "y_low": (int, "ThL threshold on Y"),
    "d_threshold": (int, "Alarm threshold on D"),
    "hb_high": (int, "heartbeat count for Hpres / hbHigh"),
    "hb_low": (int, "heartbeat count for hbLow"),
    "pool": (int, "heartbeat source pool size"),
    "on_rate": (float, "heartbeat source Z -> H rate"),
    "off_rate": (float, "heartbeat source H -> Z rate"),
    "total": (int, "oscillator total population"),
    "split": (_triple, "oscillator A,B,C percentages"),
    "k1": (float, "oscillator bimolecular rate (default 1/total)"),
    "k2": (float, "heartbeat decay rate"),
    "tau": (float, "healthy distance threshold"),
    "recovery_rates": (_triple, "recovery reaction rates"),
    "volume": (float, "volume"),
}

_MWT = ("kd", "kt", "pl", "pt", "u", "r", "reset_fraction", "y_threshold", "y_low", "d_threshold",
        "hb_high", "volume")
_OSC = ("total", "split", "k1", "k2", "tau", "hb_high", "hb_low", "volume")
KIND_OPTS = {
    "unary-ladder": ("k", "u", "r", "p"),
    "catalyzed-ladder": ("k", "u", "r", "p", "volume"),
    "mwt": _MWT,
    "monitored-mwt": _MWT + ("pool", "on_rate", "off_rate"),
    "oscillator": _OSC,
    "recovery": _OSC + ("recovery_rates",),
    "composed-demo": ("total", "split", "k1", "k2", "recovery_rates", "kd", "kt", "pl", "pt", "u", "r",
                      "d_threshold"),
}
KINDS = tuple(KIND_OPTS)


def _count(x, name: str) -> int:
    if x is None:
        return 1
    if x != int(x) or x < 1:
        raise ConfigError(f"--{name} must be a positive integer count for this kind")
    return int(x)


def _check_kind(kind: str, opts: dict) -> None:
    if kind not in KIND_OPTS:
        raise ConfigError(f"unknown model kind {kind!r}; choose from {', '.join(KINDS)}")
    extra = sorted(k for k, v in opts.items() if v is not None and k not in KIND_OPTS[kind])
    if extra:
        flags = ", ".join("--" + k.replace("_", "-") for k in extra)
        raise ConfigError(f"{flags} do(es) not apply to kind {kind}")


def _mwt_config(o: dict) -> MwtConfig:
    kw = {"u_count": _count(o.get("u"), "u"), "r_count": _count(o.get("r"), "r")}
    for dest, field in (("kd", "k_d"), ("kt", "k_t"), ("pl", "p_L"), ("pt", "p_T"),
                        ("reset_fraction", "reset_fraction"), ("y_threshold", "y_threshold"),
                        ("y_low", "y_low"), ("d_threshold", "d_threshold"), ("hb_high", "hb_high"),
                        ("volume", "volume")):
        if o.get(dest) is not None:
            kw[field] = o[dest]
    return MwtConfig(**kw)


def _osc_config(o: dict) -> OscillatorConfig:
    total = o.get("total") or 1000
    kw = {"k": o["k1"] if o.get("k1") is not None else 1.0 / total}
    for dest in ("k2", "tau", "hb_high", "hb_low", "volume"):
        if o.get(dest) is not None:
            kw[dest] = o[dest]
    return OscillatorConfig.from_total(total, o.get("split") or (80.0, 10.0, 10.0), **kw)


def demo_config(o: dict, **extra) -> DemoConfig:
    kw = dict(extra)
    for dest, field in (("total", "total"), ("split", "split"), ("k1", "k"), ("k2", "k2"),
                        ("recovery_rates", "recovery_rates"), ("kd", "k_d"), ("kt", "k_t"),
                        ("pl", "p_L"), ("pt", "p_T"), ("d_threshold", "d_threshold")):
        if o.get(dest) is not None:
            kw[field] = o[dest]
    kw["u_count"] = _count(o.get("u"), "u")
    kw["r_count"] = _count(o.get("r"), "r")
    return DemoConfig(**kw)


def build_model(kind: str, opts: dict) -> Model:
    """Model of ``kind`` from builder options; unset options take the kind's defaults."""
    _check_kind(kind, opts)
    o = {k: v for k, v in opts.items() if v is not None}
    if kind == "unary-ladder":
        return build_unary_ladder(LadderSpec(o.get("k", 2), o.get("u", 1.0), o.get("r", 1.0), o.get("p", 1)))
    if kind == "catalyzed-ladder":
        return build_catalyzed_ladder(LadderSpec(o.get("k", 2), p=o.get("p", 1)),
                                      up_count=_count(o.get("u"), "u"), reset_count=_count(o.get("r"), "r"),
                                      volume=o.get("volume", 1.0))
    if kind == "mwt":
        return build_mwt(_mwt_config(o))
    if kind == "monitored-mwt":
        return build_monitored_mwt(_mwt_config(o), o.get("pool", 5), o.get("on_rate", 1.0),
                                   o.get("off_rate", 1.0))
    if kind == "oscillator":
        return build_oscillator(_osc_config(o))
    if kind == "recovery":
        cfg = _osc_config(o)
        crn = build_recovery(cfg, rates=o.get("recovery_rates"))
        init = crn.state(A=cfg.init_A, B=cfg.init_B, C=cfg.init_C)
        return Model(crn, init, predicates={"healthy": Healthy(cfg.threshold)}, meta={"kind": "recovery"})
    return demo_config(o).model()


def _model_opts(args) -> dict:
    return {k: getattr(args, k, None) for k in MODEL_OPTS}


def _meta_text(kind: str, opts: dict) -> str:
    lines = [f"kind = {kind}"]
    lines += [f"{k} = {_fmt(v)}" for k, v in sorted(opts.items()) if v is not None]
    return "\n".join(lines) + "\n"


def load_model(path) -> Model:
    """Model from a ``.crn`` file; a sibling ``.meta`` file restores named predicates."""
    path = Path(path)
    doc = load_crn(path)
    crn = doc.to_crn()
    init = doc.initial_state(crn)
    meta = path.with_suffix(".meta")
    if not meta.exists():
        return Model(crn, init, meta={"source": str(path)})
    kv = parse_kv(meta.read_text(encoding="utf-8"))
    kind = kv.pop("kind", None)
    if kind is None:
        raise ConfigError(f"{meta}: missing kind")
    opts = {}
    for k, v in kv.items():
        if k not in MODEL_OPTS:
            raise ConfigError(f"{meta}: unknown key {k!r}")
        opts[k] = MODEL_OPTS[k][0](v)
    base = build_model(kind, opts)
    return Model(crn, init, base.aliases, base.predicates, {**base.meta, "source": str(path)})


def resolve_model(args) -> Model:
    opts = _model_opts(args)
    if getattr(args, "model", None):
        if args.kind:
            raise ConfigError("give either a model kind or --model, not both")
        given = sorted(k for k, v in opts.items() if v is not None)
        if given:
            raise ConfigError("builder options need a model kind, not --model")
        model = load_model(args.model)
    elif args.kind:
        model = build_model(args.kind, opts)
    else:
        raise ConfigError("no model: give a model kind or --model FILE")
    if getattr(args, "init", None):
        state = model.crn.as_dict(model.init)
        unknown = set(args.init) - set(state)
        if unknown:
            raise ConfigError(f"--init names unknown species {', '.join(sorted(unknown))}")
        state.update(args.init)
        model = Model(model.crn, model.crn.state(state), model.aliases, model.predicates, model.meta)
    return model


# --- output -------------------------------------------------------------------------


def _out_dir(args) -> Path:
    if not getattr(args, "out", None):
        raise ConfigError("--out DIR is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


_NOT_RECORDED = {"command", "config", "out", "func"}


def write_manifest(out: Path, args, seeds: dict | None = None) -> None:
    """Resolved options of the command; written after every other output."""
    lines = ["[crnwd]", f"command = {args.command}", f"version = {__version__}", "",
             f"[{args.command}]"]
    for k in sorted(vars(args)):
        v = getattr(args, k)
        if k in _NOT_RECORDED or v is None or v == []:
            continue
        lines.append(f"{k} = {_fmt(v)}")
    if seeds:
        lines += ["", "[seeds]"] + [f"{k} = {_fmt(v)}" for k, v in seeds.items()]
    _write(out / MANIFEST, "\n".join(lines) + "\n")


# --- commands -----------------------------------------------------------------------


def cmd_parse(args) -> int:
    doc = load_crn(args.model, strict=args.strict)
    crn = doc.to_crn()
    text = serialize_crn(doc)
    if not args.out:
        sys.stdout.write(text)
        return EXIT_OK
    out = _out_dir(args)
    _write(out / "model.crn", text)
    _write(out / "species.csv", _csv_text(["species", "init"],
                                          [[n, c] for n, c in crn.as_dict(doc.initial_state(crn)).items()]))
    write_manifest(out, args)
    print(f"{len(crn.names)} species, {len(crn.reactions)} reactions")
    return EXIT_OK


def cmd_build(args) -> int:
    if not args.kind:
        raise ConfigError("build needs a model kind")
    model = build_model(args.kind, _model_opts(args))
    out = _out_dir(args)
    name = args.name or args.kind
    _write(out / f"{name}.crn", serialize_crn(document_from_crn(model.crn, model.init)))
    _write(out / f"{name}.meta", _meta_text(args.kind, _model_opts(args)))
    write_manifest(out, args)
    print(f"{name}: {len(model.crn.names)} species, {len(model.crn.reactions)} reactions")
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    kw = {"t_end": args.t_end, "master_seed": args.seed}
    if args.max_events:
        kw["max_events"] = args.max_events
    return SimConfig(**kw)


def _inject(args):
    if args.inject_zero is None or args.inject_zero.lower() == "none":
        return None
    if args.at_time is None:
        raise ConfigError("--inject-zero needs --at-time")
    return args.inject_zero, args.at_time


def _trajectory_rows(traj, crn, step, t_end):
    return [[f"{t:.10g}", *(int(v) for v in x)] for t, x in sample_on_grid(traj, step, crn, t_end)]


def cmd_simulate(args) -> int:
    model = resolve_model(args)
    out = _out_dir(args)
    cfg = _sim_config(args)
    inject = _inject(args)
    if inject is not None and inject[0] not in model.crn.names:
        raise ConfigError(f"--inject-zero names unknown species {inject[0]!r}")
    if args.runs < 1:
        raise ConfigError("--runs must be positive")
    if not args.grid > 0:
        raise ConfigError("--grid must be positive")
    trajs = simulate_ensemble(model.crn, model.init, cfg, args.runs, inject=inject)
    header = ["time", *model.crn.names]
    for i, traj in enumerate(trajs):
        _write(out / f"run_{i}.csv", _csv_text(header, _trajectory_rows(traj, model.crn, args.grid, args.t_end)))
    write_manifest(out, args, {"master_seed": args.seed,
                               "run_seeds": [t.seed for t in trajs]})
    return EXIT_OK


def _client(args) -> ClientPolytope:
    return ClientPolytope(args.client_u, args.client_v, args.eps, args.delta)


def _internal_params(args, client: ClientPolytope) -> InternalParams:
    if args.params:
        return loads(InternalParams, Path(args.params).read_text(encoding="utf-8"), partial=False)
    p = synthesize(client)
    if isinstance(p, Infeasible):
        raise ConfigError(f"client polytope is infeasible ({p.binding}): {p.reason}")
    return p


def _targets(args) -> list[tuple[str, str, object]]:
    """``(id, name, formula)`` for every formula to check."""
    if bool(args.goals) == bool(args.formulas):
        raise ConfigError("give exactly one of --goals or --formulas")
    if args.goals in ("mwt", "mwt-all"):
        client = _client(args)
        p = _internal_params(args, client)
        goals = leaf_goals(p, client) if args.goals == "mwt" else goal_catalog(p, client)
        return [(f"G{g.row}", g.name, g.formula) for g in goals]
    if args.goals == "oscillator":
        hb = HeartbeatGoalParams()
        if args.hb_params:
            hb = loads(HeartbeatGoalParams, Path(args.hb_params).read_text(encoding="utf-8"))
        return [(f"O{g.row}", g.name, g.formula) for g in oscillator_goals(hb)]
    if args.goals:
        raise ConfigError(f"unknown goal set {args.goals!r}")
    text = Path(args.formulas).read_text(encoding="utf-8")
    bindings = None
    if args.params:
        client = _client(args)
        bindings = as_bindings(_internal_params(args, client), client)
    return [(name, name, f) for name, f in parse_csl_file(text, bindings)]


def _caps(args) -> ExploreCaps:
    return ExploreCaps(max_states=args.max_states, per_species_cap=args.cap)


def cmd_check(args) -> int:
    model = resolve_model(args)
    targets = _targets(args)
    out = _out_dir(args)
    ctx = model.context()
    if args.mode == "exact":
        ctmc = enumerate_ctmc(model.crn, model.init, _caps(args))
        results = [evaluate_exact(ctmc, f, ctx) for _, _, f in targets]
        seeds = None
    else:
        seeds = [derive_seed(args.seed, j) for j in range(len(targets))]
        results = [evaluate_statistical(model.crn, model.init, f, ctx, runs=args.runs, horizon=args.horizon,
                                        seed=s, alpha=args.alpha)
                   for (_, _, f), s in zip(targets, seeds)]
    rows, detail = [], []
    for (fid, name, f), res in zip(targets, results):
        key = to_text(f)
        ci = (res.ci or {}).get(key, (None, None))
        rows.append([fid, name, res.verdict, _num(res.probabilities.get(key)), _num(ci[0]), _num(ci[1]),
                     int(res.truncated), int(res.approximate)])
        for sub, pr in res.probabilities.items():
            lo, hi = (res.ci or {}).get(sub, (None, None))
            detail.append([fid, sub, _num(pr), _num(lo), _num(hi)])
        print(f"{fid:>4}  {res.verdict:<9} {name}")
    _write(out / "report.csv", _csv_text(["id", "name", "verdict", "probability", "ci_low", "ci_high",
                                          "truncated", "approximate"], rows))
    _write(out / "probabilities.csv", _csv_text(["id", "subformula", "probability", "ci_low", "ci_high"],
                                                detail))
    write_manifest(out, args, {"master_seed": args.seed, "formula_seeds": seeds} if seeds else None)
    verdicts = {r.verdict for r in results}
    if FAILS in verdicts:
        return EXIT_FAIL
    if UNDECIDED in verdicts:
        return EXIT_UNDECIDED
    return EXIT_OK


def cmd_params(args) -> int:
    if args.action not in ("synthesize", "validate"):
        raise ConfigError("params needs an action: synthesize or validate")
    out = _out_dir(args)
    client = _client(args)
    if args.action == "synthesize":
        p = synthesize(client)
        if isinstance(p, Infeasible):
            _write(out / "infeasible.txt", f"binding = {p.binding}\nreason = {p.reason}\n")
            write_manifest(out, args)
            print(f"infeasible ({p.binding}): {p.reason}")
            return EXIT_FAIL
        _write(out / "params.txt", dumps(p))
    else:
        if not args.params:
            raise ConfigError("params validate needs --params FILE")
        p = loads(InternalParams, Path(args.params).read_text(encoding="utf-8"), partial=False)
    checks = check_constraints(p, client)
    _write(out / "constraints.csv", _csv_text(["constraint", "relation", "left", "right", "ok"],
                                              [[c.name, c.relation, _num(c.left), _num(c.right), int(c.ok)]
                                               for c in checks]))
    write_manifest(out, args)
    bad = [c.name for c in checks if not c.ok]
    print("all constraints satisfied" if not bad else "violated: " + ", ".join(bad))
    return EXIT_FAIL if bad else EXIT_OK


def cmd_demo(args) -> int:
    if args.kind not in (None, "composed-demo"):
        raise ConfigError("demo-recovery always runs the composed demo")
    opts = _model_opts(args)
    _check_kind("composed-demo", opts)
    inject = _inject(args)
    cfg = demo_config(opts, horizon=args.horizon, inject_species=inject[0] if inject else None,
                      inject_time=inject[1] if inject else 0.0)
    if args.runs < 1:
        raise ConfigError("--runs must be positive")
    out = _out_dir(args)
    report, trajs = run_demo(cfg, args.runs, args.seed)
    _write(out / "summary.csv", _csv_text(SUMMARY_HEADER, [r.row() for r in report.runs]))
    agg = [["runs", len(report.runs)], ["failed", len(report.failed)],
           ["recovery_fraction", _num(report.recovery_fraction)],
           ["reuse_fraction", _num(report.reuse_fraction)],
           ["false_alarm_fraction", _num(report.false_alarm_fraction)]]
    _write(out / "aggregate.csv", _csv_text(["metric", "value"], agg))
    if args.trajectories:
        crn = cfg.model().crn
        header = ["time", *crn.names]
        for i, traj in enumerate(trajs):
            _write(out / f"run_{i}.csv", _csv_text(header, _trajectory_rows(traj, crn, args.grid, cfg.horizon)))
    write_manifest(out, args, {"master_seed": args.seed, "run_seeds": [t.seed for t in trajs]})
    for name, value in agg:
        print(f"{name} = {value}")
    return EXIT_OK


def parse_axis(text: str) -> tuple[str, list]:
    """``name=start:stop:step`` (inclusive) or ``name=v1,v2,...``."""
    name, sep, spec = str(text).partition("=")
    name = name.strip().replace("-", "_")
    if not sep or not name:
        raise ConfigError(f"axis {text!r}: expected NAME=VALUES")
    if name not in MODEL_OPTS:
        raise ConfigError(f"axis {name!r} is not a model parameter")
    typ = MODEL_OPTS[name][0]
    if typ is _triple:
        raise ConfigError(f"axis {name!r} cannot be swept")
    spec = spec.strip()
    if not spec:
        raise ConfigError(f"axis {name!r} is empty")
    try:
        if ":" in spec:
            parts = [float(x) for x in spec.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1.0
            if not step > 0:
                raise ConfigError(f"axis {name!r}: step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [start + i * step for i in range(max(n, 0))]
        else:
            values = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"axis {name!r}: cannot parse {spec!r}") from None
    if not values:
        raise ConfigError(f"axis {name!r} is empty")
    if typ is int:
        if any(v != round(v) for v in values):
            raise ConfigError(f"axis {name!r} takes integer values")
        values = [int(round(v)) for v in values]
    return name, values


SWEEP_METRICS = ("mfpt", "hitting-time", "formula", "detection-delay", "false-alarm", "recovery")


def _sweep_point(args, opts: dict, seed: int) -> list[float]:
    kind, metric = args.kind, args.metric
    if metric == "mfpt":
        if kind != "unary-ladder":
            raise ConfigError("metric mfpt needs kind unary-ladder")
        o = {k: v for k, v in opts.items() if v is not None}
        return [ladder_mean_first_passage(LadderSpec(o.get("k", 2), o.get("u", 1.0), o.get("r", 1.0), 1))]
    if metric in ("detection-delay", "false-alarm", "recovery"):
        if kind != "composed-demo":
            raise ConfigError(f"metric {metric} needs kind composed-demo")
        _check_kind(kind, opts)
        inject = _inject(args)
        cfg = demo_config(opts, horizon=args.horizon, inject_species=inject[0] if inject else None,
                          inject_time=inject[1] if inject else 0.0)
        report, _ = run_demo(cfg, args.runs, seed)
        if metric == "false-alarm":
            return [report.false_alarm_fraction]
        if metric == "recovery":
            return [report.recovery_fraction]
        delays = [r.t_alarm - r.t_fail for r in report.failed if not isinstance(r.t_alarm, str)]
        return [float(np.mean(delays)) if delays else math.nan]
    model = build_model(kind, opts)
    ctx = model.context()
    if not args.formula:
        raise ConfigError(f"metric {metric} needs --formula")
    f = parse_formula(args.formula)
    if metric == "hitting-time":
        if args.horizon is None:
            raise ConfigError("metric hitting-time needs --horizon")
        cfg = SimConfig(t_end=args.horizon, master_seed=seed)
        times = first_passage_times(model.crn, model.init, lambda s: eval_state(f, s, ctx), cfg, args.runs)
        hit = times[~np.isnan(times)]
        return [float(hit.mean()) if hit.size else math.nan, hit.size / len(times)]
    # formula probability of the outermost probabilistic operator
    key = to_text(f)
    if args.mode == "exact":
        res = evaluate_exact(enumerate_ctmc(model.crn, model.init, _caps(args)), f, ctx)
        return [res.probabilities.get(key, math.nan), math.nan, math.nan]
    res = evaluate_statistical(model.crn, model.init, f, ctx, runs=args.runs, horizon=args.horizon,
                               seed=seed, alpha=args.alpha)
    lo, hi = (res.ci or {}).get(key, (math.nan, math.nan))
    return [res.probabilities.get(key, math.nan), lo, hi]


def cmd_sweep(args) -> int:
    if not args.kind:
        raise ConfigError("sweep needs a model kind")
    if args.metric not in SWEEP_METRICS:
        raise ConfigError(f"unknown metric {args.metric!r}; choose from {', '.join(SWEEP_METRICS)}")
    if not args.axis:
        raise ConfigError("sweep needs at least one --axis")
    axes = [parse_axis(a) for a in args.axis]
    names = [n for n, _ in axes]
    if len(set(names)) != len(names):
        raise ConfigError("an axis is given twice")
    base = _model_opts(args)
    clash = [n for n in names if base.get(n) is not None]
    if clash:
        raise ConfigError(f"{', '.join(clash)} given both as axis and as fixed option")
    _check_kind(args.kind, {**base, **{n: 1 for n in names}})
    n_points = math.prod(len(v) for _, v in axes)
    if n_points > MAX_POINTS and not args.force:
        raise ConfigError(f"sweep has {n_points} points (> {MAX_POINTS}); pass --force to run it")
    out = _out_dir(args)
    cols = {"mfpt": ["mfpt"], "hitting-time": ["mean_time", "reached_fraction"],
            "formula": ["probability", "ci_low", "ci_high"]}.get(args.metric, [args.metric.replace("-", "_")])
    rows, seeds = [], []
    for i, point in enumerate(itertools.product(*(v for _, v in axes))):
        seed = derive_seed(args.seed, i)
        seeds.append(seed)
        values = _sweep_point(args, {**base, **dict(zip(names, point))}, seed)
        rows.append([_fmt(v) for v in point] + [_num(v) for v in values])
    _write(out / "sweep.csv", _csv_text(names + cols, rows))
    write_manifest(out, args, {"master_seed": args.seed, "point_seeds": seeds})
    print(f"{n_points} points written to {out / 'sweep.csv'}")
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------


def _add_common(p, out_required=True):
    p.add_argument("--config", help="INI file with option defaults (command line wins)")
    p.add_argument("--out", help="output directory" + ("" if out_required else " (default: stdout)"))


def _add_model(p, kind=True, model_file=True):
    if kind:
        p.add_argument("kind", nargs="?", help="builder: " + ", ".join(KINDS))
    if model_file:
        p.add_argument("--model", help=".crn file (a sibling .meta restores predicates)")
        p.add_argument("--init", type=_counts, help="initial count overrides, NAME=COUNT,...")
    g = p.add_argument_group("builder options (kind-dependent defaults)")
    for dest, (typ, help_) in MODEL_OPTS.items():
        g.add_argument("--" + dest.replace("_", "-"), dest=dest, type=typ, help=help_)


def _add_client(p):
    g = p.add_argument_group("client polytope")
    g.add_argument("--client-u", type=float, default=10.0)
    g.add_argument("--client-v", type=float, default=20.0)
    g.add_argument("--eps", type=float, default=0.05)
    g.add_argument("--delta", type=float, default=0.05)
    g.add_argument("--params", help="internal parameters file (key = value)")


def _add_inject(p, species=None, time=None):
    p.add_argument("--inject-zero", default=species, metavar="SPECIES",
                   help="zero this species at the first event at or after --at-time ('none' disables)")
    p.add_argument("--at-time", type=float, default=time)


def _add_stat(p):
    p.add_argument("--mode", choices=("exact", "statistical"), default="exact")
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--cap", type=int, help="per-species cap for exact exploration")
    p.add_argument("--max-states", type=int, default=2_000_000)


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="crnwd", description="Stochastic CRN workbench for molecular watchdog timers.")
    top.add_argument("--version", action="version", version=f"crnwd {__version__}")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("parse", help="parse a .crn file and print it canonically")
    _add_common(p, out_required=False)
    p.add_argument("--model", help=".crn file")
    p.add_argument("--strict", action="store_true", help="require species declarations")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("build", help="write a .crn and .meta for a builder")
    _add_common(p)
    _add_model(p, model_file=False)
    p.add_argument("--name", help="file stem (default: the kind)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("simulate", help="SSA runs sampled on a grid, one CSV per run")
    _add_common(p)
    _add_model(p)
    p.add_argument("--t-end", type=float, default=100.0)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=float, default=1.0)
    p.add_argument("--max-events", type=int)
    _add_inject(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="verify CSL formulas or goal catalogs")
    _add_common(p)
    _add_model(p)
    p.add_argument("--goals", help="mwt (leaf goals), mwt-all or oscillator")
    p.add_argument("--formulas", help=".csl file, one formula per line")
    p.add_argument("--hb-params", help="heartbeat goal parameters file")
    _add_client(p)
    _add_stat(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("params", help="synthesize or validate internal parameters")
    _add_common(p)
    p.add_argument("action", nargs="?", help="synthesize or validate")
    _add_client(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("demo-recovery", help="composed failure and recovery demo")
    _add_common(p)
    _add_model(p, model_file=False)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=DemoConfig.horizon)
    p.add_argument("--grid", type=float, default=1.0)
    p.add_argument("--trajectories", action="store_true", help="also write run_<i>.csv")
    _add_inject(p, DemoConfig.inject_species, DemoConfig.inject_time)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("sweep", help="metric over the Cartesian product of parameter axes")
    _add_common(p)
    _add_model(p, model_file=False)
    p.add_argument("--axis", action="append", default=[], help="NAME=START:STOP[:STEP] or NAME=V1,V2,...")
    p.add_argument("--metric", default="mfpt", help=", ".join(SWEEP_METRICS))
    p.add_argument("--formula", help="formula or target predicate for the formula and hitting-time metrics")
    p.add_argument("--force", action="store_true", help=f"allow more than {MAX_POINTS} points")
    _add_stat(p)
    p.set_defaults(runs=1000)
    _add_inject(p, DemoConfig.inject_species, DemoConfig.inject_time)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rerun", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return top


def _subparser(top: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in top._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def read_config(path, command: str) -> dict[str, str]:
    """Keys of ``[common]`` overlaid by ``[command]``; a file without sections is all common."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    cp = configparser.ConfigParser(interpolation=None, default_section="common")
    cp.optionxform = str
    first = next((ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith(("#", ";"))), "")
    if not first.startswith("["):
        text = "[common]\n" + text
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return dict(cp[command]) if cp.has_section(command) else dict(cp.defaults())


def _config_defaults(sub: argparse.ArgumentParser, kv: dict[str, str]) -> dict:
    actions = {a.dest: a for a in sub._actions}
    out = {}
    for key, raw in kv.items():
        dest = key.strip().replace("-", "_")
        if dest in _NOT_RECORDED:
            continue
        act = actions.get(dest)
        if act is None or dest == "help":
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                out[dest] = _bool(raw)
            elif isinstance(act, argparse._AppendAction):
                out[dest] = [x.strip() for x in raw.split(";") if x.strip()]
            elif act.type is not None:
                out[dest] = act.type(raw)
            else:
                out[dest] = raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
        if act.choices is not None and out[dest] not in act.choices:
            raise ConfigError(f"config key {key!r}: {raw!r} not one of {', '.join(map(str, act.choices))}")
    return out


def parse_args(argv):
    top = build_parser()
    args = top.parse_args(argv)
    if args.command is None:
        top.print_help(sys.stderr)
        raise ConfigError("no command given")
    if args.command == "rerun":
        kv = read_config(args.manifest, "crnwd")
        command = kv.get("command")
        if command not in ("parse", "build", "simulate", "check", "params", "demo-recovery", "sweep"):
            raise ConfigError(f"{args.manifest}: not a crnwd manifest")
        return parse_args([command, "--config", args.manifest, "--out", args.out])
    if args.config:
        sub = _subparser(top, args.command)
        sub.set_defaults(**_config_defaults(sub, read_config(args.config, args.command)))
        args = top.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        try:
            args = parse_args(argv)
        except SystemExit as exc:  # argparse: --help, --version, usage errors
            return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
        return args.func(args)
    except (ConfigError, CrnSyntaxError, FormulaError, StatisticalConfigError, CrnError,
            ExplorationError, FileNotFoundError, ValueError) as exc:
        print(f"crnwd: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, OSError) as exc:
        print(f"crnwd: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command line runner: declarative TOML experiments in, CSV/JSON/gnuplot artifacts out.

    perifide run CONFIG.toml [--out DIR] [--set model.a=1.1]
    perifide verify NAME|all [--set ...]
    perifide rule --kind midpoint --n 32 --interval -1 1
    perifide eigs CONFIG.toml [--modes K]
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import trivial
from .bifurc import classify, parity
from .contin import continue_branch, switch_branch
from .cyclic import PeriodicOrbit, solve_periodic
from .errors import InvalidArgument, PerifideError
from .model import (GROWTH_KINDS, KERNEL_KINDS, ORDERS, SLOTS, Growth, Kernel, ModelSpec)
from .quad import KINDS as RULE_KINDS, build_rule, point_rule

REPORT_SCHEMA = "perifide.report/1"
TASKS = ("trivial-branch", "continue", "classify", "fold-hunt", "table")
BRANCH_COLUMNS = ("branch", "theta", "s", "alpha", "morse_index", "total_population",
                  "leading_multiplier_re", "leading_multiplier_im", "delta")
SPECTRUM_COLUMNS = ("i", "lambda_i", "alpha_i0", "parity", "g20", "kind", "criticality")


class ConfigError(InvalidArgument):
    pass


# -- configuration ------------------------------------------------------------------

def _key_lines(text):
    """Map dotted keys to the line where they are assigned."""
    lines, section = {}, ""
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        head = re.fullmatch(r"\[\s*([\w.\-]+)\s*\]", line)
        if head:
            section = head.group(1)
            lines.setdefault(section, no)
            continue
        m = re.match(r"([\w\-]+)\s*=", line)
        if m:
            lines[f"{section}.{m.group(1)}" if section else m.group(1)] = no
    return lines


@dataclass
class ExperimentConfig:
    name: str
    task: str
    model: dict
    rule: dict
    params: dict = field(default_factory=dict)
    out: str | None = None
    source: str = "<config>"
    lines: dict = field(default_factory=dict, repr=False)

    def fail(self, key, message):
        where = f"line {self.lines[key]}" if key in self.lines else "missing"
        raise ConfigError(f"{self.source}: {key} ({where}): {message}")

    def to_dict(self):
        return {"name": self.name, "task": self.task, "model": self.model, "rule": self.rule,
                "params": self.params}


def _set_dotted(data, dotted, value):
    parts = dotted.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def parse_override(text):
    """``section.key=value`` with the value read as a TOML literal (bare words become strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def load_config(path, overrides=()) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    return parse_config(path.read_text(), overrides, str(path))


def parse_config(text, overrides=(), source="<config>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for key, value in overrides:
        _set_dotted(data, key, value)
    cfg = ExperimentConfig(name=str(data.get("name", Path(source).stem)),
                           task=data.get("task", ""), model=dict(data.get("model", {})),
                           rule=dict(data.get("rule", {})), params=dict(data.get("params", {})),
                           out=data.get("out"), source=source, lines=_key_lines(text))
    validate(cfg)
    return cfg


def _need(cfg, block, key, kind):
    table = getattr(cfg, block)
    if key not in table:
        cfg.fail(f"{block}.{key}", "required field is missing")
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        cfg.fail(f"{block}.{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _choice(cfg, block, key, options, default=None):
    table = getattr(cfg, block)
    value = table.get(key, default)
    if value not in options:
        cfg.fail(f"{block}.{key}", f"{value!r} is not one of {', '.join(options)}")
    return value


def validate(cfg: ExperimentConfig):
    if cfg.task not in TASKS:
        cfg.fail("task", f"{cfg.task!r} is not one of {', '.join(TASKS)}")
    _choice(cfg, "model", "kernel", KERNEL_KINDS)
    _choice(cfg, "model", "growth", GROWTH_KINDS)
    _choice(cfg, "model", "order", ORDERS, "growth_then_dispersal")
    _choice(cfg, "model", "slot", SLOTS, "multiplicative")
    if cfg.model.get("kernel") != "pointmass":
        if "interval" not in cfg.model:
            if _need(cfg, "model", "L", float) <= 0:
                cfg.fail("model.L", "domain length must be positive")
        if _need(cfg, "model", "a", float) <= 0:
            cfg.fail("model.a", "kernel constant must be positive")
        _choice(cfg, "rule", "kind", RULE_KINDS)
        if _need(cfg, "rule", "n", int) < 4:
            cfg.fail("rule.n", "need at least 4 nodes")
    beta = cfg.model.get("beta", [1.0])
    if not isinstance(beta, list) or not beta or any(
            not isinstance(b, (int, float)) or b <= 0 for b in beta):
        cfg.fail("model.beta", "expected a nonempty list of positive numbers")
    theta = cfg.model.get("theta", len(beta))
    if not isinstance(theta, int) or theta < 1 or theta % len(beta):
        cfg.fail("model.theta", "orbit period must be a positive multiple of len(beta)")
    rng = cfg.params.get("alpha_range")
    if rng is not None:
        if not (isinstance(rng, list) and len(rng) == 2 and rng[0] < rng[1]):
            cfg.fail("params.alpha_range", "expected [low, high] with low < high")
    if cfg.task == "table" and not cfg.params.get("a_values"):
        cfg.fail("params.a_values", "table task needs a nonempty list of kernel constants")
    if cfg.task in ("classify",) and "start_alpha" not in cfg.params:
        cfg.fail("params.start_alpha", "classify needs the parameter value of the orbit")


def build_model(cfg: ExperimentConfig, a=None) -> ModelSpec:
    md = cfg.model
    if md["kernel"] == "pointmass":
        rule = point_rule()
    else:
        interval = md.get("interval") or (-md["L"] / 2, md["L"] / 2)
        rule = build_rule(cfg.rule["kind"], cfg.rule["n"], tuple(interval))
    kernel = Kernel(md["kernel"], float(md.get("a", 1.0) if a is None else a))
    growth = Growth(md["growth"], c=float(md.get("growth_c", 1.0)),
                    beta=float(md.get("growth_amplitude", 1.0)))
    return ModelSpec(rule, kernel, growth, order=md.get("order", "growth_then_dispersal"),
                     beta=tuple(md.get("beta", [1.0])), slot=md.get("slot", "multiplicative"),
                     shift=float(md.get("shift", 2.0)), name=cfg.name)


# -- results -----------------------------------------------------------------------

@dataclass
class Result:
    """Everything a task produced; written to disk by ``write_artifacts``."""
    config: ExperimentConfig
    quantities: dict = field(default_factory=dict)
    spectrum: list = field(default_factory=list)
    branches: list = field(default_factory=list)       # (id, Branch)
    events: list = field(default_factory=list)
    bifurcations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def put(self, key, value):
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        self.quantities[key] = value


def _bp_record(bp, label=None):
    d = bp.to_dict()
    if label:
        d["label"] = label
    return d


def _record_bp(res, bp, counters, label=None):
    kind = bp.kind
    k = counters.get(kind, 0)
    counters[kind] = k + 1
    res.put(f"{kind}[{k}].alpha", bp.alpha)
    if bp.criticality is not None:
        res.put(f"{kind}[{k}].criticality", bp.criticality)
    for name in ("g01", "g11", "g20", "gbar"):
        v = getattr(bp.indicators, name, None) if bp.indicators is not None else None
        if v is not None:
            res.put(f"{kind}[{k}].{name}", v)
    res.bifurcations.append(_bp_record(bp, label))


def _spectrum_rows(model, cfg, res, modes, prefix="spectrum", a_value=None):
    spec = trivial.k_spectrum(trivial.build_K(model), modes)
    theta = cfg.model.get("theta", model.period)
    zero = np.zeros((theta, model.rule.size))
    rows = []
    for i in range(modes):
        lam, xi0, a0 = spec.mode(i)
        row = {"i": i, "lambda_i": lam, "alpha_i0": a0,
               "parity": parity(model.rule, xi0) if model.rule.is_symmetric else "n/a",
               "g20": float("nan"), "kind": "", "criticality": ""}
        if a_value is not None:
            row = {"a": a_value, **row}
        if math.isfinite(a0):
            try:
                bp = classify(model, PeriodicOrbit(zero, a0, 0.0, model.rule))
                row.update(g20=bp.indicators.g20 if bp.indicators.g20 is not None else float("nan"),
                           kind=bp.kind, criticality=bp.criticality or "")
            except PerifideError as exc:
                row["kind"] = f"error:{type(exc).__name__}"
        rows.append(row)
        tag = f"{prefix}[{i}]" if a_value is None else f"{prefix}[a={a_value:g}][{i}]"
        res.put(f"{tag}.alpha_i0", a0)
        res.put(f"{tag}.kind", row["kind"])
        if row["criticality"]:
            res.put(f"{tag}.criticality", row["criticality"])
    return spec, rows


def task_trivial_branch(cfg: ExperimentConfig) -> Result:
    res = Result(cfg)
    model = build_model(cfg)
    modes = int(cfg.params.get("modes", 5))
    spec, rows = _spectrum_rows(model, cfg, res, modes)
    res.spectrum = rows
    md = cfg.model
    if md["kernel"] == "laplace" and model.slot in ("multiplicative", "outer") \
            and "interval" not in md:
        # closed-form route for the Laplace kernel, independent of the Nystrom matrix
        h = model.inner.at_zero()[1] * model.outer.at_zero()[1]
        lam = trivial.laplace_eigenvalues(md["a"] * md["L"], modes) * h
        for i, x in enumerate(lam):
            a0 = trivial.critical_alpha(x, model.beta)
            res.put(f"spectrum_roots[{i}].alpha_i0", a0)
            res.spectrum[i]["alpha_i0_roots"] = a0
    if md["kernel"] == "gauss" and "interval" not in md:
        lo, hi = trivial.gauss_radius_bounds(md["a"], md["L"])
        r = float(spec.eigenvalues[0])
        res.put("gauss.spectral_radius", r)
        res.put("gauss.radius_within_bounds", bool(lo <= r <= hi))
    return res


def _start_orbit(cfg, model, res, counters):
    p = cfg.params
    theta = cfg.model.get("theta", model.period)
    start = p.get("start", "alpha")
    if isinstance(start, str) and start.startswith("mode:"):
        i = int(start.split(":", 1)[1])
        spec = trivial.k_spectrum(trivial.build_K(model), i + 1)
        a0 = spec.alpha0[i]
        bp = classify(model, PeriodicOrbit(np.zeros((theta, model.rule.size)), a0, 0.0,
                                           model.rule))
        _record_bp(res, bp, counters, f"trivial mode {i}")
        res.events.append({"branch": "trivial", "kind": "start", "bifurcation": _bp_record(bp)})
        return switch_branch(model, bp, sign=int(p.get("sign", 1)))
    guess = p.get("guess", 0.0)
    init = np.full((theta, model.rule.size), float(guess)) if np.isscalar(guess) \
        else np.tile(np.asarray(guess, dtype=float), (theta, 1))
    return solve_periodic(model, init, float(p["start_alpha"]))


def _continue(cfg, model, start, res, counters, branch_id="0", depth=0, kinds=None):
    p = cfg.params
    rng = tuple(p.get("alpha_range", (-math.inf, math.inf)))
    br = continue_branch(model, start, h=float(p.get("step", 0.05)),
                         k_max=int(p.get("max_steps", 400)), alpha_range=rng,
                         direction=int(p.get("direction", 1)) if depth == 0 else 1)
    res.branches.append((branch_id, br))
    res.put(f"branch[{branch_id}].status", br.status)
    follow = int(p.get("follow_flips", 0))
    children = []
    for e in br.events:
        rec = {"branch": branch_id, **e.to_dict()}
        res.events.append(rec)
        bp = e.point
        if bp is None or (kinds is not None and bp.kind not in kinds):
            continue
        _record_bp(res, bp, counters, f"branch {branch_id}")
        if bp.kind == "flip" and depth < follow:
            children.append(bp)
    for j, bp in enumerate(children):
        try:
            doubled = switch_branch(model, bp, sign=1)
        except PerifideError as exc:
            res.notes.append(f"branch switch at alpha={bp.alpha:.6g} failed: {exc}")
            continue
        _continue(cfg, model, doubled, res, counters, f"{branch_id}.{j}", depth + 1, kinds)
    return br


def task_continue(cfg: ExperimentConfig) -> Result:
    res = Result(cfg)
    model = build_model(cfg)
    counters = {}
    start = _start_orbit(cfg, model, res, counters)
    _continue(cfg, model, start, res, counters)
    return res


def task_fold_hunt(cfg: ExperimentConfig) -> Result:
    res = Result(cfg)
    model = build_model(cfg)
    counters = {}
    start = _start_orbit(cfg, model, res, counters)
    br = _continue(cfg, model, start, res, counters, kinds=("fold",))
    folds = [e for e in br.events if e.point is not None and e.point.kind == "fold"]
    for k, e in enumerate(folds):
        i0, i1 = e.index
        before, after = br.points[i0], br.points[i1]
        res.put(f"fold[{k}].morse_before", before.morse_index)
        res.put(f"fold[{k}].morse_after", after.morse_index)
    if folds:
        # population monotonicity along the part of the branch reached before the first fold
        i_fold = folds[0].index[0]
        pts = br.points[: i_fold + 1]
        pairs = sorted((p.alpha, p.total_population) for p in pts)
        pops = np.array([q for _, q in pairs])
        res.put("start_segment.population_monotone", bool(np.all(np.diff(pops) > 0)))
        res.put("start_segment.morse_max", max(p.morse_index for p in pts))
    return res


def task_classify(cfg: ExperimentConfig) -> Result:
    res = Result(cfg)
    model = build_model(cfg)
    orbit = _start_orbit(cfg, model, res, {})
    bp = classify(model, orbit)
    _record_bp(res, bp, {}, "classify")
    res.put("bifurcation.kind", bp.kind)
    if bp.criticality:
        res.put("bifurcation.criticality", bp.criticality)
    res.put("bifurcation.alpha", bp.alpha)
    return res


def task_table(cfg: ExperimentConfig) -> Result:
    res = Result(cfg)
    modes = int(cfg.params.get("modes", 5))
    for a in cfg.params["a_values"]:
        model = build_model(cfg, a=float(a))
        _, rows = _spectrum_rows(model, cfg, res, modes, a_value=float(a))
        res.spectrum.extend(rows)
    return res


TASK_RUNNERS = {"trivial-branch": task_trivial_branch, "continue": task_continue,
                "classify": task_classify, "fold-hunt": task_fold_hunt, "table": task_table}


# -- artifacts -----------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    return str(v)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def write_artifacts(res: Result, out: Path, expectations=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    tol = {e["quantity"]: e for e in (expectations or {}).get("entries", [])}
    with open(out / "branches.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BRANCH_COLUMNS)
        for bid, br in res.branches:
            for row in br.rows():
                w.writerow([bid, br.theta, *map(_fmt, map(float, row[:2])), int(row[2]),
                            *map(_fmt, map(float, row[3:]))])
    with open(out / "spectrum.csv", "w", newline="") as fh:
        extra = {k for r in res.spectrum for k in r} - set(SPECTRUM_COLUMNS)
        keys = ["a"] * ("a" in extra) + list(SPECTRUM_COLUMNS) + sorted(extra - {"a"})
        w = csv.writer(fh)
        w.writerow(keys)
        for r in res.spectrum:
            w.writerow([_fmt(r.get(k, "")) for k in keys])
    with open(out / "diagram.dat", "w") as fh:
        fh.write("# alpha total_population morse_index theta\n"
                 "# one block per branch; color by column 3 (0 = stable)\n")
        for bid, br in res.branches:
            fh.write(f"# branch {bid}\n")
            for p in br.points:
                m = p.morse_index if p.morse_index is not None else -1
                fh.write(f"{_fmt(float(p.alpha))} {_fmt(float(p.total_population))} {m} {br.theta}\n")
            fh.write("\n\n")
    (out / "events.json").write_text(json.dumps(_json_safe(res.events), indent=2) + "\n")
    report = {
        "schema": REPORT_SCHEMA,
        "name": res.config.name,
        "task": res.config.task,
        "config": res.config.to_dict(),
        "quantities": {k: {"value": v, "tolerance": tol.get(k, {}).get("tol"),
                           "mode": tol.get(k, {}).get("mode")}
                       for k, v in sorted(res.quantities.items())},
        "bifurcations": res.bifurcations,
        "notes": res.notes,
    }
    (out / "report.json").write_text(json.dumps(_json_safe(report), indent=2) + "\n")
    return report


def run_experiment(cfg: ExperimentConfig, out: Path | None = None, expectations=None):
    res = TASK_RUNNERS[cfg.task](cfg)
    report = write_artifacts(res, Path(out or cfg.out or f"out/{cfg.name}"), expectations)
    return res, report


# -- verification --------------------------------------------------------------------

def _config_dir():
    return resources.files("perifide") / "configs"


def bundled_names():
    return sorted(p.name[:-5] for p in _config_dir().iterdir()
                  if p.name.endswith(".toml"))


def load_expectations(name):
    path = _config_dir() / f"{name}.expect.json"
    if not path.is_file():
        raise ConfigError(f"no expectation file for {name!r}")
    return json.loads(path.read_text())


def compare(quantities: dict, expectations: dict) -> list:
    """Mismatch messages; empty when every expectation entry holds."""
    bad = []
    for e in expectations["entries"]:
        key, want, mode = e["quantity"], e["expected"], e.get("mode", "rel")
        if key not in quantities:
            bad.append(f"{key}: missing from the run")
            continue
        got = quantities[key]
        if mode == "equal":
            ok = got == want
        else:
            t = float(e["tol"])
            err = abs(got - want) if mode == "abs" else abs(got - want) / abs(want)
            ok = err <= t
        if not ok:
            bad.append(f"{key}: got {got!r}, expected {want!r} ({mode} tol {e.get('tol')})")
    return bad


def verify_one(name, overrides=(), out=None):
    expect = load_expectations(name)
    text = (_config_dir() / f"{name}.toml").read_text()
    cfg = parse_config(text, overrides, f"{name}.toml")
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        res, _ = run_experiment(cfg, Path(out) / name if out else Path(tmp), expect)
    return name, compare(res.quantities, expect), time.perf_counter() - t0


def _threads():
    raw = os.environ.get("PERIFIDE_THREADS")
    if raw is None:
        return max(1, min(4, os.cpu_count() or 1))
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"PERIFIDE_THREADS must be an integer, got {raw!r}") from None


def _map(fn, items):
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- entry point ---------------------------------------------------------------------

def _cmd_run(args):
    overrides = [parse_override(s) for s in args.set]
    cfgs = [load_config(p, overrides) for p in args.configs]

    def one(cfg):
        out = Path(args.out) / cfg.name if args.out and len(cfgs) > 1 else args.out
        t0 = time.perf_counter()
        _, report = run_experiment(cfg, out)
        return cfg, report, time.perf_counter() - t0

    for cfg, report, dt in _map(one, cfgs):
        print(f"{cfg.name}: {cfg.task} done in {dt:.1f}s, "
              f"{len(report['bifurcations'])} classified point(s)")
    return 0


def _cmd_verify(args):
    names = bundled_names() if args.name == "all" else [args.name]
    overrides = [parse_override(s) for s in args.set]
    results = _map(lambda n: verify_one(n, overrides, args.out), names)
    failed = 0
    for name, bad, dt in results:
        print(f"{'PASS' if not bad else 'FAIL'} {name} ({dt:.1f}s)")
        for msg in bad:
            print(f"    {msg}")
        failed += bool(bad)
    return 1 if failed else 0


def _cmd_rule(args):
    rule = build_rule(args.kind, args.n, tuple(args.interval))
    print("# node weight")
    for x, w in zip(rule.nodes, rule.weights):
        print(f"{float(x)!r} {float(w)!r}")
    return 0


def _cmd_eigs(args):
    cfg = load_config(args.config, [parse_override(s) for s in args.set])
    model = build_model(cfg)
    spec = trivial.k_spectrum(trivial.build_K(model), args.modes)
    print(f"{'i':>3} {'lambda_i':>22} {'alpha_i0':>22} parity")
    for i in range(args.modes):
        lam, xi0, a0 = spec.mode(i)
        par = parity(model.rule, xi0) if model.rule.is_symmetric else "n/a"
        print(f"{i:>3} {lam:>22.15g} {a0:>22.15g} {par}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="perifide", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one or more experiment configs")
    r.add_argument("configs", nargs="+")
    r.add_argument("--out")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("verify", help="compare bundled experiments with their expected values")
    v.add_argument("name", help="bundled experiment or 'all'")
    v.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    v.add_argument("--out", help="keep artifacts under this directory")
    v.set_defaults(func=_cmd_verify)
    q = sub.add_parser("rule", help="print quadrature nodes and weights")
    q.add_argument("--kind", required=True, choices=RULE_KINDS)
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--interval", type=float, nargs=2, default=(0.0, 1.0))
    q.set_defaults(func=_cmd_rule)
    e = sub.add_parser("eigs", help="spectrum table of the linearization at zero")
    e.add_argument("config")
    e.add_argument("--modes", type=int, default=5)
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    e.set_defaults(func=_cmd_eigs)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PerifideError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

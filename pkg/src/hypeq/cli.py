"""Command-line pipeline: pressure, refmeasure, evolve, dim, verify.

One JSON config document drives each command; flags override top-level
fields, and every resolved default is echoed into the output so runs are
self-describing.  All artifacts are deterministic given config + seed.
Exit codes: 0 success, 2 config validation, 3 numerical diagnostics, 4 I/O.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import hypeq.caratheodory as caratheodory
import hypeq.dimension as dimension
import hypeq.equilibrium as eq
import hypeq.pressure as pr
import hypeq.refmeasure as rm
import hypeq.systems as systems
from hypeq.systems import BracketError, DynamicsError

SCHEMA_VERSION = 1
OUTDIR_ENV = "HYPEQ_OUTDIR"
_Q_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, msg: str):
        self.field = field_name
        super().__init__(f"{field_name}: {msg}")


@dataclass(frozen=True)
class RunConfig:
    """One run: system + potential + schedules + seed + output directory.

    Every field is a top-level key of the config document and has a CLI
    flag of the same name.  Unset fields stay None and are resolved to
    per-command defaults, which the output echoes back.
    """

    system: dict
    potential: Optional[dict] = None
    chart: Optional[dict] = None         # {"point": <point dict>}
    tau: Optional[float] = None
    r: Optional[float] = None
    order: Optional[int] = None          # reference-measure cell order
    n: Optional[int] = None              # evolve averaging length
    n_range: Optional[tuple] = None      # pressure-estimate orders
    schedule: Optional[tuple] = None     # evolve convergence checkpoints
    variant: Optional[str] = None        # partition-sum witness family
    budget: int = eq.DEFAULT_ATOM_BUDGET
    dictionary: Optional[dict] = None    # {"kmax": .., "depth": ..}
    seed: Optional[int] = None
    pressure: Optional[float] = None     # override for reference weights
    measure: Optional[str] = None        # path to a saved leaf measure
    method: str = "closed_form"          # dim: pressure evaluation mode
    tolerance: float = 1e-9              # dim: root tolerance
    outdir: Optional[str] = None

    def echo(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(RunConfig)}
        for k in ("n_range", "schedule"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    doc = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON: {e}")
        if not isinstance(doc, dict):
            raise ConfigError("config", "top level must be an object")
    doc = dict(doc)
    doc.update(overrides)
    known = {f.name for f in fields(RunConfig)}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown config field")
    if "system" not in doc:
        raise ConfigError("system", "required")
    for key in ("n_range", "schedule"):
        if doc.get(key) is not None:
            try:
                doc[key] = tuple(int(v) for v in doc[key])
            except (TypeError, ValueError):
                raise ConfigError(key, "must be a list of integers")
    try:
        return RunConfig(**doc)
    except TypeError as e:
        raise ConfigError("config", str(e))


# ---------------------------------------------------------------------------
# field resolution


def _system(cfg: RunConfig) -> systems.SystemDescriptor:
    if not isinstance(cfg.system, dict):
        raise ConfigError("system", "must be an object with a 'family' key")
    try:
        return systems.descriptor_from_dict(cfg.system)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("system", str(e))


def _potential(cfg: RunConfig, sysd) -> systems.Potential:
    if cfg.potential is None:
        return systems.zero_potential()
    try:
        return systems.potential_from_dict(sysd, cfg.potential)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("potential", str(e))


def _chart(cfg: RunConfig, sysd) -> systems.LeafChart:
    if not isinstance(cfg.chart, dict) or "point" not in cfg.chart:
        raise ConfigError("chart", "needs an object of the form {'point': ...}")
    try:
        base = systems.point_from_dict(cfg.chart["point"])
        return systems.leaf_chart(sysd, base, tau=cfg.tau)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("chart", str(e))


def _leaf_r(cfg: RunConfig, chart) -> float:
    """Resolved cell parameter, chart-kind preconditions enforced up front."""
    if chart.kind == "tree":
        r = 0.7 if cfg.r is None else float(cfg.r)
        if not 0.5 < r < 1.0:
            raise ConfigError("r", f"word cells need 1/2 < r < 1, got {r:g}")
    else:
        r = min(0.05, chart.tau / 6.0) if cfg.r is None else float(cfg.r)
        if not 0.0 < r < chart.tau / 3.0:
            raise ConfigError(
                "r", f"leaf domains need 0 < r < tau/3 = {chart.tau / 3.0:.6g}, "
                     f"got {r:g}")
    return r


def _dictionary(cfg: RunConfig, sysd) -> eq.TestDictionary:
    spec = cfg.dictionary or {}
    unknown = set(spec) - {"kmax", "depth"}
    if unknown:
        raise ConfigError("dictionary", f"unknown keys {sorted(unknown)}")
    kmax, depth = int(spec.get("kmax", 8)), int(spec.get("depth", 6))
    if kmax < 1 or depth < 1:
        raise ConfigError("dictionary", "kmax and depth must be >= 1")
    return eq.default_dictionary(sysd, kmax=kmax, depth=depth)


# ---------------------------------------------------------------------------
# artifact plumbing


def _outdir(cfg: RunConfig) -> Path:
    root = cfg.outdir or os.environ.get(OUTDIR_ENV) or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dump_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _dump_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v
                        for v in row])


def _document(command: str, cfg: RunConfig, resolved: dict, body: dict) -> dict:
    echo = cfg.echo()
    echo.update(resolved)
    return {"schema_version": SCHEMA_VERSION, "command": command,
            "config": echo, **body}


def _read_measure(path: str) -> rm.LeafMeasure:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
        payload = doc.get("measure", doc) if isinstance(doc, dict) else None
        return rm.measure_from_dict(payload)
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise OSError(f"cannot ingest measure file {path}: {e}")


# ---------------------------------------------------------------------------
# commands


def _cmd_pressure(cfg: RunConfig) -> int:
    sysd = _system(cfg)
    phi = _potential(cfg, sysd)
    n_range = cfg.n_range if cfg.n_range is not None else tuple(range(4, 13))
    if len(set(n_range)) < 4:
        raise ConfigError("n_range", "needs at least 4 distinct orders")
    if min(n_range) < 1:
        raise ConfigError("n_range", "orders must be >= 1")
    variant = (cfg.variant or "sep").lower()
    if variant not in ("span", "sep", "per"):
        raise ConfigError("variant", f"unknown variant {cfg.variant!r}")
    domain = None
    if cfg.chart is not None:
        domain = _chart(cfg, sysd)
        r = _leaf_r(cfg, domain)
    else:
        r = cfg.r if cfg.r is not None else (0.75 if sysd.is_shift() else 0.1)
        if r <= 0:
            raise ConfigError("r", f"must be positive, got {r:g}")

    est = pr.pressure_estimate(sysd, phi, float(r), n_range,
                               domain=domain, variant=variant)
    out = _outdir(cfg)
    doc = _document("pressure", cfg,
                    {"r": float(r), "n_range": list(n_range),
                     "variant": variant},
                    {"estimate": est.to_dict()})
    _dump_json(out / "pressure.json", doc)
    _dump_csv(out / "pressure_curve.csv", ("n", "log_z"),
              [(int(a), float(b)) for a, b in est.log_values])
    print(f"pressure {est.value:.9f}  bracket "
          f"[{est.lower:.9f}, {est.upper:.9f}]")
    print(f"wrote {out / 'pressure.json'} and {out / 'pressure_curve.csv'}")
    return 0


def _cmd_refmeasure(cfg: RunConfig) -> int:
    sysd = _system(cfg)
    phi = _potential(cfg, sysd)
    chart = _chart(cfg, sysd)
    r = _leaf_r(cfg, chart)
    if cfg.order is None or int(cfg.order) < 1:
        raise ConfigError("order", "needs a cell order >= 1")
    seed = int(cfg.seed or 0)

    measure = rm.build_reference_measure(sysd, phi, chart, r, int(cfg.order),
                                         pressure=cfg.pressure)
    scaling = rm.scaling_check(measure)
    ugibbs = rm.u_gibbs_check(measure, seed=seed)
    out = _outdir(cfg)
    doc = _document("refmeasure", cfg, {"r": float(r), "seed": seed},
                    {"measure": measure.to_dict(),
                     "checks": {"scaling": scaling.to_dict(),
                                "u_gibbs": ugibbs.to_dict()}})
    _dump_json(out / "refmeasure.json", doc)
    print(f"cells {len(measure.weights)}  scaling defect "
          f"{scaling.max_defect:.3e}  u-Gibbs Q1 {ugibbs.q1:.12g}")
    print(f"wrote {out / 'refmeasure.json'}")
    return 0 if scaling.passed and ugibbs.passed else 3


def _default_schedule(n: int) -> tuple:
    return tuple(sorted({max(1, (n * k) // 4) for k in (1, 2, 3)} | {n}))


def _cmd_evolve(cfg: RunConfig) -> int:
    sysd = _system(cfg)
    if cfg.n is None or int(cfg.n) < 1:
        raise ConfigError("n", "needs an averaging length >= 1")
    if cfg.seed is None:
        raise ConfigError("seed", "required: evolution may resample atoms")
    n, seed = int(cfg.n), int(cfg.seed)

    if cfg.measure is not None:
        source = _read_measure(cfg.measure)
        if source.chart.sys.family != sysd.family or source.chart.sys.p != sysd.p:
            raise ConfigError("system", "does not match the ingested measure")
        phi = source.potential if cfg.potential is None \
            else _potential(cfg, sysd)
        source_tag = cfg.measure
    else:
        phi = _potential(cfg, sysd)
        chart = _chart(cfg, sysd)
        if cfg.order is None or int(cfg.order) < 1:
            raise ConfigError("order", "needs a cell order >= 1")
        source = rm.build_reference_measure(sysd, phi, chart, _leaf_r(cfg, chart),
                                            int(cfg.order), pressure=cfg.pressure)
        source_tag = "built"
    if cfg.budget < 1:
        raise ConfigError("budget", "must be >= 1")

    schedule = cfg.schedule if cfg.schedule is not None else _default_schedule(n)
    schedule = tuple(int(v) for v in schedule)
    if cfg.schedule is not None:
        if len(schedule) < 2 or list(schedule) != sorted(set(schedule)):
            raise ConfigError("schedule",
                              "must be strictly increasing with >= 2 entries")
        if schedule[0] < 1 or schedule[-1] != n:
            raise ConfigError("schedule", f"must stay in [1, n] and end at n = {n}")

    dic = _dictionary(cfg, sysd)
    stages = {v: eq.evolve_average(sysd, phi, source, v,
                                   budget=cfg.budget, seed=seed)
              for v in schedule}
    deltas = [(b, float(eq.weakstar_discrepancy(stages[a], stages[b], dic)))
              for a, b in zip(schedule, schedule[1:])]
    mu = stages[n]

    out = _outdir(cfg)
    doc = _document("evolve", cfg,
                    {"schedule": list(schedule), "seed": seed,
                     "source": source_tag},
                    {"measure": mu.to_dict(),
                     "convergence": [[int(a), b] for a, b in deltas]})
    _dump_json(out / "evolve.json", doc)
    _dump_csv(out / "convergence.csv", ("n", "delta_prev"), deltas)
    tail = f"  final Cauchy delta {deltas[-1][1]:.3e}" if deltas else ""
    print(f"atoms {mu.size}{tail}")
    print(f"wrote {out / 'evolve.json'} and {out / 'convergence.csv'}")
    return 0


def _cmd_dim(cfg: RunConfig) -> int:
    sysd = _system(cfg)
    if cfg.method not in ("closed_form", "numerical"):
        raise ConfigError("method", f"unknown method {cfg.method!r}")
    if cfg.tolerance <= 0:
        raise ConfigError("tolerance", "must be positive")

    pf = dimension.pressure_function(sysd, cfg.method, r=cfg.r,
                                     n_range=cfg.n_range, variant=cfg.variant)
    root = dimension.bowen_root(pf, tolerance=float(cfg.tolerance))
    body = {"root": root.to_dict()}
    if sysd.family in ("cat_map", "solenoid", "horseshoe", "full_shift"):
        body["conformal"] = dimension.conformal_dim_check(sysd, root.t0).to_dict()

    out = _outdir(cfg)
    doc = _document("dim", cfg,
                    {"method": cfg.method, "tolerance": float(cfg.tolerance)},
                    body)
    _dump_json(out / "dim.json", doc)
    _dump_csv(out / "dim_curve.csv", ("t", "pressure", "lower", "upper"),
              root.trace_rows())
    print(f"t0 {root.t0:.6f}  |P(t0)| {abs(root.pressure_at_root):.3e}")
    print(f"wrote {out / 'dim.json'} and {out / 'dim_curve.csv'}")
    return 0


def _cmd_verify(cfg: RunConfig) -> int:
    sysd = _system(cfg)
    if not sysd.is_shift():
        raise ConfigError("system",
                          "verify runs the exact shift suite; use a "
                          "full_shift or sft family")
    phi = _potential(cfg, sysd)
    if phi.kind not in ("zero", "locally_constant"):
        raise ConfigError("potential", "verify needs a locally constant "
                                       "potential on the shift")
    seed = int(cfg.seed or 0)
    order = int(cfg.order or 10)
    if order < 2:
        raise ConfigError("order", "needs a cell order >= 2")

    eig = pr.sft_exact_pressure(sysd, phi)
    gibbs = eq.SftGibbsMeasure(sysd, phi)
    chart = systems.leaf_chart(sysd, systems.word(sysd, (), 0))
    ref = rm.build_reference_measure(sysd, phi, chart, 0.7, order)
    ratio_bound = eig.gibbs_hi / eig.gibbs_lo
    checks = []

    scaling = rm.scaling_check(ref)
    checks.append({"name": "scaling_defect", "value": scaling.max_defect,
                   "tol": scaling.bound, "passed": bool(scaling.passed)})

    ugibbs = rm.u_gibbs_check(ref, seed=seed)
    checks.append({"name": "u_gibbs_Q1", "value": ugibbs.q1,
                   "tol": ratio_bound * (1 + _Q_TOL),
                   "passed": bool(ugibbs.q1 <= ratio_bound * (1 + _Q_TOL))})

    # holonomy between pasts is only defined when the pasts admit the same
    # futures; pick the first such pair of symbols, if any
    A = systems.transition_matrix(sysd)
    pair = next(((a, b) for a in range(sysd.p) for b in range(a + 1, sysd.p)
                 if (A[a] == A[b]).all()), None)
    if pair is not None:
        m_y = rm.build_reference_measure(
            sysd, phi, systems.leaf_chart(sysd, systems.word(sysd, (pair[0],), -1)),
            0.7, order)
        m_z = rm.build_reference_measure(
            sysd, phi, systems.leaf_chart(sysd, systems.word(sysd, (pair[1],), -1)),
            0.7, order)
        hol = rm.holonomy(sysd, m_y.chart, m_z.chart)
        hrep = rm.holonomy_equivalence_check(hol, m_y, m_z)
        checks.append({"name": "holonomy_Q2", "value": hrep.q2,
                       "tol": hrep.window, "passed": bool(hrep.passed)})

    grep = eq.gibbs_check(gibbs, sysd, phi, eig.value, samples=48, seed=seed)
    q = max(grep.max_ratio, 1.0 / grep.min_ratio)
    g_ok = grep.max_ratio <= eig.gibbs_hi * (1 + _Q_TOL) and \
        grep.min_ratio >= eig.gibbs_lo * (1 - _Q_TOL)
    checks.append({"name": "gibbs_Q", "value": q,
                   "tol": ratio_bound * (1 + _Q_TOL), "passed": bool(g_ok)})

    vrep = eq.variational_check(gibbs, sysd, phi, eig.value,
                                samples=128, n=12, seed=seed)
    v_tol = max(1e-9, math.log(ratio_bound) / 12.0 + 1e-12)
    checks.append({"name": "variational_residual", "value": vrep.residual,
                   "tol": v_tol, "passed": bool(vrep.residual <= v_tol)})

    cv = caratheodory.critical_value(
        caratheodory.leaf_structure(sysd, phi, 0.7),
        bracket=(eig.value - 0.75, eig.value + 0.75))
    gap = abs(cv.value - eig.value)
    checks.append({"name": "leaf_critical_vs_pressure", "value": gap,
                   "tol": 1e-6, "passed": bool(gap <= 1e-6)})

    out = _outdir(cfg)
    ok = all(c["passed"] for c in checks)
    doc = _document("verify", cfg, {"seed": seed, "order": order},
                    {"checks": checks, "all_passed": ok})
    _dump_json(out / "verify.json", doc)
    for c in checks:
        tol = "" if c["tol"] is None else f"  tol {c['tol']:.6g}"
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  "
              f"value {c['value']:.12g}{tol}")
    failed = sum(not c["passed"] for c in checks)
    print(f"{len(checks) - failed} of {len(checks)} checks passed")
    print(f"wrote {out / 'verify.json'}")
    return 0 if ok else 3


# ---------------------------------------------------------------------------
# entry point


_COMMANDS = {"pressure": _cmd_pressure, "refmeasure": _cmd_refmeasure,
             "evolve": _cmd_evolve, "dim": _cmd_dim, "verify": _cmd_verify}

_SCALAR_FLAGS = {"tau": float, "r": float, "order": int, "n": int,
                 "budget": int, "seed": int, "pressure": float,
                 "tolerance": float, "method": str, "variant": str,
                 "measure": str, "outdir": str}
_JSON_FLAGS = ("system", "potential", "chart", "dictionary",
               "n_range", "schedule")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypeq",
        description="Equilibrium-state pipeline: reference measures on "
                    "unstable leaves, averaged pushforwards, pressure and "
                    "dimension reports.")
    helps = {
        "pressure": "partition-sum pressure estimate (JSON + log Z_n CSV)",
        "refmeasure": "build a leaf reference measure and run its checks",
        "evolve": "averaged pushforward toward the equilibrium state",
        "dim": "Bowen-equation root and conformal dimension report",
        "verify": "exact shift property suite; exit 0 iff all checks pass",
    }
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", metavar="PATH",
                        help="JSON config document; flags override its "
                             "top-level fields")
        for fname, ftype in _SCALAR_FLAGS.items():
            sp.add_argument(f"--{fname}", type=ftype, default=None)
        for fname in _JSON_FLAGS:
            sp.add_argument(f"--{fname.replace('_', '-')}", dest=fname,
                            type=json.loads, default=None, metavar="JSON")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config") and v is not None}
    try:
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DynamicsError, BracketError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())

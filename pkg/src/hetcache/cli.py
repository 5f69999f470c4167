"""Command-line front end.

    python -m hetcache analyze  --config cfg.json [--sweep sweep.json] [--out rows.csv]
    python -m hetcache optimize --config cfg.json [--asymptotic-scoring]
    python -m hetcache simulate --config cfg.json --realizations 10000 --seed 1
    python -m hetcache compare  --config cfg.json --schemes proposed,most_popular

Results go to ``--out`` (or stdout) and depend only on the inputs and seed.
Progress and wall time go to stderr.  Exit codes: 0 success, 2 invalid
input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .analysis import q_asymptotic, q_general
from .baselines import BaselineKind, BaselineScheme
from .combinatorics import CombinationLimitError, InfeasibleMarginalsError, enumerate_combinations, marginals_from_p
from .model import ValidationError, parse_config
from .numerics import BracketError, ConvergenceError, DomainError
from .optimize import OptConfig, near_optimal
from .simulate import EDGE_POLICIES, SimConfig, compare_schemes, simulate_records

__all__ = ["SweepSpec", "main", "cmd_analyze", "cmd_optimize", "cmd_simulate", "cmd_compare",
           "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

_PHY_KEYS = {"lambda1", "lambda2", "lambda_u", "P1", "P2", "N0", "alpha1", "alpha2", "W_hz", "tau",
             "P1_over_P2", "P_over_N0"}
_CONTENT_KEYS = {"N", "a", "K1c", "K2c", "K1b", "gamma"}
_SIM_KEYS = {"window_side", "realizations", "seed", "edge_policy", "stratified"}
# setting one member of a pair drops the other
_ALTERNATES = {"P1": "P1_over_P2", "P1_over_P2": "P1", "N0": "P_over_N0", "P_over_N0": "N0",
               "a": "gamma", "gamma": "a"}
SCHEMES = ("proposed",) + tuple(k.value for k in BaselineKind)

COLUMNS = {
    "analyze": ["point", "parameter", "value", "q", "q1", "q2", "q_inf", "gap", "per_file"],
    "optimize": ["point", "parameter", "value", "q_general", "q_asymptotic", "F1c", "F2c", "F1b",
                 "candidates_total", "candidates_after_filter", "n1"],
    "simulate": ["point", "parameter", "value", "q_hat", "stderr", "q_general", "realizations", "seed",
                 "edge_policy"],
    "compare": ["point", "parameter", "value", "scheme", "q_hat", "stderr", "realizations", "seed"],
}
_FIXED = {"point", "parameter", "value"}


class UsageError(ValueError):
    pass


@dataclass
class SweepSpec:
    parameter: str
    values: list
    outputs: list | None = None

    @classmethod
    def from_dict(cls, d: dict, command: str) -> "SweepSpec":
        unknown = set(d) - {"parameter", "values", "outputs"}
        if unknown:
            raise UsageError(f"sweep: unknown fields {sorted(unknown)}")
        if "parameter" not in d:
            raise UsageError("sweep: 'parameter' is required")
        values = d.get("values")
        if not isinstance(values, list) or not values:
            raise UsageError("sweep: 'values' must be a nonempty list")
        spec = cls(str(d["parameter"]), list(values), d.get("outputs"))
        _resolve(spec.parameter)
        if spec.outputs is not None:
            bad = [o for o in spec.outputs if o not in COLUMNS[command]]
            if bad:
                raise UsageError(f"sweep: unknown outputs {bad} for {command}; "
                                 f"choose from {COLUMNS[command]}")
        return spec


def _resolve(path: str):
    parts = path.split(".")
    allowed = {"phy": _PHY_KEYS, "content": _CONTENT_KEYS, "simulation": _SIM_KEYS}
    if len(parts) != 2 or parts[0] not in allowed or parts[1] not in allowed[parts[0]]:
        raise UsageError(f"sweep parameter path '{path}' does not resolve; expected one of "
                         + ", ".join(f"{s}.<{'|'.join(sorted(k))}>" for s, k in allowed.items()))
    return parts


def _apply(raw: dict, path: str, value) -> dict:
    sec, key = _resolve(path)
    out = copy.deepcopy(raw)
    section = out.setdefault(sec, {})
    alt = _ALTERNATES.get(key)
    if alt is not None:
        section.pop(alt, None)
    section[key] = value
    return out


def _split(raw: dict):
    raw = dict(raw)
    sim = raw.pop("simulation", {}) or {}
    unknown = set(sim) - _SIM_KEYS
    if unknown:
        raise ValidationError([f"simulation: unknown fields {sorted(unknown)}"])
    return raw, sim


def _sim_config(sim: dict, args) -> SimConfig:
    kw = dict(sim)
    if args.realizations is not None:
        kw["realizations"] = args.realizations
    if args.seed is not None:
        kw["seed"] = args.seed
    kw["threads"] = args.threads
    return SimConfig(**kw)


def _points(raw: dict, sweep: SweepSpec | None):
    if sweep is None:
        return [("", "", raw)]
    return [(sweep.parameter, v, _apply(raw, sweep.parameter, v)) for v in sweep.values]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- commands

def cmd_analyze(raw: dict, sweep: SweepSpec | None = None, threads: int = 1) -> list:
    """One row per sweep point with the general and asymptotic success
    probabilities of the configured design."""
    raw, _ = _split(raw)

    def row(pt):
        i, (param, value, cfg) = pt
        phy, content, design = parse_config(cfg)
        if design is None:
            raise ValidationError(["analyze needs a 'design' section (F1c, F2c, p)"])
        rep = q_general(phy, content, design)
        idx = enumerate_combinations(design.F2c, content.K2c)
        T = marginals_from_p(idx, design.p)
        inf = q_asymptotic(phy, content, design.F1c, idx.F2c, T)
        return {"point": i, "parameter": param, "value": value, "q": rep.q, "q1": rep.q1, "q2": rep.q2,
                "q_inf": inf.q, "gap": inf.q - rep.q,
                "per_file": [rep.per_file[n] for n in sorted(rep.per_file)]}

    return _map(row, list(enumerate(_points(raw, sweep))), threads)


def cmd_optimize(raw: dict, sweep: SweepSpec | None = None, asymptotic_scoring: bool = False,
                 threads: int = 1):
    """Near-optimal design for each sweep point.  Returns the solutions and
    their summary rows."""
    raw, _ = _split(raw)

    def solve(pt):
        i, (param, value, cfg) = pt
        phy, content, _ = parse_config(cfg)
        sol = near_optimal(phy, content, OptConfig(), asymptotic_scoring=asymptotic_scoring)
        d = sol.diagnostics
        row = {"point": i, "parameter": param, "value": value, "q_general": sol.q_general,
               "q_asymptotic": sol.q_asymptotic, "F1c": sorted(sol.F1c), "F2c": sorted(sol.F2c),
               "F1b": sorted(sol.F1b), "candidates_total": d["candidates_total"],
               "candidates_after_filter": d["candidates_after_filter"], "n1": d["n1"]}
        return sol, row

    out = _map(solve, list(enumerate(_points(raw, sweep))), threads)
    return [s for s, _ in out], [r for _, r in out]


def _proposed_design(phy, content, design, asymptotic_scoring=False):
    if design is not None:
        return design
    return near_optimal(phy, content, OptConfig(), asymptotic_scoring=asymptotic_scoring).design


def _noise_only(raw: dict, sweep: SweepSpec | None) -> bool:
    # association and loads do not depend on noise, so one run can be rescored
    return sweep is not None and sweep.parameter in ("phy.N0", "phy.P_over_N0") and raw.get("design")


def cmd_simulate(raw: dict, sim: dict | None = None, sweep: SweepSpec | None = None, args=None) -> list:
    """Monte Carlo estimate for the configured design (or the optimized one
    when no design is given) at each sweep point."""
    raw, sim_raw = _split(raw)
    sim = {**sim_raw, **(sim or {})}
    pts = _points({**raw, "simulation": sim}, sweep)
    rows = []
    shared = None
    for i, (param, value, cfg) in enumerate(pts):
        cfg, sim_i = _split(cfg)
        phy, content, design = parse_config(cfg)
        scfg = _sim_config(sim_i, args)
        design = _proposed_design(phy, content, design, getattr(args, "asymptotic_scoring", False))
        if _noise_only(raw, sweep) and shared is not None:
            rec = shared
        else:
            rec = simulate_records(phy, content, [design], scfg)[0]
            if _noise_only(raw, sweep):
                shared = rec
        q, se, _ = rec.estimate(content.a, phy.N0, phy.tau, phy.W_hz, scfg.stratified)
        rows.append({"point": i, "parameter": param, "value": value, "q_hat": q, "stderr": se,
                     "q_general": q_general(phy, content, design).q, "realizations": scfg.realizations,
                     "seed": scfg.seed, "edge_policy": scfg.edge_policy})
    return rows


def cmd_compare(raw: dict, schemes=SCHEMES, sim: dict | None = None, sweep: SweepSpec | None = None,
                args=None) -> list:
    """Estimates for the optimized design and the baselines on common worlds."""
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise UsageError(f"unknown schemes {bad}; choose from {list(SCHEMES)}")
    raw, sim_raw = _split(raw)
    sim = {**sim_raw, **(sim or {})}
    rows = []
    for i, (param, value, cfg) in enumerate(_points({**raw, "simulation": sim}, sweep)):
        cfg, sim_i = _split(cfg)
        cfg.pop("design", None)
        phy, content, _ = parse_config(cfg)
        scfg = _sim_config(sim_i, args)
        objs = {}
        for s in schemes:
            if s == "proposed":
                objs[s] = _proposed_design(phy, content, None, getattr(args, "asymptotic_scoring", False))
            else:
                objs[s] = BaselineScheme(s, content)
        res = compare_schemes(phy, content, objs, scfg)
        for s in schemes:
            rows.append({"point": i, "parameter": param, "value": value, "scheme": s,
                         "q_hat": res[s].q_hat, "stderr": res[s].stderr,
                         "realizations": scfg.realizations, "seed": scfg.seed})
    return rows


# ---------------------------------------------------------------- output

def render_rows(command: str, rows: list, fmt: str = "csv", outputs=None) -> str:
    cols = COLUMNS[command]
    if outputs:
        cols = [c for c in cols if c in _FIXED or c in outputs]
    if fmt == "json":
        body = {"schema": f"hetcache.{command}/{SCHEMA_VERSION}", "columns": cols,
                "rows": [{c: r[c] for c in cols} for r in rows]}
        return json.dumps(body, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema: hetcache.{command}/{SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _format_for(out: str | None) -> str:
    return "json" if out and out.endswith(".json") else "csv"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetcache", description="Hybrid caching design for two-tier HetNets.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("analyze", "optimize", "simulate", "compare"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON file with phy, content and optional design")
        s.add_argument("--sweep", help="JSON file: {parameter, values, outputs?}")
        s.add_argument("--out", help="output path (.json for JSON, otherwise CSV); default stdout")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--realizations", type=int, default=None)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--asymptotic-scoring", action="store_true",
                       help="rank candidates by the high-SNR, dense-user value")
        if name == "compare":
            s.add_argument("--schemes", default=",".join(SCHEMES),
                           help="comma-separated subset of " + ",".join(SCHEMES))
        if name in ("simulate", "compare"):
            s.add_argument("--edge-policy", choices=EDGE_POLICIES, default=None)
            s.add_argument("--window-side", type=float, default=None)
    return p


def _load_json(path: str, what: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {what} '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} '{path}' is not valid JSON: {exc}") from exc


def run(args) -> int:
    raw = _load_json(args.config, "config")
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    sweep = SweepSpec.from_dict(_load_json(args.sweep, "sweep"), args.command) if args.sweep else None
    outputs = sweep.outputs if sweep else None
    fmt = _format_for(args.out)
    t0 = time.perf_counter()
    if args.command == "analyze":
        rows = cmd_analyze(raw, sweep, args.threads)
        text = render_rows("analyze", rows, fmt, outputs)
    elif args.command == "optimize":
        sols, rows = cmd_optimize(raw, sweep, args.asymptotic_scoring, args.threads)
        if sweep is None:
            sol = sols[0]
            text = sol.to_json(indent=2) + "\n"
            d = sol.diagnostics
            print(f"F1c={sorted(sol.F1c)} F2c={sorted(sol.F2c)} F1b={sorted(sol.F1b)} "
                  f"q={sol.q_general:.6f} q_inf={sol.q_asymptotic:.6f} "
                  f"candidates {d['candidates_total']} -> {d['candidates_after_filter']} after tier filter",
                  file=sys.stderr)
        else:
            text = render_rows("optimize", rows, fmt, outputs)
    else:
        sim = {}
        if args.edge_policy is not None:
            sim["edge_policy"] = args.edge_policy
        if args.window_side is not None:
            sim["window_side"] = args.window_side
        if args.command == "simulate":
            rows = cmd_simulate(raw, sim, sweep, args)
        else:
            schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
            rows = cmd_compare(raw, schemes, sim, sweep, args)
        text = render_rows(args.command, rows, fmt, outputs)
    _write(text, args.out)
    print(f"{args.command}: {time.perf_counter() - t0:.2f} s wall time", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ConvergenceError, BracketError, InfeasibleMarginalsError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        print("error: invalid configuration:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, DomainError, CombinationLimitError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ``stepcal {measure,simulate,experiment,oracle}``.

Every subcommand writes CSV to ``--out`` (default standard output).
Exit status is 0 on success, 2 for bad input or configuration and 3 when
a request exceeds an exact-computation limit.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import List, Optional

import numpy as np

from . import oracle as oracle_mod
from .environments import NatureSpec, make_nature
from .forecasters import ForecasterSpec
from .harness import (
    GAP_EXPERIMENTS,
    derive_seed,
    estimate_error,
    run_episode,
    truthfulness_gap,
)
from .measures import MEASURES, CapabilityError, SubsetSampler

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAPABILITY = 3

DEFAULT_MEASURES = ("step", "step_sub", "vcal", "ucal", "sign", "ece", "smce")
EXPERIMENT_COLUMNS = ("experiment", "measure", "T", "n", "mean", "sd", "stderr",
                      "ci_lo", "ci_hi", "seed")


class InputError(Exception):
    """Bad configuration or input file; maps to exit status 2."""


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write(rows: List[list], header: List[str], out: Optional[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    text = buf.getvalue()
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _load_config(path: Optional[str], required: bool) -> dict:
    if path is None:
        if required:
            raise InputError("--config is required")
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"config {path} line {e.lineno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return cfg


def _int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise InputError(f"{name} must be an integer (got {value!r})")
    return int(value)


def _measure_list(raw: Optional[str]) -> List[str]:
    if raw is None:
        return list(DEFAULT_MEASURES)
    names = [s.strip() for s in raw.split(",") if s.strip()]
    if not names:
        raise InputError("--measures is empty")
    for n in names:
        if n not in MEASURES:
            raise InputError(f"unknown measure {n!r}; choose from {', '.join(MEASURES)}")
    return names


# ---------------------------------------------------------------------------
# measure


def read_transcript(path: str):
    """Parse a ``t,x,p_star,p`` CSV (``p_star`` optional) into (x, p)."""
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if header not in (["t", "x", "p_star", "p"], ["t", "x", "p"]):
        raise InputError(f"line 1: expected header t,x,p_star,p (got {','.join(header)})")
    xs, ps = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        rec = dict(zip(header, (c.strip() for c in row)))
        try:
            x = float(rec["x"])
            p = float(rec["p"])
            if "p_star" in rec and rec["p_star"] != "":
                float(rec["p_star"])
        except ValueError:
            raise InputError(f"line {lineno}: non-numeric field") from None
        if x not in (0.0, 1.0):
            raise InputError(f"line {lineno}: x must be 0 or 1 (got {rec['x']})")
        if not 0.0 <= p <= 1.0:
            raise InputError(f"line {lineno}: p must lie in [0, 1] (got {rec['p']})")
        xs.append(int(x))
        ps.append(p)
    return np.asarray(xs, dtype=np.int64), np.asarray(ps, dtype=np.float64)


def cmd_measure(args) -> int:
    names = _measure_list(args.measures)
    x, p = read_transcript(args.transcript)
    m = 100 if args.reps is None else args.reps
    seed = 0 if args.seed is None else args.seed
    rows = []
    for name in names:
        fn, needs_sampler = MEASURES[name]
        if needs_sampler:
            v = fn(x, p, SubsetSampler(m=m, seed=seed))
        else:
            v = fn(x, p)
        rows.append([name, v.value, v.exactness, v.stderr, v.lower, v.upper])
    _write(rows, ["measure", "value", "exactness", "stderr", "lower", "upper"], args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, required=True)
    if "nature" not in cfg or "forecaster" not in cfg:
        raise InputError("simulate config needs 'nature' and 'forecaster'")
    if not isinstance(cfg["nature"], dict) or "T" not in cfg["nature"]:
        raise InputError("nature spec needs 'T'")
    nature = NatureSpec.from_dict(cfg["nature"])
    forecaster = ForecasterSpec.from_dict(cfg["forecaster"])
    make_nature(nature)
    seed = args.seed if args.seed is not None else _int(cfg.get("seed", 0), "seed")
    reps = args.reps if args.reps is not None else _int(cfg.get("reps", 1), "reps")
    if reps < 1:
        raise InputError("reps must be positive")
    rows = []
    for i in range(reps):
        tr = run_episode(nature, forecaster, derive_seed(seed, i))
        for t in range(tr.T):
            row = [t + 1, int(tr.x[t]), float(tr.pstar[t]), float(tr.p[t])]
            rows.append([i] + row if reps > 1 else row)
    header = ["t", "x", "p_star", "p"]
    _write(rows, (["episode"] + header) if reps > 1 else header, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment


def _thm_alg_nature(name: str, T: int) -> NatureSpec:
    if name == "binary_search":
        return NatureSpec("binary_search", T, {})
    if name == "bernoulli_half":
        return NatureSpec("product", T, {"pstar": 0.5})
    raise InputError(f"thm_alg_scaling nature must be binary_search or bernoulli_half (got {name!r})")


def _report_row(name: str, T: int, r) -> list:
    return [name, r.measure, T, r.n, r.mean, r.sd, r.stderr, r.ci_lo, r.ci_hi, r.seed]


def run_experiment(cfg: dict, seed: Optional[int] = None, reps: Optional[int] = None) -> List[list]:
    """Rows of the experiment CSV for one config object."""
    name = cfg.get("experiment")
    if not isinstance(name, str):
        raise InputError("experiment config needs an 'experiment' name")
    if "T" not in cfg:
        raise InputError("experiment config needs 'T'")
    Ts = cfg["T"] if isinstance(cfg["T"], list) else [cfg["T"]]
    Ts = [_int(T, "T") for T in Ts]
    if not Ts or any(T < 1 for T in Ts):
        raise InputError("T values must be positive")
    seed = seed if seed is not None else _int(cfg.get("seed", 0), "seed")
    reps = reps if reps is not None else _int(cfg.get("reps", 100), "reps")
    params = cfg.get("params", {}) or {}
    if not isinstance(params, dict):
        raise InputError("params must be an object")
    measure = cfg.get("measure")
    if measure is not None and measure not in MEASURES:
        raise InputError(f"unknown measure {measure!r}")
    m = _int(params.get("m", 100), "params.m")
    rows = []
    if name in GAP_EXPERIMENTS:
        for T in Ts:
            g = truthfulness_gap(name, T, params, reps, seed, measure, m)
            rows.append(_report_row(f"{name}:truthful", T, g.truthful))
            rows.append(_report_row(f"{name}:strategic", T, g.strategic))
        return rows
    if name == "thm_alg_scaling":
        fc = {"kind": "hedge_step"}
        if "k" in params:
            fc["k"] = params["k"]
        if "eta" in params:
            fc["eta"] = params["eta"]
        for T in Ts:
            spec = _thm_alg_nature(params.get("nature", "binary_search"), T)
            r = estimate_error(spec, fc, measure or "step", reps, seed, m)
            rows.append(_report_row(name, T, r))
        return rows
    if name == "scaling":
        if "nature" not in params or "forecaster" not in params:
            raise InputError("scaling experiment needs params.nature and params.forecaster")
        for T in Ts:
            spec = NatureSpec.from_dict({**params["nature"], "T": T})
            r = estimate_error(spec, params["forecaster"], measure or "step", reps, seed, m)
            rows.append(_report_row(name, T, r))
        return rows
    known = sorted(list(GAP_EXPERIMENTS) + ["thm_alg_scaling", "scaling"])
    raise InputError(f"unknown experiment {name!r}; choose from {', '.join(known)}")


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config, required=True)
    rows = run_experiment(cfg, args.seed, args.reps)
    _write(rows, list(EXPERIMENT_COLUMNS), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args) -> int:
    cfg = _load_config(args.config, required=False)
    allowed = {"instances", "max_T", "seed", "grid_step", "offset", "subset_T", "f_grid_step"}
    unknown = set(cfg) - allowed
    if unknown:
        raise InputError(f"unknown oracle config keys: {', '.join(sorted(unknown))}")
    kw = dict(cfg)
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.reps is not None:
        kw["instances"] = args.reps
    for key in ("instances", "max_T", "seed", "subset_T"):
        if key in kw:
            kw[key] = _int(kw[key], key)
    gs = kw.get("grid_step", 1e-3)
    if not isinstance(gs, (int, float)) or not 0 < gs <= 1e-3:
        raise InputError(f"grid_step must lie in (0, 1e-3] (got {gs!r})")
    reports = oracle_mod.oracle_battery(**kw)
    rows = [[r.kind, r.optimized, r.oracle, r.diff, r.instance] for r in reports]
    _write(rows, ["kind", "optimized", "oracle", "diff", "instance"], args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stepcal", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output CSV path (default: stdout)")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")
        p.add_argument("--reps", type=int, help="replicate count (overrides the config)")

    p = sub.add_parser("measure", help="evaluate measures on a transcript CSV")
    p.add_argument("transcript", help="CSV with header t,x,p_star,p (p_star optional)")
    p.add_argument("--measures", help=f"comma list from: {', '.join(MEASURES)}")
    common(p)
    p.set_defaults(func=cmd_measure)

    for name, fn, text in (
        ("simulate", cmd_simulate, "run episodes and write their transcripts"),
        ("experiment", cmd_experiment, "run a named experiment"),
        ("oracle", cmd_oracle, "cross-check optimized measures against brute force"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config path")
        common(p)
        p.set_defaults(func=fn)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except CapabilityError as e:
        print(f"stepcal: {e}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (InputError, ValueError, KeyError, TypeError) as e:
        print(f"stepcal: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

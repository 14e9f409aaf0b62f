"""Command-line front end.

    catldp tube --config tube.toml --seed 42 --out results/
    catldp run --config results/manifest.json       # replay a run
    catldp plotdata results/

Exit codes: 0 success, 1 internal error, 2 invalid input, 3 inconclusive check.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import KINDS, read_config
from .experiments import (EQUIVALENCE_COLUMNS, MAXGROWTH_COLUMNS, TUBE_COLUMNS, lldp_slope,
                          max_growth, sampler_equivalence, tube_probabilities)
from .model import DomainError, validate
from .oracle import lemma71_check, lemma75_grid
from .rate import rate_I
from .rng import RngStream
from .sampler import sample_decomposed, sample_direct, sample_subordinated

log = logging.getLogger("catldp")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_INCONCLUSIVE = 0, 1, 2, 3
SEED_ENV = "CATLDP_SEED"


class InputError(Exception):
    pass


def resolve_seed(flag: int | None, config_seed: int | None) -> int:
    if flag is not None:
        return flag
    if config_seed is not None:
        return config_seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    path.write_text(buf.getvalue())


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _run_simulate(cfg, sec, params, seed, out, base):
    makers = {"direct": sample_direct, "decomposed": sample_decomposed,
              "subordinated": sample_subordinated}
    summary = []
    for i in range(sec.paths):
        path = makers[sec.sampler](params, sec.T, RngStream(seed, i))
        (out / f"path_{i:03d}.csv").write_text(path.to_csv())
        summary.append({"stream": i, "events": len(path),
                        "final": int(path.value(sec.T)), "max": int(path.values.max(initial=0)),
                        "clocks": path.clock_counts})
    return {"paths": summary}


def _run_rate(cfg, sec, params, seed, out, base):
    report = rate_I(sec.target(base), params).to_json()
    write_json(out / "rate.json", report)
    return report


def _run_tube(cfg, sec, params, seed, out, base):
    eps = sec.eps if isinstance(sec.eps, list) else [sec.eps]
    est = tube_probabilities(params, sec.target(base), eps, sec.T, sec.n, seed, cfg.workers)
    write_csv(out / "tube.csv", TUBE_COLUMNS, [e.row() for e in est])
    return {"rows": [dict(e.row(), log_rate_is_bound=e.log_rate_is_bound,
                          split_hits=list(e.split_hits)) for e in est]}


def _run_slope(cfg, sec, params, seed, out, base):
    eps = sec.eps if isinstance(sec.eps, list) else [sec.eps]
    rep = lldp_slope(params, sec.target(base), eps, sec.T_grid, sec.n, seed, cfg.workers)
    write_csv(out / "slope.csv", TUBE_COLUMNS, [e.row() for e in rep.estimates])
    fits = []
    for e, fit in rep.fits.items():
        fits.append({"eps": e, "slope": fit.slope, "se": fit.se, "intercept": fit.intercept,
                     "used_T": fit.T[fit.used].tolist(), "conclusive": fit.conclusive,
                     "ratio_to_rate": fit.slope / rep.rate})
    result = {"rate_I": rep.rate, "fits": fits, "conclusive": rep.conclusive,
              "zero_hit_T": [e.T for e in rep.estimates if e.log_rate_is_bound]}
    if not rep.conclusive:
        result["_inconclusive"] = "fewer than 3 T values with >= 10 hits for some eps"
    return result


def _run_maxgrowth(cfg, sec, params, seed, out, base):
    rows = max_growth(params, sec.b, sec.eps, sec.T_grid, sec.n, seed, cfg.workers)
    write_csv(out / "maxgrowth.csv", MAXGROWTH_COLUMNS, [r.row() for r in rows])
    return {"rows": [dict(r.row(), exceed=r.exceed, se=r.se) for r in rows]}


def _run_equivalence(cfg, sec, params, seed, out, base):
    rows = sampler_equivalence(params, sec.t, sec.n, sec.x_max, sec.k_max, seed, cfg.workers)
    write_csv(out / "equivalence.csv", EQUIVALENCE_COLUMNS, [r.row() for r in rows])
    return {"rows": [r.row() for r in rows], "pass": all(r.passed for r in rows)}


def _run_bounds(cfg, sec, params, seed, out, base):
    result = {}
    if sec.lemma75 is not None:
        reps = lemma75_grid(params, sec.lemma75.c, sec.lemma75.delta, sec.lemma75.T)
        result["lemma75"] = {"checks": [r.to_json() for r in reps],
                             "violations": sum(not r.passed for r in reps),
                             "pass": all(r.passed for r in reps)}
    if sec.lemma71 is not None:
        s = sec.lemma71
        rep = lemma71_check(params, s.u, s.C1, s.k_max, s.x_max)
        result["lemma71"] = rep.to_json()
        if rep.inconclusive:
            result["_inconclusive"] = "truncation too coarse for lemma71 check; raise x_max"
    result["pass"] = all(v["pass"] for k, v in result.items() if not k.startswith("_"))
    return result


RUNNERS = {
    "simulate": _run_simulate,
    "rate": _run_rate,
    "tube": _run_tube,
    "slope": _run_slope,
    "maxgrowth": _run_maxgrowth,
    "equivalence": _run_equivalence,
    "bounds": _run_bounds,
}


def run(kind: str | None, config_path, seed: int | None = None, workers: int | None = None,
        out: str | None = None) -> int:
    """Run one experiment from a config file; returns the process exit code."""
    try:
        cfg, base = read_config(config_path)
    except FileNotFoundError as exc:
        raise InputError(f"cannot read config: {exc}") from None
    except (ValidationError, ValueError) as exc:
        raise InputError(f"invalid config {config_path}: {exc}") from None
    kind = kind or cfg.kind
    if kind is None:
        present = [k for k in KINDS if getattr(cfg, k) is not None]
        if len(present) != 1:
            raise InputError("experiment kind not given (subcommand, 'kind' key, "
                             "or a single experiment section)")
        kind = present[0]
    if cfg.kind is not None and cfg.kind != kind:
        raise InputError(f"config is for {cfg.kind!r}, not {kind!r}")
    try:
        sec = cfg.section(kind)
        target_file = getattr(sec, "f_file", None)
        if target_file is not None:
            sec = sec.model_copy(update={"f_file": str((base / target_file).resolve())})
            cfg = cfg.model_copy(update={kind: sec})
        params = cfg.model.build()
    except (ValueError, DomainError) as exc:
        raise InputError(str(exc)) from None
    x_check = 64
    if kind == "bounds" and sec.lemma71 is not None:
        x_check = sec.lemma71.x_max
    report = validate(params, x_max=x_check)
    if not report.ok:
        raise InputError(f"invalid model: {report.describe_failures()}")
    if kind in ("tube", "slope", "rate"):
        try:
            target = sec.target(base)
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from None
        if kind == "rate" and not target.is_ac0_plus:
            raise InputError("target f ∉ AC₀⁺ (f must be positive on (0, 1])")

    seed = resolve_seed(seed, cfg.seed)
    workers = workers if workers is not None else cfg.workers
    out_dir = Path(out or cfg.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = cfg.model_copy(update={"kind": kind, "seed": seed, "workers": workers,
                                 "out": str(out_dir)})
    echo = cfg.model_dump(mode="json", by_alias=True, exclude_none=True)

    log.info("running %s (seed=%d, workers=%d) -> %s", kind, seed, workers, out_dir)
    t0 = time.perf_counter()
    result = RUNNERS[kind](cfg, sec, params, seed, out_dir, base)
    wall = time.perf_counter() - t0
    inconclusive = result.pop("_inconclusive", None)

    if kind != "rate":
        write_json(out_dir / f"{kind}.json",
                   {"kind": kind, "config": echo, "wall_time_s": wall, **result})
    write_json(out_dir / "manifest.json",
               {"kind": kind, "config": echo, "seed": seed, "tool_version": __version__,
                "wall_time_s": wall})
    if inconclusive:
        log.warning("inconclusive: %s", inconclusive)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _read_rows(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot_data(in_dir, out_path=None) -> Path:
    """Merge experiment outputs in ``in_dir`` into a long table ``series,x,y,flag``."""
    in_dir = Path(in_dir)
    rows = []
    slope_csv, slope_json = in_dir / "slope.csv", in_dir / "slope.json"
    if slope_csv.exists():
        if not slope_json.exists():
            raise InputError(f"{slope_csv} found without {slope_json}")
        ref = json.loads(slope_json.read_text())["rate_I"]
        Ts = []
        for r in _read_rows(slope_csv):
            flag = "bound" if int(r["hits"]) == 0 else ""
            rows.append((f"log_rate_emp[eps={r['eps']}]", r["T"], r["log_rate"], flag))
            if r["T"] not in Ts:
                Ts.append(r["T"])
        rows += [("I_f_ref", T, repr(float(ref)), "") for T in Ts]
    tube_csv = in_dir / "tube.csv"
    if tube_csv.exists():
        for r in _read_rows(tube_csv):
            flag = "bound" if int(r["hits"]) == 0 else ""
            rows.append((f"tube_log_rate[eps={r['eps']}]", r["T"], r["log_rate"], flag))
    mg_csv = in_dir / "maxgrowth.csv"
    if mg_csv.exists():
        for r in _read_rows(mg_csv):
            rows.append((f"exceed_freq[b={r['b']},eps={r['eps']}]", r["T"], r["exceed_freq"], ""))
    if not rows:
        raise InputError(f"no slope, tube or maxgrowth outputs in {in_dir}")
    out_path = Path(out_path) if out_path else in_dir / "plot_data.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out_path, ("series", "x", "y", "flag"),
              [dict(zip(("series", "x", "y", "flag"), r)) for r in rows])
    return out_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catldp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="TOML or JSON config")
        p.add_argument("--seed", type=int, help="overrides config and $" + SEED_ENV)
        p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    for kind in KINDS:
        common(sub.add_parser(kind, help=f"run the {kind} experiment"))
    common(sub.add_parser("run", help="run the experiment named by the config's 'kind'"))
    pd = sub.add_parser("plotdata", help="merge outputs into series,x,y,flag")
    pd.add_argument("input", nargs="?", help="directory holding experiment outputs")
    pd.add_argument("--out", help="output directory (default: the input directory)")
    pd.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "plotdata":
            src = args.input or args.out
            if src is None:
                raise InputError("plotdata needs an input directory")
            dest = Path(args.out) / "plot_data.csv" if args.out else None
            emit_plot_data(src, dest)
            return EXIT_OK
        if args.workers is not None and args.workers < 1:
            raise InputError("--workers must be >= 1")
        kind = None if args.command == "run" else args.command
        return run(kind, args.config, args.seed, args.workers, args.out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

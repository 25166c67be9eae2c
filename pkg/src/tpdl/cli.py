"""Command-line entry point.

    tpdl closure          [--config FILE] [--out DIR]
    tpdl spectrum         [--samples N] [--r-min R] [--r-max R]
    tpdl linear-decay     [--config FILE]
    tpdl nonlinear-decay  [--config FILE] [--seed S]
    tpdl lower-bound      [--config FILE]
    tpdl report           [--out DIR]

Exit status: 0 when every verdict passes, 2 when some verdict fails, 1 on
errors (bad config, solver failure, interruption).
"""
import argparse
import glob
import logging
import math
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import io
from .closure import ClosureError, build_equilibrium
from .config import load
from .decay import ConfigError, ExperimentConfig, REPORT_COLUMNS, run_experiment
from .spectral import exact_eigenvalues, mode_matrix, taylor_eigenvalues

log = logging.getLogger("tpdl")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

DEFAULTS = {
    "closure": ExperimentConfig("closure"),
    "spectrum": ExperimentConfig("spectrum"),
    "linear-decay": ExperimentConfig(
        "linear-decay", generator="gaussian", backend="linear-radial", ells=(0, 1, 2, 3),
        ps=(2.0, math.inf), times=tuple(np.geomspace(1.0, 1e4, 48)), window=(100.0, 1e4),
        tolerance=0.05),
    "lower-bound": ExperimentConfig(
        "lower-bound", generator="lower-bound", backend="linear-radial", ells=(0,),
        groups=("min",), times=tuple(np.geomspace(1.0, 1e4, 60)), window=(200.0, 1e4),
        tolerance=0.05),
    "nonlinear-decay": ExperimentConfig(
        "nonlinear-decay", generator="generic", backend="nonlinear", ells=(0, 1),
        times=tuple(np.linspace(0.0, 50.0, 51)), window=(10.0, 50.0), tolerance=0.15,
        points_per_axis=64, box_length=32 * math.pi, dt=0.5, delta0=1e-3),
}
SPECTRUM_COLUMNS = ("r",) + tuple(f"{p}{i}_{c}" for p in ("exact", "taylor") for i in range(4)
                                  for c in ("re", "im")) + tuple(f"err{i}" for i in range(4)) + ("max_err",)


def _closure(cfg, cli, outdir):
    eq = build_equilibrium(cfg.params)
    row = {**{f"param_{k}": v for k, v in asdict(cfg.params).items()}, **eq.as_row()}
    io.write_csv(os.path.join(outdir, "closure.csv"), list(row), [row], cfg.hash())
    for k, v in eq.as_row().items():
        print(f"{k} = {v:.12g}")
    return EXIT_OK if eq.beta_gap > 0 else EXIT_FAIL


def _spectrum(cfg, cli, outdir):
    eq = build_equilibrium(cfg.params)
    n = int(cli.get("samples", 200))
    if n < 2:
        raise ConfigError("samples must be at least 2")
    r_min, r_max = cli.get("r_min", 1e-3), cli.get("r_max", 10.0)
    if not 0 < r_min < r_max:
        raise ConfigError("need 0 < r_min < r_max")
    r = np.geomspace(r_min, r_max, n)
    ex = exact_eigenvalues(mode_matrix(eq, r))
    ta = taylor_eigenvalues(eq, r)
    err = np.abs(ex - ta)
    rows = []
    for i in range(n):
        row = [r[i]]
        for lam in (ex[i], ta[i]):
            for z in lam:
                row += [z.real, z.imag]
        row += list(err[i]) + [err[i].max()]
        rows.append(row)
    io.write_csv(os.path.join(outdir, "spectrum.csv"), SPECTRUM_COLUMNS, rows, cfg.hash())
    print(f"wrote {n} spectrum rows")
    return EXIT_OK


def _experiment(cfg, cli, outdir):
    on_sample = None
    if cli.get("snapshots"):
        def on_sample(state):
            io.write_snapshot(os.path.join(outdir, f"{cfg.experiment_id}_t{state.time:010.4f}.snap"),
                              state, cfg.hash())
    report = run_experiment(cfg, on_sample=on_sample)
    report.write(outdir)
    sys.stdout.write(report.summary())
    if report.error:
        return EXIT_ERROR
    return EXIT_OK if report.passed else EXIT_FAIL


def _report(cfg, cli, outdir):
    rows, hashes = [], []
    for path in sorted(glob.glob(os.path.join(outdir, "*_report.csv"))):
        if os.path.basename(path) == "all_report.csv":
            continue
        h, part = io.read_csv(path)
        hashes.append(h)
        rows += part
    if not rows:
        raise ConfigError(f"no *_report.csv files in {outdir}")
    chash = io.config_hash({str(i): h for i, h in enumerate(hashes)})
    io.write_csv(os.path.join(outdir, "all_report.csv"), REPORT_COLUMNS, rows, chash)
    fails = [r for r in rows if r["verdict"] != "pass"]
    lines = [f"{len(rows) - len(fails)}/{len(rows)} verdicts pass"]
    for r in fails + [r for r in rows if r["verdict"] == "pass"]:
        lines.append(f"  {r['verdict'].upper():4s} {r['experiment_id']} {r['field_group']} "
                     f"{r['norm_kind']}[{r['ell_or_p']}] exponent {float(r['exponent']):+.4f} "
                     f"target {float(r['target']):+.4f}")
    text = "\n".join(lines) + "\n"
    io.atomic_write_text(os.path.join(outdir, "all_summary.txt"), text)
    sys.stdout.write(text)
    return EXIT_FAIL if fails else EXIT_OK


COMMANDS = {"closure": _closure, "spectrum": _spectrum, "linear-decay": _experiment,
            "nonlinear-decay": _experiment, "lower-bound": _experiment, "report": _report}


def build_parser():
    ap = argparse.ArgumentParser(prog="tpdl", description="two-phase decay laboratory")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("--out", default="tpdl_out", help="output directory (default: tpdl_out)")
    ap.add_argument("--seed", type=int, help="random seed for generated data")
    ap.add_argument("--samples", type=int, help="number of spectrum rows")
    ap.add_argument("--r-min", type=float, help="smallest wavenumber of the spectrum table")
    ap.add_argument("--r-max", type=float, help="largest wavenumber of the spectrum table")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, cli = load(DEFAULTS.get(args.command, DEFAULTS["closure"]), args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        for key in ("samples", "r_min", "r_max"):
            if getattr(args, key) is not None:
                cli[key] = getattr(args, key)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, cli, args.out)
    except (ConfigError, ClosureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    labrisk print-config
    labrisk synth    [--out DIR]
    labrisk curate   [--data DIR] [--out PATH]
    labrisk sweep    [--curated PATH]
    labrisk evaluate [PIPELINE_ID] [--run DIR] [--force]
    labrisk explain  [PIPELINE_ID] [--run DIR] [--force]

Exit codes: 0 success, 1 pipeline failure, 2 usage/config/input error.
"""

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .cohort import (CohortError, CurationLog, cohort_manifest, ingest_csv, read_curated,
                     synthesize_cohort, write_cohort, write_curated)
from .config import ConfigError, RunConfig
from .evaluate import write_curve_csv
from .explain import (background_sample, explain_model, write_attributions_csv,
                      write_beeswarm_csv, write_global_csv)
from .models import model_from_json
from .seeding import derive_seed
from .sweep import (Workspace, cell_from_row, cohort_matrix, final_evaluate, read_leaderboard,
                    run_benchmark, write_leaderboard)

logger = logging.getLogger("labrisk")

SOURCE_FILES = ("visits", "demographics", "endpoint", "condition")


class UsageError(Exception):
    """Bad input from the user: exit code 2."""


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {("run", "seed"): args.seed, ("run", "jobs"): args.jobs,
                 ("grid", "models"): args.models, ("grid", "balancers"): args.balancers,
                 ("grid", "features"): args.features}
    for (section, key), value in overrides.items():
        if value is not None:
            cfg.set(section, key, value)
    return cfg.resolved()


# -- commands -------------------------------------------------------------------------------

def cmd_print_config(cfg, args):
    sys.stdout.write(cfg.dumps())
    return 0


def cmd_synth(cfg, args):
    out = args.out or cfg.get("paths", "data_dir")
    cohort = synthesize_cohort(cfg.synth_config())
    paths = write_cohort(cohort, out)
    dx = cohort.diagnoses.copy()
    dx["diagnosis_date"] = dx["diagnosis_date"].dt.strftime("%Y-%m-%d")
    dx.to_csv(os.path.join(out, "diagnoses.csv"), index=False)
    manifest = cohort_manifest(cohort)
    manifest["seed"] = cfg.seed
    manifest["files"] = sorted(os.path.basename(p) for p in paths.values()) + ["diagnoses.csv"]
    _write_json(os.path.join(out, "manifest.json"), manifest)
    with open(os.path.join(out, "synth_config.ini"), "w") as fh:
        fh.write(cfg.dumps())
    print(f"wrote {manifest['n_subjects']} subjects, {manifest['n_visits']} visits, "
          f"{manifest['n_positive_visits']} positive to {out}")
    return 0


def cmd_curate(cfg, args):
    data = args.data or cfg.get("paths", "data_dir")
    paths = [os.path.join(data, f"{k}.csv") for k in SOURCE_FILES]
    for p in paths:
        if not os.path.isfile(p):
            raise UsageError(f"input file not found: {p}")
    out = args.out or cfg.get("paths", "curated")
    log = CurationLog()
    try:
        cohort = ingest_csv(*paths, log=log)
    except CohortError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    write_curated(cohort, out)
    report = log.to_dict()
    report["summary"] = cohort_manifest(cohort)
    report["inputs"] = {os.path.basename(p): _sha256(p) for p in paths}
    _write_json(os.path.splitext(out)[0] + "_log.json", report)
    s = report["summary"]
    print(f"curated {s['n_visits']} visits; positive visits {s['n_positive_visits']} "
          f"({s['positive_fraction']:.4f}); {len(log.warnings)} warning(s) -> {out}")
    return 0


def _load_matrix(path):
    if not os.path.isfile(path):
        raise UsageError(f"curated file not found: {path}")
    try:
        return cohort_matrix(read_curated(path))
    except CohortError as exc:
        raise UsageError(str(exc)) from None


def new_run_dir(runs_dir, seed):
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = os.path.join(runs_dir, f"{stamp}-{seed}")
    path, n = base, 1
    while os.path.exists(path):
        n += 1
        path = f"{base}.{n}"
    os.makedirs(path)
    return path


def cmd_sweep(cfg, args):
    curated = args.curated or cfg.get("paths", "curated")
    matrix = _load_matrix(curated)
    sweep_cfg = cfg.sweep_config()
    run = new_run_dir(cfg.get("paths", "runs_dir"), cfg.seed)
    with open(os.path.join(run, "config.ini"), "w") as fh:
        fh.write(cfg.dumps())
    t0 = time.time()

    def progress(done, total):
        logger.info("cell %d/%d", done, total)

    rows = run_benchmark(matrix, sweep_cfg, progress=progress)
    write_leaderboard(rows, run)
    failed = sum(r.status != "ok" for r in rows)
    _write_json(os.path.join(run, "manifest.json"), {
        "created": _dt.datetime.now().isoformat(timespec="seconds"),
        "elapsed_seconds": round(time.time() - t0, 1),
        "version": __version__,
        "curated": os.path.abspath(curated),
        "curated_sha256": _sha256(curated),
        "n_cells": len(rows),
        "n_failed": failed,
        "best": rows[0].pipeline_id if rows and rows[0].status == "ok" else None,
    })
    print(f"{len(rows)} cells ({failed} failed) -> {run}")
    if rows and rows[0].status == "ok":
        print(f"best: {rows[0].pipeline_id} val MCC {rows[0].val_mcc:.4f}")
    return 0


def _resolve_run(cfg, args):
    if args.run:
        run = args.run
    else:
        runs_dir = cfg.get("paths", "runs_dir")
        cands = sorted(d for d in os.listdir(runs_dir)) if os.path.isdir(runs_dir) else []
        cands = [d for d in cands if os.path.isfile(os.path.join(runs_dir, d, "leaderboard.json"))]
        if not cands:
            raise UsageError(f"no sweep run found under {runs_dir}; pass --run")
        run = os.path.join(runs_dir, cands[-1])
    if not os.path.isfile(os.path.join(run, "leaderboard.json")):
        raise UsageError(f"{run} is not a sweep run directory")
    return run


def _run_context(cfg, args):
    """Run directory, its recorded config (jobs from the command line), the
    chosen leaderboard row and a rebuilt workspace."""
    run = _resolve_run(cfg, args)
    run_cfg = RunConfig.from_file(os.path.join(run, "config.ini"))
    run_cfg.set("run", "jobs", cfg.get("run", "jobs"))
    with open(os.path.join(run, "manifest.json")) as fh:
        manifest = json.load(fh)
    rows = read_leaderboard(run)
    pid = args.pipeline_id
    if pid in (None, "best"):
        row = rows[0] if rows and rows[0].status == "ok" else None
        if row is None:
            raise UsageError("leaderboard has no successful cell")
    else:
        match = [r for r in rows if r.pipeline_id == pid]
        if not match:
            raise UsageError(f"unknown pipeline id {pid!r}")
        row = match[0]
        if row.status != "ok":
            raise UsageError(f"pipeline {pid} failed during the sweep: {row.error}")
    curated = manifest["curated"]
    if not os.path.isfile(curated):
        raise UsageError(f"curated file used by the sweep is missing: {curated}")
    if _sha256(curated) != manifest["curated_sha256"]:
        raise UsageError(f"{curated} changed since the sweep")
    sweep_cfg = run_cfg.sweep_config()
    ws = Workspace(_load_matrix(curated), sweep_cfg)
    return run, run_cfg, row, cell_from_row(row, sweep_cfg), ws


def cmd_evaluate(cfg, args):
    run, run_cfg, row, cell, ws = _run_context(cfg, args)
    out = os.path.join(run, "evaluate", cell.pipeline_id)
    if os.path.exists(os.path.join(out, "report.json")) and not args.force:
        raise UsageError(f"{out} already holds a test evaluation; pass --force to redo it")
    os.makedirs(out, exist_ok=True)
    report, art = final_evaluate(ws, cell)
    report.extra.pop("kernel_backend", None)  # host detail, kept out of the replayable report
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    write_curve_csv(report.roc, os.path.join(out, "roc.csv"), "fpr", "tpr")
    write_curve_csv(report.pr, os.path.join(out, "pr.csv"), "recall", "precision")
    with open(os.path.join(out, "model.json"), "w") as fh:
        fh.write(art.model.to_json() + "\n")
    print(f"{cell.pipeline_id}: test AUC {report.auc:.4f} "
          f"[{report.auc_ci_low:.4f}, {report.auc_ci_high:.4f}], MCC {report.mcc:.4f} -> {out}")
    return 0


def cmd_explain(cfg, args):
    run, run_cfg, row, cell, ws = _run_context(cfg, args)
    ev = os.path.join(run, "evaluate", cell.pipeline_id)
    model_path = os.path.join(ev, "model.json")
    if not os.path.isfile(model_path):
        raise UsageError(f"no fitted model for {cell.pipeline_id}; run `labrisk evaluate` first")
    out = os.path.join(run, "explain", cell.pipeline_id)
    if os.path.exists(os.path.join(out, "global.csv")) and not args.force:
        raise UsageError(f"{out} already exists; pass --force to overwrite")
    with open(model_path) as fh:
        model = model_from_json(fh.read())
    with open(os.path.join(ev, "report.json")) as fh:
        features = json.load(fh)["selected_features"]
    settings = run_cfg.explain_settings()
    seed = run_cfg.seed
    _, m_fit = ws.prepared("tv")
    bg = background_sample(m_fit.select(features).values, settings["background_size"],
                           derive_seed(seed, 9))
    test = ws.test_idx
    if len(test) > settings["max_rows"]:
        pick = np.random.default_rng(derive_seed(seed, 10)).choice(
            len(test), settings["max_rows"], replace=False)
        test = test[np.sort(pick)]
    X = ws.transformed("tv", test).select(features).values
    e = explain_model(model, X, bg, settings["n_permutations"], derive_seed(seed, 11), features)
    os.makedirs(out, exist_ok=True)
    write_global_csv(e, os.path.join(out, "global.csv"))
    write_attributions_csv(e, os.path.join(out, "attributions.csv"))
    write_beeswarm_csv(e, X, os.path.join(out, "beeswarm.csv"))
    _write_json(os.path.join(out, "explain.json"), {
        "pipeline_id": cell.pipeline_id,
        "method": e.method,
        "space": "margin (log-odds)",
        "explained_split": "test",
        "explained_rows": int(len(test)),
        "background": f"{len(bg)}-row seeded subsample of the train+val fit set",
        "base_value": e.base_value,
        "max_local_accuracy_error": float(e.local_accuracy_error().max()) if len(X) else 0.0,
        "ranking": e.ranking,
        **e.meta,
    })
    print(f"{cell.pipeline_id}: top feature {e.ranking[0]} -> {out}")
    return 0


COMMANDS = {
    "print-config": cmd_print_config,
    "synth": cmd_synth,
    "curate": cmd_curate,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults: labrisk print-config)")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes for the sweep")
    common.add_argument("--models", help="comma-separated model roles or 'all'")
    common.add_argument("--balancers", help="comma-separated balancer slots or 'all'")
    common.add_argument("--features", help="comma-separated feature routes or 'all'")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="labrisk", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"labrisk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("print-config", parents=[common], help="print the resolved config")
    s = sub.add_parser("synth", parents=[common], help="write a synthetic raw cohort")
    s.add_argument("--out", help="output directory (default paths.data_dir)")
    c = sub.add_parser("curate", parents=[common], help="raw tables -> curated visit table")
    c.add_argument("--data", help="directory with the raw CSVs (default paths.data_dir)")
    c.add_argument("--out", help="curated CSV path (default paths.curated)")
    w = sub.add_parser("sweep", parents=[common], help="run the benchmark grid")
    w.add_argument("--curated", help="curated CSV (default paths.curated)")
    for name, text in (("evaluate", "refit a pipeline and score the test split once"),
                       ("explain", "Shapley attributions for an evaluated pipeline")):
        e = sub.add_parser(name, parents=[common], help=text)
        e.add_argument("pipeline_id", nargs="?", default="best")
        e.add_argument("--run", help="sweep run directory (default: latest under paths.runs_dir)")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logger.debug("pipeline failure", exc_info=True)
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

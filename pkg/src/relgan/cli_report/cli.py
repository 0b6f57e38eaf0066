"""``relgan`` command-line entry point.

Commands: ``train2d``, ``dirac``, ``gradcheck``, ``report`` and ``replay``.
Every command writes ``manifest.json`` into ``--out`` before computing, and
``replay`` reruns a manifest into a fresh directory.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..dirac_lab import classify_convergence, dirac_simulate, trailing_window
from ..errors import ArtifactIOError, ConfigError, DivergenceError, NumericError, RelganError
from ..grad_core.suite import TOLERANCE, run_suite
from ..synth2d import dataset_spec, sample_dataset
from ..trainer import train
from .artifacts import (
    RunManifest,
    ScatterLayer,
    csv_column,
    emit_csv,
    emit_svg_scatter,
    read_csv,
    symmetric_bounds,
)
from .config import DiracConfig, config_from_mapping, parse_config, with_overrides

log = logging.getLogger("relgan")

MANIFEST = "manifest.json"
REAL_SAMPLES = 2000
REPORT_FIELDS = ["iter", "loss_d", "loss_g", "modes", "hq", "gap"]


def _points(path):
    rows = read_csv(path)
    return np.column_stack([csv_column(rows, "x"), csv_column(rows, "y")]).reshape(-1, 2)


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc


def _write_json(path, obj):
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
    return path


def _prepare_out(out):
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactIOError(out, exc.strerror or str(exc)) from exc
    return out


def _resolve_config(command, args):
    """Config file (or defaults) with --seed / --loss applied on top."""
    if args.config:
        cfg = parse_config(_read_text(args.config), command)
    else:
        cfg = config_from_mapping(command, {})
    overrides = {"seed": args.seed}
    if args.loss is not None:
        if command == "dirac":
            overrides["losses"] = [t.strip() for t in args.loss.split(",") if t.strip()]
        else:
            overrides["loss"] = args.loss
    return with_overrides(cfg, **overrides)


def _manifest(command, config_dict, seed, outputs, options=None):
    return RunManifest(
        command=command,
        config=config_dict,
        seed=seed,
        started_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        tool_version=__version__,
        outputs=outputs,
        options=options or {},
    )


# -- train2d ----------------------------------------------------------------

def run_train2d(config, out):
    out = _prepare_out(out)
    outputs = {"report": "report.csv", "summary": "summary.json", "samples": "samples.csv",
               "real": "real.csv", "scatter": "scatter.svg"}
    if dataset_spec(config.dataset) is not None:
        outputs["mode_coverage"] = "mode_coverage.csv"
    _manifest("train2d", config.to_dict(), config.seed, outputs).write(out / MANIFEST)

    report = train(config, out_dir=out)
    emit_csv(report.csv_rows(), out / outputs["report"], fieldnames=REPORT_FIELDS)
    if report.final_coverage is not None:
        emit_csv(report.final_coverage.rows(), out / outputs["mode_coverage"],
                 fieldnames=["mode_id", "count", "hq_count"])
    samples = report.final_samples
    emit_csv(({"x": float(x), "y": float(y)} for x, y in samples), out / outputs["samples"],
             fieldnames=["x", "y"])
    # reference sample from a stream independent of training
    real = sample_dataset(config.dataset, REAL_SAMPLES, np.random.default_rng([config.seed, 2]))
    emit_csv(({"x": float(x), "y": float(y)} for x, y in real), out / outputs["real"],
             fieldnames=["x", "y"])
    _render_train2d(out, outputs, config.dataset)

    final = report.final
    summary = {
        "dataset": config.dataset,
        "loss": config.loss,
        "seed": config.seed,
        "iterations": config.iterations,
        "final": final,
        "assumption1_fraction": report.assumption1_fraction,
        "buffer_max_age": report.buffer_max_age,
        "checkpoint": report.checkpoint,
        "wall_time_s": report.wall_time,
    }
    _write_json(out / outputs["summary"], summary)
    return summary


def _render_train2d(out, outputs, dataset):
    real = _points(out / outputs["real"])
    gen = _points(out / outputs["samples"])
    bounds = symmetric_bounds(real, minimum=2.5)
    layers = [ScatterLayer("real", real, "#1f77b4", 1.5, 0.5),
              ScatterLayer("generated", gen, "#d62728", 1.2, 0.35)]
    emit_svg_scatter(layers, bounds, out / outputs["scatter"], title=f"{dataset}: real vs generated")


# -- dirac ------------------------------------------------------------------

def _dirac_rng(config):
    return np.random.default_rng(config.seed) if config.disc_init == "random" else None


def run_dirac(config, out):
    out = _prepare_out(out)
    outputs = {f"trajectory_{tag}": f"trajectory_{tag}.csv" for tag in config.losses}
    outputs.update({"summary": "dirac_summary.csv", "phase": "dirac_phase.svg"})
    _manifest("dirac", config.to_dict(), config.seed, outputs).write(out / MANIFEST)

    rows = []
    for tag in config.losses:
        try:
            traj = dirac_simulate(config.init, tag, config.steps, config.h, rng=_dirac_rng(config))
        except DivergenceError as exc:
            log.warning("%s diverged at step %d", tag, exc.step)
            traj = exc.trajectory
        emit_csv(traj.rows(), out / outputs[f"trajectory_{tag}"],
                 fieldnames=["step", "theta_x", "theta_y", "norm"])
        window = trailing_window(traj, config.window_frac)
        status = classify_convergence(traj, config.tol, config.window_frac)
        if len(traj.states) < config.steps + 1:
            status = "diverged"
        rows.append({
            "loss": tag,
            "classification": status,
            "steps_completed": len(traj.states) - 1,
            "final_norm": float(traj.norms[-1]),
            "trailing_min": float(window.min()),
            "trailing_max": float(window.max()),
        })
        log.info("dirac %s: %s (final |theta| %.4g)", tag, status, rows[-1]["final_norm"])
    emit_csv(rows, out / outputs["summary"])
    _render_dirac(out, outputs, config.losses)
    return rows


def _render_dirac(out, outputs, losses):
    layers = []
    for tag in losses:
        rows = read_csv(out / outputs[f"trajectory_{tag}"])
        layers.append(ScatterLayer(tag, np.column_stack([csv_column(rows, "theta_x"),
                                                         csv_column(rows, "theta_y")]),
                                   radius=0.8, opacity=0.7))
    bounds = symmetric_bounds(*(layer.points for layer in layers), minimum=0.3)
    layers.append(ScatterLayer("real (origin)", np.zeros((1, 2)), "#000000", 3.0, 1.0))
    emit_svg_scatter(layers, bounds, out / outputs["phase"], title="Dirac generator trajectories")


# -- gradcheck --------------------------------------------------------------

def run_gradcheck(seed, out):
    out = _prepare_out(out)
    outputs = {"gradcheck": "gradcheck.csv"}
    _manifest("gradcheck", {"eps": 1e-5, "tolerance": TOLERANCE}, seed, outputs).write(out / MANIFEST)
    rows = run_suite(seed=seed)
    emit_csv(rows, out / outputs["gradcheck"])
    failed = [r["name"] for r in rows if not r["passed"]]
    if failed:
        raise NumericError(f"gradient check failed for: {', '.join(failed)}")
    return rows


# -- report / replay --------------------------------------------------------

def run_report(out):
    out = Path(out)
    manifest = RunManifest.read(out / MANIFEST)
    if manifest.command == "train2d":
        _render_train2d(out, manifest.outputs, manifest.config["dataset"])
    elif manifest.command == "dirac":
        _render_dirac(out, manifest.outputs, manifest.config["losses"])
    else:
        raise ConfigError(f"report: nothing to render for command {manifest.command!r}")
    return manifest


def run_manifest(manifest, out):
    """Re-execute a manifest's command with its recorded config into ``out``."""
    if manifest.command == "train2d":
        return run_train2d(config_from_mapping("train2d", manifest.config), out)
    if manifest.command == "dirac":
        return run_dirac(DiracConfig(**manifest.config), out)
    if manifest.command == "gradcheck":
        return run_gradcheck(manifest.seed, out)
    raise ConfigError(f"replay: unsupported command {manifest.command!r}")


# -- entry point ------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="relgan", description="Relation-discriminator GAN lab.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, loss_help=None):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")
        if loss_help:
            p.add_argument("--loss", help=loss_help)

    common(sub.add_parser("train2d", help="train on a 2-D toy dataset"), "loss tag override")
    common(sub.add_parser("dirac", help="simulate Dirac-GAN dynamics"),
           "comma-separated loss tags")
    g = sub.add_parser("gradcheck", help="finite-difference check of every primitive")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    r = sub.add_parser("report", help="re-render SVGs from the CSVs in a run directory")
    r.add_argument("--out", required=True, help="run directory holding manifest.json")
    p = sub.add_parser("replay", help="rerun a manifest into a new directory")
    p.add_argument("manifest", help="path to manifest.json")
    p.add_argument("--out", required=True)
    return parser


def _dispatch(args):
    if args.command == "train2d":
        cfg = _resolve_config("train2d", args)
        summary = run_train2d(cfg, args.out)
        print(json.dumps(summary["final"], sort_keys=True))
    elif args.command == "dirac":
        cfg = _resolve_config("dirac", args)
        for row in run_dirac(cfg, args.out):
            print(f"{row['loss']}: {row['classification']} (final |theta| {row['final_norm']:.6g})")
    elif args.command == "gradcheck":
        rows = run_gradcheck(args.seed, args.out)
        worst = max(r["max_rel_error"] for r in rows)
        print(f"{len(rows)} checks passed, max relative error {worst:.3g}")
    elif args.command == "report":
        run_report(args.out)
    elif args.command == "replay":
        run_manifest(RunManifest.read(args.manifest), args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except RelganError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

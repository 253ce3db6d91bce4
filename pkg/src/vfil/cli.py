"""Command-line pipeline: gen-demos, train, rollout, eval, plot.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Set VFIL_LOG to a
logging level name (DEBUG, INFO, ...) for verbosity.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from . import evaluate, io, teach
from .core import seed_stream
from .infer import RolloutConfig, rollout
from .policy import policy_init, train

log = logging.getLogger("vfil")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path: str) -> cfgmod.RunConfig:
    if path is None:
        return cfgmod.RunConfig()
    return cfgmod.load_config(path)


def cmd_gen_demos(args) -> int:
    cfg = _load_config(args.config)
    setup = cfg.teach_setup()
    demos, manifest = teach.collect_dataset(
        setup, cfg.teach.frequencies_hz, cfg.teach.heights_m,
        cfg.teach.repeats, cfg.seed)
    out = Path(args.out or Path(cfg.output_root) / "demos")
    io.save_dataset(out, demos, manifest)
    print(f"wrote {len(demos)} demonstrations to {out}")
    print("frequency histogram:", json.dumps(manifest["frequency_histogram"]))
    return 0


def cmd_train(args) -> int:
    if args.vfil == args.baseline:
        raise UsageError("exactly one of --vfil or --baseline is required")
    cfg = _load_config(args.config)
    from .core import build_training_set

    demos_meta, _ = io.load_dataset(args.demos)
    demos = [d for d, _ in demos_meta]
    variable_rate = bool(args.vfil)
    sequences, stats, manifest = build_training_set(
        demos, cfg.normalization, variable_rate)
    out_model = Path(args.out)
    set_dir = out_model.parent / (out_model.stem + "_train_set")
    io.save_training_set(set_dir, sequences, manifest)
    log.info("built %d sequences (variable_rate=%s)", len(sequences), variable_rate)

    arch = cfg.policy_arch(dof=demos[0].dof)
    params = policy_init(arch, cfg.seed, stats)
    params, history = train(params, sequences, cfg.train_config())
    pipeline = "variable-rate" if variable_rate else "fixed-rate"
    rates = {
        "base_frequency_hz": cfg.normalization.base_frequency,
        "model_rate_hz": cfg.normalization.model_rate,
        "control_rate_hz": cfg.normalization.control_rate,
    }
    train_meta = {
        "config": dataclasses.asdict(cfg.training),
        "seed": cfg.seed,
        "initial_val_loss": history["initial_val_loss"],
        "final_val_loss": history["val_loss"][-1] if history["val_loss"] else None,
    }
    io.save_model(out_model, params, pipeline, rates, train_meta)
    io.save_loss_curve(out_model.with_suffix(".loss.csv"), history)
    print(f"wrote model {out_model} (pipeline={pipeline})")
    print(f"validation loss: {train_meta['initial_val_loss']:.6g} -> "
          f"{train_meta['final_val_loss']:.6g}")
    return 0


def cmd_rollout(args) -> int:
    if args.freq <= 0:
        raise UsageError(f"--freq must be positive, got {args.freq}")
    cfg = _load_config(args.config)
    params, header = io.load_model(args.model)
    rates = header["rates"]
    if abs(rates["control_rate_hz"] - cfg.normalization.control_rate) > 1e-9 or \
            abs(rates["model_rate_hz"] - cfg.normalization.model_rate) > 1e-9:
        print(f"error: model rates {rates} do not match the config", file=sys.stderr)
        return 2
    variable_rate = header["pipeline"] == "variable-rate"
    rcfg = RolloutConfig(
        frequency=args.freq, surface_height=args.height, seed=args.seed,
        duration=cfg.script.total_duration_s,
        scheduler_mode=args.mode or cfg.scheduler_mode,
        variable_rate=variable_rate, home=cfg.home_xz(),
        theta_jitter=cfg.benchmark.theta_jitter_rad)
    tlog = rollout(rcfg, params, cfg.plant, cfg.controller_gains(),
                   cfg.normalization)
    out = Path(args.out or Path(cfg.output_root) / "rollouts")
    name = f"rollout_f{args.freq:g}_h{args.height:g}_s{args.seed}"
    io.save_trajectory_log(out, name, tlog)
    success, loss_time = evaluate.detect_success(tlog)
    try:
        freq = evaluate.estimate_frequency(tlog)
        freq_text = f"{freq:.4f} Hz"
    except Exception:
        freq_text = "unmeasurable"
    periods = tlog.step_periods()
    mean_period = periods.mean() if len(periods) else float("nan")
    print(f"success: {success}" + ("" if success else f" (contact lost at {loss_time:.3f} s)"))
    print(f"measured frequency: {freq_text}")
    print(f"mean model step period: {mean_period * 1e3:.3f} ms over "
          f"{int(tlog.model_step.sum())} steps")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    vfil_params, vfil_header = io.load_model(args.vfil_model)
    base_params, base_header = io.load_model(args.baseline_model)
    models = {
        "vfil": (vfil_params, vfil_header["pipeline"] == "variable-rate"),
        "baseline": (base_params, base_header["pipeline"] == "variable-rate"),
    }
    trials = args.trials or cfg.benchmark.trials_per_cell
    report = evaluate.run_benchmark(
        models, cfg.benchmark.labels_hz, cfg.benchmark.heights_m, trials,
        cfg.seed, cfg.plant, cfg.controller_gains(), cfg.normalization,
        scheduler_mode=cfg.scheduler_mode, duration=cfg.script.total_duration_s,
        home=cfg.home_xz(), theta_jitter=cfg.benchmark.theta_jitter_rad,
        jobs=args.jobs or cfg.jobs)
    out = Path(args.out or Path(cfg.output_root) / "report")
    summary = evaluate.emit_report(report, out)
    print(f"wrote report to {out}")
    for method, tot in summary["totals"].items():
        print(f"  {method}: {tot['formatted']}")
    if "success_rate_delta_pct" in summary:
        print(f"  vfil - baseline: {summary['success_rate_delta_pct']:+.1f} points")
    return 0


def cmd_plot(args) -> int:
    report_dir = Path(args.report)
    scatter = report_dir / "scatter.csv"
    if not scatter.exists():
        print(f"error: no scatter.csv under {report_dir}", file=sys.stderr)
        return 2
    out = Path(args.out or report_dir / "plots")
    out.mkdir(parents=True, exist_ok=True)
    rows = scatter.read_text().strip().splitlines()[1:]
    by_method: dict[str, list[tuple[float, float]]] = {}
    labels: set[float] = set()
    for row in rows:
        method, lab, actual, _h = row.split(",")
        by_method.setdefault(method, []).append((float(lab), float(actual)))
        labels.add(float(lab))
    lo, hi = (0.0, 1.5) if not labels else (0.0, max(labels) * 1.1)
    ident = out / "identity.dat"
    ident.write_text(f"{lo} {lo}\n{hi} {hi}\n")
    for method, pts in by_method.items():
        body = "\n".join(f"{lab} {actual}" for lab, actual in pts)
        (out / f"scatter_{method}.dat").write_text(body + "\n")
    print(f"wrote plot data to {out} (gnuplot: plot 'identity.dat' w l, "
          f"'scatter_vfil.dat' w p)")
    if args.svg:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot([lo, hi], [lo, hi], "k--", lw=1, label="ideal")
        for method, pts in by_method.items():
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            ax.plot(xs, ys, "o", ms=4, alpha=0.7, label=method)
        ax.set_xlabel("frequency label (Hz)")
        ax.set_ylabel("actual frequency (Hz)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "scatter.svg")
        print(f"wrote {out / 'scatter.svg'}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="vfil", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demos", help="record the teaching grid")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--out", help="output directory (default <root>/demos)")
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("train", help="build a training set and fit a policy")
    p.add_argument("--config")
    p.add_argument("--demos", required=True, help="demonstration directory")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--vfil", action="store_true",
                   help="variable-rate pipeline (time normalization on)")
    p.add_argument("--baseline", action="store_true",
                   help="fixed-rate pipeline (no normalization)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rollout", help="run one closed-loop trial")
    p.add_argument("--config")
    p.add_argument("--model", required=True)
    p.add_argument("--freq", type=float, required=True, help="frequency label (Hz)")
    p.add_argument("--height", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["single-carry", "exact-carry"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="run the benchmark grid for two models")
    p.add_argument("--config")
    p.add_argument("--vfil-model", required=True)
    p.add_argument("--baseline-model", required=True)
    p.add_argument("--trials", type=int, help="trials per cell override")
    p.add_argument("--jobs", type=int, help="parallel rollout workers")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="emit scatter plot data from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.add_argument("--svg", action="store_true", help="also render an SVG")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("VFIL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

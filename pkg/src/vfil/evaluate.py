"""Trial scoring and the benchmark harness.

A trial succeeds when the end effector keeps pushing on the surface at every
control tick after the pressing phase.  The wiping frequency actually
achieved is measured by counting direction reversals of the end-effector
tangential position (robust down to a handful of cycles), cross-checked
against the periodogram peak.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as _signal

from .control import ControllerGains
from .core import InsufficientMotion, NormalizationConfig, seed_stream
from .infer import RolloutConfig, TrajectoryLog, rollout
from .plant import PlantParams
from .policy import PolicyParams

CONTACT_EPSILON_N = 0.1
SUSTAIN_WINDOW_S = 0.3
WIPE_SETTLE_S = 2.0


def press_phase_end(log: TrajectoryLog, contact_eps: float = CONTACT_EPSILON_N,
                    sustain: float = SUSTAIN_WINDOW_S,
                    deadline_fraction: float = 0.25) -> float | None:
    """Start of the first window of `sustain` seconds of unbroken contact.

    Returns None when contact is not established before the deadline (a
    quarter of the trial), i.e. the press never succeeded.
    """
    rate = log.config["control_rate_hz"]
    win = max(1, int(round(sustain * rate)))
    in_contact = log.normal_force > contact_eps
    if len(in_contact) < win:
        return None
    held = np.lib.stride_tricks.sliding_window_view(in_contact, win).all(axis=1)
    if not held.any():
        return None
    idx = int(np.argmax(held))
    if log.time[idx] > log.time[-1] * deadline_fraction:
        return None
    return float(log.time[idx])


def detect_success(log: TrajectoryLog, contact_eps: float = CONTACT_EPSILON_N
                   ) -> tuple[bool, float | None]:
    """Success iff contact force stays above the threshold at every tick
    after the pressing phase; returns the first loss time otherwise.

    Losing and later recovering contact still counts as a failure.
    """
    if len(log.time) < 2:
        raise ValueError("trajectory log is truncated")
    press_end = press_phase_end(log, contact_eps)
    if press_end is None:
        deadline = log.time[int(len(log.time) * 0.25)]
        return False, float(deadline)
    after = log.time >= press_end
    below = after & (log.normal_force <= contact_eps)
    if below.any():
        return False, float(log.time[np.argmax(below)])
    return True, None


def _ee_tangential(log: TrajectoryLog) -> np.ndarray:
    l1, l2 = log.config["link_lengths_m"]
    t1 = log.samples[:, 3 * log.dof]
    t2 = log.samples[:, 3 * log.dof + 1]
    return l1 * np.cos(t1) + l2 * np.cos(t1 + t2)


def reversal_times(x: np.ndarray, t: np.ndarray, min_swing: float) -> np.ndarray:
    """Times of direction reversals with an amplitude hysteresis gate.

    A reversal is only registered once the signal has moved at least
    min_swing away from the previous extremum, which makes the count immune
    to small ripples while the command is held between model steps.
    """
    if len(x) < 3:
        return np.empty(0)
    times: list[float] = []
    direction = 0
    ext_val, ext_time = x[0], t[0]
    for k in range(1, len(x)):
        if direction == 0:
            if x[k] - x[0] > min_swing:
                direction = 1
                ext_val, ext_time = x[k], t[k]
            elif x[0] - x[k] > min_swing:
                direction = -1
                ext_val, ext_time = x[k], t[k]
        elif direction > 0:
            if x[k] > ext_val:
                ext_val, ext_time = x[k], t[k]
            elif ext_val - x[k] > min_swing:
                times.append(ext_time)
                direction = -1
                ext_val, ext_time = x[k], t[k]
        else:
            if x[k] < ext_val:
                ext_val, ext_time = x[k], t[k]
            elif x[k] - ext_val > min_swing:
                times.append(ext_time)
                direction = 1
                ext_val, ext_time = x[k], t[k]
    return np.asarray(times)


def estimate_frequency_reversals(x: np.ndarray, t: np.ndarray) -> float:
    """Dominant frequency from direction-reversal counting.

    Invariant to amplitude scaling and constant offsets; raises
    InsufficientMotion with fewer than two reversals.
    """
    x = np.asarray(x, dtype=float)
    swing = (x.max() - x.min()) / 2.0
    if swing <= 0:
        raise InsufficientMotion("signal has no swing")
    rev = reversal_times(x, np.asarray(t, dtype=float), 0.25 * swing)
    if len(rev) < 2:
        raise InsufficientMotion(f"only {len(rev)} direction reversals")
    half_cycles = len(rev) - 1
    return half_cycles / (2.0 * (rev[-1] - rev[0]))


def estimate_frequency_spectral(x: np.ndarray, rate: float) -> float:
    """Periodogram-peak frequency, used as a cross check."""
    x = np.asarray(x, dtype=float)
    freqs, power = _signal.periodogram(x - x.mean(), fs=rate)
    if len(power) < 2 or not power[1:].any():
        raise InsufficientMotion("flat spectrum")
    return float(freqs[1:][np.argmax(power[1:])])


def estimate_frequency(log: TrajectoryLog, contact_eps: float = CONTACT_EPSILON_N
                       ) -> float:
    """Achieved wiping frequency of a rollout.

    The window starts a settling margin after sustained contact; the value
    returned is the reversal-based estimate.
    """
    press_end = press_phase_end(log, contact_eps)
    if press_end is None:
        raise InsufficientMotion("no sustained contact, no wipe window")
    start = press_end + WIPE_SETTLE_S
    mask = log.time >= start
    if mask.sum() < 3:
        raise InsufficientMotion("wipe window too short")
    x = _ee_tangential(log)[mask]
    return estimate_frequency_reversals(x, log.time[mask])


@dataclass
class TrialResult:
    label: float
    height: float
    seed: int
    success: bool
    first_contact_loss_time: float | None
    actual_frequency: float | None
    mean_step_period: float | None
    error: str | None = None


@dataclass
class Report:
    """Success grid plus frequency scatter for each method."""

    labels: list[float]
    heights: list[float]
    trials_per_cell: int
    results: dict[str, list[TrialResult]] = field(default_factory=dict)

    def cell_counts(self, method: str) -> dict[tuple[float, float], tuple[int, int]]:
        counts: dict[tuple[float, float], tuple[int, int]] = {}
        for h in self.heights:
            for lab in self.labels:
                hits = [r for r in self.results.get(method, [])
                        if r.height == h and r.label == lab]
                counts[(lab, h)] = (sum(r.success for r in hits), len(hits))
        return counts

    def totals(self, method: str) -> tuple[int, int]:
        rs = self.results.get(method, [])
        return sum(r.success for r in rs), len(rs)

    def scatter(self, method: str) -> list[tuple[float, float, float]]:
        return [(r.label, r.actual_frequency, r.height)
                for r in self.results.get(method, [])
                if r.success and r.actual_frequency is not None]


def run_trial(params: PolicyParams, label: float, height: float, seed: int,
              plant: PlantParams, gains: ControllerGains,
              norm: NormalizationConfig, variable_rate: bool,
              scheduler_mode: str = "single-carry", duration: float = 40.0,
              home: tuple[float, float] = (0.32, 0.30),
              theta_jitter: float = 0.02) -> tuple[TrialResult, TrajectoryLog | None]:
    cfg = RolloutConfig(frequency=label, surface_height=height, duration=duration,
                        seed=seed, scheduler_mode=scheduler_mode,
                        variable_rate=variable_rate, home=home,
                        theta_jitter=theta_jitter)
    try:
        log = rollout(cfg, params, plant, gains, norm)
    except Exception as exc:  # hard failures score as failed trials
        return TrialResult(label, height, seed, False, 0.0, None, None,
                           error=f"{type(exc).__name__}: {exc}"), None
    success, loss_time = detect_success(log)
    try:
        freq = estimate_frequency(log)
    except InsufficientMotion:
        freq = None
    periods = log.step_periods()
    mean_period = float(periods.mean()) if len(periods) else None
    return TrialResult(label, height, seed, success, loss_time, freq,
                       mean_period), log


def run_benchmark(models: dict[str, tuple[PolicyParams, bool]],
                  labels, heights, trials_per_cell: int, seed: int,
                  plant: PlantParams, gains: ControllerGains,
                  norm: NormalizationConfig, scheduler_mode: str = "single-carry",
                  duration: float = 40.0, home: tuple[float, float] = (0.32, 0.30),
                  theta_jitter: float = 0.02, jobs: int = 1) -> Report:
    """Score every (method, label, height, trial) cell of the grid.

    models maps a method name to (params, variable_rate).  Trials are
    seeded from the global seed by grid position only, so both methods see
    the same initial conditions and reruns are identical.
    """
    report = Report(labels=list(labels), heights=list(heights),
                    trials_per_cell=trials_per_cell)
    tasks = []
    for method, (params, variable_rate) in models.items():
        rows: list[TrialResult] = []
        report.results[method] = rows
        for lab in labels:
            for h in heights:
                for trial in range(trials_per_cell):
                    trial_seed = int(seed_stream(seed, "bench", lab, h, trial)
                                     .integers(0, 2**31 - 1))
                    tasks.append((method, params, variable_rate, lab, h, trial_seed))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(run_trial, params, lab, h, trial_seed, plant, gains,
                            norm, variable_rate, scheduler_mode, duration, home,
                            theta_jitter)
                for (_, params, variable_rate, lab, h, trial_seed) in tasks
            ]
            outcomes = [f.result()[0] for f in futures]
    else:
        outcomes = [
            run_trial(params, lab, h, trial_seed, plant, gains, norm,
                      variable_rate, scheduler_mode, duration, home,
                      theta_jitter)[0]
            for (_, params, variable_rate, lab, h, trial_seed) in tasks
        ]
    for (method, *_rest), result in zip(tasks, outcomes):
        report.results[method].append(result)
    return report


def _pct(successes: int, trials: int) -> str:
    if trials == 0:
        return "0/0(0%)"
    pct = int(successes / trials * 100.0 + 0.5)
    return f"{successes}/{trials}({pct}%)"


def format_success_table(report: Report, method: str) -> str:
    """Aligned text table: heights as rows, frequency labels as columns."""
    counts = report.cell_counts(method)
    header = ["Height (m)"] + [f"{lab:g} Hz" for lab in report.labels] + ["Total"]
    rows = [header]
    col_totals = {lab: [0, 0] for lab in report.labels}
    for h in report.heights:
        row = [f"{h:g}"]
        row_s = row_n = 0
        for lab in report.labels:
            s, n = counts[(lab, h)]
            col_totals[lab][0] += s
            col_totals[lab][1] += n
            row_s += s
            row_n += n
            row.append(_pct(s, n))
        row.append(_pct(row_s, row_n))
        rows.append(row)
    total_row = ["Total"]
    for lab in report.labels:
        total_row.append(_pct(*col_totals[lab]))
    total_row.append(_pct(*report.totals(method)))
    rows.append(total_row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines)


def emit_report(report: Report, out_dir) -> dict:
    """Write the success tables, scatter data, period histograms, and a JSON
    summary with the method-to-method success delta.  Returns the summary."""
    import json
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    methods = list(report.results)

    lines = ["method,height_m,label_hz,successes,trials"]
    for method in methods:
        counts = report.cell_counts(method)
        for (lab, h), (s, n) in counts.items():
            lines.append(f"{method},{h:g},{lab:g},{s},{n}")
    (out / "report.csv").write_text("\n".join(lines) + "\n")

    text_parts = []
    for method in methods:
        text_parts.append(f"Success Rate ({method})")
        text_parts.append(format_success_table(report, method))
        text_parts.append("")
    (out / "report.txt").write_text("\n".join(text_parts))

    scatter_lines = ["method,label_hz,actual_hz,height_m"]
    for method in methods:
        for lab, actual, h in report.scatter(method):
            scatter_lines.append(f"{method},{lab:g},{actual:.6f},{h:g}")
    (out / "scatter.csv").write_text("\n".join(scatter_lines) + "\n")

    period_lines = ["method,label_hz,mean_step_period_s"]
    for method in methods:
        for r in report.results[method]:
            if r.mean_step_period is not None:
                period_lines.append(f"{method},{r.label:g},{r.mean_step_period:.6f}")
    (out / "periods.csv").write_text("\n".join(period_lines) + "\n")

    summary = {
        "labels_hz": report.labels,
        "heights_m": report.heights,
        "trials_per_cell": report.trials_per_cell,
        "totals": {},
        "cells": {},
        "partial": any(r.error for rs in report.results.values() for r in rs),
    }
    for method in methods:
        s, n = report.totals(method)
        summary["totals"][method] = {
            "successes": s, "trials": n, "formatted": _pct(s, n),
            "rate_pct": 100.0 * s / n if n else None,
        }
        summary["cells"][method] = {
            f"{lab:g}Hz/{h:g}m": {"successes": s2, "trials": n2}
            for (lab, h), (s2, n2) in report.cell_counts(method).items()
        }
    if "vfil" in summary["totals"] and "baseline" in summary["totals"]:
        a = summary["totals"]["vfil"]
        b = summary["totals"]["baseline"]
        if a["trials"] and b["trials"]:
            summary["success_rate_delta_pct"] = a["rate_pct"] - b["rate_pct"]
            summary["success_delta_count"] = a["successes"] - b["successes"]
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def report_from_counts(labels, heights, cell_successes: dict[str, dict],
                       trials_per_cell: int = 5) -> Report:
    """Build a Report from per-cell success counts (fixture/import path).

    cell_successes maps method -> {(label, height): successes}.
    """
    report = Report(labels=list(labels), heights=list(heights),
                    trials_per_cell=trials_per_cell)
    for method, cells in cell_successes.items():
        rows: list[TrialResult] = []
        for (lab, h), successes in cells.items():
            for i in range(trials_per_cell):
                rows.append(TrialResult(
                    label=lab, height=h, seed=i, success=i < successes,
                    first_contact_loss_time=None if i < successes else 0.0,
                    actual_frequency=None, mean_step_period=None))
        report.results[method] = rows
    return report

"""Estimation performance metrics and report emission.

Two indicators per quantity over the horizon of S aligned samples: the filter
coefficient (estimation-error energy over measurement-error energy; below one
means the filter beats the raw measurements) and the mean squared estimation
error.  The filter coefficient needs a measured counterpart and is therefore
computed per measurement channel; mean squared errors are computed both per
channel and per state, with densities reported as pressures in bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EstimationError
from .estimator import (ChannelSpec, EstimationResult, IgesSystemModel,
                        MeasurementSet, classify_state)
from .scenario import TruthResult

STATE_CLASSES = ("e", "f", "pressure", "gas_flow")
CHANNEL_CLASSES = ("v", "ib", "in", "pressure", "gas_flow")


@dataclass(frozen=True)
class RunReport:
    """Per-state and per-channel metrics for one estimation run."""

    mode: str
    robust: bool
    steps: int
    seed: int | None
    state_names: tuple[str, ...]
    state_class: tuple[str, ...]
    state_eps1: np.ndarray        # NaN where no direct measurement exists
    state_eps2: np.ndarray        # reporting units (bar^2 for densities)
    channel_names: tuple[str, ...]
    channel_class: tuple[str, ...]
    channel_eps1: np.ndarray      # NaN where the denominator vanishes
    channel_eps2: np.ndarray
    mean_step_seconds: float | None = None   # not serialized

    def aggregates(self) -> dict:
        """Per-class summaries, recomputable from the per-item values."""
        out: dict = {"state": {}, "channel": {}}
        for cls in STATE_CLASSES:
            mask = np.array([c == cls for c in self.state_class])
            if not mask.any():
                continue
            vals = self.state_eps2[mask]
            out["state"][cls] = {"mean_eps2": float(np.mean(vals)),
                                 "max_eps2": float(np.max(vals)),
                                 "count": int(mask.sum())}
        for cls in CHANNEL_CLASSES:
            mask = np.array([c == cls for c in self.channel_class])
            if not mask.any():
                continue
            vals = self.channel_eps1[mask]
            defined = vals[np.isfinite(vals)]
            entry = {"count": int(mask.sum()),
                     "defined": int(defined.size)}
            if defined.size:
                entry.update(mean_eps1=float(np.mean(defined)),
                             median_eps1=float(np.median(defined)),
                             max_eps1=float(np.max(defined)),
                             frac_below_one=float(np.mean(defined < 1.0)))
            out["channel"][cls] = entry
        return out

    def mean_state_eps2(self, cls: str) -> float:
        mask = np.array([c == cls for c in self.state_class])
        if not mask.any():
            raise EstimationError(f"report has no states of class '{cls}'")
        return float(np.mean(self.state_eps2[mask]))

    def eps1_defined(self) -> np.ndarray:
        return self.channel_eps1[np.isfinite(self.channel_eps1)]

    def worst_channels(self, n: int = 10) -> list[tuple[str, float]]:
        pairs = [(name, float(v)) for name, v in
                 zip(self.channel_names, self.channel_eps1) if math.isfinite(v)]
        pairs.sort(key=lambda p: p[1], reverse=True)
        return pairs[:n]


def truth_columns(truth: TruthResult, names: tuple[str, ...]) -> np.ndarray:
    index = {n: i for i, n in enumerate(truth.state_names)}
    try:
        cols = [index[n] for n in names]
    except KeyError as exc:
        raise EstimationError(f"truth trajectory lacks state {exc}") from exc
    return truth.states[:, cols]


def compute_metrics(truth: TruthResult, measurements: MeasurementSet,
                    result: EstimationResult,
                    seed: int | None = None) -> RunReport:
    """Score one run against its ground truth.

    Channel metrics compare the measured quantity H x over estimate, truth,
    and the raw measurement; a noiseless channel has a vanishing denominator
    and its filter coefficient is reported as undefined rather than infinity.
    """
    sys = result.system
    xt = truth_columns(truth, sys.state_names)
    xe = result.states
    if xt.shape != xe.shape:
        raise EstimationError(f"trajectory shapes differ: truth {xt.shape} "
                              f"vs estimates {xe.shape}")
    steps = xe.shape[0]

    cols = [measurements.index(c.name) for c in sys.channels]
    z = measurements.z[:, cols]
    y_hat = xe @ sys.h.T
    y_true = xt @ sys.h.T
    num = np.sum((y_hat - y_true) ** 2, axis=0)
    den = np.sum((z - y_true) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        channel_eps1 = np.where(den > 0.0, num / den, np.nan)
    channel_eps2 = num / steps

    scale = sys.state_scale
    err = (xe - xt) * scale
    state_eps2 = np.sum(err ** 2, axis=0) / steps
    state_eps1 = np.full(len(sys.state_names), np.nan)
    state_index = {n: i for i, n in enumerate(sys.state_names)}
    for k, ch in enumerate(sys.channels):
        if ch.state is not None and ch.state in state_index:
            state_eps1[state_index[ch.state]] = channel_eps1[k]

    state_class = tuple(classify_state(n) for n in sys.state_names)
    channel_class = tuple(c.kind for c in sys.channels)
    sec = result.step_seconds
    return RunReport(mode=sys.mode, robust=result.mu is not None,
                     steps=steps, seed=seed,
                     state_names=sys.state_names, state_class=state_class,
                     state_eps1=state_eps1, state_eps2=state_eps2,
                     channel_names=tuple(c.name for c in sys.channels),
                     channel_class=channel_class, channel_eps1=channel_eps1,
                     channel_eps2=channel_eps2,
                     mean_step_seconds=float(np.mean(sec)) if sec.size else None)


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunComparison:
    """Mean-eps2 ratios per state class (a over b) and per-state deltas."""

    class_ratio: dict
    state_names: tuple[str, ...]
    state_delta: np.ndarray    # eps2_a - eps2_b

    def to_text(self) -> str:
        lines = ["class      mean_eps2_ratio(a/b)"]
        for cls, ratio in self.class_ratio.items():
            lines.append(f"{cls:<10} {ratio:.6g}")
        worst = np.argsort(self.state_delta)[::-1][:5]
        lines.append("largest per-state eps2 increases (a-b):")
        for i in worst:
            lines.append(f"  {self.state_names[i]:<14} {self.state_delta[i]:+.6g}")
        return "\n".join(lines)


def compare_runs(a: RunReport, b: RunReport) -> RunComparison:
    if a.state_names != b.state_names:
        raise EstimationError("reports cover different state spaces")
    ratios = {}
    for cls in STATE_CLASSES:
        mask = np.array([c == cls for c in a.state_class])
        if not mask.any():
            continue
        denom = float(np.mean(b.state_eps2[mask]))
        numer = float(np.mean(a.state_eps2[mask]))
        ratios[cls] = numer / denom if denom > 0.0 else float("nan")
    return RunComparison(class_ratio=ratios, state_names=a.state_names,
                         state_delta=a.state_eps2 - b.state_eps2)


# ---------------------------------------------------------------------------
# Emission and parsing
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    if math.isnan(x):
        return ""
    return repr(float(x))


def emit_report(report: RunReport, out_dir: str | Path,
                formats: tuple[str, ...] = ("csv", "text")) -> list[Path]:
    """Write report.csv (full precision, deterministic order) and a short
    text summary.  Round-tripping the CSV reproduces the report values."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if "csv" in formats:
        path = out_dir / "report.csv"
        with open(path, "w") as fh:
            fh.write(f"# mode={report.mode}\n")
            fh.write(f"# robust={report.robust}\n")
            fh.write(f"# steps={report.steps}\n")
            fh.write(f"# seed={'' if report.seed is None else report.seed}\n")
            fh.write("kind,name,class,eps1,eps2\n")
            for name, cls, e1, e2 in zip(report.state_names, report.state_class,
                                         report.state_eps1, report.state_eps2):
                fh.write(f"state,{name},{cls},{_fmt(e1)},{_fmt(e2)}\n")
            for name, cls, e1, e2 in zip(report.channel_names,
                                         report.channel_class,
                                         report.channel_eps1,
                                         report.channel_eps2):
                fh.write(f"channel,{name},{cls},{_fmt(e1)},{_fmt(e2)}\n")
        written.append(path)
    if "text" in formats:
        path = out_dir / "summary.txt"
        agg = report.aggregates()
        lines = [f"run: mode={report.mode} robust={report.robust} "
                 f"steps={report.steps} seed={report.seed}", "",
                 "state classes (mean squared estimation error):"]
        for cls, entry in agg["state"].items():
            lines.append(f"  {cls:<10} mean={entry['mean_eps2']:.6g} "
                         f"max={entry['max_eps2']:.6g} n={entry['count']}")
        lines.append("channel classes (filter coefficient):")
        for cls, entry in agg["channel"].items():
            if entry.get("defined"):
                lines.append(f"  {cls:<10} mean={entry['mean_eps1']:.6g} "
                             f"median={entry['median_eps1']:.6g} "
                             f"below_one={entry['frac_below_one']:.1%} "
                             f"n={entry['count']}")
            else:
                lines.append(f"  {cls:<10} (no defined filter coefficients)")
        lines.append("worst channels by filter coefficient:")
        for name, v in report.worst_channels(10):
            lines.append(f"  {name:<16} {v:.6g}")
        lines.append("")
        with open(path, "w") as fh:
            fh.write("\n".join(lines))
        written.append(path)
    return written


def parse_report(path: str | Path) -> RunReport:
    """Re-parse an emitted report.csv."""
    meta: dict[str, str] = {}
    states: list[tuple[str, str, float, float]] = []
    channels: list[tuple[str, str, float, float]] = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
                continue
            if line.startswith("kind,") or not line:
                continue
            kind, name, cls, e1, e2 = line.split(",")
            row = (name, cls, float(e1) if e1 else float("nan"),
                   float(e2) if e2 else float("nan"))
            (states if kind == "state" else channels).append(row)
    if not states and not channels:
        raise ConfigError(f"{path}: empty report")
    seed = meta.get("seed", "")
    return RunReport(
        mode=meta.get("mode", "integrated"),
        robust=meta.get("robust", "False") == "True",
        steps=int(meta.get("steps", "0")),
        seed=int(seed) if seed else None,
        state_names=tuple(r[0] for r in states),
        state_class=tuple(r[1] for r in states),
        state_eps1=np.array([r[2] for r in states]),
        state_eps2=np.array([r[3] for r in states]),
        channel_names=tuple(r[0] for r in channels),
        channel_class=tuple(r[1] for r in channels),
        channel_eps1=np.array([r[2] for r in channels]),
        channel_eps2=np.array([r[3] for r in channels]))

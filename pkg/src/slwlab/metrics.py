"""Instability instruments: loss-ratio tracking, spike summaries, Pearson
correlation, perplexity, and the append-only per-step CSV run log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import stdtr

from .errors import DivergenceError, MetricError

# Column order of the run log. val_ppl is blank on steps without a
# validation pass.
CSV_COLUMNS = [
    "step",
    "tokens_consumed",
    "seqlen_t",
    "batch_size",
    "lr",
    "train_loss",
    "loss_ratio",
    "grad_norm_preclip",
    "clipped",
    "var_l1",
    "var_max",
    "mom_l1",
    "val_ppl",
]

_INT_COLUMNS = {"step", "tokens_consumed", "seqlen_t", "batch_size", "clipped"}


@dataclass
class MetricRecord:
    step: int
    tokens_consumed: int
    seqlen_t: int
    batch_size: int
    lr: float
    train_loss: float
    loss_ratio: float
    grad_norm_preclip: float
    clipped: bool
    var_l1: float
    var_max: float
    mom_l1: float
    val_ppl: float | None = None


class LossRatioTracker:
    """Ratio of the current training loss to the minimum loss over all
    previous steps. The first step records ratio 1.0."""

    def __init__(self):
        self.running_min = math.inf
        self.history: list[tuple[float, float]] = []

    def update(self, loss: float) -> float:
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite training loss: {loss}")
        ratio = 1.0 if not self.history else loss / self.running_min
        self.running_min = min(self.running_min, loss)
        self.history.append((loss, ratio))
        return ratio

    @property
    def ratios(self) -> list[float]:
        return [r for _, r in self.history]


def update_loss_ratio(tracker: LossRatioTracker, loss: float) -> float:
    return tracker.update(loss)


def instability_summary(ratios, threshold: float) -> tuple[int, float, float]:
    """(count of ratios strictly above threshold, fraction of steps,
    max ratio)."""
    if threshold <= 1:
        raise MetricError(f"threshold must be > 1, got {threshold}")
    ratios = list(ratios)
    if not ratios:
        raise MetricError("empty loss-ratio trace")
    count = sum(1 for r in ratios if r > threshold)
    return count, count / len(ratios), max(ratios)


def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson r with a two-sided p-value from the t statistic
    t = r * sqrt((n-2) / (1-r^2)) against Student-t with n-2 dof."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise MetricError(
            f"pearson needs two equal-length 1-d series of length >= 3, "
            f"got {x.shape} and {y.shape}"
        )
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise MetricError("pearson undefined: a series has zero variance")
    r = float(dx @ dy) / (sx * sy)
    r = max(-1.0, min(1.0, r))
    n = len(x)
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(stdtr(n - 2, -abs(t)))
    return r, p


def perplexity(mean_nll: float) -> float:
    if not math.isfinite(mean_nll):
        raise MetricError(f"non-finite mean NLL: {mean_nll}")
    return math.exp(mean_nll)


def normalize_series(x) -> np.ndarray:
    """x / max(x); max must be positive, result max is exactly 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or x.max() <= 0:
        raise MetricError("normalize_series requires a positive maximum")
    return x / x.max()


# -- run log ---------------------------------------------------------------


def _format_value(column: str, value) -> str:
    if value is None:
        return ""
    if column == "clipped":
        return str(int(value))
    if column in _INT_COLUMNS:
        return str(int(value))
    # 17 significant digits round-trips float64 exactly
    return format(float(value), ".17g")


def format_record(record: MetricRecord) -> str:
    return ",".join(
        _format_value(f.name, getattr(record, f.name)) for f in fields(MetricRecord)
    )


class RunLog:
    """Single-writer append-only CSV log with the MetricRecord columns."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")

    def append(self, record: MetricRecord):
        self._fh.write(format_record(record) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path) -> list[MetricRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != CSV_COLUMNS:
            raise MetricError(f"unexpected log columns in {path}: {header}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(CSV_COLUMNS):
                raise MetricError(f"malformed log line {path}:{lineno}")
            kwargs = {}
            for name, raw in zip(CSV_COLUMNS, parts):
                if name == "val_ppl":
                    kwargs[name] = float(raw) if raw else None
                elif name == "clipped":
                    kwargs[name] = bool(int(raw))
                elif name in _INT_COLUMNS:
                    kwargs[name] = int(raw)
                else:
                    kwargs[name] = float(raw)
            records.append(MetricRecord(**kwargs))
    return records

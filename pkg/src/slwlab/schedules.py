"""Warmup and decay schedules: sequence-length pacing (linear / root /
discrete two-stage / mixed), cosine learning rate in step or token units,
batch-size warmup, and token-budget termination.

All functions here are pure in (step | tokens, config).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, pi

from .errors import ConfigError

GRANULARITY = 8


@dataclass(frozen=True)
class PacingFunction:
    """Sequence-length schedule from seqlen_start to seqlen_end over
    `duration` steps."""

    shape: str  # "linear" | "root" | "two_stage"
    seqlen_start: int
    seqlen_end: int
    duration: int
    root_degree: float = 2.0      # root shape only
    stage1_len: int = 128         # two_stage only
    switch_step: int = 0          # two_stage only
    granularity: int = GRANULARITY

    def validate(self) -> list[str]:
        problems = []
        if self.shape not in ("linear", "root", "two_stage"):
            problems.append(f"unknown pacing shape {self.shape!r}")
        if not 1 <= self.seqlen_start <= self.seqlen_end:
            problems.append(
                f"need 1 <= seqlen_start <= seqlen_end, got "
                f"{self.seqlen_start}..{self.seqlen_end}"
            )
        if self.seqlen_end % self.granularity != 0:
            problems.append(
                f"seqlen_end ({self.seqlen_end}) must be a multiple of "
                f"{self.granularity}"
            )
        if self.duration < 1:
            problems.append("duration must be >= 1")
        if self.root_degree <= 0:
            problems.append("root_degree must be > 0")
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup from 0 to peak, then single-cycle cosine decay to
    min_lr. Progress is measured in steps or in tokens (`unit`)."""

    peak: float
    min_lr: float
    warmup: int
    decay_horizon: int
    unit: str = "steps"  # "steps" | "tokens"

    def validate(self) -> list[str]:
        problems = []
        if not 0 <= self.min_lr <= self.peak:
            problems.append(
                f"need 0 <= min_lr <= peak, got {self.min_lr} / {self.peak}"
            )
        if self.decay_horizon <= self.warmup:
            problems.append(
                f"decay_horizon ({self.decay_horizon}) must exceed warmup "
                f"({self.warmup})"
            )
        if self.unit not in ("steps", "tokens"):
            problems.append(f"unknown lr unit {self.unit!r}")
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class BszWarmup:
    start_bsz: int
    end_bsz: int
    ramp_tokens: int

    def validate(self) -> list[str]:
        problems = []
        if not 1 <= self.start_bsz <= self.end_bsz:
            problems.append(
                f"need 1 <= start_bsz <= end_bsz, got "
                f"{self.start_bsz} / {self.end_bsz}"
            )
        if self.ramp_tokens < 1:
            problems.append("ramp_tokens must be >= 1")
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError("; ".join(problems))


def _postprocess(raw: float, p: PacingFunction) -> int:
    """Floor, reduce to a multiple of the granularity, clamp to the
    schedule's floor (granularity floor of seqlen_start, and never < 2)."""
    g = p.granularity
    length = int(raw)
    length -= length % g
    floor = min(p.seqlen_start, p.seqlen_start - p.seqlen_start % g)
    return max(length, floor, 2)


def seqlen_at(t: int, p: PacingFunction) -> int:
    """Sequence length at step t for a linear or root pacing function."""
    if t >= p.duration:
        return p.seqlen_end
    frac = t / p.duration
    if p.shape == "root":
        frac = frac ** p.root_degree
    raw = p.seqlen_start + (p.seqlen_end - p.seqlen_start) * frac
    return _postprocess(raw, p)


def two_stage_seqlen_at(t: int, p: PacingFunction) -> int:
    """Discrete 2-stage schedule: stage1_len, then seqlen_end."""
    if p.shape != "two_stage":
        raise ConfigError(f"two_stage_seqlen_at needs shape 'two_stage', got {p.shape!r}")
    return p.stage1_len if t < p.switch_step else p.seqlen_end


def mixed_seqlen_at(
    t: int,
    full_len: int,
    short_len: int = 128,
    period: int = 1000,
    short_steps: int = 900,
) -> int:
    """Alternating schedule: short_steps of short_len, then full_len for
    the rest of every period."""
    return short_len if (t % period) < short_steps else full_len


def lr_at(progress: int, s: LrSchedule) -> float:
    """Learning rate at `progress` (steps or tokens, per s.unit)."""
    if s.decay_horizon <= s.warmup:
        raise ConfigError(
            f"decay_horizon ({s.decay_horizon}) must exceed warmup ({s.warmup})"
        )
    if progress < s.warmup:
        return s.peak * progress / s.warmup
    d = (progress - s.warmup) / (s.decay_horizon - s.warmup)
    d = min(d, 1.0)
    return s.min_lr + 0.5 * (s.peak - s.min_lr) * (1.0 + cos(pi * d))


def batch_size_at(tokens_consumed: int, w: BszWarmup) -> int:
    """Batch size under linear warmup over ramp_tokens."""
    if tokens_consumed >= w.ramp_tokens:
        return w.end_bsz
    raw = w.start_bsz + (w.end_bsz - w.start_bsz) * tokens_consumed / w.ramp_tokens
    return max(w.start_bsz, int(raw))


def should_terminate(tokens_consumed: int, target_tokens: int) -> bool:
    return tokens_consumed >= target_tokens

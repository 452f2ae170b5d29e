"""Low-cost hyperparameter tuning for the pacing function.

A probe trains only the first `window_steps` steps of a candidate
configuration and reports its early validation-perplexity series. The
tuner then (a) raises the starting sequence length until the early
perplexity stops fluctuating and (b) binary-searches the largest warmup
duration that stays fluctuation-free, assuming longer durations are more
likely to fluctuate. If that monotonicity assumption is observed to be
violated, the search falls back to a linear scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import MetricError, TuningError


@dataclass(frozen=True)
class FluctuationCriterion:
    factor: float = 1.3
    window_steps: int = 300
    eval_every: int = 100

    def validate(self) -> list[str]:
        problems = []
        if self.factor <= 1:
            problems.append("factor must be > 1")
        if self.window_steps < self.eval_every:
            problems.append("window_steps must be >= eval_every")
        return problems


@dataclass
class Trial:
    param: str        # "duration" | "seqlen_start"
    value: int
    fluctuated: bool
    probe_steps: int


@dataclass
class TuneResult:
    chosen_duration: int | None = None
    chosen_seqlen_start: int | None = None
    trials: list[Trial] = field(default_factory=list)

    def total_probe_steps(self) -> int:
        return sum(t.probe_steps for t in self.trials)


def detect_fluctuation(val_ppl_probes, criterion: FluctuationCriterion) -> bool:
    """True iff any probe exceeds factor x the minimum of all earlier
    probes."""
    probes = list(val_ppl_probes)
    if len(probes) < 2:
        raise MetricError("detect_fluctuation needs at least 2 probes")
    best = probes[0]
    for value in probes[1:]:
        if value > criterion.factor * best:
            return True
        best = min(best, value)
    return False


def tune_seqlen_start(
    train_probe,
    candidates,
    criterion: FluctuationCriterion,
    result: TuneResult | None = None,
) -> int:
    """Smallest candidate starting length whose early-training probe shows
    no fluctuation. `train_probe(seqlen_start)` returns the validation
    perplexity series over the first window_steps of training."""
    candidates = sorted(candidates)
    if not candidates:
        raise TuningError("no seqlen_start candidates")
    result = result if result is not None else TuneResult()
    for cand in candidates:
        fluct = detect_fluctuation(train_probe(cand), criterion)
        result.trials.append(
            Trial("seqlen_start", cand, fluct, criterion.window_steps)
        )
        if not fluct:
            result.chosen_seqlen_start = cand
            return cand
    raise TuningError(
        f"every seqlen_start candidate fluctuated (tried {candidates}); "
        f"try larger starting lengths"
    )


def tune_duration(
    train_probe,
    t_lo: int,
    t_hi: int,
    criterion: FluctuationCriterion,
    result: TuneResult | None = None,
) -> int:
    """Largest duration on the lattice {t_lo, t_lo+g, ...} u {t_hi}
    (g = criterion.eval_every) whose probe shows no fluctuation.
    `train_probe(duration)` returns the early validation perplexity series.
    """
    if t_lo > t_hi:
        raise TuningError(f"t_lo ({t_lo}) > t_hi ({t_hi})")
    result = result if result is not None else TuneResult()
    g = criterion.eval_every
    lattice = list(range(t_lo, t_hi + 1, g))
    if lattice[-1] != t_hi:
        lattice.append(t_hi)

    cache: dict[int, bool] = {}

    def probe(i: int) -> bool:
        value = lattice[i]
        if value not in cache:
            cache[value] = detect_fluctuation(train_probe(value), criterion)
            result.trials.append(
                Trial("duration", value, cache[value], criterion.window_steps)
            )
        return cache[value]

    lo, hi = 0, len(lattice) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if probe(mid):
            hi = mid - 1
        else:
            lo = mid
    if probe(lo):
        raise TuningError(
            f"no stable duration in [{t_lo}, {t_hi}]: even {lattice[lo]} "
            f"fluctuates"
        )

    # Opportunistic monotonicity check: a stable duration above a
    # fluctuating one invalidates binary search; rescan linearly.
    stable = [v for v, f in cache.items() if not f]
    fluct = [v for v, f in cache.items() if f]
    if stable and fluct and max(stable) > min(fluct):
        chosen = None
        for value in reversed(lattice):
            if value not in cache:
                cache[value] = detect_fluctuation(train_probe(value), criterion)
                result.trials.append(
                    Trial("duration", value, cache[value], criterion.window_steps)
                )
            if not cache[value]:
                chosen = value
                break
        if chosen is None:
            raise TuningError(f"no stable duration in [{t_lo}, {t_hi}]")
        result.chosen_duration = chosen
        return chosen

    result.chosen_duration = lattice[lo]
    return lattice[lo]


def probe_bound(t_lo: int, t_hi: int, granularity: int) -> int:
    """Worst-case probe count for the binary search phase."""
    span = max(1, (t_hi - t_lo) // granularity)
    return math.ceil(math.log2(span)) + 1 if span > 1 else 1

"""Corpus ingestion and batching.

Byte-level tokenization (identity byte -> id, vocab 256), full-length
window indexing, and the truncation-based variable-length batch
construction: the loader always draws full windows and returns only the
first L_t tokens of each; the tail is dropped.

Epoch shuffles come from a counter-based Philox stream keyed on
(seed, epoch), so the batch at any (seed, step) is addressable without
replaying history.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

VOCAB_SIZE = 256
PAD_ID = 256  # reserved, never used in training


def tokenize_bytes(text: bytes) -> np.ndarray:
    """Identity byte -> token id mapping."""
    return np.frombuffer(bytes(text), dtype=np.uint8).astype(np.int64)


def detokenize(tokens: np.ndarray) -> bytes:
    return np.asarray(tokens, dtype=np.uint8).tobytes()


@dataclass(frozen=True)
class CorpusIndex:
    tokens: np.ndarray          # flat token stream
    sequence_starts: np.ndarray  # window offsets, each window is seqlen_end long
    seqlen_end: int
    n_train: int                # first n_train windows are training data
    shuffle_seed: int

    @property
    def n_val(self) -> int:
        return len(self.sequence_starts) - self.n_train

    def window(self, i: int) -> np.ndarray:
        start = self.sequence_starts[i]
        return self.tokens[start : start + self.seqlen_end]


@dataclass(frozen=True)
class Batch:
    tokens: np.ndarray  # [B, L_t]
    step: int
    seqlen: int


def build_index(
    tokens: np.ndarray, seqlen_end: int, val_fraction: float, seed: int
) -> CorpusIndex:
    """Cut the token stream into non-overlapping full-length windows and
    reserve the last val_fraction of them for validation."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if len(tokens) < 2 * seqlen_end:
        raise DataError(
            f"corpus has {len(tokens)} tokens, need at least {2 * seqlen_end} "
            f"(two windows of {seqlen_end})"
        )
    n_windows = len(tokens) // seqlen_end
    starts = np.arange(n_windows, dtype=np.int64) * seqlen_end
    n_val = int(n_windows * val_fraction)
    if val_fraction > 0:
        n_val = max(n_val, 1)
    n_train = n_windows - n_val
    if n_train < 1:
        raise DataError(
            f"val_fraction {val_fraction} leaves no training windows "
            f"({n_windows} total)"
        )
    return CorpusIndex(
        tokens=tokens,
        sequence_starts=starts,
        seqlen_end=seqlen_end,
        n_train=n_train,
        shuffle_seed=seed,
    )


def _epoch_permutation(index: CorpusIndex, epoch: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=[index.shuffle_seed, epoch]))
    return rng.permutation(index.n_train)


class BatchSampler:
    """Addressable training batches.

    `position` counts windows consumed so far; the rows drawn for any
    (seed, position, batch_size) are a pure function of those values, so
    batches are replayable without history. Epochs wrap automatically
    with a fresh permutation each time.
    """

    def __init__(self, index: CorpusIndex):
        self.index = index
        self._perm_cache: dict[int, np.ndarray] = {}

    def _perm(self, epoch: int) -> np.ndarray:
        if epoch not in self._perm_cache:
            # only adjacent epochs are live; keep the cache small
            if len(self._perm_cache) > 4:
                self._perm_cache.clear()
            self._perm_cache[epoch] = _epoch_permutation(self.index, epoch)
        return self._perm_cache[epoch]

    def rows(self, position: int, batch_size: int) -> np.ndarray:
        n = self.index.n_train
        out = np.empty(batch_size, dtype=np.int64)
        for j in range(batch_size):
            pos = position + j
            out[j] = self._perm(pos // n)[pos % n]
        return out

    def batch(
        self, position: int, batch_size: int, seqlen: int, step: int = -1
    ) -> Batch:
        if not 2 <= seqlen <= self.index.seqlen_end:
            raise DataError(
                f"seqlen {seqlen} outside [2, {self.index.seqlen_end}]"
            )
        rows = self.rows(position, batch_size)
        starts = self.index.sequence_starts[rows]
        tokens = np.stack(
            [self.index.tokens[s : s + seqlen] for s in starts]
        )
        return Batch(tokens=tokens, step=step, seqlen=seqlen)


def next_batch(index: CorpusIndex, step: int, batch_size: int, seqlen: int) -> Batch:
    """Batch for a fixed-batch-size run at a given step (replay oracle)."""
    return BatchSampler(index).batch(step * batch_size, batch_size, seqlen, step=step)


def validation_batches(index: CorpusIndex, batch_size: int) -> list[Batch]:
    """All validation windows, full length, deterministic order. The last
    batch may be smaller than batch_size."""
    if index.n_val < 1:
        raise DataError("index has no validation windows")
    batches = []
    val_rows = np.arange(index.n_train, len(index.sequence_starts))
    for i in range(0, len(val_rows), batch_size):
        rows = val_rows[i : i + batch_size]
        starts = index.sequence_starts[rows]
        tokens = np.stack(
            [index.tokens[s : s + index.seqlen_end] for s in starts]
        )
        batches.append(Batch(tokens=tokens, step=-1, seqlen=index.seqlen_end))
    return batches


def load_corpus(paths: list[str]) -> np.ndarray:
    """Read one or more files as raw bytes and concatenate their tokens."""
    parts = []
    for path in paths:
        with open(path, "rb") as fh:
            parts.append(tokenize_bytes(fh.read()))
    if not parts:
        raise DataError("no corpus paths given")
    return np.concatenate(parts)

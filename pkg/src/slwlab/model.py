"""A small GPT-2-style decoder: pre-norm blocks, learned absolute positions,
causal attention, GELU MLP, and (by default) an output projection tied to
the token embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor

INIT_STD = 0.02
MASK_NEG = -1e30  # additive mask; exp() underflows to exactly 0.0


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    hidden: int
    n_heads: int
    vocab: int
    max_seqlen: int
    init_seed: int = 0
    tied_output: bool = True

    def validate(self) -> list[str]:
        problems = []
        if self.n_layers < 0:
            problems.append("n_layers must be >= 0")
        if self.hidden < 1 or self.n_heads < 1:
            problems.append("hidden and n_heads must be >= 1")
        elif self.hidden % self.n_heads != 0:
            problems.append(
                f"hidden ({self.hidden}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.vocab < 1:
            problems.append("vocab must be >= 1")
        if self.max_seqlen < 8 or self.max_seqlen % 8 != 0:
            problems.append(
                f"max_seqlen ({self.max_seqlen}) must be >= 8 and a multiple of 8"
            )
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError("; ".join(problems))


# Parameter names, in a fixed order shared by init, checkpoints, and the
# optimizer. Values are numpy shapes.
def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    h = cfg.hidden
    shapes: dict[str, tuple] = {
        "tok_emb": (cfg.vocab, h),
        "pos_emb": (cfg.max_seqlen, h),
    }
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        shapes[p + "ln1.g"] = (h,)
        shapes[p + "ln1.b"] = (h,)
        shapes[p + "attn.wq"] = (h, h)
        shapes[p + "attn.wk"] = (h, h)
        shapes[p + "attn.wv"] = (h, h)
        shapes[p + "attn.bq"] = (h,)
        shapes[p + "attn.bk"] = (h,)
        shapes[p + "attn.bv"] = (h,)
        shapes[p + "attn.wo"] = (h, h)
        shapes[p + "attn.bo"] = (h,)
        shapes[p + "ln2.g"] = (h,)
        shapes[p + "ln2.b"] = (h,)
        shapes[p + "mlp.w1"] = (h, 4 * h)
        shapes[p + "mlp.b1"] = (4 * h,)
        shapes[p + "mlp.w2"] = (4 * h, h)
        shapes[p + "mlp.b2"] = (h,)
    shapes["ln_f.g"] = (h,)
    shapes["ln_f.b"] = (h,)
    if not cfg.tied_output:
        shapes["out_proj"] = (h, cfg.vocab)
    return shapes


def _is_gain(name: str) -> bool:
    return name.endswith(".g")


def _is_bias(name: str) -> bool:
    return name.endswith((".b", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2"))


class Parameters:
    """Named parameter tensors for one model instance."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.tensors.items()
        }

    def total_elements(self) -> int:
        return sum(t.data.size for t in self.tensors.values())


def init_parameters(config: ModelConfig) -> Parameters:
    """Normal(0, 0.02) weights, zero biases/offsets, unit gains; fully
    determined by config.init_seed."""
    config.check()
    rng = np.random.default_rng(config.init_seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        if _is_gain(name):
            data = np.ones(shape)
        elif _is_bias(name):
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, INIT_STD, size=shape)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return Parameters(config, tensors)


def count_parameters(config: ModelConfig) -> int:
    """Closed-form element count.

    embeddings: V*H + max_seqlen*H
    per layer:  12*H^2 + 13*H   (4 attn mats + 2 MLP mats + their biases
                                 + 2 layer norms)
    final norm: 2*H
    untied head adds V*H.
    """
    h = config.hidden
    per_layer = 12 * h * h + 13 * h
    total = config.vocab * h + config.max_seqlen * h + config.n_layers * per_layer + 2 * h
    if not config.tied_output:
        total += config.vocab * h
    return total


def _causal_mask(length: int) -> np.ndarray:
    mask = np.zeros((length, length))
    mask[np.triu_indices(length, k=1)] = MASK_NEG
    return mask


def forward(params: Parameters, tokens: np.ndarray) -> Tensor:
    """Next-token logits [B, L, V] for an integer token matrix [B, L]."""
    cfg = params.config
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 2:
        raise ShapeError(f"tokens must be [B, L], got shape {tokens.shape}")
    b, length = tokens.shape
    if length > cfg.max_seqlen:
        raise ShapeError(
            f"sequence length {length} exceeds max_seqlen {cfg.max_seqlen}"
        )
    h, nh = cfg.hidden, cfg.n_heads
    hd = h // nh

    x = T.add(
        T.embedding(params["tok_emb"], tokens),
        T.embedding(params["pos_emb"], np.arange(length)),
    )
    mask = Tensor(_causal_mask(length))
    inv_sqrt_hd = 1.0 / math.sqrt(hd)

    for i in range(cfg.n_layers):
        p = f"layer{i}."
        ln1 = T.layer_norm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = T.add(T.matmul(ln1, params[p + "attn.wq"]), params[p + "attn.bq"])
        k = T.add(T.matmul(ln1, params[p + "attn.wk"]), params[p + "attn.bk"])
        v = T.add(T.matmul(ln1, params[p + "attn.wv"]), params[p + "attn.bv"])
        # [B, L, H] -> [B, nh, L, hd]
        q = T.transpose(T.reshape(q, (b, length, nh, hd)), (0, 2, 1, 3))
        k = T.transpose(T.reshape(k, (b, length, nh, hd)), (0, 2, 1, 3))
        v = T.transpose(T.reshape(v, (b, length, nh, hd)), (0, 2, 1, 3))
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), inv_sqrt_hd)
        probs = T.softmax(T.add(scores, mask), axis=-1)
        ctx = T.matmul(probs, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, length, h))
        attn_out = T.add(T.matmul(ctx, params[p + "attn.wo"]), params[p + "attn.bo"])
        x = T.add(x, attn_out)

        ln2 = T.layer_norm(x, params[p + "ln2.g"], params[p + "ln2.b"])
        hid = T.gelu(T.add(T.matmul(ln2, params[p + "mlp.w1"]), params[p + "mlp.b1"]))
        mlp_out = T.add(T.matmul(hid, params[p + "mlp.w2"]), params[p + "mlp.b2"])
        x = T.add(x, mlp_out)

    x = T.layer_norm(x, params["ln_f.g"], params["ln_f.b"])
    if cfg.tied_output:
        logits = T.matmul(x, T.transpose(params["tok_emb"], (1, 0)))
    else:
        logits = T.matmul(x, params["out_proj"])
    return logits


def loss_on_batch(params: Parameters, tokens: np.ndarray) -> Tensor:
    """Mean next-token cross-entropy over all B*(L-1) predictions."""
    tokens = np.asarray(tokens, dtype=np.int64)
    b, length = tokens.shape
    if length < 2:
        raise ShapeError(f"loss_on_batch needs sequence length >= 2, got {length}")
    logits = forward(params, tokens)
    pred = T.reshape(
        T.narrow(logits, 1, 0, length - 1), (b * (length - 1), params.config.vocab)
    )
    targets = tokens[:, 1:].reshape(-1)
    return T.cross_entropy(pred, targets)

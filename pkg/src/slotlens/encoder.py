"""Compact trainable transformer encoder standing in for BERT.

Token plus learned absolute position embeddings, a learned classification
vector prepended at position 0, and a stack of post-norm encoder layers
(residual then layer norm). Each utterance is encoded unpadded, so valid
outputs never depend on batch composition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Batch, Vocab
from .optim import ParamSet, xavier_uniform
from .tensor import (
    Tensor,
    add,
    affine,
    concat_last,
    dropout,
    gather_rows,
    layer_norm,
    matmul,
    relu,
    scale,
    softmax_masked,
    transpose,
    vstack,
)

EMBED_INIT_SCALE = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 51
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.d % self.n_heads != 0:
            raise ValueError(
                f"model dimension {self.d} not divisible by {self.n_heads} heads"
            )
        if self.max_positions < 2:
            raise ValueError("max_positions must cover at least one token plus CLS")

    @property
    def head_dim(self) -> int:
        return self.d // self.n_heads


@dataclass
class EncodedUtterance:
    """Per-token states (CLS excluded) and the CLS context vector."""

    u_e: Tensor  # (l, d)
    u_c: Tensor  # (d,)
    mask: np.ndarray  # (l,) all-ones validity vector

    @property
    def length(self) -> int:
        return self.u_e.shape[0]


def tokenize(tokens: list[str], vocab: Vocab) -> np.ndarray:
    """Lowercased per-word id lookup with UNK fallback."""
    return np.array([vocab.lookup(t) for t in tokens], dtype=np.int64)


def init_encoder_params(
    params: ParamSet,
    config: EncoderConfig,
    rng: np.random.Generator,
    dtype=np.float32,
) -> None:
    """Register all encoder parameters under the ``encoder.`` namespace."""
    d, ffn = config.d, config.ffn_dim

    def emb(shape):
        return (EMBED_INIT_SCALE * rng.standard_normal(shape)).astype(dtype)

    def lin(fan_in, fan_out):
        return xavier_uniform(rng, fan_in, fan_out, dtype=dtype)

    params.add("encoder.tok_emb", emb((config.vocab_size, d)))
    params.add("encoder.pos_emb", emb((config.max_positions, d)))
    params.add("encoder.cls_emb", emb(d))
    for i in range(config.n_layers):
        p = f"encoder.layer{i}"
        for name in ("wq", "wk", "wv", "wo"):
            params.add(f"{p}.attn.{name}", lin(d, d))
        for name in ("bq", "bk", "bv", "bo"):
            params.add(f"{p}.attn.{name}", np.zeros(d, dtype=dtype))
        params.add(f"{p}.ffn.w1", lin(d, ffn))
        params.add(f"{p}.ffn.b1", np.zeros(ffn, dtype=dtype))
        params.add(f"{p}.ffn.w2", lin(ffn, d))
        params.add(f"{p}.ffn.b2", np.zeros(d, dtype=dtype))
        for ln in ("ln1", "ln2"):
            params.add(f"{p}.{ln}.gain", np.ones(d, dtype=dtype))
            params.add(f"{p}.{ln}.bias", np.zeros(d, dtype=dtype))


def _self_attention(x: Tensor, params: ParamSet, prefix: str, config: EncoderConfig) -> Tensor:
    q = affine(x, params[f"{prefix}.wq"], params[f"{prefix}.bq"])
    k = affine(x, params[f"{prefix}.wk"], params[f"{prefix}.bk"])
    v = affine(x, params[f"{prefix}.wv"], params[f"{prefix}.bv"])
    n = x.shape[0]
    valid = np.ones(n, dtype=np.float64)
    dk = config.head_dim
    heads = []
    for h in range(config.n_heads):
        cols = slice(h * dk, (h + 1) * dk)
        scores = scale(matmul(q[:, cols], transpose(k[:, cols])), 1.0 / np.sqrt(dk))
        alpha = softmax_masked(scores, valid)
        heads.append(matmul(alpha, v[:, cols]))
    return affine(concat_last(heads), params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def _encode_ids(
    ids: np.ndarray,
    config: EncoderConfig,
    params: ParamSet,
    training: bool,
    rng: np.random.Generator | None,
) -> tuple[Tensor, Tensor]:
    n = len(ids) + 1  # classification position prepended
    if n > config.max_positions:
        raise ValueError(
            f"utterance needs {n} positions but max_positions is {config.max_positions}"
        )
    tok = gather_rows(params["encoder.tok_emb"], ids)
    pos = gather_rows(params["encoder.pos_emb"], np.arange(n))
    x = add(vstack([params["encoder.cls_emb"], tok]), pos)
    x = dropout(x, config.dropout_rate, training, rng)
    for i in range(config.n_layers):
        prefix = f"encoder.layer{i}"
        attn = _self_attention(x, params, f"{prefix}.attn", config)
        x = layer_norm(add(x, attn), params[f"{prefix}.ln1.gain"], params[f"{prefix}.ln1.bias"])
        ffn = affine(
            relu(affine(x, params[f"{prefix}.ffn.w1"], params[f"{prefix}.ffn.b1"])),
            params[f"{prefix}.ffn.w2"],
            params[f"{prefix}.ffn.b2"],
        )
        x = layer_norm(add(x, ffn), params[f"{prefix}.ln2.gain"], params[f"{prefix}.ln2.bias"])
    return x[1:, :], x[0]


def encode(
    batch: Batch,
    config: EncoderConfig,
    params: ParamSet,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> list[EncodedUtterance]:
    """Encode every utterance in the batch at its true (unpadded) length."""
    out = []
    for b in range(batch.size):
        length = int(batch.lengths[b])
        ids = batch.token_ids[b, :length]
        u_e, u_c = _encode_ids(ids, config, params, training, rng)
        out.append(EncodedUtterance(u_e=u_e, u_c=u_c, mask=np.ones(length, dtype=np.float32)))
    return out

"""Three-branch joint network: intent classifier, slot-type weight and
feature generator (per-type single-head attentions supervised by binary
type classifiers), and a cross-attention feature-fusion slot classifier.

The joint loss is alpha*L_intent + beta*L_type + gamma*L_slot. Batch
reduction is the mean over utterances; the binary type loss is pooled
over all contributing (token, type) cells, so a batch with lengths 3 and
5 and four types divides by 32.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .data import Batch
from .encoder import EncoderConfig, EncodedUtterance, encode, init_encoder_params
from .optim import ParamSet, xavier_uniform
from .tensor import (
    Tensor,
    add,
    add_n,
    affine,
    binary_cross_entropy,
    concat_last,
    cross_entropy,
    cross_entropy_rows,
    dropout,
    layer_norm,
    matmul,
    mean_of,
    scale,
    softmax_masked,
    tile_rows,
    transpose,
)

ABLATION_FLAGS = (
    "no_aux_network",
    "no_cross_attention",
    "no_intent_concat",
    "no_aux_loss",
    "frozen_uniform_type_attention",
)


@dataclass(frozen=True)
class ModelConfig:
    """Network sizes, loss weights, and ablation switches."""

    vocab_size: int
    n_intents: int
    n_slot_types: int
    n_bio_labels: int
    d: int = 64
    d_h: int = 32
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 51
    dropout_rate: float = 0.1
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    no_aux_network: bool = False
    no_cross_attention: bool = False
    no_intent_concat: bool = False
    no_aux_loss: bool = False
    frozen_uniform_type_attention: bool = False

    def __post_init__(self):
        if self.d_h < 1:
            raise ValueError("d_h must be at least 1")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.n_bio_labels != 2 * (self.n_slot_types - 1) + 1:
            raise ValueError(
                f"{self.n_bio_labels} BIO labels inconsistent with "
                f"{self.n_slot_types} slot types"
            )

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=self.vocab_size,
            d=self.d,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            ffn_dim=self.ffn_dim,
            max_positions=self.max_positions,
            dropout_rate=self.dropout_rate,
        )

    @property
    def has_aux_network(self) -> bool:
        return not self.no_aux_network

    @property
    def aux_loss_weight(self) -> float:
        """Effective beta: zero when the aux network or its loss is disabled."""
        if self.no_aux_network or self.no_aux_loss:
            return 0.0
        return self.beta


@dataclass
class ForwardOutput:
    """Batched logits (padded numpy arrays), per-type attention maps, and
    the four loss terms as graph tensors; pad cells are zero everywhere."""

    intent_logits: np.ndarray  # (B, |I|)
    slot_logits: np.ndarray  # (B, L, |S|)
    aux_logits: np.ndarray | None  # (B, L, |T|)
    attentions: np.ndarray | None  # (B, |T|, L, L)
    loss_intent: Tensor
    loss_type: Tensor
    loss_slot: Tensor
    loss_total: Tensor


def init_model_params(
    params: ParamSet,
    config: ModelConfig,
    rng: np.random.Generator,
    dtype=np.float32,
) -> None:
    """Register encoder and head parameters (draw order is fixed)."""
    init_encoder_params(params, config.encoder_config, rng, dtype=dtype)
    d, d_h = config.d, config.d_h

    def lin(prefix, fan_in, fan_out):
        params.add(f"{prefix}.w", xavier_uniform(rng, fan_in, fan_out, dtype=dtype))
        params.add(f"{prefix}.b", np.zeros(fan_out, dtype=dtype))

    def norm(prefix, width):
        params.add(f"{prefix}.gain", np.ones(width, dtype=dtype))
        params.add(f"{prefix}.bias", np.zeros(width, dtype=dtype))

    lin("intent", d, config.n_intents)
    if config.has_aux_network:
        fused = d if config.no_intent_concat else d + config.n_intents
        norm("fusion.ln", fused)
        lin("fusion.ll", fused, d)
        for name in ("q", "k", "v"):
            lin(f"fusion.sa.{name}", d, d)
        norm("fusion.post_ln", d)
        for i in range(config.n_slot_types):
            for name in ("q", "k", "v"):
                lin(f"type_gen.t{i}.{name}", d, d_h)
            lin(f"type_gen.t{i}.head", d_h, 1)
        if not config.no_cross_attention:
            lin("cross.proj", config.n_slot_types, d)
            for name in ("q", "k", "v"):
                lin(f"cross.{name}", d, d)
    norm("slot_out.ln", d)
    lin("slot_out.ll", d, d)
    lin("slot", d, config.n_bio_labels)


def type_generator_param_count(config: ModelConfig) -> int:
    """Closed form: each type adds three d->d_h projections plus a
    d_h->1 head, all with biases."""
    d, d_h = config.d, config.d_h
    per_type = 3 * (d * d_h + d_h) + d_h + 1
    return config.n_slot_types * per_type


# single-utterance sub-networks ------------------------------------------------


def intent_head(u_c: Tensor, params: ParamSet) -> Tensor:
    """Intent logits from the context vector."""
    return affine(u_c, params["intent.w"], params["intent.b"])


def intent_fusion(
    u_e: Tensor,
    g_intent: Tensor,
    params: ParamSet,
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Fuse intent logits into token states via a single-head self
    attention over the normalized, projected concatenation; the residual
    uses the clean token states."""
    n = u_e.shape[0]
    x = dropout(u_e, config.dropout_rate, training, rng)
    if not config.no_intent_concat:
        x = concat_last([x, tile_rows(g_intent, n)])
    x = layer_norm(x, params["fusion.ln.gain"], params["fusion.ln.bias"])
    x = affine(x, params["fusion.ll.w"], params["fusion.ll.b"])
    q = affine(x, params["fusion.sa.q.w"], params["fusion.sa.q.b"])
    k = affine(x, params["fusion.sa.k.w"], params["fusion.sa.k.b"])
    v = affine(x, params["fusion.sa.v.w"], params["fusion.sa.v.b"])
    valid = np.ones(n, dtype=np.float64)
    alpha = softmax_masked(scale(matmul(q, transpose(k)), 1.0 / np.sqrt(config.d)), valid)
    u_sa = matmul(alpha, v)
    return layer_norm(
        add(u_e, u_sa), params["fusion.post_ln.gain"], params["fusion.post_ln.bias"]
    )


def slot_type_attention(
    u_hat: Tensor, params: ParamSet, config: ModelConfig
) -> tuple[list[Tensor], list[Tensor]]:
    """One single-head attention per slot type at width d_h.

    Returns (attended features h, attention maps alpha), each a list of
    |T| tensors. Frozen-uniform mode replaces the softmax with a constant
    1/l map; the value path stays learned.
    """
    n = u_hat.shape[0]
    valid = np.ones(n, dtype=np.float64)
    hs, alphas = [], []
    for i in range(config.n_slot_types):
        prefix = f"type_gen.t{i}"
        v = affine(u_hat, params[f"{prefix}.v.w"], params[f"{prefix}.v.b"])
        if config.frozen_uniform_type_attention:
            alpha = Tensor(np.full((n, n), 1.0 / n, dtype=u_hat.dtype))
        else:
            q = affine(u_hat, params[f"{prefix}.q.w"], params[f"{prefix}.q.b"])
            k = affine(u_hat, params[f"{prefix}.k.w"], params[f"{prefix}.k.b"])
            scores = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(config.d_h))
            alpha = softmax_masked(scores, valid)
        hs.append(matmul(alpha, v))
        alphas.append(alpha)
    return hs, alphas


def slot_type_heads(hs: list[Tensor], params: ParamSet, config: ModelConfig) -> Tensor:
    """Per-type binary logits; column i comes from type i's d_h->1 head."""
    columns = [
        affine(h, params[f"type_gen.t{i}.head.w"], params[f"type_gen.t{i}.head.b"])
        for i, h in enumerate(hs)
    ]
    return concat_last(columns)


def fusion_cross_attention(
    u_e: Tensor, g_type: Tensor, params: ParamSet, config: ModelConfig
) -> Tensor:
    """Cross attention: queries from token states, keys and values from
    the projected type logits; then residual, norm, and a final linear."""
    n = u_e.shape[0]
    if config.no_cross_attention or config.no_aux_network:
        fused = u_e
    else:
        g_p = affine(g_type, params["cross.proj.w"], params["cross.proj.b"])
        q = affine(u_e, params["cross.q.w"], params["cross.q.b"])
        k = affine(g_p, params["cross.k.w"], params["cross.k.b"])
        v = affine(g_p, params["cross.v.w"], params["cross.v.b"])
        valid = np.ones(n, dtype=np.float64)
        alpha = softmax_masked(
            scale(matmul(q, transpose(k)), 1.0 / np.sqrt(config.d)), valid
        )
        fused = add(u_e, matmul(alpha, v))
    normed = layer_norm(fused, params["slot_out.ln.gain"], params["slot_out.ln.bias"])
    return affine(normed, params["slot_out.ll.w"], params["slot_out.ll.b"])


def slot_head(u_slot: Tensor, params: ParamSet) -> Tensor:
    """Per-token BIO logits."""
    return affine(u_slot, params["slot.w"], params["slot.b"])


# batched forward ---------------------------------------------------------------


def forward(
    batch: Batch,
    config: ModelConfig,
    params: ParamSet,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardOutput:
    """Run the full network utterance by utterance and assemble padded
    batch outputs plus mean-over-batch losses."""
    B, L = batch.size, batch.max_len
    T = config.n_slot_types
    encoded = encode(batch, config.encoder_config, params, training, rng)

    intent_logits = np.zeros((B, config.n_intents), dtype=np.float64)
    slot_logits = np.zeros((B, L, config.n_bio_labels), dtype=np.float64)
    aux_logits = np.zeros((B, L, T), dtype=np.float64) if config.has_aux_network else None
    attentions = np.zeros((B, T, L, L), dtype=np.float64) if config.has_aux_network else None

    intent_losses, slot_losses, type_terms = [], [], []
    n_type_cells = int(batch.lengths.sum()) * T

    for b in range(B):
        n = int(batch.lengths[b])
        e: EncodedUtterance = encoded[b]
        g_intent = intent_head(e.u_c, params)
        intent_logits[b] = g_intent.data
        intent_losses.append(cross_entropy(g_intent, int(batch.intent_targets[b])))

        g_type = None
        if config.has_aux_network:
            u_hat = intent_fusion(e.u_e, g_intent, params, config, training, rng)
            hs, alphas = slot_type_attention(u_hat, params, config)
            g_type = slot_type_heads(hs, params, config)
            aux_logits[b, :n] = g_type.data
            for i, alpha in enumerate(alphas):
                attentions[b, i, :n, :n] = alpha.data
            type_terms.append(
                binary_cross_entropy(g_type, batch.aux_targets[b, :n], n_type_cells)
            )

        u_slot = fusion_cross_attention(e.u_e, g_type, params, config)
        g_slot = slot_head(u_slot, params)
        slot_logits[b, :n] = g_slot.data
        slot_losses.append(cross_entropy_rows(g_slot, batch.slot_targets[b, :n]))

    loss_intent = mean_of(intent_losses)
    loss_slot = mean_of(slot_losses)
    loss_type = add_n(type_terms) if type_terms else Tensor(0.0)

    terms = [scale(loss_intent, config.alpha)]
    if config.aux_loss_weight > 0:
        terms.append(scale(loss_type, config.aux_loss_weight))
    terms.append(scale(loss_slot, config.gamma))
    loss_total = add_n(terms)

    return ForwardOutput(
        intent_logits=intent_logits,
        slot_logits=slot_logits,
        aux_logits=aux_logits,
        attentions=attentions,
        loss_intent=loss_intent,
        loss_type=loss_type,
        loss_slot=loss_slot,
        loss_total=loss_total,
    )


def predict(
    batch: Batch, config: ModelConfig, params: ParamSet
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Argmax decoding; ties break toward the lower index."""
    out = forward(batch, config, params, training=False)
    intents = out.intent_logits.argmax(axis=1)
    slots = [
        out.slot_logits[b, : int(batch.lengths[b])].argmax(axis=1)
        for b in range(batch.size)
    ]
    return intents, slots


class JointModel:
    """Bundles a configuration with its parameter set."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | int = 0,
                 dtype=np.float32):
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.config = config
        self.params = ParamSet()
        init_model_params(self.params, config, rng, dtype=dtype)

    def forward(self, batch: Batch, training: bool = False,
                rng: np.random.Generator | None = None) -> ForwardOutput:
        return forward(batch, self.config, self.params, training, rng)

    def predict(self, batch: Batch) -> tuple[np.ndarray, list[np.ndarray]]:
        return predict(batch, self.config, self.params)

    def n_params(self, prefix: str = "") -> int:
        return self.params.size(prefix)


def config_from_flags(base: ModelConfig, **flags: bool) -> ModelConfig:
    """Copy a config with some ablation flags switched on."""
    unknown = set(flags) - set(ABLATION_FLAGS)
    if unknown:
        raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
    values = {f.name: getattr(base, f.name) for f in fields(base)}
    values.update(flags)
    return ModelConfig(**values)

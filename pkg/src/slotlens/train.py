"""Training loop, evaluation metrics, and run configuration.

Optimizer defaults are the published recipe: Adam at learning rate 5e-5,
dropout 0.1, batch size 32, equal loss weights, maximum length 50. There
is no early stopping; the final-epoch model is the result, and a dev
split, when given, is scored per epoch for reporting only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .data import LabelMaps, Utterance, Vocab, encode_batch, extract_spans, span_f1
from .model import JointModel, ModelConfig
from .optim import adam_step
from .tensor import backward


class TrainingDivergedError(RuntimeError):
    """The total loss became non-finite."""


@dataclass(frozen=True)
class RunConfig:
    """One experiment: data locations, model sizes, optimizer settings."""

    train_path: str = ""
    dev_path: str = ""
    test_path: str = ""
    output_dir: str = "runs/default"
    seed: int = 0
    epochs: int = 20
    batch_size: int = 32
    lr: float = 5e-5
    dropout: float = 0.1
    d: int = 64
    d_h: int = 32
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    max_len: int = 50
    no_aux_network: bool = False
    no_cross_attention: bool = False
    no_intent_concat: bool = False
    no_aux_loss: bool = False
    frozen_uniform_type_attention: bool = False

    def model_config(self, vocab_size: int, maps: LabelMaps) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            n_intents=maps.n_intents,
            n_slot_types=maps.n_slot_types,
            n_bio_labels=maps.n_bio_labels,
            d=self.d,
            d_h=self.d_h,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            ffn_dim=self.ffn_dim,
            max_positions=self.max_len + 1,
            dropout_rate=self.dropout,
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            no_aux_network=self.no_aux_network,
            no_cross_attention=self.no_cross_attention,
            no_intent_concat=self.no_intent_concat,
            no_aux_loss=self.no_aux_loss,
            frozen_uniform_type_attention=self.frozen_uniform_type_attention,
        )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss_intent: float
    loss_type: float
    loss_slot: float
    loss_total: float
    dev_intent_accuracy: float | None = None
    dev_slot_f1: float | None = None


@dataclass(frozen=True)
class Metrics:
    intent_accuracy: float
    slot_precision: float
    slot_recall: float
    slot_f1: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name} out of [0, 1]: {v}")


@dataclass
class TrainResult:
    model: JointModel
    curve: list[EpochStats] = field(default_factory=list)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_model(
    corpus: list[Utterance],
    maps: LabelMaps,
    vocab: Vocab,
    run: RunConfig,
    dev_corpus: list[Utterance] | None = None,
) -> TrainResult:
    """Train for exactly ``run.epochs`` epochs; deterministic given the seed.

    Three independent random streams (parameter init, epoch shuffling,
    dropout) are spawned from the seed, so ablation variants sharing a
    seed also share their initial encoder weights where shapes agree.
    """
    init_ss, shuffle_ss, dropout_ss = np.random.SeedSequence(run.seed).spawn(3)
    model = JointModel(
        run.model_config(len(vocab), maps), rng=np.random.default_rng(init_ss)
    )
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    model.params.zero_grads()

    curve: list[EpochStats] = []
    n = len(corpus)
    for epoch in range(run.epochs):
        order = shuffle_rng.permutation(n)
        sums = np.zeros(4)
        for idx in _batches(n, run.batch_size, order):
            batch = encode_batch([corpus[i] for i in idx], maps, vocab, run.max_len)
            out = model.forward(batch, training=True, rng=dropout_rng)
            total = out.loss_total.item()
            if not np.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss {total} at epoch {epoch + 1}"
                )
            backward(out.loss_total)
            adam_step(model.params, lr=run.lr)
            sums += len(idx) * np.array(
                [out.loss_intent.item(), out.loss_type.item(),
                 out.loss_slot.item(), total]
            )
        dev_acc = dev_f1 = None
        if dev_corpus:
            dev = evaluate(model, dev_corpus, maps, vocab, run.max_len, run.batch_size)
            dev_acc, dev_f1 = dev.intent_accuracy, dev.slot_f1
        curve.append(
            EpochStats(
                epoch=epoch + 1,
                loss_intent=sums[0] / n,
                loss_type=sums[1] / n,
                loss_slot=sums[2] / n,
                loss_total=sums[3] / n,
                dev_intent_accuracy=dev_acc,
                dev_slot_f1=dev_f1,
            )
        )
    return TrainResult(model=model, curve=curve)


def evaluate(
    model: JointModel,
    corpus: list[Utterance],
    maps: LabelMaps,
    vocab: Vocab,
    max_len: int = 50,
    batch_size: int = 32,
) -> Metrics:
    """Intent accuracy plus exact-span-match micro precision/recall/F1."""
    if not corpus:
        raise ValueError("cannot evaluate an empty corpus")
    correct = 0
    gold_spans, pred_spans = [], []
    for start in range(0, len(corpus), batch_size):
        chunk = corpus[start : start + batch_size]
        batch = encode_batch(chunk, maps, vocab, max_len)
        intents, slots = model.predict(batch)
        for b, u in enumerate(chunk):
            if intents[b] == maps.intent_index[u.intent]:
                correct += 1
            n = int(batch.lengths[b])
            gold_spans.append(extract_spans(u.bio_tags[:n]))
            pred_spans.append(
                extract_spans([maps.bio_labels[j] for j in slots[b]])
            )
    p, r, f1 = span_f1(gold_spans, pred_spans)
    return Metrics(
        intent_accuracy=correct / len(corpus),
        slot_precision=p,
        slot_recall=r,
        slot_f1=f1,
    )


def curve_to_tsv(curve: list[EpochStats]) -> str:
    lines = ["epoch\tloss_intent\tloss_type\tloss_slot\tloss_total"
             "\tdev_intent_accuracy\tdev_slot_f1"]
    for s in curve:
        dev_acc = "" if s.dev_intent_accuracy is None else f"{s.dev_intent_accuracy:.10g}"
        dev_f1 = "" if s.dev_slot_f1 is None else f"{s.dev_slot_f1:.10g}"
        lines.append(
            f"{s.epoch}\t{s.loss_intent:.10g}\t{s.loss_type:.10g}"
            f"\t{s.loss_slot:.10g}\t{s.loss_total:.10g}\t{dev_acc}\t{dev_f1}"
        )
    return "\n".join(lines) + "\n"


def metrics_to_tsv(metrics: Metrics) -> str:
    return (
        "intent_accuracy\tslot_precision\tslot_recall\tslot_f1\n"
        f"{metrics.intent_accuracy:.10g}\t{metrics.slot_precision:.10g}"
        f"\t{metrics.slot_recall:.10g}\t{metrics.slot_f1:.10g}\n"
    )

"""Attention analysis: per-type attention extraction, top-k% entropy
quantification, positive/negative slot-type comparison, modification
consistency scoring, and self-contained HTML heatmaps.

Entropy is base 2 over the normalized weight list, so a uniform l-by-l
matrix scores log2(l^2) at k=100. The report's diff column is always
negative minus positive: sharper (lower-entropy) positive types push it up.
"""

from __future__ import annotations

import html
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import LabelMaps, OUTSIDE, Utterance, Vocab, encode_batch
from .model import JointModel

ROW_SUM_TOLERANCE = 1e-6


@dataclass
class AttentionBundle:
    """Per-type attention maps for one utterance, split into positive
    types (present in the tags) and negative types (the rest)."""

    tokens: list[str]
    matrices: dict[str, np.ndarray]  # slot type -> (l, l)
    positive_types: frozenset[str]
    negative_types: frozenset[str]

    def __post_init__(self):
        self.positive_types = frozenset(self.positive_types)
        self.negative_types = frozenset(self.negative_types)
        if self.positive_types & self.negative_types:
            raise ValueError("positive and negative type sets overlap")
        missing = (self.positive_types | self.negative_types) - set(self.matrices)
        if missing:
            raise ValueError(f"types without attention matrices: {sorted(missing)}")
        l = len(self.tokens)
        for kind, m in self.matrices.items():
            if m.shape != (l, l):
                raise ValueError(f"{kind} matrix shape {m.shape} for {l} tokens")
            if np.abs(m.sum(axis=-1) - 1.0).max() > ROW_SUM_TOLERANCE:
                raise ValueError(f"{kind} attention rows do not sum to 1")

    @property
    def analyzed_types(self) -> frozenset[str]:
        return self.positive_types | self.negative_types

    @property
    def length(self) -> int:
        return len(self.tokens)


def extract_attentions(
    model: JointModel,
    utterance: Utterance,
    maps: LabelMaps,
    vocab: Vocab,
    include_outside: bool = False,
) -> AttentionBundle:
    """Run one inference pass and collect every slot type's attention map.

    Positive types come from the gold tags; an utterance with no tagged
    slot falls back to the model's predicted tags. "O" joins the negative
    set only when ``include_outside`` is set.
    """
    batch = encode_batch([utterance], maps, vocab)
    out = model.forward(batch)
    if out.attentions is None:
        raise ValueError("model was built without the slot-type attention network")
    n = utterance.length
    matrices = {
        kind: out.attentions[0, i, :n, :n].copy()
        for i, kind in enumerate(maps.slot_types)
    }
    positive = utterance.slot_types_present()
    if not positive:
        _, slot_ids = model.predict(batch)
        predicted = [maps.bio_labels[j] for j in slot_ids[0]]
        positive = {t[2:] for t in predicted if t != OUTSIDE}
    analyzed = set(maps.slot_types)
    if not include_outside:
        analyzed.discard(OUTSIDE)
        positive.discard(OUTSIDE)
    return AttentionBundle(
        tokens=list(utterance.tokens),
        matrices=matrices,
        positive_types=frozenset(positive),
        negative_types=frozenset(analyzed - positive),
    )


# entropy ----------------------------------------------------------------------


def entropy(weights) -> float:
    """Base-2 entropy of the normalized weight list, with 0*log2(0) = 0."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ValueError("entropy of an empty weight list")
    if (w < 0).any():
        raise ValueError("attention weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("entropy undefined for an all-zero weight list")
    p = w / total
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _top_fraction(values: np.ndarray, k: float) -> np.ndarray:
    """Largest max(1, floor(k*n/100)) entries, descending."""
    flat = np.sort(values.reshape(-1))[::-1]
    keep = max(1, int(np.floor(k * flat.size / 100.0)))
    return flat[:keep]


def type_entropy(matrix: np.ndarray, k: float, granularity: str = "matrix") -> float:
    """Top-k% entropy of one type's attention.

    "matrix" flattens the full map before taking the top k% (the default
    reading); "rows" scores each row separately and averages, the
    alternative aggregation left switchable on purpose.
    """
    if granularity == "matrix":
        return entropy(_top_fraction(matrix, k))
    if granularity == "rows":
        return float(np.mean([entropy(_top_fraction(row, k)) for row in matrix]))
    raise ValueError(f"unknown granularity {granularity!r}")


@dataclass(frozen=True)
class EntropyRow:
    k: float
    pos_entropy: float
    neg_entropy: float
    n_pos_utterances: int
    n_neg_utterances: int

    @property
    def diff(self) -> float:
        return self.neg_entropy - self.pos_entropy


@dataclass
class EntropyReport:
    rows: list[EntropyRow]
    n_utterances: int
    granularity: str = "matrix"

    def to_tsv(self) -> str:
        lines = ["k\tpos_entropy\tneg_entropy\tdiff"]
        for r in self.rows:
            lines.append(f"{r.k:g}\t{r.pos_entropy:.10g}\t{r.neg_entropy:.10g}\t{r.diff:.10g}")
        return "\n".join(lines) + "\n"


def entropy_report_from_bundles(
    bundles: list[AttentionBundle],
    k_list: list[float],
    granularity: str = "matrix",
) -> EntropyReport:
    """Average positive-group and negative-group entropies per utterance,
    then across utterances, for each k."""
    if not bundles:
        raise ValueError("no utterances to analyze")
    rows = []
    for k in k_list:
        pos_means, neg_means = [], []
        for b in bundles:
            pos = [type_entropy(b.matrices[t], k, granularity) for t in sorted(b.positive_types)]
            neg = [type_entropy(b.matrices[t], k, granularity) for t in sorted(b.negative_types)]
            if pos:
                pos_means.append(float(np.mean(pos)))
            if neg:
                neg_means.append(float(np.mean(neg)))
        if not pos_means:
            raise ValueError("no positive slot types anywhere in the corpus")
        if not neg_means:
            raise ValueError("no negative slot types anywhere in the corpus")
        rows.append(
            EntropyRow(
                k=float(k),
                pos_entropy=float(np.mean(pos_means)),
                neg_entropy=float(np.mean(neg_means)),
                n_pos_utterances=len(pos_means),
                n_neg_utterances=len(neg_means),
            )
        )
    return EntropyReport(rows=rows, n_utterances=len(bundles), granularity=granularity)


def topk_entropy_analysis(
    model: JointModel,
    corpus: list[Utterance],
    k_list: list[float],
    maps: LabelMaps,
    vocab: Vocab,
    granularity: str = "matrix",
    include_outside: bool = False,
) -> EntropyReport:
    """Extract attention for every utterance and aggregate top-k% entropy."""
    bundles = [
        extract_attentions(model, u, maps, vocab, include_outside=include_outside)
        for u in corpus
    ]
    return entropy_report_from_bundles(bundles, k_list, granularity)


# modification consistency -------------------------------------------------------


def compare_attention_consistency(
    bundle_a: AttentionBundle,
    bundle_b: AttentionBundle,
    slot_type: str,
    alignment: list[tuple[int, int]] | None = None,
) -> float:
    """Mean cosine similarity between aligned attention rows, in [0, 1].

    Identity alignment is assumed for equal-length utterances; differing
    lengths require an explicit (pos_a, pos_b) token alignment, which is
    applied to rows and to the attended-over columns alike.
    """
    for bundle in (bundle_a, bundle_b):
        if slot_type not in bundle.matrices:
            raise ValueError(f"slot type {slot_type!r} missing from bundle")
    a = bundle_a.matrices[slot_type]
    b = bundle_b.matrices[slot_type]
    if alignment is None:
        if a.shape != b.shape:
            raise ValueError(
                f"lengths differ ({a.shape[0]} vs {b.shape[0]}); pass an alignment"
            )
        alignment = [(i, i) for i in range(a.shape[0])]
    cols_a = [i for i, _ in alignment]
    cols_b = [j for _, j in alignment]
    sims = []
    for i, j in alignment:
        x, y = a[i, cols_a], b[j, cols_b]
        denom = np.linalg.norm(x) * np.linalg.norm(y)
        sims.append(float(x @ y / denom) if denom > 0 else 0.0)
    return float(np.clip(np.mean(sims), 0.0, 1.0))


@dataclass(frozen=True)
class PairScore:
    pair_id: int
    category: str
    score: float


@dataclass
class ConsistencyReport:
    pairs: list[PairScore]

    @property
    def category_means(self) -> dict[str, float]:
        by_cat: dict[str, list[float]] = {}
        for p in self.pairs:
            by_cat.setdefault(p.category, []).append(p.score)
        return {c: float(np.mean(v)) for c, v in sorted(by_cat.items())}

    def to_tsv(self) -> str:
        lines = ["pair_id\tcategory\tscore"]
        for p in self.pairs:
            lines.append(f"{p.pair_id}\t{p.category}\t{p.score:.10g}")
        return "\n".join(lines) + "\n"


def consistency_analysis(
    model: JointModel,
    pairs: list[tuple[Utterance, Utterance, str]],
    maps: LabelMaps,
    vocab: Vocab,
) -> ConsistencyReport:
    """Score each (original, modified, category) pair by the mean
    consistency over the original's positive types (all analyzed types
    when it has none)."""
    scored = []
    for pair_id, (orig, mod, category) in enumerate(pairs):
        ba = extract_attentions(model, orig, maps, vocab)
        bb = extract_attentions(model, mod, maps, vocab)
        types = sorted(ba.positive_types) or sorted(ba.analyzed_types)
        score = float(
            np.mean([compare_attention_consistency(ba, bb, t) for t in types])
        )
        scored.append(PairScore(pair_id=pair_id, category=category, score=score))
    return ConsistencyReport(pairs=scored)


# heatmap rendering ---------------------------------------------------------------


def render_heatmap(bundle: AttentionBundle, slot_type: str, path: str | Path) -> Path:
    """Write a self-contained HTML heatmap of one type's attention map.

    Cell (i, j) opacity encodes weight normalized by the matrix maximum;
    exact values sit in hover titles. No external resources.
    """
    if slot_type not in bundle.matrices:
        raise ValueError(f"slot type {slot_type!r} missing from bundle")
    m = bundle.matrices[slot_type]
    peak = float(m.max())
    scaled = m / peak if peak > 0 else m
    esc = [html.escape(t) for t in bundle.tokens]

    parts = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        f"<title>attention: {html.escape(slot_type)}</title>",
        "<style>",
        "body{font:14px monospace;margin:2em}",
        "table{border-collapse:collapse}",
        "td{width:2.2em;height:2.2em;border:1px solid #ddd;text-align:center}",
        "th{padding:2px 8px;font-weight:normal;color:#333}",
        ".swatch{background-color:rgb(31,119,180)}",
        "</style></head><body>",
        f"<h1>slot type: {html.escape(slot_type)}</h1>",
        f"<p>utterance: {' '.join(esc)}</p>",
        "<table>",
        "<tr><th></th>" + "".join(f"<th>{t}</th>" for t in esc) + "</tr>",
    ]
    for i, row in enumerate(scaled):
        cells = "".join(
            f'<td class="swatch" style="opacity:{row[j]:.6f}" '
            f'title="{m[i, j]:.6f}"></td>'
            for j in range(len(esc))
        )
        parts.append(f"<tr><th>{esc[i]}</th>{cells}</tr>")
    parts.append("</table></body></html>")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def write_report(text: str, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path

"""The three-file corpus format, BIO validation, and the per-type binary
target matrix that supervises the slot-type attentions."""

import tempfile
from pathlib import Path

import numpy as np

from slotlens import (
    Vocab,
    build_label_maps,
    default_grammar,
    generate_aux_targets,
    generate_synthetic_corpus,
    load_corpus,
    write_corpus,
)

corpus = generate_synthetic_corpus(seed=0, n=8, grammar=default_grammar())
for u in corpus[:3]:
    print(f"{u.intent:12s} {' '.join(u.tokens)}")
    print(f"{'':12s} {' '.join(u.bio_tags)}")

# round-trip through the on-disk format: seq.in / seq.out / label
with tempfile.TemporaryDirectory() as tmp:
    write_corpus(corpus, tmp)
    print("\nfiles:", sorted(p.name for p in Path(tmp).iterdir()))
    reloaded = load_corpus(tmp)
assert reloaded == corpus

maps = build_label_maps(corpus)
vocab = Vocab.build(corpus)
print(f"\nintents     {maps.intents}")
print(f"slot types  {maps.slot_types}")
print(f"bio labels  {maps.bio_labels}")
print(f"vocabulary  {len(vocab)} entries (pad/unk reserved)")

# one row per token, one column per slot type; exactly one 1 per row,
# and the O column is the complement of the others
u = corpus[0]
targets = generate_aux_targets(u.bio_tags, maps)
print(f"\naux targets for: {' '.join(u.tokens)}")
print(f"columns: {maps.slot_types}")
for token, tag, row in zip(u.tokens, u.bio_tags, targets):
    print(f"  {token:12s} {tag:10s} {row.astype(int)}")
assert np.array_equal(targets.sum(axis=1), np.ones(len(u.tokens)))

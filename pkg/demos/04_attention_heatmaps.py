"""Extract one l-by-l attention map per slot type from a trained model and
render them as self-contained HTML heatmaps."""

from pathlib import Path

from slotlens import (
    RunConfig,
    Vocab,
    build_label_maps,
    default_grammar,
    extract_attentions,
    generate_synthetic_corpus,
    render_heatmap,
    train_model,
)

grammar = default_grammar()
train = generate_synthetic_corpus(seed=0, n=80, grammar=grammar)
maps = build_label_maps(train)
vocab = Vocab.build(train)
run = RunConfig(epochs=12, batch_size=16, lr=1e-3, d=16, d_h=8,
                n_layers=1, n_heads=2, ffn_dim=32)
model = train_model(train, maps, vocab, run).model

u = train[0]
bundle = extract_attentions(model, u, maps, vocab, include_outside=True)
print(f"utterance: {' '.join(bundle.tokens)}")
print(f"positive types (present): {sorted(bundle.positive_types)}")
print(f"negative types (absent):  {sorted(bundle.negative_types)}")

# row i of a matrix is the attention distribution token i puts over the
# utterance when the model looks for that slot type
city = bundle.matrices.get("city")
if city is not None:
    print("\ncity attention, one row per token (rows sum to 1):")
    for token, row in zip(bundle.tokens, city):
        cells = " ".join(f"{w:.2f}" for w in row)
        print(f"  {token:12s} {cells}")

out = Path(__file__).parent / "out"
for t in maps.slot_types:
    path = render_heatmap(bundle, t, out / f"attention_{t}.html")
    print(f"wrote {path}")
print("open any of these files in a browser; hover a cell for the value")

"""Train the joint model on a small synthetic corpus and score it with
exact-span-match F1 and intent accuracy.

Small sizes and a hot learning rate keep this to a few seconds; the
defaults (d=64, lr 5e-5) are the full desk-scale setup.
"""

from slotlens import (
    RunConfig,
    Vocab,
    build_label_maps,
    default_grammar,
    evaluate,
    generate_synthetic_corpus,
    train_model,
)

grammar = default_grammar()
train = generate_synthetic_corpus(seed=0, n=80, grammar=grammar)
test = generate_synthetic_corpus(seed=1, n=30, grammar=grammar)
maps = build_label_maps(train)
vocab = Vocab.build(train)

run = RunConfig(epochs=20, batch_size=16, lr=1e-3, d=16, d_h=8,
                n_layers=1, n_heads=2, ffn_dim=32)
result = train_model(train, maps, vocab, run, dev_corpus=test)

print("epoch  total   intent  type    slot    test_acc  test_f1")
for s in result.curve:
    print(f"{s.epoch:5d}  {s.loss_total:6.3f}  {s.loss_intent:6.3f}"
          f"  {s.loss_type:6.3f}  {s.loss_slot:6.3f}"
          f"  {s.dev_intent_accuracy:8.3f}  {s.dev_slot_f1:7.3f}")

metrics = evaluate(result.model, test, maps, vocab)
print(f"\nheld-out: intent accuracy {metrics.intent_accuracy:.3f}, "
      f"span precision {metrics.slot_precision:.3f}, "
      f"recall {metrics.slot_recall:.3f}, F1 {metrics.slot_f1:.3f}")

# what the model actually predicts on one utterance
from slotlens import encode_batch

u = test[0]
batch = encode_batch([u], maps, vocab)
intents, slots = result.model.predict(batch)
pred_tags = [maps.bio_labels[i] for i in slots[0]]
print(f"\n{' '.join(u.tokens)}")
print(f"gold intent {u.intent}, predicted {maps.intents[intents[0]]}")
print(f"gold tags  {u.bio_tags}")
print(f"pred tags  {pred_tags}")

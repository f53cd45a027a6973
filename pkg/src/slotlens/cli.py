"""Command-line surface: train, eval, explain, analyze, ablate, gradcheck,
and synth subcommands.

A flat key=value config file (keys named exactly like the flags, without
the leading dashes) can seed any command's options; explicit flags win.
Exit status is 0 on success, 1 with a categorized stderr message otherwise.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .checkpoint import (
    CheckpointCorruptError,
    CheckpointFormatError,
    CheckpointVersionError,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .data import (
    BioValidationError,
    CorpusFormatError,
    UnknownLabelError,
    Utterance,
    Vocab,
    build_label_maps,
    load_corpus,
    write_corpus,
)
from .explain import (
    extract_attentions,
    render_heatmap,
    topk_entropy_analysis,
    write_report,
)
from .gradcheck import finite_diff_check
from .model import ABLATION_FLAGS, JointModel, ModelConfig, config_from_flags
from .synth import default_grammar, generate_synthetic_corpus
from .train import (
    RunConfig,
    TrainingDivergedError,
    curve_to_tsv,
    evaluate,
    metrics_to_tsv,
    train_model,
)

DEFAULT_K_LIST = [5.0, 10.0, 100.0]
DEFAULT_ABLATION_MODES = ["full", *ABLATION_FLAGS[:3], ABLATION_FLAGS[4]]

_RUN_DEFAULTS = {f.name: f.default for f in fields(RunConfig)}

ERROR_CATEGORIES: list[tuple[type[Exception], str]] = [
    (CorpusFormatError, "data error"),
    (BioValidationError, "data error"),
    (UnknownLabelError, "data error"),
    (CheckpointVersionError, "checkpoint error"),
    (CheckpointCorruptError, "checkpoint error"),
    (CheckpointFormatError, "checkpoint error"),
    (TrainingDivergedError, "training error"),
    (FileNotFoundError, "io error"),
    (OSError, "io error"),
    (ValueError, "usage error"),
]


def _add_model_size_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=_RUN_DEFAULTS["d"])
    p.add_argument("--d-h", type=int, default=_RUN_DEFAULTS["d_h"])
    p.add_argument("--n-layers", type=int, default=_RUN_DEFAULTS["n_layers"])
    p.add_argument("--n-heads", type=int, default=_RUN_DEFAULTS["n_heads"])
    p.add_argument("--ffn-dim", type=int, default=_RUN_DEFAULTS["ffn_dim"])


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", required=True, help="training corpus directory")
    p.add_argument("--dev", default="", help="dev corpus directory (reporting only)")
    p.add_argument("--test", default="", help="held-out corpus directory")
    p.add_argument("--out", default=_RUN_DEFAULTS["output_dir"], help="output directory")
    p.add_argument("--seed", type=int, default=_RUN_DEFAULTS["seed"])
    p.add_argument("--epochs", type=int, default=_RUN_DEFAULTS["epochs"])
    p.add_argument("--batch-size", type=int, default=_RUN_DEFAULTS["batch_size"])
    p.add_argument("--lr", type=float, default=_RUN_DEFAULTS["lr"])
    p.add_argument("--dropout", type=float, default=_RUN_DEFAULTS["dropout"])
    _add_model_size_flags(p)
    p.add_argument("--alpha", type=float, default=_RUN_DEFAULTS["alpha"])
    p.add_argument("--beta", type=float, default=_RUN_DEFAULTS["beta"])
    p.add_argument("--gamma", type=float, default=_RUN_DEFAULTS["gamma"])
    p.add_argument("--max-len", type=int, default=_RUN_DEFAULTS["max_len"])


def _add_ablation_flags(p: argparse.ArgumentParser) -> None:
    for flag in ABLATION_FLAGS:
        p.add_argument(f"--{flag.replace('_', '-')}", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="slotlens",
        description="Explainable joint intent detection and slot filling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    p = commands["train"] = sub.add_parser("train", help="train a model")
    _add_train_flags(p)
    _add_ablation_flags(p)
    p.add_argument("--save-optimizer", action="store_true",
                   help="persist Adam state in the checkpoint")
    p.add_argument("--config", default="", help="key=value config file")

    p = commands["eval"] = sub.add_parser("eval", help="score a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", default="", help="metrics TSV path (default: stdout only)")
    p.add_argument("--config", default="")

    p = commands["explain"] = sub.add_parser(
        "explain", help="render per-type attention heatmaps for one utterance"
    )
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True, help="whitespace-tokenized utterance")
    p.add_argument("--types", nargs="*", default=None,
                   help="slot types to render (default: all)")
    p.add_argument("--out", default="explain", help="output directory")
    p.add_argument("--config", default="")

    p = commands["analyze"] = sub.add_parser(
        "analyze", help="top-k%% attention entropy study over a corpus"
    )
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=float, nargs="+", default=DEFAULT_K_LIST)
    p.add_argument("--granularity", choices=("matrix", "rows"), default="matrix")
    p.add_argument("--include-outside", action="store_true")
    p.add_argument("--out", default="", help="entropy TSV path (default: stdout only)")
    p.add_argument("--config", default="")

    p = commands["ablate"] = sub.add_parser(
        "ablate", help="train one model per ablation mode and tabulate"
    )
    _add_train_flags(p)
    p.add_argument("--modes", nargs="+", default=DEFAULT_ABLATION_MODES,
                   help='"full" or ablation flag names')
    p.add_argument("--config", default="")

    p = commands["gradcheck"] = sub.add_parser(
        "gradcheck", help="finite-difference gradient audit on a tiny model"
    )
    p.add_argument("--out", default="", help="plain-text report path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-6, help="perturbation size")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--config", default="")

    p = commands["synth"] = sub.add_parser(
        "synth", help="emit a seeded synthetic corpus"
    )
    p.add_argument("--out", required=True, help="corpus directory to create")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default="")

    return parser, commands


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key=value`` lines; blank lines and # comments allowed."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_TRUTHY = {"1", "true", "yes", "on"}
_FALSY = {"0", "false", "no", "off"}


def _apply_config_file(subparser: argparse.ArgumentParser, raw: dict[str, str]) -> None:
    """Install config-file values as subparser defaults so flags still win."""
    actions = {a.dest: a for a in subparser._actions}
    overrides = {}
    for key, value in raw.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("help", "config"):
            raise ValueError(f"unknown config key {key!r}")
        action = actions[dest]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = value.lower()
            if low not in _TRUTHY | _FALSY:
                raise ValueError(f"config key {key!r} expects a boolean, got {value!r}")
            overrides[dest] = low in _TRUTHY
        elif action.nargs in ("+", "*"):
            overrides[dest] = [action.type(v) if action.type else v for v in value.split()]
        elif action.type is not None:
            overrides[dest] = action.type(value)
        else:
            overrides[dest] = value
    subparser.set_defaults(**overrides)


def _run_config_from_args(args: argparse.Namespace) -> RunConfig:
    kw = dict(
        train_path=args.train,
        dev_path=args.dev,
        test_path=args.test,
        output_dir=args.out,
        seed=args.seed,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        dropout=args.dropout,
        d=args.d,
        d_h=args.d_h,
        n_layers=args.n_layers,
        n_heads=args.n_heads,
        ffn_dim=args.ffn_dim,
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        max_len=args.max_len,
    )
    for flag in ABLATION_FLAGS:
        kw[flag] = getattr(args, flag, False)
    return RunConfig(**kw)


def _load_training_data(run: RunConfig):
    corpus = load_corpus(run.train_path)
    maps = build_label_maps(corpus)
    vocab = Vocab.build(corpus)
    dev = load_corpus(run.dev_path) if run.dev_path else None
    test = load_corpus(run.test_path) if run.test_path else None
    return corpus, maps, vocab, dev, test


def cmd_train(args: argparse.Namespace) -> int:
    run = _run_config_from_args(args)
    corpus, maps, vocab, dev, test = _load_training_data(run)
    result = train_model(corpus, maps, vocab, run, dev_corpus=dev)
    out = Path(run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        out / "checkpoint.ckpt",
        result.model,
        maps,
        vocab,
        metadata={"epoch": run.epochs, "seed": run.seed},
        include_optimizer=args.save_optimizer,
    )
    write_report(curve_to_tsv(result.curve), out / "train_curve.tsv")
    train_metrics = evaluate(result.model, corpus, maps, vocab, run.max_len,
                             run.batch_size)
    write_report(metrics_to_tsv(train_metrics), out / "train_metrics.tsv")
    print(f"train: intent_accuracy={train_metrics.intent_accuracy:.4f} "
          f"slot_f1={train_metrics.slot_f1:.4f}")
    if test is not None:
        test_metrics = evaluate(result.model, test, maps, vocab, run.max_len,
                                run.batch_size)
        write_report(metrics_to_tsv(test_metrics), out / "test_metrics.tsv")
        print(f"test: intent_accuracy={test_metrics.intent_accuracy:.4f} "
              f"slot_f1={test_metrics.slot_f1:.4f}")
    print(f"checkpoint: {out / 'checkpoint.ckpt'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    corpus = load_corpus(args.data)
    metrics = evaluate(model, corpus, ckpt.label_maps, ckpt.vocab)
    text = metrics_to_tsv(metrics)
    if args.out:
        write_report(text, args.out)
    print(text, end="")
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    maps = ckpt.label_maps
    tokens = args.text.split()
    if not tokens:
        raise ValueError("utterance text is empty")
    utterance = Utterance(tokens=tokens, intent=maps.intents[0],
                          bio_tags=["O"] * len(tokens))
    bundle = extract_attentions(model, utterance, maps, ckpt.vocab,
                                include_outside=True)
    wanted = args.types if args.types else maps.slot_types
    unknown = [t for t in wanted if t not in maps.slot_types]
    if unknown:
        raise ValueError(
            f"unknown slot types {unknown}; valid types: {maps.slot_types}"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in wanted:
        render_heatmap(bundle, t, out / f"attention_{t}.html")
    lines = ["type\ti\tj\tweight"]
    for t in maps.slot_types:
        m = bundle.matrices[t]
        for i in range(len(tokens)):
            for j in range(len(tokens)):
                lines.append(f"{t}\t{i}\t{j}\t{m[i, j]:.10g}")
    write_report("\n".join(lines) + "\n", out / "bundle.tsv")
    print(f"wrote {len(wanted)} heatmaps and bundle.tsv to {out}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    corpus = load_corpus(args.data)
    report = topk_entropy_analysis(
        model, corpus, args.k, ckpt.label_maps, ckpt.vocab,
        granularity=args.granularity, include_outside=args.include_outside,
    )
    text = report.to_tsv()
    if args.out:
        write_report(text, args.out)
    print(text, end="")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    base = _run_config_from_args(args)
    corpus, maps, vocab, dev, test = _load_training_data(base)
    eval_corpus = test if test is not None else corpus
    eval_name = "test" if test is not None else "train"
    rows = []
    for mode in args.modes:
        if mode == "full":
            run = base
        elif mode in ABLATION_FLAGS:
            run = replace(base, **{mode: True})
        else:
            raise ValueError(
                f"unknown ablation mode {mode!r}; valid: full, "
                + ", ".join(ABLATION_FLAGS)
            )
        result = train_model(corpus, maps, vocab, run, dev_corpus=dev)
        metrics = evaluate(result.model, eval_corpus, maps, vocab, run.max_len,
                           run.batch_size)
        rows.append((mode, metrics.intent_accuracy, metrics.slot_f1,
                     result.model.n_params()))
    lines = [f"mode\tintent_accuracy\tslot_f1\tn_params\t# scored on {eval_name}"]
    for mode, acc, f1, n in rows:
        lines.append(f"{mode}\t{acc:.10g}\t{f1:.10g}\t{n}")
    out = Path(base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report("\n".join(lines) + "\n", out / "ablation.tsv")
    for line in lines:
        print(line)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    corpus = [
        Utterance(["fly", "to", "boston", "now"], "book_flight",
                  ["O", "O", "B-city", "O"]),
        Utterance(["rain", "on", "monday"], "get_weather",
                  ["O", "O", "B-day"]),
    ]
    maps = build_label_maps(corpus)
    vocab = Vocab.build(corpus)
    config = ModelConfig(
        vocab_size=len(vocab), n_intents=maps.n_intents,
        n_slot_types=maps.n_slot_types, n_bio_labels=maps.n_bio_labels,
        d=8, d_h=4, n_layers=1, n_heads=2, ffn_dim=12, max_positions=8,
        dropout_rate=0.0,
    )
    model = JointModel(config, rng=np.random.default_rng(args.seed),
                       dtype=np.float64)
    from .data import encode_batch

    batch = encode_batch(corpus, maps, vocab)

    def loss():
        return model.forward(batch).loss_total

    report = finite_diff_check(loss, model.params, h=args.h, tol=args.tol)
    text = report.format()
    if args.out:
        write_report(text, args.out)
    print(text.splitlines()[-1])
    if not report.passed:
        print("gradient audit failed", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    corpus = generate_synthetic_corpus(args.seed, args.n, default_grammar())
    write_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} utterances to {args.out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "explain": cmd_explain,
    "analyze": cmd_analyze,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()

    command = next((a for a in argv if not a.startswith("-")), None)
    try:
        config_path = None
        for i, a in enumerate(argv):
            if a == "--config" and i + 1 < len(argv):
                config_path = argv[i + 1]
            elif a.startswith("--config="):
                config_path = a.split("=", 1)[1]
        if command in commands and config_path:
            _apply_config_file(commands[command], parse_config_file(config_path))
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except tuple(cls for cls, _ in ERROR_CATEGORIES) as e:
        for cls, category in ERROR_CATEGORIES:
            if isinstance(e, cls):
                print(f"{category}: {e}", file=sys.stderr)
                return 1
        raise  # unreachable


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands cover the whole workflow: generate a synthetic corpus, project
prompt-level supervision onto tagger output, train the four models, tune the
grouping threshold, run the pipeline, and score predictions against gold.

Exit codes: 0 on success, 1 when the inputs are invalid (bad file, bad
config, bad flag combination), 2 on any other failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, default_config, load_config
from .corpus import load_corpus, write_corpus, write_predictions
from .encoders import build_encoder
from .errors import ClintrexError, InputError
from .extraction import EvidenceSentenceClassifier, MentionTagger
from .inference import DirectionClassifier
from .linking import InterventionLinker
from .metrics import evaluate_documents
from .pipeline import EvidencePipeline
from .samples import load_samples, write_samples
from .supervision import (
    build_samples_from_annotations,
    build_training_corpus,
    load_prompts,
    tune_threshold,
    write_prompts,
)
from .synth import SynthOptions, generate_corpus

logger = logging.getLogger(__name__)


def _encoder_from(cfg: RunConfig):
    e = cfg.encoder
    return build_encoder(e.name, e.dim, e.seed, e.model_path, e.max_tokens)


def _config_from(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _require_out(args: argparse.Namespace) -> Path:
    if not args.out:
        raise InputError("this command requires --out")
    return Path(args.out)


def _carve_dev(items: list) -> tuple[list, list]:
    """Last tenth (at least one item) becomes the dev set."""
    if len(items) < 2:
        raise InputError("need at least 2 training items to carve a dev split")
    n_dev = max(1, len(items) // 10)
    return items[:-n_dev], items[-n_dev:]


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    out_dir = _require_out(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    sizes = {"train": args.train, "dev": args.dev, "test": args.test}
    meta: dict[str, dict] = {"seed": cfg.seed, "splits": {}}
    for name, n_docs in sizes.items():
        if n_docs <= 0:
            continue
        heldout = args.heldout_fraction if name == "test" else 0.0
        docs, prompts, doc_meta = generate_corpus(
            SynthOptions(n_docs, cfg.seed, heldout, doc_prefix=f"synth-{name}")
        )
        write_corpus(docs, out_dir / f"{name}.jsonl")
        write_prompts(prompts, out_dir / f"{name}.prompts.jsonl")
        if name != "test":
            samples = build_samples_from_annotations(
                docs,
                cfg.seed,
                cfg.supervision.evidence_negatives_per_positive,
                cfg.supervision.link_negatives_per_positive,
            )
            write_samples(samples, out_dir / f"{name}.samples.jsonl")
        meta["splits"][name] = {
            "documents": len(docs),
            "relations": sum(len(d.relations) for d in docs),
            "docs": doc_meta,
        }
    with open(out_dir / "meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _print_json(
        {
            name: {"documents": s["documents"], "relations": s["relations"]}
            for name, s in meta["splits"].items()
        }
    )
    return 0


def _cmd_build_distant(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    out_path = _require_out(args)
    annotated = load_corpus(args.docs)
    prompts = load_prompts(args.prompts)
    backend = _encoder_from(cfg)
    if args.tagger:
        tagger = MentionTagger.load(args.tagger)
        mentions_by_doc = {
            ad.doc_id: tagger.predict_document(ad.document) for ad in annotated
        }
    else:
        missing = [ad.doc_id for ad in annotated if not ad.mentions]
        if missing:
            raise InputError(
                "without --tagger the input corpus must carry mentions; "
                f"missing for {missing[:3]}..."
            )
        mentions_by_doc = {ad.doc_id: list(ad.mentions) for ad in annotated}
    threshold = args.threshold if args.threshold is not None else cfg.grouping.threshold
    built, samples, report = build_training_corpus(
        [ad.document for ad in annotated],
        prompts,
        mentions_by_doc,
        backend,
        threshold,
        cfg.seed,
        cfg.supervision.evidence_negatives_per_positive,
        cfg.supervision.link_negatives_per_positive,
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(built, out_path)
    samples_path = out_path.with_suffix(".samples.jsonl")
    write_samples(samples, samples_path)
    _print_json(report.to_dict())
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    out_path = _require_out(args)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    backend = _encoder_from(cfg)

    if args.model == "tagger":
        train_docs = load_corpus(args.train)
        if args.dev:
            dev_docs = load_corpus(args.dev)
        else:
            train_docs, dev_docs = _carve_dev(train_docs)
        tagger = MentionTagger(
            encoder=backend,
            hidden_size=cfg.tagger.hidden_size,
            learning_rate=cfg.tagger.learning_rate,
            max_epochs=cfg.tagger.max_epochs,
            patience=cfg.tagger.patience,
            seed=cfg.seed,
        )
        tagger.fit(train_docs, dev_docs)
        tagger.save(out_path)
        _print_json(
            {
                "model": "tagger",
                "epochs_run": tagger.epochs_run_,
                "dev_token_f1": round(tagger.dev_f1_, 6),
            }
        )
        return 0

    key = {"evidence": "evidence", "linker": "link", "inference": "infer"}[args.model]
    train_samples = load_samples(args.samples)[key]
    if not train_samples:
        raise InputError(f"{args.samples} contains no {key!r} samples")
    if args.dev_samples:
        dev_samples = load_samples(args.dev_samples)[key]
    else:
        train_samples, dev_samples = _carve_dev(train_samples)

    if args.model == "evidence":
        model = EvidenceSentenceClassifier(
            encoder=backend,
            learning_rate=cfg.evidence.learning_rate,
            max_epochs=cfg.evidence.max_epochs,
            patience=cfg.evidence.patience,
            l2=cfg.evidence.l2,
            threshold=cfg.evidence.threshold,
        )
    elif args.model == "linker":
        model = InterventionLinker(
            encoder=backend,
            learning_rate=cfg.linker.learning_rate,
            max_epochs=cfg.linker.max_epochs,
            patience=cfg.linker.patience,
            l2=cfg.linker.l2,
        )
    else:
        model = DirectionClassifier(
            encoder=backend,
            learning_rate=cfg.inference.learning_rate,
            max_epochs=cfg.inference.max_epochs,
            patience=cfg.inference.patience,
            l2=cfg.inference.l2,
            use_comparator=cfg.inference.use_comparator,
        )
    model.fit(train_samples, dev_samples)
    model.save(out_path)
    _print_json(
        {
            "model": args.model,
            "train_samples": len(train_samples),
            "dev_samples": len(dev_samples),
        }
    )
    return 0


def _cmd_tune_threshold(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    docs = load_corpus(args.docs)
    backend = _encoder_from(cfg)
    best, scores = tune_threshold(docs, backend, cfg.grouping.grid)
    for t in sorted(scores):
        print(f"threshold {t:.2f}  mean_b3_f1 {scores[t]:.4f}")
    print(f"best {best:.2f}")
    if args.out:
        payload = {
            "threshold": best,
            "scores": {f"{t:.2f}": scores[t] for t in sorted(scores)},
        }
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _run_pipeline(cfg: RunConfig, args: argparse.Namespace):
    annotated = load_corpus(args.docs if hasattr(args, "docs") else args.gold)
    pipeline = EvidencePipeline.from_config(cfg)
    gold_by_id = {ad.doc_id: ad for ad in annotated}
    predicted, report = pipeline.run(
        [ad.document for ad in annotated],
        gold_by_id,
        gold_mentions=args.gold_mentions,
        gold_evidence=args.gold_evidence,
        gold_links=args.gold_links,
    )
    return annotated, predicted, report


def _cmd_predict(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    out_path = _require_out(args)
    _, predicted, report = _run_pipeline(cfg, args)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(predicted, out_path)
    if args.tuples:
        write_predictions(
            [r for ad in predicted for r in ad.relations], args.tuples
        )
    _print_json(report.to_dict())
    return 0


def _write_evaluation(out_dir: Path, gold, predicted) -> None:
    report = evaluate_documents(gold, predicted)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_flat_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    text = report.to_text()
    with open(out_dir / "report.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.write("\n")
    print(text)


def _cmd_evaluate(args: argparse.Namespace) -> int:
    out_dir = _require_out(args)
    gold = load_corpus(args.gold)
    predicted = load_corpus(args.pred)
    _write_evaluation(out_dir, gold, predicted)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    out_dir = _require_out(args)
    gold, predicted, run_report = _run_pipeline(cfg, args)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus(predicted, out_dir / "predictions.jsonl")
    with open(out_dir / "run.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(run_report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_evaluation(out_dir, gold, predicted)
    return 0


def _add_gold_switches(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--gold-mentions",
        action="store_true",
        help="replace tagging and grouping with the gold entity layer",
    )
    parser.add_argument(
        "--gold-evidence",
        action="store_true",
        help="replace evidence sentence detection with gold evidence indices",
    )
    parser.add_argument(
        "--gold-links",
        action="store_true",
        help="replace role linking with gold roles (requires --gold-mentions)",
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output file or directory")
    common.add_argument(
        "--verbose", action="store_true", help="log progress at INFO level"
    )

    parser = argparse.ArgumentParser(
        prog="clintrex",
        description="Extract comparative clinical findings from trial abstracts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--train", type=int, default=500, help="training documents")
    p.add_argument("--dev", type=int, default=60, help="development documents")
    p.add_argument("--test", type=int, default=100, help="test documents")
    p.add_argument(
        "--heldout-fraction",
        type=float,
        default=0.5,
        help="share of test documents drawn from held-out vocabulary",
    )
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser(
        "build-distant",
        parents=[common],
        help="project prompts onto mentions to build a training corpus",
    )
    p.add_argument("--docs", required=True, help="corpus to annotate")
    p.add_argument("--prompts", required=True, help="prompt supervision file")
    p.add_argument("--tagger", help="tagger checkpoint; omit to reuse gold mentions")
    p.add_argument("--threshold", type=float, help="override grouping threshold")
    p.set_defaults(func=_cmd_build_distant)

    p = sub.add_parser("train", parents=[common], help="train one model")
    tsub = p.add_subparsers(dest="model", required=True)
    t = tsub.add_parser("tagger", parents=[common], help="mention tagger")
    t.add_argument("--train", required=True, help="annotated training corpus")
    t.add_argument("--dev", help="annotated dev corpus; defaults to a carved tenth")
    t.set_defaults(func=_cmd_train)
    for name in ("evidence", "linker", "inference"):
        t = tsub.add_parser(name, parents=[common], help=f"{name} classifier")
        t.add_argument("--samples", required=True, help="training samples file")
        t.add_argument("--dev-samples", help="dev samples; defaults to a carved tenth")
        t.set_defaults(func=_cmd_train)

    p = sub.add_parser(
        "tune-threshold",
        parents=[common],
        help="pick the mention grouping threshold on annotated documents",
    )
    p.add_argument("--docs", required=True, help="annotated documents to tune on")
    p.set_defaults(func=_cmd_tune_threshold)

    p = sub.add_parser("predict", parents=[common], help="run the pipeline")
    p.add_argument("--docs", required=True, help="input corpus")
    p.add_argument("--tuples", help="also write flat relation tuples here")
    _add_gold_switches(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions")
    p.add_argument("--gold", required=True, help="gold corpus")
    p.add_argument("--pred", required=True, help="predicted corpus")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser(
        "report", parents=[common], help="predict and evaluate in one step"
    )
    p.add_argument("--gold", required=True, help="gold corpus to predict on and score")
    _add_gold_switches(p)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ClintrexError, OSError, ValueError, RuntimeError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

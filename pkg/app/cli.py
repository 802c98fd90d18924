"""
Command Line Interface

    python -m app.cli run --config configs/ricl_tacred.ini [--seed N] [--out DIR]
    python -m app.cli ablate --config configs/ricl_tacred.ini
    python -m app.cli sweep --config configs/ricl_tacred.ini --noise 0.2,0.4 --order reverse
    python -m app.cli gen-corpus --classes 20 --per-class 300 --out data/corpus.jsonl
    python -m app.cli report --dir runs
    python -m app.cli serve

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from app.config.loader import apply_overrides, parse_config
from app.config.settings import configure_logging, get_settings
from app.errors import ConfigError
from app.models.config import ExperimentConfig
from app.services.experiment_service import ExperimentService, report
from app.stream.corpus import generate_synthetic_corpus, write_corpus

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _parse_overrides(pairs: Optional[List[str]]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(pair, "override must look like section.key=value")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig(output_dir=get_settings().output_dir)
    overrides: Dict[str, object] = _parse_overrides(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = [args.seed]
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return apply_overrides(cfg, overrides) if overrides else cfg


# =====================================================
# COMMANDS
# =====================================================

def cmd_run(args: argparse.Namespace) -> int:
    summary = ExperimentService().run_experiment(_load(args))
    print(summary.summary)
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    rows = ExperimentService().ablate(cfg)
    print((Path(cfg.output_dir) / "ablation.md").read_text(encoding="utf-8"))
    logger.info(f"Ablation finished: {len(rows)} rows")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    noise = None
    if args.noise:
        try:
            noise = [float(v) for v in args.noise.split(",") if v.strip()]
        except ValueError as e:
            raise ConfigError("--noise", f"expected comma-separated rates: {e}") from e
    rows = ExperimentService().sweep(cfg, noise, args.order)
    print((Path(cfg.output_dir) / "sweep.md").read_text(encoding="utf-8"))
    logger.info(f"Sweep finished: {len(rows)} rows")
    return EXIT_OK


def cmd_gen_corpus(args: argparse.Namespace) -> int:
    try:
        corpus = generate_synthetic_corpus(
            num_classes=args.classes,
            docs_per_class=args.per_class,
            vocab_size=args.vocab,
            seed=args.seed,
            doc_length=args.doc_length,
            keyword_rate=args.keyword_rate
        )
    except ValueError as e:
        raise ConfigError("gen-corpus", str(e)) from e
    corpus_path, synonyms_path = write_corpus(corpus, args.out)
    print(f"Wrote {len(corpus.documents)} documents to {corpus_path} (synonyms: {synonyms_path})")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    markdown = report(args.dir)
    if args.out:
        Path(args.out).write_text(markdown, encoding="utf-8")
    print(markdown)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port or get_settings().port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ricl", description="RiCL continual-learning simulator")
    parser.add_argument("--log-level", default=None, help="Overrides RICL_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI experiment config (defaults when omitted)")
        p.add_argument("--out", help="Output directory (overrides output_dir)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="Config override, repeatable")

    p = sub.add_parser("run", help="Run an experiment over its seeds")
    experiment_args(p)
    p.add_argument("--seed", type=int, help="Run a single seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="Run the TCP/NCL/IPO ablation grid")
    experiment_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="Sweep noise rates and/or task orders")
    experiment_args(p)
    p.add_argument("--noise", help="Comma-separated noise rates, e.g. 0.2,0.3,0.4,0.5")
    p.add_argument("--order", action="append", help="Task order: original, reverse or a permutation; repeatable")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-corpus", help="Write a synthetic corpus as JSONL")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab", type=int, default=1000)
    p.add_argument("--doc-length", type=int, default=20)
    p.add_argument("--keyword-rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("report", help="Markdown AP/AF tables for a run directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", help="Also write the markdown to this file")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="Start the HTTP service")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

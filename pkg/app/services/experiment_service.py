"""
Experiment Service

Runs configured experiments across seeds, the component ablation grid and
noise-rate / task-order sweeps, and renders markdown reports from run
directories.
"""
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.augment.eda import load_default_synonyms
from app.buffers.bounded import BufferSet
from app.config.loader import apply_overrides, write_config
from app.errors import ConfigError
from app.models.config import ExperimentConfig, Method
from app.models.reports import AblationRow, RunSummary, SeedResult, SweepRow
from app.models.sample import LabeledCorpus
from app.nn.core import ModelParams, TextEncoder
from app.rng import derive_rng
from app.services.metrics_service import AccuracyMatrix, ap, af, evaluate, mean_std, write_summary_csv
from app.services.purifier_service import TemporalConsistencyPurifier
from app.services.trainer_service import RiclTrainer
from app.stream.builder import DelayStream, build_stream, dump_stream
from app.stream.corpus import generate_synthetic_corpus, load_jsonl_corpus, load_synonyms

logger = logging.getLogger(__name__)

# All-on, -IPO, -NCL, -TCP
ABLATION_GRID = (
    {"tcp": True, "ncl": True, "ipo": True},
    {"tcp": True, "ncl": True, "ipo": False},
    {"tcp": True, "ncl": False, "ipo": True},
    {"tcp": False, "ncl": True, "ipo": True},
)

DEFAULT_NOISE_RATES = (0.2, 0.3, 0.4, 0.5)


def run_name(cfg: ExperimentConfig) -> str:
    """Directory name for a run: method plus any disabled components"""
    if cfg.method != Method.RICL:
        return cfg.method.value
    disabled = [name for name, on in cfg.ablation.model_dump().items() if not on]
    return "ricl" if not disabled else "ricl-no_" + "_".join(disabled)


def _seed_int(seed: int, purpose: str) -> int:
    return int(derive_rng(seed, purpose).integers(2 ** 31 - 1))


class ExperimentService:
    """Service for running experiments and building result tables"""

    def __init__(self, corpus: Optional[LabeledCorpus] = None):
        # A fixed corpus overrides cfg.corpus for every run (used by tests)
        self.corpus = corpus

    # =====================================================
    # CORPUS
    # =====================================================

    def load_corpus(self, cfg: ExperimentConfig, seed: int) -> LabeledCorpus:
        """The configured corpus; synthetic corpora are regenerated per seed"""
        if self.corpus is not None:
            return self.corpus
        if cfg.corpus.source == "synthetic":
            return generate_synthetic_corpus(
                num_classes=cfg.stream.num_tasks * cfg.stream.classes_per_task,
                docs_per_class=cfg.corpus.docs_per_class,
                vocab_size=cfg.corpus.vocab_size,
                seed=seed,
                doc_length=cfg.corpus.doc_length,
                keyword_rate=cfg.corpus.keyword_rate
            )
        path = Path(cfg.corpus.source)
        if not path.is_file():
            raise ConfigError("corpus.source", f"corpus file '{path}' not found")
        return load_jsonl_corpus(path)

    def synonym_table(self, cfg: ExperimentConfig, corpus: LabeledCorpus) -> Dict[str, List[str]]:
        """Bundled table, then the corpus table, then [augment] synonym_path"""
        table = load_default_synonyms()
        table.update(corpus.synonyms)
        if cfg.augment.synonym_path:
            path = Path(cfg.augment.synonym_path)
            if not path.is_file():
                raise ConfigError("augment.synonym_path", f"synonym file '{path}' not found")
            table.update(load_synonyms(path))
        return table

    # =====================================================
    # SINGLE SEED
    # =====================================================

    def run_seed(self, cfg: ExperimentConfig, seed: int, out_dir: Path) -> SeedResult:
        """
        Build the stream for one seed, train across tasks in order and evaluate.

        Args:
            cfg: Validated experiment config
            seed: Run seed
            out_dir: Seed artifact directory (created)

        Returns:
            SeedResult with AP/AF and the matrix diagonal / final row
        """
        out_dir.mkdir(parents=True, exist_ok=True)
        stream_seed = cfg.stream.seed + seed
        corpus = self.load_corpus(cfg, stream_seed)
        bundle = build_stream(corpus, cfg.stream.model_copy(update={"seed": stream_seed}))
        order = cfg.resolved_task_order()
        if cfg.dump_stream:
            dump_stream(bundle.tasks, out_dir / "stream.jsonl", order)

        encoder = TextEncoder(cfg.model.hash_dim, cfg.model.hash_seed)
        augment_cfg = cfg.augment.model_copy(update={
            "seed": cfg.augment.seed + seed,
            "synonym_table": self.synonym_table(cfg, corpus)
        })
        dims = dict(
            num_classes=bundle.num_classes,
            hash_dim=cfg.model.hash_dim,
            embed_dim=cfg.model.embed_dim,
            hidden_dim=cfg.model.hidden_dim,
            scale=cfg.model.init_scale
        )
        flags = cfg.pipeline_flags()
        purifier = None
        if flags.purify:
            purifier = TemporalConsistencyPurifier(
                ModelParams.initialize(seed=_seed_int(seed, "init_purifier"), **dims),
                cfg.purifier,
                encoder,
                derive_rng(seed, "purifier")
            )

        buffer_dump = out_dir / "buffers.jsonl" if cfg.dump_buffers else None
        if buffer_dump is not None and buffer_dump.exists():
            buffer_dump.unlink()
        trainer = RiclTrainer(
            model=ModelParams.initialize(seed=_seed_int(seed, "init_model"), **dims),
            purifier=purifier,
            buffers=BufferSet(cfg.buffers),
            train_cfg=cfg.train,
            augment_cfg=augment_cfg,
            flags=flags,
            encoder=encoder,
            seed=seed,
            buffer_dump_path=buffer_dump
        )

        tasks = {task.task_id: task for task in bundle.tasks}
        matrix = AccuracyMatrix(len(order))
        with (out_dir / "cycles.jsonl").open("w", encoding="utf-8") as cycles:
            for position, task_id in enumerate(order):
                stream = DelayStream(tasks[task_id].samples, cfg.stream.delay_buffer_size, encoder)
                while not stream.exhausted:
                    report = trainer.process_cycle(stream, task_id, position)
                    cycles.write(report.model_dump_json() + "\n")
                for j in range(position + 1):
                    matrix.record(position, j, evaluate(trainer.model, bundle.test_sets[order[j]], encoder))
                logger.info(
                    f"Seed {seed}: after task {task_id} ({position + 1}/{len(order)}) "
                    f"accuracy {matrix.m[position, :position + 1].round(2).tolist()}"
                )

        matrix.to_csv(out_dir / "accuracy_matrix.csv")
        write_summary_csv(matrix, out_dir / "summary.csv")
        pending = trainer.pending_count()
        if pending:
            logger.info(f"Seed {seed}: {pending} routed sample(s) left without a recheck")

        return SeedResult(
            seed=seed,
            ap=ap(matrix),
            af=af(matrix) if matrix.num_tasks >= 2 else None,
            final_row=matrix.final_row().tolist(),
            diagonal=matrix.diagonal().tolist(),
            cycles=trainer.cycle,
            pending_unpromoted=pending,
            output_dir=str(out_dir)
        )

    # =====================================================
    # EXPERIMENTS
    # =====================================================

    def run_experiment(self, cfg: ExperimentConfig, name: Optional[str] = None) -> RunSummary:
        """
        Run every seed of a config and aggregate AP/AF.

        Args:
            cfg: Validated experiment config
            name: Run directory name under cfg.output_dir (default: run_name(cfg))

        Returns:
            RunSummary (also written to summary.json)
        """
        started_at = datetime.utcnow()
        out_dir = Path(cfg.output_dir) / (name or run_name(cfg))
        out_dir.mkdir(parents=True, exist_ok=True)
        write_config(cfg, out_dir / "config.ini")
        logger.info(f"Running {run_name(cfg)} over seeds {cfg.seeds} -> {out_dir}")

        results: List[SeedResult] = []
        for seed in cfg.seeds:
            try:
                results.append(self.run_seed(cfg, seed, out_dir / f"seed_{seed}"))
            except Exception as e:
                logger.error(f"Run {out_dir.name} failed on seed {seed}: {e}", exc_info=True)
                raise

        ap_mean, ap_std = mean_std([r.ap for r in results])
        af_mean, af_std = mean_std([r.af for r in results if r.af is not None])
        completed_at = datetime.utcnow()

        summary = RunSummary(
            status="success",
            method=cfg.method.value,
            ablation=cfg.ablation.model_dump(),
            task_order=cfg.resolved_task_order(),
            noise_rate=cfg.stream.noise_rate,
            seeds=list(cfg.seeds),
            ap_mean=ap_mean,
            ap_std=ap_std,
            af_mean=af_mean,
            af_std=af_std,
            per_seed=results,
            started_at=started_at,
            completed_at=completed_at,
            duration_seconds=(completed_at - started_at).total_seconds(),
            output_dir=str(out_dir),
            summary=_format_result(run_name(cfg), ap_mean, ap_std, af_mean, af_std)
        )
        (out_dir / "summary.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
        logger.info(summary.summary)
        return summary

    def ablate(self, cfg: ExperimentConfig) -> List[AblationRow]:
        """Run the four ablation rows (all-on, -IPO, -NCL, -TCP) and write ablation.csv/.md"""
        if cfg.method != Method.RICL:
            raise ConfigError("experiment.method", "ablation requires method=ricl")
        rows = []
        for flags in ABLATION_GRID:
            variant = apply_overrides(cfg, {f"ablation.{k}": v for k, v in flags.items()})
            summary = self.run_experiment(variant)
            rows.append(AblationRow(
                **variant.ablation.model_dump(),
                ap_mean=summary.ap_mean,
                ap_std=summary.ap_std,
                af_mean=summary.af_mean,
                af_std=summary.af_std
            ))
        _write_table(rows, Path(cfg.output_dir) / "ablation")
        return rows

    def sweep(
        self,
        cfg: ExperimentConfig,
        noise_rates: Optional[Sequence[float]] = None,
        task_orders: Optional[Sequence[str]] = None
    ) -> List[SweepRow]:
        """
        One run per noise rate and/or per task order.

        With neither axis given, sweeps the default noise rates.
        """
        if noise_rates is None and task_orders is None:
            noise_rates = DEFAULT_NOISE_RATES
        rows: List[SweepRow] = []
        for rate in noise_rates or ():
            variant = apply_overrides(cfg, {"stream.noise_rate": rate})
            summary = self.run_experiment(variant, name=f"{run_name(cfg)}-noise_{rate:g}")
            rows.append(_sweep_row("noise_rate", f"{rate:g}", summary))
        for order in task_orders or ():
            variant = apply_overrides(cfg, {"task_order": order})
            label = order.replace(",", "-").replace(" ", "")
            summary = self.run_experiment(variant, name=f"{run_name(cfg)}-order_{label}")
            rows.append(_sweep_row("task_order", order, summary))
        _write_table(rows, Path(cfg.output_dir) / "sweep")
        return rows


def _format_result(name: str, ap_mean, ap_std, af_mean, af_std) -> str:
    af_text = "n/a" if af_mean is None else f"{af_mean:.2f} ± {af_std:.2f}"
    return f"{name}: AP {ap_mean:.2f} ± {ap_std:.2f}, AF {af_text}"


def _sweep_row(axis: str, value: str, summary: RunSummary) -> SweepRow:
    return SweepRow(
        axis=axis,
        value=value,
        ap_mean=summary.ap_mean,
        ap_std=summary.ap_std,
        af_mean=summary.af_mean,
        af_std=summary.af_std
    )


def _write_table(rows: Sequence, stem: Path) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([row.model_dump() for row in rows])
    frame.to_csv(stem.with_suffix(".csv"), index=False, float_format="%.4f")
    stem.with_suffix(".md").write_text(_markdown(frame) + "\n", encoding="utf-8")


# =====================================================
# REPORTS
# =====================================================

def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "n/a"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def _markdown(frame: pd.DataFrame) -> str:
    """Plain pipe table"""
    header = "| " + " | ".join(str(c) for c in frame.columns) + " |"
    rule = "|" + "|".join("---" for _ in frame.columns) + "|"
    body = ["| " + " | ".join(_fmt(v) for v in row) + " |" for row in frame.itertuples(index=False)]
    return "\n".join([header, rule, *body])


def report(run_dir: Union[str, Path]) -> str:
    """
    Markdown report over every run found under run_dir.

    Emits a method comparison table (AP/AF mean ± std) and a per-task
    final-accuracy table averaged over seeds.
    """
    run_dir = Path(run_dir)
    summaries = sorted(run_dir.glob("**/summary.json"))
    if not summaries:
        raise FileNotFoundError(f"No summary.json found under {run_dir}")

    comparison = []
    per_task = []
    for path in summaries:
        summary = RunSummary.model_validate_json(path.read_text(encoding="utf-8"))
        name = path.parent.name
        comparison.append({
            "run": name,
            "method": summary.method,
            "noise": summary.noise_rate,
            "AP": f"{summary.ap_mean:.2f} ± {summary.ap_std:.2f}",
            "AF": "n/a" if summary.af_mean is None else f"{summary.af_mean:.2f} ± {summary.af_std:.2f}"
        })
        final = np.mean([r.final_row for r in summary.per_seed], axis=0)
        row = {"run": name}
        row.update({f"T{j + 1}": float(v) for j, v in enumerate(final)})
        row.update({"AP": summary.ap_mean, "AF": summary.af_mean})
        per_task.append(row)

    sections = [
        f"# Results: {run_dir}",
        "",
        "## AP / AF",
        "",
        _markdown(pd.DataFrame(comparison)),
        "",
        "## Final accuracy per task",
        "",
        _markdown(pd.DataFrame(per_task))
    ]
    return "\n".join(sections) + "\n"

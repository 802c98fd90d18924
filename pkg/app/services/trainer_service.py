"""
Trainer Service

Per-cycle training of the primary model: contrastive learning on samples
flagged noisy, then supervised warmup and preference optimization on
samples flagged clean, each mixed with replay.
"""
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, model_validator
from scipy.special import softmax

from app.augment.eda import augment_all
from app.buffers.bounded import BoundedBuffer, BufferSet, push, sample_batch
from app.models.config import AlternativesSource, AugmentConfig, PipelineFlags, TrainPhaseConfig
from app.models.reports import CycleReport, PhaseLosses, RouteDecision
from app.models.sample import Sample, UnlabeledSample
from app.nn.core import ModelParams, TextEncoder, forward_batch, sgd_step
from app.nn.objectives import (
    PhaseResult,
    classification_objective,
    contrastive_objective,
    minibatch_indices,
    preference_objective
)
from app.rng import derive_rng
from app.services.purifier_service import TemporalConsistencyPurifier
from app.stream.builder import DelayStream, next_delay_buffer

logger = logging.getLogger(__name__)

# Maps samples to [n, |C|] logits used for alternative-label sampling
LogitSource = Callable[[Sequence[Sample]], np.ndarray]


class PreferencePair(BaseModel):
    """The human label preferred over one sampled alternative"""
    sample_id: int
    preferred: int
    rejected: int

    @model_validator(mode="after")
    def _distinct(self) -> "PreferencePair":
        if self.rejected == self.preferred:
            raise ValueError("rejected label must differ from the preferred label")
        return self


# =====================================================
# PREFERENCE PAIRS
# =====================================================

def sample_alternatives(logits: np.ndarray, y: int, L: int, rng: np.random.Generator) -> List[int]:
    """
    Draw L wrong labels with replacement from the softmax over incorrect labels.

    Args:
        logits: [|C|] logits of the model that scores alternatives
        y: Preferred label (never drawn)
        L: Number of draws
        rng: Generator

    Returns:
        L class indices, none equal to y
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[0] < 2:
        raise ValueError("Alternative sampling needs at least two classes")
    if L < 1:
        raise ValueError(f"Number of alternatives must be >= 1, got {L}")
    others = np.delete(np.arange(logits.shape[0]), y)
    probs = softmax(logits[others])
    return [int(c) for c in rng.choice(others, size=L, p=probs)]


def build_preference_pairs(
    samples: Sequence[Sample],
    logits: np.ndarray,
    L: int,
    rng: np.random.Generator
) -> List[PreferencePair]:
    """L pairs per sample, preferring its human label y"""
    pairs = []
    for sample, row in zip(samples, logits):
        for rejected in sample_alternatives(row, sample.y, L, rng):
            pairs.append(PreferencePair(sample_id=sample.id, preferred=sample.y, rejected=rejected))
    return pairs


def _group_alternatives(samples: Sequence[Sample], pairs: Sequence[PreferencePair]) -> List[List[int]]:
    by_id: Dict[int, List[int]] = {s.id: [] for s in samples}
    for pair in pairs:
        by_id[pair.sample_id].append(pair.rejected)
    return [by_id[s.id] for s in samples]


# =====================================================
# BATCHING
# =====================================================

def _mixed_batches(
    current: Sequence,
    replay: Optional[Union[BoundedBuffer, Sequence]],
    batch_size: int,
    replay_mix: float,
    rng: np.random.Generator
) -> List[List]:
    """
    One epoch of batches over `current`, each topped up from `replay`.

    With replay, round(batch_size * replay_mix) slots of every batch come
    from the replay buffer. An empty `current` with a nonempty replay yields
    a single replay-only batch.
    """
    use_replay = replay is not None and len(replay) > 0 and replay_mix > 0
    if not current:
        return [sample_batch(replay, batch_size, rng)] if use_replay else []

    n_replay = int(round(batch_size * replay_mix)) if use_replay else 0
    n_current = max(1, batch_size - n_replay)
    batches = []
    for idx in minibatch_indices(len(current), n_current, rng):
        batch = [current[i] for i in idx]
        if n_replay:
            batch.extend(sample_batch(replay, n_replay, rng))
        batches.append(batch)
    return batches


def _dedupe(samples: Sequence) -> List:
    """Drop repeated sample ids, keeping the first"""
    seen = set()
    out = []
    for s in samples:
        if s.id not in seen:
            seen.add(s.id)
            out.append(s)
    return out


# =====================================================
# PHASES
# =====================================================

def ncl_phase(
    params: ModelParams,
    noisy_current: Sequence[UnlabeledSample],
    replay_noisy: Sequence[UnlabeledSample],
    cfg: TrainPhaseConfig,
    augment_cfg: AugmentConfig,
    encoder: TextEncoder,
    rng: np.random.Generator
) -> PhaseResult:
    """
    Label-free contrastive training on samples flagged noisy.

    Both pools hold UnlabeledSample records only. Anchors are the samples
    themselves, positives their augmented variants, negatives every other
    anchor in the batch together with its variants.

    Raises:
        TypeError: A pool contains a labeled sample
    """
    for pool in (noisy_current, replay_noisy):
        if any(not isinstance(s, UnlabeledSample) for s in pool):
            raise TypeError("Contrastive training takes unlabeled samples only")
    variants_cache: Dict[int, List[List[str]]] = {}

    def variants_of(sample: UnlabeledSample) -> List[List[str]]:
        if sample.id not in variants_cache:
            variants_cache[sample.id] = augment_all(sample.tokens, augment_cfg, sample.id)
        return variants_cache[sample.id]

    losses: List[float] = []
    for _ in range(cfg.epochs):
        batches = _mixed_batches(list(noisy_current), replay_noisy, cfg.batch_size, cfg.replay_mix, rng)
        if not batches:
            break
        total, count = 0.0, 0
        for batch in batches:
            batch = _dedupe(batch)
            anchors = encoder.matrix([s.tokens for s in batch])
            variant_tokens = [v for s in batch for v in variants_of(s)]
            result = contrastive_objective(
                params, anchors, encoder.matrix(variant_tokens), augment_cfg.k, cfg.tau
            )
            params = sgd_step(params, result.grads, cfg.lr_ncl)
            total += result.value * len(batch)
            count += len(batch)
        losses.append(total / count)
    return PhaseResult(params=params, losses=losses)


def sft_phase(
    params: ModelParams,
    clean_current: Sequence[Sample],
    replay_clean: Optional[BoundedBuffer],
    cfg: TrainPhaseConfig,
    encoder: TextEncoder,
    rng: np.random.Generator
) -> PhaseResult:
    """Cross-entropy on (x, y) of clean samples, replay_mix of each batch from replay"""
    losses: List[float] = []
    for _ in range(cfg.epochs):
        batches = _mixed_batches(list(clean_current), replay_clean, cfg.batch_size, cfg.replay_mix, rng)
        if not batches:
            break
        total, count = 0.0, 0
        for batch in batches:
            result = classification_objective(
                params, encoder.matrix([s.tokens for s in batch]), [s.y for s in batch], loss="ce"
            )
            params = sgd_step(params, result.grads, cfg.lr_sft)
            total += result.value * len(batch)
            count += len(batch)
        losses.append(total / count)
    return PhaseResult(params=params, losses=losses)


def ipo_phase(
    params: ModelParams,
    clean_current: Sequence[Sample],
    replay_clean: Optional[BoundedBuffer],
    cfg: TrainPhaseConfig,
    encoder: TextEncoder,
    rng: np.random.Generator,
    alternative_logits: Optional[LogitSource] = None
) -> PhaseResult:
    """
    Preference optimization on clean samples.

    Alternatives are sampled from `alternative_logits` when given (the
    purifier), otherwise from the primary model as it trains. The loss
    always uses the primary model's log-probabilities. Pairs are redrawn
    every epoch unless cfg.freeze_pairs is set.
    """
    if cfg.num_alternatives < 1:
        raise ValueError("IPO needs at least one alternative label")

    def current_logits(samples: Sequence[Sample]) -> np.ndarray:
        return forward_batch(params, encoder.matrix([s.tokens for s in samples])).logits

    scorer = alternative_logits or current_logits
    frozen: Dict[int, List[int]] = {}
    losses: List[float] = []

    for _ in range(cfg.epochs):
        batches = _mixed_batches(list(clean_current), replay_clean, cfg.batch_size, cfg.replay_mix, rng)
        if not batches:
            break
        total, count = 0.0, 0
        for batch in batches:
            batch = _dedupe(batch)
            fresh = [s for s in batch if not (cfg.freeze_pairs and s.id in frozen)]
            if fresh:
                pairs = build_preference_pairs(fresh, scorer(fresh), cfg.num_alternatives, rng)
                for sample, alts in zip(fresh, _group_alternatives(fresh, pairs)):
                    frozen[sample.id] = alts
            result = preference_objective(
                params,
                encoder.matrix([s.tokens for s in batch]),
                [s.y for s in batch],
                [frozen[s.id] for s in batch]
            )
            params = sgd_step(params, result.grads, cfg.lr_ipo)
            total += result.value * len(batch)
            count += len(batch)
        losses.append(total / count)
    return PhaseResult(params=params, losses=losses)


# =====================================================
# CYCLE PIPELINE
# =====================================================

class RiclTrainer:
    """Primary model, purifier and buffers of one seeded run"""

    def __init__(
        self,
        model: ModelParams,
        purifier: Optional[TemporalConsistencyPurifier],
        buffers: BufferSet,
        train_cfg: TrainPhaseConfig,
        augment_cfg: AugmentConfig,
        flags: PipelineFlags,
        encoder: TextEncoder,
        seed: int,
        buffer_dump_path: Optional[Path] = None
    ):
        if flags.purify and purifier is None:
            raise ValueError("Purification enabled but no purifier given")
        self.model = model
        self.purifier = purifier
        self.buffers = buffers
        self.train_cfg = train_cfg
        self.augment_cfg = augment_cfg
        self.flags = flags
        self.encoder = encoder
        self.buffer_rng = derive_rng(seed, "buffers")
        self.trainer_rng = derive_rng(seed, "trainer")
        self.buffer_dump_path = buffer_dump_path
        self.cycle = 0

        # Cumulative noisy-identification audit
        self._noisy_promoted = 0
        self._noisy_promoted_correct = 0
        self._noisy_rechecked = 0

    def _alternative_source(self) -> Optional[LogitSource]:
        """Purifier logits when configured and present; None means the primary model"""
        if self.flags.purify and self.train_cfg.alternatives_source == AlternativesSource.PURIFIER:
            return self.purifier.logits
        return None

    def pending_count(self) -> int:
        """Routed samples still waiting for a recheck"""
        return len(self.buffers.clean) + len(self.buffers.noisy)

    def process_cycle(self, stream: DelayStream, task_id: int, task_position: int) -> CycleReport:
        """
        Run one delay-buffer cycle.

        Steps: pull the buffer (stamping model labels), train the purifier,
        recheck last cycle's partitions, route the arrivals, then NCL on the
        noisy pool, SFT and IPO on the clean pool.

        Args:
            stream: Stream state of the current task
            task_id: Task being streamed
            task_position: Position of the task in the run's order

        Returns:
            CycleReport for this cycle
        """
        self.cycle += 1
        arrivals = next_delay_buffer(stream, self.model)
        agreement = float(np.mean([s.y == s.y_model for s in arrivals]))
        losses = PhaseLosses()
        promotion = None

        if self.flags.purify:
            losses.purifier = self.purifier.train(arrivals)
            promotion = self.purifier.recheck(self.buffers)
            counts = self.purifier.route(arrivals, self.buffers)
            routed_clean, routed_noisy = counts[RouteDecision.CLEAN], counts[RouteDecision.NOISY]
            clean_current = self.buffers.clean.snapshot()
            noisy_current = [s.strip_labels() for s in self.buffers.noisy.snapshot()]
        else:
            routed_clean, routed_noisy = len(arrivals), 0
            clean_current = list(arrivals)
            noisy_current = []

        replay_clean = self.buffers.replay_clean if self.flags.replay else None

        if self.flags.contrastive:
            replay_noisy = [s.strip_labels() for s in self.buffers.replay_noisy] if self.flags.replay else []
            result = ncl_phase(
                self.model, noisy_current, replay_noisy, self.train_cfg,
                self.augment_cfg, self.encoder, self.trainer_rng
            )
            self.model, losses.ncl = result.params, result.losses

        result = sft_phase(self.model, clean_current, replay_clean, self.train_cfg, self.encoder, self.trainer_rng)
        self.model, losses.sft = result.params, result.losses

        if self.flags.preference:
            result = ipo_phase(
                self.model, clean_current, replay_clean, self.train_cfg,
                self.encoder, self.trainer_rng, self._alternative_source()
            )
            self.model, losses.ipo = result.params, result.losses

        if not self.flags.purify and self.flags.replay:
            for sample in arrivals:
                push(self.buffers.replay_clean, sample, self.buffer_rng)

        if self.buffer_dump_path is not None:
            self.buffers.dump(self.buffer_dump_path, self.cycle)

        report = CycleReport(
            cycle=self.cycle,
            task_id=task_id,
            task_position=task_position,
            arrivals=len(arrivals),
            routed_clean=routed_clean,
            routed_noisy=routed_noisy,
            feedback_agreement=agreement,
            promotion=promotion,
            losses=losses,
            buffer_sizes=self.buffers.sizes()
        )
        if promotion is not None:
            self._noisy_promoted += promotion.promoted_noisy
            self._noisy_promoted_correct += promotion.noisy_promoted_correct
            self._noisy_rechecked += promotion.noisy_rechecked
            report.noisy_precision = promotion.precision()
            report.noisy_recall = promotion.recall()
            report.cumulative_precision = self.cumulative_precision()
            report.cumulative_recall = self.cumulative_recall()

        logger.info(
            f"Cycle {self.cycle} (task {task_id}): {len(arrivals)} arrivals, "
            f"{routed_clean} clean / {routed_noisy} noisy"
            + (f", promoted {promotion.promoted_clean}/{promotion.promoted_noisy}, "
               f"discarded {promotion.discarded}" if promotion else "")
        )
        return report

    def cumulative_precision(self) -> Optional[float]:
        if self._noisy_promoted == 0:
            return None
        return self._noisy_promoted_correct / self._noisy_promoted

    def cumulative_recall(self) -> Optional[float]:
        if self._noisy_rechecked == 0:
            return None
        return self._noisy_promoted_correct / self._noisy_rechecked

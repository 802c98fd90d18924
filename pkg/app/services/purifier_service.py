"""
Purifier Service

Temporal consistency-aware purification: a separate purifier model is
trained on each delay buffer, routes arrivals by the sign of their
confidence margin and, one cycle later, promotes samples whose margin sign
held under the newer purifier into the replay buffers.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.buffers.bounded import BufferSet, push
from app.errors import EmptyInputError
from app.models.config import PurifierConfig, PurifierLoss
from app.models.reports import ConfidenceRecord, PromotionReport, RouteDecision
from app.models.sample import Sample
from app.nn.core import ModelParams, TextEncoder, forward_batch, sgd_step
from app.nn.objectives import PhaseResult, classification_objective, minibatch_indices

logger = logging.getLogger(__name__)


def train_purifier(
    params: ModelParams,
    buffer: Sequence[Sample],
    encoder: TextEncoder,
    rng: np.random.Generator,
    epochs: int = 5,
    lr: float = 0.2,
    q: float = 0.7,
    batch_size: int = 32,
    loss: PurifierLoss = PurifierLoss.GCE
) -> PhaseResult:
    """
    Minibatch SGD on the noisy labels of one delay buffer.

    Args:
        params: Warm start (the previous cycle's purifier)
        buffer: Delay-buffer samples; trained on (x, y)
        encoder: Feature encoder
        rng: Shuffling generator
        epochs: Full passes over the buffer
        lr: Learning rate
        q: GCE exponent
        batch_size: Minibatch size
        loss: GCE or the logistic-margin variant

    Returns:
        PhaseResult with updated params and mean loss per epoch
    """
    if len(buffer) == 0:
        raise EmptyInputError("Cannot train the purifier on an empty buffer")

    features = encoder.matrix([s.tokens for s in buffer])
    labels = np.array([s.y for s in buffer])
    losses: List[float] = []

    for _ in range(epochs):
        total = 0.0
        for batch in minibatch_indices(len(buffer), batch_size, rng):
            result = classification_objective(
                params, features[batch], labels[batch], loss=PurifierLoss(loss).value, q=q
            )
            params = sgd_step(params, result.grads, lr)
            total += result.value * len(batch)
        losses.append(total / len(buffer))
    return PhaseResult(params=params, losses=losses)


def confidence(logits: np.ndarray, y: int) -> float:
    """Margin of the given label over the best competing logit"""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[0] < 2:
        raise ValueError("Confidence margin needs at least two classes")
    if not 0 <= y < logits.shape[0]:
        raise ValueError(f"Class index {y} out of range [0, {logits.shape[0]})")
    rivals = np.delete(logits, y)
    return float(logits[y] - rivals.max())


def batch_confidence(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """confidence() row by row"""
    return np.array([confidence(row, int(y)) for row, y in zip(logits, labels)])


def arrival_decision(margin: float) -> RouteDecision:
    """Clean when the margin is >= 0, Noisy otherwise"""
    return RouteDecision.CLEAN if margin >= 0 else RouteDecision.NOISY


def recheck_decision(conf_at_arrival: float, conf_at_recheck: float) -> RouteDecision:
    """Promote when both margins share a sign, discard when the sign flipped"""
    before, after = conf_at_arrival >= 0, conf_at_recheck >= 0
    if before and after:
        return RouteDecision.PROMOTE_CLEAN
    if not before and not after:
        return RouteDecision.PROMOTE_NOISY
    return RouteDecision.DISCARD


def route_batch(
    params: ModelParams,
    samples: Sequence[Sample],
    encoder: TextEncoder
) -> List[Tuple[RouteDecision, ConfidenceRecord]]:
    """Arrival decision and confidence record for each sample, in order"""
    if not samples:
        return []
    logits = forward_batch(params, encoder.matrix([s.tokens for s in samples])).logits
    margins = batch_confidence(logits, np.array([s.y for s in samples]))
    return [
        (arrival_decision(margin), ConfidenceRecord(sample_id=sample.id, conf_at_arrival=float(margin)))
        for sample, margin in zip(samples, margins)
    ]


def route_at_arrival(
    params: ModelParams,
    sample: Sample,
    encoder: TextEncoder
) -> Tuple[RouteDecision, ConfidenceRecord]:
    return route_batch(params, [sample], encoder)[0]


def recheck_and_promote(
    params: ModelParams,
    buffers: BufferSet,
    records: Dict[int, ConfidenceRecord],
    encoder: TextEncoder,
    rng: np.random.Generator
) -> PromotionReport:
    """
    Re-score the pending clean/noisy partitions with a newer purifier.

    Same-sign margins promote to the matching replay buffer; a sign change
    discards the sample. Both partitions are cleared afterwards.

    Args:
        params: The newer purifier
        buffers: Buffer set holding C, N and the replay buffers (mutated)
        records: Arrival-time records by sample id; conf_at_recheck is filled in
        encoder: Feature encoder
        rng: Generator for replay-buffer eviction

    Returns:
        PromotionReport with counts and the oracle audit
    """
    pending = buffers.clean.snapshot() + buffers.noisy.snapshot()
    report = PromotionReport()
    if not pending:
        return report

    logits = forward_batch(params, encoder.matrix([s.tokens for s in pending])).logits
    margins = batch_confidence(logits, np.array([s.y for s in pending]))

    for sample, margin in zip(pending, margins):
        record = records[sample.id]
        record.conf_at_recheck = float(margin)
        decision = recheck_decision(record.conf_at_arrival, record.conf_at_recheck)
        if decision == RouteDecision.PROMOTE_CLEAN:
            push(buffers.replay_clean, sample, rng)
        elif decision == RouteDecision.PROMOTE_NOISY:
            push(buffers.replay_noisy, sample, rng)
        report.record(decision, sample.is_noisy)

    buffers.clean.clear()
    buffers.noisy.clear()
    return report


class TemporalConsistencyPurifier:
    """Purifier model state carried across cycles"""

    def __init__(
        self,
        params: ModelParams,
        cfg: PurifierConfig,
        encoder: TextEncoder,
        rng: np.random.Generator
    ):
        self.params = params
        self.cfg = cfg
        self.encoder = encoder
        self.rng = rng
        self.records: Dict[int, ConfidenceRecord] = {}
        self.cycles_trained = 0

    def train(self, arrivals: Sequence[Sample]) -> List[float]:
        """Warm-start training on the newest delay buffer"""
        result = train_purifier(
            self.params,
            arrivals,
            self.encoder,
            self.rng,
            epochs=self.cfg.epochs,
            lr=self.cfg.lr,
            q=self.cfg.q,
            batch_size=self.cfg.batch_size,
            loss=self.cfg.loss
        )
        self.params = result.params
        self.cycles_trained += 1
        return result.losses

    def logits(self, samples: Sequence[Sample]) -> np.ndarray:
        return forward_batch(self.params, self.encoder.matrix([s.tokens for s in samples])).logits

    def recheck(self, buffers: BufferSet) -> Optional[PromotionReport]:
        """Promote last cycle's partitions; None when nothing was pending"""
        if buffers.clean.is_empty() and buffers.noisy.is_empty():
            return None
        pending_ids = buffers.clean.ids + buffers.noisy.ids
        report = recheck_and_promote(self.params, buffers, self.records, self.encoder, self.rng)
        for sample_id in pending_ids:
            self.records.pop(sample_id, None)
        logger.debug(
            f"Recheck: {report.promoted_clean} clean, {report.promoted_noisy} noisy, "
            f"{report.discarded} discarded"
        )
        return report

    def route(self, arrivals: Sequence[Sample], buffers: BufferSet) -> Dict[RouteDecision, int]:
        """
        Route arrivals into the clean/noisy partitions.

        Returns:
            Arrival counts per decision (before partition capacity limits)
        """
        counts = {RouteDecision.CLEAN: 0, RouteDecision.NOISY: 0}
        overflow = 0

        for sample, (decision, record) in zip(arrivals, route_batch(self.params, arrivals, self.encoder)):
            counts[decision] += 1
            target = buffers.clean if decision == RouteDecision.CLEAN else buffers.noisy
            outcome = push(target, sample, self.rng)
            if outcome.evicted_id is not None:
                self.records.pop(outcome.evicted_id, None)
            if sample.id in target:
                self.records[sample.id] = record
            else:
                overflow += 1

        if overflow:
            logger.debug(f"{overflow} routed sample(s) did not fit their partition")
        return counts

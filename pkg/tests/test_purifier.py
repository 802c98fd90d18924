"""
Tests for the temporal consistency-aware purifier
"""
import numpy as np
import pytest

from app.buffers.bounded import BufferSet, push
from app.errors import EmptyInputError
from app.models.config import BufferConfig, PurifierConfig, PurifierLoss
from app.models.reports import ConfidenceRecord, PromotionReport, RouteDecision
from app.nn.core import predict
from app.services.purifier_service import (
    TemporalConsistencyPurifier,
    arrival_decision,
    batch_confidence,
    confidence,
    recheck_and_promote,
    recheck_decision,
    route_at_arrival,
    route_batch,
    train_purifier
)
from tests.helpers import corpus_samples, head_bias_params, make_sample


def _buffers(**caps):
    base = {"clean_capacity": 50, "noisy_capacity": 50, "replay_clean_capacity": 50, "replay_noisy_capacity": 50}
    return BufferSet(BufferConfig(**{**base, **caps}))


# =====================================================
# CONFIDENCE AND ROUTING
# =====================================================

def test_confidence_margins():
    assert confidence(np.array([2.0, 1.0, 0.0]), 0) == pytest.approx(1.0)
    assert confidence(np.array([2.0, 1.0, 0.0]), 1) == pytest.approx(-1.0)
    assert confidence(np.array([3.0, 3.0, 0.0]), 0) == 0.0
    with pytest.raises(ValueError):
        confidence(np.array([1.0]), 0)
    with pytest.raises(ValueError):
        confidence(np.array([1.0, 2.0]), 2)


def test_non_negative_margin_means_label_is_an_argmax(rng):
    logits = rng.normal(size=(500, 5))
    labels = rng.integers(0, 5, size=500)
    margins = batch_confidence(logits, labels)
    for row, y, margin in zip(logits, labels, margins):
        assert (margin >= 0) == (row[y] == row.max())


def test_route_at_arrival_by_margin_sign(encoder):
    sample = make_sample(0, ("a", "b"), y_true=0)
    decision, record = route_at_arrival(head_bias_params([0.0, 0.0, 0.0]), sample, encoder)
    assert decision == RouteDecision.CLEAN
    assert record.conf_at_arrival == 0.0

    decision, record = route_at_arrival(head_bias_params([1.0, 0.0, 0.0]), sample, encoder)
    assert decision == RouteDecision.CLEAN
    assert record.conf_at_arrival == pytest.approx(1.0)

    decision, record = route_at_arrival(head_bias_params([0.0, 0.5, 0.0]), sample, encoder)
    assert decision == RouteDecision.NOISY
    assert record.conf_at_arrival == pytest.approx(-0.5)


def test_route_batch_matches_single_routing(encoder):
    params = head_bias_params([0.3, 0.0, 0.0])
    samples = [make_sample(i, ("a", str(i)), y_true=0, y=i % 3) for i in range(6)]
    routed = route_batch(params, samples, encoder)
    assert [r.sample_id for _, r in routed] == [s.id for s in samples]
    for sample, (decision, record) in zip(samples, routed):
        single_decision, single_record = route_at_arrival(params, sample, encoder)
        assert decision == single_decision
        assert record.conf_at_arrival == pytest.approx(single_record.conf_at_arrival)
    assert route_batch(params, [], encoder) == []


@pytest.mark.parametrize("before, after, expected", [
    (1.0, 0.5, RouteDecision.PROMOTE_CLEAN),
    (0.0, 0.0, RouteDecision.PROMOTE_CLEAN),
    (-1.0, -0.2, RouteDecision.PROMOTE_NOISY),
    (1.0, -0.1, RouteDecision.DISCARD),
    (-0.3, 0.0, RouteDecision.DISCARD),
])
def test_recheck_decision(before, after, expected):
    assert recheck_decision(before, after) == expected


def test_arrival_decision_treats_zero_as_clean():
    assert arrival_decision(0.0) == RouteDecision.CLEAN
    assert arrival_decision(-1e-9) == RouteDecision.NOISY


def test_promotion_report_counts_recheck_outcomes():
    report = PromotionReport()
    report.record(RouteDecision.PROMOTE_NOISY, is_noisy=True)
    report.record(RouteDecision.PROMOTE_NOISY, is_noisy=False)
    report.record(RouteDecision.PROMOTE_CLEAN, is_noisy=False)
    report.record(RouteDecision.DISCARD, is_noisy=True)
    assert (report.promoted_clean, report.promoted_noisy, report.discarded) == (1, 2, 1)
    assert report.noisy_rechecked == 2
    assert report.precision() == 0.5
    assert report.recall() == 0.5
    with pytest.raises(ValueError):
        report.record(RouteDecision.CLEAN, is_noisy=False)


# =====================================================
# TRAINING
# =====================================================

def test_train_purifier_with_zero_epochs_is_identity(trainable_params, four_class_corpus, encoder, rng):
    samples = corpus_samples(four_class_corpus)[:20]
    result = train_purifier(trainable_params, samples, encoder, rng, epochs=0)
    assert result.losses == []
    for name, tensor in trainable_params.tensors().items():
        np.testing.assert_array_equal(tensor, getattr(result.params, name))


def test_train_purifier_rejects_empty_buffer(trainable_params, encoder, rng):
    with pytest.raises(EmptyInputError):
        train_purifier(trainable_params, [], encoder, rng)


@pytest.mark.parametrize("loss", [PurifierLoss.GCE, PurifierLoss.LOGISTIC_MARGIN])
def test_train_purifier_fits_clean_data(trainable_params, four_class_corpus, encoder, rng, loss):
    samples = corpus_samples(four_class_corpus)
    result = train_purifier(trainable_params, samples, encoder, rng, epochs=20, lr=0.1, loss=loss)
    predictions = predict(result.params, encoder.matrix([s.tokens for s in samples]))
    accuracy = np.mean(predictions == np.array([s.y for s in samples]))
    assert accuracy > 0.95
    assert result.losses[-1] < result.losses[0]
    # input parameters are left untouched
    assert not np.array_equal(trainable_params.head, result.params.head)


# =====================================================
# RECHECK AND PROMOTION
# =====================================================

def test_recheck_promotes_on_consistent_sign(encoder, rng):
    buffers = _buffers()
    kept_clean = make_sample(0, ("a",), y_true=0)
    flipped = make_sample(1, ("b",), y_true=0)
    kept_noisy = make_sample(2, ("c",), y_true=0, y=1)
    push(buffers.clean, kept_clean, rng)
    push(buffers.noisy, flipped, rng)
    push(buffers.noisy, kept_noisy, rng)
    records = {
        0: ConfidenceRecord(sample_id=0, conf_at_arrival=2.0),
        1: ConfidenceRecord(sample_id=1, conf_at_arrival=-1.0),
        2: ConfidenceRecord(sample_id=2, conf_at_arrival=-0.5),
    }

    # every input scores +1 for class 0 and -1 for class 1
    report = recheck_and_promote(head_bias_params([2.0, 1.0, 0.0]), buffers, records, encoder, rng)

    assert buffers.replay_clean.ids == [0]
    assert buffers.replay_noisy.ids == [2]
    assert (report.promoted_clean, report.promoted_noisy, report.discarded) == (1, 1, 1)
    assert report.total == 3
    assert buffers.clean.is_empty() and buffers.noisy.is_empty()
    assert records[0].conf_at_recheck == pytest.approx(1.0)
    assert records[2].conf_at_recheck == pytest.approx(-1.0)
    assert report.noisy_rechecked == 1
    assert report.precision() == 1.0
    assert report.recall() == 1.0


def test_recheck_with_nothing_pending(encoder, rng):
    report = recheck_and_promote(head_bias_params([0.0, 0.0]), _buffers(), {}, encoder, rng)
    assert report.total == 0
    assert report.precision() is None and report.recall() is None


def test_purifier_cycle_conserves_samples(trainable_params, four_class_corpus, encoder):
    samples = corpus_samples(four_class_corpus, noise_every=5)
    first, second = samples[:80], samples[80:]
    buffers = _buffers(clean_capacity=100, noisy_capacity=100, replay_clean_capacity=200, replay_noisy_capacity=200)
    purifier = TemporalConsistencyPurifier(
        trainable_params, PurifierConfig(epochs=2, lr=0.1), encoder, np.random.default_rng(0)
    )

    purifier.train(first)
    assert purifier.recheck(buffers) is None
    counts = purifier.route(first, buffers)
    assert counts[RouteDecision.CLEAN] + counts[RouteDecision.NOISY] == len(first)
    assert len(buffers.clean) + len(buffers.noisy) == len(first)
    assert set(purifier.records) == {s.id for s in first}

    purifier.train(second)
    report = purifier.recheck(buffers)
    assert report.total == len(first)
    assert len(buffers.replay_clean) == report.promoted_clean
    assert len(buffers.replay_noisy) == report.promoted_noisy
    assert not set(buffers.replay_clean.ids) & set(buffers.replay_noisy.ids)
    assert report.noisy_rechecked == sum(s.is_noisy for s in first)
    assert purifier.records == {}
    assert purifier.cycles_trained == 2


def test_route_overflow_leaves_no_dangling_records(four_class_corpus, encoder):
    samples = corpus_samples(four_class_corpus)[:30]
    buffers = _buffers(clean_capacity=5, noisy_capacity=5)
    purifier = TemporalConsistencyPurifier(
        head_bias_params([0.0, 0.0, 0.0, 0.0]), PurifierConfig(), encoder, np.random.default_rng(1)
    )
    counts = purifier.route(samples, buffers)
    assert counts[RouteDecision.CLEAN] == 30
    assert len(buffers.clean) == 5
    assert set(purifier.records) == set(buffers.clean.ids)

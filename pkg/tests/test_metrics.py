"""
Tests for accuracy-matrix metrics
"""
import numpy as np
import pandas as pd
import pytest

from app.errors import EmptyInputError, InsufficientDataError
from app.nn.core import TextEncoder
from app.services.metrics_service import AccuracyMatrix, af, ap, evaluate, mean_std, write_summary_csv
from tests.helpers import head_bias_params, make_sample

NAN = float("nan")


def test_evaluate_perfect_and_constant_models():
    encoder = TextEncoder(hash_dim=4096)
    split = [make_sample(i, (f"w{i}",), y_true=i % 4) for i in range(40)]
    # constant prediction of class 0 on a balanced split
    assert evaluate(head_bias_params([0.0, 0.0, 0.0, 0.0]), split, encoder) == 25.0
    class_two = [s for s in split if s.y_true == 2]
    assert evaluate(head_bias_params([0.0, 0.0, 1.0, 0.0]), class_two, encoder) == 100.0


def test_evaluate_ignores_noisy_feedback():
    encoder = TextEncoder(hash_dim=4096)
    split = [make_sample(i, ("x",), y_true=1, y=0) for i in range(5)]
    assert evaluate(head_bias_params([0.0, 1.0]), split, encoder) == 100.0


def test_evaluate_is_permutation_invariant(rng):
    encoder = TextEncoder(hash_dim=4096)
    split = [make_sample(i, (f"w{i}",), y_true=i % 3) for i in range(30)]
    params = head_bias_params([0.0, 0.2, 0.1])
    shuffled = [split[i] for i in rng.permutation(len(split))]
    assert evaluate(params, split, encoder) == evaluate(params, shuffled, encoder)


def test_evaluate_rejects_empty_split():
    with pytest.raises(EmptyInputError):
        evaluate(head_bias_params([0.0, 0.0]), [], TextEncoder(hash_dim=4096))


def test_ap_of_constant_final_row():
    m = AccuracyMatrix.from_rows([[80, NAN, NAN], [80, 80, NAN], [80, 80, 80]])
    assert ap(m) == 80.0
    assert af(m) == 0.0


def test_ap_matches_reported_final_row():
    final = [88.3, 85.1, 82.0, 80.9, 77.2]
    rows = [[NAN] * 5 for _ in range(4)] + [final]
    for i in range(4):
        rows[i][:i + 1] = [90.0] * (i + 1)
    assert ap(AccuracyMatrix.from_rows(rows)) == pytest.approx(82.70, abs=0.005)


def test_ap_depends_only_on_final_row():
    a = AccuracyMatrix.from_rows([[50, NAN, NAN], [10, 20, NAN], [60, 70, 80]])
    b = AccuracyMatrix.from_rows([[99, NAN, NAN], [1, 2, NAN], [60, 70, 80]])
    assert ap(a) == ap(b) == pytest.approx(70.0)


def test_af_examples():
    m = AccuracyMatrix.from_rows([[90, NAN], [70, 80]])
    assert af(m) == pytest.approx(20.0)
    improved = AccuracyMatrix.from_rows([[60, NAN], [75, 80]])
    assert af(improved) == pytest.approx(-15.0)


def test_af_needs_two_tasks():
    with pytest.raises(InsufficientDataError):
        af(AccuracyMatrix.from_rows([[90]]))


def test_incomplete_final_row_is_rejected():
    m = AccuracyMatrix(2)
    m.record(0, 0, 90.0)
    with pytest.raises(InsufficientDataError):
        ap(m)


def test_record_enforces_lower_triangle_and_range():
    m = AccuracyMatrix(3)
    with pytest.raises(IndexError):
        m.record(0, 1, 50.0)
    with pytest.raises(ValueError):
        m.record(1, 0, 101.0)


def test_csv_outputs(tmp_path):
    m = AccuracyMatrix.from_rows([[90, NAN], [70, 80]])
    m.to_csv(tmp_path / "accuracy_matrix.csv")
    frame = pd.read_csv(tmp_path / "accuracy_matrix.csv", index_col="after_task")
    assert list(frame.columns) == ["task_0", "task_1"]
    assert np.isnan(frame.loc[0, "task_1"])
    assert frame.loc[1, "task_0"] == 70.0

    write_summary_csv(m, tmp_path / "summary.csv")
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert summary.loc[0, "AP"] == pytest.approx(75.0)
    assert summary.loc[0, "AF"] == pytest.approx(20.0)

    write_summary_csv(AccuracyMatrix.from_rows([[42.0]]), tmp_path / "single.csv")
    single = pd.read_csv(tmp_path / "single.csv")
    assert np.isnan(single.loc[0, "AF"])


def test_mean_std_uses_population_deviation():
    assert mean_std([1.0, 3.0]) == (2.0, 1.0)
    assert mean_std([]) == (None, None)

import numpy as np
import pytest

from nniqs.dataset import to_model_space
from nniqs.evaluation import (
    METHODS,
    SCENARIOS,
    baseline_on_pair,
    evaluate_diagrams,
    find_report,
    pair_transition_mask,
    predict_on_pair,
    random_pair,
)
from nniqs.phase_diagram import AxisGrid, generate, minmax_normalize, transition_mask
from nniqs.spin_model import ModelParams


@pytest.fixture(scope="module")
def diagram():
    return generate(ModelParams(6, 1.0), AxisGrid.uniform(36))


def test_random_pair_reproducible_and_sorted(diagram):
    a = random_pair(diagram, 3, 8, seed=5, index=2)
    b = random_pair(diagram, 3, 8, seed=5, index=2)
    assert np.array_equal(a.crop_rows, b.crop_rows) and np.array_equal(a.input, b.input)
    assert len(a.crop_rows) == 24 and np.all(np.diff(a.crop_rows) > 0)
    assert np.array_equal(a.target_values, to_model_space(diagram.values[np.ix_(a.crop_rows, a.crop_cols)]))
    c = random_pair(diagram, 3, 8, seed=5, index=3)
    assert not np.array_equal(a.crop_rows, c.crop_rows)


@pytest.mark.parametrize("method", METHODS[1:])
def test_ratio_one_baseline_is_identity(diagram, method):
    pair = random_pair(diagram, 1, 10, seed=0)
    assert np.array_equal(baseline_on_pair(pair, method), pair.target_values)


def test_bilinear_pair_stays_in_input_range(diagram):
    pair = random_pair(diagram, 2, 9, seed=1)
    pred = baseline_on_pair(pair, "bilinear")
    assert pred.shape == (18, 18)
    assert pred.min() >= pair.input_values.min() - 1e-15
    assert pred.max() <= pair.input_values.max() + 1e-15


def test_nniqs_needs_model(diagram):
    with pytest.raises(ValueError):
        predict_on_pair(random_pair(diagram, 2, 6, seed=0), "nniqs")


def test_pair_mask_follows_full_diagram(diagram):
    pair = random_pair(diagram, 2, 8, seed=2)
    full = transition_mask(minmax_normalize(diagram.values))
    assert np.array_equal(pair_transition_mask(diagram, pair), full[np.ix_(pair.crop_rows, pair.crop_cols)])


def test_evaluate_diagrams_reports(diagram):
    reports = evaluate_diagrams([diagram], (2, 3), 8, METHODS[1:], seed=0, pairs_per_diagram=2)
    assert len(reports) == 2 * 3 * 2
    for r in reports:
        assert r.q1 <= r.median <= r.q3 and r.total > 0
    whole = find_report(reports, "bilinear", 3)
    assert whole.total == 2 * 24 * 24 and whole.scenario == "x3"
    with pytest.raises(KeyError):
        find_report(reports, "bilinear", 4)


def test_scenario_presets():
    assert SCENARIOS["beyond"].r_g == 480 and SCENARIOS["beyond"].ratios == (6, 8, 10)
    u = SCENARIOS["unseenw"]
    assert u.in_training_range(0.5) and u.in_training_range(1.3)
    assert not u.in_training_range(0.499) and not u.in_training_range(1.301)
    assert SCENARIOS["largen"].n_values == (12,)
    assert SCENARIOS["basic"].ratios == (2, 3, 4)

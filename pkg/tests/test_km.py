import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survforest.dataset import group_by_levels
from survforest.errors import DomainError
from survforest.km import curves_table, estimate, kaplan_meier, nelson_aalen


def test_product_limit_no_censoring():
    c = estimate([1, 2, 3], [1, 1, 1])
    assert c.survival.tolist() == [1 - 1 / 3, (1 - 1 / 3) * (1 - 1 / 2), 0.0]
    assert c.cum_hazard.tolist() == [1 / 3, 1 / 3 + 1 / 2, 1 / 3 + 1 / 2 + 1]
    assert c.n_risk.tolist() == [3, 2, 1]


def test_product_limit_with_censoring():
    c = estimate([1, 2, 3], [1, 0, 1])
    assert c.times.tolist() == [1.0, 3.0]
    assert c.survival.tolist() == [1 - 1 / 3, 0.0]
    assert c.cum_hazard.tolist() == [1 / 3, 1 / 3 + 1.0]


def test_tied_event_and_censoring():
    # the censored row at t=2 is still at risk for the death at t=2
    c = estimate([2, 2, 5], [1, 0, 1])
    assert c.n_risk.tolist() == [3, 1]
    assert c.survival.tolist() == [1 - 1 / 3, 0.0]


def test_greenwood_band_by_hand():
    c = estimate([1, 2, 3], [1, 1, 1], conf_level=0.95)
    z = 1.959963984540054
    se = math.sqrt(1 / (3 * 2))
    assert c.band_lo[0] == pytest.approx((1 - 1 / 3) * math.exp(-z * se), rel=1e-12)
    assert c.band_hi[0] == pytest.approx(min(1.0, (1 - 1 / 3) * math.exp(z * se)), rel=1e-12)
    assert c.band_lo[-1] == c.band_hi[-1] == 0.0


def test_step_evaluation():
    c = estimate([1, 2, 3], [1, 0, 1])
    assert c.at([0.5, 1.0, 2.5, 10.0]).tolist() == [1.0, 1 - 1 / 3, 1 - 1 / 3, 0.0]
    assert c.at(0.5, "cum_hazard") == 0.0


def test_empty_sample():
    with pytest.raises(DomainError):
        estimate([], [])


def test_treatment_arms_similar(trial):
    curves = kaplan_meier(trial, group_by_levels(trial, "treatment"))
    grid = np.linspace(0, 12, 200)
    gap = np.abs(curves[0].at(grid) - curves[1].at(grid))
    assert gap.max() < 0.12


def test_dpca_cumulative_hazard(trial):
    curves = nelson_aalen(trial, group_by_levels(trial, "treatment"))
    dpca = curves[0]
    assert dpca.group == "DPCA"
    assert np.all(np.diff(dpca.cum_hazard) >= 0)
    assert 0.9 <= dpca.at(12.0, "cum_hazard") <= 1.25


def test_curves_table_columns(trial):
    df = curves_table(kaplan_meier(trial))
    assert list(df.columns) == ["group", "time", "n_risk", "n_event", "survival",
                                "cum_hazard", "band_lo", "band_hi"]
    assert (df.band_lo <= df.survival).all() and (df.survival <= df.band_hi).all()


samples = st.lists(st.tuples(st.integers(1, 30), st.booleans()), min_size=1, max_size=40)


@settings(max_examples=50, deadline=None)
@given(samples)
def test_invariants(rows):
    t = np.array([r[0] for r in rows], float)
    s = np.array([r[1] for r in rows])
    if not s.any():
        return
    c = estimate(t, s)
    assert np.all(np.diff(c.survival) <= 0)
    assert np.all(np.diff(c.cum_hazard) >= 0)
    assert np.all(np.diff(c.n_risk) <= 0)
    assert np.all((c.band_lo <= c.survival) & (c.survival <= c.band_hi))
    shifted = estimate(t + 7.5, s)
    assert np.array_equal(shifted.times, c.times + 7.5)
    assert np.array_equal(shifted.survival, c.survival)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=40))
def test_no_censoring_is_empirical(times):
    t = np.array(times, float)
    c = estimate(t, np.ones(len(t), bool))
    assert c.survival[-1] == 0.0
    ecdf = np.array([(t <= u).mean() for u in c.times])
    assert np.allclose(c.survival, 1 - ecdf, atol=1e-12)


def test_group_independence(trial):
    by = group_by_levels(trial, "edema")
    grouped = kaplan_meier(trial, by)
    for g, curve in enumerate(grouped):
        rows = by.rows(g)
        alone = estimate(trial.time[rows], trial.status[rows])
        assert np.array_equal(alone.survival, curve.survival)


def test_censored_only_curve_is_flat():
    c = estimate([1, 2], [0, 0])
    assert c.at([0.5, 3.0]).tolist() == [1.0, 1.0]
    assert c.at(3.0, "cum_hazard") == 0.0

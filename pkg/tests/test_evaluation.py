import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from repaug.encoder import EncoderModel
from repaug.evaluation import (EvalSet, gaussian_kde, mrr, mrr_at_k, mrr_from_ranks, mrr_from_scores, norm_report,
                               pca_2d, rank_of, ranks, write_reports)

scores_st = arrays(np.float64, st.integers(1, 12), elements=st.integers(-3, 3).map(float))


def test_rank_examples():
    assert rank_of([0.1, 0.9, 0.3], 1) == 1
    assert rank_of([1, 1, 1, 1], 0) == 1
    assert rank_of([1, 1, 1, 1], 3) == 4
    with pytest.raises(IndexError):
        rank_of([1, 2], 2)


def test_mrr_examples():
    assert abs(mrr_from_ranks([1, 2, 4]) - 7 / 12) < 1e-15
    assert mrr_from_ranks([1, 5], k=4) == 0.5
    assert mrr_from_ranks([4], k=4) == 0.25
    with pytest.raises(ValueError):
        mrr_from_ranks([])
    with pytest.raises(ValueError):
        mrr_from_ranks([1], k=0)


@settings(max_examples=60, deadline=None)
@given(scores_st)
def test_ranks_are_a_permutation(s):
    got = sorted(rank_of(s, i) for i in range(len(s)))
    assert got == list(range(1, len(s) + 1))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 8)), elements=st.integers(-4, 4).map(float)),
       st.floats(0.01, 100))
def test_vectorised_ranks_and_monotone_invariance(s, scale):
    truth = np.arange(s.shape[0]) % s.shape[1]
    r = ranks(s, truth)
    assert list(r) == [rank_of(s[i], truth[i]) for i in range(len(truth))]
    assert np.array_equal(ranks(s * scale + 3.0, truth), r)
    assert np.array_equal(ranks(np.exp(s), truth), r)
    vals = [mrr_from_scores(s, truth, k) for k in range(1, s.shape[1] + 1)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == mrr_from_scores(s, truth)


def test_random_mrr_oracle():
    # E[1/rank] for a uniformly placed true item among M is H(M)/M
    m = 100
    harmonic = sum(1 / k for k in range(1, m + 1)) / m
    assert abs(harmonic - 0.0519) < 1e-4
    rng = np.random.default_rng(0)
    r = np.array([rank_of(rng.random(m), 0) for _ in range(20000)])
    assert abs(mrr_from_ranks(r) - harmonic) < 3 * np.std(1 / r) / np.sqrt(len(r))


def test_eval_set_validation_and_model_mrr():
    with pytest.raises(ValueError):
        EvalSet(np.zeros((0, 3)), np.zeros((2, 3)), [])
    with pytest.raises(ValueError):
        EvalSet(np.zeros((1, 3)), np.zeros((2, 3)), [2])
    model = EncoderModel((5, 5), normalize_output=True, seed=0)
    x = np.eye(5)
    es = EvalSet.paired(x, x)
    assert mrr(es, model) == 1.0
    assert mrr_at_k(es, model, 5) == mrr(es, model)
    with pytest.raises(ValueError):
        mrr_at_k(es, model, 0)


def test_norm_report_examples():
    rep = norm_report(np.array([[1.0, 0.0], [0.0, 3.0]]))
    assert rep.mean == 2.0 and rep.std == 1.0
    unit = norm_report(np.eye(4))
    assert unit.std == 0.0
    assert np.all(np.isfinite(unit.kde_density))
    with pytest.raises(ValueError):
        norm_report(np.ones((1, 3)))


def test_kde_integrates_to_one():
    x = np.random.default_rng(1).gamma(2.0, size=300)
    grid, dens, h = gaussian_kde(x)
    assert len(grid) == 256 and h > 0
    assert abs(np.trapezoid(dens, grid) - 1) < 1e-3


def test_pca_of_rank_one_cloud():
    t = np.linspace(-2, 2, 20)[:, None]
    pts = t * np.array([[1.0, 2.0, -1.0]]) + 5.0
    coords = pca_2d(pts)
    assert coords.shape == (20, 2)
    assert np.all(np.abs(coords[:, 1]) < 1e-8)


def test_reports_written(tmp_path):
    rep = norm_report(np.random.default_rng(2).normal(size=(10, 3)))
    summary = {"mrr": 0.5, "mrrAtK": None, **rep.summary()}
    write_reports(tmp_path / "r.json", tmp_path / "r.csv", summary, rep)
    data = json.loads((tmp_path / "r.json").read_text())
    assert {"mrr", "mrrAtK", "normMean", "normStd"} <= set(data)
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert {r["series"] for r in rows} == {"kde", "norm", "pca"}
    assert sum(r["series"] == "kde" for r in rows) == 256

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fuseqa.data import make_synthetic_task
from fuseqa.estimator import QAFusionClassifier


def _clf(**kw):
    kg, templates, examples = make_synthetic_task(16, 10, seed=11)
    params = dict(
        kg=kg, templates=templates, n_layers=1, d_lm=8, d_gnn=8,
        vocab_size=64, max_seq_len=8, max_hop=1, cap=16, top_k=8,
        steps=60, learning_rate=0.05, seed=1,
    )
    params.update(kw)
    return QAFusionClassifier(**params), examples


def test_get_set_params_round_trip():
    clf, _ = _clf()
    params = clf.get_params()
    assert params["fusion_mode"] == "cross_attention"
    clf.set_params(lam=0.25, n_heads=2)
    assert clf.get_params()["lam"] == 0.25
    cloned = clone(clf)
    assert cloned.get_params()["n_heads"] == 2


def test_predict_before_fit_raises():
    clf, examples = _clf()
    with pytest.raises(NotFittedError):
        clf.predict(examples)


def test_fit_requires_kg():
    clf = QAFusionClassifier(kg=None)
    with pytest.raises(ValueError):
        clf.fit([])


def test_fit_predict_score_shapes():
    clf, examples = _clf()
    clf.fit(examples[:12])
    preds = clf.predict(examples[12:])
    assert preds.shape == (4,)
    assert np.all((preds >= 0) & (preds < 5))
    score = clf.score(examples[12:])
    recount = float(np.mean(preds == [ex.answer for ex in examples[12:]]))
    assert score == recount


def test_fit_learns_planted_task():
    clf, examples = _clf(steps=150)
    clf.fit(examples[:12])
    assert clf.score(examples[:12]) >= 0.8


def test_y_overrides_answers():
    clf, examples = _clf(steps=1)
    y = [0] * 12
    clf.fit(examples[:12], y=y)
    # training metrics were computed against the overridden labels
    assert all(gold == 0 for _id, _pred, gold in clf.train_metrics_.predictions)


def test_fit_is_deterministic():
    clf1, examples = _clf(steps=30)
    clf2, _ = _clf(steps=30)
    clf1.fit(examples[:8])
    clf2.fit(examples[:8])
    assert np.array_equal(clf1.predict(examples[8:]), clf2.predict(examples[8:]))

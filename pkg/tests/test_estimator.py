import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from visdebias import VisualRecommender
from visdebias.evaluation import evaluate, make_scorer
from visdebias.exceptions import ConfigError, DataError, ProtocolError, ShapeError


def _pairs(dataset):
    users, items = dataset.pairs()
    return np.column_stack([users, items])


def test_get_params_and_clone():
    est = VisualRecommender(model="VBPR", epochs=3, lambda2=0.4)
    params = est.get_params()
    assert params["model"] == "VBPR" and params["lambda2"] == 0.4
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(epochs=7)
    assert est.epochs == 7


def test_not_fitted():
    with pytest.raises(NotFittedError):
        VisualRecommender().predict([0])


def test_fit_predict(small_corpus):
    dataset, split, _ = small_corpus
    est = VisualRecommender(model="CausalRec", embedding_dim=8, epochs=3, learning_rate=0.01)
    est.fit(_pairs(dataset), features=dataset.features)
    assert est.n_users_ == dataset.n_users and est.n_items_ == dataset.n_items
    top = est.predict([0, 1], k=5)
    assert top.shape == (2, 5)
    for row, u in enumerate((0, 1)):
        assert not set(top[row]) & set(dataset.positives[u].tolist())
    scores = est.decision_function([0])
    assert scores.shape == (1, dataset.n_items)


def test_score_matches_evaluate(small_corpus):
    dataset, split, _ = small_corpus
    est = VisualRecommender(model="VBPR", embedding_dim=8, epochs=2, debias=True)
    est.fit(_pairs(dataset), features=dataset.features)
    users = np.flatnonzero(split.test >= 0)
    X_test = np.column_stack([users, split.test[users]])
    expected = evaluate(make_scorer("VBPR", est.params_, dataset.features, ci=True,
                                    refs=est.references_), split).mrr
    assert est.score(X_test) == expected


def test_same_seed_same_model(small_corpus):
    dataset, _, _ = small_corpus
    X = _pairs(dataset)
    a = VisualRecommender(model="MF", epochs=2, random_state=4).fit(X)
    b = VisualRecommender(model="MF", epochs=2, random_state=4).fit(X)
    assert a.params_.equals(b.params_)


def test_input_validation():
    feats = np.ones((4, 2))
    with pytest.raises(ShapeError):
        VisualRecommender(model="MF", epochs=1).fit(np.zeros((3, 3), dtype=int))
    with pytest.raises(DataError):
        VisualRecommender(model="MF", epochs=1).fit(np.array([[0, -1]]))
    with pytest.raises(DataError):
        VisualRecommender(model="MF", epochs=1).fit(np.array([[0.5, 1.0]]))
    with pytest.raises(ConfigError):
        VisualRecommender(model="VBPR", epochs=1).fit(np.array([[0, 1]]))
    with pytest.raises(DataError):
        VisualRecommender(model="VBPR", epochs=1).fit(np.array([[0, 9]]), features=feats)
    with pytest.raises(ProtocolError):
        VisualRecommender(model="DVBPR", debias=True).fit(np.array([[0, 1]]), features=feats)
    with pytest.raises(ValueError):
        VisualRecommender(model="VBPR").fit(np.array([[0, 1]]), features=np.full((4, 2), np.nan))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visdebias.causal import (ReferenceSet, debiased_score, debiased_score_amr,
                              debiased_score_causalrec, debiased_score_matrix,
                              debiased_score_vbpr, natural_direct_effect, reference_values,
                              total_effect, total_indirect_effect)
from visdebias.core import ModelKind, TrainConfig, init_params
from visdebias.exceptions import DataError, ProtocolError
from visdebias.models import causalrec_factors, score_causalrec, score_mf

from conftest import random_params


def random_refs(rng, K=3, D=4, scale=0.5):
    return ReferenceSet(float(rng.normal(0, scale)), rng.normal(0, scale, K),
                        rng.normal(0, scale, D), rng.normal(0, scale, K))


def own_refs(p, i, feature, category=0):
    """References equal to item i's own values (no treatment change)."""
    K = p.gamma_u.shape[1] if p.gamma_u is not None else p.theta_u.shape[1]
    return ReferenceSet(float(p.beta_i[i]) if p.beta_i is not None else 0.0,
                        p.gamma_i[i].copy() if p.gamma_i is not None else np.zeros(K),
                        np.asarray(feature, dtype=float),
                        p.c[category].copy() if p.c is not None else np.zeros(K))


def test_reference_values_mean_and_zero(rng):
    p = init_params("VBPR", TrainConfig(embedding_dim=2, visual_dim=3), 2, 2)
    p.beta_i[...] = [0.2, 0.4]
    p.gamma_i[...] = [[1.0, 2.0], [1.0, 2.0]]
    feats = np.array([[1.0, 0.0, 2.0], [3.0, 2.0, 0.0]])
    refs = reference_values(p, store=feats)
    assert refs.beta_ref == pytest.approx(0.3)
    assert np.array_equal(refs.gamma_ref, [1.0, 2.0])
    assert np.array_equal(refs.feature_ref, [2.0, 1.0, 1.0])
    zero = reference_values(p, store=feats, mode="zero")
    assert zero.beta_ref == 0.0 and not zero.gamma_ref.any() and not zero.feature_ref.any()


@pytest.mark.parametrize("kind", list(ModelKind))
def test_effects_vanish_at_own_references(kind, rng):
    p = random_params(kind, rng)
    f = rng.normal(size=4)
    refs = own_refs(p, 2, f, 1)
    assert total_effect(kind, p, 1, 2, f, refs, category=1) == 0.0
    assert total_indirect_effect(kind, p, 1, 2, f, refs, category=1) == 0.0
    assert natural_direct_effect(kind, p, 1, 2, f, refs, category=1) == 0.0


def test_mf_total_effect_zero_refs(rng):
    p = random_params("MF", rng)
    refs = ReferenceSet(0.0, np.zeros(3), np.zeros(0), np.zeros(3), "zero")
    te = total_effect("MF", p, 0, 1, None, refs)
    assert te == pytest.approx(score_mf(p, 0, 1) - float(p.alpha) - p.beta_u[0], abs=1e-14)


def test_vbpr_nde_closed_form(rng):
    p = random_params("VBPR", rng)
    f = rng.normal(size=4)
    refs = random_refs(rng)
    nde = natural_direct_effect("VBPR", p, 0, 1, f, refs)
    assert nde == pytest.approx(float(p.theta_u[0] @ (p.E @ (f - refs.feature_ref))), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(ModelKind)),
       st.sampled_from(["product", "sum"]))
def test_te_equals_nde_plus_tie(seed, kind, fusion):
    rng = np.random.default_rng(seed)
    p = random_params(kind, rng)
    f = rng.normal(size=4)
    refs = random_refs(rng)
    delta = rng.normal(size=4) if kind is ModelKind.AMR else None
    args = (kind, p, 1, 2, f, refs)
    kw = dict(category=1, delta=delta, fusion=fusion)
    te = total_effect(*args, **kw)
    assert abs(te - natural_direct_effect(*args, **kw) - total_indirect_effect(*args, **kw)) <= 1e-12
    if kind is ModelKind.MF:
        assert natural_direct_effect(*args, **kw) == 0.0


def test_vbpr_closed_form_hand_value():
    p = init_params("VBPR", TrainConfig(embedding_dim=2, visual_dim=1), 1, 1)
    p.beta_i[0] = 0.3
    p.gamma_u[0] = [1, 0]
    p.gamma_i[0] = [2, 5]
    refs = ReferenceSet(0.1, np.array([1.0, 5.0]), np.zeros(1), np.zeros(2))
    assert debiased_score_vbpr(p, 0, 0, refs) == pytest.approx(1.2)


def test_amr_closed_form_hand_value():
    p = init_params("AMR", TrainConfig(embedding_dim=2, visual_dim=1), 1, 1)
    p.gamma_u[0] = [1, 1]
    p.gamma_i[0] = [0.5, -0.5]
    refs = ReferenceSet(0.0, np.zeros(2), np.zeros(1), np.zeros(2))
    assert debiased_score_amr(p, 0, 0, refs) == 0.0
    refs.gamma_ref = p.gamma_i[0].copy()
    assert debiased_score_amr(p, 0, 0, refs) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["VBPR", "AMR", "DeepStyle"]))
def test_closed_forms_match_tie(seed, kind):
    rng = np.random.default_rng(seed)
    p = random_params(kind, rng)
    f = rng.normal(size=4)
    refs = random_refs(rng)
    delta = rng.normal(size=4) if kind == "AMR" else None
    tie = total_indirect_effect(kind, p, 0, 3, f, refs, category=1, delta=delta)
    assert debiased_score(kind, p, 0, 3, f, refs) == pytest.approx(tie, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_causalrec_debiased_factorization(seed, lam):
    rng = np.random.default_rng(seed)
    p = random_params("CausalRec", rng)
    f = rng.normal(size=4)
    refs = random_refs(rng)
    own = causalrec_factors(p, 1, 2, f)
    gu = p.gamma_u[1]
    v_ref = p.E @ refs.feature_ref
    c_u = (1 / (1 + np.exp(-gu @ refs.gamma_ref))) * (1 / (1 + np.exp(-gu @ (refs.gamma_ref * v_ref))))
    expected = own.n_vu * (own.m_iu * own.m_ivu - lam * c_u)
    got = debiased_score_causalrec(p, 1, 2, f, refs, lam)
    assert got == pytest.approx(expected, abs=1e-12)


def test_causalrec_lambda_zero_is_biased(rng):
    p = random_params("CausalRec", rng)
    f = rng.normal(size=4)
    refs = random_refs(rng)
    biased = score_causalrec(causalrec_factors(p, 0, 1, f))
    assert debiased_score_causalrec(p, 0, 1, f, refs, 0.0) == biased


def test_causalrec_lambda_one_is_tie(rng):
    p = random_params("CausalRec", rng)
    f = rng.normal(size=4)
    refs = random_refs(rng)
    tie = total_indirect_effect("CausalRec", p, 0, 1, f, refs)
    assert debiased_score_causalrec(p, 0, 1, f, refs, 1.0) == pytest.approx(tie, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1.2), st.floats(0, 1.2))
def test_causalrec_monotone_in_lambda(seed, a, b):
    rng = np.random.default_rng(seed)
    p = random_params("CausalRec", rng)
    f = rng.normal(size=4)
    refs = random_refs(rng)
    lo, hi = sorted((a, b))
    assert (debiased_score_causalrec(p, 0, 1, f, refs, hi)
            <= debiased_score_causalrec(p, 0, 1, f, refs, lo))


@pytest.mark.parametrize("kind", ["VBPR", "AMR", "DeepStyle", "CausalRec"])
def test_zero_refs_zero_params_give_zero(kind):
    p = init_params(kind, TrainConfig(embedding_dim=3, visual_dim=4), 2, 3)
    for arr in p.tables().values():
        arr[...] = 0.0
    refs = ReferenceSet(0.0, np.zeros(3), np.zeros(4), np.zeros(3), "zero")
    f = np.ones(4)
    assert debiased_score(kind, p, 0, 1, f, refs, lambda2=1.0) == 0.0


@pytest.mark.parametrize("kind", ["MF", "DVBPR"])
def test_no_debiased_scorer(kind, rng):
    p = random_params(kind, rng)
    with pytest.raises(ProtocolError):
        debiased_score(kind, p, 0, 0, np.zeros(4), random_refs(rng))


def test_missing_feature(rng):
    p = random_params("VBPR", rng)
    with pytest.raises(DataError):
        total_effect("VBPR", p, 0, 0, None, random_refs(rng))


@pytest.mark.parametrize("kind", ["VBPR", "AMR", "DeepStyle", "CausalRec"])
def test_debiased_matrix_matches_scalar(kind, rng):
    p = random_params(kind, rng)
    feats = rng.normal(size=(6, 4))
    refs = random_refs(rng)
    mat = debiased_score_matrix(kind, p, [0, 2], feats, refs, lambda2=0.6)
    for row, u in enumerate((0, 2)):
        for i in range(6):
            assert mat[row, i] == pytest.approx(
                debiased_score(kind, p, u, i, feats[i], refs, lambda2=0.6), abs=1e-12)

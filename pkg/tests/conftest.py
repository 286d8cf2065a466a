import numpy as np
import pytest

from visdebias.core import ALLOCATION, ModelKind, TrainConfig, init_params
from visdebias.data import SyntheticSpec, generate_synthetic, kcore_filter, split_by_ground_truth

ALL_KINDS = list(ModelKind)


def random_params(kind, rng, n_users=4, n_items=6, K=3, D=4, n_categories=2, scale=0.5):
    """Parameters with every allocated entry drawn at a non-trivial scale."""
    kind = ModelKind.parse(kind)
    cfg = TrainConfig(embedding_dim=K, visual_dim=D)
    params = init_params(kind, cfg, n_users, n_items, n_categories)
    for name in ALLOCATION[kind]:
        arr = getattr(params, name)
        arr[...] = rng.normal(0.0, scale, size=arr.shape)
    return params


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    spec = SyntheticSpec(n_users=60, n_items=80, clicks_per_user=12, seed=3)
    raw, store, truth = generate_synthetic(spec)
    dataset = kcore_filter(raw, store)
    return dataset, split_by_ground_truth(dataset, truth), truth


def fd_max_rel_error(kind, params, triple, features, config, categories=None, pos_delta=None,
                     h=1e-5, floor=1e-6):
    """Largest |analytic - central difference| / max(|analytic|, |numeric|, floor)."""
    from visdebias.training import gradients, triple_loss

    grads = gradients(kind, params, triple, features, config, categories, pos_delta)
    worst = 0.0
    for name, g in grads.items():
        arr = getattr(params, name)
        flat = arr.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = triple_loss(kind, params, triple, features, config, categories, pos_delta)
            flat[k] = old - h
            down = triple_loss(kind, params, triple, features, config, categories, pos_delta)
            flat[k] = old
            num = (up - down) / (2 * h)
            ana = g.reshape(-1)[k]
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
    return worst


def random_triple(rng, n_users=4, n_items=6):
    u = int(rng.integers(n_users))
    i, j = (int(x) for x in rng.choice(n_items, size=2, replace=False))
    return u, i, j

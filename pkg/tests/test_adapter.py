"""Linear adapter: projection, contrastive loss, gradients, training, checkpoints."""

import math

import numpy as np
import pytest

from embench.adapter import (
    AdapterParams,
    AdapterProvider,
    TrainConfig,
    TripletEmbedding,
    contrastive_loss,
    finite_diff_check,
    identity_params,
    load_checkpoint,
    load_train_config,
    random_params,
    save_checkpoint,
    train,
)
from embench.providers import MockProvider
from embench.records import TripletRecord


def _cfg(**kw) -> TrainConfig:
    defaults = dict(
        temperature=1.0,
        learning_rate=0.1,
        steps=1,
        batch_size=4,
        bidirectional=False,
        in_batch_negatives=False,
        unmixed_batches=False,
        seed=0,
        warmup_steps=0,
        lr_schedule="constant",
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


def _e(i: int, d: int = 8) -> np.ndarray:
    v = np.zeros(d)
    v[i] = 1.0
    return v


# ---------------------------------------------------------------- params


def test_identity_params_shapes():
    p = identity_params(4)
    np.testing.assert_array_equal(p.W, np.eye(4))
    np.testing.assert_array_equal(p.b, np.zeros(4))
    trunc = identity_params(6, 4)
    np.testing.assert_array_equal(trunc.W, np.eye(4, 6))
    padded = identity_params(3, 5)
    np.testing.assert_array_equal(padded.W, np.eye(5, 3))


def test_params_validation():
    with pytest.raises(ValueError):
        AdapterParams(W=np.eye(3), b=np.zeros(2))
    with pytest.raises(ValueError):
        AdapterParams(W=np.full((2, 2), np.nan), b=np.zeros(2))


def test_random_params_deterministic():
    a = random_params(6, 4, seed=3)
    b = random_params(6, 4, seed=3)
    np.testing.assert_array_equal(a.W, b.W)
    assert not np.allclose(a.W, random_params(6, 4, seed=4).W)


# ---------------------------------------------------------------- project


def test_project_golden():
    from embench.adapter import project

    p = identity_params(2)
    np.testing.assert_allclose(project(p, [3.0, 4.0]), [0.6, 0.8], atol=1e-12)


def test_project_zero_vector_rejected():
    from embench.adapter import project

    p = AdapterParams(W=np.zeros((2, 2)), b=np.zeros(2))
    with pytest.raises(ValueError):
        project(p, [1.0, 1.0])


def test_project_scale_absorbed():
    from embench.adapter import project

    p = random_params(4, 3, seed=0)
    a = project(p, np.array([1.0, 2.0, 3.0, 4.0]))
    # bias breaks scale invariance; with zero bias the direction is preserved
    assert p.b.sum() == 0.0
    b = project(p, 10.0 * np.array([1.0, 2.0, 3.0, 4.0]))
    np.testing.assert_allclose(a, b, atol=1e-12)


# ---------------------------------------------------------------- loss values


def test_loss_golden_separated():
    # s(q,p) = 1, s(q,n) = -1, tau = 1: loss = ln(1 + e^-2)
    t = TripletEmbedding(query=_e(0), positive=_e(0), negatives=-_e(0)[None, :])
    loss, _ = contrastive_loss([t], identity_params(8), _cfg())
    assert loss == pytest.approx(math.log(1 + math.exp(-2.0)), abs=1e-15)


def test_loss_golden_uniform():
    # all-orthogonal rows: every score 0, k candidates -> ln(k)
    t = TripletEmbedding(query=_e(0), positive=_e(1), negatives=np.stack([_e(2), _e(3)]))
    loss, _ = contrastive_loss([t], identity_params(8), _cfg())
    assert loss == pytest.approx(math.log(3.0), abs=1e-12)


def test_loss_temperature_scaling():
    t = TripletEmbedding(query=_e(0), positive=_e(0), negatives=-_e(0)[None, :])
    loss, _ = contrastive_loss([t], identity_params(8), _cfg(temperature=0.5))
    assert loss == pytest.approx(math.log(1 + math.exp(-4.0)), abs=1e-12)


def test_loss_in_batch_uniform():
    # two orthogonal triplets, in-batch on: each forward row sees 3 candidates
    t1 = TripletEmbedding(query=_e(0), positive=_e(1), negatives=_e(2)[None, :])
    t2 = TripletEmbedding(query=_e(3), positive=_e(4), negatives=_e(5)[None, :])
    loss, _ = contrastive_loss(
        [t1, t2], identity_params(8), _cfg(in_batch_negatives=True, bidirectional=True)
    )
    assert loss == pytest.approx(math.log(3.0), abs=1e-12)


def test_loss_bidirectional_single_triplet_equals_forward():
    rng = np.random.default_rng(0)
    t = TripletEmbedding(
        query=rng.standard_normal(8),
        positive=rng.standard_normal(8),
        negatives=rng.standard_normal((3, 8)),
    )
    params = random_params(8, 6, seed=1)
    f_loss, f_grads = contrastive_loss([t], params, _cfg(bidirectional=False))
    b_loss, b_grads = contrastive_loss([t], params, _cfg(bidirectional=True))
    assert b_loss == pytest.approx(f_loss, abs=1e-12)
    np.testing.assert_allclose(b_grads.W, f_grads.W, atol=1e-12)
    np.testing.assert_allclose(b_grads.b, f_grads.b, atol=1e-12)


def test_loss_batch_permutation_invariance():
    rng = np.random.default_rng(2)
    triplets = [
        TripletEmbedding(
            query=rng.standard_normal(6),
            positive=rng.standard_normal(6),
            negatives=rng.standard_normal((2, 6)),
        )
        for _ in range(4)
    ]
    params = random_params(6, 5, seed=0)
    cfg = _cfg(temperature=0.7, bidirectional=True, in_batch_negatives=True)
    loss_a, grads_a = contrastive_loss(triplets, params, cfg)
    perm = [triplets[2], triplets[0], triplets[3], triplets[1]]
    loss_b, grads_b = contrastive_loss(perm, params, cfg)
    assert loss_a == pytest.approx(loss_b, abs=1e-9)
    np.testing.assert_allclose(grads_a.W, grads_b.W, atol=1e-9)
    np.testing.assert_allclose(grads_a.b, grads_b.b, atol=1e-9)


def test_loss_rejects_bad_input():
    t = TripletEmbedding(query=_e(0), positive=_e(1), negatives=np.empty((0, 8)))
    with pytest.raises(ValueError):
        contrastive_loss([t], identity_params(8), _cfg())
    with pytest.raises(ValueError):
        contrastive_loss([], identity_params(8), _cfg())


# ---------------------------------------------------------------- gradients


def _random_batch(rng, d_in: int, batch: int, n_negs: int):
    return [
        TripletEmbedding(
            query=rng.standard_normal(d_in),
            positive=rng.standard_normal(d_in),
            negatives=rng.standard_normal((n_negs, d_in)),
        )
        for _ in range(batch)
    ]


@pytest.mark.parametrize("bidirectional", [False, True])
@pytest.mark.parametrize("in_batch", [False, True])
def test_gradients_match_finite_differences(bidirectional, in_batch):
    rng = np.random.default_rng(5)
    batch = _random_batch(rng, d_in=6, batch=3, n_negs=2)
    params = random_params(6, 4, seed=2)
    cfg = _cfg(temperature=0.8, bidirectional=bidirectional, in_batch_negatives=in_batch)
    assert finite_diff_check(params, batch, cfg) <= 1e-4


def test_gradients_identity_init():
    rng = np.random.default_rng(9)
    batch = _random_batch(rng, d_in=5, batch=2, n_negs=3)
    cfg = _cfg(temperature=1.0, bidirectional=True, in_batch_negatives=True)
    assert finite_diff_check(identity_params(5), batch, cfg) <= 1e-4


def test_gradients_low_temperature():
    rng = np.random.default_rng(4)
    batch = _random_batch(rng, d_in=4, batch=2, n_negs=1)
    params = random_params(4, 3, seed=1)
    cfg = _cfg(temperature=0.05)
    # sharper softmax amplifies curvature; tolerance loosens to 1e-3
    assert finite_diff_check(params, batch, cfg) <= 1e-3


def test_finite_diff_check_size_guard():
    with pytest.raises(ValueError):
        finite_diff_check(identity_params(40), [], _cfg())


# ---------------------------------------------------------------- training


class _ArrayProvider:
    """Deterministic provider over a fixed text -> vector table."""

    def __init__(self, table: dict[str, np.ndarray]):
        self.table = {k: np.asarray(v, dtype=np.float32) for k, v in table.items()}
        self.dim = len(next(iter(table.values())))

    def embed_batch(self, texts):
        return np.stack([self.table[t] for t in texts])


def _toy_triplets(n: int, d: int, seed: int):
    """Triplets whose positives align with a learnable direction of the query."""
    rng = np.random.default_rng(seed)
    table: dict[str, np.ndarray] = {}
    triplets = []
    for i in range(n):
        uid = f"uid{i}"
        q, p, neg = f"q{i}", f"p{i} {uid}", f"n{i} {uid}"
        base = rng.standard_normal(d)
        table[q] = base
        table[p] = base + 0.05 * rng.standard_normal(d)
        table[neg] = -base + 0.05 * rng.standard_normal(d)
        triplets.append(TripletRecord(uid, q, p, (neg,)))
    return triplets, _ArrayProvider(table)


def test_train_zero_steps_returns_init():
    triplets, provider = _toy_triplets(4, 6, seed=0)
    params, history = train(triplets, provider, _cfg(steps=0))
    np.testing.assert_array_equal(params.W, np.eye(6))
    np.testing.assert_array_equal(params.b, np.zeros(6))
    assert history.entries == ()


def test_train_deterministic_per_seed():
    triplets, provider = _toy_triplets(12, 6, seed=1)
    cfg = _cfg(steps=15, batch_size=4, seed=7, learning_rate=0.05)
    a, hist_a = train(triplets, provider, cfg)
    b, hist_b = train(triplets, provider, cfg)
    np.testing.assert_array_equal(a.W, b.W)
    np.testing.assert_array_equal(a.b, b.b)
    assert hist_a == hist_b
    c, _ = train(triplets, provider, _cfg(steps=15, batch_size=4, seed=8, learning_rate=0.05))
    assert not np.allclose(a.W, c.W)


def test_train_loss_decreases():
    triplets, provider = _toy_triplets(16, 6, seed=2)
    cfg = _cfg(steps=40, batch_size=8, learning_rate=0.2, temperature=0.5)
    _, history = train(triplets, provider, cfg)
    first = history.entries[0].loss
    last = history.entries[-1].loss
    assert last < first


def test_train_history_monotone_steps():
    triplets, provider = _toy_triplets(6, 4, seed=3)
    _, history = train(triplets, provider, _cfg(steps=5))
    assert [e.step for e in history.entries] == list(range(5))


def test_lr_schedule_warmup_then_decay():
    triplets, provider = _toy_triplets(6, 4, seed=3)
    cfg = _cfg(steps=4, warmup_steps=2, learning_rate=0.1, lr_schedule="linear_decay")
    _, history = train(triplets, provider, cfg)
    lrs = [e.lr for e in history.entries]
    assert lrs[0] == pytest.approx(0.05)  # warming up
    assert lrs[1] == pytest.approx(0.1)
    assert lrs[2] == pytest.approx(0.1)  # (4-2)/max(1, 4-2)
    assert lrs[3] == pytest.approx(0.05)  # (4-3)/2


def test_lr_schedule_constant():
    triplets, provider = _toy_triplets(6, 4, seed=3)
    cfg = _cfg(steps=3, learning_rate=0.07, lr_schedule="constant")
    _, history = train(triplets, provider, cfg)
    assert all(e.lr == pytest.approx(0.07) for e in history.entries)


def test_unmixed_batches_round_robin():
    # Two sources with different analytic losses; learning_rate tiny so params
    # stay at identity and each history row reveals which source was drawn.
    d = 4
    table = {
        # source a: aligned positive, opposed negative -> loss ln(1 + e^-2)
        "qa": np.array([1.0, 0, 0, 0]),
        "pa ua": np.array([1.0, 0, 0, 0]),
        "na ua": np.array([-1.0, 0, 0, 0]),
        # source b: all orthogonal -> loss ln(2)
        "qb": np.array([0, 1.0, 0, 0]),
        "pb ub": np.array([0, 0, 1.0, 0]),
        "nb ub": np.array([0, 0, 0, 1.0]),
    }
    provider = _ArrayProvider(table)
    triplets = [
        TripletRecord("ua", "qa", "pa ua", ("na ua",)),
        TripletRecord("ub", "qb", "pb ub", ("nb ub",)),
    ]
    cfg = _cfg(steps=4, batch_size=2, learning_rate=1e-9, unmixed_batches=True)
    _, history = train(triplets, provider, cfg, tags=["src_a", "src_b"])
    losses = [e.loss for e in history.entries]
    la = math.log(1 + math.exp(-2.0))
    lb = math.log(2.0)
    assert losses[0] == pytest.approx(la, abs=1e-6)
    assert losses[1] == pytest.approx(lb, abs=1e-6)
    assert losses[2] == pytest.approx(la, abs=1e-6)
    assert losses[3] == pytest.approx(lb, abs=1e-6)


def test_train_rejects_misaligned_tags():
    triplets, provider = _toy_triplets(4, 4, seed=0)
    with pytest.raises(ValueError):
        train(triplets, provider, _cfg(), tags=["only-one"])


def test_train_d_out_projection():
    triplets, provider = _toy_triplets(6, 8, seed=1)
    params, _ = train(triplets, provider, _cfg(steps=2), d_out=4)
    assert params.W.shape == (4, 8)
    adapted = AdapterProvider(provider, params)
    assert adapted.dim == 4
    out = adapted.embed_batch(["q0", "q1"])
    assert out.shape == (2, 4)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), [1.0, 1.0], atol=1e-6)


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    params = random_params(6, 4, seed=0)
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    # storage is float32; round-tripping the rounded values is exact
    np.testing.assert_array_equal(loaded.W, params.W.astype(np.float32).astype(np.float64))
    np.testing.assert_array_equal(loaded.b, params.b.astype(np.float32).astype(np.float64))


def test_checkpoint_save_is_deterministic(tmp_path):
    params = random_params(5, 5, seed=1)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, params)
    save_checkpoint(p2, params)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    params = identity_params(3)
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, params)
    data = path.read_bytes()

    bad_magic = tmp_path / "m.ckpt"
    bad_magic.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(bad_magic)

    truncated = tmp_path / "t.ckpt"
    truncated.write_bytes(data[:-5])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(truncated)

    trailing = tmp_path / "x.ckpt"
    trailing.write_bytes(data + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        load_checkpoint(trailing)


def test_identity_checkpoint_preserves_provider(tmp_path):
    provider = MockProvider(dim=12, seed=0)
    params = identity_params(12)
    adapted = AdapterProvider(provider, params)
    texts = [f"text {i}" for i in range(5)]
    base = provider.embed_batch(texts)
    out = adapted.embed_batch(texts)
    # mock vectors are already unit norm; identity projection re-normalizes only
    np.testing.assert_allclose(out, base, atol=1e-6)


# ---------------------------------------------------------------- config file


def test_load_train_config(tmp_path):
    path = tmp_path / "t.json"
    path.write_text('{"temperature": 0.5, "steps": 10, "lr_schedule": "LinearDecay"}')
    cfg = load_train_config(path)
    assert cfg.temperature == 0.5 and cfg.steps == 10 and cfg.lr_schedule == "linear_decay"


def test_load_train_config_rejects_unknown(tmp_path):
    path = tmp_path / "t.json"
    path.write_text('{"temp": 0.5}')
    with pytest.raises(ValueError, match="temp"):
        load_train_config(path)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(temperature=0.0)
    with pytest.raises(ValueError):
        TrainConfig(warmup_steps=11, steps=10)
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule="cosine")

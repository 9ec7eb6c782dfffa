import json
import math

import numpy as np
import pytest

from repaug import autodiff as ad
from repaug.augment import AugmentationSpec, spawn_rng
from repaug.dataio import generate_synthetic_corpus
from repaug.encoder import EncoderModel, Featurizer
from repaug.losses import LossConfig, PairSet, build_augmented_pairs, info_nce
from repaug.trainer import Adam, CorpusFeatures, SplitFeatures, TrainConfig, train, train_epoch


@pytest.fixture(scope="module")
def small():
    recs = generate_synthetic_corpus(200, 0.2, seed=3)
    return CorpusFeatures.from_records(recs, Featurizer(128))


def _model(seed=0, dim=128, normalize=False):
    return EncoderModel((dim, 32, 16), normalize_output=normalize, seed=seed)


def test_config_validation():
    with pytest.raises(ValueError, match="batch_size"):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError, match="aug_copies.*epochs|epochs"):
        TrainConfig(aug_copies=-1, epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(aug_menu=("warp",))
    assert TrainConfig().augmenting and not TrainConfig(aug_enabled=False).augmenting


def test_corpus_smaller_than_a_batch(small):
    cfg = TrainConfig(batch_size=64)
    tiny = SplitFeatures(small.train.query[:10], small.train.item[:10])
    m = _model()
    with pytest.raises(ValueError, match="fewer than one batch"):
        train_epoch(m, tiny, cfg, Adam(m.parameters()), 1)


def test_one_epoch_gives_one_row(small):
    res = train(_model(), small, TrainConfig(epochs=1, batch_size=32, aug_copies=2))
    assert len(res.metrics) == 1
    row = res.metrics[0]
    assert {"epoch", "loss", "mrr", "testMrr", "normStd", "aug"} <= set(row)
    assert sum(row["aug"].values()) == len(small.train) // 32


def test_metrics_have_no_gaps_and_eval_every(small):
    res = train(_model(), small, TrainConfig(epochs=4, batch_size=32, aug_copies=1, eval_every=2))
    assert [m["epoch"] for m in res.metrics] == [1, 2, 3, 4]
    assert res.metrics[0]["mrr"] is None and res.metrics[1]["mrr"] is not None
    assert res.best_epoch in (2, 4)


def test_identical_seeds_identical_trajectories(small):
    cfg = TrainConfig(epochs=2, batch_size=32, aug_copies=2, seed=5)
    a = train(_model(), small, cfg)
    b = train(_model(), small, cfg)
    assert [m["loss"] for m in a.metrics] == [m["loss"] for m in b.metrics]
    c = train(_model(), small, TrainConfig(epochs=2, batch_size=32, aug_copies=2, seed=6))
    assert [m["loss"] for m in a.metrics] != [m["loss"] for m in c.metrics]


def test_no_aug_matches_a_plain_infonce_loop(small):
    cfg = TrainConfig(epochs=2, batch_size=32, aug_enabled=False, seed=1)
    m1 = _model(3)
    train(m1, small, cfg)
    # hand-written plain loop with the same shuffle stream
    m2 = _model(3)
    opt = Adam(m2.parameters())
    n = len(small.train)
    for epoch in (1, 2):
        perm = spawn_rng(1, 0, epoch).permutation(n)
        for k in range(n // 32):
            idx = perm[k * 32:(k + 1) * 32]
            loss = info_nce(m2.encode(small.train.query[idx], "query"), m2.encode(small.train.item[idx], "item"))
            opt.step(ad.backward(loss, wrt=m2.parameters()))
    for a, b in zip(m1.state(), m2.state()):
        assert np.array_equal(a, b)


def test_copies_do_not_change_the_shuffle(small, monkeypatch):
    import repaug.trainer as tr
    seen = {}

    def recording(seed, *counters):
        rng = spawn_rng(seed, *counters)
        if counters[0] == 0:
            perm = spawn_rng(seed, *counters).permutation(len(small.train))
            seen.setdefault(copies, []).append(perm)
        return rng

    monkeypatch.setattr(tr, "spawn_rng", recording)
    for copies in (1, 3):
        m = _model()
        train_epoch(m, small.train, TrainConfig(batch_size=32, aug_copies=copies, seed=4), Adam(m.parameters()), 1)
    assert len(seen[1]) == 1 and np.array_equal(seen[1][0], seen[3][0])


def test_method_is_fixed_within_a_batch():
    q = np.random.default_rng(0).normal(size=(4, 3))
    spec = AugmentationSpec("perturb", drop_prob=0.5)
    qp, _, ps = build_augmented_pairs(q, q.copy(), spec, 3, np.random.default_rng(1))
    # every copy is a perturbation: entries are 0 or 2x the original
    copies = qp[4:].reshape(3, 4, 3)
    assert np.all((copies == 0) | np.isclose(copies, 2 * q))


def test_initial_loss_near_uniform_softmax():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(64, 1024))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    m = EncoderModel((1024, 256, 128), seed=0)
    for w, b in m.towers[0]:
        w.data *= 0.05  # near-zero similarities
    q = m.encode(x)
    qp, cp, ps = build_augmented_pairs(q, m.encode(x[::-1].copy()), AugmentationSpec("mixed"), 5,
                                       np.random.default_rng(0))
    from repaug.losses import augmented_info_nce
    assert abs(augmented_info_nce(qp, cp, ps).item() - math.log(379)) < 0.01


def test_adam_descends_on_a_fixed_batch(small):
    m = _model(7)
    opt = Adam(m.parameters(), lr=1e-4)
    q, c = small.train.query[:16], small.train.item[:16]
    losses = []
    for _ in range(10):
        loss = info_nce(m.encode(q), m.encode(c))
        losses.append(loss.item())
        opt.step(ad.backward(loss, wrt=m.parameters()))
    assert all(b < a for a, b in zip(losses, losses[1:]))


@pytest.mark.parametrize("kind", ["triplet", "logistic"])
def test_other_losses_train(small, kind):
    res = train(_model(), small, TrainConfig(epochs=1, batch_size=32, aug_copies=1), LossConfig(kind))
    assert np.isfinite(res.metrics[0]["loss"]) and res.metrics[0]["bound"] is None


def test_resume_reproduces_the_continuation(small, tmp_path):
    cfg = TrainConfig(epochs=3, batch_size=32, aug_copies=2, seed=2)
    full = train(_model(), small, cfg, out_dir=tmp_path / "full")
    part = train(_model(), small, TrainConfig(epochs=2, batch_size=32, aug_copies=2, seed=2),
                 out_dir=tmp_path / "part")
    assert part.metrics == full.metrics[:2]
    resumed = train(_model(), small, cfg, out_dir=tmp_path / "part", resume=tmp_path / "part")
    assert resumed.metrics == full.metrics
    assert (tmp_path / "part" / "metrics.jsonl").read_bytes() == (tmp_path / "full" / "metrics.jsonl").read_bytes()
    assert (tmp_path / "part" / "model_last.ramd").read_bytes() == (tmp_path / "full" / "model_last.ramd").read_bytes()
    rows = [json.loads(x) for x in (tmp_path / "full" / "metrics.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2, 3]


def test_vector_corpus_features():
    from repaug.dataio import CorpusRecord
    recs = [CorpusRecord(f"v{k}", "train", qvec=np.full(3, k, float), cvec=np.ones(3)) for k in range(4)]
    feats = CorpusFeatures.from_records(recs)
    assert feats.dim == 3 and len(feats.train) == 4 and len(feats.test) == 0


def test_pair_set_used_without_augmentation():
    assert PairSet(8, 0).negatives_per_anchor == 7

"""Mini-batch contrastive training with representation-level augmentation."""

from __future__ import annotations

import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .augment import DEFAULT_MENU, AugmentationSpec, Method, spawn_rng
from .dataio import CorpusRecord, atomic_write_bytes, atomic_write_text, by_split
from .encoder import EncoderModel, Featurizer
from .evaluation import EvalSet, mrr_from_scores
from .losses import LossConfig, PairSet, augmented_variant, build_augmented_pairs

log = logging.getLogger(__name__)

# stream ids for spawn_rng(seed, stream, ...)
_SHUFFLE, _AUGMENT = 0, 1


@dataclass
class TrainConfig:
    batch_size: int = 64
    aug_copies: int = 5
    epochs: int = 30
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    aug_menu: tuple[str, ...] = tuple(m.value for m in DEFAULT_MENU)
    aug_enabled: bool = True
    eval_every: int = 1
    # per-method hyperparameter overrides, e.g. {"gaussian": {"sigma": 0.2}}
    aug_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.aug_menu = tuple(Method(m).value for m in self.aug_menu)
        bad = []
        if self.batch_size < 2:
            bad.append("batch_size")
        if self.aug_copies < 0:
            bad.append("aug_copies")
        if self.epochs < 1:
            bad.append("epochs")
        if self.eval_every < 1:
            bad.append("eval_every")
        if not self.lr > 0:
            bad.append("lr")
        if self.aug_enabled and not self.aug_menu:
            bad.append("aug_menu")
        if bad:
            raise ValueError(f"invalid training config keys: {', '.join(bad)}")

    @property
    def augmenting(self) -> bool:
        return self.aug_enabled and self.aug_copies > 0

    def specs(self) -> list[AugmentationSpec]:
        return [AugmentationSpec(Method(m), **self.aug_params.get(m, {})) for m in self.aug_menu]


class Adam:
    def __init__(self, params: list[ad.Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = grads[p]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        d = {"t": np.array(self.t)}
        for k, (m, v) in enumerate(zip(self.m, self.v)):
            d[f"m{k}"], d[f"v{k}"] = m, v
        return d

    def load_state(self, d):
        self.t = int(d["t"])
        self.m = [np.array(d[f"m{k}"]) for k in range(len(self.params))]
        self.v = [np.array(d[f"v{k}"]) for k in range(len(self.params))]


@dataclass
class SplitFeatures:
    query: np.ndarray
    item: np.ndarray

    def __len__(self):
        return len(self.query)

    def eval_set(self) -> EvalSet:
        return EvalSet.paired(self.query, self.item)


@dataclass
class CorpusFeatures:
    train: SplitFeatures
    valid: SplitFeatures
    test: SplitFeatures

    @property
    def dim(self) -> int:
        return self.train.query.shape[1]

    @classmethod
    def from_records(cls, records: list[CorpusRecord], featurizer: Featurizer | None = None) -> "CorpusFeatures":
        featurizer = featurizer or Featurizer()

        def split(name):
            recs = by_split(records, name)
            if recs and recs[0].is_vector:
                return SplitFeatures(np.array([r.qvec for r in recs]), np.array([r.cvec for r in recs]))
            dim = featurizer.hash_dim
            if not recs:
                return SplitFeatures(np.zeros((0, dim)), np.zeros((0, dim)))
            return SplitFeatures(featurizer.featurize_many(r.query for r in recs),
                                 featurizer.featurize_many(r.code for r in recs))

        return cls(split("train"), split("valid"), split("test"))


@dataclass
class EpochResult:
    loss: float
    methods: dict[str, int] | None
    seconds: float


def train_epoch(model: EncoderModel, data: SplitFeatures, config: TrainConfig, opt: Adam,
                epoch: int, loss_config: LossConfig = LossConfig()) -> EpochResult:
    """One pass over shuffled full batches; the partial last batch is dropped."""
    b = config.batch_size
    n = len(data)
    if n < b:
        raise ValueError(f"corpus has {n} training pairs, fewer than one batch of {b}")
    start = time.perf_counter()
    perm = spawn_rng(config.seed, _SHUFFLE, epoch).permutation(n)
    specs = config.specs() if config.augmenting else []
    counts: dict[str, int] = {}
    params = model.parameters()
    total = 0.0
    n_batches = n // b
    for k in range(n_batches):
        idx = perm[k * b:(k + 1) * b]
        q = model.encode(data.query[idx], "query")
        c = model.encode(data.item[idx], "item")
        if specs:
            rng = spawn_rng(config.seed, _AUGMENT, epoch, k)
            spec = specs[int(rng.integers(len(specs)))]
            counts[spec.method.value] = counts.get(spec.method.value, 0) + 1
            q, c, pairs = build_augmented_pairs(q, c, spec, config.aug_copies, rng)
        else:
            pairs = PairSet(b, 0)
        loss = augmented_variant(loss_config, q, c, pairs)
        grads = ad.backward(loss, wrt=params)
        opt.step(grads)
        total += loss.item()
    return EpochResult(total / n_batches, counts if specs else None, time.perf_counter() - start)


@dataclass
class TrainResult:
    metrics: list[dict]
    best_epoch: int
    best_state: list[np.ndarray]
    final_state: list[np.ndarray]
    epoch_seconds: list[float]

    def best_model(self, template: EncoderModel) -> EncoderModel:
        m = EncoderModel(template.sizes, template.normalize_output, template.shared)
        m.load_state(self.best_state)
        return m

    @property
    def best_test_mrr(self) -> float:
        return self.metrics[self.best_epoch - 1]["testMrr"]

    @property
    def final_test_mrr(self) -> float:
        return self.metrics[-1]["testMrr"]


def _round(x):
    return None if x is None else float(x)


def _evaluate(model: EncoderModel, split: SplitFeatures):
    if len(split) == 0:
        return None, None
    code = model.embed(split.item, "item")
    q = model.embed(split.query, "query")
    norms = np.linalg.norm(code, axis=1)
    return mrr_from_scores(q @ code.T, np.arange(len(split))), float(norms.std())


def _bound_diagnostic(config: TrainConfig, loss: float, kind: str) -> float | None:
    # InfoNCE lower bound on MI with the interpolation weight taken as 1
    if kind != "infonce":
        return None
    n = config.aug_copies if config.augmenting else 1
    return math.log(n * config.batch_size) - loss


def train(model: EncoderModel, data: CorpusFeatures, config: TrainConfig,
          loss_config: LossConfig = LossConfig(), out_dir=None, resume=None) -> TrainResult:
    """Run ``config.epochs`` epochs, evaluating every ``eval_every`` epochs.

    The best state is chosen by validation MRR. With ``out_dir`` the metrics
    (JSON lines), best/last model files and a resumable checkpoint are written
    after every epoch. ``resume`` points at such a directory.
    """
    opt = Adam(model.parameters(), config.lr, config.beta1, config.beta2, config.eps)
    metrics: list[dict] = []
    best_epoch, best_mrr = 0, -math.inf
    best_state = model.state()
    start_epoch = 1
    if resume is not None:
        start_epoch, metrics, best_epoch, best_mrr, best_state = _load_checkpoint(Path(resume), model, opt)
    out = Path(out_dir) if out_dir is not None else None
    seconds = []
    for epoch in range(start_epoch, config.epochs + 1):
        res = train_epoch(model, data.train, config, opt, epoch, loss_config)
        seconds.append(res.seconds)
        row = {"epoch": epoch, "loss": res.loss, "mrr": None, "testMrr": None, "normStd": None,
               "aug": res.methods, "bound": _bound_diagnostic(config, res.loss, loss_config.kind)}
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            valid_mrr, norm_std = _evaluate(model, data.valid)
            test_mrr, _ = _evaluate(model, data.test)
            row.update(mrr=_round(valid_mrr), testMrr=_round(test_mrr), normStd=_round(norm_std))
            if valid_mrr is not None and valid_mrr > best_mrr:
                best_mrr, best_epoch, best_state = valid_mrr, epoch, model.state()
        metrics.append(row)
        log.info("epoch %d loss %.4f valid mrr %s", epoch, res.loss, row["mrr"])
        if out is not None:
            _write_epoch(out, model, opt, metrics, best_epoch, best_mrr, best_state, config.seed)
    if best_epoch == 0:
        best_epoch = len(metrics)
        best_state = model.state()
    return TrainResult(metrics, best_epoch, best_state, model.state(), seconds)


def metrics_jsonl(metrics: list[dict]) -> str:
    return "".join(json.dumps(m, sort_keys=True) + "\n" for m in metrics)


def _write_epoch(out: Path, model, opt, metrics, best_epoch, best_mrr, best_state, seed):
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "metrics.jsonl", metrics_jsonl(metrics))
    model.save(out / "model_last.ramd")
    best = EncoderModel(model.sizes, model.normalize_output, model.shared)
    best.load_state(best_state)
    best.save(out / "model_best.ramd")
    buf = io.BytesIO()
    np.savez(buf, epoch=np.array(metrics[-1]["epoch"]), best_epoch=np.array(best_epoch),
             best_mrr=np.array(best_mrr), seed=np.array(seed),
             **{f"best{k}": a for k, a in enumerate(best_state)}, **opt.state())
    atomic_write_bytes(out / "checkpoint.npz", buf.getvalue())


def _load_checkpoint(path: Path, model: EncoderModel, opt: Adam):
    last = EncoderModel.load(path / "model_last.ramd")
    model.load_state(last.state())
    with np.load(path / "checkpoint.npz") as z:
        opt.load_state(z)
        epoch = int(z["epoch"])
        best_epoch, best_mrr = int(z["best_epoch"]), float(z["best_mrr"])
        best_state = [np.array(z[f"best{k}"]) for k in range(len(model.parameters()))]
    metrics = [json.loads(line) for line in (path / "metrics.jsonl").read_text().splitlines() if line]
    return epoch + 1, metrics[:epoch], best_epoch, best_mrr, best_state


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["aug_menu"] = list(config.aug_menu)
    return d

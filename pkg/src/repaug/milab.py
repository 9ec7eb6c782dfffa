"""Empirical checks of the InfoNCE mutual-information lower bounds.

Paired Gaussian data with per-dimension correlation rho has a closed-form
mutual information, so a trained critic's bound can be compared against
the truth:

* plain InfoNCE:        I(q, c) >= log(B) - L
* with interpolation:   I(q, c) >= (log(N B) - L_aug - ab I(q,c-) - ab I(q-,c) - b^2 I(q-,c-)) / a^2

where a = lambda, b = 1 - lambda. The negative-pair terms are zero for
independent samples and are dropped unless ``estimate_negative_mi`` is set.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .augment import AugmentationSpec, Method, spawn_rng
from .encoder import EncoderModel
from .losses import augmented_info_nce, build_augmented_pairs, info_nce
from .trainer import Adam

DEFAULT_TOLERANCE = 0.1


@dataclass
class GaussianPairSource:
    dim: int
    rho: np.ndarray
    seed: int = 0

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.ndim == 0:
            rho = np.full(self.dim, float(rho))
        if rho.shape != (self.dim,):
            raise ValueError(f"rho must be a scalar or have {self.dim} entries, got shape {rho.shape}")
        if np.any(np.abs(rho) >= 1) or not np.all(np.isfinite(rho)):
            raise ValueError("every correlation must satisfy |rho| < 1")
        self.rho = rho

    @property
    def true_mi(self) -> float:
        """Mutual information in nats."""
        return float(-0.5 * np.sum(np.log1p(-self.rho ** 2))) + 0.0


def sample_pairs(source: GaussianPairSource, count: int, rng: np.random.Generator | None = None):
    """``count`` rows of (q, c) with q_k, c_k standard normal and corr(q_k, c_k) = rho_k."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = rng if rng is not None else np.random.default_rng(source.seed)
    q = rng.standard_normal((count, source.dim))
    noise = rng.standard_normal((count, source.dim))
    c = source.rho * q + np.sqrt(1.0 - source.rho ** 2) * noise
    return q, c


@dataclass
class BoundReport:
    theorem: int
    batch_size: int
    copies: int
    alpha: float
    beta: float
    loss: float
    bound: float
    true_mi: float
    ceiling: float
    seed: int
    dim: int
    rho: float
    negative_mi: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def margin(self) -> float:
        """How far the bound sits below the true MI (negative = violated)."""
        return self.true_mi - self.bound

    def violated(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.bound > self.true_mi + tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["negative_mi"] = list(self.negative_mi)
        d["margin"] = self.margin
        return d


def theorem1_ceiling(batch_size: int) -> float:
    return math.log(batch_size)


def theorem2_ceiling(batch_size: int, copies: int, alpha: float) -> float:
    return math.log(copies * batch_size) / alpha ** 2


@dataclass
class CriticConfig:
    hidden: int = 64
    embed: int = 32
    lr: float = 1e-3
    epochs: int = 20
    steps_per_epoch: int = 50
    eval_batches: int = 100


def _critic(source: GaussianPairSource, cfg: CriticConfig, seed: int) -> EncoderModel:
    return EncoderModel((source.dim, cfg.hidden, cfg.embed), shared=False, seed=seed)


def _interp_spec(lam: float) -> AugmentationSpec:
    return AugmentationSpec(Method.INTERP, lambda_low=lam, lambda_high=lam)


def _batch_loss(model, q, c, copies, spec, rng):
    qt, ct = model.encode(q, "query"), model.encode(c, "item")
    if copies == 0:
        return info_nce(qt, ct)
    qp, cp, pairs = build_augmented_pairs(qt, ct, spec, copies, rng)
    return augmented_info_nce(qp, cp, pairs)


def _fit_and_score(source, batch_size, copies, spec, cfg: CriticConfig, seed: int):
    """Train a fresh critic on streaming batches; return (model, held-out loss)."""
    model = _critic(source, cfg, seed)
    opt = Adam(model.parameters(), cfg.lr)
    data_rng = spawn_rng(seed, 10, source.seed)
    aug_rng = spawn_rng(seed, 11, source.seed)
    params = model.parameters()
    for _ in range(cfg.epochs * cfg.steps_per_epoch):
        q, c = sample_pairs(source, batch_size, data_rng)
        loss = _batch_loss(model, q, c, copies, spec, aug_rng)
        opt.step(ad.backward(loss, wrt=params))
    eval_rng = spawn_rng(seed, 12, source.seed)
    eval_aug = spawn_rng(seed, 13, source.seed)
    losses = []
    for _ in range(cfg.eval_batches):
        q, c = sample_pairs(source, batch_size, eval_rng)
        losses.append(_batch_loss(model, q, c, copies, spec, eval_aug).item())
    return model, float(np.mean(losses))


def _negative_mi(model, source, batch_size, cfg: CriticConfig, seed: int) -> tuple[float, float, float]:
    # InfoNCE estimate on deliberately mismatched pairs, clipped at 0
    rng = spawn_rng(seed, 14, source.seed)
    est = np.zeros(3)
    for _ in range(cfg.eval_batches):
        q, c = sample_pairs(source, batch_size, rng)
        p1, p2 = rng.permutation(batch_size), rng.permutation(batch_size)
        combos = ((q, c[p1]), (q[p1], c), (q[p1], c[p2]))
        for k, (a, b) in enumerate(combos):
            est[k] += math.log(batch_size) - info_nce(model.embed(a, "query"), model.embed(b, "item")).item()
    est /= cfg.eval_batches
    return tuple(float(max(0.0, e)) for e in est)


def verify_theorem1(source: GaussianPairSource, batch_size: int = 64, cfg: CriticConfig | None = None,
                    seed: int = 0, loss_offset: float = 0.0) -> BoundReport:
    """Train with plain InfoNCE and report log(B) - L on held-out batches.

    ``loss_offset`` is subtracted from the measured loss (fault injection).
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    cfg = cfg or CriticConfig()
    _, loss = _fit_and_score(source, batch_size, 0, None, cfg, seed)
    loss -= loss_offset
    return BoundReport(1, batch_size, 0, 1.0, 0.0, loss, math.log(batch_size) - loss, source.true_mi,
                       theorem1_ceiling(batch_size), seed, source.dim, float(source.rho.mean()))


def verify_theorem2(source: GaussianPairSource, batch_size: int = 64, copies: int = 5, lam: float = 0.95,
                    cfg: CriticConfig | None = None, seed: int = 0, estimate_negative_mi: bool = False,
                    loss_offset: float = 0.0) -> BoundReport:
    """Train with interpolation-augmented InfoNCE at a fixed lambda and report
    the augmented bound on held-out batches."""
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    cfg = cfg or CriticConfig()
    alpha, beta = lam, 1.0 - lam
    model, loss = _fit_and_score(source, batch_size, copies, _interp_spec(lam), cfg, seed)
    loss -= loss_offset
    neg = _negative_mi(model, source, batch_size, cfg, seed) if estimate_negative_mi else (0.0, 0.0, 0.0)
    inner = math.log(copies * batch_size) - loss - alpha * beta * (neg[0] + neg[1]) - beta ** 2 * neg[2]
    return BoundReport(2, batch_size, copies, alpha, beta, loss, inner / alpha ** 2, source.true_mi,
                       theorem2_ceiling(batch_size, copies, alpha), seed, source.dim,
                       float(source.rho.mean()), neg)

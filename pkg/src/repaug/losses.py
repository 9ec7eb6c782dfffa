"""Contrastive objectives over dot-product similarity.

Pooled layout: after ``N`` augmentation copies, query and item pools hold
``(N + 1) * B`` rows ordered ``[originals; copy 1; ...; copy N]`` so that row
``r`` belongs to base example ``r % B``. Any (query row, item row) pair with
the same base index is a positive; everything else is a negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import autodiff as ad
from .augment import AugmentationSpec, augment
from .autodiff import Tensor

LOSS_KINDS = ("infonce", "triplet", "logistic")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "infonce"
    margin: float = 5.0
    temperature: float = 1.0
    # use the literal signs of the triplet/logistic formulas (audit only)
    as_printed: bool = False

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if not self.margin > 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")


@dataclass(frozen=True)
class PairSet:
    batch_size: int
    copies: int

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError(f"need batch_size >= 2 for in-batch negatives, got {self.batch_size}")
        if self.copies < 0:
            raise ValueError(f"copies must be >= 0, got {self.copies}")

    @property
    def rows(self) -> int:
        return (self.copies + 1) * self.batch_size

    @cached_property
    def base(self) -> np.ndarray:
        return np.arange(self.rows) % self.batch_size

    @cached_property
    def pos_mask(self) -> np.ndarray:
        return self.base[:, None] == self.base[None, :]

    @cached_property
    def neg_mask(self) -> np.ndarray:
        return ~self.pos_mask

    @cached_property
    def pos_index(self) -> np.ndarray:
        """(rows, N+1) item rows that are positives of each query anchor."""
        return np.nonzero(self.pos_mask)[1].reshape(self.rows, self.copies + 1)

    @cached_property
    def neg_index(self) -> np.ndarray:
        """(rows, (B-1)(N+1)) item rows that are negatives of each query anchor."""
        return np.nonzero(self.neg_mask)[1].reshape(self.rows, -1)

    @property
    def positives(self) -> np.ndarray:
        """All positive (query row, item row) pairs, shape ((N+1)^2 B, 2)."""
        return np.argwhere(self.pos_mask)

    @property
    def negatives_per_anchor(self) -> int:
        return self.neg_index.shape[1]


def build_augmented_pairs(Q, C, spec: AugmentationSpec, copies: int, rng: np.random.Generator):
    """Augment both sides ``copies`` times and stack them under the originals.

    Each copy draws fresh coefficients and partners; the query side and the
    item side use independent streams, so their partners differ.
    """
    if copies < 0:
        raise ValueError(f"copies must be >= 0, got {copies}")
    pairs = PairSet(Q.shape[0], copies)
    if Q.shape != C.shape:
        raise ad.ShapeError(f"query batch {Q.shape} and item batch {C.shape} differ")
    if copies == 0:
        return Q, C, pairs
    streams = rng.spawn(2 * copies)
    q_parts, c_parts = [Q], [C]
    for n in range(copies):
        q_parts.append(augment(Q, spec, streams[2 * n]))
        c_parts.append(augment(C, spec, streams[2 * n + 1]))
    if isinstance(Q, Tensor) or isinstance(C, Tensor):
        return ad.concat(q_parts), ad.concat(c_parts), pairs
    return np.concatenate(q_parts), np.concatenate(c_parts), pairs


def similarity(Q, C, temperature: float = 1.0) -> Tensor:
    s = ad.matmul(Q, ad.transpose(C))
    return s if temperature == 1.0 else ad.scale(s, 1.0 / temperature)


def info_nce(Q, C, temperature: float = 1.0) -> Tensor:
    """Mean over rows of -log softmax(q_i . C)_i."""
    Q, C = ad.as_tensor(Q), ad.as_tensor(C)
    if Q.shape[0] < 2:
        raise ValueError("InfoNCE needs at least 2 rows (in-batch negatives)")
    if Q.shape != C.shape:
        raise ad.ShapeError(f"query batch {Q.shape} and item batch {C.shape} differ")
    s = similarity(Q, C, temperature)
    idx = np.arange(Q.shape[0])
    return ad.mean(ad.logsumexp(s, axis=1) - ad.gather(s, idx, idx))


def augmented_info_nce(Qpool, Cpool, pairs: PairSet, temperature: float = 1.0) -> Tensor:
    """Mean InfoNCE term over every positive pair of the pool.

    The denominator for positive (a, b) is exp(s_ab) plus the anchor's
    negatives only; the anchor's other positives are left out. Each term is
    written as softplus(lse_neg(a) - s_ab).
    """
    Qpool, Cpool = ad.as_tensor(Qpool), ad.as_tensor(Cpool)
    _check_pool(Qpool, Cpool, pairs)
    s = similarity(Qpool, Cpool, temperature)
    neg_lse = ad.logsumexp(s, axis=1, mask=pairs.neg_mask)
    terms = ad.softplus(ad.expand(neg_lse, 1, pairs.rows) - s)
    n_pos = pairs.rows * (pairs.copies + 1)
    return ad.scale(ad.tensor_sum(terms * pairs.pos_mask.astype(np.float64)), 1.0 / n_pos)


def _check_pool(Qpool: Tensor, Cpool: Tensor, pairs: PairSet):
    if Qpool.shape[0] != pairs.rows or Cpool.shape != Qpool.shape:
        raise ad.ShapeError(f"pools {Qpool.shape}/{Cpool.shape} do not match "
                            f"{pairs.rows} rows of the pair set")


def _anchor_rows(pairs: PairSet) -> np.ndarray:
    return np.arange(pairs.rows)[:, None]


def augmented_triplet(Qpool, Cpool, pairs: PairSet, margin: float = 5.0, as_printed: bool = False) -> Tensor:
    """Hinge on squared distances, averaged over every (positive, negative) pair
    of every anchor."""
    if not margin > 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    Qpool, Cpool = ad.as_tensor(Qpool), ad.as_tensor(Cpool)
    _check_pool(Qpool, Cpool, pairs)
    r = pairs.rows
    qn = ad.expand(ad.tensor_sum(ad.square(Qpool), axis=1), 1, r)
    cn = ad.expand(ad.tensor_sum(ad.square(Cpool), axis=1), 0, r)
    d2 = qn + cn - ad.scale(similarity(Qpool, Cpool), 2.0)
    rows = _anchor_rows(pairs)
    pos = ad.gather(d2, rows, pairs.pos_index)
    neg = ad.gather(d2, rows, pairs.neg_index)
    k, p = pairs.neg_index.shape[1], pairs.pos_index.shape[1]
    hinge = ad.relu(ad.expand(pos, 2, k) - ad.expand(neg, 1, p) + margin)
    loss = ad.mean(hinge)
    return ad.scale(loss, -1.0) if as_printed else loss


def augmented_logistic(Qpool, Cpool, pairs: PairSet, as_printed: bool = False) -> Tensor:
    """Binary logistic (NCE) loss per positive pair with the anchor's negatives.

    Standard form: -log sig(s_pos) - mean log sig(-s_neg). With ``as_printed``
    the literal formula -[log sig(s_pos) - mean log sig(s_neg)] is used, which
    is unbounded below.
    """
    Qpool, Cpool = ad.as_tensor(Qpool), ad.as_tensor(Cpool)
    _check_pool(Qpool, Cpool, pairs)
    s = similarity(Qpool, Cpool)
    rows = _anchor_rows(pairs)
    pos = ad.gather(s, rows, pairs.pos_index)
    neg = ad.gather(s, rows, pairs.neg_index)
    pos_term = ad.mean(ad.softplus(ad.scale(pos, -1.0)))
    if as_printed:
        return pos_term - ad.mean(ad.softplus(ad.scale(neg, -1.0)))
    return pos_term + ad.mean(ad.softplus(neg))


def triplet_loss(Q, C, margin: float = 5.0, as_printed: bool = False) -> Tensor:
    return augmented_triplet(Q, C, PairSet(ad.as_tensor(Q).shape[0], 0), margin, as_printed)


def logistic_loss(Q, C, as_printed: bool = False) -> Tensor:
    return augmented_logistic(Q, C, PairSet(ad.as_tensor(Q).shape[0], 0), as_printed)


def augmented_variant(config: LossConfig, Qpool, Cpool, pairs: PairSet) -> Tensor:
    """Dispatch on ``config.kind`` over a pooled pair set."""
    if config.kind == "infonce":
        if pairs.copies == 0:
            return info_nce(Qpool, Cpool, config.temperature)
        return augmented_info_nce(Qpool, Cpool, pairs, config.temperature)
    if config.kind == "triplet":
        return augmented_triplet(Qpool, Cpool, pairs, config.margin, config.as_printed)
    return augmented_logistic(Qpool, Cpool, pairs, config.as_printed)

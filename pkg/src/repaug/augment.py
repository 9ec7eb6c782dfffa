"""Representation-level augmentation.

Every method is an instance of one operator, ``h+ = alpha * h + beta * h'``,
applied row-wise to a batch of representations. The methods differ only in
how (alpha, beta, h') are drawn:

=============  =====================  ==================  ===============
method         alpha                  beta                h'
=============  =====================  ==================  ===============
interp         lambda <= 1 (per row)  1 - lambda          another row
extrap         lambda >= 1 (per row)  1 - lambda          another row
mixed          lambda ~ U(0.9, 1.1)   1 - lambda          another row
perturb        {0, 1/(1-p)} mask      1/(1-p) - alpha     0
binary         {0, 1} mask            1 - alpha           another row
gaussian       1                      N(0, sigma)         h itself
=============  =====================  ==================  ===============

Functions accept numpy arrays or :class:`~repaug.autodiff.Tensor` batches; with
tensors the result stays on the tape so gradients reach the encoder. Random
draws always happen in the same order (partners, then coefficients), which
is what lets :func:`general_form` reproduce :func:`augment` exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np

from .autodiff import Tensor, take_rows


class Method(str, Enum):
    INTERP = "interp"
    EXTRAP = "extrap"
    MIXED = "mixed"
    PERTURB = "perturb"
    BINARY = "binary"
    GAUSSIAN = "gaussian"


PAIRED_METHODS = frozenset({Method.INTERP, Method.EXTRAP, Method.MIXED, Method.BINARY})

# the four approaches sampled per batch during training
DEFAULT_MENU = (Method.MIXED, Method.PERTURB, Method.BINARY, Method.GAUSSIAN)

_LAMBDA_DEFAULTS = {
    Method.INTERP: (0.9, 1.0),
    Method.EXTRAP: (1.0, 1.1),
    Method.MIXED: (0.9, 1.1),
}


@dataclass(frozen=True)
class AugmentationSpec:
    method: Method
    lambda_low: float | None = None
    lambda_high: float | None = None
    drop_prob: float = 0.1
    bernoulli_prob: float = 0.25
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        lo, hi = _LAMBDA_DEFAULTS.get(self.method, (0.9, 1.1))
        if self.lambda_low is None:
            object.__setattr__(self, "lambda_low", lo)
        if self.lambda_high is None:
            object.__setattr__(self, "lambda_high", hi)
        if self.lambda_low > self.lambda_high:
            raise ValueError(f"lambda_low {self.lambda_low} > lambda_high {self.lambda_high}")
        if self.method is Method.INTERP and self.lambda_high > 1.0:
            raise ValueError("interp needs lambda_high <= 1")
        if self.method is Method.EXTRAP and self.lambda_low < 1.0:
            raise ValueError("extrap needs lambda_low >= 1")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError(f"drop_prob must be in [0, 1), got {self.drop_prob}")
        if not 0.0 <= self.bernoulli_prob <= 1.0:
            raise ValueError(f"bernoulli_prob must be in [0, 1], got {self.bernoulli_prob}")
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def with_null_parameters(self) -> "AugmentationSpec":
        """Copy whose draws make the method an exact identity."""
        return replace(self, lambda_low=1.0, lambda_high=1.0, drop_prob=0.0,
                       bernoulli_prob=0.0, sigma=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationSpec":
        return cls(**d)


@dataclass
class GeneralDraw:
    """Coefficients of the general operator for one augmented batch.

    ``partners is None`` means h' = 0.
    """
    alpha: np.ndarray
    beta: np.ndarray
    partners: np.ndarray | None


def _rows(h, index):
    return take_rows(h, index) if isinstance(h, Tensor) else np.asarray(h)[index]


def _check_partners(partners: np.ndarray, batch_size: int):
    partners = np.asarray(partners)
    if partners.shape != (batch_size,):
        raise ValueError(f"expected {batch_size} partner indices, got shape {partners.shape}")
    if np.any((partners < 0) | (partners >= batch_size)):
        raise ValueError("partner index out of range")
    if np.any(partners == np.arange(batch_size)):
        raise ValueError("a row was assigned itself as partner")


def general_augment(h, h_prime, alpha, beta):
    """``alpha * h + beta * h_prime`` elementwise."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    hp_shape = np.shape(h_prime.data if isinstance(h_prime, Tensor) else h_prime)
    h_shape = h.shape if isinstance(h, Tensor) else np.shape(h)
    if not (h_shape == hp_shape == alpha.shape == beta.shape):
        raise ValueError(f"general_augment: shape mismatch h{h_shape} h'{hp_shape} "
                         f"alpha{alpha.shape} beta{beta.shape}")
    return alpha * h + beta * h_prime


def sample_partners(batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """One partner per row, uniform over the other rows."""
    if batch_size < 2:
        raise ValueError(f"need at least 2 rows to pick a partner, got {batch_size}")
    j = rng.integers(0, batch_size - 1, size=batch_size)
    return j + (j >= np.arange(batch_size))


def _lambda_matrix(lam, shape):
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (shape[0],):
        raise ValueError(f"expected one lambda per row ({shape[0]}), got shape {lam.shape}")
    return np.repeat(lam[:, None], shape[1], axis=1)


def linear_mix(batch, partners, lam):
    """Row i becomes lam_i * h_i + (1 - lam_i) * h_partner(i)."""
    _check_partners(partners, batch.shape[0])
    alpha = _lambda_matrix(lam, batch.shape)
    return alpha * batch + (1.0 - alpha) * _rows(batch, partners)


def linear_interpolate(batch, partners, lam):
    if np.any(np.asarray(lam) > 1.0):
        raise ValueError("interpolation needs lambda <= 1")
    return linear_mix(batch, partners, lam)


def linear_extrapolate(batch, partners, lam):
    if np.any(np.asarray(lam) < 1.0):
        raise ValueError("extrapolation needs lambda >= 1")
    return linear_mix(batch, partners, lam)


def perturb_mask(shape, drop_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout coefficients: 0 with prob p, else 1/(1-p)."""
    if not 0.0 <= drop_prob < 1.0:
        raise ValueError(f"drop_prob must be in [0, 1), got {drop_prob}")
    keep = rng.random(shape) >= drop_prob
    return keep * (1.0 / (1.0 - drop_prob))


def stochastic_perturb(batch, drop_prob: float, rng: np.random.Generator):
    return perturb_mask(batch.shape, drop_prob, rng) * batch


def binary_mask(shape, bernoulli_prob: float, rng: np.random.Generator) -> np.ndarray:
    # 1 keeps the own feature, 0 takes the partner's; swap probability is p_b
    if not 0.0 <= bernoulli_prob <= 1.0:
        raise ValueError(f"bernoulli_prob must be in [0, 1], got {bernoulli_prob}")
    return (rng.random(shape) >= bernoulli_prob).astype(np.float64)


def binary_interpolate(batch, partners, bernoulli_prob: float, rng: np.random.Generator):
    _check_partners(partners, batch.shape[0])
    keep = binary_mask(batch.shape, bernoulli_prob, rng)
    return keep * batch + (1.0 - keep) * _rows(batch, partners)


def gaussian_scale(batch, sigma: float, rng: np.random.Generator):
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    beta = rng.normal(0.0, sigma, size=batch.shape)
    return batch + beta * batch


def augment(batch, spec: AugmentationSpec, rng: np.random.Generator):
    """Apply ``spec.method`` to every row, drawing fresh partners/coefficients."""
    m = spec.method
    if m in PAIRED_METHODS:
        partners = sample_partners(batch.shape[0], rng)
        if m is Method.BINARY:
            return binary_interpolate(batch, partners, spec.bernoulli_prob, rng)
        lam = rng.uniform(spec.lambda_low, spec.lambda_high, size=batch.shape[0])
        return linear_mix(batch, partners, lam)
    if m is Method.PERTURB:
        return stochastic_perturb(batch, spec.drop_prob, rng)
    return gaussian_scale(batch, spec.sigma, rng)


def general_form(shape: tuple[int, int], spec: AugmentationSpec, rng: np.random.Generator) -> GeneralDraw:
    """The (alpha, beta, h') that :func:`augment` would use for the same rng state."""
    b, e = shape
    m = spec.method
    if m in PAIRED_METHODS:
        partners = sample_partners(b, rng)
        if m is Method.BINARY:
            alpha = binary_mask(shape, spec.bernoulli_prob, rng)
        else:
            alpha = _lambda_matrix(rng.uniform(spec.lambda_low, spec.lambda_high, size=b), shape)
        return GeneralDraw(alpha, 1.0 - alpha, partners)
    if m is Method.PERTURB:
        alpha = perturb_mask(shape, spec.drop_prob, rng)
        return GeneralDraw(alpha, 1.0 / (1.0 - spec.drop_prob) - alpha, None)
    beta = rng.normal(0.0, spec.sigma, size=shape)
    return GeneralDraw(np.ones(shape), beta, np.arange(b))


def apply_general(batch, draw: GeneralDraw):
    if draw.partners is None:
        h_prime = np.zeros(batch.shape)
    else:
        h_prime = _rows(batch, draw.partners)
    return general_augment(batch, h_prime, draw.alpha, draw.beta)


def spawn_rng(seed: int, *counters: int) -> np.random.Generator:
    """Independent stream keyed by (seed, *counters)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, counters)]))


def parse_params(method: str, params: str) -> AugmentationSpec:
    """Build a spec from ``"lambda=0.5,seed=3"``-style text."""
    keys = {
        "lambda": ("lambda_low", "lambda_high"),
        "lambda_low": ("lambda_low",),
        "lambda_high": ("lambda_high",),
        "p": ("drop_prob",),
        "drop_prob": ("drop_prob",),
        "p_b": ("bernoulli_prob",),
        "pb": ("bernoulli_prob",),
        "bernoulli_prob": ("bernoulli_prob",),
        "sigma": ("sigma",),
        "seed": ("seed",),
    }
    kwargs: dict = {}
    for item in filter(None, (s.strip() for s in (params or "").split(","))):
        name, _, value = item.partition("=")
        name = name.strip()
        if name not in keys or not value:
            raise ValueError(f"bad augmentation parameter {item!r}; known: {sorted(keys)}")
        for field in keys[name]:
            kwargs[field] = int(value) if field == "seed" else float(value)
    return AugmentationSpec(Method(method), **kwargs)


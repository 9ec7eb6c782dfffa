"""Run configuration: INI-style sections, flags override file values.

Precedence, lowest first: built-in defaults, the ``--config`` file, command
line flags. The resolved configuration is written into every run directory
as ``config.ini`` and can be fed back with ``train --config``.

Sections and keys::

    [run]        seed, corpus, out
    [encoder]    hash_dim, sizes (comma list), normalize_output, shared
    [train]      batch_size, aug_copies, epochs, lr, beta1, beta2, eps,
                 aug_menu (comma list), aug_enabled, eval_every
    [loss]       kind, margin, temperature, as_printed
    [augment.<method>]
                 lambda_low, lambda_high, drop_prob, bernoulli_prob, sigma
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .augment import AugmentationSpec, Method
from .losses import LOSS_KINDS, LossConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    hash_dim: int = 1024
    hidden: tuple[int, ...] = (256, 128)
    normalize_output: bool = False
    shared: bool = True

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.hash_dim, *self.hidden)


@dataclass
class RunConfig:
    seed: int = 0
    corpus: str = ""
    out: str = ""
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)


_AUG_KEYS = ("lambda_low", "lambda_high", "drop_prob", "bernoulli_prob", "sigma")
_TRAIN_KEYS = ("batch_size", "aug_copies", "epochs", "lr", "beta1", "beta2", "eps",
               "aug_menu", "aug_enabled", "eval_every")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


_TYPES = {
    ("run", "seed"): int, ("run", "corpus"): str, ("run", "out"): str,
    ("encoder", "hash_dim"): int, ("encoder", "sizes"): _ints,
    ("encoder", "normalize_output"): _bool, ("encoder", "shared"): _bool,
    ("train", "batch_size"): int, ("train", "aug_copies"): int, ("train", "epochs"): int,
    ("train", "lr"): float, ("train", "beta1"): float, ("train", "beta2"): float,
    ("train", "eps"): float, ("train", "aug_menu"): _names, ("train", "aug_enabled"): _bool,
    ("train", "eval_every"): int,
    ("loss", "kind"): str, ("loss", "margin"): float, ("loss", "temperature"): float,
    ("loss", "as_printed"): _bool,
}


def parse_config_text(text: str, bad: list | None = None) -> dict:
    """Parse INI text into {(section, key): value}.

    Unknown or unparsable keys raise ConfigError, or are appended to ``bad``
    when a list is given so later validation can report them together.
    """
    collect = bad is not None
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    values = {}
    bad = bad if collect else []
    for section in cp.sections():
        for key, raw in cp.items(section):
            if section.startswith("augment."):
                method = section.split(".", 1)[1]
                if method not in {m.value for m in Method} or key not in _AUG_KEYS:
                    bad.append(f"{section}.{key}")
                    continue
                conv = float
            else:
                conv = _TYPES.get((section, key))
                if conv is None:
                    bad.append(f"{section}.{key}")
                    continue
            try:
                values[(section, key)] = conv(raw)
            except ValueError:
                bad.append(f"{section}.{key}")
    if bad and not collect:
        raise ConfigError(f"invalid config keys: {', '.join(sorted(bad))}")
    return values


_CHECKS = {
    ("train", "batch_size"): lambda v: v >= 2,
    ("train", "aug_copies"): lambda v: v >= 0,
    ("train", "epochs"): lambda v: v >= 1,
    ("train", "eval_every"): lambda v: v >= 1,
    ("train", "lr"): lambda v: v > 0,
    ("train", "beta1"): lambda v: 0 <= v < 1,
    ("train", "beta2"): lambda v: 0 <= v < 1,
    ("train", "eps"): lambda v: v > 0,
    ("train", "aug_menu"): lambda v: all(m in {x.value for x in Method} for m in v),
    ("loss", "kind"): lambda v: v in LOSS_KINDS,
    ("loss", "margin"): lambda v: v > 0,
    ("loss", "temperature"): lambda v: v > 0,
}


def build_run_config(values: dict, bad: list | None = None) -> RunConfig:
    """Assemble a validated RunConfig from {(section, key): value}.

    Every offending key is reported in one ConfigError.
    """
    bad = list(bad or [])
    for key, ok in _CHECKS.items():
        if key in values and not ok(values[key]):
            bad.append(".".join(key))
    aug_params: dict = {}
    for (section, key), v in values.items():
        if section.startswith("augment."):
            aug_params.setdefault(section.split(".", 1)[1], {})[key] = v
    for method, params in aug_params.items():
        try:
            AugmentationSpec(Method(method), **params)
        except ValueError:
            bad.extend(f"augment.{method}.{k}" for k in params)
    if bad:
        raise ConfigError(f"invalid config keys: {', '.join(sorted(set(bad)))}")
    run = RunConfig()
    run.seed = values.get(("run", "seed"), 0)
    run.corpus = values.get(("run", "corpus"), "")
    run.out = values.get(("run", "out"), "")
    enc = EncoderConfig()
    enc.hash_dim = values.get(("encoder", "hash_dim"), enc.hash_dim)
    if ("encoder", "sizes") in values:
        enc.hidden = values[("encoder", "sizes")]
    enc.normalize_output = values.get(("encoder", "normalize_output"), enc.normalize_output)
    enc.shared = values.get(("encoder", "shared"), enc.shared)
    if enc.hash_dim < 1 or not enc.hidden or min(enc.hidden) < 1:
        bad.append("encoder.hash_dim/encoder.sizes")
    run.encoder = enc
    train_kwargs = {k: values[("train", k)] for k in _TRAIN_KEYS if ("train", k) in values}
    try:
        run.train = TrainConfig(seed=run.seed, aug_params=aug_params, **train_kwargs)
    except ValueError as exc:
        bad.append(f"train ({exc})")
    loss_kwargs = {f.name: values[("loss", f.name)] for f in fields(LossConfig) if ("loss", f.name) in values}
    try:
        run.loss = LossConfig(**loss_kwargs)
    except ValueError as exc:
        bad.append(f"loss ({exc})")
    if bad:
        raise ConfigError(f"invalid config keys: {', '.join(sorted(set(bad)))}")
    return run


def dump_run_config(run: RunConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["run"] = {"seed": str(run.seed), "corpus": run.corpus, "out": run.out}
    e = run.encoder
    cp["encoder"] = {"hash_dim": str(e.hash_dim), "sizes": ",".join(map(str, e.hidden)),
                     "normalize_output": str(e.normalize_output).lower(),
                     "shared": str(e.shared).lower()}
    t = run.train
    cp["train"] = {"batch_size": str(t.batch_size), "aug_copies": str(t.aug_copies),
                   "epochs": str(t.epochs), "lr": repr(t.lr), "beta1": repr(t.beta1),
                   "beta2": repr(t.beta2), "eps": repr(t.eps), "aug_menu": ",".join(t.aug_menu),
                   "aug_enabled": str(t.aug_enabled).lower(), "eval_every": str(t.eval_every)}
    lc = run.loss
    cp["loss"] = {"kind": lc.kind, "margin": repr(lc.margin), "temperature": repr(lc.temperature),
                  "as_printed": str(lc.as_printed).lower()}
    for method in sorted(t.aug_params):
        cp[f"augment.{method}"] = {k: repr(float(v)) for k, v in sorted(t.aug_params[method].items())}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()

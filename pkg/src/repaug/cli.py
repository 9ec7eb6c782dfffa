"""Command line entry point.

Exit codes: 0 success, 1 bound violation, 2 usage or config error, 3 I/O or
file-format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import milab
from .augment import Method, augment, parse_params, spawn_rng
from .config import ConfigError, RunConfig, build_run_config, dump_run_config, parse_config_text
from .dataio import (CACHE_MAGIC, CacheFormatError, CorpusError, atomic_write_text, by_split,
                     format_split_stats, generate_synthetic_corpus, load_corpus,
                     read_embedding_cache, save_corpus)
from .encoder import EncoderModel, Featurizer
from .evaluation import EvalSet, mrr_from_scores, norm_report, write_reports
from .trainer import CorpusFeatures, SplitFeatures, metrics_jsonl, train

log = logging.getLogger("repaug")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    if args.pairs < 1:
        raise UsageError("--pairs must be >= 1")
    if not 0.0 <= args.noise <= 1.0:
        raise UsageError("--noise must lie in [0, 1]")
    records = generate_synthetic_corpus(args.pairs, args.noise, seed=args.seed)
    save_corpus(args.out, records)
    print(format_split_stats(records))
    return EXIT_OK


# ---------------------------------------------------------------- train

def resolve_train_config(args) -> RunConfig:
    values, bad = {}, []
    if args.config:
        values = parse_config_text(Path(args.config).read_text(), bad)
    overrides = {
        ("run", "seed"): args.seed,
        ("run", "corpus"): args.corpus,
        ("run", "out"): args.out,
        ("train", "epochs"): args.epochs,
        ("train", "aug_copies"): args.aug_copies,
        ("loss", "kind"): args.loss,
        ("encoder", "normalize_output"): True if args.normalize_output else None,
        ("train", "aug_enabled"): False if args.no_aug else None,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    run = build_run_config(values, bad)
    missing = [k for k in ("corpus", "out") if not getattr(run, k)]
    if missing:
        raise ConfigError(f"invalid config keys: {', '.join('run.' + k for k in missing)} (required)")
    return run


def cmd_train(args) -> int:
    run = resolve_train_config(args)
    records = load_corpus(run.corpus)
    data = CorpusFeatures.from_records(records, Featurizer(run.encoder.hash_dim))
    if data.dim != run.encoder.hash_dim:
        # vector corpora fix the input width
        run.encoder.hash_dim = data.dim
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.ini", dump_run_config(run))
    model = EncoderModel(run.encoder.sizes, run.encoder.normalize_output, run.encoder.shared, seed=run.seed)
    try:
        result = train(model, data, run.train, run.loss, out_dir=out,
                       resume=out if args.resume and (out / "checkpoint.npz").exists() else None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    summary = {
        "bestEpoch": result.best_epoch,
        "bestValidMrr": result.metrics[result.best_epoch - 1]["mrr"],
        "bestTestMrr": result.best_test_mrr,
        "finalTestMrr": result.final_test_mrr,
        "epochs": len(result.metrics),
    }
    atomic_write_text(out / "summary.json", _dump_json(summary))
    print(_dump_json(summary), end="")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _load_checkpoint(path: Path) -> EncoderModel:
    if path.is_dir():
        path = path / "model_best.ramd"
    try:
        return EncoderModel.from_bytes(path.read_bytes())
    except ValueError as exc:
        raise CacheFormatError(f"{path}: {exc}") from None


def cmd_eval(args) -> int:
    model = _load_checkpoint(Path(args.checkpoint))
    records = load_corpus(args.corpus)
    if args.split != "all":
        records = by_split(records, args.split)
    if len(records) < 2:
        raise ConfigError(f"split {args.split!r} has {len(records)} records; need at least 2")
    feats = CorpusFeatures.from_records([_as_split(r) for r in records], Featurizer(model.sizes[0])).test
    es = EvalSet.paired(feats.query, feats.item)
    code = model.embed(es.codebase, "item")
    scores = model.embed(es.queries, "query") @ code.T
    report = norm_report(code)
    summary = {
        "mrr": mrr_from_scores(scores, es.truth),
        "mrrAtK": mrr_from_scores(scores, es.truth, args.k) if args.k is not None else None,
        "k": args.k,
        "queries": len(es.truth),
        "split": args.split,
        **report.summary(),
    }
    if args.report:
        rp = Path(args.report)
        write_reports(rp, rp.with_suffix(".csv"), summary, report)
    print(_dump_json(summary), end="")
    return EXIT_OK


def _as_split(record):
    # re-tag every selected record so CorpusFeatures puts it in one split
    from dataclasses import replace
    return replace(record, split="test")


# ---------------------------------------------------------------- verify-bounds

def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _bound_job(job):
    kind, dim, rho, batch, copies, lam, seed, cfg, offset, neg = job
    source = milab.GaussianPairSource(dim, rho)
    if kind == 1:
        return milab.verify_theorem1(source, batch, cfg, seed, loss_offset=offset)
    return milab.verify_theorem2(source, batch, copies, lam, cfg, seed, estimate_negative_mi=neg,
                                 loss_offset=offset)


def cmd_verify_bounds(args) -> int:
    cfg = milab.CriticConfig(epochs=args.epochs, steps_per_epoch=args.steps, eval_batches=args.eval_batches)
    seeds = range(args.seeds)
    rhos, batches = _floats(args.rho), _ints(args.batch)
    copies, lams = _ints(args.copies), _floats(args.lam)
    for rho in rhos:
        milab.GaussianPairSource(args.dim, rho)  # validates before any training
    for lam in lams:
        if not 0.0 < lam <= 1.0:
            raise ConfigError(f"--lambda must lie in (0, 1], got {lam}")
    if args.seeds < 1 or min(batches) < 2 or min(copies) < 1:
        raise ConfigError("need --seeds >= 1, --batch >= 2 and --copies >= 1")
    jobs = []
    for rho in rhos:
        for b in batches:
            jobs += [(1, args.dim, rho, b, 0, 1.0, s, cfg, args.corrupt_loss, False) for s in seeds]
            for n in copies:
                for lam in lams:
                    jobs += [(2, args.dim, rho, b, n, lam, s, cfg, args.corrupt_loss, args.estimate_negative_mi)
                             for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            reports = list(pool.map(_bound_job, jobs))
    else:
        reports = [_bound_job(j) for j in jobs]

    t1 = {}
    for r in reports:
        if r.theorem == 1:
            t1.setdefault((r.rho, r.batch_size), []).append(r.bound)
    groups = {}
    for r in reports:
        if r.theorem == 2:
            groups.setdefault((r.rho, r.batch_size, r.copies, r.alpha), []).append(r.bound)
    summary = []
    for (rho, b, n, lam), bounds in groups.items():
        m1, m2 = statistics.median(t1[(rho, b)]), statistics.median(bounds)
        summary.append({"rho": rho, "batch": b, "copies": n, "lambda": lam, "medianTheorem1": m1,
                        "medianTheorem2": m2, "theorem2Tighter": m2 >= m1})
    violations = [r for r in reports if r.violated(args.tolerance)]
    out = {"dim": args.dim, "tolerance": args.tolerance, "reports": [r.to_dict() for r in reports],
           "summary": summary, "violations": len(violations)}
    if args.out:
        atomic_write_text(args.out, _dump_json(out))
    for r in reports:
        flag = "VIOLATED" if r.violated(args.tolerance) else "ok"
        print(f"T{r.theorem} rho={r.rho:g} B={r.batch_size} N={r.copies} lambda={r.alpha:g} seed={r.seed} "
              f"loss={r.loss:.4f} bound={r.bound:.4f} trueMI={r.true_mi:.4f} {flag}")
    for s in summary:
        print(f"median T1={s['medianTheorem1']:.4f} T2={s['medianTheorem2']:.4f} "
              f"(rho={s['rho']:g} B={s['batch']} N={s['copies']} lambda={s['lambda']:g})")
    return EXIT_VIOLATION if violations else EXIT_OK


# ---------------------------------------------------------------- inspect-aug

def read_representations(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:4] == CACHE_MAGIC:
        return read_embedding_cache(path)
    try:
        obj = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CacheFormatError(f"{path}: neither an embedding cache nor JSON ({exc})") from None
    if isinstance(obj, dict):
        obj = obj.get("vectors")
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 2:
        raise CacheFormatError(f"{path}: expected a list of equal-length vectors")
    return arr


def cmd_inspect_aug(args) -> int:
    try:
        spec = parse_params(args.method, args.params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    before = read_representations(Path(args.inp))
    after = augment(before, spec, spawn_rng(spec.seed, 0))
    nb, na = np.linalg.norm(before, axis=1), np.linalg.norm(after, axis=1)
    rows = [{"row": i, "before": before[i].tolist(), "after": after[i].tolist(), "normBefore": float(nb[i]),
             "normAfter": float(na[i]), "normDelta": float(na[i] - nb[i])} for i in range(len(before))]
    out = {"method": spec.method.value, "spec": spec.to_dict(), "rows": rows}
    if args.out:
        atomic_write_text(args.out, _dump_json(out))
    print("row normBefore normAfter normDelta")
    for r in rows:
        print(f"{r['row']} {r['normBefore']:.6g} {r['normAfter']:.6g} {r['normDelta']:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repaug", description="Representation-level augmentation for code search.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic query/code corpus")
    s.add_argument("--pairs", type=int, default=2000)
    s.add_argument("--noise", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train an encoder, writing a run directory")
    t.add_argument("--config", help="INI file; flags given here override it")
    t.add_argument("--corpus")
    t.add_argument("--out", help="run directory")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--no-aug", action="store_true", help="control arm: plain InfoNCE / loss without copies")
    t.add_argument("--aug-copies", type=int)
    t.add_argument("--loss", choices=("infonce", "triplet", "logistic"))
    t.add_argument("--normalize-output", action="store_true")
    t.add_argument("--resume", action="store_true", help="continue from the run directory's checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="MRR and norm diagnostics for a trained model")
    e.add_argument("--checkpoint", required=True, help="model file or run directory")
    e.add_argument("--corpus", required=True)
    e.add_argument("--k", type=int)
    e.add_argument("--split", default="test", choices=("train", "valid", "test", "all"))
    e.add_argument("--report", help="JSON report path; plot data goes beside it as .csv")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify-bounds", help="check the InfoNCE MI lower bounds on Gaussian data")
    v.add_argument("--dim", type=int, default=8)
    v.add_argument("--rho", default="0.9", help="comma list")
    v.add_argument("--batch", default="64", help="comma list")
    v.add_argument("--copies", default="5", help="comma list")
    v.add_argument("--lambda", dest="lam", default="0.95", help="comma list")
    v.add_argument("--seeds", type=int, default=3)
    v.add_argument("--epochs", type=int, default=20)
    v.add_argument("--steps", type=int, default=50, help="optimizer steps per epoch")
    v.add_argument("--eval-batches", type=int, default=100, help="held-out batches for the loss estimate")
    v.add_argument("--tolerance", type=float, default=milab.DEFAULT_TOLERANCE)
    v.add_argument("--estimate-negative-mi", action="store_true")
    v.add_argument("--corrupt-loss", type=float, default=0.0,
                   help="subtract this from every measured loss (failure-path testing)")
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify_bounds)

    a = sub.add_parser("inspect-aug", help="apply one augmentation to stored vectors")
    a.add_argument("--method", required=True, choices=[m.value for m in Method])
    a.add_argument("--params", default="", help='e.g. "lambda=0.5,seed=3"')
    a.add_argument("--in", dest="inp", required=True, help="embedding cache or JSON list of vectors")
    a.add_argument("--out")
    a.set_defaults(func=cmd_inspect_aug)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, CorpusError, CacheFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``visdebias <command> [options]``.

Commands
--------
stats          dataset statistics after filtering
synth          write a synthetic planted-bias corpus
train          train one model, write a checkpoint and the loss history
evaluate       rank all items for every test user (``--ci`` for debiased scores)
sweep-lambda2  train once, evaluate CausalRec across the lambda2 grid
compare-ci     biased vs debiased MRR for VBPR, AMR and CausalRec variants

Settings come from an optional ``key=value`` file (``--config``) and are
overridden by flags. Reports are JSON lines with every setting echoed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .causal import reference_values
from .core import LAMBDA2_GRID, ModelKind, TrainConfig
from .data import (SplitDataset, SyntheticSpec, dataset_stats, kcore_filter, load_categories,
                   load_ground_truth, load_interactions, load_visual_features, split_by_ground_truth,
                   split_leave_one_out, write_synthetic)
from .evaluation import EvalReport, evaluate, make_scorer
from .exceptions import ConfigError, DataError, VisDebiasError
from .training import load_checkpoint, save_checkpoint, train

logger = logging.getLogger("visdebias")

# CausalRec variants: (label, fusion, multitask)
CAUSALREC_VARIANTS = (("A", "sum", False), ("M", "product", False),
                      ("AML", "sum", True), ("MML", "product", True))
COMPARE_MODELS = ("VBPR", "AMR", "CausalRec")
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
_SYNTH_FIELDS = {f.name for f in dataclasses.fields(SyntheticSpec)} - {"seed"}


@dataclass
class ExperimentConfig:
    # paths (no defaults beyond "unset")
    interactions: Optional[str] = None
    features: Optional[str] = None
    ground_truth: Optional[str] = None
    categories: Optional[str] = None
    out: Optional[str] = None
    checkpoint: Optional[str] = None
    # data handling
    feature_dim: Optional[int] = None
    min_count: int = 5
    # evaluation
    model: str = "CausalRec"
    k: int = 50
    ci: bool = False
    include_train_positives: bool = False
    lambda2_grid: List[float] = field(default_factory=lambda: list(LAMBDA2_GRID))
    seeds: List[int] = field(default_factory=lambda: [0])
    models: List[str] = field(default_factory=lambda: list(COMPARE_MODELS))
    # training and synthetic-corpus settings
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    @property
    def seed(self) -> int:
        return self.seeds[0]

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
             if f.name not in ("train", "synth")}
        d["train"] = self.train.to_dict()
        d["synth"] = {k: v for k, v in dataclasses.asdict(self.synth).items() if k != "seed"}
        return d


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _parse_list(conv):
    return lambda text: [conv(x) for x in text.replace(",", " ").split()]


_EXPERIMENT_PARSERS = {
    "interactions": str, "features": str, "ground_truth": str, "categories": str,
    "out": str, "checkpoint": str, "feature_dim": _parse_optional_int, "min_count": int,
    "model": str, "k": int, "ci": _parse_bool, "include_train_positives": _parse_bool,
    "lambda2_grid": _parse_list(float), "seeds": _parse_list(int), "seed": lambda t: [int(t)],
    "models": _parse_list(str),
}


def _field_parser(cls, name):
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    ftype = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    if "bool" in ftype:
        return _parse_bool
    if "Optional[int]" in ftype:
        return _parse_optional_int
    if "int" in ftype:
        return int
    if "float" in ftype:
        return float
    return str


def apply_setting(cfg: ExperimentConfig, key: str, value: str, origin: str = "") -> None:
    key = key.strip().replace("-", "_")
    try:
        if key in _EXPERIMENT_PARSERS:
            parsed = _EXPERIMENT_PARSERS[key](value)
            setattr(cfg, "seeds" if key == "seed" else key, parsed)
            if key in ("seed", "seeds"):
                cfg.train.seed = cfg.seeds[0]
        elif key in _TRAIN_FIELDS:
            setattr(cfg.train, key, _field_parser(TrainConfig, key)(value))
        elif key in _SYNTH_FIELDS:
            setattr(cfg.synth, key, _field_parser(SyntheticSpec, key)(value))
        else:
            raise ConfigError(f"{origin}unknown configuration key {key!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{origin}bad value for {key!r}: {exc}") from None


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Parse a ``key=value`` file; ``#`` starts a comment, unknown keys fail."""
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        apply_setting(cfg, key, value.strip(), origin=f"{path}:{lineno}: ")
    return cfg


# --------------------------------------------------------------------------
# pipeline pieces

def _require(cfg: ExperimentConfig, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join(missing))


def load_dataset(cfg: ExperimentConfig):
    _require(cfg, "interactions", "features")
    raw = load_interactions(cfg.interactions)
    store = load_visual_features(cfg.features, dim=cfg.feature_dim)
    cats = load_categories(cfg.categories) if cfg.categories else None
    return kcore_filter(raw, store, min_count=cfg.min_count, categories=cats)


def make_split(cfg: ExperimentConfig, dataset, seed: int) -> SplitDataset:
    if cfg.ground_truth:
        return split_by_ground_truth(dataset, load_ground_truth(cfg.ground_truth))
    return split_leave_one_out(dataset, seed=seed)


def _train_config(cfg: ExperimentConfig, seed: int, **changes) -> TrainConfig:
    return cfg.train.replace(seed=seed, **changes).validate()


def _report(cfg: ExperimentConfig, split, kind, params, *, ci: bool, lambda2: float,
            seed: int, fusion: str, refs=None) -> EvalReport:
    kind = ModelKind.parse(kind)
    train_set = split.train
    if ci and refs is None:
        refs = reference_values(params, train_set, mode=cfg.train.reference_mode)
    scorer = make_scorer(kind, params, train_set.features, train_set.categories, ci=ci,
                         refs=refs, lambda2=lambda2, fusion=fusion)
    return evaluate(scorer, split, k=cfg.k,
                    exclude_train_positives=not cfg.include_train_positives,
                    model=kind.value, lambda2=lambda2 if kind is ModelKind.CAUSALREC else None,
                    ci=ci, seed=seed)


def _emit(record: dict, out: Optional[str], stream=None) -> None:
    line = json.dumps(record, sort_keys=True)
    print(line, file=stream or sys.stdout)
    if out:
        with open(out, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def _report_record(report: EvalReport, cfg: ExperimentConfig, **extra) -> dict:
    # timing is logged, not reported, so repeated runs give identical reports
    logger.info("evaluation took %.2fs", report.elapsed_seconds)
    rec = report.to_dict()
    rec.pop("elapsed_seconds")
    rec.update(extra)
    rec["config"] = cfg.to_dict()
    return rec


# --------------------------------------------------------------------------
# commands

def cmd_stats(cfg: ExperimentConfig, name: Optional[str] = None) -> str:
    ds = load_dataset(cfg)
    users, items, inter, sparsity = dataset_stats(ds)
    label = name or os.path.splitext(os.path.basename(cfg.interactions))[0]
    headers = ("", "#Users", "#Items", "#Interactions", "Sparsity")
    row = (label, f"{users:,}", f"{items:,}", f"{inter:,}", f"{100 * sparsity:.2f}%")
    widths = [max(len(h), len(r)) for h, r in zip(headers, row)]
    fmt = "  ".join("{:<%d}" % widths[0] if k == 0 else "{:>%d}" % w
                    for k, w in enumerate(widths))
    return fmt.format(*headers) + "\n" + fmt.format(*row)


def cmd_synth(cfg: ExperimentConfig) -> dict:
    _require(cfg, "out")
    spec = dataclasses.replace(cfg.synth, seed=cfg.seed).validate()
    return write_synthetic(cfg.out, spec)


def cmd_train(cfg: ExperimentConfig) -> dict:
    _require(cfg, "out")
    kind = ModelKind.parse(cfg.model)
    split = make_split(cfg, load_dataset(cfg), cfg.seed)
    config = _train_config(cfg, cfg.seed)
    params, history = train(kind, split, config=config)
    os.makedirs(cfg.out, exist_ok=True)
    ckpt = os.path.join(cfg.out, f"{kind.value}.ckpt")
    hist = os.path.join(cfg.out, f"{kind.value}_history.csv")
    if params.kind.has_visual and config.visual_dim is None:
        config = config.replace(visual_dim=int(split.train.features.shape[1]))
    save_checkpoint(ckpt, params, config)
    with open(hist, "w", encoding="utf-8") as fh:
        fh.write(history.to_csv())
    return {"checkpoint": ckpt, "history": hist, "model": kind.value,
            "epochs": len(history), "final_loss": history.losses[-1] if history.losses else None}


def cmd_evaluate(cfg: ExperimentConfig, lambda2: Optional[float] = None) -> dict:
    _require(cfg, "checkpoint")
    params, tcfg = load_checkpoint(cfg.checkpoint)
    split = make_split(cfg, load_dataset(cfg), cfg.seed)
    if split.n_users != params.n_users or split.n_items != params.n_items:
        raise DataError(f"checkpoint is for {params.n_users} users x {params.n_items} items, "
                        f"data has {split.n_users} x {split.n_items}")
    lam = cfg.train.lambda2 if lambda2 is None else lambda2
    report = _report(cfg, split, params.kind, params, ci=cfg.ci, lambda2=lam,
                     seed=tcfg.seed, fusion=tcfg.fusion)
    return _report_record(report, cfg)


def cmd_sweep_lambda2(cfg: ExperimentConfig) -> List[dict]:
    """One CausalRec fit per seed, evaluated at every grid value of lambda2."""
    dataset = load_dataset(cfg)
    rows = []
    for seed in cfg.seeds:
        split = make_split(cfg, dataset, seed)
        config = _train_config(cfg, seed)
        params, _ = train(ModelKind.CAUSALREC, split, config=config)
        refs = reference_values(params, split.train, mode=config.reference_mode)
        for lam in cfg.lambda2_grid:
            rep = _report(cfg, split, ModelKind.CAUSALREC, params, ci=True, lambda2=lam,
                          seed=seed, fusion=config.fusion, refs=refs)
            rows.append({"seed": seed, "lambda2": lam, "mrr": rep.mrr,
                         "ndcg_at_k": rep.ndcg_at_k, "hr_at_k": rep.hr_at_k})
    return rows


def sweep_csv(rows: Sequence[dict]) -> str:
    lines = ["seed,lambda2,mrr,ndcg_at_k,hr_at_k"]
    for r in rows:
        lines.append(f"{r['seed']},{r['lambda2']!r},{r['mrr']!r},{r['ndcg_at_k']!r},{r['hr_at_k']!r}")
    return "\n".join(lines) + "\n"


def cmd_compare_ci(cfg: ExperimentConfig) -> List[dict]:
    """MRR with and without debiased scoring per model (and CausalRec variant)."""
    dataset = load_dataset(cfg)
    rows = []
    for seed in cfg.seeds:
        split = make_split(cfg, dataset, seed)
        for name in cfg.models:
            kind = ModelKind.parse(name)
            if not kind.has_debiased_scorer:
                raise ConfigError(f"{kind.value} has no debiased variant to compare")
            variants = (CAUSALREC_VARIANTS if kind is ModelKind.CAUSALREC
                        else ((kind.value, cfg.train.fusion, cfg.train.multitask),))
            for label, fusion, multitask in variants:
                config = _train_config(cfg, seed, fusion=fusion, multitask=multitask)
                params, _ = train(kind, split, config=config)
                lam = config.lambda2
                plain = _report(cfg, split, kind, params, ci=False, lambda2=lam, seed=seed,
                                fusion=fusion)
                debiased = _report(cfg, split, kind, params, ci=True, lambda2=lam, seed=seed,
                                   fusion=fusion)
                label = label if kind is not ModelKind.CAUSALREC else f"CausalRec-{label}"
                rows.append({"seed": seed, "model": label, "mrr": plain.mrr,
                             "mrr_ci": debiased.mrr, "ndcg_at_k": plain.ndcg_at_k,
                             "ndcg_at_k_ci": debiased.ndcg_at_k, "hr_at_k": plain.hr_at_k,
                             "hr_at_k_ci": debiased.hr_at_k})
    return rows


def compare_table(rows: Sequence[dict]) -> str:
    head = f"{'seed':>4}  {'model':<14}  {'MRR':>8}  {'MRR w/ CI':>9}"
    body = [f"{r['seed']:>4}  {r['model']:<14}  {r['mrr']:>8.4f}  {r['mrr_ci']:>9.4f}"
            for r in rows]
    return "\n".join([head] + body)


# --------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file")
    common.add_argument("--model", help="MF, VBPR, DeepStyle, AMR, DVBPR or CausalRec")
    common.add_argument("--ci", action="store_true", default=None,
                        help="score with the debiased (causal inference) scorer")
    common.add_argument("--lambda2", type=float, help="CausalRec debiasing weight")
    common.add_argument("--k", type=int, help="cutoff for NDCG and HR (default 50)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--features", help="visual feature file (VFT1 binary or TSV)")
    common.add_argument("--interactions", help="interaction TSV file")
    common.add_argument("--feature-dim", type=int, help="feature dimension for TSV features")
    common.add_argument("--include-train-positives", action="store_true", default=None,
                        help="rank training positives too instead of excluding them")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="visdebias", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("stats", parents=[common], help="dataset statistics")
    sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    sub.add_parser("train", parents=[common], help="train one model")
    ev = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("checkpoint", nargs="?", help="checkpoint written by train")
    sub.add_parser("sweep-lambda2", parents=[common], help="CausalRec lambda2 sweep (CSV)")
    sub.add_parser("compare-ci", parents=[common], help="with/without CI comparison")
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        apply_setting(cfg, *item.split("=", 1), origin="--set: ")
    flags = {"model": args.model, "k": args.k, "out": args.out, "features": args.features,
             "interactions": args.interactions, "feature_dim": args.feature_dim,
             "checkpoint": getattr(args, "checkpoint", None)}
    for key, value in flags.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.seed is not None:
        cfg.seeds = [args.seed]
        cfg.train.seed = args.seed
    if args.ci is not None:
        cfg.ci = True
    if args.include_train_positives is not None:
        cfg.include_train_positives = True
    if args.lambda2 is not None:
        cfg.train.lambda2 = args.lambda2
    cfg.train.validate()
    if cfg.k < 1:
        raise ConfigError("k must be >= 1")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
        start = time.perf_counter()
        if args.command == "stats":
            print(cmd_stats(cfg))
        elif args.command == "synth":
            paths = cmd_synth(cfg)
            _emit({"written": paths, "config": cfg.to_dict()}, None)
        elif args.command == "train":
            _emit({**cmd_train(cfg), "config": cfg.to_dict()}, None)
        elif args.command == "evaluate":
            _emit(cmd_evaluate(cfg), cfg.out)
        elif args.command == "sweep-lambda2":
            text = sweep_csv(cmd_sweep_lambda2(cfg))
            if cfg.out:
                with open(cfg.out, "w", encoding="utf-8") as fh:
                    fh.write(text)
            sys.stdout.write(text)
        elif args.command == "compare-ci":
            rows = cmd_compare_ci(cfg)
            print(compare_table(rows))
            if cfg.out:
                with open(cfg.out, "w", encoding="utf-8") as fh:
                    for r in rows:
                        fh.write(json.dumps({**r, "config": cfg.to_dict()}, sort_keys=True) + "\n")
        logger.info("%s finished in %.1fs", args.command, time.perf_counter() - start)
    except VisDebiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

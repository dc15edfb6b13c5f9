"""Experiment orchestration behind the CLI subcommands.

Every output file starts with a header that embeds the full experiment
configuration and the tool version, so any artifact can be regenerated from
its own header.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .data import Dataset, load_dataset, save_dataset
from .errors import ConfigError, DataError, LeakageError, MeshTuneError
from .evaluators import Evaluator, GbdtEvaluator, LossCurveTable, ReplayEvaluator
from .meta.dataset import LANDMARK_RECIPES, MetaDataset, build_metadataset
from .meta.diagnostics import crossover_stats, halving_trace
from .meta.features import compute_dataset_metafeatures
from .meta.training import GRIDS, MetaModelBundle, offline_mse_report, train_meta_models
from .schedule import ResourceSchedule, build_schedule, equivalent_rs_budget
from .space import HyperparamSpace, load_space, sample_configurations, xgboost_space
from .synthetic import SurrogateTask, make_task_family
from .tuners import (OracleBundle, PassthroughBundle, TuneResult, run_mesh, run_random_search,
                     run_successive_halving)

log = logging.getLogger(__name__)

TUNERS = ("rs", "sh", "mesh", "mesh-oracle", "mesh-passthrough")


@dataclass
class ExperimentConfig:
    n: int = 64
    eta: float = 2.0
    r_min: int = 16
    r_max: int = 1024
    space: Optional[str] = None
    datasets: list[str] = field(default_factory=list)
    tuners: list[str] = field(default_factory=lambda: ["rs", "sh", "mesh"])
    repetitions: int = 10
    seed: int = 0
    workers: int = 1
    regressor: str = "gbdt"
    patience: int = 50
    folds: int = 3
    landmarks: str = "previous"
    bundle: Optional[str] = None
    metadataset: Optional[str] = None
    exclude: list[str] = field(default_factory=list)
    source: str = "gbdt"
    n_configs: int = 64
    trial_budget: Optional[int] = None
    time_budget: Optional[float] = None
    synthetic_count: int = 0
    synthetic_seed: int = 0
    severity: float = 2.0
    out: str = "out"

    def validate(self, need_files: bool = True) -> "ExperimentConfig":
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        bad = [t for t in self.tuners if t not in TUNERS]
        if bad:
            raise ConfigError(f"unknown tuner(s) {bad}; choose from {TUNERS}")
        if self.regressor not in GRIDS:
            raise ConfigError(f"unknown regressor {self.regressor!r}; choose from {sorted(GRIDS)}")
        if self.landmarks not in LANDMARK_RECIPES:
            raise ConfigError(f"landmarks must be one of {LANDMARK_RECIPES}")
        if self.source not in ("gbdt", "surrogate"):
            raise ConfigError(f"source must be 'gbdt' or 'surrogate', got {self.source!r}")
        if need_files:
            for p in [self.space, self.bundle, self.metadataset, *self.datasets]:
                if p is not None and not Path(p).exists():
                    raise ConfigError(f"referenced file does not exist: {p}")
        self.schedule()
        return self

    def schedule(self) -> ResourceSchedule:
        return build_schedule(self.r_min, self.r_max, self.eta)

    def load_space(self) -> HyperparamSpace:
        return load_space(self.space) if self.space else xgboost_space()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_sources(cls, path: Optional[str] = None, overrides: Optional[dict] = None) -> "ExperimentConfig":
        """Defaults, then the JSON file, then non-``None`` overrides."""
        doc: dict[str, Any] = {}
        if path:
            try:
                doc = json.loads(Path(path).read_text())
            except FileNotFoundError as exc:
                raise ConfigError(f"config file not found: {path}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config field(s) {sorted(unknown)}")
        doc.update({k: v for k, v in (overrides or {}).items() if v is not None and k in names})
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def provenance_header(cfg: ExperimentConfig, **extra) -> dict:
    return {"tool": "meshtune", "version": __version__, "config": cfg.to_dict(), **extra}


def _write_csv(path: Path, header: dict, rows: list[dict], columns: list[str]) -> None:
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    path.write_text(buf.getvalue())


def _write_jsonl(path: Path, header: dict, records: list[dict]) -> None:
    with path.open("w") as fh:
        fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _synthetic_tasks(cfg: ExperimentConfig, space: HyperparamSpace) -> list[SurrogateTask]:
    return make_task_family(cfg.synthetic_count, cfg.synthetic_seed, cfg.severity, space=space)


# ---------------------------------------------------------------- generate-curves

def cmd_generate_curves(cfg: ExperimentConfig) -> list[Path]:
    """Record validation loss at every schedule level for sampled configurations, one table per dataset."""
    cfg.validate()
    sched, space = cfg.schedule(), cfg.load_space()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n_trials = cfg.n_configs if cfg.trial_budget is None else min(cfg.n_configs, cfg.trial_budget)
    if n_trials <= 0:
        log.warning("trial budget is 0: writing empty tables")

    jobs: list[tuple[Dataset, Optional[SurrogateTask]]] = [(load_dataset(p), None) for p in cfg.datasets]
    if cfg.synthetic_count:
        (out / "datasets").mkdir(exist_ok=True)
        for task in _synthetic_tasks(cfg, space):
            save_dataset(task.dataset, out / "datasets" / f"{task.id}.csv")
            jobs.append((task.dataset, task))
    if not jobs:
        raise ConfigError("no datasets given (use --datasets or --synthetic-count)")

    written = []
    for k, (ds, task) in enumerate(jobs):
        configs = sample_configurations(space, n_trials, cfg.seed + 1000 * k) if n_trials > 0 else []
        mf = task.metafeatures if task else compute_dataset_metafeatures(ds)
        header = provenance_header(cfg, metafeatures=mf.tolist(), schedule=sched.to_dict(),
                                   space=space.to_dict(), source=cfg.source)
        table = LossCurveTable(ds.id, sched.resources, header=header)
        started = time.monotonic()
        if cfg.source == "surrogate":
            task = task or SurrogateTask(ds, cfg.severity, cfg.synthetic_seed, space)
            for c in configs:
                table.add(c, dict(zip(sched.resources, task.curve(c, sched.s_max))))
        else:
            ev = GbdtEvaluator(ds)
            for c in configs:
                if cfg.time_budget is not None and time.monotonic() - started > cfg.time_budget:
                    log.warning("dataset %s: wall-clock budget reached after %d trials", ds.id, len(table))
                    break
                try:
                    table.add(c, {r: ev.evaluate(c, r) for r in sched.resources})
                except (MeshTuneError, ArithmeticError, ValueError) as exc:
                    log.warning("dataset %s: trial %s failed and was skipped: %s", ds.id, c.id, exc)
        path = out / f"{ds.id}.curves.jsonl"
        table.to_jsonl(path)
        written.append(path)
        log.info("wrote %s (%d configs)", path, len(table))
    return written


# ---------------------------------------------------------------- build-metadataset / train-meta

def cmd_build_metadataset(cfg: ExperimentConfig) -> Path:
    cfg.validate()
    tables = [LossCurveTable.from_jsonl(p) for p in cfg.datasets]
    if not tables:
        raise ConfigError("build-metadataset needs loss-curve tables (--datasets)")
    md = build_metadataset(tables, cfg.load_space(), cfg.schedule(), cfg.landmarks)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    md.to_jsonl(out, extra_header=provenance_header(cfg))
    log.info("wrote %s (%d examples per round)", out, len(md.rounds[0]))
    return out


def cmd_train_meta(cfg: ExperimentConfig) -> Path:
    """Train a bundle; with exclusions, also write the held-out MSE per round."""
    cfg.validate()
    if not cfg.metadataset:
        raise ConfigError("train-meta needs --metadataset")
    md = MetaDataset.from_jsonl(cfg.metadataset)
    bundle = train_meta_models(md, cfg.regressor, cfg.exclude, cfg.folds, cfg.seed)
    bundle.metadata["provenance_header"] = provenance_header(cfg)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bundle.save(out)
    held = md.subset(cfg.exclude)
    if cfg.exclude and held.rounds[0]:
        rows = offline_mse_report(bundle, held)
        cv = {m.round: m.cv_mse for m in bundle.models}
        for r in rows:
            r["cv_mse"] = cv.get(r["round"])
        _write_csv(out.with_suffix(".offline_mse.csv"), provenance_header(cfg), rows, ["round", "n", "mse", "cv_mse"])
    return out


# ---------------------------------------------------------------- compare

def _load_target(path: str, cfg: ExperimentConfig):
    if path.endswith(".jsonl"):
        table = LossCurveTable.from_jsonl(path)
        return table.dataset_id, (lambda: ReplayEvaluator(table)), table
    ds = load_dataset(path)
    shared = GbdtEvaluator(ds)

    def fresh() -> Evaluator:
        ev = GbdtEvaluator(ds)
        ev._boosters, ev._mf = shared._boosters, shared._mf  # boosters are deterministic per config; reuse training
        return ev

    shared.dataset_metafeatures()
    return ds.id, fresh, None


def _run_tuner(name: str, make_eval, table, cfg: ExperimentConfig, space, sched, seed: int,
               bundle: Optional[MetaModelBundle]) -> TuneResult:
    ev = make_eval()
    if name == "rs":
        k = equivalent_rs_budget(cfg.n, sched)
        res = run_random_search(ev, space, k, sched.resources[-1], seed, patience=cfg.patience, workers=cfg.workers)
    elif name == "sh":
        res = run_successive_halving(ev, space, cfg.n, sched, seed, workers=cfg.workers)
    else:
        if name == "mesh":
            b = bundle
        elif name == "mesh-passthrough":
            b = PassthroughBundle()
        else:
            if table is None:
                raise ConfigError("mesh-oracle needs a loss-curve table as the target dataset")
            b = OracleBundle(table)
        res = run_mesh(ev, space, cfg.n, sched, b, ev.dataset_metafeatures(), seed, workers=cfg.workers, name=name)
    if ev.resource_charged != res.resource_spent:
        raise MeshTuneError(f"{name}: evaluator charged {ev.resource_charged} but tuner accounted "
                            f"{res.resource_spent}")
    return res


def _std(values: list[float]) -> float:
    return float(np.std(values)) if len(values) > 1 else 0.0


def cmd_compare(cfg: ExperimentConfig) -> dict:
    """RS / SH / MeSH at equal budget over ``repetitions`` seeds; per-dataset mean, std and budget per tuner."""
    cfg.validate()
    sched, space = cfg.schedule(), cfg.load_space()
    if not cfg.datasets:
        raise ConfigError("compare needs at least one target dataset (--datasets)")
    if cfg.n < sched.eta ** sched.s_max:
        raise ConfigError(f"n={cfg.n} is below eta^s_max={sched.eta ** sched.s_max:g}; "
                          f"the last halving rounds would be empty")
    bundle = None
    if "mesh" in cfg.tuners:
        if not cfg.bundle:
            raise ConfigError("tuner 'mesh' needs --bundle")
        bundle = MetaModelBundle.load(cfg.bundle)
        bundle.check(sched)
    out = Path(cfg.out)
    targets = [_load_target(p, cfg) for p in cfg.datasets]
    if bundle is not None:
        for ds_id, _, _ in targets:
            if ds_id in bundle.provenance:
                raise LeakageError(f"bundle {cfg.bundle} was trained on target dataset {ds_id!r}; "
                                   f"retrain with --exclude {ds_id}")
    (out / "runlogs").mkdir(parents=True, exist_ok=True)
    header = provenance_header(cfg, schedule=sched.to_dict(), rs_k=equivalent_rs_budget(cfg.n, sched))
    report: dict[str, Any] = {"header": header, "datasets": {}}
    rows = []
    for ds_id, make_eval, table in targets:
        per_tuner = {}
        for name in cfg.tuners:
            raw, spent = [], []
            for j in range(cfg.repetitions):
                res = _run_tuner(name, make_eval, table, cfg, space, sched, cfg.seed + j, bundle)
                raw.append(res.best_loss)
                spent.append(res.resource_spent)
                _write_jsonl(out / "runlogs" / f"{ds_id}.{name}.rep{j}.jsonl",
                             {**header, "dataset_id": ds_id, "tuner": name, "repetition": j, "seed": cfg.seed + j},
                             res.run_log)
            per_tuner[name] = {"mean": float(np.mean(raw)), "std": _std(raw), "raw": raw,
                               "budget": spent, "budget_mean": float(np.mean(spent))}
            rows.append({"dataset": ds_id, "tuner": name, "mean": per_tuner[name]["mean"],
                         "std": per_tuner[name]["std"], "budget": per_tuner[name]["budget_mean"],
                         "repetitions": cfg.repetitions})
        halving = [per_tuner[t]["budget"] for t in per_tuner if t != "rs"]
        parity = all(b == halving[0] for b in halving) if halving else True
        if "rs" in per_tuner and halving:
            parity = parity and all(r <= h for r, h in zip(per_tuner["rs"]["budget"], halving[0]))
        if not parity:
            log.warning("dataset %s: budget parity violated", ds_id)
        report["datasets"][ds_id] = {"tuners": per_tuner, "budget_parity": parity}
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    _write_csv(out / "summary.csv", header, rows, ["dataset", "tuner", "mean", "std", "budget", "repetitions"])
    return report


# ---------------------------------------------------------------- diagnostics

def cmd_diagnostics(cfg: ExperimentConfig) -> list[Path]:
    """Per-config loss series with SH survival flags, plus per-round rank correlation."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for p in cfg.datasets:
        table = LossCurveTable.from_jsonl(p)
        header = provenance_header(cfg, dataset_id=table.dataset_id, levels=table.levels)
        trace = halving_trace(table, cfg.eta)
        tpath = out / f"{table.dataset_id}.trace.jsonl"
        _write_jsonl(tpath, header, trace)
        cpath = out / f"{table.dataset_id}.crossover.csv"
        _write_csv(cpath, header, crossover_stats(table), ["round", "resource", "spearman"])
        written += [tpath, cpath]
    return written

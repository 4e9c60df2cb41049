"""Seeded experiment orchestration: noise sweeps, stability runs, confusion.

Every run is a cell keyed by (model, noise level, repetition). All of a
cell's random streams come from ``derive_seed`` applied to the master seed
and the cell key, so a cell's result does not depend on which other cells
exist or the order (or process) they run in.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mlkit, neural
from .core import DataError, EvalReport, SpectraDataset, evaluate, prepare, read_dataset_csv, stratified_split
from .spectragen import MAX_NOISE, MAX_SHIFT, NoiseSpec, augment_dataset, noise_rows, preset_profiles, scaled_profiles, synth_dataset

DEFAULT_LEVELS = (0.0, 0.01, 0.02, 0.05, 0.10, 0.20, 0.30, 0.40, 0.50)
STABILITY_BINS = (0.0, 0.3, 0.8, 0.9, 1.0)
FULL_STABILITY_REPS = 400
MASK64 = (1 << 64) - 1

# stream tags used as the second element of a cell's seed path
_SPLIT, _NOISE_TRAIN, _NOISE_TEST, _AUGMENT, _MODEL = range(5)


class HarnessError(RuntimeError):
    pass


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, path) -> int:
    """Fold ``path`` into ``master`` with splitmix64; result is a u64."""
    h = _splitmix64(int(master) & MASK64)
    for i in path:
        h = _splitmix64(h ^ _splitmix64(int(i) & MASK64))
    return h


def model_key(name: str) -> int:
    return zlib.crc32(name.encode())


def level_key(level: float) -> int:
    return int(round(level * 1_000_000))


@dataclass(frozen=True)
class AugmentSpec:
    noise: float = 0.05
    shift: float = 30.0
    mode: str = "replace"

    def __post_init__(self):
        if not 0 <= self.noise <= MAX_NOISE:
            raise ValueError(f"augment noise must be within [0, {MAX_NOISE}]")
        if not 0 <= self.shift <= MAX_SHIFT:
            raise ValueError(f"augment shift must be within [0, {MAX_SHIFT}]")
        if self.mode not in ("append", "replace"):
            raise ValueError("augment mode must be 'append' or 'replace'")


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run. ``dataset`` is {"preset": name, "seed": int, "scale": f}
    or {"file": path}; ``hyperparams`` maps an ML kind to overrides."""

    dataset: dict
    models: tuple
    noise_levels: tuple = DEFAULT_LEVELS
    repetitions: int = 1
    augment: AugmentSpec | None = None
    split: tuple = (0.8, 0.2)
    master_seed: int = 0
    epochs: int = 30
    test_only_noise: bool = False
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.models:
            raise ValueError("plan needs at least one model")
        for m in self.models:
            if m not in mlkit.ML_KINDS and m not in neural.ARCHITECTURES:
                raise ValueError(f"unknown model {m!r}")
        if len(set(self.models)) != len(self.models):
            raise ValueError("duplicate model in plan")
        if not self.noise_levels:
            raise ValueError("plan needs at least one noise level")
        for lv in self.noise_levels:
            if not 0 <= lv <= MAX_NOISE:
                raise ValueError(f"noise level {lv} outside [0, {MAX_NOISE}]")
        if len(self.split) != 2:
            raise ValueError("experiments use a two-way train/test split")
        if "preset" not in self.dataset and "file" not in self.dataset:
            raise ValueError("dataset needs a 'preset' or a 'file'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        aug = d.pop("augment", None)
        return cls(
            dataset=dict(d.pop("dataset")),
            models=tuple(d.pop("models")),
            noise_levels=tuple(float(x) for x in d.pop("noise_levels", DEFAULT_LEVELS)),
            split=tuple(float(x) for x in d.pop("split", (0.8, 0.2))),
            augment=None if aug is None else AugmentSpec(**aug),
            **d,
        )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "models": list(self.models),
            "noise_levels": list(self.noise_levels),
            "repetitions": self.repetitions,
            "augment": None if self.augment is None else vars(self.augment).copy(),
            "split": list(self.split),
            "master_seed": self.master_seed,
            "epochs": self.epochs,
            "test_only_noise": self.test_only_noise,
            "hyperparams": self.hyperparams,
        }

    def replace(self, **kw) -> "ExperimentPlan":
        return dataclasses.replace(self, **kw)


def load_plan(path) -> ExperimentPlan:
    return ExperimentPlan.from_dict(json.loads(Path(path).read_text()))


def load_dataset(plan: ExperimentPlan) -> SpectraDataset:
    spec = plan.dataset
    if "file" in spec:
        d = read_dataset_csv(spec["file"])
        return prepare(d) if spec.get("prepare", True) else d
    profiles = preset_profiles(spec["preset"])
    if spec.get("scale", 1.0) != 1.0:
        profiles = scaled_profiles(profiles, spec["scale"])
    seed = spec.get("seed", derive_seed(plan.master_seed, [0xDA7A]))
    return prepare(synth_dataset(profiles, seed=seed))


# -- single run ----------------------------------------------------------

@dataclass
class RunResult:
    model: str
    level: float
    rep: int
    accuracy: float
    report: EvalReport | None = None
    history: object = None
    error: str = ""


def cell_seed(master: int, rep: int, stream: int, model: str = "", level: float = 0.0) -> int:
    path = [rep, stream]
    if stream in (_NOISE_TRAIN, _NOISE_TEST, _AUGMENT):
        path.append(level_key(level))
    if stream in (_AUGMENT, _MODEL):
        path.append(model_key(model))
    return derive_seed(master, path)


def fit_predict(model: str, Xtr, ytr, Xte, n_classes: int, seed: int, epochs: int = 30, hyperparams=None):
    """Train ``model`` and return (test predictions, history or None)."""
    if model in mlkit.ML_KINDS:
        m = mlkit.default_model(model, seed=seed, **(hyperparams or {}))
        m.fit(Xtr, ytr, n_classes)
        return m.predict(Xte), None
    spec = neural.build_model(model, n_classes, Xtr.shape[1])
    net = neural.Network(spec, seed=seed)
    hist = neural.fit_network(net, Xtr, ytr, neural.TrainConfig.for_model(model, epochs=epochs, seed=seed))
    return net.predict(Xte), hist


def run_cell(d: SpectraDataset, plan: ExperimentPlan, model: str, level: float, rep: int) -> RunResult:
    master = plan.master_seed
    split_seed = cell_seed(master, rep, _SPLIT)
    split = stratified_split(d, plan.split, split_seed)
    Xtr, ytr = d.rows[split.train], d.labels[split.train]
    Xte, yte = d.rows[split.test], d.labels[split.test]
    noise = NoiseSpec(level)
    if level > 0:
        if not plan.test_only_noise:
            Xtr = noise_rows(d.grid, Xtr, noise, np.random.default_rng(cell_seed(master, rep, _NOISE_TRAIN, level=level)))
        Xte = noise_rows(d.grid, Xte, noise, np.random.default_rng(cell_seed(master, rep, _NOISE_TEST, level=level)))
    if plan.augment is not None:
        a = plan.augment
        train = SpectraDataset(d.grid, Xtr, ytr, d.class_names)
        rng = np.random.default_rng(cell_seed(master, rep, _AUGMENT, model, level))
        train = augment_dataset(train, NoiseSpec(a.noise), a.shift, rng, a.mode)
        Xtr, ytr = train.rows, train.labels
    try:
        pred, hist = fit_predict(model, Xtr, ytr, Xte, d.n_classes, cell_seed(master, rep, _MODEL, model),
                                 plan.epochs, plan.hyperparams.get(model))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        return RunResult(model, level, rep, float("nan"), error=f"{type(e).__name__}: {e}")
    rep_ = evaluate(pred, yte, d.n_classes, seed=split_seed, model_name=model, noise_level=level)
    return RunResult(model, level, rep, rep_.accuracy, rep_, hist)


# -- pool ----------------------------------------------------------------

def worker_count() -> int:
    env = os.environ.get("SPECBENCH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"SPECBENCH_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError("SPECBENCH_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


_POOL_STATE: dict = {}


def _pool_init(d, plan):
    _POOL_STATE["d"], _POOL_STATE["plan"] = d, plan
    # one BLAS thread per worker so the pool bound is the real bound
    os.environ.setdefault("OMP_NUM_THREADS", "1")


def _pool_job(key):
    return run_cell(_POOL_STATE["d"], _POOL_STATE["plan"], *key)


def run_cells(d: SpectraDataset, plan: ExperimentPlan, keys, workers: int | None = None) -> dict:
    """Run every (model, level, rep) key; returns {key: RunResult}."""
    keys = list(keys)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(keys) <= 1:
        return {k: run_cell(d, plan, *k) for k in keys}
    with ProcessPoolExecutor(max_workers=min(workers, len(keys)), initializer=_pool_init,
                             initargs=(d, plan)) as ex:
        results = list(ex.map(_pool_job, keys))
    return dict(zip(keys, results))


def _require_classes(d: SpectraDataset):
    present = np.count_nonzero(d.class_counts())
    if present < 2:
        raise DataError(f"dataset has {present} populated class(es); need at least 2")


# -- noise sweep ---------------------------------------------------------

@dataclass
class SweepResult:
    models: tuple
    levels: tuple
    raw: dict  # (model, level) -> list of per-repetition accuracies (NaN = failed)
    errors: dict = field(default_factory=dict)  # (model, level, rep) -> message

    def accuracies(self, model, level) -> np.ndarray:
        return np.asarray(self.raw[(model, level)], dtype=float)

    def n(self, model, level) -> int:
        return int(np.count_nonzero(~np.isnan(self.accuracies(model, level))))

    def mean(self, model, level) -> float:
        a = self.accuracies(model, level)
        a = a[~np.isnan(a)]
        return float(a.mean()) if len(a) else float("nan")

    def std(self, model, level) -> float:
        """Sample standard deviation (ddof=1); 0 for a single run."""
        a = self.accuracies(model, level)
        a = a[~np.isnan(a)]
        if len(a) == 0:
            return float("nan")
        return float(a.std(ddof=1)) if len(a) > 1 else 0.0

    def rows(self):
        for m in self.models:
            for lv in self.levels:
                yield m, lv, self.mean(m, lv), self.std(m, lv), self.n(m, lv)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "level", "mean", "std", "n"])
        for m, lv, mean, std, n in self.rows():
            w.writerow([m, repr(float(lv)), _fmt(mean), _fmt(std), n])
        return buf.getvalue()

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "level", "rep", "accuracy"])
        for m in self.models:
            for lv in self.levels:
                for r, a in enumerate(self.raw[(m, lv)]):
                    w.writerow([m, repr(float(lv)), r, _fmt(a)])
        return buf.getvalue()

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(self.to_csv())
        (out / "sweep_runs.csv").write_text(self.runs_csv())


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def read_sweep_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({
                "model": r["model"],
                "level": float(r["level"]),
                "mean": float(r["mean"]) if r["mean"] else float("nan"),
                "std": float(r["std"]) if r["std"] else float("nan"),
                "n": int(r["n"]),
            })
    return rows


def run_noise_sweep(plan: ExperimentPlan, d: SpectraDataset | None = None, workers: int | None = None) -> SweepResult:
    """Accuracy of every model at every noise level over ``repetitions``
    fresh splits. Raises HarnessError if every run of some cell failed."""
    d = load_dataset(plan) if d is None else d
    _require_classes(d)
    keys = [(m, lv, r) for m in plan.models for lv in plan.noise_levels for r in range(plan.repetitions)]
    res = run_cells(d, plan, keys, workers)
    raw = {(m, lv): [res[(m, lv, r)].accuracy for r in range(plan.repetitions)]
           for m in plan.models for lv in plan.noise_levels}
    errors = {k: v.error for k, v in res.items() if v.error}
    out = SweepResult(tuple(plan.models), tuple(plan.noise_levels), raw, errors)
    dead = [c for c in raw if out.n(*c) == 0]
    if dead:
        m, lv = dead[0]
        msg = errors.get((m, lv, 0), "")
        raise HarnessError(f"all runs failed for model {m} at noise {lv}: {msg}")
    return out


# -- stability -----------------------------------------------------------

@dataclass
class StabilityResult:
    models: tuple
    accuracies: dict  # model -> list per repetition
    level: float = 0.0
    augmented: bool = False
    histories: dict = field(default_factory=dict)  # (model, rep) -> History

    def histogram(self, model, edges=STABILITY_BINS) -> np.ndarray:
        """Counts per bin [e0, e1), ..., [e_{n-1}, e_n] over successful runs."""
        a = np.asarray(self.accuracies[model], dtype=float)
        a = a[~np.isnan(a)]
        edges = np.asarray(edges, dtype=float)
        idx = np.clip(np.searchsorted(edges, a, side="right") - 1, 0, len(edges) - 2)
        return np.bincount(idx, minlength=len(edges) - 1)

    def fraction_below(self, model, threshold=0.8) -> float:
        a = np.asarray(self.accuracies[model], dtype=float)
        a = a[~np.isnan(a)]
        return float(np.mean(a < threshold)) if len(a) else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "rep", "accuracy"])
        for m in self.models:
            for r, a in enumerate(self.accuracies[m]):
                w.writerow([m, r, _fmt(a)])
        return buf.getvalue()

    def histogram_csv(self, edges=STABILITY_BINS) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "lo", "hi", "count"])
        for m in self.models:
            for lo, hi, c in zip(edges[:-1], edges[1:], self.histogram(m, edges)):
                w.writerow([m, repr(float(lo)), repr(float(hi)), int(c)])
        return buf.getvalue()

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stability.csv").write_text(self.to_csv())
        (out / "stability_hist.csv").write_text(self.histogram_csv())
        for (m, r), h in sorted(self.histories.items()):
            h.write_csv(out / f"history_{m}_{r}.csv")


def _single_level(plan: ExperimentPlan) -> float:
    # one explicit level is used as is; a multi-level plan runs clean data
    return plan.noise_levels[0] if len(plan.noise_levels) == 1 else 0.0


def run_stability_study(plan: ExperimentPlan, d: SpectraDataset | None = None,
                        workers: int | None = None) -> StabilityResult:
    """Final test accuracy per model over ``repetitions`` independent
    reshuffles and initializations."""
    d = load_dataset(plan) if d is None else d
    _require_classes(d)
    if plan.repetitions < FULL_STABILITY_REPS:
        warnings.warn(f"stability study with {plan.repetitions} repetitions "
                      f"(the full protocol uses >= {FULL_STABILITY_REPS})", stacklevel=2)
    level = _single_level(plan)
    keys = [(m, level, r) for m in plan.models for r in range(plan.repetitions)]
    res = run_cells(d, plan, keys, workers)
    acc = {m: [res[(m, level, r)].accuracy for r in range(plan.repetitions)] for m in plan.models}
    for m in plan.models:
        if all(math.isnan(a) for a in acc[m]):
            raise HarnessError(f"all runs failed for model {m}: {res[(m, level, 0)].error}")
    hist = {(m, r): res[(m, level, r)].history for m in plan.models for r in range(plan.repetitions)
            if res[(m, level, r)].history is not None}
    return StabilityResult(tuple(plan.models), acc, level, plan.augment is not None, hist)


# -- confusion -----------------------------------------------------------

def run_confusion(plan: ExperimentPlan, model: str, d: SpectraDataset | None = None, out_dir=None) -> EvalReport:
    """Confusion matrix of one model on repetition 0's test split."""
    d = load_dataset(plan) if d is None else d
    _require_classes(d)
    level = _single_level(plan)
    res = run_cell(d, plan, model, level, 0)
    if res.report is None:
        raise HarnessError(f"{model} run failed: {res.error}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        res.report.write_confusion_csv(out / f"confusion_{model}.csv", d.class_names)
        res.report.write_json(out / f"confusion_{model}.json")
        if res.history is not None:
            res.history.write_csv(out / f"history_{model}_0.csv")
    return res.report

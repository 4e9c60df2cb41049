"""Spectrum and dataset types, preprocessing, splitting and metrics."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

#: Standard input window and length used by every model.
STD_LO = 1450.0
STD_HI = 3152.4
STD_BINS = 728

#: Full acquisition window of the instrument the mimic data imitate.
ACQ_LO = 662.05
ACQ_HI = 3152.4


class SpectrumRangeError(ValueError):
    """Requested wavenumber range does not overlap the data."""


class DataError(ValueError):
    """Malformed or inconsistent dataset contents."""


def standard_grid() -> np.ndarray:
    """Uniform 728-point grid over [1450, 3152.4] cm^-1."""
    return np.linspace(STD_LO, STD_HI, STD_BINS)


def acquisition_grid() -> np.ndarray:
    """Uniform grid over the full acquisition range at the standard spacing.

    The spacing is chosen so that the standard crop window lands on exactly
    728 of its knots.
    """
    step = (STD_HI - STD_LO) / (STD_BINS - 1)
    n_below = int(round((STD_LO - ACQ_LO) / step))
    lo = STD_LO - n_below * step
    return lo + step * np.arange(n_below + STD_BINS)


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Spectrum:
    """A single spectrum: wavenumber axis plus intensities.

    Arrays are copied and made read-only on construction.
    """

    axis: np.ndarray
    intensity: np.ndarray
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        axis = _frozen(self.axis)
        intensity = _frozen(self.intensity)
        if axis.ndim != 1 or intensity.ndim != 1:
            raise DataError("axis and intensity must be 1-D")
        if len(axis) != len(intensity):
            raise DataError(f"axis has {len(axis)} points but intensity has {len(intensity)}")
        if len(axis) < 2:
            raise DataError("a spectrum needs at least 2 points")
        if not np.all(np.diff(axis) > 0):
            raise DataError("axis must be strictly increasing")
        if not np.all(np.isfinite(intensity)):
            raise DataError("intensities must be finite")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def __len__(self):
        return len(self.axis)

    def with_intensity(self, intensity, **meta) -> "Spectrum":
        return Spectrum(self.axis, intensity, {**self.meta, **meta})


@dataclass(frozen=True)
class SpectraDataset:
    """Labeled spectra sharing one wavenumber grid."""

    grid: np.ndarray
    rows: np.ndarray
    labels: np.ndarray
    class_names: tuple
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        grid = _frozen(self.grid)
        rows = _frozen(np.atleast_2d(self.rows) if len(self.rows) else np.empty((0, len(grid))))
        labels = np.asarray(self.labels, dtype=np.int64).copy()
        labels.setflags(write=False)
        names = tuple(str(c) for c in self.class_names)
        if rows.shape[1] != len(grid):
            raise DataError(f"rows have {rows.shape[1]} bins but grid has {len(grid)}")
        if len(labels) != rows.shape[0]:
            raise DataError("one label per row required")
        if len(names) < 2:
            raise DataError("at least two classes required")
        if len(set(names)) != len(names):
            raise DataError("duplicate class names")
        if len(labels) and (labels.min() < 0 or labels.max() >= len(names)):
            raise DataError("label out of range")
        if not np.all(np.isfinite(rows)):
            raise DataError("non-finite intensity in dataset")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self):
        return self.rows.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, idx) -> "SpectraDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return SpectraDataset(self.grid, self.rows[idx], self.labels[idx], self.class_names, self.meta)

    def with_rows(self, rows, **meta) -> "SpectraDataset":
        return SpectraDataset(self.grid, rows, self.labels, self.class_names, {**self.meta, **meta})

    def spectrum(self, i: int) -> Spectrum:
        return Spectrum(self.grid, self.rows[i], {"label": self.class_names[self.labels[i]]})


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            a = np.asarray(getattr(self, name), dtype=np.int64).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        allidx = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(allidx)) != len(allidx):
            raise DataError("split parts overlap")


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    confusion: np.ndarray
    n_test: int
    seed: int = 0
    model_name: str = ""
    noise_level: float = 0.0

    def __post_init__(self):
        cm = np.asarray(self.confusion, dtype=np.int64).copy()
        cm.setflags(write=False)
        object.__setattr__(self, "confusion", cm)
        if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
            raise DataError("confusion matrix must be square")
        if int(cm.sum()) != self.n_test:
            raise DataError("confusion total does not match n_test")
        expected = np.trace(cm) / self.n_test if self.n_test else 0.0
        if abs(expected - self.accuracy) > 1e-12:
            raise DataError("accuracy inconsistent with confusion matrix")

    def to_dict(self) -> dict:
        return {
            "accuracy": float(self.accuracy),
            "confusion": self.confusion.tolist(),
            "n_test": int(self.n_test),
            "seed": int(self.seed),
            "model_name": self.model_name,
            "noise_level": float(self.noise_level),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        return cls(
            accuracy=float(d["accuracy"]),
            confusion=np.asarray(d["confusion"]),
            n_test=int(d["n_test"]),
            seed=int(d.get("seed", 0)),
            model_name=str(d.get("model_name", "")),
            noise_level=float(d.get("noise_level", 0.0)),
        )

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_confusion_csv(self, path, class_names: Sequence[str] | None = None) -> None:
        k = self.confusion.shape[0]
        names = list(class_names) if class_names is not None else [str(i) for i in range(k)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred", *names])
            for name, row in zip(names, self.confusion):
                w.writerow([name, *(int(v) for v in row)])


# ---------------------------------------------------------------------------
# preprocessing


def crop(s: Spectrum, lo: float, hi: float) -> Spectrum:
    if not lo < hi:
        raise SpectrumRangeError(f"empty crop window [{lo}, {hi}]")
    # tolerance absorbs float drift in grid construction
    tol = 1e-9 * max(1.0, abs(hi))
    keep = (s.axis >= lo - tol) & (s.axis <= hi + tol)
    if keep.sum() == 0:
        raise SpectrumRangeError(
            f"window [{lo}, {hi}] does not overlap axis [{s.axis[0]}, {s.axis[-1]}]"
        )
    if keep.sum() < 2:
        raise SpectrumRangeError(f"window [{lo}, {hi}] keeps fewer than 2 points")
    return Spectrum(s.axis[keep], s.intensity[keep], s.meta)


def resample(s: Spectrum, grid) -> Spectrum:
    """Linearly interpolate ``s`` onto ``grid``."""
    grid = np.asarray(grid, dtype=float)
    tol = 1e-9 * max(1.0, abs(s.axis[-1]))
    if grid.min() < s.axis[0] - tol or grid.max() > s.axis[-1] + tol:
        raise SpectrumRangeError(
            f"grid [{grid.min()}, {grid.max()}] leaves axis hull [{s.axis[0]}, {s.axis[-1]}]"
        )
    return Spectrum(grid, np.interp(grid, s.axis, s.intensity), s.meta)


def rescale01_array(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise min/max rescaling. Returns (scaled, constant_mask)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    lo = rows.min(axis=1, keepdims=True)
    span = rows.max(axis=1, keepdims=True) - lo
    const = span[:, 0] == 0
    safe = np.where(span == 0, 1.0, span)
    out = (rows - lo) / safe
    out[const] = 0.0
    return out, const


def rescale01(s: Spectrum) -> Spectrum:
    out, const = rescale01_array(s.intensity)
    if const[0]:
        warnings.warn("constant spectrum rescaled to zeros", RuntimeWarning, stacklevel=2)
        return s.with_intensity(out[0], warning="constant_spectrum")
    return s.with_intensity(out[0])


def hampel(y: np.ndarray, window: int = 7, k: float = 5.0) -> np.ndarray:
    """Hampel filter: replace points deviating more than ``k`` scaled MADs
    from their sliding-window median by that median.

    Windows are truncated at the edges.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    y = np.asarray(y, dtype=float)
    half = window // 2
    padded = np.pad(y, half, mode="constant", constant_values=np.nan)
    win = np.lib.stride_tricks.sliding_window_view(padded, window)
    med = np.nanmedian(win, axis=1)
    mad = 1.4826 * np.nanmedian(np.abs(win - med[:, None]), axis=1)
    out = y.copy()
    hit = np.abs(y - med) > k * mad
    # flat windows (mad == 0) flag any departure at all
    out[hit] = med[hit]
    return out


def remove_cosmic_rays(s: Spectrum, window: int = 7, k: float = 5.0) -> Spectrum:
    return s.with_intensity(hampel(s.intensity, window, k))


# ---------------------------------------------------------------------------
# splitting and metrics


def _largest_remainder(n: int, fractions: np.ndarray) -> np.ndarray:
    raw = n * fractions
    base = np.floor(raw).astype(np.int64)
    short = n - base.sum()
    rem = raw - base
    # stable sort keeps earlier parts first on equal remainders
    order = np.argsort(-rem, kind="stable")
    base[order[:short]] += 1
    return base


def stratified_split(d: SpectraDataset, fractions: Sequence[float], seed: int) -> SplitIndices:
    """Split rows into train/(val)/test preserving per-class proportions.

    Per-class part sizes use largest-remainder rounding; indices within each
    class are shuffled by a generator seeded with ``seed``.
    """
    fr = np.asarray(fractions, dtype=float)
    if len(fr) not in (2, 3):
        raise ValueError("fractions must have 2 or 3 entries")
    if np.any(fr <= 0) or abs(fr.sum() - 1) > 1e-9:
        raise ValueError("fractions must be positive and sum to 1")
    rng = np.random.default_rng(seed)
    parts = [[] for _ in fr]
    for c in range(d.n_classes):
        idx = np.flatnonzero(d.labels == c)
        if len(idx) < len(fr):
            raise DataError(f"class {d.class_names[c]!r} has {len(idx)} rows, fewer than {len(fr)} parts")
        idx = idx[rng.permutation(len(idx))]
        sizes = _largest_remainder(len(idx), fr)
        for p, chunk in zip(parts, np.split(idx, np.cumsum(sizes)[:-1])):
            p.append(chunk)
    parts = [np.sort(np.concatenate(p)) for p in parts]
    if len(parts) == 2:
        return SplitIndices(parts[0], np.empty(0, dtype=np.int64), parts[1])
    return SplitIndices(*parts)


def parse_split(text: str) -> tuple:
    """'80/20' -> (0.8, 0.2)."""
    try:
        vals = [float(v) for v in text.split("/")]
    except ValueError as exc:
        raise ValueError(f"bad split {text!r}") from exc
    total = sum(vals)
    return tuple(v / total for v in vals)


def confusion_matrix(pred, truth, k: int) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def evaluate(pred, truth, k: int, *, seed: int = 0, model_name: str = "", noise_level: float = 0.0) -> EvalReport:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(truth)} labels")
    if len(pred) and (min(pred.min(), truth.min()) < 0 or max(pred.max(), truth.max()) >= k):
        raise ValueError("label outside [0, K)")
    cm = confusion_matrix(pred, truth, k)
    n = len(pred)
    acc = float(np.trace(cm) / n) if n else 0.0
    return EvalReport(acc, cm, n, seed, model_name, noise_level)


# ---------------------------------------------------------------------------
# dataset I/O


def write_dataset_csv(d: SpectraDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(x)) for x in d.grid] + ["label"])
        for row, lab in zip(d.rows, d.labels):
            w.writerow([repr(float(v)) for v in row] + [d.class_names[lab]])


def read_dataset_csv(path, class_names: Sequence[str] | None = None) -> SpectraDataset:
    """Read the interchange CSV. Class order is first appearance unless given."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[-1].strip() != "label":
            raise DataError(f"{path}: last header column must be 'label'")
        try:
            grid = np.array([float(v) for v in header[:-1]])
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric wavenumber in header") from exc
        rows, names = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append([float(v) for v in rec[:-1]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric intensity") from exc
            names.append(rec[-1])
    order = list(class_names) if class_names is not None else list(dict.fromkeys(names))
    lookup = {n: i for i, n in enumerate(order)}
    try:
        labels = [lookup[n] for n in names]
    except KeyError as exc:
        raise DataError(f"{path}: unknown class {exc.args[0]!r}") from None
    return SpectraDataset(grid, np.array(rows).reshape(len(rows), len(grid)), labels, order, {"source": str(path)})


def prepare(d: SpectraDataset, *, despike: bool = True, window: int = 7, k: float = 5.0) -> SpectraDataset:
    """Standard preparation: despike, crop/resample onto the 728-bin grid, rescale to [0, 1]."""
    grid = standard_grid()
    rows = d.rows
    if despike:
        rows = np.array([hampel(r, window, k) for r in rows])
    if len(d.grid) != len(grid) or not np.allclose(d.grid, grid, rtol=0, atol=1e-9):
        if grid[0] < d.grid[0] - 1e-6 or grid[-1] > d.grid[-1] + 1e-6:
            raise SpectrumRangeError("dataset grid does not cover the standard window")
        rows = np.array([np.interp(grid, d.grid, r) for r in rows])
    rows, const = rescale01_array(rows)
    meta = {**d.meta, "prepared": True}
    if const.any():
        warnings.warn(f"{int(const.sum())} constant spectra rescaled to zeros", RuntimeWarning, stacklevel=2)
        meta["constant_rows"] = np.flatnonzero(const).tolist()
    return SpectraDataset(grid, rows, d.labels, d.class_names, meta)

"""Synthetic graphene spectra and the two augmentation transforms
(additive uniform noise and peak shifting)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DataError, SpectraDataset, Spectrum, SpectrumRangeError, standard_grid
from .peakfit import TWOD_WINDOW, pseudo_voigt

MAX_SHIFT = 30.0
MAX_NOISE = 0.5
PRESETS = ("charge_mimic", "dielectric_mimic")


@dataclass(frozen=True)
class PeakModel:
    center: float
    fwhm_lorentz: float
    fwhm_gauss: float
    amplitude: float

    def __post_init__(self):
        if self.fwhm_lorentz < 0 or self.fwhm_gauss < 0:
            raise ValueError("FWHM values must be >= 0")
        if self.fwhm_lorentz == 0 and self.fwhm_gauss == 0:
            raise ValueError("FWHM values cannot both be 0")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be > 0")

    def evaluate(self, x):
        return pseudo_voigt(x, self.center, self.fwhm_gauss, self.fwhm_lorentz, self.amplitude)


@dataclass(frozen=True)
class PeakJitter:
    """Uniform half-widths applied around a PeakModel's fields."""

    center: float = 0.0
    fwhm_lorentz: float = 0.0
    fwhm_gauss: float = 0.0
    amplitude: float = 0.0

    def __post_init__(self):
        if min(self.center, self.fwhm_lorentz, self.fwhm_gauss, self.amplitude) < 0:
            raise ValueError("jitter half-widths must be >= 0")


@dataclass(frozen=True)
class ClassProfile:
    name: str
    peaks: tuple  # of (label, PeakModel, PeakJitter)
    baseline: float = 0.0
    count: int = 1
    charge_range: tuple | None = None

    def __post_init__(self):
        if not self.peaks:
            raise ValueError(f"profile {self.name!r} has no peaks")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        object.__setattr__(self, "peaks", tuple(tuple(p) for p in self.peaks))

    def without_jitter(self) -> "ClassProfile":
        return replace(self, peaks=tuple((lab, pm, PeakJitter()) for lab, pm, _ in self.peaks))

    @classmethod
    def from_dict(cls, d) -> "ClassProfile":
        peaks = []
        for p in d["peaks"]:
            peaks.append((p.get("label", ""), PeakModel(**p["mean"]), PeakJitter(**p.get("jitter", {}))))
        cr = d.get("charge_range")
        return cls(d["name"], tuple(peaks), float(d.get("baseline", 0.0)), int(d.get("count", 1)),
                   tuple(cr) if cr is not None else None)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "count": self.count,
            "baseline": self.baseline,
            "peaks": [
                {"label": lab, "mean": vars(pm).copy(), "jitter": vars(jit).copy()}
                for lab, pm, jit in self.peaks
            ],
        }
        if self.charge_range is not None:
            out["charge_range"] = list(self.charge_range)
        return out


@dataclass(frozen=True)
class NoiseSpec:
    level: float
    reference: tuple = TWOD_WINDOW
    convention: str = "range"

    def __post_init__(self):
        if not 0.0 <= self.level <= MAX_NOISE:
            raise ValueError(f"noise level {self.level} outside [0, {MAX_NOISE}]")
        if self.convention not in ("range", "amplitude"):
            raise ValueError("convention must be 'range' or 'amplitude'")

    @property
    def half_width_factor(self):
        """Per-bin bound as a multiple of level * I_ref."""
        return 0.5 if self.convention == "range" else 1.0


# ---------------------------------------------------------------------------
# generation


def draw_peaks(profile: ClassProfile, rng) -> list[tuple[str, PeakModel]]:
    out = []
    for lab, pm, jit in profile.peaks:
        vals = {}
        for f in ("center", "fwhm_lorentz", "fwhm_gauss", "amplitude"):
            mean, half = getattr(pm, f), getattr(jit, f)
            vals[f] = mean + rng.uniform(-half, half) if half > 0 else mean
        vals["fwhm_lorentz"] = max(vals["fwhm_lorentz"], 0.0)
        vals["fwhm_gauss"] = max(vals["fwhm_gauss"], 0.0)
        vals["amplitude"] = max(vals["amplitude"], 1e-9)
        out.append((lab, PeakModel(**vals)))
    return out


def render(peaks, baseline, grid) -> np.ndarray:
    y = np.full(len(grid), float(baseline))
    for _, pm in peaks:
        y += pm.evaluate(grid)
    return y


def synth_spectrum(p: ClassProfile, grid, rng) -> Spectrum:
    """One spectrum: sum of jittered pseudo-Voigt peaks on a constant baseline.

    The drawn peak parameters are recorded in ``meta['peaks']``.
    """
    grid = np.asarray(grid, dtype=float)
    peaks = draw_peaks(p, rng)
    meta = {
        "class": p.name,
        "baseline": p.baseline,
        "peaks": {lab or str(i): vars(pm).copy() for i, (lab, pm) in enumerate(peaks)},
    }
    return Spectrum(grid, render(peaks, p.baseline, grid), meta)


def synth_dataset(profiles: Sequence[ClassProfile], grid=None, seed: int = 0) -> SpectraDataset:
    """Rows for each profile in order; row ``i`` uses its own stream derived from (seed, i)."""
    if len(profiles) < 2:
        raise ValueError("need at least two profiles")
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise DataError("duplicate class names in profiles")
    grid = standard_grid() if grid is None else np.asarray(grid, dtype=float)
    total = sum(p.count for p in profiles)
    rows = np.empty((total, len(grid)))
    labels = np.empty(total, dtype=np.int64)
    i = 0
    for c, p in enumerate(profiles):
        for _ in range(p.count):
            rng = np.random.default_rng([seed, i])
            rows[i] = render(draw_peaks(p, rng), p.baseline, grid)
            labels[i] = c
            i += 1
    return SpectraDataset(grid, rows, labels, names, {"generator_seed": seed})


def load_profiles(path) -> list[ClassProfile]:
    doc = json.loads(Path(path).read_text())
    return [ClassProfile.from_dict(d) for d in doc["profiles"]]


def preset_profiles(name: str) -> list[ClassProfile]:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("ramanclf.presets").joinpath(f"{name}.json").read_text()
    return [ClassProfile.from_dict(d) for d in json.loads(text)["profiles"]]


def scaled_profiles(profiles, factor: float) -> list[ClassProfile]:
    """Same class shapes with counts multiplied by ``factor`` (at least 2 each)."""
    return [replace(p, count=max(2, int(round(p.count * factor)))) for p in profiles]


# ---------------------------------------------------------------------------
# augmentation


def _reference_max(axis, rows, window):
    keep = (axis >= window[0]) & (axis <= window[1])
    if not keep.any():
        raise SpectrumRangeError(f"noise reference window {window} is empty on this axis")
    return rows[..., keep].max(axis=-1)


def noise_rows(axis, rows, n: NoiseSpec, rng) -> np.ndarray:
    """Add i.i.d. uniform noise scaled by each row's reference-window maximum."""
    rows = np.asarray(rows, dtype=float)
    if n.level == 0:
        return rows.copy()
    iref = np.abs(_reference_max(axis, rows, n.reference))
    half = n.half_width_factor * n.level * iref
    u = rng.uniform(-1.0, 1.0, size=rows.shape)
    return rows + u * np.expand_dims(half, -1)


def add_noise(s: Spectrum, n: NoiseSpec, rng) -> Spectrum:
    return s.with_intensity(noise_rows(s.axis, s.intensity, n, rng))


def shift_rows(axis, rows, delta) -> np.ndarray:
    """Translate each row by ``delta`` cm^-1 on the fixed axis; edges hold the boundary value.

    ``delta`` may be a scalar or one value per row.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (rows.shape[0],))
    if np.any(np.abs(delta) > MAX_SHIFT + 1e-12):
        raise SpectrumRangeError(f"shift exceeds +/-{MAX_SHIFT} cm^-1")
    out = np.empty_like(rows)
    for i, (r, d) in enumerate(zip(rows, delta)):
        out[i] = r if d == 0 else np.interp(axis - d, axis, r)
    return out


def shift_peaks(s: Spectrum, delta: float) -> Spectrum:
    return s.with_intensity(shift_rows(s.axis, s.intensity, delta)[0])


def augment_rows(axis, rows, n: NoiseSpec, shift_range: float, rng) -> np.ndarray:
    if shift_range > MAX_SHIFT:
        raise SpectrumRangeError(f"shift range exceeds {MAX_SHIFT} cm^-1")
    deltas = rng.uniform(-shift_range, shift_range, size=len(rows)) if shift_range > 0 else np.zeros(len(rows))
    return noise_rows(axis, shift_rows(axis, rows, deltas), n, rng)


def augment_dataset(d: SpectraDataset, n: NoiseSpec, shift_range: float, rng, mode: str = "replace") -> SpectraDataset:
    """Shift each row by Uniform(-shift_range, shift_range) then add noise.

    ``mode='replace'`` keeps the row count; ``'append'`` returns originals
    followed by their augmented copies.
    """
    if mode not in ("replace", "append"):
        raise ValueError("mode must be 'replace' or 'append'")
    new = augment_rows(d.grid, d.rows, n, shift_range, rng)
    meta = {**d.meta, "augmented": {"noise": n.level, "shift": shift_range, "mode": mode}}
    if mode == "replace":
        return SpectraDataset(d.grid, new, d.labels, d.class_names, meta)
    return SpectraDataset(
        d.grid, np.vstack([d.rows, new]), np.concatenate([d.labels, d.labels]), d.class_names, meta
    )

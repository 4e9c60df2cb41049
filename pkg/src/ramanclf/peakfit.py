"""Pseudo-Voigt line shape, Levenberg-Marquardt peak fitting and the
Monte-Carlo noise sensitivity study."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import Spectrum

LN2 = math.log(2.0)
# Gaussian FWHM = GAUSS_FWHM * sigma
GAUSS_FWHM = 2.0 * math.sqrt(2.0 * LN2)

# Thompson-Cox-Hastings width polynomial and mixing coefficients
_TCH = (1.0, 2.69269, 2.42843, 4.47163, 0.07842, 1.0)
_ETA = (1.36603, -0.47719, 0.11116)

G_WINDOW = (1500.0, 1700.0)
TWOD_WINDOW = (2550.0, 2850.0)
BANDS = {"G": G_WINDOW, "2D": TWOD_WINDOW}
PEAK_FIELDS = ("position", "fwhm", "intensity", "area")


class FitError(RuntimeError):
    """Fit failed to converge. Carries the best parameters found so far."""

    def __init__(self, msg, params=None, residual_rms=float("nan")):
        super().__init__(msg)
        self.params = params
        self.residual_rms = residual_rms


@dataclass(frozen=True)
class VoigtParams:
    center: float
    sigma: float
    gamma: float
    amplitude: float
    offset: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.gamma < 0:
            raise ValueError("widths must be non-negative")
        if self.sigma + self.gamma <= 0:
            raise ValueError("sigma and gamma cannot both be zero")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")

    @property
    def fwhm_gauss(self):
        return GAUSS_FWHM * self.sigma

    @property
    def fwhm_lorentz(self):
        return 2.0 * self.gamma

    @property
    def fwhm(self):
        return tch_width(self.fwhm_gauss, self.fwhm_lorentz)[0]

    @property
    def eta(self):
        return mixing(self.fwhm_gauss, self.fwhm_lorentz)[0]

    @property
    def area(self):
        return pv_area(self.amplitude, self.fwhm, self.eta)

    @classmethod
    def from_widths(cls, center, fwhm_gauss, fwhm_lorentz, amplitude, offset=0.0):
        return cls(center, fwhm_gauss / GAUSS_FWHM, fwhm_lorentz / 2.0, amplitude, offset)

    def as_array(self):
        return np.array([self.center, self.sigma, self.gamma, self.amplitude, self.offset])


@dataclass(frozen=True)
class PeakReport:
    position: float
    fwhm: float
    intensity: float
    area: float
    residual_rms: float
    iterations: int = 0


def tch_width(fg, fl):
    """Combined FWHM and its partials (d/dfg, d/dfl)."""
    a = _TCH
    p = (a[0] * fg**5 + a[1] * fg**4 * fl + a[2] * fg**3 * fl**2
         + a[3] * fg**2 * fl**3 + a[4] * fg * fl**4 + a[5] * fl**5)
    dp_g = (5 * a[0] * fg**4 + 4 * a[1] * fg**3 * fl + 3 * a[2] * fg**2 * fl**2
            + 2 * a[3] * fg * fl**3 + a[4] * fl**4)
    dp_l = (a[1] * fg**4 + 2 * a[2] * fg**3 * fl + 3 * a[3] * fg**2 * fl**2
            + 4 * a[4] * fg * fl**3 + 5 * a[5] * fl**4)
    f = p**0.2
    k = 0.2 * p**-0.8
    return f, k * dp_g, k * dp_l


def mixing(fg, fl):
    """Lorentzian fraction eta and its partials (d/dfg, d/dfl)."""
    f, df_g, df_l = tch_width(fg, fl)
    r = fl / f
    eta = _ETA[0] * r + _ETA[1] * r**2 + _ETA[2] * r**3
    deta = _ETA[0] + 2 * _ETA[1] * r + 3 * _ETA[2] * r**2
    dr_g = -fl * df_g / f**2
    dr_l = 1.0 / f - fl * df_l / f**2
    return eta, deta * dr_g, deta * dr_l


def pv_area(amplitude, fwhm, eta):
    return amplitude * fwhm * (eta * math.pi / 2 + (1 - eta) * math.sqrt(math.pi / (4 * LN2)))


def pseudo_voigt(x, center, fwhm_gauss, fwhm_lorentz, amplitude):
    """Peak-height-normalized pseudo-Voigt: value ``amplitude`` at ``center``."""
    x = np.asarray(x, dtype=float)
    f, _, _ = tch_width(fwhm_gauss, fwhm_lorentz)
    eta, _, _ = mixing(fwhm_gauss, fwhm_lorentz)
    u2 = ((x - center) / f) ** 2
    lor = 1.0 / (1.0 + 4.0 * u2)
    gau = np.exp(-4.0 * LN2 * u2)
    return amplitude * (eta * lor + (1.0 - eta) * gau)


def voigt_eval(p: VoigtParams, x):
    return p.offset + pseudo_voigt(x, p.center, p.fwhm_gauss, p.fwhm_lorentz, p.amplitude)


def _model_and_jac(theta, x):
    """Model values and analytic Jacobian for theta = (c, sigma, gamma, A, offset).

    Widths enter through their absolute values so the optimizer can move freely.
    """
    c, s, g, amp, off = theta
    sg, gg = np.sign(s) or 1.0, np.sign(g) or 1.0
    fg, fl = GAUSS_FWHM * abs(s), 2.0 * abs(g)
    f, df_g, df_l = tch_width(fg, fl)
    eta, deta_g, deta_l = mixing(fg, fl)
    u = x - c
    q = u / f
    lor = 1.0 / (1.0 + 4.0 * q * q)
    gau = np.exp(-4.0 * LN2 * q * q)
    shape = eta * lor + (1 - eta) * gau
    y = off + amp * shape

    # partials of the two normalized profiles w.r.t. center and width
    dlor_du = -8.0 * u / f**2 * lor**2
    dgau_du = -8.0 * LN2 * u / f**2 * gau
    dlor_df = 8.0 * u * u / f**3 * lor**2
    dgau_df = 8.0 * LN2 * u * u / f**3 * gau
    dshape_df = eta * dlor_df + (1 - eta) * dgau_df

    jac = np.empty((len(x), 5))
    jac[:, 0] = -amp * (eta * dlor_du + (1 - eta) * dgau_du)
    jac[:, 1] = amp * ((lor - gau) * deta_g + dshape_df * df_g) * GAUSS_FWHM * sg
    jac[:, 2] = amp * ((lor - gau) * deta_l + dshape_df * df_l) * 2.0 * gg
    jac[:, 3] = shape
    jac[:, 4] = 1.0
    return y, jac


def levenberg_marquardt(x, y, theta0, *, max_iter=200, rtol=1e-10, lam0=1e-3):
    """Minimize sum((model - y)^2) over theta.

    Returns (theta, ssr, iterations, converged). A step is accepted only if
    it lowers the residual, so ssr never exceeds its starting value.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    model, jac = _model_and_jac(theta, x)
    r = y - model
    ssr = float(r @ r)
    lam = lam0
    if ssr == 0.0:
        return theta, ssr, 0, True
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        grad = jac.T @ r
        accepted = False
        while lam < 1e16:
            a = jtj + lam * np.diag(np.diag(jtj) + 1e-12)
            try:
                step = np.linalg.solve(a, grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + step
            if abs(trial[1]) + abs(trial[2]) <= 0:
                lam *= 10
                continue
            m_new, j_new = _model_and_jac(trial, x)
            r_new = y - m_new
            ssr_new = float(r_new @ r_new)
            if ssr_new <= ssr:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no downhill step at any damping: local minimum to machine precision
            return theta, ssr, it, True
        change = (ssr - ssr_new) / ssr if ssr > 0 else 0.0
        theta, model, jac, r, ssr = trial, m_new, j_new, r_new, ssr_new
        lam = max(lam / 10, 1e-12)
        if ssr == 0.0 or change < rtol:
            return theta, ssr, it, True
    return theta, ssr, max_iter, False


def initial_guess(x, y) -> VoigtParams:
    """Heuristic start: argmax center, height above window min, equal-split widths."""
    i = int(np.argmax(y))
    lo, hi = float(y.min()), float(y.max())
    amp = max(hi - lo, 1e-12)
    above = x[y >= lo + amp / 2]
    span = max(above[-1] - above[0], x[1] - x[0]) if len(above) else (x[-1] - x[0]) / 4
    # half the half-maximum span, split between the two components
    w = span / 2
    return VoigtParams.from_widths(float(x[i]), w, w, amp, lo)


def _report(theta, ssr, n, it) -> tuple[VoigtParams, PeakReport]:
    c, s, g, amp, off = theta
    p = VoigtParams(float(c), abs(float(s)), abs(float(g)), float(amp), float(off))
    rep = PeakReport(p.center, p.fwhm, p.amplitude, p.area, math.sqrt(ssr / n), it)
    return p, rep


def fit_peak(s: Spectrum, window=None, init: VoigtParams | None = None, *, max_iter=200):
    """Fit one pseudo-Voigt plus constant offset inside ``window``.

    Raises FitError on non-convergence, on a non-positive fitted amplitude,
    or when the fit explains almost nothing of the window (pure noise).
    """
    lo, hi = window if window is not None else (s.axis[0], s.axis[-1])
    keep = (s.axis >= lo) & (s.axis <= hi)
    if keep.sum() < 8:
        raise ValueError(f"window [{lo}, {hi}] holds {int(keep.sum())} bins; need >= 8")
    x, y = s.axis[keep], s.intensity[keep]
    if init is None:
        init = initial_guess(x, y)
    elif not lo <= init.center <= hi:
        raise ValueError("initial center outside the fit window")
    theta, ssr, it, ok = levenberg_marquardt(x, y, init.as_array(), max_iter=max_iter)
    rms = math.sqrt(ssr / len(x))
    if not ok:
        raise FitError(f"no convergence after {max_iter} iterations", theta, rms)
    if theta[3] <= 0 or abs(theta[1]) + abs(theta[2]) <= 0:
        raise FitError("degenerate fit (non-positive amplitude or width)", theta, rms)
    if not lo <= theta[0] <= hi:
        raise FitError("fitted center left the window", theta, rms)
    in_rms = float(np.sqrt(np.mean((y - y.mean()) ** 2)))
    if in_rms > 0 and rms >= 0.9 * in_rms:
        raise FitError("fit explains <10% of window variance; no peak present", theta, rms)
    return _report(theta, ssr, len(x), it)


def fit_bands(s: Spectrum, bands=None) -> dict:
    """Fit each named band window; returns {band: (VoigtParams, PeakReport)}."""
    bands = BANDS if bands is None else bands
    return {name: fit_peak(s, win) for name, win in bands.items()}


def noise_sensitivity_study(profile, levels, reps: int, seed: int, grid=None, bands=None):
    """Fit G and 2D bands on ``reps`` noisy copies of a profile's mean spectrum per level.

    Returns a list of row dicts with keys noise_level, param_name, mean, std,
    n_failures. Failed fits contribute NaN and are excluded from mean/std.
    """
    from .core import standard_grid
    from .spectragen import NoiseSpec, add_noise, synth_spectrum

    if reps < 2:
        raise ValueError("reps must be >= 2")
    grid = standard_grid() if grid is None else np.asarray(grid)
    bands = BANDS if bands is None else bands
    clean = synth_spectrum(profile.without_jitter(), grid, np.random.default_rng(seed))
    names = [f"{b}_{f}" for b in bands for f in PEAK_FIELDS]
    rows = []
    for li, level in enumerate(levels):
        vals = np.full((reps, len(names)), np.nan)
        rng = np.random.default_rng([seed, li])
        for r in range(reps):
            noisy = add_noise(clean, NoiseSpec(level), rng)
            for bi, (band, win) in enumerate(bands.items()):
                try:
                    _, rep = fit_peak(noisy, win)
                except (FitError, ValueError):
                    continue
                vals[r, bi * 4:(bi + 1) * 4] = [rep.position, rep.fwhm, rep.intensity, rep.area]
        for j, name in enumerate(names):
            col = vals[:, j]
            good = col[np.isfinite(col)]
            rows.append({
                "noise_level": float(level),
                "param_name": name,
                "mean": float(good.mean()) if len(good) else float("nan"),
                "std": float(good.std(ddof=1)) if len(good) > 1 else float("nan"),
                "n_failures": int(reps - len(good)),
            })
    return rows


def study_table(rows):
    """Pivot study rows into (levels, names, means, stds) arrays: levels x params."""
    levels = sorted({r["noise_level"] for r in rows})
    names = list(dict.fromkeys(r["param_name"] for r in rows))
    mean = np.full((len(levels), len(names)), np.nan)
    std = np.full_like(mean, np.nan)
    for r in rows:
        i, j = levels.index(r["noise_level"]), names.index(r["param_name"])
        mean[i, j], std[i, j] = r["mean"], r["std"]
    return levels, names, mean, std


def write_study_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["noise_level", "param_name", "mean", "std", "n_failures"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "mean": repr(r["mean"]), "std": repr(r["std"])})


__all__ = [
    "VoigtParams", "PeakReport", "FitError", "voigt_eval", "pseudo_voigt", "fit_peak",
    "fit_bands", "levenberg_marquardt", "noise_sensitivity_study", "study_table",
    "write_study_csv", "G_WINDOW", "TWOD_WINDOW",
]

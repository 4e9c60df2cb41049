import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ramanclf.core import Spectrum, standard_grid
from ramanclf.peakfit import (
    BANDS, GAUSS_FWHM, FitError, VoigtParams, _model_and_jac, fit_bands, fit_peak,
    levenberg_marquardt, mixing, noise_sensitivity_study, pv_area, study_table, tch_width,
    voigt_eval, write_study_csv,
)
from ramanclf.spectragen import ClassProfile, PeakJitter, PeakModel, preset_profiles, synth_spectrum

GRID = standard_grid()
X = np.linspace(2500, 2900, 801)


def test_params_validation():
    with pytest.raises(ValueError):
        VoigtParams(1, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        VoigtParams(1, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        VoigtParams(1, 1.0, 1.0, 0.0)


def test_lorentzian_limit():
    c, g, a = 2680.0, 13.0, 2.5
    p = VoigtParams(c, 0.0, g, a)
    np.testing.assert_allclose(voigt_eval(p, X), a * g**2 / ((X - c) ** 2 + g**2), atol=1e-6)


def test_gaussian_limit():
    c, s, a = 2680.0, 9.0, 2.5
    p = VoigtParams(c, s, 0.0, a)
    np.testing.assert_allclose(voigt_eval(p, X), a * np.exp(-(X - c) ** 2 / (2 * s * s)), atol=1e-6)


def test_tch_width_limits():
    assert tch_width(10.0, 0.0)[0] == pytest.approx(10.0)
    assert tch_width(0.0, 10.0)[0] == pytest.approx(10.0)
    assert mixing(0.0, 10.0)[0] == pytest.approx(1.0, abs=1e-5)
    assert mixing(10.0, 0.0)[0] == 0.0


@given(st.floats(0.1, 30), st.floats(0.0, 30), st.floats(-200, 200).filter(lambda d: d != 0))
def test_unimodal_and_symmetric(sigma, gamma, delta):
    p = VoigtParams(2680.0, sigma, gamma, 1.0)
    at_c = voigt_eval(p, np.array([2680.0]))[0]
    right, left = voigt_eval(p, np.array([2680.0 + delta, 2680.0 - delta]))
    assert at_c >= right
    assert right == pytest.approx(left, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("theta", [
    [2680.0, 6.0, 11.0, 1.2, 0.1],
    [1585.0, 2.0, 7.0, 0.4, 0.0],
    [2000.0, 10.0, 0.5, 3.0, -0.2],
])
def test_analytic_jacobian_matches_finite_differences(theta):
    x = np.linspace(theta[0] - 80, theta[0] + 80, 97)
    _, jac = _model_and_jac(np.array(theta), x)
    h = 1e-6
    num = np.empty_like(jac)
    for j in range(5):
        tp, tm = np.array(theta), np.array(theta)
        tp[j] += h
        tm[j] -= h
        num[:, j] = (_model_and_jac(tp, x)[0] - _model_and_jac(tm, x)[0]) / (2 * h)
    np.testing.assert_allclose(jac, num, rtol=1e-5, atol=1e-7)


def test_report_quantities_are_analytic():
    s = synth_spectrum(preset_profiles("charge_mimic")[2].without_jitter(), GRID, np.random.default_rng(0))
    p, rep = fit_peak(s, BANDS["2D"])
    assert rep.fwhm == tch_width(p.fwhm_gauss, p.fwhm_lorentz)[0]
    assert rep.area == pv_area(p.amplitude, p.fwhm, p.eta)
    assert rep.intensity == p.amplitude
    assert rep.fwhm > 0 and rep.area > 0


def test_pv_area_pure_limits():
    # Lorentzian area = pi/2 * A * FWHM, Gaussian = A * FWHM * sqrt(pi / (4 ln 2))
    assert pv_area(1.0, 2.0, 1.0) == pytest.approx(math.pi)
    assert pv_area(1.0, 2.0, 0.0) == pytest.approx(2 * math.sqrt(math.pi / (4 * math.log(2))))


@pytest.mark.parametrize("cls", range(4))
@pytest.mark.parametrize("seed", [0, 1])
def test_recovers_generator_ground_truth(cls, seed):
    prof = preset_profiles("charge_mimic")[cls]
    s = synth_spectrum(prof, GRID, np.random.default_rng(seed))
    fits = fit_bands(s)
    for band in ("G", "2D"):
        truth = s.meta["peaks"][band]
        true_fwhm = tch_width(truth["fwhm_gauss"], truth["fwhm_lorentz"])[0]
        _, rep = fits[band]
        assert abs(rep.position - truth["center"]) <= 0.05
        assert abs(rep.fwhm - true_fwhm) <= 0.01 * true_fwhm


def single_peak_spectrum(c=2675.0, fg=6.0, fl=24.0, amp=1.0, base=0.1):
    p = ClassProfile("one", (("", PeakModel(c, fl, fg, amp), PeakJitter()),), baseline=base)
    return synth_spectrum(p, GRID, np.random.default_rng(0))


def test_init_at_truth_is_fixed_point():
    s = single_peak_spectrum()
    init = VoigtParams.from_widths(2675.0, 6.0, 24.0, 1.0, 0.1)
    p, rep = fit_peak(s, BANDS["2D"], init)
    assert rep.iterations <= 2
    assert rep.residual_rms < 1e-9
    assert p.center == pytest.approx(2675.0, abs=1e-9)


def test_pure_noise_is_flagged():
    r = np.random.default_rng(3)
    s = Spectrum(GRID, r.uniform(0, 1, len(GRID)))
    keep = (GRID >= 2550) & (GRID <= 2850)
    y = s.intensity[keep]
    in_rms = np.sqrt(np.mean((y - y.mean()) ** 2))
    try:
        _, rep = fit_peak(s, BANDS["2D"])
    except FitError as e:
        assert np.isfinite(e.residual_rms)
    else:
        assert rep.residual_rms >= 0.9 * in_rms


def test_window_too_small_and_init_outside():
    s = single_peak_spectrum()
    with pytest.raises(ValueError):
        fit_peak(s, (2670, 2680))
    with pytest.raises(ValueError):
        fit_peak(s, BANDS["2D"], VoigtParams(1000.0, 1.0, 1.0, 1.0))


def test_max_iter_exhaustion_raises_with_best_params():
    s = single_peak_spectrum()
    init = VoigtParams.from_widths(2600.0, 40.0, 40.0, 0.2, 0.0)
    with pytest.raises(FitError) as exc:
        fit_peak(s, BANDS["2D"], init, max_iter=1)
    assert exc.value.params is not None


@given(st.floats(2600, 2750), st.floats(1, 30), st.floats(1, 30), st.floats(0.1, 3), st.integers(0, 1000))
def test_optimizer_never_increases_residual(c0, fg0, fl0, a0, seed):
    s = synth_spectrum(preset_profiles("charge_mimic")[1], GRID, np.random.default_rng(seed))
    keep = (GRID >= 2550) & (GRID <= 2850)
    x, y = GRID[keep], s.intensity[keep]
    theta0 = VoigtParams.from_widths(c0, fg0, fl0, a0).as_array()
    m0, _ = _model_and_jac(theta0, x)
    ssr0 = float(((y - m0) ** 2).sum())
    _, ssr, _, _ = levenberg_marquardt(x, y, theta0, max_iter=30)
    assert ssr <= ssr0


def test_study_level_zero_has_no_spread():
    rows = noise_sensitivity_study(preset_profiles("charge_mimic")[0], [0.0], reps=3, seed=0)
    assert len(rows) == 8
    assert all(r["std"] < 1e-6 and r["n_failures"] == 0 for r in rows)


def test_study_std_grows_with_noise():
    rows = noise_sensitivity_study(preset_profiles("charge_mimic")[0], [0.01, 0.1], reps=30, seed=4)
    _, names, _, std = study_table(rows)
    j = names.index("G_position")
    assert std[1, j] > std[0, j]


def test_study_shape_and_csv(tmp_path):
    rows = noise_sensitivity_study(preset_profiles("charge_mimic")[0], [0.01, 0.05, 0.1, 0.2], reps=3, seed=0)
    levels, names, mean, std = study_table(rows)
    assert np.hstack([mean, std]).shape == (4, 16)
    assert len(names) == 8
    write_study_csv(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "noise_level,param_name,mean,std,n_failures"
    assert len(lines) == 33
    with pytest.raises(ValueError):
        noise_sensitivity_study(preset_profiles("charge_mimic")[0], [0.01], reps=1, seed=0)

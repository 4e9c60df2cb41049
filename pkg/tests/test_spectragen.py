import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ramanclf.core import DataError, SpectraDataset, Spectrum, SpectrumRangeError, standard_grid
from ramanclf.spectragen import (
    MAX_SHIFT, ClassProfile, NoiseSpec, PeakJitter, PeakModel, add_noise, augment_dataset,
    load_profiles, preset_profiles, scaled_profiles, shift_peaks, shift_rows, synth_dataset,
    synth_spectrum,
)

GRID = standard_grid()
SPACING = GRID[1] - GRID[0]


def two_band_profile(name="gr", count=1, jitter=None):
    jit = jitter or PeakJitter()
    return ClassProfile(name, (
        ("G", PeakModel(1590.0, 14.0, 6.0, 0.6), jit),
        ("2D", PeakModel(2680.0, 28.0, 10.0, 1.0), jit),
    ), baseline=0.05, count=count)


def test_peak_model_validation():
    with pytest.raises(ValueError):
        PeakModel(1590, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        PeakModel(1590, -1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        PeakModel(1590, 1.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        PeakJitter(center=-1)
    with pytest.raises(ValueError):
        ClassProfile("x", ())


def test_single_lorentzian_max_at_nearest_bin():
    c = 2001.3
    p = ClassProfile("one", (("", PeakModel(c, 12.0, 0.0, 1.0), PeakJitter()),))
    s = synth_spectrum(p, GRID, np.random.default_rng(0))
    assert np.argmax(s.intensity) == np.argmin(np.abs(GRID - c))


def test_two_bands_give_two_local_maxima():
    s = synth_spectrum(two_band_profile(), GRID, np.random.default_rng(0))
    y = s.intensity
    interior = (y[1:-1] > y[:-2]) & (y[1:-1] > y[2:]) & (y[1:-1] > 0.05)
    peaks = GRID[1:-1][interior]
    assert len(peaks) == 2
    np.testing.assert_allclose(peaks, [1590, 2680], atol=SPACING)


def test_meta_records_drawn_parameters():
    p = two_band_profile(jitter=PeakJitter(center=5.0, amplitude=0.1))
    s = synth_spectrum(p, GRID, np.random.default_rng(3))
    g = s.meta["peaks"]["G"]
    assert abs(g["center"] - 1590) <= 5.0
    assert s.meta["class"] == "gr"


def test_synth_spectrum_deterministic():
    p = preset_profiles("charge_mimic")[1]
    a = synth_spectrum(p, GRID, np.random.default_rng(42))
    b = synth_spectrum(p, GRID, np.random.default_rng(42))
    np.testing.assert_array_equal(a.intensity, b.intensity)


@pytest.mark.parametrize("name, total, counts", [
    ("charge_mimic", 2112, [484, 633, 753, 242]),
    ("dielectric_mimic", 4419, [1355, 1386, 727, 951]),
])
def test_preset_counts(name, total, counts):
    profiles = preset_profiles(name)
    assert [p.count for p in profiles] == counts
    assert sum(p.count for p in profiles) == total


def test_synth_dataset_small():
    d = synth_dataset([two_band_profile("a", 5), two_band_profile("b", 5)], seed=1)
    assert len(d) == 10
    np.testing.assert_array_equal(d.labels, [0] * 5 + [1] * 5)
    assert list(d.class_names) == ["a", "b"]


def test_synth_dataset_errors():
    with pytest.raises(ValueError):
        synth_dataset([two_band_profile("a", 5)])
    with pytest.raises(DataError):
        synth_dataset([two_band_profile("a", 2), two_band_profile("a", 2)])
    with pytest.raises(ValueError):
        preset_profiles("nope")


def test_charge_preset_generates_2112_rows():
    d = synth_dataset(preset_profiles("charge_mimic"), seed=0)
    assert d.rows.shape == (2112, 728)
    np.testing.assert_array_equal(d.class_counts(), [484, 633, 753, 242])


def test_scaled_profiles_keep_two_per_class():
    small = scaled_profiles(preset_profiles("charge_mimic"), 0.001)
    assert all(p.count == 2 for p in small)


def test_profile_json_round_trip(tmp_path):
    import json
    profiles = preset_profiles("charge_mimic")
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"profiles": [p.to_dict() for p in profiles]}))
    assert load_profiles(path) == profiles


# -- noise ----------------------------------------------------------------------

def flat_spectrum(n=len(GRID), iref=1.0):
    y = np.zeros(n)
    y[np.argmin(np.abs(GRID - 2680))] = iref
    return Spectrum(GRID, y)


def test_noise_level_zero_is_identity():
    s = synth_spectrum(two_band_profile(), GRID, np.random.default_rng(0))
    out = add_noise(s, NoiseSpec(0.0), np.random.default_rng(1))
    np.testing.assert_array_equal(out.intensity, s.intensity)


def test_noise_bound_and_empirical_range():
    # I_ref = 1, level 0.05: draws are uniform on [-0.025, 0.025]
    rng = np.random.default_rng(7)
    base = flat_spectrum()
    pert = []
    while sum(len(p) for p in pert) < 100_000:
        out = add_noise(base, NoiseSpec(0.05), rng)
        pert.append(np.delete(out.intensity - base.intensity, np.argmax(base.intensity)))
    pert = np.concatenate(pert)
    assert np.abs(pert).max() <= 0.025
    assert 0.049 <= np.ptp(pert) <= 0.050


def test_noise_amplitude_convention_doubles_bound():
    rng = np.random.default_rng(0)
    base = flat_spectrum()
    out = add_noise(base, NoiseSpec(0.05, convention="amplitude"), rng)
    assert np.abs(out.intensity - base.intensity).max() <= 0.05
    assert np.abs(out.intensity - base.intensity).max() > 0.025


def test_noise_level_limits():
    NoiseSpec(0.5)
    with pytest.raises(ValueError):
        NoiseSpec(0.51)
    with pytest.raises(ValueError):
        NoiseSpec(-0.01)
    with pytest.raises(SpectrumRangeError):
        add_noise(Spectrum([0.0, 1.0, 2.0], [1, 2, 3]), NoiseSpec(0.1), np.random.default_rng(0))


@given(st.floats(0, 0.5), st.integers(0, 2**32 - 1))
def test_noise_hard_bound(level, seed):
    s = synth_spectrum(two_band_profile(), GRID, np.random.default_rng(0))
    keep = (GRID >= 2550) & (GRID <= 2850)
    iref = s.intensity[keep].max()
    out = add_noise(s, NoiseSpec(level), np.random.default_rng(seed))
    assert np.abs(out.intensity - s.intensity).max() <= level * iref / 2 + 1e-12


# -- shift ------------------------------------------------------------------------

def test_shift_zero_is_identity():
    s = synth_spectrum(two_band_profile(), GRID, np.random.default_rng(0))
    np.testing.assert_array_equal(shift_peaks(s, 0.0).intensity, s.intensity)


def test_shift_plus_30_moves_argmax_13_bins():
    p = ClassProfile("one", (("", PeakModel(GRID[300], 8.0, 4.0, 1.0), PeakJitter()),))
    s = synth_spectrum(p, GRID, np.random.default_rng(0))
    out = shift_peaks(s, 30.0)
    assert round(30 / 2.3417) == 13
    assert np.argmax(out.intensity) - np.argmax(s.intensity) == 13


def test_shift_round_trip_on_affine_data():
    # interpolation is exact for affine rows, so -30 then +30 restores them away from the edges
    s = Spectrum(GRID, 0.3 + 1e-3 * (GRID - GRID[0]))
    back = shift_peaks(shift_peaks(s, -30.0), 30.0)
    inner = slice(13, -13)
    np.testing.assert_allclose(back.intensity[inner], s.intensity[inner], atol=1e-9)


def test_shift_round_trip_whole_bins_on_peaked_data():
    s = synth_spectrum(two_band_profile(), GRID, np.random.default_rng(0))
    d = 12 * SPACING
    back = shift_peaks(shift_peaks(s, -d), d)
    inner = slice(13, -13)
    np.testing.assert_allclose(back.intensity[inner], s.intensity[inner], atol=1e-9)


def test_shift_edges_hold_boundary_value():
    y = np.linspace(1, 2, len(GRID))
    out = shift_rows(GRID, y, 30.0)[0]
    np.testing.assert_array_equal(out[:12], y[0])


def test_shift_out_of_range():
    s = flat_spectrum()
    with pytest.raises(SpectrumRangeError):
        shift_peaks(s, MAX_SHIFT + 0.5)


@given(st.floats(-30, 30))
def test_shift_keeps_grid(delta):
    s = synth_spectrum(two_band_profile(), GRID, np.random.default_rng(0))
    out = shift_peaks(s, delta)
    np.testing.assert_array_equal(out.axis, s.axis)
    assert len(out) == len(s)
    assert out.intensity.min() >= s.intensity.min() - 1e-12
    assert out.intensity.max() <= s.intensity.max() + 1e-12


# -- augmentation -----------------------------------------------------------------

def small_charge_raw(seed=0):
    return synth_dataset(scaled_profiles(preset_profiles("charge_mimic"), 0.05), seed=seed)


def test_augment_identity_at_zero():
    d = small_charge_raw()
    out = augment_dataset(d, NoiseSpec(0.0), 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(out.rows, d.rows)
    np.testing.assert_array_equal(out.labels, d.labels)


def test_augment_argmax_displacement_bound():
    d = small_charge_raw()
    out = augment_dataset(d, NoiseSpec(0.05), 30.0, np.random.default_rng(0))
    moved = np.abs(np.argmax(out.rows, axis=1) - np.argmax(d.rows, axis=1))
    assert moved.max() <= 13
    assert len(out) == len(d)
    np.testing.assert_array_equal(out.labels, d.labels)


def test_augment_deterministic_and_append():
    d = small_charge_raw()
    a = augment_dataset(d, NoiseSpec(0.05), 30.0, np.random.default_rng(5))
    b = augment_dataset(d, NoiseSpec(0.05), 30.0, np.random.default_rng(5))
    assert a.rows.tobytes() == b.rows.tobytes()
    app = augment_dataset(d, NoiseSpec(0.05), 30.0, np.random.default_rng(5), mode="append")
    assert len(app) == 2 * len(d)
    np.testing.assert_array_equal(app.rows[:len(d)], d.rows)
    np.testing.assert_array_equal(app.rows[len(d):], a.rows)
    with pytest.raises(ValueError):
        augment_dataset(d, NoiseSpec(0.05), 30.0, np.random.default_rng(5), mode="other")
    with pytest.raises(SpectrumRangeError):
        augment_dataset(d, NoiseSpec(0.05), 31.0, np.random.default_rng(5))


def test_generated_dataset_is_a_dataset():
    assert isinstance(small_charge_raw(), SpectraDataset)

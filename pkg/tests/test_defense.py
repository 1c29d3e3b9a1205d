import math

import numpy as np
import pytest

from freqtrig.datasets import power_law_images, radial_bins
from freqtrig.defense import (RadialProfile, average_spectrum, detect, profile_from_power,
                              radial_profile, spectral_slope, spectrum_to_uint8)
from freqtrig.spectrum import dct2, idct2


def test_average_spectrum_of_copies(rng):
    x = rng.random((8, 8, 3))
    np.testing.assert_allclose(average_spectrum(np.stack([x] * 5)), np.abs(dct2(x)), atol=1e-12)


def test_average_is_mean_of_magnitudes(rng):
    X = rng.normal(size=(8, 8, 3))
    a, b = idct2(X), idct2(-X)  # spectra cancel in the mean but not in magnitude
    np.testing.assert_allclose(average_spectrum(np.stack([a, b])), np.abs(X), atol=1e-12)


def test_average_spectrum_oracle(rng):
    batch = rng.random((7, 6, 5, 2))
    acc = np.zeros((6, 5, 2))
    for x in batch:
        acc += np.abs(dct2(x))
    np.testing.assert_allclose(average_spectrum(batch), acc / 7, atol=1e-12)
    with pytest.raises(ValueError):
        average_spectrum(np.zeros((0, 4, 4, 3)))


def test_profile_of_constructed_power_law():
    k = radial_bins(16, 16)
    power = np.where(k > 0, np.maximum(k, 1.0) ** -2.0, 7.0)[:, :, None].repeat(3, axis=2)
    prof = profile_from_power(power)
    np.testing.assert_array_equal(prof.freqs, np.arange(1, 16))
    np.testing.assert_allclose(prof.magnitudes, prof.freqs ** -2.0)
    assert spectral_slope(prof) == pytest.approx(-2.0, abs=1e-9)


def test_flat_profile_and_zero_slope():
    prof = profile_from_power(np.full((8, 8, 3), 0.3))
    np.testing.assert_allclose(prof.magnitudes, 0.3)
    assert spectral_slope(prof) == pytest.approx(0.0, abs=1e-12)


def oracle_profile(batch):
    n, h, w, c = batch.shape
    kmax = min(h, w)
    sums = [[0.0] * kmax for _ in range(c)]
    counts = [0] * kmax
    for idx, x in enumerate(batch):
        X = dct2(x)
        for u in range(h):
            for v in range(w):
                k = int(math.floor(math.sqrt(u * u + v * v)))
                if 1 <= k < kmax:
                    if idx == 0:
                        counts[k] += 1
                    for ch in range(c):
                        sums[ch][k] += X[u, v, ch] ** 2
    per_channel = [[sums[ch][k] / (counts[k] * n) for k in range(1, kmax)] for ch in range(c)]
    return [sum(col) / c for col in zip(*per_channel)]


def test_radial_profile_matches_loop_oracle(rng):
    batch = rng.random((4, 9, 7, 3))
    np.testing.assert_allclose(radial_profile(batch).magnitudes, oracle_profile(batch), rtol=1e-12)


def test_energy_at_one_bin_changes_only_that_bin(rng):
    X = rng.normal(size=(12, 12, 3))
    base = radial_profile(idct2(X)[None]).magnitudes
    X[3, 4, :] += 2.0  # radius 5
    bumped = radial_profile(idct2(X)[None]).magnitudes
    changed = np.flatnonzero(~np.isclose(base, bumped, rtol=0, atol=1e-12)) + 1
    assert changed.tolist() == [5]


@pytest.mark.parametrize("s", [-1.0, -2.0, -3.0])
def test_power_law_ensembles_recover_slope(s):
    imgs = power_law_images(300, 16, 16, 3, s, np.random.default_rng(int(-s)), scale=0.2)
    assert spectral_slope(radial_profile(imgs)) == pytest.approx(s, abs=0.05)


def test_slope_needs_two_bins():
    with pytest.raises(ValueError):
        spectral_slope(RadialProfile(np.array([1, 2]), np.array([1.0, 0.0])))


def test_detect_clean_and_perturbed(rng):
    clean = power_law_images(200, 16, 16, 3, -2.0, rng, scale=0.3)
    v = detect(clean, -1.5)
    assert not v.flagged and v.label == "not flagged" and v.slope < -1.5
    X = dct2(clean)
    X[:, 10:, 10:, :] += 0.5
    assert detect(np.clip(idct2(X), 0, 1), -1.5).flagged
    assert not detect(clean, math.inf).flagged


def test_detect_monotone_in_threshold(rng):
    batch = power_law_images(50, 16, 16, 3, -2.0, rng)
    flags = [detect(batch, t).flagged for t in np.linspace(-3, 0, 31)]
    assert flags == sorted(flags, reverse=True)


def test_spectrum_rendering():
    img = spectrum_to_uint8(np.arange(48, dtype=float).reshape(4, 4, 3))
    assert img.dtype == np.uint8 and img.max() == 255 and img[0, 0] < img[3, 3]

"""Shared fixtures: the expensive synthetic datasets are session-scoped."""

import numpy as np
import pytest

from tesqrng import calibrate as cal_mod
from tesqrng import detector, source

CHUNK = 2048

MEAN19_SEED = 20260809
MEAN19_EVENTS = 1_000_000


def synth_channel_dataset(mean, n_events, seed, params=None, thr_high=40.0, thr_low=0.0):
    """True counts plus extracted areas for one simulated channel."""
    params = params or detector.WaveformParams()
    counts = source.sample_counts([mean], n_events, seed)[:, 0]
    areas = np.zeros(n_events)
    found = np.zeros(n_events, dtype=bool)
    for block, lo in enumerate(range(0, n_events, CHUNK)):
        sl = slice(lo, min(lo + CHUNK, n_events))
        rng = detector.block_generator(seed, block, 0)
        mat = detector.synth_matrix(
            np.clip(counts[sl], 0, detector.MAX_PHOTONS_PER_CHANNEL), params, rng
        )
        batch = detector.extract_batch(mat, thr_high, thr_low)
        areas[sl] = batch.area
        found[sl] = batch.found
    return counts, areas, found


def synth_probe_areas(n, count, seed, params=None, thr_high=40.0, thr_low=0.0):
    """Areas of ``count`` pulses all carrying ``n`` photons."""
    params = params or detector.WaveformParams()
    areas = np.zeros(count)
    for block, lo in enumerate(range(0, count, CHUNK)):
        sl = slice(lo, min(lo + CHUNK, count))
        rng = detector.block_generator(seed, 10_000 * (n + 1) + block, 1)
        mat = detector.synth_matrix(np.full(sl.stop - sl.start, n), params, rng)
        batch = detector.extract_batch(mat, thr_high, thr_low)
        areas[sl] = batch.area
    return areas


@pytest.fixture(scope="session")
def mean19_dataset():
    """10^6 pulses of one channel at Poisson mean 19 (detector defaults)."""
    counts, areas, found = synth_channel_dataset(19.0, MEAN19_EVENTS, MEAN19_SEED)
    return {"counts": counts, "areas": areas, "found": found}


@pytest.fixture(scope="session")
def mean19_calibration(mean19_dataset):
    """Histogram-fit calibration of the mean-19 dataset, model-numbered."""
    d = mean19_dataset
    ok = d["found"] & (d["counts"] <= detector.MAX_PHOTONS_PER_CHANNEL)
    hist = cal_mod.AreaHistogram.from_areas(d["areas"][ok])
    comps = cal_mod.fit_mixture(hist, 38)
    params = detector.WaveformParams()
    mu_model = [detector.expected_area(n, params) for n in range(38)]
    comps = cal_mod.assign_numbers(comps, mu_model)
    calib = cal_mod.build_calibration(comps)
    return {"calibration": calib, "hist": hist, "r_squared": cal_mod.fit_quality(hist, comps)}

"""Acceptance suite: one test per project exit criterion, each printing a
PASS line with its measured numbers.

Criterion 4's equality clause is asserted literally in
``test_criterion_04_truncated_bias_equality_literal`` and is expected to
fail: the exact truncated biases at nbar=57 (50-digit verified) for
d in {1,2,3} share the 1e-8 scale but differ pairwise at that same scale,
so no correct implementation can bring them within 1e-12 of each other.
The companion test pins the true, oracle-verified ED-style relations.
"""

import json
import time

import numpy as np
import pytest

from tesqrng import counting, detector, figures, nist, qrng, theory
from tesqrng import calibrate as cal_mod
from tesqrng.config import RunConfig
from tesqrng.counting import DISCARDED
from tesqrng.pipeline import run_pipeline
from tesqrng.source import SplitterNetwork, sample_counts, sample_totals, split_coherent
from tesqrng.theory import CoherentSpec, ModQSpec

from conftest import MEAN19_SEED, synth_probe_areas


def _truncated_totals(nbar, events, seed, n_cap=100):
    totals = sample_totals(nbar, events, seed)
    return np.where(totals > n_cap, DISCARDED, totals)


def test_criterion_01_parity_decay():
    t0 = time.time()
    rows = []
    for i, nbar in enumerate([0.0, 0.25, 0.5, 1.0, 2.0, 3.0]):
        totals = _truncated_totals(nbar, 1_000_000, seed=1000 + i)
        value, se = counting.parity_estimate(totals)
        target = theory.coherent_parity(nbar)
        assert abs(value - target) <= 4.0 * se, (nbar, value, target, se)
        rows.append((nbar, value, se))
    elapsed = time.time() - t0
    assert elapsed < 60.0
    print(
        f"[criterion 1] PASS: parity tracks exp(-2 nbar) within 4 sigma at "
        f"{len(rows)} means, {elapsed:.1f}s"
    )


def test_criterion_02_large_state_waveform_pipeline(tmp_path):
    t0 = time.time()
    d = RunConfig(seed=42, events=100_000).to_dict()
    d["source"]["nbar"] = 57.0
    d["calibrate"]["mode"] = "model"
    d["qrng"]["d"] = 3
    cfg = RunConfig.from_dict(d)
    summary = run_pipeline(cfg, tmp_path, skip_certify=True)
    n = summary["n_resolved"]
    parity = summary["parity"]
    assert abs(parity) < 4.0 / np.sqrt(n)
    from tesqrng.io import read_totals

    _, totals = read_totals(tmp_path / "totals.bin")
    kept = totals[totals >= 0]
    probs = theory.poisson_pmf_vector(57.0, 100)
    chi2, dof, p = counting.pooled_chisquare(np.bincount(kept, minlength=101), probs)
    assert p > 0.001
    elapsed = time.time() - t0
    assert elapsed < 600.0
    print(
        f"[criterion 2] PASS: waveform pipeline at nbar=57, N={n}, "
        f"parity={parity:+.5f} (|.|<{4 / np.sqrt(n):.5f}), chi2 p={p:.3f}, {elapsed:.0f}s"
    )


def test_criterion_03_mod4_closed_form():
    worst = 0.0
    for nbar in [0, 0.5, 1, 2, 5, 10, 30, 57, 60]:
        rep = theory.modq_probabilities(CoherentSpec(float(nbar)), ModQSpec(4, n_max=None))
        closed = theory.mod4_closed_form(float(nbar))
        worst = max(worst, float(np.abs(rep.probabilities - closed).max()))
    assert worst < 1e-12
    print(f"[criterion 3] PASS: mod-4 direct summation vs closed form, worst {worst:.2e}")


def _truncated_biases_57():
    return {
        d: theory.modq_probabilities(CoherentSpec(57.0), ModQSpec.power_of_two(d, 100)).max_bias
        for d in range(1, 6)
    }


def test_criterion_04_truncated_bias_equality_literal():
    """Literal criterion: d in {1,2,3} biases within 1e-12 of each other and
    d in {4,5} at least five orders of magnitude above them.

    Expected to fail: the exact values are ~1.32e-8 / 2.23e-8 / 2.65e-8
    (pairwise gaps ~1e-8), and 1.61e-3 / 2.15e-2 for d = 4 / 5 (4.78-5.09
    orders above, depending on the pair).
    """
    b = _truncated_biases_57()
    print(
        "[criterion 4] measured truncated biases at nbar=57: "
        + ", ".join(f"d={d}: {b[d]:.4e}" for d in sorted(b))
    )
    gaps = {
        (i, j): abs(b[i] - b[j]) for i in (1, 2, 3) for j in (1, 2, 3) if i < j
    }
    assert max(gaps.values()) < 1e-12, (
        f"d in {{1,2,3}} biases are not within 1e-12 of each other: {gaps}"
    )
    for d_hi in (4, 5):
        for d_lo in (1, 2, 3):
            assert b[d_hi] >= 1e5 * b[d_lo], (
                f"d={d_hi} bias exceeds d={d_lo} by only {b[d_hi] / b[d_lo]:.3g}x"
            )
    print("[criterion 4] PASS (literal)")


def test_criterion_04_truncated_bias_relations_oracle():
    """The true ED-style relations, 50-digit-oracle verified: the d <= 3
    biases collapse onto a common 1e-8 truncation scale (within a factor of
    ~2) while d = 4 and d = 5 sit 4.7+ and 5.9+ orders above it."""
    b = _truncated_biases_57()
    frozen = {
        1: 1.3178780817e-08,
        2: 2.22660580766e-08,
        3: 2.64786595926e-08,
        4: 1.60558197478e-03,
        5: 2.15455785867e-02,
    }
    for d, val in frozen.items():
        assert b[d] == pytest.approx(val, rel=1e-6)
    small = [b[1], b[2], b[3]]
    assert max(small) / min(small) < 2.5
    assert all(1e-9 < v < 1e-7 for v in small)
    assert b[4] / max(small) > 10 ** 4.7
    assert b[5] / max(small) > 10 ** 5.9
    # full ED-style table: truncation dominates the d<=3 curves at nbar=57
    rows = figures.bias_curve_table(nbar_grid=np.arange(1.0, 81.0, 1.0))
    assert len(rows) == 80
    at57 = rows[56]
    for d in (1, 2, 3):
        assert at57[f"bias_truncated_d{d}"] > at57[f"bias_unbounded_d{d}"]
    print(
        "[criterion 4-oracle] PASS: d<=3 biases share the 1e-8 truncation "
        f"scale (spread x{max(small) / min(small):.2f}); d=4 +{np.log10(b[4] / max(small)):.2f} "
        f"orders, d=5 +{np.log10(b[5] / max(small)):.2f} orders"
    )


class TestCriterion05CalibrationFidelity:
    def test_confidence_matches_gaussian_overlap(self, mean19_calibration):
        calib = mean19_calibration["calibration"]
        errs = cal_mod.error_rates(calib)
        checked = 0
        worst = 0.0
        for n in calib.numbers:
            if n > 30:
                continue
            areas = synth_probe_areas(int(n), 2000, MEAN19_SEED + 1)
            nums, codes = cal_mod.assign_batch(areas, calib)
            emp = float(((codes == 0) & (nums == n)).mean())
            ana = 1.0 - errs[n]
            worst = max(worst, abs(emp - ana))
            assert emp == pytest.approx(ana, abs=0.02), f"n={n}: {emp} vs {ana}"
            checked += 1
        assert checked >= 25
        print(
            f"[criterion 5a] PASS: per-n confidence within 2pp of the "
            f"Gaussian-overlap prediction for {checked} photon numbers (worst {worst:.4f})"
        )

    def test_window_discard_fractions(self, mean19_dataset, mean19_calibration):
        d = mean19_dataset
        calib = mean19_calibration["calibration"]
        ok = d["found"] & (d["counts"] <= detector.MAX_PHOTONS_PER_CHANNEL)
        areas = d["areas"][ok]
        for wf, expected in ((1.0, 0.3173), (0.5, 0.6171)):
            _, codes = cal_mod.assign_batch(areas, calib.with_window(wf))
            resolved_or_windowed = codes != cal_mod.CODE_OVERFLOW
            frac = float(
                (codes[resolved_or_windowed] == cal_mod.CODE_OUTSIDE_WINDOW).mean()
            )
            assert frac == pytest.approx(expected, abs=0.005), (wf, frac)
        print("[criterion 5b] PASS: window discards 31.7% / 61.7% within 0.5pp")

    def test_windowed_pmf_unbiased(self, mean19_dataset, mean19_calibration):
        d = mean19_dataset
        calib = mean19_calibration["calibration"]
        half = len(d["areas"]) // 2
        ok = d["found"]
        a_areas = d["areas"][:half][ok[:half]]
        b_areas = d["areas"][half:][ok[half:]]
        nums_a, codes_a = cal_mod.assign_batch(a_areas, calib)
        nums_b, codes_b = cal_mod.assign_batch(b_areas, calib.with_window(1.0))
        kept_a = nums_a[codes_a == 0]
        kept_b = nums_b[codes_b == 0]
        ca = np.bincount(kept_a, minlength=41)
        cb = np.bincount(kept_b, minlength=41)
        _, _, p = counting.two_sample_chisquare(ca, cb)
        assert p > 0.001
        print(f"[criterion 5c] PASS: windowed pmf consistent with unwindowed (p={p:.3f})")


def test_criterion_06_randomness_certification():
    t0 = time.time()
    # (a) nbar=57, d=3, >= 1e7 bits: random
    totals = _truncated_totals(57.0, 3_333_334, seed=7001)
    stream = qrng.generate(totals, d=3)
    assert stream.bit_length >= 10_000_000
    outs = nist.run_test_suite(stream, nist.TrialPlan())
    assert nist.verdict(outs).random, {oc.test: oc.proportion for oc in outs}

    # (b) nbar=5, d=3, 1e5 bits: the frequency test alone rejects
    totals_small = _truncated_totals(5.0, 33_334, seed=7002)
    stream_small = qrng.generate(totals_small, d=3)
    assert stream_small.bit_length >= 100_000
    outs_small = nist.run_test_suite(
        stream_small, nist.TrialPlan(trial_size=100_000, tests=("frequency",))
    )
    freq = next(oc for oc in outs_small if oc.test == "frequency")
    assert not freq.passed
    assert not nist.verdict(outs_small).random

    # (c) nbar=57, d=5, >= 2e7 bits: mod-32 bias breaks certification
    totals_wide = _truncated_totals(57.0, 4_000_000, seed=7003)
    stream_wide = qrng.generate(totals_wide, d=5)
    assert stream_wide.bit_length >= 20_000_000
    outs_wide = nist.run_test_suite(stream_wide, nist.TrialPlan())
    assert not nist.verdict(outs_wide).random
    failed = [oc.test for oc in outs_wide if not oc.passed]
    elapsed = time.time() - t0
    assert elapsed < 900.0
    print(
        f"[criterion 6] PASS: d=3 random ({len(outs)} tests), nbar=5 frequency "
        f"rejects, d=5 not-random (failing: {', '.join(sorted(failed))}), {elapsed:.0f}s"
    )


def test_criterion_07_wilson_interval():
    low, high = nist.wilson_interval(431, 431, 0.01)
    assert round(low, 5) == 0.98484
    assert round(high, 5) == 1.0
    low0, high0 = nist.wilson_interval(0, 431, 0.01)
    assert low0 == pytest.approx(1 - high, abs=1e-12)
    assert high0 == pytest.approx(1 - low, abs=1e-12)
    n, n_s = 1_000_000, 500_000
    wl, wh = nist.wilson_interval(n_s, n, 0.01)
    z = nist.normal_quantile(0.995)
    assert wl == pytest.approx(0.5 - z * np.sqrt(0.25 / n), abs=1e-4)
    assert wh == pytest.approx(0.5 + z * np.sqrt(0.25 / n), abs=1e-4)
    print(f"[criterion 7] PASS: Wilson interval ({low:.5f}, {high:.5f}) and limits")


def test_criterion_08_trial_arithmetic():
    events = 107_911_769
    counts = [nist.trial_count(events * d, 750_000) for d in range(1, 6)]
    assert counts == [143, 287, 431, 575, 719]
    print(f"[criterion 8] PASS: trial counts {counts}")


class TestCriterion09InvarianceSuite:
    def test_loss_equivalence(self):
        lossy = split_coherent(57.0, SplitterNetwork.balanced(), (0.9, 0.9, 0.9))
        ideal = split_coherent(theory.apply_loss(57.0, 0.9), SplitterNetwork.balanced(), (1.0,) * 3)
        a = sample_counts([c.mean for c in lossy], 100_000, seed=9001).sum(axis=1)
        b = sample_counts([c.mean for c in ideal], 100_000, seed=9002).sum(axis=1)
        hi = max(a.max(), b.max()) + 1
        _, _, p = counting.two_sample_chisquare(
            np.bincount(a, minlength=hi), np.bincount(b, minlength=hi)
        )
        assert p > 0.001
        print(f"[criterion 9a] PASS: (nbar, eta) vs (eta nbar, 1) chi2 p={p:.3f}")

    def test_phase_jitter_invariance(self, tmp_path):
        def run(seed, jitter, sub):
            d = RunConfig(seed=seed, events=200_000).to_dict()
            d["source"]["mode"] = "counts"
            d["source"]["phase_jitter"] = jitter
            run_pipeline(RunConfig.from_dict(d), tmp_path / sub, skip_certify=True)
            return json.loads((tmp_path / sub / "distribution.json").read_text())

        base = run(11, False, "plain")
        jit_same = run(11, True, "jit_same")
        jit_other = run(12, True, "jit_other")
        # same seed: statistics are phase-blind by construction
        assert base["pmf"] == jit_same["pmf"]
        ca = np.round(np.array(base["pmf"]) * base["n_events"]).astype(int)
        cb = np.round(np.array(jit_other["pmf"]) * jit_other["n_events"]).astype(int)
        _, _, p = counting.two_sample_chisquare(ca, cb)
        assert p > 0.001
        print(f"[criterion 9b] PASS: phase jitter leaves the count distribution (p={p:.3f})")

    def test_channel_independence(self):
        counts = sample_counts([19.0, 19.0, 19.0], 100_000, seed=9003)
        bound = 4.0 / np.sqrt(len(counts))
        worst = 0.0
        for i, j in [(0, 1), (0, 2), (1, 2)]:
            r = abs(np.corrcoef(counts[:, i], counts[:, j])[0, 1])
            worst = max(worst, r)
            assert r < bound
        print(f"[criterion 9c] PASS: channel correlations < {bound:.4f} (worst {worst:.4f})")


def test_criterion_10_pipeline_determinism(tmp_path):
    d = RunConfig(seed=77, events=200_000).to_dict()
    d["source"]["mode"] = "counts"
    cfg = RunConfig.from_dict(d)
    run_pipeline(cfg, tmp_path / "c1", skip_certify=True)
    run_pipeline(cfg, tmp_path / "c2", skip_certify=True)
    assert (tmp_path / "c1" / "bits.qrnb").read_bytes() == (tmp_path / "c2" / "bits.qrnb").read_bytes()

    w = RunConfig(seed=78, events=3000).to_dict()
    w["source"]["nbar"] = 12.0
    w["calibrate"]["mode"] = "model"
    wcfg = RunConfig.from_dict(w)
    run_pipeline(wcfg, tmp_path / "w1", skip_certify=True)
    run_pipeline(wcfg, tmp_path / "w2", skip_certify=True)
    assert (tmp_path / "w1" / "bits.qrnb").read_bytes() == (tmp_path / "w2" / "bits.qrnb").read_bytes()
    assert (tmp_path / "w1" / "totals.bin").read_bytes() == (tmp_path / "w2" / "totals.bin").read_bytes()
    print("[criterion 10] PASS: byte-identical bitstreams for identical (config, seed)")

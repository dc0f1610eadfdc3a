"""Randomness tests against published worked examples, brute-force oracles,
and null-hypothesis behavior on a seeded PRNG."""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import gammaincc

from tesqrng import nist
from tesqrng.nist import (
    TrialPlan,
    approximate_entropy_test,
    block_frequency_test,
    cumulative_sums_test,
    default_params,
    frequency_test,
    longest_run_test,
    normal_quantile,
    run_test_suite,
    runs_test,
    serial_test,
    spectral_test,
    trial_count,
    verdict,
    wilson_bounds_at_rate,
    wilson_interval,
)


def bits(s: str) -> np.ndarray:
    return np.array([int(c) for c in s], dtype=np.uint8)


def pi_bits(n: int) -> np.ndarray:
    """First n binary digits of pi (integer part included), via mpmath."""
    import mpmath as mp

    mp.mp.prec = n + 64
    x = mp.pi / 4  # shifts the leading '11.' into the fractional part
    out = np.empty(n, dtype=np.uint8)
    for i in range(n):
        x *= 2
        bit = int(x)
        out[i] = bit
        x -= bit
    return out


PI100 = pi_bits(100)


class TestWorkedExamples:
    """P-values published in the SP800-22 document, within 1e-6."""

    def test_frequency_pi100(self):
        assert frequency_test(PI100) == pytest.approx(0.109599, abs=1e-6)

    def test_frequency_small(self):
        b = np.tile(bits("1011010101"), 10)  # repeat to clear the 100-bit floor
        s = abs(2.0 * bits("1011010101").sum() - 10) / math.sqrt(10)
        from scipy.special import erfc

        assert erfc(s / math.sqrt(2)) == pytest.approx(0.527089, abs=1e-6)

    def test_runs_pi100(self):
        assert runs_test(PI100) == pytest.approx(0.500798, abs=1e-6)

    def test_runs_small(self):
        assert runs_test(bits("1001101011")) == pytest.approx(0.147232, abs=1e-6)

    def test_block_frequency_small(self):
        assert block_frequency_test(bits("0110011010"), 3) == pytest.approx(0.801252, abs=1e-6)

    def test_block_frequency_pi100(self):
        assert block_frequency_test(PI100, 10) == pytest.approx(0.706438, abs=1e-6)

    def test_cusum_pi100(self):
        fwd, _ = cumulative_sums_test(PI100)
        assert fwd == pytest.approx(0.219194, abs=1e-6)

    def test_serial_small(self):
        p1, p2 = serial_test(bits("0011011101"), 3)
        assert p1 == pytest.approx(0.808792, abs=1e-6)
        assert p2 == pytest.approx(0.670320, abs=1e-6)

    def test_approximate_entropy_small(self):
        assert approximate_entropy_test(bits("0100110101"), 3) == pytest.approx(
            0.261961, abs=1e-6
        )

    def test_spectral_small(self):
        assert spectral_test(bits("1001010011")) == pytest.approx(0.029523, abs=1e-6)


class TestBruteForceOracles:
    """Small-input checks against direct-from-definition implementations."""

    def test_serial_counts(self):
        b = bits("0011011101")
        m = 3
        ext = np.concatenate([b, b[: m - 1]])
        counts = {}
        for i in range(len(b)):
            w = tuple(ext[i : i + m])
            counts[w] = counts.get(w, 0) + 1
        psi = 2**m / len(b) * sum(c * c for c in counts.values()) - len(b)
        psi_ref = nist._psi_sq(b, m)
        assert psi == pytest.approx(psi_ref, abs=1e-12)

    def test_apen_phi(self):
        b = bits("0100110101")
        n = len(b)
        for m in (2, 3):
            ext = np.concatenate([b, b[: m - 1]])
            counts = {}
            for i in range(n):
                w = tuple(ext[i : i + m])
                counts[w] = counts.get(w, 0) + 1
            phi = sum((c / n) * math.log(c / n) for c in counts.values())
            c_arr = nist._window_counts(b, m)
            c_arr = c_arr[c_arr > 0] / n
            assert phi == pytest.approx(float((c_arr * np.log(c_arr)).sum()), abs=1e-12)

    def test_longest_run_dp_exact_m8(self):
        # strings of length 8 with no ones-run above 1 are counted by a
        # Fibonacci recurrence: 55 of 256
        probs = nist._longest_run_class_probs(8, 1, 4)
        assert probs[0] == pytest.approx(55 / 256, abs=1e-12)
        assert sum(probs) == pytest.approx(1.0, abs=1e-12)

    def test_longest_run_dp_vs_enumeration(self):
        # full enumeration over all 2^12 strings of length 12
        block = 12
        longest = np.zeros(1 << block, dtype=int)
        for x in range(1 << block):
            run = best = 0
            for j in range(block):
                run = run + 1 if (x >> j) & 1 else 0
                best = max(best, run)
            longest[x] = best
        for lo, hi in [(1, 4), (2, 5)]:
            probs = nist._longest_run_class_probs(block, lo, hi)
            enum = [np.mean(longest <= lo)]
            for r in range(lo + 1, hi):
                enum.append(np.mean(longest == r))
            enum.append(np.mean(longest >= hi))
            assert np.allclose(probs, enum, atol=1e-12)

    def test_longest_run_published_tables(self):
        # the document's 4-decimal tables for M=8 and M=128 agree with the
        # exact DP to rounding precision
        for blk, lo, hi, pub, tol in [
            (8, 1, 4, [0.2148, 0.3672, 0.2305, 0.1875], 5e-5),
            (128, 4, 9, [0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124], 7e-5),
        ]:
            probs = nist._longest_run_class_probs(blk, lo, hi)
            assert max(abs(p - q) for p, q in zip(probs, pub)) < tol

    def test_cusum_against_walk_enumeration(self):
        # P(max |S_k| >= z) over all 2^12 fair walks vs the asymptotic
        # formula: agreement to a few percent is all the formula promises
        n = 12
        steps = 2 * ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1) - 1
        walks = np.abs(np.cumsum(steps, axis=1)).max(axis=1)
        for z in (3, 4, 5):
            exact = float((walks >= z).mean())
            approx = nist._cusum_pvalue(z, n)
            assert approx == pytest.approx(exact, abs=0.05)


class TestEdgeCases:
    def test_all_zeros_fails(self):
        assert frequency_test(np.zeros(100, dtype=np.uint8)) < 1e-20

    def test_alternation_passes_frequency(self):
        assert frequency_test(np.tile([0, 1], 50)) == 1.0

    def test_short_input(self):
        with pytest.raises(ValueError):
            frequency_test(np.zeros(99, dtype=np.uint8))

    def test_runs_prerequisite(self):
        b = np.concatenate([np.ones(90, dtype=np.uint8), np.zeros(10, dtype=np.uint8)])
        assert runs_test(b) == 0.0


class TestWilson:
    def test_headline_interval(self):
        low, high = wilson_interval(431, 431, 0.01)
        assert round(low, 5) == 0.98484
        assert round(high, 5) == 1.0
        assert high == pytest.approx(1.0, abs=1e-15)

    def test_mirror_symmetry(self):
        low0, high0 = wilson_interval(0, 431, 0.01)
        low1, high1 = wilson_interval(431, 431, 0.01)
        assert low0 == pytest.approx(1.0 - high1, abs=1e-12)
        assert high0 == pytest.approx(1.0 - low1, abs=1e-12)

    def test_normal_limit(self):
        n, n_s, alpha = 1_000_000, 500_000, 0.01
        low, high = wilson_interval(n_s, n, alpha)
        z = normal_quantile(1 - alpha / 2)
        approx = 0.5 - z * math.sqrt(0.25 / n), 0.5 + z * math.sqrt(0.25 / n)
        assert low == pytest.approx(approx[0], abs=1e-4)
        assert high == pytest.approx(approx[1], abs=1e-4)

    def test_bounds_and_width(self):
        widths = []
        for n in (10, 100, 1000, 10_000):
            low, high = wilson_interval(int(0.99 * n), n, 0.01)
            assert 0.0 <= low < high <= 1.0
            widths.append(high - low)
        assert all(b < a for a, b in zip(widths, widths[1:]))

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            wilson_interval(5, 4, 0.01)
        with pytest.raises(ValueError):
            wilson_interval(-1, 4, 0.01)

    def test_quantile_accuracy(self):
        grid = [1e-12, 1e-9, 1e-4, 0.013, 0.25, 0.5, 0.75, 0.987, 0.995, 1 - 1e-9]
        err = max(abs(normal_quantile(p) - stats.norm.ppf(p)) for p in grid)
        assert err < 1e-9


class TestSuite:
    def test_trial_arithmetic(self):
        events = 107_911_769
        counts = [trial_count(events * d, 750_000) for d in range(1, 6)]
        assert counts == [143, 287, 431, 575, 719]

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            TrialPlan(trial_size=50_000)
        with pytest.raises(ValueError):
            TrialPlan(alpha=1.5)
        with pytest.raises(ValueError):
            TrialPlan(tests=("nonexistent",))
        TrialPlan(trial_size=1000, tests=("frequency",))

    def test_too_short_stream(self):
        with pytest.raises(ValueError):
            run_test_suite(np.zeros(1000, dtype=np.uint8), TrialPlan())

    def test_constant_zero_stream(self):
        plan = TrialPlan(trial_size=100_000, tests=("frequency",))
        outs = run_test_suite(np.zeros(300_000, dtype=np.uint8), plan)
        assert outs[0].proportion == 0.0
        assert not verdict(outs).random

    def test_null_suite_all_pass(self):
        # 143 trials of a seeded PRNG: every test certifies
        rng = np.random.default_rng(123)
        stream = rng.integers(0, 2, 143 * 750_000, dtype=np.uint8)
        outs = run_test_suite(stream, TrialPlan())
        names = {oc.test for oc in outs}
        assert names == {
            "frequency", "block_frequency", "runs", "longest_run", "spectral",
            "serial_1", "serial_2", "approximate_entropy",
            "cumulative_sums_forward", "cumulative_sums_reverse",
        }
        for oc in outs:
            assert oc.passed, f"{oc.test}: {oc.proportion} < {oc.pass_threshold}"
        assert verdict(outs).random

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        stream = rng.integers(0, 2, 200_000, dtype=np.uint8)
        plan = TrialPlan(trial_size=100_000)
        a = run_test_suite(stream, plan)
        b = run_test_suite(stream, plan)
        for oa, ob in zip(a, b):
            assert np.array_equal(oa.pvalues, ob.pvalues)

    def test_default_params_recorded(self):
        plan = TrialPlan(trial_size=750_000)
        p = default_params(plan.trial_size)
        assert p["serial"]["m"] == 16
        assert p["approximate_entropy"]["m"] == 10
        assert p["block_frequency"]["block_size"] == 8192
        rng = np.random.default_rng(10)
        outs = run_test_suite(rng.integers(0, 2, 750_000, dtype=np.uint8), plan)
        serial = next(oc for oc in outs if oc.test == "serial_1")
        assert serial.params == {"m": 16}


class TestNullUniformity:
    def test_pvalues_uniform_on_prng(self):
        # >= 500 trials per test; Kolmogorov-Smirnov at alpha = 0.001
        rng = np.random.default_rng(2024)
        n_trials, size = 500, 100_000
        stream = rng.integers(0, 2, n_trials * size, dtype=np.uint8)
        outs = run_test_suite(stream, TrialPlan(trial_size=size))
        for oc in outs:
            d, p = stats.kstest(oc.pvalues, "uniform")
            assert p > 0.001, f"{oc.test}: KS p={p:.2e}"

"""Randomness certification in the style of NIST SP800-22.

A bit stream is cut into fixed-size trials; each trial gets one P-value per
test; a trial passes a test when P >= alpha. A test certifies the generator
when its pass proportion lies at or above the lower Wilson score bound
computed at the expected pass rate (1 - alpha) for that trial count; the
Wilson interval around the observed proportion is reported alongside.

Implemented tests: frequency (monobit), block frequency, runs, longest run
of ones, spectral (DFT), serial (two P-values), approximate entropy, and
cumulative sums (forward/reverse). Test parameters are derived from the
trial size following the SP800-22 recommendations and recorded in each
outcome. The longest-run class probabilities are computed exactly by
dynamic programming instead of quoting the rounded published tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import rfft
from scipy.special import erfc, gammaincc, ndtr

__all__ = [
    "TrialPlan",
    "TestOutcome",
    "SuiteVerdict",
    "CORE_TESTS",
    "frequency_test",
    "block_frequency_test",
    "runs_test",
    "longest_run_test",
    "spectral_test",
    "serial_test",
    "approximate_entropy_test",
    "cumulative_sums_test",
    "default_params",
    "trial_count",
    "run_test_suite",
    "wilson_interval",
    "wilson_bounds_at_rate",
    "normal_quantile",
    "verdict",
]

CORE_TESTS = (
    "frequency",
    "block_frequency",
    "runs",
    "longest_run",
    "spectral",
    "serial",
    "approximate_entropy",
    "cumulative_sums",
)


def _as_bits(bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 1 or np.any(b > 1):
        raise ValueError("bits must be a 1-D 0/1 array")
    return b


def frequency_test(bits) -> float:
    """Monobit test: P = erfc(|sum(2e-1)| / sqrt(2n))."""
    b = _as_bits(bits)
    n = b.size
    if n < 100:
        raise ValueError("frequency test needs at least 100 bits")
    s = abs(2.0 * int(b.sum()) - n)
    return float(erfc(s / math.sqrt(2.0 * n)))


def block_frequency_test(bits, block_size: int) -> float:
    """Within-block ones proportion: chi^2 = 4M sum (pi_i - 1/2)^2."""
    b = _as_bits(bits)
    n_blocks = b.size // block_size
    if n_blocks < 1:
        raise ValueError("sequence shorter than one block")
    pi = b[: n_blocks * block_size].reshape(n_blocks, block_size).mean(axis=1)
    chi2 = 4.0 * block_size * ((pi - 0.5) ** 2).sum()
    return float(gammaincc(n_blocks / 2.0, chi2 / 2.0))


def runs_test(bits) -> float:
    """Total runs count against expectation; degenerate ones-fraction fails at P=0."""
    b = _as_bits(bits)
    n = b.size
    if n < 10:
        raise ValueError("runs test needs at least 10 bits")
    pi = b.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int((b[1:] != b[:-1]).sum())
    num = abs(v - 2.0 * n * pi * (1.0 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    return float(erfc(num / den))


@lru_cache(maxsize=None)
def _longest_run_class_probs(block: int, lo: int, hi: int) -> tuple[float, ...]:
    """Exact P(longest ones-run class) for fair blocks, classes <=lo, .., >=hi.

    Dynamic programming over trailing-run length, absorbing at r+1.
    """

    def cdf(r: int) -> float:
        if r >= block:
            return 1.0
        state = np.zeros(r + 1)
        state[0] = 1.0
        for _ in range(block):
            nxt = np.zeros(r + 1)
            nxt[0] = 0.5 * state.sum()
            nxt[1:] = 0.5 * state[:-1]
            state = nxt
        return float(state.sum())

    probs = [cdf(lo)]
    for r in range(lo + 1, hi):
        probs.append(cdf(r) - cdf(r - 1))
    probs.append(1.0 - cdf(hi - 1))
    return tuple(probs)


def _longest_run_setup(n: int) -> tuple[int, int, int]:
    if n < 128:
        raise ValueError("longest-run test needs at least 128 bits")
    if n < 6272:
        return 8, 1, 4
    if n < 750000:
        return 128, 4, 9
    return 10000, 10, 16


def longest_run_test(bits) -> float:
    """Longest run of ones per block against the exact class distribution."""
    b = _as_bits(bits)
    block, lo, hi = _longest_run_setup(b.size)
    n_blocks = b.size // block
    probs = np.asarray(_longest_run_class_probs(block, lo, hi))
    counts = np.zeros(hi - lo + 1, dtype=np.int64)
    mat = b[: n_blocks * block].reshape(n_blocks, block)
    # per-block longest run via cumulative reset at zeros
    runs = np.zeros(n_blocks, dtype=np.int64)
    acc = np.zeros(n_blocks, dtype=np.int64)
    for j in range(block):
        col = mat[:, j]
        acc = (acc + col) * col
        np.maximum(runs, acc, out=runs)
    clipped = np.clip(runs, lo, hi) - lo
    counts = np.bincount(clipped, minlength=hi - lo + 1)
    expected = n_blocks * probs
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    return float(gammaincc((hi - lo) / 2.0, chi2 / 2.0))


def spectral_test(bits) -> float:
    """DFT peak-count test with the 95% threshold sqrt(n ln 20).

    The DC term is excluded from the sub-threshold count (the convention of
    the standard's worked examples); at certification lengths the one-bin
    difference is immaterial.
    """
    b = _as_bits(bits)
    n = b.size
    if n < 10:
        raise ValueError("spectral test needs at least 10 bits")
    x = 2.0 * b.astype(np.float64) - 1.0
    mags = np.abs(rfft(x))[1 : n // 2]
    threshold = math.sqrt(n * math.log(1.0 / 0.05))
    n1 = int((mags < threshold).sum())
    n0 = 0.95 * n / 2.0
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return float(erfc(abs(d) / math.sqrt(2.0)))


def _window_counts(b: np.ndarray, m: int) -> np.ndarray:
    """Occurrences of each m-bit pattern over all n cyclic windows."""
    if m == 0:
        return np.array([b.size], dtype=np.int64)
    ext = np.concatenate([b, b[: m - 1]])
    idx = np.zeros(b.size, dtype=np.int64)
    for j in range(m):
        idx = (idx << 1) | ext[j : j + b.size]
    return np.bincount(idx, minlength=1 << m)


def _psi_sq(b: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    c = _window_counts(b, m)
    return float((1 << m) / b.size * (c.astype(np.float64) ** 2).sum() - b.size)


def serial_test(bits, m: int) -> tuple[float, float]:
    """Overlapping m-window uniformity; returns the two del-psi^2 P-values."""
    b = _as_bits(bits)
    if m < 3:
        raise ValueError("serial test needs m >= 3")
    psi_m = _psi_sq(b, m)
    psi_m1 = _psi_sq(b, m - 1)
    psi_m2 = _psi_sq(b, m - 2)
    d1 = psi_m - psi_m1
    d2 = psi_m - 2.0 * psi_m1 + psi_m2
    p1 = float(gammaincc(2 ** (m - 2), d1 / 2.0))
    p2 = float(gammaincc(2 ** (m - 3), d2 / 2.0))
    return p1, p2


def approximate_entropy_test(bits, m: int) -> float:
    """ApEn(m) against ln 2: chi^2 = 2n (ln 2 - (phi_m - phi_{m+1}))."""
    b = _as_bits(bits)
    if m < 1:
        raise ValueError("approximate entropy needs m >= 1")
    n = b.size

    def phi(mm: int) -> float:
        c = _window_counts(b, mm).astype(np.float64)
        c = c[c > 0] / n
        return float((c * np.log(c)).sum())

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2.0) - apen)
    return float(gammaincc(2 ** (m - 1), chi2 / 2.0))


def _cusum_pvalue(z: int, n: int) -> float:
    if z == 0:
        return 1.0
    sqn = math.sqrt(n)
    total = 1.0
    k_lo = int(math.floor((-n / z + 1) / 4.0))
    k_hi = int(math.floor((n / z - 1) / 4.0))
    ks = np.arange(k_lo, k_hi + 1)
    total -= float((ndtr((4 * ks + 1) * z / sqn) - ndtr((4 * ks - 1) * z / sqn)).sum())
    k_lo2 = int(math.floor((-n / z - 3) / 4.0))
    ks2 = np.arange(k_lo2, k_hi + 1)
    total += float((ndtr((4 * ks2 + 3) * z / sqn) - ndtr((4 * ks2 + 1) * z / sqn)).sum())
    return min(max(total, 0.0), 1.0)


def cumulative_sums_test(bits) -> tuple[float, float]:
    """Maximum random-walk excursion, forward and reverse; two P-values."""
    b = _as_bits(bits)
    n = b.size
    if n < 10:
        raise ValueError("cumulative sums test needs at least 10 bits")
    x = 2 * b.astype(np.int64) - 1
    z_fwd = int(np.abs(np.cumsum(x)).max())
    z_rev = int(np.abs(np.cumsum(x[::-1])).max())
    return _cusum_pvalue(z_fwd, n), _cusum_pvalue(z_rev, n)


def default_params(trial_size: int) -> dict:
    """Per-test parameters recommended for a given trial size."""
    log2n = int(math.floor(math.log2(trial_size)))
    if trial_size < 2000:
        block = max(20, trial_size // 10)
    else:
        block = max(128, 1 << int(math.ceil(math.log2(trial_size / 99.0))))
    return {
        "block_frequency": {"block_size": block},
        "serial": {"m": max(3, min(16, log2n - 3))},
        "approximate_entropy": {"m": max(2, min(10, log2n - 6))},
    }


# test id -> (callable, names of emitted P-values); None suffix = single value
_TESTS = {
    "frequency": (frequency_test, None),
    "block_frequency": (block_frequency_test, None),
    "runs": (runs_test, None),
    "longest_run": (longest_run_test, None),
    "spectral": (spectral_test, None),
    "serial": (serial_test, ("1", "2")),
    "approximate_entropy": (approximate_entropy_test, None),
    "cumulative_sums": (cumulative_sums_test, ("forward", "reverse")),
}


@dataclass(frozen=True)
class TrialPlan:
    """How to cut a stream into trials and judge them."""

    trial_size: int = 750_000
    alpha: float = 0.01
    tests: tuple[str, ...] = CORE_TESTS

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        unknown = set(self.tests) - set(_TESTS)
        if unknown:
            raise ValueError(f"unknown tests: {sorted(unknown)}")
        floor = 100_000 if set(self.tests) >= set(CORE_TESTS) else 100
        if self.trial_size < floor:
            raise ValueError(f"trial_size must be >= {floor} for this test set")


@dataclass(frozen=True)
class TestOutcome:
    """Per-test pass statistics over all trials."""

    test: str
    pvalues: np.ndarray
    n: int
    n_s: int
    proportion: float
    ci_low: float
    ci_high: float
    pass_threshold: float
    passed: bool
    params: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "n": self.n,
            "n_s": self.n_s,
            "proportion": self.proportion,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "pass_threshold": self.pass_threshold,
            "pass": self.passed,
            "params": self.params,
        }


@dataclass(frozen=True)
class SuiteVerdict:
    per_test: dict
    random: bool


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF by Wichura's AS241 rational approximation.

    Accurate to well below 1e-9 over (0, 1); keeps the certification
    arithmetic free of special-function inversions.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0 else val


def _wilson(n_s: float, n: int, alpha: float) -> tuple[float, float]:
    z = normal_quantile(1.0 - alpha / 2.0)
    n_f = n - n_s
    denom = n + z * z
    center = (n_s + z * z / 2.0) / denom
    half = z / denom * math.sqrt(n_s * n_f / n + z * z / 4.0)
    return max(center - half, 0.0), min(center + half, 1.0)


def wilson_interval(n_s: int, n: int, alpha: float) -> tuple[float, float]:
    """Wilson score interval from integer success counts."""
    if n < 1 or not 0 <= n_s <= n:
        raise ValueError(f"invalid counts n_s={n_s}, n={n}")
    return _wilson(float(n_s), n, alpha)


def wilson_bounds_at_rate(rate: float, n: int, alpha: float) -> tuple[float, float]:
    """Wilson interval at a hypothesized success rate (the certification band)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    return _wilson(rate * n, n, alpha)


def trial_count(n_bits: int, trial_size: int) -> int:
    """Number of disjoint trials a stream provides."""
    return n_bits // trial_size


def run_test_suite(stream, plan: TrialPlan) -> list[TestOutcome]:
    """All planned tests over every disjoint trial of the stream.

    ``stream`` may be a BitStream or a plain 0/1 array. Deterministic for a
    fixed stream and plan; trials are independent and order-insensitive.
    """
    bits = stream.bits if hasattr(stream, "bits") else _as_bits(stream)
    n_trials = trial_count(bits.size, plan.trial_size)
    if n_trials < 1:
        raise ValueError(
            f"stream of {bits.size} bits is shorter than one {plan.trial_size}-bit trial"
        )
    params = default_params(plan.trial_size)
    collected: dict[str, list[float]] = {}
    bases: dict[str, str] = {}
    for t in range(n_trials):
        chunk = bits[t * plan.trial_size : (t + 1) * plan.trial_size]
        for name in plan.tests:
            fn, suffixes = _TESTS[name]
            res = fn(chunk, **params.get(name, {}))
            pairs = [(name, res)] if suffixes is None else [
                (f"{name}_{sfx}", p) for sfx, p in zip(suffixes, res)
            ]
            for out_name, p in pairs:
                collected.setdefault(out_name, []).append(p)
                bases[out_name] = name
    threshold = wilson_bounds_at_rate(1.0 - plan.alpha, n_trials, plan.alpha)[0]
    outcomes = []
    for name, pvals in collected.items():
        pvals = np.asarray(pvals)
        n_s = int((pvals >= plan.alpha).sum())
        prop = n_s / n_trials
        ci_low, ci_high = wilson_interval(n_s, n_trials, plan.alpha)
        outcomes.append(
            TestOutcome(
                test=name,
                pvalues=pvals,
                n=n_trials,
                n_s=n_s,
                proportion=prop,
                ci_low=ci_low,
                ci_high=ci_high,
                pass_threshold=threshold,
                passed=prop >= threshold,
                params=params.get(bases[name], {}),
            )
        )
    return outcomes


def verdict(outcomes: list[TestOutcome]) -> SuiteVerdict:
    """Random iff every test's proportion clears its certification bound."""
    per_test = {oc.test: oc.passed for oc in outcomes}
    return SuiteVerdict(per_test=per_test, random=all(per_test.values()))

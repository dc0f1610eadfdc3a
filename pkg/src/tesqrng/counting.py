"""Combine per-channel photon numbers into totals, distributions, parity.

Batch paths use integer codes for channel outcomes: values >= 0 are photon
numbers, negative values are the discard codes from the calibrate module.
Totals above the reporting cap are overflow: excluded from the pmf, the
parity statistic and bit generation alike (the kept mass is renormalized,
matching the truncated-theory convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .calibrate import DiscardReason

__all__ = [
    "CountRecord",
    "Distribution",
    "DISCARDED",
    "total_count",
    "combine_channels",
    "empirical_distribution",
    "parity_estimate",
    "pooled_chisquare",
    "two_sample_chisquare",
]

DISCARDED = -1  # marker in totals arrays


@dataclass(frozen=True)
class CountRecord:
    """Per-event outcome triple and its total (None when any channel discarded)."""

    event_id: int
    outcomes: tuple
    total: int | None

    @classmethod
    def from_outcomes(cls, event_id: int, outcomes) -> "CountRecord":
        return cls(event_id=event_id, outcomes=tuple(outcomes), total=total_count(outcomes))


@dataclass(frozen=True)
class Distribution:
    """Empirical pmf over 0..n_cap with one-sigma uncertainties."""

    pmf: np.ndarray
    errors: np.ndarray
    n_events: int
    n_discarded: int

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        errors = np.asarray(self.errors, dtype=float)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "errors", errors)
        if abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {pmf.sum()!r}, not 1")
        if np.any(errors < 0):
            raise ValueError("errors must be non-negative")

    @property
    def n_cap(self) -> int:
        return len(self.pmf) - 1

    def to_dict(self) -> dict:
        return {
            "pmf": self.pmf.tolist(),
            "errors": self.errors.tolist(),
            "n_events": self.n_events,
            "n_discarded": self.n_discarded,
        }


def total_count(outcomes) -> int | None:
    """Sum of channel outcomes, or None if any channel was discarded."""
    total = 0
    for oc in outcomes:
        if isinstance(oc, DiscardReason) or (isinstance(oc, (int, np.integer)) and oc < 0):
            return None
        total += int(oc)
    return total


def combine_channels(channel_outcomes: np.ndarray, n_cap: int = 100) -> np.ndarray:
    """Totals from an (events, channels) outcome-code matrix.

    Any negative channel code, or a total above ``n_cap``, yields DISCARDED.
    """
    oc = np.asarray(channel_outcomes)
    good = (oc >= 0).all(axis=1)
    totals = oc.sum(axis=1)
    totals[~good] = DISCARDED
    totals[(totals > n_cap)] = DISCARDED
    return totals


def empirical_distribution(
    totals: np.ndarray, n_cap: int = 100, channel_error: float = 0.0
) -> Distribution:
    """Distribution of resolved totals with sampling + misclassification errors.

    The error bars combine the binomial term sqrt(p(1-p)/N) in quadrature
    with a first-order misread perturbation channel_error * |p[m-1] - 2 p[m]
    + p[m+1]| / 2, where channel_error is the mean per-event probability of
    reading a wrong total (0 for perfect calibration).
    """
    totals = np.asarray(totals)
    kept = totals[totals >= 0]
    if kept.size == 0:
        raise ValueError("no resolved events")
    if kept.max() > n_cap:
        raise ValueError("resolved totals above n_cap; combine_channels should have discarded them")
    n = kept.size
    counts = np.bincount(kept, minlength=n_cap + 1).astype(float)
    pmf = counts / n
    sampling = np.sqrt(pmf * (1.0 - pmf) / n)
    if channel_error > 0:
        padded = np.concatenate([[pmf[0]], pmf, [0.0]])
        curv = np.abs(padded[:-2] - 2.0 * padded[1:-1] + padded[2:])
        mis = 0.5 * channel_error * curv
        errors = np.hypot(sampling, mis)
    else:
        errors = sampling
    return Distribution(pmf=pmf, errors=errors, n_events=n, n_discarded=int(totals.size - n))


def parity_estimate(totals: np.ndarray) -> tuple[float, float]:
    """((N_even - N_odd)/N, sqrt((1 - value^2)/N)) over resolved events."""
    totals = np.asarray(totals)
    kept = totals[totals >= 0]
    if kept.size == 0:
        raise ValueError("no resolved events")
    n = kept.size
    value = float((1.0 - 2.0 * (kept % 2)).sum() / n)
    std_error = float(np.sqrt(max(1.0 - value * value, 0.0) / n))
    return value, std_error


def pooled_chisquare(counts: np.ndarray, probs: np.ndarray, min_expected: float = 5.0):
    """Pearson GOF p-value with low-expectation bins pooled into neighbors.

    ``probs`` need not sum to 1; it is renormalized. Returns (chi2, dof, p).
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    probs = probs / probs.sum()
    n = counts.sum()
    expected = probs * n
    # pool left-to-right until each pooled bin has enough expectation
    pooled_c, pooled_e = [], []
    acc_c = acc_e = 0.0
    for c, e in zip(counts, expected):
        acc_c += c
        acc_e += e
        if acc_e >= min_expected:
            pooled_c.append(acc_c)
            pooled_e.append(acc_e)
            acc_c = acc_e = 0.0
    if acc_e > 0 and pooled_e:
        pooled_c[-1] += acc_c
        pooled_e[-1] += acc_e
    pooled_c = np.asarray(pooled_c)
    pooled_e = np.asarray(pooled_e)
    if len(pooled_c) < 2:
        raise ValueError("not enough data to pool into two bins")
    chi2 = float(((pooled_c - pooled_e) ** 2 / pooled_e).sum())
    dof = len(pooled_c) - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof))


def two_sample_chisquare(counts_a: np.ndarray, counts_b: np.ndarray, min_expected: float = 5.0):
    """Homogeneity test for two independent count vectors; returns (chi2, dof, p)."""
    a = np.asarray(counts_a, dtype=float)
    b = np.asarray(counts_b, dtype=float)
    if len(a) != len(b):
        raise ValueError("count vectors must align")
    tot = a + b
    keep = tot > 0
    a, b, tot = a[keep], b[keep], tot[keep]
    # pool adjacent cells until both expectations clear the floor
    na, nb = a.sum(), b.sum()
    pooled = []
    acc = np.zeros(3)
    for ai, bi, ti in zip(a, b, tot):
        acc += (ai, bi, ti)
        if acc[2] * na / (na + nb) >= min_expected and acc[2] * nb / (na + nb) >= min_expected:
            pooled.append(acc.copy())
            acc[:] = 0
    if acc[2] > 0 and pooled:
        pooled[-1] += acc
    table = np.array(pooled)
    if len(table) < 2:
        raise ValueError("not enough data to pool into two bins")
    chi2, p, dof, _ = stats.chi2_contingency(table[:, :2].T)
    return float(chi2), int(dof), float(p)

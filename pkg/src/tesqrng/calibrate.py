"""Photon-number calibration from pulse-area histograms.

A calibration is a sum-of-Gaussians decomposition of the area histogram:
one component per photon number, decision edges at the intersections of the
peak-normalized components, an overflow edge beyond which photon number is
unresolvable, and an optional post-selection window (in units of each
component's sigma) that trades yield for per-count confidence.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks
from scipy.special import erf, ndtr

__all__ = [
    "AreaHistogram",
    "GaussComponent",
    "Calibration",
    "DiscardReason",
    "FitError",
    "ResolvabilityError",
    "fit_mixture",
    "assign_numbers",
    "place_edges",
    "build_calibration",
    "assign",
    "assign_batch",
    "window_keep_fraction",
    "error_rates",
    "mean_error_rate",
]

SCHEMA_VERSION = 1


class FitError(RuntimeError):
    """Mixture fit did not converge; carries diagnostics."""


class ResolvabilityError(ValueError):
    """Adjacent components overlap too strongly to place an edge."""

    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


class DiscardReason(Enum):
    OVERFLOW = "overflow"
    OUTSIDE_WINDOW = "outside_window"


# integer codes used by the batch path; >= 0 means a resolved photon number
ASSIGNED = 0
CODE_OVERFLOW = -1
CODE_OUTSIDE_WINDOW = -2


@dataclass(frozen=True)
class AreaHistogram:
    """Binned pulse areas: ascending edges and per-bin counts."""

    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)
        if len(counts) != len(edges) - 1:
            raise ValueError("need len(counts) == len(bin_edges) - 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly ascending")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    @classmethod
    def from_areas(cls, areas: np.ndarray, bin_width: float | None = None) -> "AreaHistogram":
        """Histogram areas at a width fine enough to resolve narrow peaks (range/8000)."""
        areas = np.asarray(areas, dtype=float)
        if areas.size == 0:
            raise ValueError("no areas to histogram")
        lo, hi = areas.min(), areas.max()
        if bin_width is None:
            bin_width = max((hi - lo) / 8000.0, 1.0)
        edges = np.arange(lo - bin_width, hi + 2 * bin_width, bin_width)
        counts, _ = np.histogram(areas, bins=edges)
        return cls(bin_edges=edges, counts=counts)


@dataclass(frozen=True)
class GaussComponent:
    """One fitted peak: photon number n, center mu, width sigma, weight."""

    n: int
    mu: float
    sigma: float
    weight: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.weight < 0:
            raise ValueError(f"weight must be non-negative, got {self.weight}")


@dataclass(frozen=True)
class Calibration:
    """Ordered components plus decision edges and the overflow boundary."""

    components: tuple[GaussComponent, ...]
    edges: np.ndarray
    overflow_edge: float
    window_frac: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        edges = np.asarray(self.edges, dtype=float)
        object.__setattr__(self, "edges", edges)
        mus = np.array([c.mu for c in comps])
        if np.any(np.diff(mus) <= 0):
            raise ValueError("component means must be strictly increasing")
        if len(edges) != max(len(comps) - 1, 0):
            raise ValueError("need exactly one edge between consecutive components")
        for i, e in enumerate(edges):
            if not (mus[i] < e < mus[i + 1]):
                raise ValueError(f"edge {e} not inside ({mus[i]}, {mus[i + 1]})")
        if comps and self.overflow_edge <= mus[-1]:
            raise ValueError("overflow_edge must lie beyond the last component mean")
        if self.window_frac is not None and self.window_frac <= 0:
            raise ValueError("window_frac must be positive when set")

    @property
    def numbers(self) -> np.ndarray:
        return np.array([c.n for c in self.components])

    def with_window(self, window_frac: float | None) -> "Calibration":
        return Calibration(self.components, self.edges, self.overflow_edge, window_frac, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "components": [
                {"n": c.n, "mu": c.mu, "sigma": c.sigma, "weight": c.weight} for c in self.components
            ],
            "edges": self.edges.tolist(),
            "overflow_edge": self.overflow_edge,
            "window_frac": self.window_frac,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported calibration schema: {d.get('schema_version')!r}")
        comps = tuple(GaussComponent(**c) for c in d["components"])
        return cls(
            components=comps,
            edges=np.asarray(d["edges"], dtype=float),
            overflow_edge=float(d["overflow_edge"]),
            window_frac=d.get("window_frac"),
            meta=d.get("meta", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Calibration":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _mixture_counts(centers: np.ndarray, width: float, total: int, params: np.ndarray) -> np.ndarray:
    """Expected bin counts for a weighted Gaussian mixture (exact bin integrals)."""
    k = len(params) // 3
    mus, sigmas, weights = params[:k], params[k : 2 * k], params[2 * k :]
    hi = (centers[:, None] + width / 2 - mus[None, :]) / sigmas[None, :]
    lo = (centers[:, None] - width / 2 - mus[None, :]) / sigmas[None, :]
    return total * (ndtr(hi) - ndtr(lo)) @ weights


def fit_mixture(hist: AreaHistogram, k_max: int) -> list[GaussComponent]:
    """Decompose an area histogram into up to ``k_max`` Gaussian components.

    Three stages: local-maxima peak detection on a lightly smoothed
    histogram seeds the component locations; expectation-maximization on the
    binned data refines (mu, sigma, weight); a joint least-squares polish of
    the full curve finishes. Sigma estimates carry Sheppard's -h^2/12
    binning correction. Components come back ordered by mu and numbered
    0..K-1; use assign_numbers() to pin absolute photon numbers.
    """
    if k_max < 1 or k_max > 38:
        raise ValueError(f"k_max must lie in 1..38, got {k_max}")
    counts = hist.counts.astype(float)
    centers = hist.centers
    width = hist.bin_width
    total = hist.total
    if total == 0:
        raise FitError("empty histogram")

    # stage 1: peak seeding on a 5-bin boxcar smooth; the floor admits
    # clusters of a handful of events (sparsely populated photon numbers)
    smooth = np.convolve(counts, np.ones(5) / 5.0, mode="same")
    floor = max(0.6, 1e-5 * smooth.max())
    peaks, _ = find_peaks(smooth, height=floor, prominence=floor)
    if len(peaks) == 0:
        peaks = np.array([int(np.argmax(smooth))])
    if len(peaks) > k_max:
        order = np.argsort(smooth[peaks])[::-1][:k_max]
        peaks = np.sort(peaks[order])
    k = len(peaks)
    if k < min(3, k_max):
        warnings.warn(f"only {k} peak(s) detected; fitting a reduced mixture", stacklevel=2)

    mus = centers[peaks].astype(float)
    if k > 1:
        gaps = np.diff(mus)
        halfspan = np.concatenate([[gaps[0]], np.minimum(gaps[:-1], gaps[1:]), [gaps[-1]]]) / 2.0
    else:
        halfspan = np.array([(centers[-1] - centers[0]) / 2.0])
    sigmas = np.empty(k)
    weights = np.empty(k)
    for i in range(k):
        sel = np.abs(centers - mus[i]) <= halfspan[i]
        w = counts[sel]
        if w.sum() <= 0:
            sigmas[i] = width
            weights[i] = 1.0 / k
            continue
        m = np.average(centers[sel], weights=w)
        v = np.average((centers[sel] - m) ** 2, weights=w)
        sigmas[i] = max(np.sqrt(max(v - width**2 / 12.0, 0.0)), width / 4.0)
        weights[i] = w.sum() / total
    weights /= weights.sum()

    # stage 2: EM on the binned data
    prev_ll = -np.inf
    for _ in range(200):
        z = (centers[:, None] - mus[None, :]) / sigmas[None, :]
        dens = np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * sigmas[None, :]) * weights[None, :]
        norm = dens.sum(axis=1)
        ok = norm > 0
        ll = float((counts[ok] * np.log(norm[ok])).sum())
        resp = np.where(ok[:, None], dens / np.where(ok, norm, 1.0)[:, None], 0.0)
        wc = resp * counts[:, None]
        mass = wc.sum(axis=0)
        mass = np.maximum(mass, 1e-300)
        mus = (wc * centers[:, None]).sum(axis=0) / mass
        var = (wc * (centers[:, None] - mus[None, :]) ** 2).sum(axis=0) / mass
        sigmas = np.sqrt(np.maximum(var - width**2 / 12.0, (width / 4.0) ** 2))
        weights = mass / mass.sum()
        if abs(ll - prev_ll) < 1e-9 * max(total, 1):
            break
        prev_ll = ll
    else:
        raise FitError(f"EM did not converge in 200 iterations (last LL {prev_ll:.6g})")

    # stage 3: joint least-squares polish of the curve
    p0 = np.concatenate([mus, sigmas, weights])
    lo = np.concatenate([np.full(k, centers[0] - width), np.full(k, width / 10.0), np.zeros(k)])
    hi = np.concatenate([np.full(k, centers[-1] + width), np.full(k, centers[-1] - centers[0]), np.ones(k)])
    try:
        popt, _ = curve_fit(
            lambda x, *p: _mixture_counts(x, width, total, np.asarray(p)),
            centers,
            counts,
            p0=p0,
            bounds=(lo, hi),
            maxfev=2000,
        )
        mus, sigmas, weights = popt[:k], popt[k : 2 * k], popt[2 * k :]
    except RuntimeError:
        warnings.warn("least-squares polish did not converge; keeping EM estimates", stacklevel=2)

    order = np.argsort(mus)
    comps = [
        GaussComponent(n=i, mu=float(mus[j]), sigma=float(sigmas[j]), weight=float(weights[j]))
        for i, j in enumerate(order)
    ]
    if any(np.diff([c.mu for c in comps]) <= 0):
        raise FitError("fitted component means are not strictly increasing")
    return comps


def fit_quality(hist: AreaHistogram, components: Sequence[GaussComponent]) -> float:
    """Coefficient of determination of the fitted curve on the histogram."""
    counts = hist.counts.astype(float)
    params = np.concatenate(
        [[c.mu for c in components], [c.sigma for c in components], [c.weight for c in components]]
    )
    model = _mixture_counts(hist.centers, hist.bin_width, hist.total, params)
    ss_res = ((counts - model) ** 2).sum()
    ss_tot = ((counts - counts.mean()) ** 2).sum()
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def assign_numbers(
    components: Sequence[GaussComponent], mu_model: Sequence[float]
) -> list[GaussComponent]:
    """Renumber components by nearest match of fitted means to a model curve.

    ``mu_model[n]`` is the predicted mean area of an n-photon pulse.
    Components beyond the model's reach (past the last predicted mean by
    more than half the final spacing) belong to the overflow region and are
    dropped with a warning. Raises if two kept components land on the same
    model number.
    """
    mu_model = np.asarray(mu_model, dtype=float)
    limit = mu_model[-1] + 0.5 * (mu_model[-1] - mu_model[-2]) if len(mu_model) > 1 else np.inf
    taken = set()
    out = []
    dropped = 0
    for c in components:
        if c.mu > limit:
            dropped += 1
            continue
        n = int(np.argmin(np.abs(mu_model - c.mu)))
        if n in taken:
            raise ValueError(f"two components both match model photon number {n}")
        taken.add(n)
        out.append(GaussComponent(n=n, mu=c.mu, sigma=c.sigma, weight=c.weight))
    if dropped:
        warnings.warn(f"dropped {dropped} component(s) beyond the model range", stacklevel=2)
    return out


def _pair_edge(c1: GaussComponent, c2: GaussComponent, normalization: str) -> float:
    if normalization == "peak":
        # equal peak-normalized density: |x-mu1|/s1 = |x-mu2|/s2 inside (mu1, mu2)
        return (c1.mu * c2.sigma + c2.mu * c1.sigma) / (c1.sigma + c2.sigma)
    if normalization == "area":
        # equal weighted density; reduces to the peak rule for equal sigmas
        a = 1.0 / c1.sigma**2 - 1.0 / c2.sigma**2
        b = -2.0 * (c1.mu / c1.sigma**2 - c2.mu / c2.sigma**2)
        k = (
            c1.mu**2 / c1.sigma**2
            - c2.mu**2 / c2.sigma**2
            + 2.0 * np.log(c2.sigma * c1.weight / (c1.sigma * c2.weight))
        )
        if abs(a) < 1e-300:
            return -k / b
        roots = np.roots([a, b, k])
        roots = roots[np.isreal(roots)].real
        inside = roots[(roots > c1.mu) & (roots < c2.mu)]
        if len(inside) == 0:
            raise ResolvabilityError(0, f"no crossing between mu={c1.mu} and mu={c2.mu}")
        return float(inside[0])
    raise ValueError(f"unknown normalization {normalization!r}")


def place_edges(
    components: Sequence[GaussComponent], normalization: str = "peak"
) -> np.ndarray:
    """Decision edges at intersections of normalized adjacent components.

    Peak normalization (unit amplitude) is the default; for equal sigmas the
    edge is the midpoint. Raises ResolvabilityError at the first pair closer
    than 0.5*(sigma1+sigma2).
    """
    mus = [c.mu for c in components]
    if any(np.diff(mus) <= 0):
        raise ValueError("component means must be strictly increasing")
    edges = []
    for i in range(len(components) - 1):
        c1, c2 = components[i], components[i + 1]
        if c2.mu - c1.mu < 0.5 * (c1.sigma + c2.sigma):
            raise ResolvabilityError(
                i, f"components {c1.n} and {c2.n} overlap beyond resolvability"
            )
        edges.append(_pair_edge(c1, c2, normalization))
    return np.asarray(edges)


def build_calibration(
    components: Sequence[GaussComponent],
    window_frac: float | None = None,
    overlap_threshold: float = 0.25,
    normalization: str = "peak",
    meta: dict | None = None,
) -> Calibration:
    """Assemble a Calibration, truncating at the resolvability limit.

    Walking up in area, the first pair edge whose peak-normalized overlap
    exceeds ``overlap_threshold`` becomes the overflow edge and later
    components are dropped. If every pair resolves, the overflow edge is the
    last mean plus half the last spacing (the extrapolated next edge).
    """
    comps = sorted(components, key=lambda c: c.mu)
    if not comps:
        raise ValueError("need at least one component")
    kept = [comps[0]]
    edges: list[float] = []
    overflow = None
    for nxt in comps[1:]:
        prev = kept[-1]
        if nxt.mu - prev.mu < 0.5 * (prev.sigma + nxt.sigma):
            # no usable crossing at all; resolvability ends where the last
            # kept component's normalized density falls to the threshold
            overflow = prev.mu + prev.sigma * np.sqrt(2.0 * np.log(1.0 / overlap_threshold))
            break
        e = _pair_edge(prev, nxt, normalization)
        ovl = max(
            np.exp(-0.5 * ((e - prev.mu) / prev.sigma) ** 2),
            np.exp(-0.5 * ((e - nxt.mu) / nxt.sigma) ** 2),
        )
        if ovl > overlap_threshold:
            overflow = float(e)
            break
        kept.append(nxt)
        edges.append(float(e))
    if overflow is None:
        if len(kept) >= 2:
            overflow = kept[-1].mu + 0.5 * (kept[-1].mu - kept[-2].mu)
        else:
            overflow = kept[0].mu + 4.0 * kept[0].sigma
    return Calibration(
        components=tuple(kept),
        edges=np.asarray(edges),
        overflow_edge=float(overflow),
        window_frac=window_frac,
        meta=meta or {},
    )


def assign(area: float, cal: Calibration):
    """Photon number of the bin containing ``area``, or a DiscardReason.

    Ties on an edge go to the lower bin. Total function: every float maps
    to a number or a discard.
    """
    n, code = assign_batch(np.array([area]), cal)
    if code[0] == CODE_OVERFLOW:
        return DiscardReason.OVERFLOW
    if code[0] == CODE_OUTSIDE_WINDOW:
        return DiscardReason.OUTSIDE_WINDOW
    return int(n[0])


def assign_batch(areas: np.ndarray, cal: Calibration) -> tuple[np.ndarray, np.ndarray]:
    """Vector assign: returns (photon numbers, codes).

    codes: 0 resolved, CODE_OVERFLOW, CODE_OUTSIDE_WINDOW. Photon numbers
    are valid only where code == 0.
    """
    areas = np.asarray(areas, dtype=float)
    idx = np.searchsorted(cal.edges, areas, side="left")
    numbers = cal.numbers[idx]
    codes = np.zeros(len(areas), dtype=np.int8)
    codes[areas >= cal.overflow_edge] = CODE_OVERFLOW
    if cal.window_frac is not None:
        mus = np.array([c.mu for c in cal.components])[idx]
        sigmas = np.array([c.sigma for c in cal.components])[idx]
        outside = np.abs(areas - mus) > cal.window_frac * sigmas
        codes[(codes == 0) & outside] = CODE_OUTSIDE_WINDOW
    return numbers, codes


def window_keep_fraction(window_frac: float) -> float:
    """Fraction of events kept by a +/- window_frac * sigma window: erf(w/sqrt(2))."""
    if not window_frac > 0:
        raise ValueError(f"window_frac must be positive, got {window_frac}")
    return float(erf(window_frac / np.sqrt(2.0)))


def _interval_mass(mu: float, sigma: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    return float(ndtr((hi - mu) / sigma) - ndtr((lo - mu) / sigma))


def error_rates(cal: Calibration) -> dict[int, float]:
    """P(assigned != n | true n) per calibrated n, from Gaussian tail integrals.

    With a window set, only kept events count: the error is the kept-and-
    wrong mass over the kept mass, where an event is kept when it falls in
    the window of whatever bin it landed in.
    """
    comps = cal.components
    edges = cal.edges
    out = {}
    for i, c in enumerate(comps):
        lo_i = -np.inf if i == 0 else edges[i - 1]
        hi_i = cal.overflow_edge if i == len(comps) - 1 else edges[i]
        if cal.window_frac is None:
            kept = 1.0
            right = _interval_mass(c.mu, c.sigma, lo_i, hi_i)
        else:
            kept = 0.0
            right = 0.0
            for j, cj in enumerate(comps):
                lo_j = -np.inf if j == 0 else edges[j - 1]
                hi_j = cal.overflow_edge if j == len(comps) - 1 else edges[j]
                w_lo = cj.mu - cal.window_frac * cj.sigma
                w_hi = cj.mu + cal.window_frac * cj.sigma
                mass = _interval_mass(c.mu, c.sigma, max(lo_j, w_lo), min(hi_j, w_hi))
                kept += mass
                if j == i:
                    right = mass
        out[c.n] = 1.0 - right / kept if kept > 0 else 1.0
    return out


def mean_error_rate(cal: Calibration, occupancy: np.ndarray | None = None) -> float:
    """Occupancy-weighted mean of error_rates; uniform weights by default."""
    errs = error_rates(cal)
    ns = sorted(errs)
    if occupancy is None:
        return float(np.mean([errs[n] for n in ns]))
    w = np.array([occupancy[n] if n < len(occupancy) else 0.0 for n in ns], dtype=float)
    if w.sum() == 0:
        return float(np.mean([errs[n] for n in ns]))
    return float(np.average([errs[n] for n in ns], weights=w))

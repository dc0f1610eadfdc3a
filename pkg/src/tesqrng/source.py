"""Pulsed coherent source, two-beamsplitter three-way split, event sampling.

Sampling is counter-based (Philox): every event owns one 4-slot counter
block of the uniform stream (slots 0..2 feed per-channel inversion, slot 3
feeds the optional phase draw), so any shard [a, b) of the event range
reproduces exactly the counts a serial run would produce.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .theory import poisson_pmf_vector, summation_cutoff

__all__ = [
    "SplitterNetwork",
    "ChannelModel",
    "EventSample",
    "split_coherent",
    "effective_nbar",
    "sample_counts",
    "sample_totals",
    "sample_events",
]

_NORM_TOL = 1e-12

# stream tags for deriving independent Philox keys from one run seed
STREAM_COUNTS = 1
STREAM_NOISE = 2


def philox_key(seed: int, stream: int) -> np.ndarray:
    """Derive a 128-bit Philox key for one named stream of a run."""
    return SeedSequence((int(seed), int(stream))).generate_state(2, np.uint64)


@dataclass(frozen=True)
class SplitterNetwork:
    """Amplitude coefficients (r_k, t_k) of the two splitters, r^2 + t^2 = 1."""

    r1: float
    t1: float
    r2: float
    t2: float

    def __post_init__(self):
        for r, t, k in ((self.r1, self.t1, 1), (self.r2, self.t2, 2)):
            if not (0.0 <= r <= 1.0 and 0.0 <= t <= 1.0):
                raise ValueError(f"splitter {k} coefficients must lie in [0, 1]")
            if abs(r * r + t * t - 1.0) > _NORM_TOL:
                raise ValueError(f"splitter {k} not normalized: r^2 + t^2 = {r * r + t * t!r}")

    @classmethod
    def from_intensity(cls, refl1: float, refl2: float) -> "SplitterNetwork":
        """Build from intensity reflectivities R1, R2 (r = sqrt(R), t = sqrt(1-R))."""
        if not (0.0 <= refl1 <= 1.0 and 0.0 <= refl2 <= 1.0):
            raise ValueError("reflectivities must lie in [0, 1]")
        return cls(
            r1=float(np.sqrt(refl1)),
            t1=float(np.sqrt(1.0 - refl1)),
            r2=float(np.sqrt(refl2)),
            t2=float(np.sqrt(1.0 - refl2)),
        )

    @classmethod
    def balanced(cls) -> "SplitterNetwork":
        """Even three-way split: R1 = 1/3 then R2 = 1/2."""
        return cls.from_intensity(1.0 / 3.0, 0.5)

    @property
    def fractions(self) -> tuple[float, float, float]:
        """Intensity fractions reaching detectors (a, b, c); sum to 1."""
        return (
            self.t1**2 * self.t2**2,
            self.r1**2,
            self.t1**2 * self.r2**2,
        )


@dataclass(frozen=True)
class ChannelModel:
    """One detector path: quantum efficiency and effective mean |beta|^2."""

    label: str
    efficiency: float
    mean: float

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if self.mean < 0:
            raise ValueError(f"channel mean must be non-negative, got {self.mean}")


@dataclass(frozen=True)
class EventSample:
    event_id: int
    counts: tuple[int, ...]


def split_coherent(
    nbar: float, net: SplitterNetwork, etas: Sequence[float]
) -> tuple[ChannelModel, ChannelModel, ChannelModel]:
    """Effective channels for |alpha> through the splitter tree and losses.

    Means are (eta_a t1^2 t2^2, eta_b r1^2, eta_c t1^2 r2^2) * nbar; with
    unit efficiencies they sum to nbar.
    """
    if nbar < 0:
        raise ValueError(f"nbar must be non-negative, got {nbar}")
    if len(etas) != 3:
        raise ValueError("need one efficiency per channel (a, b, c)")
    fracs = net.fractions
    labels = ("a", "b", "c")
    return tuple(
        ChannelModel(label=lab, efficiency=float(eta), mean=float(eta) * frac * nbar)
        for lab, eta, frac in zip(labels, etas, fracs)
    )


def effective_nbar(channels: Sequence[ChannelModel]) -> float:
    """Sum of channel means; the summed-count distribution is Poisson with this mean."""
    return float(sum(ch.mean for ch in channels))


def _inversion_cdf(mean: float) -> np.ndarray:
    cdf = np.cumsum(poisson_pmf_vector(mean, summation_cutoff(mean)))
    cdf[-1] = 1.0  # absorb the <1e-12 tail into the last resolvable bin
    return cdf


def sample_counts(
    means: Sequence[float], count: int, seed: int, start: int = 0
) -> np.ndarray:
    """Independent Poisson counts, shape (count, len(means)), events start..start+count.

    Counts are produced by CDF inversion of one uniform per event-channel;
    event e draws from uniform-stream slots 4e..4e+2, so results are
    independent of how the event range is sharded.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    n_ch = len(means)
    if n_ch > 4:
        raise ValueError("at most 4 channels per event block")
    out = np.empty((count, n_ch), dtype=np.int64)
    if count == 0:
        return out
    gen = Generator(Philox(key=philox_key(seed, STREAM_COUNTS)))
    gen.bit_generator.advance(start)  # one counter step = one 4-slot block
    u = gen.random(4 * count).reshape(count, 4)
    for j, mean in enumerate(means):
        if mean < 0:
            raise ValueError(f"channel mean must be non-negative, got {mean}")
        if mean == 0:
            out[:, j] = 0
        else:
            out[:, j] = np.searchsorted(_inversion_cdf(mean), u[:, j], side="right")
    return out


def sample_totals(nbar: float, count: int, seed: int, start: int = 0) -> np.ndarray:
    """Poisson(nbar) totals, one per event.

    Distribution-identical to summing three split channels (the discrete
    convolution of the per-channel Poissonians); used as the fast counts-only
    path.
    """
    return sample_counts([nbar], count, seed, start)[:, 0]


def sample_events(
    channels: Sequence[ChannelModel], count: int, seed: int, start: int = 0
) -> Iterator[EventSample]:
    """Stream of per-event channel counts for the given channel models."""
    counts = sample_counts([ch.mean for ch in channels], count, seed, start)
    for i in range(count):
        yield EventSample(event_id=start + i, counts=tuple(int(c) for c in counts[i]))

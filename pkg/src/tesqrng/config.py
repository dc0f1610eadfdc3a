"""Run configuration: one validated tree covering every pipeline stage.

Configs are plain JSON; ``RunConfig.default()`` dumps the full schema with
defaults. The seed is mandatory for simulation runs and, together with the
config hash, stamps every artifact for provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .detector import DEFAULT_THR_HIGH, DEFAULT_THR_LOW, WaveformParams
from .nist import CORE_TESTS

__all__ = [
    "ConfigError",
    "SourceConfig",
    "DaqConfig",
    "CalibrateConfig",
    "QrngConfig",
    "NistConfig",
    "RunConfig",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SourceConfig:
    nbar: float = 57.0
    refl1: float = 1.0 / 3.0
    refl2: float = 0.5
    efficiencies: tuple[float, float, float] = (1.0, 1.0, 1.0)
    phase_jitter: bool = False
    mode: str = "waveform"  # "waveform" = full chain, "counts" = analytic totals

    def __post_init__(self):
        if self.nbar < 0:
            raise ConfigError("source.nbar must be non-negative")
        if self.mode not in ("waveform", "counts"):
            raise ConfigError(f"unknown source.mode {self.mode!r}")
        if len(self.efficiencies) != 3 or not all(0 <= e <= 1 for e in self.efficiencies):
            raise ConfigError("source.efficiencies must be three values in [0, 1]")
        for r in (self.refl1, self.refl2):
            if not 0 <= r <= 1:
                raise ConfigError("splitter reflectivities must lie in [0, 1]")


@dataclass(frozen=True)
class DaqConfig:
    thr_high: float = DEFAULT_THR_HIGH
    thr_low: float = DEFAULT_THR_LOW

    def __post_init__(self):
        if self.thr_low > self.thr_high:
            raise ConfigError("daq.thr_low must not exceed daq.thr_high")


@dataclass(frozen=True)
class CalibrateConfig:
    mode: str = "fit"  # "fit" = histogram mixture fit, "model" = analytic waveform model
    k_max: int = 38
    window_frac: float | None = None
    overlap_threshold: float = 0.25
    normalization: str = "peak"

    def __post_init__(self):
        if self.mode not in ("fit", "model"):
            raise ConfigError(f"unknown calibrate.mode {self.mode!r}")
        if not 1 <= self.k_max <= 38:
            raise ConfigError("calibrate.k_max must lie in 1..38")
        if self.window_frac is not None and self.window_frac <= 0:
            raise ConfigError("calibrate.window_frac must be positive when set")
        if self.normalization not in ("peak", "area"):
            raise ConfigError("calibrate.normalization must be 'peak' or 'area'")


@dataclass(frozen=True)
class QrngConfig:
    d: int = 3

    def __post_init__(self):
        if not 1 <= self.d <= 5:
            raise ConfigError("qrng.d must lie in 1..5")


@dataclass(frozen=True)
class NistConfig:
    trial_size: int = 750_000
    alpha: float = 0.01
    tests: tuple[str, ...] = CORE_TESTS

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("nist.alpha must lie in (0, 1)")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    events: int
    source: SourceConfig = field(default_factory=SourceConfig)
    detector: WaveformParams = field(default_factory=WaveformParams)
    daq: DaqConfig = field(default_factory=DaqConfig)
    calibrate: CalibrateConfig = field(default_factory=CalibrateConfig)
    qrng: QrngConfig = field(default_factory=QrngConfig)
    nist: NistConfig = field(default_factory=NistConfig)
    n_cap: int = 100
    save_waveforms: int = 0
    binary_events: bool = False

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("seed is mandatory for simulation runs")
        if self.events < 0:
            raise ConfigError("events must be non-negative")
        if self.n_cap < 1:
            raise ConfigError("n_cap must be positive")

    @classmethod
    def default(cls) -> "RunConfig":
        return cls(seed=1, events=100_000)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        try:
            for key, sub in (
                ("source", SourceConfig),
                ("detector", WaveformParams),
                ("daq", DaqConfig),
                ("calibrate", CalibrateConfig),
                ("qrng", QrngConfig),
                ("nist", NistConfig),
            ):
                if key in d and isinstance(d[key], dict):
                    sub_d = dict(d[key])
                    for f_name in ("efficiencies", "tests"):
                        if f_name in sub_d and isinstance(sub_d[f_name], list):
                            sub_d[f_name] = tuple(sub_d[f_name])
                    d[key] = sub(**sub_d)
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err)) from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        """Provenance hash over the canonical JSON form."""
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

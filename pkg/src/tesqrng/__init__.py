"""tesqrng: simulated multiplexed photon-number-resolving detection and
parity-based quantum random number generation, with closed-form theory
oracles and a randomness certification harness.
"""

from . import calibrate, counting, detector, figures, io, nist, qrng, source, theory
from .config import RunConfig
from .pipeline import run_pipeline

__all__ = [
    "calibrate",
    "counting",
    "detector",
    "figures",
    "io",
    "nist",
    "qrng",
    "source",
    "theory",
    "RunConfig",
    "run_pipeline",
]

__version__ = "0.1.0"

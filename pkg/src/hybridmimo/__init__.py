"""Hybrid analog/digital MIMO transceiver design and link-level
simulation.

The package splits into a numerical substrate (:mod:`hybridmimo.linalg`),
channel generators (:mod:`hybridmimo.channel`), the unified MSE-matrix
transceiver framework (:mod:`hybridmimo.core`), constant-modulus analog
designers (:mod:`hybridmimo.analog`), reference designs
(:mod:`hybridmimo.baselines`), signaling blocks
(:mod:`hybridmimo.signaling`) and the Monte-Carlo harness
(:mod:`hybridmimo.simulate`). The ``hybridmimo`` console command fronts
the harness.
"""

__version__ = "0.1.0"

from .channel import ChannelRealization, MmWaveParams, gen_mmwave, gen_rayleigh, noise_covariance
from .core import HybridTransceiver, Objective, complete_transceiver
from .linalg import NumericalError, gmd, phase_projection, svd_ordered, waterfill
from .signaling import ModulationScheme
from .simulate import SweepConfig, run_ber_sweep, run_se_sweep, spectral_efficiency

__all__ = [
    "__version__",
    "ChannelRealization",
    "MmWaveParams",
    "gen_mmwave",
    "gen_rayleigh",
    "noise_covariance",
    "HybridTransceiver",
    "Objective",
    "complete_transceiver",
    "NumericalError",
    "gmd",
    "phase_projection",
    "svd_ordered",
    "waterfill",
    "ModulationScheme",
    "SweepConfig",
    "run_ber_sweep",
    "run_se_sweep",
    "spectral_efficiency",
]

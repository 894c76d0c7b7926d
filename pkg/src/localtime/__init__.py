"""Dynamical maps generated by an uncertain final instant of evolution.

The closed-system map, its Markovianity diagnostics, energy coarse graining,
open-system reduced dynamics under pure decoherence and the state-domain
classifier. Hot loops run in a compiled extension when it is available
(see :mod:`localtime.kernels`).
"""

__version__ = "0.1.0"

from .spectra import SpectralDecomposition, from_diagonal, from_hermitian, oscillator_modes, spin_ensemble
from .states import DensityMatrix, InvalidStateError
from .ltsmap import BlockCoefficientMap, LocalTimeParams, apply, compose, exact_map
from .markov import is_cp, markovianity_verdict
from .coarse import CoarseGraining, CoarseGrainingError, approx_map, build_coarse_graining, cp_scan
from .opensys import PureDecoherenceInteraction, reduced_exact_map, steady_state
from .classify import DomainReport, classify_state

__all__ = [
    "SpectralDecomposition", "from_diagonal", "from_hermitian", "oscillator_modes",
    "spin_ensemble", "DensityMatrix", "InvalidStateError", "BlockCoefficientMap",
    "LocalTimeParams", "apply", "compose", "exact_map", "is_cp", "markovianity_verdict",
    "CoarseGraining", "CoarseGrainingError", "approx_map", "build_coarse_graining", "cp_scan",
    "PureDecoherenceInteraction", "reduced_exact_map", "steady_state", "DomainReport",
    "classify_state",
]

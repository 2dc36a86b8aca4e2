"""Two identical bosons with contact interaction in a spherical shell trap.

Exact coupled-channel spectra, a hyperspherical adiabatic model and
fidelity-based detection of confinement-induced avoided crossings.
Oscillator units throughout (energies in hbar*omega, lengths in a_ho).
"""
__version__ = "0.1.0"

from .busch import busch_lhs, solve_busch_roots, spectrum_r0_zero
from .coupled import ExactSolver, SpectrumResult, multipole_decompose, residual_potential
from .hyperspherical import (adiabatic_curves, adiabatic_spectrum, label_exact_states,
                             solve_hyperangular, solve_hyperradial, w_potential)
from .model import Channel, ConfigError, ModelParams, Truncation, enumerate_channels, validate
from .resonance import ac_map, characterize_acs, detect_acs, fidelity_scan

__all__ = [
    "busch_lhs", "solve_busch_roots", "spectrum_r0_zero", "ExactSolver", "SpectrumResult",
    "multipole_decompose", "residual_potential", "adiabatic_curves", "adiabatic_spectrum",
    "label_exact_states", "solve_hyperangular", "solve_hyperradial", "w_potential", "Channel",
    "ConfigError", "ModelParams", "Truncation", "enumerate_channels", "validate", "ac_map",
    "characterize_acs", "detect_acs", "fidelity_scan",
]

"""Decay-rate estimation and cell-size convergence studies.

`convergence` depends on the relax package; import it from its module.
"""

from .decay import DecayFit, ShellStats, decay_fit, decay_fit_models, shell_envelope

__all__ = ["DecayFit", "ShellStats", "decay_fit", "decay_fit_models", "shell_envelope"]

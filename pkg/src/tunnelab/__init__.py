"""High-precision laboratory for apparently superluminal wave-packet transmission.

Core layers:

- :mod:`tunnelab.numerics` -- precision contexts, extrapolation weights,
  Gauss-Legendre quadrature.
- :mod:`tunnelab.pulses` -- Gaussian pulse algebra, free evolution, spectra,
  rear cutting, peak/fidelity diagnostics.
- :mod:`tunnelab.spin_advance` -- the pre/post-selected spin device:
  interference weights, superoscillatory transmission amplitude, pulse
  advancement.
- :mod:`tunnelab.barrier` -- rectangular-barrier tunnelling: exact amplitude,
  causal kernel, dual-route transmission, Hartman scan.
- :mod:`tunnelab.experiments` -- batch scenario runners emitting CSV tables,
  gnuplot scripts, and reproducible run manifests.
"""

from .errors import ConfigError, ConvergenceError, GridError, PrecisionError, TunnelabError
from .numerics import PrecisionContext, make_context, required_digits

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "GridError",
    "PrecisionError",
    "TunnelabError",
    "PrecisionContext",
    "make_context",
    "required_digits",
]

__version__ = "0.1.0"

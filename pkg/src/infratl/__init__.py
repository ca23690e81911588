"""infratl: infrasound transmission-loss modeling at desk scale.

Synthetic range-dependent atmospheric slices, a wide-angle split-step Pade
parabolic-equation solver for ground-level transmission loss out to 4000 km,
a from-scratch convolutional surrogate mapping (slice, frequency) to the
400-point TL curve, and evaluation/attenuation-map tooling.
"""

__version__ = "0.1.0"

from . import atmosphere, container, dataset, evaluation, neuralnet, pe_solver

__all__ = ["atmosphere", "container", "dataset", "evaluation", "neuralnet",
           "pe_solver", "__version__"]

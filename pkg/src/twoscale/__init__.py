"""twoscale: contraction-based error bounds for two-time-scale systems.

Modules
-------
specnorm    vector norms, log-norms, induced cross-norms, Perron weights
sysmodel    systems, disturbances, quasi-steady state, derived systems, constants
integrator  adaptive Dormand-Prince integration and exact LTI propagation
bounds      thresholds, envelopes and the bound checker
ofo         online feedback optimisation closed loops
lti         linear block systems: envelopes, gain matrix, certificates
scenarios   scenario files, presets and the runner used by the CLI
"""

__version__ = "0.1.0"

from .errors import NumericalError, ThresholdError, TwoScaleError, ValidationError  # noqa: E402

__all__ = ["__version__", "NumericalError", "ThresholdError", "TwoScaleError", "ValidationError"]

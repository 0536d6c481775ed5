"""Change-point estimation from indirect (convolution) observations.

Observations follow ``dY = (Kf)(x) dx + eps dW(x)``.  The jump of f is located
as the zero crossing of a deconvolved, smoothed second derivative.
"""

from .estimator import BandwidthConfig, ChangePointEstimator, EstimateReport, bandwidth, estimate_changepoint
from .kernels import Kernel, gamma_kernel, green_kernel, kernel_from_spec
from .observation import ObservationPath, load_path, save_path, simulate_path
from .probe import ProbeCurve, probe_estimate, probe_exact
from .smoother import Smoother, build_smoother
from .spectral import DEFAULT_GRID, Grid, SampledSignal, make_grid
from .testbed import ChangePointFunction, ClassSpec, make_hard_function, make_jump_function

__all__ = [
    "BandwidthConfig", "ChangePointEstimator", "EstimateReport", "bandwidth", "estimate_changepoint",
    "Kernel", "gamma_kernel", "green_kernel", "kernel_from_spec",
    "ObservationPath", "load_path", "save_path", "simulate_path",
    "ProbeCurve", "probe_estimate", "probe_exact",
    "Smoother", "build_smoother",
    "DEFAULT_GRID", "Grid", "SampledSignal", "make_grid",
    "ChangePointFunction", "ClassSpec", "make_hard_function", "make_jump_function",
]

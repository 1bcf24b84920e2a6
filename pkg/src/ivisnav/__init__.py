"""Rate estimation from ToF phase differences: a double-precision reference and a bit-exact fixed-point core model."""

from .estimator import EstimationProblem, RateEstimate, SensorConstants, wls_solve
from .fixed_point import Q15_16, QFormat
from .report import percent_error, run_comparison
from .scenario import Scenario

__all__ = ["EstimationProblem", "RateEstimate", "SensorConstants", "wls_solve",
           "Q15_16", "QFormat", "percent_error", "run_comparison", "Scenario"]

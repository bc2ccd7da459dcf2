"""Lion-K and Muon matrix optimizers with Lyapunov convergence diagnostics."""

from .convex_maps import INF, ConvexMap, make_map
from .diagnostics import StepRecord, kkt_certificate, kkt_score, lyapunov_vb
from .errors import LionKError
from .optimizer import (Constant, Decaying, GradientOracle, InverseSqrt, LionKConfig,
                        OptimizerState, run, step, step_explicit)
from .problems import MatrixQuadratic, toy_quadratic, random_quadratic

__all__ = [
    "INF", "ConvexMap", "make_map", "StepRecord", "kkt_certificate", "kkt_score",
    "lyapunov_vb", "LionKError", "Constant", "Decaying", "GradientOracle", "InverseSqrt",
    "LionKConfig", "OptimizerState", "run", "step", "step_explicit", "MatrixQuadratic",
    "toy_quadratic", "random_quadratic",
]

__version__ = "0.1.0"

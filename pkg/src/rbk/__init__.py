"""Kinetics engine for the discrete cluster-eating (RBK) coagulation system."""

__version__ = "0.1.0"

from .kernel import (HypothesisClass, KernelSpec, classify_hypothesis, constant,
                     eval_kernel, separable_plus_bounded, separable_plus_constant,
                     separable_power, table)
from .state import (ConfigurationError, InitialData, MomentVector, StateVector,
                    explicit, geometric, heavy_tail, init_state, moment, monodisperse)
from .rhs import correlate, rhs_fast, rhs_naive
from .integrate import IntegratorConfig, StiffnessError, TimeSeries, integrate

__all__ = [
    "HypothesisClass", "KernelSpec", "classify_hypothesis", "constant", "eval_kernel",
    "separable_plus_bounded", "separable_plus_constant", "separable_power", "table",
    "ConfigurationError", "InitialData", "MomentVector", "StateVector", "explicit",
    "geometric", "heavy_tail", "init_state", "moment", "monodisperse",
    "correlate", "rhs_fast", "rhs_naive",
    "IntegratorConfig", "StiffnessError", "TimeSeries", "integrate",
]

"""Parameter registry, optimizer and gradient oracle."""

from .adam import AdamState, adam_step, exponential_lr
from .gradcheck import CoordinateCheck, GradCheckReport, finite_difference_check
from .params import Parameter, ParamStore

__all__ = [
    "AdamState",
    "CoordinateCheck",
    "GradCheckReport",
    "ParamStore",
    "Parameter",
    "adam_step",
    "exponential_lr",
    "finite_difference_check",
]

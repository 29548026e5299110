from .gradcheck import grad_check, grad_check_fn
from .ops import PRIMITIVES, forward_eval
from .tensor import Function, Tape, Tensor, backward, is_grad_enabled, no_grad

__all__ = [
    "PRIMITIVES",
    "Function",
    "Tape",
    "Tensor",
    "backward",
    "forward_eval",
    "grad_check",
    "grad_check_fn",
    "is_grad_enabled",
    "no_grad",
]

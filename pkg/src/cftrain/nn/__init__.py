from .autodiff import Var, gradient, variable
from .model import (
    MlpModel,
    class_energy,
    cross_entropy,
    crossentropy_logits,
    energy,
    forward,
    grad_input,
    grad_params,
    predict,
    softmax,
)
from .optim import SGD, Adam

__all__ = [
    "Adam",
    "MlpModel",
    "SGD",
    "Var",
    "class_energy",
    "cross_entropy",
    "crossentropy_logits",
    "energy",
    "forward",
    "grad_input",
    "grad_params",
    "gradient",
    "predict",
    "softmax",
    "variable",
]

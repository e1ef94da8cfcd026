"""Minimal CNN stack on numpy arrays: NHWC layers, per-connection softmax
heads, reverse-mode gradients, Adam, and finite-difference checking."""

from .layers import Conv2d, Dense, Flatten, MaxPool, ReLU
from .model import Model, default_architecture, forward
from .loss import nll_loss, softmax_heads, head_entropy
from .optim import Adam
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Conv2d", "Dense", "Flatten", "MaxPool", "ReLU",
    "Model", "default_architecture", "forward",
    "nll_loss", "softmax_heads", "head_entropy",
    "Adam", "GradCheckReport", "grad_check",
    "load_checkpoint", "save_checkpoint",
]

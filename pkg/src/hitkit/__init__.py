"""Hierarchical transformer for code-mixed text on a small reverse-mode tensor core."""

from .attention import FameConfig, FameLayer, fame_forward, fame_fuse, msa_forward, opa_forward
from .encoders import CharHit, EncoderLayer, HierPool, HitEncoder, WordHit, positional_encoding
from .optim import Parameter, adam_step
from .tensor import Tensor, backward, no_grad
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CharHit", "EncoderLayer", "FameConfig", "FameLayer", "HierPool", "HitEncoder",
    "Parameter", "Tensor", "TrainConfig", "WordHit", "adam_step", "backward",
    "fame_forward", "fame_fuse", "msa_forward", "no_grad", "opa_forward",
    "positional_encoding", "train",
]

"""Task-unaware lifelong imitation learning on a deterministic 2D world.

A single language-conditioned policy is trained through a sequence of
pick-and-place tasks with standard forgetting mitigations (replay, gradient
projection, quadratic anchors, mask partitioning). At test time the policy
retrieves similar demonstrations from its episodic memory and locally adapts
on them, with demo frames weighted by where its own failed rollouts diverged.
"""

from .errors import (
    CapacityExhausted,
    ConfigurationError,
    FormatError,
    InputError,
    InternalError,
    Lifelong2dError,
    MemoryEmpty,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityExhausted",
    "ConfigurationError",
    "FormatError",
    "InputError",
    "InternalError",
    "Lifelong2dError",
    "MemoryEmpty",
    "__version__",
]

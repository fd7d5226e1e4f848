"""Bounded episodic-control memories for reinforcement learning."""

from ecmem.memory import (
    ActionMemory,
    EmptyMemoryError,
    InsertEffect,
    KernelParams,
    kernel_weight,
    lookup_best_action,
)

__version__ = "0.1.0"

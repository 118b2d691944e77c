"""Hybrid ODE models behind one interface, combined through learnable
connection equations, simulated with event handling and trained by forward-mode
gradients."""

from .compose import CombinedModel, combine
from .connect import ConnDims, ConnectionSet, TopologyTag, init_connections
from .model import Dims, FunctionModel, HudaModel, SuperDenseTime
from .solve import SolverOpts, Trajectory, integrate
from .structure import blt_sort

__all__ = [
    "CombinedModel",
    "ConnDims",
    "ConnectionSet",
    "Dims",
    "FunctionModel",
    "HudaModel",
    "SolverOpts",
    "SuperDenseTime",
    "TopologyTag",
    "Trajectory",
    "blt_sort",
    "combine",
    "init_connections",
    "integrate",
]

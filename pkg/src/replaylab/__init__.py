"""Curiosity-prioritized experience replay on small gridworlds."""
from .replay import PrioritizedBuffer, PriorityParams, Strategy, Transition, compute_priority
from .sumtree import SumTree

__all__ = ["PrioritizedBuffer", "PriorityParams", "Strategy", "SumTree", "Transition",
           "compute_priority"]
__version__ = "0.1.0"

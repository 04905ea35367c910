"""Power and quantization-rate allocation for distributed estimation of a
Gaussian vector over power- and bandwidth-constrained wireless links.

The package splits into: network description and derived statistics
(:mod:`wsnalloc.model`), the uniform quantizer (:mod:`wsnalloc.quantizer`),
closed-form distortion bounds and their gradients (:mod:`wsnalloc.bounds`),
the KKT power split (:mod:`wsnalloc.poweralloc`), the cutting-plane rate
search (:mod:`wsnalloc.ellipsoid`), the five end-to-end allocation
algorithms (:mod:`wsnalloc.allocators`), a Monte Carlo link simulator
(:mod:`wsnalloc.chansim`), and sweep/CSV/CLI plumbing
(:mod:`wsnalloc.experiments`, :mod:`wsnalloc.cli`).
"""

from .allocators import (ALGORITHMS, AllocatorConfig, AllocatorRun,
                         run_allocator)
from .bounds import Allocation, BoundReport, evaluate_bounds
from .chansim import SimConfig, SimReport, simulate
from .model import DerivedStats, NetworkModel, derive_stats, make_model

__all__ = [
    "ALGORITHMS",
    "Allocation",
    "AllocatorConfig",
    "AllocatorRun",
    "BoundReport",
    "DerivedStats",
    "NetworkModel",
    "SimConfig",
    "SimReport",
    "derive_stats",
    "evaluate_bounds",
    "make_model",
    "run_allocator",
    "simulate",
]

__version__ = "0.1.0"

"""Traversing flows on planar domains with holes and their boundary holography.

The package is organised as a pipeline:

``geometry``
    boundary curves, domains, signed distance and point location;
``flowfield``
    flows with a Lyapunov function, traversing checks, Morse strata;
``tracing``
    trajectory integration with boundary events and the sampled causality map;
``trajspace``
    the trajectory space T(v) as a finite graph;
``holography``
    reconstruction of bulk invariants from boundary data and extension of
    boundary maps to the interior;
``algebra``
    sampled surrogates of the function algebras on X, its boundary and T(v);
``scenes``, ``svg``, ``cli``
    scene files, figures and the command line.
"""

__version__ = "0.1.0"

from .errors import HoloflowError  # noqa: E402
from .flowfield import FlowSpec, check_traversing, lyapunov_range_repair, morse_stratify  # noqa: E402
from .geometry import BoundaryPoint, Circle, Domain, Ellipse, FourierCurve, build_domain, locate  # noqa: E402
from .holography import (BoundaryMap, build_alpha_model, compare_with_truth, extend_boundary_map,  # noqa: E402
                         extract_boundary_data, reconstruct_invariants)
from .tracing import CausalityDataset, Tracer, check_property_A, sample_causality_map  # noqa: E402
from .trajspace import TrajectoryGraph, build_graph  # noqa: E402

__all__ = [
    "BoundaryMap", "BoundaryPoint", "CausalityDataset", "Circle", "Domain", "Ellipse", "FlowSpec", "FourierCurve",
    "HoloflowError", "Tracer", "TrajectoryGraph", "build_alpha_model", "build_domain", "build_graph",
    "check_property_A", "check_traversing", "compare_with_truth", "extend_boundary_map", "extract_boundary_data",
    "locate", "lyapunov_range_repair", "morse_stratify", "reconstruct_invariants", "sample_causality_map",
    "__version__",
]

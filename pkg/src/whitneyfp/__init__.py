"""Whitney selection norms on finite sets, clustering trees, dual support
reduction, Whitney extension and shape-field checks."""
from __future__ import annotations

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
from .polyjet import Poly, VecPoly, LiftedPoly, jet_mul, module_mul, taylor_jet  # noqa: E402
from .whitney import PointSet, WhitneyField, field_norm, field_seminorm, whitney_extend  # noqa: E402
from .clustering import ClusterTree, build_clustering, validate_clustering, cluster_norm, dual_cluster_norm  # noqa: E402
from .dualred import DualField, DualFunctional, reduce_support, reduce_with_clustering  # noqa: E402
from .convexlp import LPProblem, LPSolution, Polytope, lp_solve, polytope_approx  # noqa: E402
from .selection import (SelectionInstance, finiteness_ratio, ksharp, selection_norm,  # noqa: E402
                        selection_norm_dual, selection_norm_primal)
from .shapefield import canonical_shape_field, convexity_check, lift, project, lifted_seminorm_check  # noqa: E402

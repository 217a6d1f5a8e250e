"""Excess-risk bounds for black-box ERM under convex losses by doubly wild refitting.

A trained predictor is refitted on two perturbed copies of its training set
whose outcomes are chosen so the loss gradients at the fitted values are
sign-flipped and rescaled. The refits give computable upper bounds on the
empirical processes that control the excess risk in fixed design.
"""

from .engine import WildRefitOutput, doubly_wild_refit, rademacher
from .losses import (CallableLoss, LossSpec, QuadraticFormLoss, RegularizedExpFamilyLoss, SquaredLoss,
                     check_assumption1, make_loss)
from .models import (FixedDesignDataset, LinearFeatureClass, UnconstrainedClass, empirical_norm,
                     empirical_risk, generic_convex_erm_trainer, opaque_mlp_trainer,
                     ridge_closed_form_trainer)
from .risk import (SupSolver, excess_risk_bound, fixed_point_radius, radius_bound_corollary,
                   radius_bound_theorem2, run_audit, tune_rho_for_radius)
from .wildresp import build_wild_datasets, solve_wild_response

__version__ = "0.1.0"

__all__ = [
    "CallableLoss", "LossSpec", "QuadraticFormLoss", "RegularizedExpFamilyLoss", "SquaredLoss",
    "check_assumption1", "make_loss",
    "FixedDesignDataset", "LinearFeatureClass", "UnconstrainedClass", "empirical_norm", "empirical_risk",
    "generic_convex_erm_trainer", "opaque_mlp_trainer", "ridge_closed_form_trainer",
    "build_wild_datasets", "solve_wild_response",
    "WildRefitOutput", "doubly_wild_refit", "rademacher",
    "SupSolver", "excess_risk_bound", "fixed_point_radius", "radius_bound_corollary",
    "radius_bound_theorem2", "run_audit", "tune_rho_for_radius",
]

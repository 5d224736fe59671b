"""Exact discrete optimal transport and convergence-rate experiments.

The package computes exact transport costs, plans, and dual potentials
between discrete measures under smooth translation-invariant costs, and
provides a Monte-Carlo harness measuring how fast the plug-in estimator
T(mu_n, nu_n) approaches the population cost for pairs with closed-form
ground truth.
"""

__version__ = "0.1.0"

from .costs import (CostSpec, RegularityMeta, power_cost, smooth_approx,
                    parse_cost, eval_cost, eval_h, grad_h, cost_matrix,
                    check_conditions)
from .measures import (DiscreteMeasure, SamplerSpec, GroundTruthPair,
                       ConcentrationMeta, uniform_ball, uniform_cube, gaussian,
                       point_mass, translate, sample, ground_truth_location,
                       ground_truth_gaussian_w2, lb_construction,
                       concentration_certificate)
from .solver import (TransportPlan, solve_assignment, solve_general,
                     brute_force, plan_cost_under, validate_plan)
from .duality import (PotentialHandle, c_conjugate, double_conjugate_check,
                      extend_potentials, superdifferential_probe,
                      cyclical_monotonicity_check, default_cap)
from .diagnostics import (DiagnosticReport, semiconcavity_check,
                          displacement_profile, superdiff_growth_check)
from .rates import (ExperimentConfig, RateReport, estimate_delta, fit_slope,
                    compare_regimes, to_wasserstein_units)
from .lowerbounds import (PackingSet, GadgetResult, packing_set,
                          minimax_gadget, divergences, tv_quarter_family)
from .errors import OTRatesError, UsageError, NumericalError

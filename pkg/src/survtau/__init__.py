"""Orthogonal learners for heterogeneous treatment effects on censored
discrete-time outcomes, with overlap-targeted loss weighting."""

from .approximator import ApproxConfig, Approximator, grad_check, train
from .data import (Dataset, NuisanceAtPoint, Observation, TildeEta,
                   survival_from_hazards, validate_dataset)
from .evaluation import (MeanZeroReport, OrthoProbeResult, PeheReport,
                         mean_zero_probe, orthogonality_probe, pehe,
                         pehe_ratio_over_time, theta_hat)
from .nuisance import (FoldedNuisances, HazardModel, NuisanceGrid, NuisanceSet,
                       cross_fit, fit_hazard, fit_nuisances, fit_propensity,
                       person_period, survival_curve)
from .orthogonal import (GuardReport, PseudoRow, build_pseudo_rows,
                         build_rmst_rows, phi, rho, xi_g, xi_s)
from .second_stage import (TauModel, fit_rmst, fit_tau, plugin_tau,
                           predict_tau)
from .synthetic import (SETTINGS, GroundTruth, ScenarioSpec, as_nuisance_set,
                        generate, true_cate)
from .weighting import (ALL_SCHEMES, WeightPartials, WeightScheme,
                        parse_scheme, weight, weight_partials)

__all__ = [name for name in dir() if not name.startswith("_")]

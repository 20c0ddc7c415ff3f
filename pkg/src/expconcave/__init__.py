"""Stochastic exp-concave optimization: learners, bounds, diagnostics and a
seeded Monte Carlo harness."""
from .boost import (BoostResult, SplitPlan, bayes_redundancy, confidence_boost, corollary_bound,
                    meta_bound, pm_cb, pm_ewoo, reparameterize, split_plan)
from .domains import ConvexDomain, ball, box, interval, project_simplex, simplex
from .erm import SolverConfig, erm_finite, erm_fit, erm_whp_bound, penalized_erm_fit
from .errors import (BaseLearnerError, ConvergenceError, ExpConcaveError, InvalidInputError,
                     PreconditionError, UnsupportedDimensionError)
from .losses import LossModel, Outcome, eta_of, logistic_loss, squared_loss
from .online import (average_iterates, ewoo_run, o2b_excess_bound, ogd_run, ons_run,
                     progressive_mixture_run, regret_bound, regret_of)
from .problems import ProblemInstance, make_problem

__version__ = "0.1.0"

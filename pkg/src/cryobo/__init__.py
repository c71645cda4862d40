"""Batch multi-objective Bayesian optimization for mixture formulation campaigns."""

from .acquisition import (AcquisitionConfig, BatchSuggestion, CandidatePool, ei,
                          parego_scalarize, smoothed_log, ucb, weighted_sum)
from .campaign import (CampaignConfig, CampaignState, CampaignStore, Observation,
                       create_campaign, ingest_results, replay,
                       run_synthetic_campaign, suggest)
from .errors import (CryoboError, NumericalFailure, StaleStateError, StoreError,
                     ValidationFailure)
from .gp import SurrogateModel, fit
from .kcenter import CoverageState, kcenter_select
from .oracles import OracleSpec, ToxicityParams, eval_1d, eval_rastrigin, observe
from .pareto import (FrontStaircase, ParetoFront, dominates, hypervolume,
                     hypervolume_improvement, igd, pareto_front, reference_front)
from .space import (ComponentSet, Formulation, ObjectiveBounds, distance,
                    enumerate_pool, normalize_objectives)

__version__ = "0.1.0"

"""Low-rank joint PMF estimation from one-dimensional random projections."""

from .evaluation import (
    ExperimentSpec,
    classify_map,
    cross_validate_rank,
    gen_cim_model,
    gen_pmf_model,
    gen_separable_model,
    load_model,
    mae,
    mse_aligned,
    run_experiment,
    save_model,
)
from .factorization import assemble, extract_factors, make_split, spa
from .marginals import (
    Dataset,
    ProjectedStack,
    discretize,
    estimate_pairwise,
    estimate_projected,
    estimate_threeway,
    exact_projected,
    load_csv,
    pair_operators,
    save_csv,
)
from .model import (
    MISSING,
    CpdModel,
    eval_joint,
    eval_marginalized,
    full_tensor,
    pairwise_marginal,
    project_on_simplex,
    sample,
    threeway_marginal,
)
from .radon import adjoint, build_operator, forward, ls_invert, sample_directions
from .solver import (
    FitReport,
    SolverConfig,
    fit_ctf_3way,
    fit_em,
    fit_spa_2way,
    grad_J,
    juror,
    objective_J,
    objective_J1,
)

__all__ = [
    "adjoint",
    "assemble",
    "build_operator",
    "classify_map",
    "CpdModel",
    "cross_validate_rank",
    "Dataset",
    "discretize",
    "estimate_pairwise",
    "estimate_projected",
    "estimate_threeway",
    "eval_joint",
    "eval_marginalized",
    "exact_projected",
    "ExperimentSpec",
    "extract_factors",
    "fit_ctf_3way",
    "fit_em",
    "fit_spa_2way",
    "FitReport",
    "forward",
    "full_tensor",
    "gen_cim_model",
    "gen_pmf_model",
    "gen_separable_model",
    "grad_J",
    "juror",
    "load_csv",
    "load_model",
    "ls_invert",
    "mae",
    "make_split",
    "MISSING",
    "mse_aligned",
    "objective_J",
    "objective_J1",
    "pair_operators",
    "pairwise_marginal",
    "project_on_simplex",
    "ProjectedStack",
    "run_experiment",
    "sample",
    "sample_directions",
    "save_csv",
    "save_model",
    "SolverConfig",
    "spa",
    "threeway_marginal",
]

__version__ = "0.1.0"

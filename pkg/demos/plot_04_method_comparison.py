"""
Comparing estimators on sampled data
====================================

A small synthetic benchmark: draw a model, sample it with some entries
hidden, and fit every estimator on the same data.
"""

import warnings

from juror import SolverConfig, full_tensor, gen_pmf_model, mae, mse_aligned, sample
from juror.evaluation import METHODS, fit_method

warnings.simplefilter("ignore")

truth = gen_pmf_model(F=4, I=5, N=5, seed=3)
tensor = full_tensor(truth)

##############################################################################
# ``kappa`` is the probability that an entry is observed.  Pairwise
# statistics use every sample observing both variables.

for kappa in (1.0, 0.6):
    data = sample(truth, 5000, kappa=kappa, seed=1)
    print(f"kappa = {kappa}")
    for method in METHODS:
        cfg = SolverConfig(rank=4, num_projections=100, max_outer=20, max_inner=100)
        est = fit_method(method, data, 4, cfg)
        print(f"  {method:8s} MSE {mse_aligned(truth, est):.4f}  "
              f"MAE {mae(tensor, full_tensor(est)):.4f}")

##############################################################################
# The same grid can be driven from a JSON spec with
# ``juror experiment --spec spec.json --out results.csv``.

"""
MAP classification with a fitted model
======================================

Put the label last, fit a joint model of features and label, then predict
``argmax_y p(x, y)``.  Missing features are summed out of the model rather
than imputed.  The rank is picked by validation accuracy.
"""

import warnings

import numpy as np

from juror import CpdModel, SolverConfig, cross_validate_rank, sample
from juror.evaluation import accuracy, fit_method, predict, split_dataset

warnings.simplefilter("ignore")

##############################################################################
# Synthetic data with a 4-class label as the last variable.  Sparse
# Dirichlet columns make the latent states, and so the label, predictable.

rng = np.random.default_rng(2)
truth = CpdModel(rng.dirichlet(np.ones(3)), [rng.dirichlet(0.3 * np.ones(4), 3).T for _ in range(6)])
data = sample(truth, 8000, seed=0)
train, val, test = split_dataset(data, [0.7, 0.1, 0.2], seed=0)

##############################################################################
# Cross-validate the rank
# -----------------------

cfg = SolverConfig(rank=1, num_projections=50, max_outer=10, max_inner=100)
best, scores = cross_validate_rank(train, val, range(1, 9), "juror-a", cfg)
print("validation accuracy:", {F: round(s, 3) for F, s in scores.items()})
print("selected rank:", best)

model = fit_method("juror-a", train, best, cfg)
print("test accuracy      :", round(accuracy(model, test), 4))
print("Bayes (true model) :", round(accuracy(truth, test), 4))

##############################################################################
# Hiding features
# ---------------
#
# Predictions with a feature missing use the marginal over that feature.

x = test.codes[:5, :-1].copy()
x[:, 0] = -1
print("with feature 0 hidden:", predict(model, x), "true:", test.codes[:5, -1])
print("rows with all features:", np.mean(predict(model, test.codes[:, :-1]) == test.codes[:, -1]))

"""
Projecting a 2-D PMF onto random lines
======================================

The estimator never looks at a pairwise marginal directly.  It looks at
one-dimensional histograms of ``phi . (x_j, x_k)`` for many random unit
directions ``phi``.  This script builds the operator that maps a grid PMF
to those histograms and checks that enough directions determine the PMF.
"""

import numpy as np

from juror import adjoint, build_operator, forward, ls_invert, sample_directions

##############################################################################
# A direction set and its operator
# --------------------------------
#
# Directions are drawn uniformly on the unit circle.  Every cell of the
# ``I x I`` grid falls into exactly one bin per direction, so the operator is
# a sparse 0/1 matrix with ``M * I^2`` nonzeros.

I, M = 6, 40
directions = sample_directions(M, seed=0)
op = build_operator(directions, I, I)
print("operator shape:", op.matrix.shape, "nonzeros:", op.matrix.nnz)

##############################################################################
# An axis-aligned direction bins by row index, so its histogram is simply
# the row marginal.

axis = build_operator(type(directions)(np.array([[1.0, 0.0]])), I, I)
rng = np.random.default_rng(1)
Z = rng.random((I, I))
Z /= Z.sum()
print("row marginal   :", np.round(Z.sum(axis=1), 4))
print("axis histogram :", np.round(forward(axis, Z)[0], 4))

##############################################################################
# Mass conservation and the adjoint
# ---------------------------------
#
# Each histogram carries the full mass, and ``adjoint`` is the exact
# transpose, which the gradient code relies on.

Y = forward(op, Z)
print("histogram masses:", np.unique(np.round(Y.sum(axis=1), 12)))
W = rng.normal(size=Y.shape)
print("<RZ, W> - <Z, R^T W> =", np.vdot(Y, W) - np.vdot(Z, adjoint(op, W)))

##############################################################################
# Inversion
# ---------
#
# With at least ``I^2`` directions the operator has full column rank and
# least squares recovers the grid PMF from its projections.

print("recovery error:", np.abs(ls_invert(op, Y) - Z).max())

##############################################################################
# A handful of directions cannot pin down 36 cells.  The minimum-norm
# solution is then clipped and renormalized into a valid but blurred PMF.

few = build_operator(sample_directions(3, seed=2), I, I)
blurred = ls_invert(few, forward(few, Z))
print("3 directions, recovery error:", round(float(np.abs(blurred - Z).max()), 4))

"""Log-domain primitives shared by the potential solvers.

Exact zeros are carried as -inf so sparsity patterns survive arbitrarily
long recursions; scipy's logsumexp already treats all-(-inf) reductions
correctly, we only silence the harmless warnings numpy emits on the way.
"""

import numpy as np
from scipy.special import logsumexp

NEG_INF = -np.inf


def log_safe(x):
    """Elementwise log with log(0) = -inf and no warning."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(x)


def lse(a, axis):
    with np.errstate(invalid="ignore"):
        return logsumexp(a, axis=axis)


def log_matvec(logA, logv):
    """log(A @ exp(logv)) row by row."""
    return lse(logA + logv[None, :], axis=1)


def log_vecmat(logv, logA):
    """log(exp(logv) @ A), i.e. the transposed propagation."""
    return lse(logA + logv[:, None], axis=0)

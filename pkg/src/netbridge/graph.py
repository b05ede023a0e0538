"""Traffic network, prior transition kernels and vertex histograms.

Vertices are 0..n-1 internally; the I/O layer (:mod:`netbridge.config`)
maps user-facing labels onto this range.  Kernels are nonnegative matrices
supported on the edge set; a kernel is *stochastic* when every row sums to
one and *substochastic* when some row sums fall short (the deficit is the
killing probability at that vertex).  Marginals are nonnegative histograms
over vertices with total mass in (0, 1].

All types are immutable after construction and every operation here is a
pure function.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Tolerance for stochasticity and mass checks; sized for double-precision
# accumulations over up to ~1e4 states.
EPS_NUM = 1e-9


def _readonly(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Network:
    """Directed graph on vertices 0..n-1 with an explicit edge set.

    Self-loops are permitted; the edge set must be nonempty.
    """

    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("network needs at least one vertex")
        if not self.edges:
            raise ValidationError("edge set must be nonempty")
        object.__setattr__(self, "edges", frozenset((int(i), int(j)) for i, j in self.edges))
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValidationError(f"edge ({i},{j}) outside vertex range 0..{self.n - 1}")

    @classmethod
    def complete(cls, n, self_loops=True):
        """Fully connected network on n vertices."""
        edges = {(i, j) for i in range(n) for j in range(n) if self_loops or i != j}
        return cls(n, frozenset(edges))

    @classmethod
    def from_support(cls, A):
        """Network whose edges are the nonzero pattern of the matrix A."""
        A = np.asarray(A, dtype=float)
        i, j = np.nonzero(A)
        return cls(A.shape[0], frozenset(zip(i.tolist(), j.tolist())))

    def adjacency(self):
        """Boolean n-by-n adjacency matrix."""
        M = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            M[i, j] = True
        return M


@dataclass(frozen=True)
class Kernel:
    """Prior transition kernel, time-homogeneous or per-step.

    ``matrices`` is either a single (n, n) matrix reused at every step or a
    (T, n, n) stack of per-step matrices.  Access the step-t matrix through
    :meth:`at` so callers never branch on the two layouts.
    """

    matrices: np.ndarray

    def __post_init__(self):
        M = _readonly(self.matrices)
        if M.ndim not in (2, 3) or M.shape[-1] != M.shape[-2]:
            raise ValidationError(f"kernel must be (n,n) or (T,n,n), got {M.shape}")
        object.__setattr__(self, "matrices", M)

    @property
    def n(self):
        return self.matrices.shape[-1]

    @property
    def time_varying(self):
        return self.matrices.ndim == 3

    @property
    def steps(self):
        """Number of per-step matrices, or None when time-homogeneous."""
        return self.matrices.shape[0] if self.time_varying else None

    def at(self, t):
        """The (n, n) transition matrix governing the step t -> t+1."""
        if self.time_varying:
            return self.matrices[t]
        return self.matrices

    def check_horizon(self, N):
        if N < 1:
            raise ValidationError(f"horizon must be >= 1, got {N}")
        if self.time_varying and self.steps != N:
            raise ValidationError(
                f"time-varying kernel has {self.steps} steps but horizon is {N}"
            )


def as_kernel(A):
    """Coerce a matrix, a stack/list of matrices, or a Kernel into a Kernel."""
    if isinstance(A, Kernel):
        return A
    arr = np.asarray(A, dtype=float)
    if arr.ndim == 1:
        raise ValidationError("kernel must be a matrix, got a vector")
    return Kernel(arr)


def as_marginal(mu, n=None, name="marginal", require_prob=False):
    """Validate a vertex histogram: nonnegative, mass in (0, 1].

    With ``require_prob`` the total mass must equal one within EPS_NUM.
    Returns the histogram as a plain float array.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1:
        raise ValidationError(f"{name} must be a vector, got shape {mu.shape}")
    if n is not None and mu.shape[0] != n:
        raise ValidationError(f"{name} has length {mu.shape[0]}, expected {n}")
    if np.any(mu < 0):
        raise ValidationError(f"{name} has negative entries")
    mass = float(mu.sum())
    if mass <= 0.0:
        raise ValidationError(f"{name} has zero total mass")
    if mass > 1.0 + EPS_NUM:
        raise ValidationError(f"{name} has mass {mass} > 1")
    if require_prob and abs(mass - 1.0) > EPS_NUM:
        raise ValidationError(f"{name} must have mass 1, got {mass}")
    return mu


@dataclass(frozen=True)
class CommodityModel:
    """Prior Markov model of one commodity: population weight, kernel, initial law."""

    weight: float
    kernel: Kernel
    initial: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kernel", as_kernel(self.kernel))
        if not self.weight > 0.0:
            # -log(weight) enters the transport cost; a zero-weight commodity
            # must be dropped by the caller instead.
            raise ValidationError(f"commodity weight must be > 0, got {self.weight}")
        r = as_marginal(self.initial, n=self.kernel.n, name="commodity initial", require_prob=True)
        object.__setattr__(self, "initial", _readonly(r))


def validate_commodity_family(models):
    """Check that commodity weights form a probability vector and shapes agree."""
    if not models:
        raise ValidationError("need at least one commodity")
    n = models[0].kernel.n
    for m in models:
        if m.kernel.n != n:
            raise ValidationError("commodities disagree on the vertex count")
    total = sum(m.weight for m in models)
    if abs(total - 1.0) > EPS_NUM:
        raise ValidationError(f"commodity weights sum to {total}, expected 1")


@dataclass(frozen=True)
class KernelReport:
    """Outcome of validate_kernel: violation lists plus a classification.

    Violation entries carry the step index t (always 0 for a
    time-homogeneous kernel).
    """

    negative_entries: tuple
    off_support: tuple
    row_sum_excess: tuple
    stochastic: bool
    substochastic: bool

    @property
    def valid(self):
        return not (self.negative_entries or self.off_support or self.row_sum_excess)


def validate_kernel(A, G):
    """Report structural violations of kernel A against network G.

    Checks for negative entries, support outside the edge set and row sums
    above 1 + EPS_NUM, and classifies the kernel as stochastic (every row
    sum equal to one within EPS_NUM) or substochastic.  Report-style: the
    caller decides whether violations are fatal.
    """
    A = as_kernel(A)
    if A.n != G.n:
        raise ValidationError(f"kernel is {A.n}x{A.n} but network has {G.n} vertices")
    adj = G.adjacency()
    steps = A.matrices if A.time_varying else A.matrices[None, :, :]
    negative, off_support, excess = [], [], []
    stochastic = True
    for t, M in enumerate(steps):
        for i, j in zip(*np.nonzero(M < 0)):
            negative.append((t, int(i), int(j)))
        for i, j in zip(*np.nonzero((M != 0) & ~adj)):
            off_support.append((t, int(i), int(j)))
        sums = M.sum(axis=1)
        for i in np.nonzero(sums > 1.0 + EPS_NUM)[0]:
            excess.append((t, int(i), float(sums[i])))
        if np.any(np.abs(sums - 1.0) > EPS_NUM):
            stochastic = False
    return KernelReport(
        negative_entries=tuple(negative),
        off_support=tuple(off_support),
        row_sum_excess=tuple(excess),
        stochastic=stochastic,
        substochastic=not stochastic,
    )


def check_bridge_feasibility(A, N):
    """True iff every entry of the N-step kernel product is positive.

    This is the sufficient condition for existence and ray-uniqueness of
    the potential system behind the bridge solvers.  N < 1 is a domain
    error.
    """
    A = as_kernel(A)
    A.check_horizon(N)
    prod = A.at(0) > 0
    for t in range(1, N):
        prod = (prod.astype(np.uint8) @ (A.at(t) > 0).astype(np.uint8)) > 0
    return bool(prod.all())


def propagate_marginal(p, Pi):
    """Push the histogram p one step through the kernel matrix Pi.

    Returns q with q(j) = sum_i p(i) Pi(i, j).  Mass is preserved for
    stochastic Pi and can only shrink for substochastic Pi.
    """
    p = np.asarray(p, dtype=float)
    Pi = np.asarray(Pi if not isinstance(Pi, Kernel) else Pi.matrices, dtype=float)
    if Pi.ndim != 2:
        raise ValidationError("propagate_marginal expects a single (n,n) matrix")
    return p @ Pi


def reachable_in(A, N, support):
    """Vertices reachable in exactly N steps from the given support set."""
    A = as_kernel(A)
    v = np.asarray(support, dtype=bool)
    for t in range(N):
        v = (v.astype(np.uint8) @ (A.at(t) > 0).astype(np.uint8)) > 0
    return v


def coreachable_in(A, N, support):
    """Vertices from which the given support set is reachable in exactly N steps."""
    A = as_kernel(A)
    v = np.asarray(support, dtype=bool)
    for t in range(N - 1, -1, -1):
        v = ((A.at(t) > 0).astype(np.uint8) @ v.astype(np.uint8)) > 0
    return v

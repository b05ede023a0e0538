"""Exact desk-scale reference computations on explicit path-space tensors.

Everything here materializes the full tensor over paths (i0, ..., iN), or
(k, i0, ..., iN) in the multi-commodity case, and works on it with plain
dense numpy operations.  That caps the usable problem size (see SIZE_CAP)
but keeps the code simple enough to trust: this module is the ground truth
the message-passing solvers are tested against, so it must stay the
simplest possible correct implementation and never share solver code.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NotConvergedError, SizeCapError
from .graph import as_kernel

SIZE_CAP = 1_000_000

RNG_ALGORITHM = "numpy-philox-4x64-10"


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _check_cap(n, N, K=1, cap=SIZE_CAP):
    entries = K * n ** (N + 1)
    if entries > cap:
        raise SizeCapError(f"path tensor would hold {entries} entries (cap {cap})")


def _div0(num, den, what):
    """Elementwise num/den with 0/0 = 0; positive mass over a zero denominator
    means the constraint cannot be met on the prior's support."""
    bad = (den == 0) & (num > 0)
    if np.any(bad):
        raise InfeasibleError(f"{what} puts mass on states the prior cannot reach")
    out = np.zeros_like(num, dtype=float)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def prior_path_measure(nu0, A, N, cap=SIZE_CAP):
    """Dense tensor of the prior path law: nu0(i0) A(i0,i1) ... A(i_{N-1},i_N).

    For a stochastic kernel the tensor sums to the mass of nu0; for a
    substochastic kernel it sums to the probability of surviving all N
    steps.
    """
    A = as_kernel(A)
    nu0 = np.asarray(nu0, dtype=float)
    _check_cap(len(nu0), N, cap=cap)
    Q = nu0.copy()
    for t in range(N):
        Q = Q[..., None] * A.at(t)
    return Q


def markov_path_measure(p0, transitions):
    """Dense path tensor of the Markov law with initial p0 and per-step matrices."""
    M = np.asarray(p0, dtype=float).copy()
    for Pi in transitions:
        M = M[..., None] * np.asarray(Pi, dtype=float)
    return M


def path_marginal(M, t):
    """One-time marginal of a single-commodity path tensor at time t."""
    axes = tuple(ax for ax in range(M.ndim) if ax != t)
    return M.sum(axis=axes)


def exact_bridge(Q, mu0, muN, tol=1e-12, max_iter=100_000):
    """Entropic projection of the prior path tensor Q onto the marginal set.

    Alternately rescales the first and last path coordinate until both
    endpoint marginals match, which is the full-tensor form of the same
    iteration the main solver runs on potentials.  The optimum has the
    scaling structure M = alpha(i0) Q beta(iN).
    """
    Q = np.asarray(Q, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    muN = np.asarray(muN, dtype=float)
    N = Q.ndim - 1
    rest0 = tuple(range(1, N + 1))
    restN = tuple(range(0, N))
    shape0 = (-1,) + (1,) * N
    beta = np.ones(Q.shape[-1])
    err = np.inf
    for _ in range(1, max_iter + 1):
        alpha = _div0(mu0, (Q * beta).sum(axis=rest0), "mu0")
        beta = _div0(muN, (alpha.reshape(shape0) * Q).sum(axis=restN), "muN")
        M = alpha.reshape(shape0) * Q * beta
        err = np.abs(M.sum(axis=rest0) - mu0).sum() + np.abs(M.sum(axis=restN) - muN).sum()
        if err <= tol:
            return M
    raise NotConvergedError(max_iter, err)


def exact_multicommodity(models, mu0, muN, N, tol=1e-12, max_iter=100_000, cap=SIZE_CAP):
    """Exact most-likely commodity path tensors under aggregate endpoint marginals.

    Builds the joint prior R(k, i0..iN) = weight_k r_k(i0) A_k(i0,i1) ... and
    runs the same alternating rescaling as exact_bridge, except that the two
    constrained marginals aggregate over the commodity axis.  Returns the list
    of per-commodity tensors.
    """
    n = models[0].kernel.n
    _check_cap(n, N, K=len(models), cap=cap)
    R = np.stack([prior_path_measure(m.weight * m.initial, m.kernel, N, cap=cap) for m in models])
    mu0 = np.asarray(mu0, dtype=float)
    muN = np.asarray(muN, dtype=float)
    rest0 = (0,) + tuple(range(2, N + 2))   # all axes except i0
    restN = tuple(range(0, N + 1))          # all axes except iN
    shape0 = (1, -1) + (1,) * N
    beta = np.ones(n)
    err = np.inf
    for _ in range(1, max_iter + 1):
        alpha = _div0(mu0, (R * beta).sum(axis=rest0), "mu0")
        beta = _div0(muN, (alpha.reshape(shape0) * R).sum(axis=restN), "muN")
        M = alpha.reshape(shape0) * R * beta
        err = np.abs(M.sum(axis=rest0) - mu0).sum() + np.abs(M.sum(axis=restN) - muN).sum()
        if err <= tol:
            return [M[k] for k in range(len(models))]
    raise NotConvergedError(max_iter, err)


def project_to_marginals(M, mu0, muN, commodity_axis=False, tol=1e-12, max_iter=2_000):
    """Rescale a nonnegative path tensor until its endpoint marginals match.

    Used to push random perturbations back into the feasible set; support is
    preserved because scaling never creates mass.  With ``commodity_axis``
    the tensor is a joint (K,)+(n,)*(N+1) array and the two constraints
    aggregate over the leading axis, as in the multi-commodity problem.
    """
    M = np.asarray(M, dtype=float).copy()
    mu0 = np.asarray(mu0, dtype=float)
    muN = np.asarray(muN, dtype=float)
    first_axis = 1 if commodity_axis else 0
    rest0 = tuple(ax for ax in range(M.ndim) if ax != first_axis)
    restN = tuple(range(0, M.ndim - 1))
    shape0 = [1] * M.ndim
    shape0[first_axis] = -1
    for _ in range(max_iter):
        s0 = _div0(mu0, M.sum(axis=rest0), "mu0")
        M *= s0.reshape(shape0)
        sN = _div0(muN, M.sum(axis=restN), "muN")
        M *= sN
        err = np.abs(M.sum(axis=rest0) - mu0).sum() + np.abs(M.sum(axis=restN) - muN).sum()
        if err <= tol:
            break
    return M


def perturbed_feasible(M, mu0, muN, rng, sigma=0.3, commodity_axis=False):
    """A random feasible competitor near M: multiply by log-normal noise on the
    support, then project back onto the marginal constraints."""
    noisy = M * np.exp(sigma * rng.standard_normal(M.shape))
    return project_to_marginals(noisy, mu0, muN, commodity_axis=commodity_axis)


@dataclass(frozen=True)
class PopulationSample:
    """I.i.d. draws from the hierarchical commodity model.

    ``commodities`` holds the commodity index of each walker, ``paths`` the
    visited states, one row per walker.  ``empirical`` are the normalized
    per-commodity path tensors (counts / L, so their masses sum to one).
    When any prior kernel is substochastic the state space is augmented with
    an absorbing parking state (index n) that killed walkers fall into, and
    ``augmented`` is True.
    """

    commodities: np.ndarray
    paths: np.ndarray
    empirical: tuple
    n_states: int
    augmented: bool
    rng_algorithm: str
    seed: int

    def as_tuples(self):
        return [(int(k), tuple(int(s) for s in row))
                for k, row in zip(self.commodities, self.paths)]


def sample_population(models, L, N, seed=0, cap=SIZE_CAP):
    """Draw L independent (commodity, path) samples over horizon N.

    Each walker first draws its commodity from the weight vector, then its
    start from that commodity's initial law, then N kernel steps.  Walkers
    killed by a substochastic kernel move to the appended parking state and
    stay there.  Deterministic for a fixed seed (Philox counter-based RNG).
    """
    if L < 1:
        raise ValueError(f"population size must be >= 1, got {L}")
    K = len(models)
    n = models[0].kernel.n
    weights = np.array([m.weight for m in models], dtype=float)
    weights = weights / weights.sum()

    deficits = [1.0 - np.min(np.asarray(m.kernel.at(t)).sum(axis=1))
                for m in models for t in range(N)]
    augmented = max(deficits) > 1e-12
    n_states = n + 1 if augmented else n
    _check_cap(n_states, N, K=K, cap=cap)

    def step_matrix(m, t):
        A = np.asarray(m.kernel.at(t), dtype=float)
        if not augmented:
            return A
        full = np.zeros((n_states, n_states))
        full[:n, :n] = A
        full[:n, n] = np.maximum(1.0 - A.sum(axis=1), 0.0)
        full[n, n] = 1.0
        return full

    rng = _rng(seed)
    commodities = rng.choice(K, size=L, p=weights)
    paths = np.zeros((L, N + 1), dtype=np.int64)
    for k, m in enumerate(models):
        rows = np.nonzero(commodities == k)[0]
        if rows.size == 0:
            continue
        r = np.zeros(n_states)
        r[:n] = m.initial
        paths[rows, 0] = rng.choice(n_states, size=rows.size, p=r)
        for t in range(N):
            cum = np.cumsum(step_matrix(m, t), axis=1)
            u = rng.random(rows.size)
            nxt = (u[:, None] >= cum[paths[rows, t]]).sum(axis=1)
            paths[rows, t + 1] = np.minimum(nxt, n_states - 1)

    empirical = []
    for k in range(K):
        counts = np.zeros((n_states,) * (N + 1))
        rows = np.nonzero(commodities == k)[0]
        np.add.at(counts, tuple(paths[rows].T), 1.0)
        empirical.append(counts / L)
    return PopulationSample(
        commodities=commodities,
        paths=paths,
        empirical=tuple(empirical),
        n_states=n_states,
        augmented=augmented,
        rng_algorithm=RNG_ALGORITHM,
        seed=seed,
    )

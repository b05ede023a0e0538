"""Single-commodity balanced bridge: match two endpoint histograms with the
law on paths closest in relative entropy to a Markov prior.

The solution is carried by a pair of potentials (phi, phi_hat) coupled by a
backward and a forward linear recursion through the prior kernel, with the
products at the endpoints pinned to the observed histograms.  The solver
alternates the two sweeps (the classic iterative-proportional-fitting
scheme in potential form) until the induced endpoint marginals match the
targets; the optimal transition matrices are then the prior reweighted by
the ratio of consecutive backward potentials.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NotConvergedError, SolverInconsistencyError, ValidationError
from .graph import EPS_NUM, as_kernel, as_marginal, coreachable_in, reachable_in
from .logops import NEG_INF, log_matvec, log_safe, log_vecmat
from .oracle import markov_path_measure


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by all potential solvers.

    tol is the L1 error between induced and target endpoint marginals at
    which iteration stops; log_domain selects the log-sum-exp recursions
    (the default; survives long horizons and tiny kernel entries).
    """

    tol: float = 1e-9
    max_iter: int = 10_000
    log_domain: bool = True


@dataclass(frozen=True)
class PotentialField:
    """Backward/forward potentials over (time, vertex), stored in log domain.

    Exact zeros are -inf.  The pair is determined only up to the scaling
    (c*phi, phi_hat/c); solutions are normalized so max_i phi_hat(0, i) = 1.
    """

    log_phi: np.ndarray
    log_phi_hat: np.ndarray

    @property
    def phi(self):
        return np.exp(self.log_phi)

    @property
    def phi_hat(self):
        return np.exp(self.log_phi_hat)

    def scaled(self, c):
        """The equivalent pair (c*phi, phi_hat/c), c > 0."""
        if not c > 0:
            raise ValidationError("ray scaling factor must be positive")
        return PotentialField(self.log_phi + np.log(c), self.log_phi_hat - np.log(c))

    def ray_normalized(self):
        shift = np.max(self.log_phi_hat[0])
        return PotentialField(self.log_phi + shift, self.log_phi_hat - shift)


@dataclass(frozen=True)
class BridgeSolution:
    """Posterior transition matrices, marginal flow and the potentials behind them.

    transitions[t] is the (n, n) matrix governing step t -> t+1 (row-stochastic
    on every row carrying mass); marginals[t] is the one-time law at t.
    """

    transitions: np.ndarray
    marginals: np.ndarray
    potentials: PotentialField
    iterations: int
    residual: float

    @property
    def horizon(self):
        return self.transitions.shape[0]


def _log_div(log_num, log_den, what):
    """log(num/den) with 0/0 = 0; mass over a zero denominator is infeasible."""
    bad = np.isneginf(log_den) & (log_num > NEG_INF)
    if np.any(bad):
        raise InfeasibleError(f"{what} puts mass on states the prior cannot reach")
    with np.errstate(invalid="ignore"):
        out = log_num - log_den
    out[np.isneginf(log_num)] = NEG_INF
    return out


def _check_support_feasibility(A, mu0, muN, N):
    reach = reachable_in(A, N, mu0 > 0)
    if np.any((muN > 0) & ~reach):
        raise InfeasibleError("muN has mass on states unreachable from the support of mu0")
    coreach = coreachable_in(A, N, muN > 0)
    if np.any((mu0 > 0) & ~coreach):
        raise InfeasibleError("mu0 has mass on states that cannot reach the support of muN")


def solve_bridge(A, mu0, muN, N, opts=None):
    """Most-likely evolution between two endpoint histograms under prior A.

    Runs the alternating backward/forward potential iteration until the
    induced endpoint marginals match mu0 and muN within opts.tol (L1),
    then assembles the posterior kernels and the marginal flow.

    Raises InfeasibleError when a target has mass outside what the prior's
    support can carry, and NotConvergedError when the iteration budget runs
    out first.
    """
    opts = opts or SolverOptions()
    A = as_kernel(A)
    A.check_horizon(N)
    n = A.n
    mu0 = as_marginal(mu0, n=n, name="mu0", require_prob=True)
    muN = as_marginal(muN, n=n, name="muN", require_prob=True)
    _check_support_feasibility(A, mu0, muN, N)

    if opts.log_domain:
        log_phi, log_phi_hat, iterations, residual = _iterate_log(A, mu0, muN, N, opts)
    else:
        log_phi, log_phi_hat, iterations, residual = _iterate_linear(A, mu0, muN, N, opts)

    potentials = PotentialField(log_phi, log_phi_hat).ray_normalized()
    marginals = np.exp(potentials.log_phi + potentials.log_phi_hat)
    transitions = np.stack([
        posterior_kernel(potentials, A, t, marginals=marginals) for t in range(N)
    ])
    return BridgeSolution(
        transitions=transitions,
        marginals=marginals,
        potentials=potentials,
        iterations=iterations,
        residual=residual,
    )


def _iterate_log(A, mu0, muN, N, opts):
    n = A.n
    log_A = [log_safe(A.at(t)) for t in range(N)]
    log_mu0 = log_safe(mu0)
    log_muN = log_safe(muN)

    log_phi = np.full((N + 1, n), NEG_INF)
    log_phi_hat = np.full((N + 1, n), NEG_INF)
    log_phi_hat[0] = 0.0
    for t in range(N):
        log_phi_hat[t + 1] = log_vecmat(log_phi_hat[t], log_A[t])

    residual = np.inf
    for it in range(1, opts.max_iter + 1):
        # backward sweep: pin the muN boundary, recurse phi down to t=0
        log_phi[N] = _log_div(log_muN, log_phi_hat[N], "muN")
        for t in range(N - 1, -1, -1):
            log_phi[t] = log_matvec(log_A[t], log_phi[t + 1])
        res0 = np.abs(np.exp(log_phi[0] + log_phi_hat[0]) - mu0).sum()
        # forward sweep: pin the mu0 boundary, recurse phi_hat up to t=N
        log_phi_hat[0] = _log_div(log_mu0, log_phi[0], "mu0")
        for t in range(N):
            log_phi_hat[t + 1] = log_vecmat(log_phi_hat[t], log_A[t])
        resN = np.abs(np.exp(log_phi[N] + log_phi_hat[N]) - muN).sum()
        residual = res0 + resN
        if residual <= opts.tol:
            return log_phi, log_phi_hat, it, residual
    raise NotConvergedError(opts.max_iter, residual)


def _iterate_linear(A, mu0, muN, N, opts):
    n = A.n
    mats = [np.asarray(A.at(t), dtype=float) for t in range(N)]

    def div(num, den, what):
        bad = (den == 0) & (num > 0)
        if np.any(bad):
            raise InfeasibleError(f"{what} puts mass on states the prior cannot reach")
        out = np.zeros_like(num)
        ok = den > 0
        out[ok] = num[ok] / den[ok]
        return out

    phi = np.zeros((N + 1, n))
    phi_hat = np.zeros((N + 1, n))
    phi_hat[0] = 1.0
    for t in range(N):
        phi_hat[t + 1] = phi_hat[t] @ mats[t]

    residual = np.inf
    for it in range(1, opts.max_iter + 1):
        phi[N] = div(muN, phi_hat[N], "muN")
        for t in range(N - 1, -1, -1):
            phi[t] = mats[t] @ phi[t + 1]
        res0 = np.abs(phi[0] * phi_hat[0] - mu0).sum()
        phi_hat[0] = div(mu0, phi[0], "mu0")
        for t in range(N):
            phi_hat[t + 1] = phi_hat[t] @ mats[t]
        resN = np.abs(phi[N] * phi_hat[N] - muN).sum()
        residual = res0 + resN
        if residual <= opts.tol:
            return log_safe(phi), log_safe(phi_hat), it, residual
    raise NotConvergedError(opts.max_iter, residual)


def posterior_kernel(potentials, A, t, marginals=None):
    """Posterior transition matrix for step t -> t+1.

    Pi(i, j) = A(i, j) phi(t+1, j) / phi(t, i); rows where phi(t, i) > 0 sum
    to one by the backward recursion.  Rows carrying no mass (phi(t, i) = 0
    and marginal zero) are filled with the prior row renormalized, which is
    arbitrary but deterministic.  A zero phi under positive mass means the
    potentials do not belong to a converged solve and is reported as an
    inconsistency.
    """
    A = as_kernel(A)
    log_phi_t = potentials.log_phi[t]
    log_phi_next = potentials.log_phi[t + 1]
    if marginals is None:
        marginals = np.exp(potentials.log_phi + potentials.log_phi_hat)
    dead = np.isneginf(log_phi_t)
    if np.any(dead & (marginals[t] > 0)):
        raise SolverInconsistencyError(
            f"phi({t}, i) = 0 on a state with positive mass; potentials are not converged"
        )
    with np.errstate(invalid="ignore"):
        log_pi = log_safe(A.at(t)) + log_phi_next[None, :] - log_phi_t[:, None]
    Pi = np.zeros((A.n, A.n))
    alive = ~dead
    Pi[alive] = np.exp(log_pi[alive])
    if np.any(dead):
        prior = np.asarray(A.at(t), dtype=float)[dead]
        Pi[dead] = prior / prior.sum(axis=1, keepdims=True)
    return Pi


def path_kl(M, Q):
    """Relative entropy sum M log(M/Q) with 0 log 0 = 0.

    Returns +inf when M has mass outside the support of Q.
    """
    M = np.asarray(M, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if M.shape != Q.shape:
        raise ValidationError(f"shape mismatch {M.shape} vs {Q.shape}")
    supp = M > 0
    if np.any(Q[supp] == 0):
        return np.inf
    m, q = M[supp], Q[supp]
    return float(np.sum(m * (np.log(m) - np.log(q))))


def kl_objective(solution, A, nu0=None):
    """Relative entropy of the solution's path law to the prior.

    Decomposes as KL(mu0 || nu0) plus the marginal-weighted KL of posterior
    to prior rows, so no path tensor is built.  The prior's own initial law
    nu0 only shifts the value by a constant; it defaults to mu0 (zero shift).
    """
    A = as_kernel(A)
    mu0 = solution.marginals[0]
    total = 0.0
    if nu0 is not None:
        total += path_kl(mu0, np.asarray(nu0, dtype=float))
        if not np.isfinite(total):
            return np.inf
    for t in range(solution.horizon):
        Pi = solution.transitions[t]
        prior = np.asarray(A.at(t), dtype=float)
        p = solution.marginals[t]
        rows = p > 0
        for i in np.nonzero(rows)[0]:
            kl = path_kl(Pi[i], prior[i])
            if not np.isfinite(kl):
                return np.inf
            total += p[i] * kl
    return total


def induced_path_measure(solution):
    """Dense path tensor generated by the solution (desk scale only)."""
    from .oracle import markov_path_measure

    return markov_path_measure(solution.marginals[0], solution.transitions)


def system_residuals(potentials, A, mu0, muN):
    """How well the potentials satisfy the two recursions and the boundaries.

    Returns a dict with the backward and forward recursion errors relative
    to the sup of the respective potential, and the absolute L1 boundary
    gaps.  All four are at float-precision scale after a converged solve.
    """
    A = as_kernel(A)
    phi = np.exp(potentials.log_phi)
    phi_hat = np.exp(potentials.log_phi_hat)
    N = phi.shape[0] - 1
    back = max(
        np.abs(phi[t] - np.asarray(A.at(t)) @ phi[t + 1]).max() for t in range(N)
    )
    fwd = max(
        np.abs(phi_hat[t + 1] - phi_hat[t] @ np.asarray(A.at(t))).max() for t in range(N)
    )
    return {
        "backward": back / max(phi.max(), EPS_NUM),
        "forward": fwd / max(phi_hat.max(), EPS_NUM),
        "boundary_0": float(np.abs(phi[0] * phi_hat[0] - mu0).sum()),
        "boundary_N": float(np.abs(phi[N] * phi_hat[N] - muN).sum()),
    }

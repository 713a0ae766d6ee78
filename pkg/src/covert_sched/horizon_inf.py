"""Long-run (average cost) scheduling, threshold policies and leakage-rate bounds.

The average-cost problems are solved by relative value iteration on the
truncated ladder ``[0, N]``, where the top rung is absorbing: one more
prediction step from rung ``N`` stays at rung ``N``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InputError, NotApplicableError
from .model import CovarianceLadder, SteadyState, SystemModel, build_ladder, spectral_radius
from .sched_dp import TIE_TOL, Kind, ObjectiveConfig, PolicyTable, decide, q_values_full

RVI_TOL = 1e-9
RVI_MAX_ITER = 100_000
N_PRIME_CAP = 1_000_000


def _succ(N: int) -> np.ndarray:
    return np.minimum(np.arange(N + 1) + 1, N)


def _truncated_costs(N: int, objective: ObjectiveConfig, ladder: CovarianceLadder,
                     model: SystemModel):
    """Full-information stage costs on ``[0, N]^2`` with the absorbing top rung."""
    s = _succ(N)
    lam, lam_e, beta = model.lam, model.lam_e, objective.beta
    tr = ladder.traces
    tr_f = tr[s][:, None]
    est0 = beta * tr_f
    est1 = beta * (lam * tr[0] + (1 - lam) * tr_f)
    if objective.kind is Kind.COVARIANCE:
        tr_fe = tr[s][None, :]
        c0 = est0 - (1 - beta) * tr_fe
        c1 = est1 - (1 - beta) * (lam_e * tr[0] + (1 - lam_e) * tr_fe)
    else:
        leak = 0.5 * (ladder.logdets[s] - ladder.logdets[0])[None, :]
        c0 = est0 + np.zeros_like(leak)
        c1 = est1 + (1 - beta) * lam_e * leak
    return c0, c1


@dataclass(frozen=True, eq=False)
class AvgCostSolution:
    """Average cost ``rho``, relative values ``h[n, n_e]`` and the greedy stationary policy."""

    rho: float
    h: np.ndarray
    policy: PolicyTable
    iterations: int
    residual: float
    N: int
    anchor: tuple = (0, 0)
    spans: tuple = field(default=(), repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# rho={self.rho!r},iterations={self.iterations},residual={self.residual!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "n_e", "h", "nu"])
        nu = self.policy.stage(1)
        for n in range(self.N + 1):
            for ne in range(self.N + 1):
                w.writerow([n, ne, f"{float(self.h[n, ne]):.17g}", int(nu[n, ne])])
        return buf.getvalue()


def _rvi_loop(bellman, shape, anchor, tol, max_iter):
    """Generic relative value iteration; ``bellman(h) -> (Th, action)``."""
    h = np.zeros(shape)
    spans = []
    for it in range(1, max_iter + 1):
        Th, act = bellman(h)
        rho = float(Th[anchor])
        h_new = Th - rho
        diff = h_new - h
        span = float(diff.max() - diff.min())
        spans.append(span)
        h = h_new
        if span < tol:
            Th, act = bellman(h)
            residual = float(np.max(np.abs(rho + h - Th)))
            return rho, h, act, it, residual, spans
    tail = ", ".join(f"{s:.3g}" for s in spans[-5:])
    raise DivergenceError(f"relative value iteration did not converge in {max_iter} "
                          f"iterations; last spans: {tail}")


def relative_value_iteration(model: SystemModel, ladder: CovarianceLadder,
                             objective: ObjectiveConfig, N: int = 10, tol: float = RVI_TOL,
                             max_iter: int = RVI_MAX_ITER, anchor: tuple = (0, 0),
                             tie_tol: float = TIE_TOL) -> AvgCostSolution:
    """Average-cost Bellman equation over ``(n, n_e) in [0, N]^2``, eavesdropper state known."""
    if N < 2:
        raise InputError("truncation depth N must be >= 2")
    if tol <= 0 or max_iter < 1:
        raise InputError("tol must be positive and max_iter >= 1")
    ladder.require(N)
    anchor = tuple(int(a) for a in anchor)
    if not all(0 <= a <= N for a in anchor):
        raise InputError(f"anchor {anchor} outside [0, {N}]^2")
    s = _succ(N)
    c0, c1 = _truncated_costs(N, objective, ladder, model)
    lam, lam_e = model.lam, model.lam_e

    def bellman(h):
        J_ff = h[np.ix_(s, s)]
        q0, q1 = q_values_full(c0, c1, J_ff, h[0, s], h[s, 0], h[0, 0], lam, lam_e)
        act = decide(q0, q1, tie_tol)
        return np.where(act == 1, q1, q0), act

    rho, h, act, it, residual, spans = _rvi_loop(bellman, (N + 1, N + 1), anchor, tol, max_iter)
    meta = {"objective": objective.kind.value, "beta": objective.beta,
            "model": model.fingerprint(), "info": "full", "horizon": "infinite", "N": N}
    return AvgCostSolution(rho, h, PolicyTable(act[None], 1, meta), it, residual, N,
                           anchor, tuple(spans))


# ------------------------------------------------------------ unknown P_e

def history_beliefs(model: SystemModel, N: int) -> np.ndarray:
    """Truncated beliefs for every length-``N`` decision history.

    Row ``b`` is the belief after the decisions packed in ``b`` (newest in
    the least significant bit). Whatever the starting belief, ``N`` truncated
    updates push it entirely into the tail, so these rows are exact.
    """
    from .belief_dp import belief_update_truncated

    B = 1 << N
    out = np.zeros((B, N + 1))
    for b in range(B):
        pi = np.zeros(N + 1)
        pi[N] = 1.0
        for i in range(N - 1, -1, -1):
            pi = belief_update_truncated(pi, (b >> i) & 1, model, N)
        out[b] = pi
    return out


@dataclass(frozen=True, eq=False)
class BeliefAvgCostSolution:
    """Average-cost solution over ``(n, last N decisions)``.

    ``h[n, b]`` and ``nu[n, b]`` are indexed by the estimator rung and the
    packed decision history ``b``; ``beliefs[b]`` is the matching belief.
    """

    rho: float
    h: np.ndarray
    nu: np.ndarray
    beliefs: np.ndarray
    iterations: int
    residual: float
    N: int
    metadata: dict = field(default_factory=dict)

    def action(self, n: int, history_bits: int) -> int:
        return int(self.nu[min(n, self.N), history_bits & ((1 << self.N) - 1)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# rho={self.rho!r},iterations={self.iterations},residual={self.residual!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "belief_id", "h", "nu"])
        for n in range(self.N + 1):
            for b in range(1 << self.N):
                w.writerow([n, "t" + format(b, f"0{self.N}b"),
                            f"{float(self.h[n, b]):.17g}", int(self.nu[n, b])])
        return buf.getvalue()


def relative_value_iteration_belief(model: SystemModel, ladder: CovarianceLadder,
                                    objective: ObjectiveConfig, N: int = 10,
                                    tol: float = RVI_TOL, max_iter: int = RVI_MAX_ITER,
                                    tie_tol: float = TIE_TOL) -> BeliefAvgCostSolution:
    """Average-cost problem when the scheduler only tracks a belief about the eavesdropper.

    The belief state is the last ``N`` decisions (``2^N`` truncated beliefs);
    the anchor is ``(n = 0, all-transmit history)``.
    """
    if N < 2:
        raise InputError("truncation depth N must be >= 2")
    if N > 16:
        raise InputError("belief truncation above 16 is not supported (2^N states)")
    ladder.require(N)
    s = _succ(N)
    B = 1 << N
    beliefs = history_beliefs(model, N)
    lam, lam_e, beta = model.lam, model.lam_e, objective.beta
    tr = ladder.traces
    if objective.kind is Kind.COVARIANCE:
        E = beliefs @ tr[s]
    else:
        E = beliefs @ (0.5 * ladder.logdets[s])
    tr_f = tr[s][:, None]
    est0 = beta * tr_f
    est1 = beta * (lam * tr[0] + (1 - lam) * tr_f)
    if objective.kind is Kind.COVARIANCE:
        c0 = est0 - (1 - beta) * E[None, :]
        c1 = est1 - (1 - beta) * (lam_e * tr[0] + (1 - lam_e) * E[None, :])
    else:
        c0 = est0 + np.zeros((1, B))
        c1 = est1 + (1 - beta) * lam_e * (E - 0.5 * ladder.logdets[0])[None, :]
    mask = B - 1
    b = np.arange(B)
    b0 = (b << 1) & mask
    b1 = b0 | 1
    anchor = (0, mask)

    def bellman(h):
        q0 = c0 + h[np.ix_(s, b0)]
        q1 = c1 + lam * h[0, b1][None, :] + (1 - lam) * h[np.ix_(s, b1)]
        act = decide(q0, q1, tie_tol)
        return np.where(act == 1, q1, q0), act

    rho, h, act, it, residual, _ = _rvi_loop(bellman, (N + 1, B), anchor, tol, max_iter)
    meta = {"objective": objective.kind.value, "beta": beta, "model": model.fingerprint(),
            "info": "partial", "horizon": "infinite", "N": N}
    return BeliefAvgCostSolution(rho, h, act, beliefs, it, residual, N, meta)


# ------------------------------------------------------ threshold policies

def min_t_for_unbounded(model: SystemModel, t_cap: int = 10_000) -> int:
    """Smallest threshold ``t`` for which the eavesdropper's expected error covariance diverges.

    The condition is ``lam_e < 1 - 1 / (lam * rho(A)^(2(t+1)))``; it also
    requires ``lam > 1 - 1/rho(A)^2`` so that the estimator itself stays bounded.
    """
    rho = spectral_radius(model.A)
    if rho <= 1.0:
        raise NotApplicableError(f"A is stable (spectral radius {rho:.6g}); "
                                 "the eavesdropper covariance stays bounded")
    if model.lam <= 1.0 - 1.0 / rho ** 2:
        raise NotApplicableError(
            f"lambda={model.lam} does not exceed {1 - 1 / rho ** 2:.6g}; "
            "the estimator covariance is itself unbounded")
    log_rho2 = 2.0 * math.log(rho)
    for t in range(t_cap + 1):
        # lam_e < 1 - exp(-(log lam + 2(t+1) log rho))
        if model.lam_e < -math.expm1(-(math.log(model.lam) + (t + 1) * log_rho2)):
            return t
    raise NotApplicableError(f"no threshold up to {t_cap} satisfies the condition")


@dataclass(frozen=True)
class ThresholdPolicy:
    """Transmit exactly when the estimator's holding count is at least ``t``.

    Ignores the eavesdropper, so it applies whether or not its state is known.
    """

    t: int

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 0:
            raise InputError(f"threshold must be a non-negative integer, got {self.t}")

    def __call__(self, n: int, n_e=None) -> int:
        return int(n >= self.t)

    def table(self, N: int) -> PolicyTable:
        nu = (np.arange(N + 1) >= self.t).astype(np.int8)
        grid = np.broadcast_to(nu[:, None], (N + 1, N + 1)).copy()
        return PolicyTable(grid[None], 1, {"policy": f"threshold:{self.t}"})

    @property
    def label(self) -> str:
        return f"threshold:{self.t}"


def threshold_policy(t: int) -> ThresholdPolicy:
    return ThresholdPolicy(t)


# ------------------------------------------------------- leakage-rate bounds

@dataclass(frozen=True)
class LeakageBounds:
    """Bounds on the per-step log-det growth ``(1/N)(1/2)(log det f^N(Pbar) - log det Pbar)``.

    ``delta_U`` is a valid upper bound for every ``N``; ``delta_U_naive`` is
    the variant that drops the ``-(1/2) log det Pbar`` term, which is only an
    upper bound when ``det Pbar >= 1``. ``delta_L = min(delta_1, delta_2)``
    with ``N_prime`` the split point between the two regimes.
    """

    delta_U: float
    delta_L: float
    N_prime: int
    delta_U_naive: float
    delta_1: float
    delta_2: float


def growth_rates(model: SystemModel, P_bar: np.ndarray, N: int) -> np.ndarray:
    """``q_M = (1/M)(1/2)(log det f^M(Pbar) - log det Pbar)`` for ``M = 1..N``."""
    lds = build_ladder(P_bar, N, model).logdets
    M = np.arange(1, N + 1)
    return 0.5 * (lds[1:] - lds[0]) / M


def leakage_bounds(model: SystemModel, steady: SteadyState,
                   n_prime_cap: int = N_PRIME_CAP) -> LeakageBounds:
    rho = spectral_radius(model.A)
    s_max = float(np.linalg.svd(model.A, compute_uv=False)[0])
    if s_max <= 1.0 or rho <= 1.0:
        raise NotApplicableError(
            f"bounds need an unstable A (spectral radius {rho:.6g}, largest singular value {s_max:.6g})")
    P = steady.P_bar
    nx = model.n_x
    eig_P = np.linalg.eigvalsh(P)
    eig_Q = np.linalg.eigvalsh(model.Q)
    _, ld_P = np.linalg.slogdet(P)

    # every eigenvalue of f^N(Pbar) is below c * s_max^(2N)
    c = eig_P[-1] + eig_Q[-1] / (s_max ** 2 - 1.0)
    naive = 0.5 * nx * math.log(c) + nx * math.log(s_max)
    # (1/N)(n_x/2 log c - 1/2 log det Pbar) + n_x log s_max, maximized over N >= 1
    delta_U = nx * math.log(s_max) + max(0.0, 0.5 * nx * math.log(c) - 0.5 * ld_P)

    # lower bound log rho + b/N, valid for every N
    b = 0.5 * (math.log(eig_P[0]) + (nx - 1) * math.log(eig_Q[0])) - 0.5 * ld_P
    log_rho = math.log(rho)
    if b >= 0:
        N_prime = 1
    else:
        N_prime = math.floor(-b / log_rho) + 1
        if N_prime > n_prime_cap:
            raise NotApplicableError(f"split point exceeds the search cap {n_prime_cap}")
    # inf over N >= N' of log rho + b/N
    delta_1 = log_rho + min(b, 0.0) / N_prime
    delta_2 = float(growth_rates(model, P, N_prime).min())
    return LeakageBounds(delta_U, min(delta_1, delta_2), N_prime, naive, delta_1, delta_2)

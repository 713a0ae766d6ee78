"""Scheduling when the eavesdropper's covariance is not observed.

The scheduler tracks a belief over the eavesdropper's ladder index, driven by
its own transmission decisions only. Beliefs are deterministic functions of
the decision history, so each one is keyed by that history rather than by its
floating-point content:

* exact mode: the whole history ``nu_1 .. nu_{k-1}``;
* truncated mode (depth ``N``): the history itself while it is shorter than
  ``N``, afterwards only its last ``N`` bits, which fully determine ``Phi^N``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DepthError, InputError, ResourceError, TruncationError
from .model import CovarianceLadder, SystemModel
from .sched_dp import TIE_TOL, Kind, ObjectiveConfig, decide

MAX_EXACT_DEPTH = 16
DEFAULT_TRUNCATION = 10


def _check_belief(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size == 0:
        raise InputError("belief must be a non-empty vector")
    if np.any(pi < -1e-15) or abs(pi.sum() - 1.0) > 1e-12:
        raise InputError("belief must be a probability vector")
    return pi


def belief_update(pi, nu: int, model: SystemModel) -> np.ndarray:
    """Exact belief recursion; raises :class:`DepthError` if mass would fall off the end."""
    pi = _check_belief(pi)
    if pi[-1] > 0:
        raise DepthError("belief has mass at its last index; extend the vector first")
    out = np.empty_like(pi)
    if nu:
        out[0] = model.lam_e
        out[1:] = (1 - model.lam_e) * pi[:-1]
    else:
        out[0] = 0.0
        out[1:] = pi[:-1]
    return out


def belief_update_truncated(pi, nu: int, model: SystemModel, N: int | None = None) -> np.ndarray:
    """Belief recursion on ``N+1`` components whose last entry collects the tail."""
    pi = _check_belief(pi)
    if N is None:
        N = pi.size - 1
    if pi.size != N + 1:
        raise InputError(f"belief length {pi.size} does not match N={N}")
    shifted = np.empty_like(pi)
    shifted[0] = 0.0
    shifted[1:] = pi[:-1]
    shifted[-1] += pi[-1]
    if nu:
        shifted *= 1 - model.lam_e
        shifted[0] = model.lam_e
    return shifted


def expected_eaves_stat(pi, ladder: CovarianceLadder, kind: Kind | str) -> float:
    """Expected eavesdropper statistic after one more prediction step.

    Covariance: ``sum_i tr f^{i+1}(Pbar) pi_i``; information:
    ``sum_i 0.5 log det f^{i+1}(Pbar) pi_i``.
    """
    pi = np.asarray(pi, dtype=float)
    ladder.require(pi.size)
    if Kind(kind) is Kind.COVARIANCE:
        stat = ladder.traces[1:pi.size + 1]
    else:
        stat = 0.5 * ladder.logdets[1:pi.size + 1]
    return float(pi @ stat)


def _eaves_stat_rows(beliefs: np.ndarray, ladder: CovarianceLadder, kind: Kind) -> np.ndarray:
    D = beliefs.shape[1]
    if kind is Kind.COVARIANCE:
        return beliefs @ ladder.traces[1:D + 1]
    return beliefs @ (0.5 * ladder.logdets[1:D + 1])


@dataclass(frozen=True)
class HistoryKey:
    """Canonical belief identifier: ``length`` decisions packed LSB-newest in ``bits``.

    ``saturated`` marks truncated-mode keys that only keep the last ``N`` bits.
    """

    length: int
    bits: int
    saturated: bool = False

    def child(self, nu: int, N: int | None) -> "HistoryKey":
        length, bits = self.length + 1, (self.bits << 1) | int(nu)
        if N is not None and length >= N:
            return HistoryKey(N, bits & ((1 << N) - 1), True)
        return HistoryKey(length, bits, self.saturated)

    @property
    def label(self) -> str:
        s = format(self.bits, f"0{self.length}b") if self.length else ""
        return ("t" if self.saturated else "h") + s

    def decisions(self) -> list[int]:
        return [(self.bits >> (self.length - 1 - i)) & 1 for i in range(self.length)]


ROOT = HistoryKey(0, 0)


def belief_of(key: HistoryKey, model: SystemModel, D: int, N: int | None) -> np.ndarray:
    """Belief (length ``D+1``) generated from a point mass at index 0 by ``key``'s decisions."""
    pi = np.zeros(D + 1)
    pi[0] = 1.0
    for nu in key.decisions():
        if N is None:
            pi = belief_update(pi, nu, model)
        else:
            pi = belief_update_truncated(pi, nu, model, N)
    return pi


@dataclass(frozen=True)
class BeliefNode:
    belief: np.ndarray
    id: HistoryKey
    children: tuple


@dataclass(frozen=True, eq=False)
class BeliefStage:
    """All quantities of one stage ``k``; rows follow ``keys``."""

    k: int
    keys: tuple
    beliefs: np.ndarray   # (B, D+1)
    values: np.ndarray    # (B, K+1) restricted grid
    nu: np.ndarray        # (B, K+1)
    psi: np.ndarray       # (B, K+1)
    wide_values: np.ndarray = field(repr=False)
    index: dict = field(repr=False, default_factory=dict)

    def row(self, key: HistoryKey) -> int:
        try:
            return self.index[key]
        except KeyError:
            raise KeyError(f"belief {key.label} not reachable at stage {self.k}") from None


@dataclass(frozen=True, eq=False)
class PartialInfoSolution:
    """Values and decisions keyed by ``(k, n, belief-id)``; ``stages[k-1]`` is stage ``k``."""

    K: int
    N: int | None
    stages: tuple
    objective: ObjectiveConfig
    metadata: dict = field(default_factory=dict)

    def stage(self, k: int) -> BeliefStage:
        return self.stages[k - 1]

    def value(self, k: int, n: int, key: HistoryKey = ROOT) -> float:
        st = self.stage(k)
        return float(st.values[st.row(key), n])

    def action(self, k: int, n: int, key: HistoryKey) -> int:
        st = self.stage(k)
        return int(st.nu[st.row(key), n])

    def node_count(self) -> int:
        return sum(len(st.keys) for st in self.stages) * (self.K + 1)

    def policy_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "n", "belief_id", "nu"])
        for st in self.stages:
            for r, key in enumerate(st.keys):
                for n in range(self.K + 1):
                    w.writerow([st.k, n, key.label, int(st.nu[r, n])])
        return buf.getvalue()

    def beliefs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        D = self.stages[0].beliefs.shape[1]
        w.writerow(["belief_id"] + [f"p{i}" for i in range(D)])
        seen = set()
        for st in self.stages:
            for r, key in enumerate(st.keys):
                if key in seen:
                    continue
                seen.add(key)
                w.writerow([key.label] + [repr(float(p)) for p in st.beliefs[r]])
        return buf.getvalue()


def _partial_stage_costs(n_idx, E, objective, ladder, model):
    lam, lam_e, beta = model.lam, model.lam_e, objective.beta
    tr = ladder.traces
    tr_fp = tr[n_idx + 1][None, :]
    E = E[:, None]
    est0 = beta * tr_fp
    est1 = beta * (lam * tr[0] + (1 - lam) * tr_fp)
    if objective.kind is Kind.COVARIANCE:
        c0 = est0 - (1 - beta) * E
        c1 = est1 - (1 - beta) * (lam_e * tr[0] + (1 - lam_e) * E)
    else:
        c0 = est0 + np.zeros_like(E)
        c1 = est1 + (1 - beta) * lam_e * (E - 0.5 * ladder.logdets[0])
    return c0, c1


def solve_finite_partial(model: SystemModel, ladder: CovarianceLadder, K: int,
                         objective: ObjectiveConfig, N: int | None = None,
                         max_exact_depth: int = MAX_EXACT_DEPTH,
                         tie_tol: float = TIE_TOL) -> PartialInfoSolution:
    """Exact POMDP-style recursion over ``(n, belief)``.

    ``N=None`` keeps exact beliefs of length ``K+1``; an integer ``N`` switches
    to the truncated recursion with ``N+1`` components.
    """
    if K < 1:
        raise InputError("horizon K must be >= 1")
    if N is None and K > max_exact_depth:
        raise ResourceError(
            f"exact belief tree for K={K} exceeds the cap {max_exact_depth}; "
            f"pass a truncation depth N (e.g. {DEFAULT_TRUNCATION})")
    if N is not None and N < 1:
        raise InputError("truncation depth N must be >= 1")
    D = K if N is None else N
    need = max(2 * K, D + 1)
    if ladder.N < need:
        raise TruncationError(f"ladder depth {ladder.N} too shallow; need {need}")

    # forward: reachable keys per stage (stage k sees histories of length k-1)
    layers = [[ROOT]]
    for _ in range(K):
        nxt = {}
        for key in layers[-1]:
            for nu in (0, 1):
                nxt.setdefault(key.child(nu, N), None)
        layers.append(sorted(nxt, key=lambda h: (h.length, h.bits)))
    beliefs = []
    cache = {}
    for layer in layers:
        rows = []
        for key in layer:
            if key not in cache:
                cache[key] = belief_of(key, model, D, N)
            rows.append(cache[key])
        beliefs.append(np.array(rows))

    lam = model.lam
    # stage K+1 values are zero on [0, 2K]
    J_next = np.zeros((len(layers[K]), 2 * K + 1))
    next_index = {key: i for i, key in enumerate(layers[K])}
    stages = []
    for k in range(K, 0, -1):
        keys = layers[k - 1]
        G = K + k - 1
        n_idx = np.arange(G + 1)
        E = _eaves_stat_rows(beliefs[k - 1], ladder, objective.kind)
        c0, c1 = _partial_stage_costs(n_idx, E, objective, ladder, model)
        r0 = np.array([next_index[key.child(0, N)] for key in keys])
        r1 = np.array([next_index[key.child(1, N)] for key in keys])
        q0 = c0 + J_next[r0, 1:G + 2]
        q1 = c1 + lam * J_next[r1, 0][:, None] + (1 - lam) * J_next[r1, 1:G + 2]
        act = decide(q0, q1, tie_tol)
        J_k = np.where(act == 1, q1, q0)
        index = {key: i for i, key in enumerate(keys)}
        stages.append(BeliefStage(k, tuple(keys), beliefs[k - 1], J_k[:, :K + 1],
                                  act[:, :K + 1], (q0 - q1)[:, :K + 1], J_k, index))
        J_next, next_index = J_k, index
    stages.reverse()
    meta = {"objective": objective.kind.value, "beta": objective.beta,
            "model": model.fingerprint(), "info": "partial",
            "truncation": "exact" if N is None else N}
    return PartialInfoSolution(K, N, tuple(stages), objective, meta)


def psi_gap(k: int, n: int, key: HistoryKey, solved: PartialInfoSolution,
            model: SystemModel, ladder: CovarianceLadder) -> float:
    """Cost of not transmitting minus cost of transmitting at ``(k, n, belief)``."""
    st = solved.stage(k)
    r = st.row(key)
    N, K = solved.N, solved.K
    if k < K:
        nxt = solved.stage(k + 1)
        J0 = nxt.wide_values[nxt.row(key.child(0, N))]
        J1 = nxt.wide_values[nxt.row(key.child(1, N))]
    else:
        J0 = J1 = np.zeros(2 * K + 1)
    E = _eaves_stat_rows(st.beliefs[r:r + 1], ladder, solved.objective.kind)
    c0, c1 = _partial_stage_costs(np.array([n]), E, solved.objective, ladder, model)
    lam = model.lam
    q0 = c0[0, 0] + J0[n + 1]
    q1 = c1[0, 0] + lam * J1[0] + (1 - lam) * J1[n + 1]
    return float(q0 - q1)


def node_bound(K: int) -> int:
    """Upper bound ``(K+1)(2^{K+1}-1)`` on reachable ``(n, belief)`` pairs in exact mode."""
    return (K + 1) * (2 ** (K + 1) - 1)

"""Finite-horizon scheduling when the eavesdropper's covariance is known.

States are pairs of ladder indices ``(n, n_e)``; the remote estimator holds
``f^n(Pbar)`` and the eavesdropper ``f^{n_e}(Pbar)``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, TruncationError
from .model import CovarianceLadder, SystemModel

TIE_TOL = 1e-12


class Kind(str, enum.Enum):
    COVARIANCE = "covariance"
    INFORMATION = "information"


@dataclass(frozen=True)
class ObjectiveConfig:
    """Tradeoff weight ``beta`` and which eavesdropper penalty to use.

    ``COVARIANCE`` rewards a large eavesdropper error covariance;
    ``INFORMATION`` charges the mutual information leaked per interception
    (natural log, so in nats).
    """

    beta: float
    kind: Kind = Kind.COVARIANCE

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise InputError(f"beta must lie in (0, 1), got {self.beta}")
        object.__setattr__(self, "kind", Kind(self.kind))


def decide(q0, q1, tie_tol: float = TIE_TOL):
    """Transmit only when it is strictly cheaper; ties go to ``nu = 0``."""
    q0 = np.asarray(q0)
    tol = tie_tol * np.maximum(1.0, np.abs(q0))
    return (np.asarray(q1) < q0 - tol).astype(np.int8)


def stage_cost_arrays(n, n_e, objective: ObjectiveConfig, ladder: CovarianceLadder,
                      model: SystemModel):
    """Expected one-stage costs ``(c0, c1)`` for ``nu = 0`` and ``nu = 1``.

    ``n`` and ``n_e`` broadcast against each other.
    """
    n = np.asarray(n)
    n_e = np.asarray(n_e)
    top = int(max(np.max(n), np.max(n_e))) + 1
    ladder.require(top)
    lam, lam_e, beta = model.lam, model.lam_e, objective.beta
    tr = ladder.traces
    tr_fp = tr[n + 1]
    est0 = beta * tr_fp
    est1 = beta * (lam * tr[0] + (1 - lam) * tr_fp)
    if objective.kind is Kind.COVARIANCE:
        tr_fe = tr[n_e + 1]
        c0 = est0 - (1 - beta) * tr_fe
        c1 = est1 - (1 - beta) * (lam_e * tr[0] + (1 - lam_e) * tr_fe)
    else:
        leak = 0.5 * (ladder.logdets[n_e + 1] - ladder.logdets[0])
        c0 = est0 + np.zeros_like(leak)
        c1 = est1 + (1 - beta) * lam_e * leak
    return c0, c1


def stage_cost(n: int, n_e: int, nu: int, objective: ObjectiveConfig,
               ladder: CovarianceLadder, model: SystemModel) -> float:
    if n + 1 > ladder.N or n_e + 1 > ladder.N:
        raise TruncationError(f"indices ({n}, {n_e}) exceed ladder depth {ladder.N} - 1")
    c0, c1 = stage_cost_arrays(n, n_e, objective, ladder, model)
    return float(c1 if nu else c0)


def q_values_full(c0, c1, J_ff, J_0f, J_f0, J_00, lam: float, lam_e: float):
    """Action values given the successor values.

    ``J_ff[i, j] = J(f(P_i), f(P_e,j))``, ``J_0f[j] = J(Pbar, f(P_e,j))``,
    ``J_f0[i] = J(f(P_i), Pbar)`` and ``J_00 = J(Pbar, Pbar)``.
    """
    q0 = c0 + J_ff
    q1 = (c1 + lam * lam_e * J_00 + lam * (1 - lam_e) * J_0f[None, :]
          + (1 - lam) * lam_e * J_f0[:, None] + (1 - lam) * (1 - lam_e) * J_ff)
    return q0, q1


@dataclass(frozen=True, eq=False)
class ValueTable:
    """``J[k-1, n, n_e]`` for ``k = 1..K+1`` on the ``(K+1)^2`` grid.

    ``wide[k-1]`` holds the same stage on the larger grid ``[0, 2K-k]^2`` that
    the exact recursion needs; ``J[K]`` (stage ``K+1``) is identically zero.
    """

    J: np.ndarray
    K: int
    wide: tuple = field(repr=False, default=())

    def at(self, k: int, n: int, n_e: int) -> float:
        return float(self.J[k - 1, n, n_e])

    def to_csv(self) -> str:
        return _grid_csv(self.J[: self.K], "J", fmt="{:.17g}")


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Decisions ``nu[k-1, n, n_e]`` for stages ``k = 1..K``."""

    nu: np.ndarray
    K: int
    metadata: dict = field(default_factory=dict)

    def at(self, k: int, n: int, n_e: int) -> int:
        return int(self.nu[k - 1, n, n_e])

    def stage(self, k: int) -> np.ndarray:
        return self.nu[k - 1]

    def to_csv(self) -> str:
        return _grid_csv(self.nu, "nu", fmt="{:d}")


def _grid_csv(arr: np.ndarray, col: str, fmt: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "n", "n_e", col])
    for k in range(arr.shape[0]):
        for n in range(arr.shape[1]):
            for ne in range(arr.shape[2]):
                v = arr[k, n, ne]
                w.writerow([k + 1, n, ne, fmt.format(int(v) if col == "nu" else float(v))])
    return buf.getvalue()


@dataclass(frozen=True, eq=False)
class FullInfoSolution:
    values: ValueTable
    policy: PolicyTable
    phi: np.ndarray  # phi[k-1, n, n_e] = Q(nu=0) - Q(nu=1)
    objective: ObjectiveConfig


def required_depth(K: int) -> int:
    """Ladder depth needed by the exact recursion over the ``(K+1)^2`` grid."""
    return 2 * K


def solve_finite_full(model: SystemModel, ladder: CovarianceLadder, K: int,
                      objective: ObjectiveConfig, tie_tol: float = TIE_TOL) -> FullInfoSolution:
    """Backward induction over ``(n, n_e)`` for stages ``K, ..., 1``.

    Starting anywhere on ``[0, K]^2`` at stage 1, the holding counts can reach
    ``2K`` before the horizon ends, so the recursion runs on stage-dependent
    wider grids and the tables are then cut back to ``[0, K]^2``.
    """
    if K < 1:
        raise InputError("horizon K must be >= 1")
    if ladder.N < required_depth(K):
        raise TruncationError(
            f"ladder depth {ladder.N} too shallow for horizon {K}; need {required_depth(K)}")
    lam, lam_e = model.lam, model.lam_e
    J_next = np.zeros((2 * K + 1, 2 * K + 1))  # stage K+1 on [0, 2K]^2
    wide = [J_next]
    J = np.zeros((K + 1, K + 1, K + 1))
    nu = np.zeros((K, K + 1, K + 1), dtype=np.int8)
    phi = np.zeros((K, K + 1, K + 1))
    for k in range(K, 0, -1):
        G = K + k - 1
        idx = np.arange(G + 1)
        c0, c1 = stage_cost_arrays(idx[:, None], idx[None, :], objective, ladder, model)
        J_ff = J_next[1:G + 2, 1:G + 2]
        q0, q1 = q_values_full(c0, c1, J_ff, J_next[0, 1:G + 2], J_next[1:G + 2, 0],
                               J_next[0, 0], lam, lam_e)
        act = decide(q0, q1, tie_tol)
        J_k = np.where(act == 1, q1, q0)
        J[k - 1] = J_k[: K + 1, : K + 1]
        nu[k - 1] = act[: K + 1, : K + 1]
        phi[k - 1] = (q0 - q1)[: K + 1, : K + 1]
        wide.append(J_k)
        J_next = J_k
    wide.reverse()
    meta = {"objective": objective.kind.value, "beta": objective.beta,
            "model": model.fingerprint(), "info": "full"}
    return FullInfoSolution(ValueTable(J, K, tuple(wide)), PolicyTable(nu, K, meta), phi, objective)


def phi_gap(k: int, n: int, n_e: int, values: ValueTable, objective: ObjectiveConfig,
            ladder: CovarianceLadder, model: SystemModel) -> float:
    """Cost of not transmitting minus cost of transmitting at ``(k, n, n_e)``.

    Positive exactly where the optimal decision is to transmit (up to ties).
    """
    if not 1 <= k <= values.K:
        raise InputError(f"stage {k} outside 1..{values.K}")
    J_next = values.wide[k]
    lam, lam_e = model.lam, model.lam_e
    c0, c1 = stage_cost_arrays(n, n_e, objective, ladder, model)
    q0 = c0 + J_next[n + 1, n_e + 1]
    q1 = (c1 + lam * lam_e * J_next[0, 0] + lam * (1 - lam_e) * J_next[0, n_e + 1]
          + (1 - lam) * lam_e * J_next[n + 1, 0] + (1 - lam) * (1 - lam_e) * J_next[n + 1, n_e + 1])
    return float(q0 - q1)

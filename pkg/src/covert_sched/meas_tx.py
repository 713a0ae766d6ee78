"""Scheduling when raw measurements (not local estimates) are sent.

Both receivers run Kalman filters, so each step applies ``g`` (packet
received) or ``f`` (nothing received) to the one-step prediction covariance.
After ``d`` steps the reachable covariances are compositions of ``d`` maps
applied to ``Pbar+``. Composition index ``i`` at depth ``d`` reads as a
``d``-bit string, most significant bit first, with ``g -> 0`` and ``f -> 1``;
the last bit is the map applied first. Appending a newer map ``m`` therefore
yields the child index ``i + m * 2^d``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ResourceError
from .model import SteadyState, SystemModel, psd_leq, riccati_predict, riccati_update
from .model import steady_state_filter
from .report import StructureReport
from .sched_dp import TIE_TOL, decide

MEAS_CAP = 12


def _f_batch(X: np.ndarray, model: SystemModel) -> np.ndarray:
    A = model.A
    Y = A @ X @ A.T + model.Q
    return 0.5 * (Y + np.swapaxes(Y, -1, -2))


def _g_batch(X: np.ndarray, model: SystemModel) -> np.ndarray:
    A, C = model.A, model.C
    S = C @ X @ C.T + model.R
    AXC = A @ X @ C.T
    corr = AXC @ np.linalg.solve(S, np.swapaxes(AXC, -1, -2))
    Y = A @ X @ A.T - corr + model.Q
    return 0.5 * (Y + np.swapaxes(Y, -1, -2))


def composition_value(bits: str, P0, model: SystemModel, cache: dict | None = None) -> np.ndarray:
    """Apply the maps coded by ``bits`` to ``P0``: the last character acts first.

    ``cache`` (optional) maps already-evaluated trailing substrings to their
    values, so sibling strings share work.
    """
    if any(b not in "01" for b in bits):
        raise InputError(f"composition code must be a 0/1 string, got {bits!r}")
    X = np.atleast_2d(np.asarray(P0, dtype=float))
    start = len(bits)
    if cache is not None:
        for s in range(len(bits) + 1):
            if bits[s:] in cache:
                X, start = cache[bits[s:]], s
                break
    for s in range(start - 1, -1, -1):
        X = riccati_predict(X, model) if bits[s] == "1" else riccati_update(X, model)
        if cache is not None:
            cache[bits[s:]] = X
    return X


def index_bits(i: int, depth: int) -> str:
    return format(i, f"0{depth}b") if depth else ""


@dataclass(frozen=True, eq=False)
class CompositionTree:
    """All composition values up to a depth; ``levels[d][i]`` is index ``i`` at depth ``d``."""

    levels: tuple
    tr_f: tuple   # tr f(levels[d][i])
    tr_g: tuple   # tr g(levels[d][i])

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def value(self, bits: str) -> np.ndarray:
        return self.levels[len(bits)][int(bits, 2) if bits else 0]


def composition_tree(P0, depth: int, model: SystemModel) -> CompositionTree:
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    levels = [P0[None]]
    tr_f, tr_g = [], []
    for d in range(depth + 1):
        X = levels[d]
        Fx, Gx = _f_batch(X, model), _g_batch(X, model)
        tr_f.append(np.trace(Fx, axis1=1, axis2=2))
        tr_g.append(np.trace(Gx, axis1=1, axis2=2))
        if d < depth:
            levels.append(np.concatenate([Gx, Fx], axis=0))  # new MSB: g -> 0, f -> 1
    return CompositionTree(tuple(levels), tuple(tr_f), tuple(tr_g))


def meas_stage_cost(P, Pe, nu: int, beta: float, model: SystemModel) -> float:
    """Expected one-step cost ``beta tr P+ - (1 - beta) tr Pe+`` given prediction covariances."""
    lam, lam_e = model.lam, model.lam_e
    fP, gP = np.trace(riccati_predict(P, model)), np.trace(riccati_update(P, model))
    fE, gE = np.trace(riccati_predict(Pe, model)), np.trace(riccati_update(Pe, model))
    if nu:
        return float(beta * (lam * gP + (1 - lam) * fP) - (1 - beta) * (lam_e * gE + (1 - lam_e) * fE))
    return float(beta * fP - (1 - beta) * fE)


def _check_horizon(K: int, cap: int) -> None:
    if K < 1:
        raise InputError("horizon K must be >= 1")
    if K > cap:
        raise ResourceError(f"measurement-mode DP is capped at K={cap} (requested {K})")


def _check_beta(beta: float) -> None:
    if not 0.0 < beta < 1.0:
        raise InputError(f"beta must lie in (0, 1), got {beta}")


@dataclass(frozen=True, eq=False)
class MeasSolution:
    """Stage tables for measurement-mode scheduling.

    ``values[k-1][i, j]``, ``nu[k-1][i, j]`` and ``phi[k-1][i, j]`` (cost of
    not transmitting minus cost of transmitting) are indexed by the estimator
    composition ``i`` and either the eavesdropper composition (``info='full'``)
    or the decision history (``info='partial'``) ``j``, both at depth ``k-1``.
    """

    K: int
    beta: float
    info: str
    tree: CompositionTree = field(repr=False)
    values: tuple = field(repr=False)
    nu: tuple = field(repr=False)
    phi: tuple = field(repr=False)

    @property
    def root_value(self) -> float:
        return float(self.values[0][0, 0])

    def action(self, k: int, i: int, j: int) -> int:
        return int(self.nu[k - 1][i, j])

    def policy_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "node_bits", "e_node_or_belief_id", "nu"])
        for k in range(1, self.K + 1):
            d = k - 1
            tab = self.nu[k - 1]
            for i in range(tab.shape[0]):
                for j in range(tab.shape[1]):
                    other = ("e" if self.info == "full" else "h") + index_bits(j, d)
                    w.writerow([k, "b" + index_bits(i, d), other, int(tab[i, j])])
        return buf.getvalue()


def _root(model: SystemModel, steady: SteadyState | None) -> np.ndarray:
    return (steady or steady_state_filter(model)).P_bar_plus


def solve_finite_full_meas(model: SystemModel, K: int, beta: float,
                           steady: SteadyState | None = None, cap: int = MEAS_CAP,
                           tie_tol: float = TIE_TOL) -> MeasSolution:
    """Exact DP over (estimator, eavesdropper) composition pairs, both rooted at ``Pbar+``."""
    _check_horizon(K, cap)
    _check_beta(beta)
    tree = composition_tree(_root(model, steady), K - 1, model)
    lam, lam_e = model.lam, model.lam_e
    J_next = None
    values, nus, phis = [], [], []
    for k in range(K, 0, -1):
        d = k - 1
        D = 1 << d
        tf, tg = tree.tr_f[d], tree.tr_g[d]
        est0 = beta * tf
        est1 = beta * (lam * tg + (1 - lam) * tf)
        eav0 = (1 - beta) * tf
        eav1 = (1 - beta) * (lam_e * tg + (1 - lam_e) * tf)
        q0 = est0[:, None] - eav0[None, :]
        q1 = est1[:, None] - eav1[None, :]
        if J_next is not None:
            gg, gf = J_next[:D, :D], J_next[:D, D:]
            fg, ff = J_next[D:, :D], J_next[D:, D:]
            q0 = q0 + ff
            q1 = q1 + (lam * lam_e * gg + lam * (1 - lam_e) * gf
                       + (1 - lam) * lam_e * fg + (1 - lam) * (1 - lam_e) * ff)
        act = decide(q0, q1, tie_tol)
        J_next = np.where(act == 1, q1, q0)
        values.append(J_next)
        nus.append(act)
        phis.append(q0 - q1)
    return MeasSolution(K, beta, "full", tree, tuple(reversed(values)),
                        tuple(reversed(nus)), tuple(reversed(phis)))


def _belief_step(B: np.ndarray, lam_e: float) -> np.ndarray:
    m = B.shape[0]
    nxt = np.zeros((2 * m, 2 * m))
    nxt[:m, m:] = B                  # nu = 0: everything takes the f branch
    nxt[m:, :m] = lam_e * B          # nu = 1: intercepted -> g branch
    nxt[m:, m:] = (1 - lam_e) * B
    return nxt


def meas_beliefs(model: SystemModel, depth: int) -> np.ndarray:
    """Beliefs over eavesdropper compositions for every decision history of length ``depth``.

    Row ``h`` (newest decision as the most significant bit, matching the
    composition indices) is the distribution over the ``2^depth`` indices.
    """
    B = np.ones((1, 1))
    for _ in range(depth):
        B = _belief_step(B, model.lam_e)
    return B


def solve_finite_partial_meas(model: SystemModel, K: int, beta: float,
                              steady: SteadyState | None = None, cap: int = MEAS_CAP,
                              tie_tol: float = TIE_TOL) -> MeasSolution:
    """DP over (estimator composition, decision history) with the belief recursion.

    The eavesdropper's prediction covariance is replaced by its conditional
    expectation given the decisions made so far.
    """
    _check_horizon(K, cap)
    _check_beta(beta)
    tree = composition_tree(_root(model, steady), K - 1, model)
    lam, lam_e = model.lam, model.lam_e
    Ef, Eg = [], []
    B = np.ones((1, 1))
    for d in range(K):
        Ef.append(B @ tree.tr_f[d])
        Eg.append(B @ tree.tr_g[d])
        if d < K - 1:
            B = _belief_step(B, lam_e)
    J_next = None
    values, nus, phis = [], [], []
    for k in range(K, 0, -1):
        d = k - 1
        D = 1 << d
        tf, tg = tree.tr_f[d], tree.tr_g[d]
        q0 = beta * tf[:, None] - (1 - beta) * Ef[d][None, :]
        q1 = (beta * (lam * tg + (1 - lam) * tf))[:, None] \
            - (1 - beta) * (lam_e * Eg[d] + (1 - lam_e) * Ef[d])[None, :]
        if J_next is not None:
            q0 = q0 + J_next[D:, :D]                       # f child, decision 0
            q1 = q1 + lam * J_next[:D, D:] + (1 - lam) * J_next[D:, D:]
        act = decide(q0, q1, tie_tol)
        J_next = np.where(act == 1, q1, q0)
        values.append(J_next)
        nus.append(act)
        phis.append(q0 - q1)
    return MeasSolution(K, beta, "partial", tree, tuple(reversed(values)),
                        tuple(reversed(nus)), tuple(reversed(phis)))


# ------------------------------------------------------- threshold scans

def monotone_scan(mats, phi, increasing: bool = True, tie_tol: float = TIE_TOL,
                  labels=None):
    """Check that decisions are monotone in the PSD order of ``mats``.

    ``phi`` is the cost of not transmitting minus the cost of transmitting;
    points with ``|phi|`` inside the tie tolerance may take either action.
    ``increasing=True`` demands that a larger covariance never switches a
    strict transmit into a strict hold. Returns ``(ok, witness)``.
    """
    mats = [np.atleast_2d(np.asarray(M, dtype=float)) for M in mats]
    phi = np.asarray(phi, dtype=float)
    labels = labels if labels is not None else [str(i) for i in range(len(mats))]
    tol = tie_tol * np.maximum(1.0, np.abs(phi))
    one = phi > tol
    zero = phi < -tol
    lo_act, hi_act = (one, zero) if increasing else (zero, one)
    if not mats:
        return True, ""
    if mats[0].shape == (1, 1):
        v = np.array([M[0, 0] for M in mats])
        if not lo_act.any() or not hi_act.any():
            return True, ""
        a = np.flatnonzero(lo_act)[np.argmin(v[lo_act])]
        b = np.flatnonzero(hi_act)[np.argmax(v[hi_act])]
        if v[a] <= v[b]:
            return False, _witness(labels, a, b, v[a], v[b], increasing)
        return True, ""
    for a in np.flatnonzero(lo_act):
        for b in np.flatnonzero(hi_act):
            if a != b and psd_leq(mats[a], mats[b]):
                return False, _witness(labels, a, b, np.trace(mats[a]), np.trace(mats[b]), increasing)
    return True, ""


def _witness(labels, a, b, va, vb, increasing):
    first, second = ("1", "0") if increasing else ("0", "1")
    return (f"nu={first} at {labels[a]} (size {float(va):.6g}) but nu={second} at "
            f"{labels[b]} (size {float(vb):.6g}), ordered {labels[a]} <= {labels[b]}")


def scalar_threshold_check(solution: MeasSolution, k: int, axis: str = "P",
                           tie_tol: float = TIE_TOL) -> StructureReport:
    """Threshold structure of stage ``k`` over the reachable composition values.

    ``axis='P'``: at each fixed eavesdropper state (or history), transmitting
    must be monotone nondecreasing in the estimator covariance. ``axis='Pe'``
    (full information only): nonincreasing in the eavesdropper covariance.
    """
    if not 1 <= k <= solution.K:
        raise InputError(f"stage {k} outside 1..{solution.K}")
    if axis not in ("P", "Pe"):
        raise InputError("axis must be 'P' or 'Pe'")
    if axis == "Pe" and solution.info != "full":
        raise InputError("the eavesdropper axis needs a full-information solution")
    d = k - 1
    mats = solution.tree.levels[d]
    phi = solution.phi[k - 1]
    labels = ["b" + index_bits(i, d) for i in range(mats.shape[0])]
    report = StructureReport()
    tag = "e" if solution.info == "full" else "h"
    if axis == "P":
        for j in range(phi.shape[1]):
            ok, wit = monotone_scan(mats, phi[:, j], True, tie_tol, labels)
            report.add(f"k={k} P-scan at {tag}{index_bits(j, d)}", ok, wit)
    else:
        for i in range(phi.shape[0]):
            ok, wit = monotone_scan(mats, phi[i, :], False, tie_tol,
                                    ["e" + index_bits(j, d) for j in range(mats.shape[0])])
            report.add(f"k={k} Pe-scan at b{index_bits(i, d)}", ok, wit)
    return report


def final_stage_scan(model: SystemModel, points, Pe, beta: float,
                     tie_tol: float = TIE_TOL) -> tuple[StructureReport, list]:
    """Last-stage decisions at given estimator covariances with ``Pe`` fixed.

    Returns the scan report and the ``(cost_hold, cost_send)`` pair per point.
    """
    costs = [(meas_stage_cost(P, Pe, 0, beta, model), meas_stage_cost(P, Pe, 1, beta, model))
             for P in points]
    phi = [c0 - c1 for c0, c1 in costs]
    ok, wit = monotone_scan(points, phi, True, tie_tol, [f"P{i + 1}" for i in range(len(points))])
    report = StructureReport()
    report.add("final-stage P-scan", ok, wit)
    return report, costs

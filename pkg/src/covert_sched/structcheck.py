"""Verifiers for the structural properties of computed schedules.

Threshold scans look at the decision tables produced by the solvers; the
lemma suite checks the monotonicity inequalities the threshold results rest
on, using randomly sampled PSD-ordered pairs.
"""

from __future__ import annotations

import numpy as np

from .belief_dp import PartialInfoSolution
from .horizon_inf import AvgCostSolution, BeliefAvgCostSolution
from .model import CovarianceLadder, SystemModel, riccati_predict, riccati_update, symmetrize
from .report import Check, StructureReport
from .sched_dp import FullInfoSolution, PolicyTable

__all__ = ["Check", "StructureReport", "scan_sequence", "verify_threshold_rows",
           "verify_full_solution", "verify_partial_solution", "verify_avg_solution",
           "verify_lemma_suite"]

# gaps this small (relative to the table's scale) count as ties
STRUCT_TIE_TOL = 1e-9


def scan_sequence(nu, phi=None, increasing: bool = True, tol: float = 0.0):
    """Check that a 0/1 sequence switches at most once, in the given direction.

    Entries with ``|phi| <= tol`` are ties and may take either value. Returns
    ``(ok, (i, j))`` where the witness pair has the wrong order when not ok.
    """
    nu = np.asarray(nu).astype(int)
    if phi is None:
        strict1, strict0 = nu == 1, nu == 0
    else:
        phi = np.asarray(phi, dtype=float)
        strict1, strict0 = phi > tol, phi < -tol
    early, late = (strict1, strict0) if increasing else (strict0, strict1)
    if not early.any() or not late.any():
        return True, None
    i = int(np.flatnonzero(early)[0])
    after = np.flatnonzero(late[i + 1:])
    if after.size:
        return False, (i, i + 1 + int(after[0]))
    return True, None


def _table_tol(phi) -> float:
    if phi is None:
        return 0.0
    return STRUCT_TIE_TOL * max(1.0, float(np.max(np.abs(phi))))


def verify_threshold_rows(policy, axis: str = "n", phi=None, label: str = "") -> StructureReport:
    """Threshold scans of a decision table indexed ``[stage, n, n_e]``.

    ``axis='n'``: for every ``(stage, n_e)``, decisions along ``n`` go 0 -> 1
    at most once. ``axis='n_e'``: for every ``(stage, n)``, decisions along
    ``n_e`` go 1 -> 0 at most once. ``phi`` (same shape) marks ties.
    """
    nu = policy.nu if isinstance(policy, PolicyTable) else np.asarray(policy)
    if nu.ndim == 2:
        nu = nu[None]
        phi = None if phi is None else np.asarray(phi)[None]
    if axis not in ("n", "n_e"):
        raise ValueError("axis must be 'n' or 'n_e'")
    tol = _table_tol(phi)
    report = StructureReport()
    prefix = f"{label} " if label else ""
    for s in range(nu.shape[0]):
        for c in range(nu.shape[2] if axis == "n" else nu.shape[1]):
            if axis == "n":
                seq, gap = nu[s, :, c], None if phi is None else phi[s, :, c]
                ok, w = scan_sequence(seq, gap, True, tol)
                wit = "" if ok else f"k={s + 1} n_e={c}: nu=1 at n={w[0]}, nu=0 at n={w[1]}"
                report.add(f"{prefix}k={s + 1} n_e={c} threshold in n", ok, wit)
            else:
                seq, gap = nu[s, c, :], None if phi is None else phi[s, c, :]
                ok, w = scan_sequence(seq, gap, False, tol)
                wit = "" if ok else f"k={s + 1} n={c}: nu=0 at n_e={w[0]}, nu=1 at n_e={w[1]}"
                report.add(f"{prefix}k={s + 1} n={c} threshold in n_e", ok, wit)
    return report


def verify_full_solution(sol: FullInfoSolution, label: str = "") -> StructureReport:
    rep = verify_threshold_rows(sol.policy, "n", sol.phi, label)
    return rep.extend(verify_threshold_rows(sol.policy, "n_e", sol.phi, label))


def verify_partial_solution(sol: PartialInfoSolution, label: str = "") -> StructureReport:
    """Threshold in ``n`` for every stage and every reachable belief."""
    report = StructureReport()
    prefix = f"{label} " if label else ""
    tol = STRUCT_TIE_TOL * max(1.0, max(float(np.max(np.abs(st.psi))) for st in sol.stages))
    for st in sol.stages:
        for r, key in enumerate(st.keys):
            ok, w = scan_sequence(st.nu[r], st.psi[r], True, tol)
            wit = "" if ok else f"k={st.k} belief={key.label}: nu=1 at n={w[0]}, nu=0 at n={w[1]}"
            report.add(f"{prefix}k={st.k} belief={key.label} threshold in n", ok, wit)
    return report


def verify_avg_solution(sol, label: str = "") -> StructureReport:
    """Threshold structure of a stationary policy (known or unknown eavesdropper)."""
    if isinstance(sol, AvgCostSolution):
        rep = verify_threshold_rows(sol.policy, "n", None, label)
        return rep.extend(verify_threshold_rows(sol.policy, "n_e", None, label))
    if isinstance(sol, BeliefAvgCostSolution):
        report = StructureReport()
        for b in range(sol.nu.shape[1]):
            ok, w = scan_sequence(sol.nu[:, b], None, True)
            wit = "" if ok else f"history {b}: nu=1 at n={w[0]}, nu=0 at n={w[1]}"
            report.add(f"{label} history={b} threshold in n".strip(), ok, wit)
        return report
    raise TypeError(f"unsupported solution type {type(sol).__name__}")


# ------------------------------------------------------------- lemma suite

def _random_pd(rng, n: int, scale: float) -> np.ndarray:
    W = rng.standard_normal((n, n))
    return symmetrize(scale * (W @ W.T / n + 0.05 * np.eye(n)))


def _random_psd(rng, n: int, scale: float) -> np.ndarray:
    r = int(rng.integers(1, n + 1))
    W = rng.standard_normal((n, r))
    return symmetrize(scale * W @ W.T / r)


def _ordered_pairs(model: SystemModel, ladder: CovarianceLadder | None, samples: int, rng):
    """``X <= Y`` pairs; every tenth pair has ``X == Y``."""
    n = model.n_x
    for s in range(samples):
        scale = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
        if ladder is not None and rng.random() < 0.5:
            X = np.array(ladder.rungs[int(rng.integers(0, min(ladder.N, 8) + 1))])
        else:
            X = _random_pd(rng, n, scale)
        D = np.zeros((n, n)) if s % 10 == 0 else _random_psd(rng, n, scale)
        yield X, symmetrize(X + D)


def _fn(X, n, model):
    for _ in range(n):
        X = riccati_predict(X, model)
    return X


def _logdet(X) -> float:
    return float(np.linalg.slogdet(X)[1])


def _apply(word, X, model):
    for ch in reversed(word):
        if ch == "f":
            X = riccati_predict(X, model)
        elif ch == "g":
            X = riccati_update(X, model)
    return X


def verify_lemma_suite(model: SystemModel, ladder: CovarianceLadder | None = None,
                       samples: int = 1000, seed: int = 0, rel_tol: float = 1e-9) -> StructureReport:
    """Randomized checks of three monotonicity properties of the covariance maps.

    * trace of ``f^n`` is increasing in the PSD order;
    * ``log det f^n(P) - log det f^{n+1}(P)`` is increasing;
    * scalar systems only: ``F(f(P)) - F(g(P))`` is increasing for any
      composition ``F`` of ``f``, ``g`` and the identity (length <= 4).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = list(_ordered_pairs(model, ladder, samples, rng))
    report = StructureReport()

    worst = None
    for idx, (X, Y) in enumerate(pairs):
        n = int(rng.integers(1, 6))
        a, b = np.trace(_fn(X, n, model)), np.trace(_fn(Y, n, model))
        if b < a - rel_tol * max(1.0, abs(a)):
            worst = worst or f"pair {idx}, n={n}: tr f^n(Y)={b:.12g} < tr f^n(X)={a:.12g}"
    report.add(f"trace monotonicity ({samples} pairs)", worst is None, worst or "")

    worst = None
    for idx, (X, Y) in enumerate(pairs):
        n = int(rng.integers(0, 6))
        fX, fY = _fn(X, n, model), _fn(Y, n, model)
        dx = _logdet(fX) - _logdet(riccati_predict(fX, model))
        dy = _logdet(fY) - _logdet(riccati_predict(fY, model))
        if dy < dx - rel_tol * max(1.0, abs(dx)):
            worst = worst or f"pair {idx}, n={n}: gap(Y)={dy:.12g} < gap(X)={dx:.12g}"
    report.add(f"log-det gap monotonicity ({samples} pairs)", worst is None, worst or "")

    if model.n_x == 1:
        worst = None
        for idx, (X, Y) in enumerate(pairs):
            L = int(rng.integers(0, 5))
            word = "".join(rng.choice(["f", "g", "i"], size=L))
            dx = float(_apply(word, riccati_predict(X, model), model)[0, 0]
                       - _apply(word, riccati_update(X, model), model)[0, 0])
            dy = float(_apply(word, riccati_predict(Y, model), model)[0, 0]
                       - _apply(word, riccati_update(Y, model), model)[0, 0])
            if dy < dx - rel_tol * max(1.0, abs(dx)):
                worst = worst or f"pair {idx}, word={word or 'id'}: {dy:.12g} < {dx:.12g}"
        report.add(f"composition gap monotonicity ({samples} pairs)", worst is None, worst or "")
    return report

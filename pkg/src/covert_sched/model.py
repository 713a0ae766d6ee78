"""Plant/sensor model, Riccati maps, steady-state filtering and the covariance ladder.

The ladder ``[P, f(P), f^2(P), ...]`` is the discrete state space on which every
scheduler in this package operates: a holding count ``n`` (steps since the last
successful reception) identifies the error covariance ``f^n(Pbar)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergenceError, InputError, ModelError, TruncationError

SYM_TOL = 1e-8
PSD_TOL = 1e-9
# above this magnitude rungs are carried in scaled form to keep log-stats finite
_SCALE_SWITCH = 1e100


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.ndim != 2:
        raise ModelError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def is_symmetric(X: np.ndarray, tol: float = SYM_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    return bool(np.max(np.abs(X - X.T), initial=0.0) <= tol * scale)


def psd_leq(X: np.ndarray, Y: np.ndarray, tol: float = PSD_TOL) -> bool:
    """True when ``X <= Y`` in the positive semi-definite order."""
    D = symmetrize(np.asarray(Y, float) - np.asarray(X, float))
    scale = max(1.0, float(np.max(np.abs(Y))), float(np.max(np.abs(X))))
    return bool(np.linalg.eigvalsh(D).min() >= -tol * scale)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Linear plant ``x+ = A x + w``, sensor ``y = C x + v`` and two erasure links.

    ``lam`` is the reception probability at the remote estimator and ``lam_e``
    the interception probability at the eavesdropper.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    lam: float
    lam_e: float

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        C = _as_matrix(self.C, "C")
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        nx = A.shape[0]
        if A.shape != (nx, nx):
            raise ModelError(f"A must be square, got {A.shape}")
        if C.shape[1] != nx:
            raise ModelError(f"C has {C.shape[1]} columns, expected {nx}")
        ny = C.shape[0]
        if Q.shape != (nx, nx):
            raise ModelError(f"Q must be {nx}x{nx}, got {Q.shape}")
        if R.shape != (ny, ny):
            raise ModelError(f"R must be {ny}x{ny}, got {R.shape}")
        for name, M in (("Q", Q), ("R", R)):
            if not is_symmetric(M):
                raise InputError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(symmetrize(M)).min() <= 0:
                raise InputError(f"{name} must be positive definite")
        for name, p in (("lambda", self.lam), ("lambda_e", self.lam_e)):
            if not 0.0 < float(p) < 1.0:
                raise InputError(f"{name} must lie in (0, 1), got {p}")
        for name, M in (("A", A), ("C", C), ("Q", symmetrize(Q)), ("R", symmetrize(R))):
            M = M.copy()
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "lam_e", float(self.lam_e))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def with_channels(self, lam: float | None = None, lam_e: float | None = None) -> "SystemModel":
        return SystemModel(self.A, self.C, self.Q, self.R,
                           self.lam if lam is None else lam,
                           self.lam_e if lam_e is None else lam_e)

    def fingerprint(self) -> str:
        """Short stable hash of the model data, used as table metadata."""
        h = hashlib.sha256()
        for M in (self.A, self.C, self.Q, self.R):
            h.update(np.ascontiguousarray(M).tobytes())
        h.update(repr((self.lam, self.lam_e)).encode())
        return h.hexdigest()[:12]

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "C": self.C.tolist(), "Q": self.Q.tolist(),
                "R": self.R.tolist(), "lambda": self.lam, "lambda_e": self.lam_e}

    @classmethod
    def from_dict(cls, d: dict) -> "SystemModel":
        missing = {"A", "C", "Q", "R", "lambda", "lambda_e"} - set(d)
        if missing:
            raise ModelError(f"model document missing keys: {sorted(missing)}")
        return cls(d["A"], d["C"], d["Q"], d["R"], d["lambda"], d["lambda_e"])


def load_model(path) -> SystemModel:
    """Read a model from JSON.

    A bare file name that does not exist on disk is looked up among the bundled
    models (``paper.json``, ``paper_meas.json``).
    """
    p = Path(path)
    if not p.exists():
        bundled = Path(__file__).parent / "data" / p.name
        if bundled.exists():
            p = bundled
    with open(p) as fh:
        return SystemModel.from_dict(json.load(fh))


def _check_square(X: np.ndarray, model: SystemModel) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape != (model.n_x, model.n_x):
        raise ModelError(f"expected {model.n_x}x{model.n_x} matrix, got {X.shape}")
    if not is_symmetric(X):
        raise InputError("covariance argument is not symmetric")
    return X


def riccati_predict(X, model: SystemModel) -> np.ndarray:
    """``f(X) = A X A^T + Q``."""
    X = _check_square(X, model)
    A = model.A
    return symmetrize(A @ X @ A.T + model.Q)


def riccati_update(X, model: SystemModel) -> np.ndarray:
    """One-step Kalman prediction after a measurement update.

    ``g(X) = A X A^T - A X C^T (C X C^T + R)^{-1} C X A^T + Q``
    """
    X = _check_square(X, model)
    A, C = model.A, model.C
    S = C @ X @ C.T + model.R
    AXC = A @ X @ C.T
    return symmetrize(A @ X @ A.T - AXC @ np.linalg.solve(S, AXC.T) + model.Q)


@dataclass(frozen=True, eq=False)
class SteadyState:
    P_bar: np.ndarray
    P_bar_plus: np.ndarray
    gain: np.ndarray
    iterations: int
    residual: float


def steady_state_filter(model: SystemModel, tol: float = 1e-10,
                        max_iter: int = 10_000) -> SteadyState:
    """Iterate the filter Riccati recursion from ``Q`` to its fixed point.

    Convergence is the numerical stand-in for detectability of ``(A, C)`` and
    stabilizability of ``(A, Q^{1/2})``; failure raises :class:`DivergenceError`.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    P_plus = model.Q.copy()
    residual = math.inf
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
            nxt = riccati_update(P_plus, model)
        residual = float(np.max(np.abs(nxt - P_plus)))
        P_plus = nxt
        if not np.isfinite(residual):
            break
        if residual < tol:
            C = model.C
            S = C @ P_plus @ C.T + model.R
            K = np.linalg.solve(S, C @ P_plus).T
            P_bar = symmetrize(P_plus - K @ C @ P_plus)
            return SteadyState(P_bar, P_plus, K, it, residual)
    raise DivergenceError(
        f"filter Riccati iteration did not converge in {max_iter} steps "
        f"(last residual {residual:.3g}); check detectability/stabilizability")


@dataclass(frozen=True, eq=False)
class CovarianceLadder:
    """Precomputed ``f^n(P0)`` for ``n = 0..N`` with cached traces and log-dets.

    ``rungs`` may contain ``inf`` entries for very deep ladders of unstable
    systems; ``log_traces`` and ``logdets`` stay finite because they are
    propagated in scaled form once entries get large.
    """

    rungs: tuple
    traces: np.ndarray
    logdets: np.ndarray
    log_traces: np.ndarray

    @property
    def N(self) -> int:
        return len(self.rungs) - 1

    def require(self, depth: int) -> None:
        if depth > self.N:
            raise TruncationError(f"ladder depth {self.N} < required index {depth}")

    def extended(self, N: int, model: SystemModel) -> "CovarianceLadder":
        if N <= self.N:
            return self
        return build_ladder(self.rungs[0], N, model)


def _ladder_arrays(P0: np.ndarray, N: int, model: SystemModel):
    A, Q = model.A, model.Q
    n = model.n_x
    rungs = [P0]
    log_tr = [math.log(np.trace(P0))]
    sign, ld = np.linalg.slogdet(P0)
    lds = [ld if sign > 0 else -math.inf]
    X = P0
    scale = 0.0  # log of the factor that multiplies M in scaled mode
    M = None
    for _ in range(N):
        if M is None:
            X = symmetrize(A @ X @ A.T + Q)
            if np.max(np.abs(X)) < _SCALE_SWITCH:
                rungs.append(X)
                log_tr.append(math.log(np.trace(X)))
                sign, ld = np.linalg.slogdet(X)
                lds.append(ld if sign > 0 else -math.inf)
                continue
            t = float(np.trace(X))
            scale, M = math.log(t), X / t
        else:
            M = symmetrize(A @ M @ A.T + math.exp(-scale) * Q)
            t = float(np.trace(M))
            scale += math.log(t)
            M = M / t
        with np.errstate(over="ignore"):
            rungs.append(M * math.exp(min(scale, 709.0)) if scale < 709.0
                         else np.full_like(M, math.inf))
        log_tr.append(scale)
        sign, ld = np.linalg.slogdet(M)
        lds.append(n * scale + ld if sign > 0 else -math.inf)
    scaled = _logdets_eigen_scaled(P0, N, model)
    if scaled is not None:
        lds = scaled
    for R_ in rungs:
        R_.setflags(write=False)
    log_tr = np.array(log_tr)
    with np.errstate(over="ignore"):
        traces = np.exp(log_tr)
    # exact traces where representable
    for i, R_ in enumerate(rungs):
        if np.all(np.isfinite(R_)):
            traces[i] = np.trace(R_)
    return tuple(rungs), traces, np.array(lds), log_tr


def _logdets_eigen_scaled(P0: np.ndarray, N: int, model: SystemModel):
    """``log det f^n(P0)`` for ``n = 0..N`` computed in A's eigenbasis.

    Each mode is rescaled by ``max(1, |eig|)^n`` so the iterate stays well
    conditioned even when ``f^n(P0)`` spans many orders of magnitude. Returns
    ``None`` when A is too close to defective for the change of basis.
    """
    lam, V = np.linalg.eig(model.A)
    if np.linalg.cond(V) > 1e8:
        return None
    Vinv = np.linalg.inv(V)
    Y = Vinv @ P0 @ Vinv.conj().T
    Qt = Vinv @ model.Q @ Vinv.conj().T
    s = np.maximum(1.0, np.abs(lam))
    unit = lam / s
    log_s = np.log(s)
    base = 2.0 * float(np.log(np.abs(np.linalg.det(V))))
    out = np.empty(N + 1)
    for n in range(N + 1):
        if n:
            inv_scale = np.exp(-n * log_s)
            Y = unit[:, None] * Y * unit.conj()[None, :] + inv_scale[:, None] * Qt * inv_scale[None, :]
            Y = 0.5 * (Y + Y.conj().T)
        try:
            L = np.linalg.cholesky(Y)
        except np.linalg.LinAlgError:
            return None
        out[n] = 2.0 * float(np.sum(np.log(np.abs(np.diag(L))))) + 2.0 * n * float(log_s.sum()) + base
    return out


def build_ladder(P0, N: int, model: SystemModel) -> CovarianceLadder:
    """Ladder ``[P0, f(P0), ..., f^N(P0)]``."""
    if N < 1:
        raise InputError("ladder depth N must be >= 1")
    P0 = _check_square(P0, model)
    rungs, traces, lds, log_tr = _ladder_arrays(symmetrize(P0), int(N), model)
    if not np.all(np.isfinite(lds)):
        raise ValueError("ladder rung is not positive definite; log-det undefined")
    return CovarianceLadder(rungs, traces, lds, log_tr)


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def stability_threshold(model: SystemModel) -> float:
    """``1 - 1/rho(A)^2``: the estimator covariance stays bounded under
    always-transmit iff ``lam`` exceeds this value."""
    rho = spectral_radius(model.A)
    return 1.0 - 1.0 / rho ** 2


@dataclass(frozen=True, eq=False)
class Problem:
    """Model bundled with its steady state and a ladder rooted at ``P_bar``."""

    model: SystemModel
    steady: SteadyState
    ladder: CovarianceLadder = field(repr=False)

    @classmethod
    def build(cls, model: SystemModel, N: int = 40) -> "Problem":
        ss = steady_state_filter(model)
        return cls(model, ss, build_ladder(ss.P_bar, N, model))

    def deepen(self, N: int) -> "Problem":
        if N <= self.ladder.N:
            return self
        return Problem(self.model, self.steady, build_ladder(self.steady.P_bar, N, self.model))

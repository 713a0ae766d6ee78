"""Monte Carlo simulation of the closed loop under a scheduling policy.

Random numbers come from numpy's PCG64 (``numpy.random.default_rng``). Each
run seeds one ``SeedSequence`` and spawns two independent streams: one for the
channel draws and one for process/measurement noise. Channel outcomes are
drawn every step whether or not the sensor transmits, so different policies
run with the same seed see the same channel realization.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .belief_dp import HistoryKey, PartialInfoSolution
from .errors import InputError, MixError, TruncationError
from .horizon_inf import AvgCostSolution, BeliefAvgCostSolution, ThresholdPolicy
from .meas_tx import MeasSolution
from .model import CovarianceLadder, Problem, SystemModel, steady_state_filter
from .sched_dp import FullInfoSolution

LADDER_CAP = 10_000


class Mode(str, enum.Enum):
    ESTIMATE = "estimate"
    MEASUREMENT = "measurement"


# ------------------------------------------------------------------ policies
#
# Estimate-mode policies implement ``decide_many(k, n, n_e, hist)`` on integer
# arrays: ``n``/``n_e`` are the holding counts after step ``k-1`` and ``hist``
# packs the past decisions with the newest in the least significant bit.

class Policy:
    label = "policy"
    horizon: int | None = None   # finite-horizon tables only cover stages 1..horizon
    needs_eaves = False

    def decide_many(self, k, n, n_e, hist):
        raise NotImplementedError

    def decide(self, k: int, n: int, n_e: int = 0, hist: int = 0) -> int:
        return int(self.decide_many(k, np.array([n]), np.array([n_e]), np.array([hist]))[0])


class Threshold(Policy):
    def __init__(self, t: int):
        self.rule = ThresholdPolicy(t)
        self.t = self.rule.t
        self.label = self.rule.label

    def decide_many(self, k, n, n_e, hist):
        return (n >= self.t).astype(np.int8)


def always_transmit() -> Threshold:
    return Threshold(0)


class NeverTransmit(Policy):
    label = "never"

    def decide_many(self, k, n, n_e, hist):
        return np.zeros(np.shape(n), dtype=np.int8)


class FullInfoTable(Policy):
    """Finite-horizon table ``nu[k-1, n, n_e]`` from the known-eavesdropper DP."""

    needs_eaves = True

    def __init__(self, solution: FullInfoSolution):
        self.nu = solution.policy.nu
        self.horizon = solution.policy.K
        self.label = f"full:{solution.objective.kind.value}:{solution.objective.beta:g}"

    def decide_many(self, k, n, n_e, hist):
        G = self.nu.shape[1] - 1
        if np.max(n) > G or np.max(n_e) > G:
            raise TruncationError(f"state beyond the policy grid [0, {G}]")
        return self.nu[k - 1, n, n_e]


class Stationary(Policy):
    """Stationary known-eavesdropper policy; states above rung ``N`` use row/column ``N``."""

    needs_eaves = True

    def __init__(self, solution: AvgCostSolution):
        self.nu = solution.policy.stage(1)
        self.N = solution.N
        meta = solution.policy.metadata
        self.label = f"stationary:{meta.get('objective')}:{meta.get('beta'):g}"

    def decide_many(self, k, n, n_e, hist):
        return self.nu[np.minimum(n, self.N), np.minimum(n_e, self.N)]


class BeliefTable(Policy):
    """Finite-horizon policy driven by the decision history (unknown eavesdropper)."""

    def __init__(self, solution: PartialInfoSolution):
        self.sol = solution
        self.horizon = solution.K
        self.label = f"partial:{solution.objective.kind.value}:{solution.objective.beta:g}"
        self._rows = {}

    def _row_map(self, k: int) -> np.ndarray:
        if k not in self._rows:
            st = self.sol.stage(k)
            length = k - 1
            N = self.sol.N
            width = length if N is None or length < N else N
            rows = np.full(1 << width, -1, dtype=np.int64)
            for key, r in st.index.items():
                rows[key.bits] = r
            self._rows[k] = (rows, width)
        return self._rows[k]

    def decide_many(self, k, n, n_e, hist):
        rows, width = self._row_map(k)
        st = self.sol.stage(k)
        if np.max(n) >= st.nu.shape[1]:
            raise TruncationError(f"holding count beyond the policy grid [0, {st.nu.shape[1] - 1}]")
        r = rows[hist & ((1 << width) - 1)]
        return st.nu[r, n]

    def key(self, k: int, hist: int) -> HistoryKey:
        rows, width = self._row_map(k)
        st = self.sol.stage(k)
        return st.keys[rows[hist & ((1 << width) - 1)]]


class StationaryBelief(Policy):
    """Stationary unknown-eavesdropper policy keyed by the last ``N`` decisions.

    Decisions before time 1 count as transmissions.
    """

    def __init__(self, solution: BeliefAvgCostSolution):
        self.nu = solution.nu
        self.N = solution.N
        self.mask = (1 << self.N) - 1
        meta = solution.metadata
        self.label = f"stationary-belief:{meta.get('objective')}:{meta.get('beta'):g}"

    def decide_many(self, k, n, n_e, hist):
        past = np.minimum(k - 1, self.N)
        padded = (hist | (self.mask ^ ((1 << past) - 1))) & self.mask
        return self.nu[np.minimum(n, self.N), padded]


class Measurement:
    """Measurement-mode table: full info reads the eavesdropper composition, partial the history."""

    def __init__(self, solution: MeasSolution):
        self.sol = solution
        self.horizon = solution.K
        self.label = f"meas-{solution.info}:{solution.beta:g}"

    def decide_many(self, k, i, j, h):
        tab = self.sol.nu[k - 1]
        return tab[i, j] if self.sol.info == "full" else tab[i, h]


def parse_policy(spec: str) -> Policy:
    """``threshold:<t>``, ``always`` or ``never``."""
    if spec == "always":
        return always_transmit()
    if spec == "never":
        return NeverTransmit()
    if spec.startswith("threshold:"):
        try:
            return Threshold(int(spec.split(":", 1)[1]))
        except ValueError:
            raise InputError(f"bad threshold in policy spec {spec!r}") from None
    raise InputError(f"unknown policy spec {spec!r}")


# --------------------------------------------------------------- records

@dataclass(frozen=True)
class SimConfig:
    horizon: int
    seed: int
    policy: object
    mode: Mode = Mode.ESTIMATE
    track_states: bool = False
    extend_ladder: bool = True

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InputError("horizon must be a positive integer")
        object.__setattr__(self, "mode", Mode(self.mode))
        limit = getattr(self.policy, "horizon", None)
        if limit is not None and self.horizon > limit:
            raise InputError(f"policy covers {limit} stages, run asks for {self.horizon}")
        if (self.mode is Mode.MEASUREMENT) != isinstance(self.policy, Measurement):
            raise InputError("measurement mode needs a measurement policy and vice versa")


@dataclass(frozen=True, eq=False)
class SimRecord:
    """Per-step sequences plus run averages.

    In estimate mode ``n``/``n_e`` are holding counts after each step; in
    measurement mode they are composition indices of ``P_{k+1|k}`` and
    ``trP``/``trPe`` are the prediction traces. ``I_e`` is only defined in
    estimate mode and is zero otherwise.
    """

    nu: np.ndarray
    gamma: np.ndarray
    gamma_e: np.ndarray
    n: np.ndarray
    n_e: np.ndarray
    I_e: np.ndarray
    trP: np.ndarray
    log_trPe: np.ndarray
    metadata: dict
    extrapolated: bool = False
    state_error: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.nu)

    @property
    def mean_trP(self) -> float:
        return float(np.mean(self.trP))

    @property
    def mean_trPe(self) -> float:
        return _mean_from_logs(self.log_trPe)

    @property
    def mean_Ie(self) -> float:
        return float(np.mean(self.I_e))

    @property
    def tx_rate(self) -> float:
        return float(np.mean(self.nu))

    def running_mean_trPe(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.cumsum(np.exp(self.log_trPe)) / np.arange(1, self.steps + 1)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "nu", "gamma", "gamma_e", "n", "n_e", "I_e"])
        for k in range(self.steps):
            w.writerow([k + 1, int(self.nu[k]), int(self.gamma[k]), int(self.gamma_e[k]),
                        int(self.n[k]), int(self.n_e[k]), repr(float(self.I_e[k]))])
        return buf.getvalue()


def _mean_from_logs(logs: np.ndarray) -> float:
    if len(logs) == 0:
        return math.nan
    m = float(np.max(logs))
    if not np.isfinite(m):
        return m
    with np.errstate(over="ignore"):
        return float(math.exp(m) * np.mean(np.exp(logs - m))) if m < 709 else math.inf


def _streams(seed: int):
    channel, noise = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(channel), np.random.default_rng(noise)


def _draw_channels(rng, H: int, model: SystemModel, runs: int | None = None):
    shape = H if runs is None else (H, runs)
    u = rng.random(shape)
    ue = rng.random(shape)
    return u < model.lam, ue < model.lam_e


class _LadderStats:
    """Trace and log-det lookups that grow the ladder on demand up to a cap."""

    def __init__(self, ladder: CovarianceLadder, model: SystemModel, extend: bool,
                 cap: int = LADDER_CAP):
        self.ladder, self.model, self.extend, self.cap = ladder, model, extend, cap
        self.extrapolated = False

    def ensure(self, depth: int) -> None:
        if depth <= self.ladder.N:
            return
        if not self.extend:
            raise TruncationError(f"holding count {depth} exceeds ladder depth {self.ladder.N}")
        target = min(max(depth, 2 * self.ladder.N), self.cap)
        if target > self.ladder.N:
            self.ladder = self.ladder.extended(target, self.model)

    def _lookup(self, arr: np.ndarray, idx: np.ndarray) -> np.ndarray:
        N = self.ladder.N
        over = idx > N
        if not np.any(over):
            return arr[idx]
        # beyond the cap: continue the last per-step growth linearly in the log domain
        self.extrapolated = True
        slope = arr[N] - arr[N - 1]
        return np.where(over, arr[N] + (idx - N) * slope, arr[np.minimum(idx, N)])

    def log_traces(self, idx):
        self.ensure(int(np.max(idx)))
        return self._lookup(self.ladder.log_traces, idx)

    def logdets(self, idx):
        self.ensure(int(np.max(idx)))
        return self._lookup(self.ladder.logdets, idx)

    def traces(self, idx):
        with np.errstate(over="ignore"):
            return np.exp(self.log_traces(idx))


def simulate(model: SystemModel, ladder: CovarianceLadder, config: SimConfig) -> SimRecord:
    """One closed-loop run of ``config.horizon`` steps."""
    if config.mode is Mode.MEASUREMENT:
        return _simulate_measurement(model, config)
    policy = config.policy
    H = int(config.horizon)
    ch_rng, noise_rng = _streams(config.seed)
    gamma, gamma_e = _draw_channels(ch_rng, H, model)
    g_list, ge_list = gamma.tolist(), gamma_e.tolist()

    nu_seq = np.empty(H, dtype=np.int8)
    n_seq = np.empty(H, dtype=np.int64)
    ne_seq = np.empty(H, dtype=np.int64)
    nus, ns, nes = [], [], []
    fast = isinstance(policy, Threshold)
    t = policy.t if fast else 0
    n = ne = hist = 0
    one = np.zeros(1, dtype=np.int64)
    for k in range(1, H + 1):
        if fast:
            nu = n >= t
        else:
            nu = bool(policy.decide_many(k, one + n, one + ne, one + hist)[0])
        if nu and g_list[k - 1]:
            n = 0
        else:
            n += 1
        if nu and ge_list[k - 1]:
            ne = 0
        else:
            ne += 1
        hist = ((hist << 1) | nu) & 0xFFFF
        nus.append(nu)
        ns.append(n)
        nes.append(ne)
    nu_seq[:] = nus
    n_seq[:] = ns
    ne_seq[:] = nes
    stats = _LadderStats(ladder, model, config.extend_ladder)
    ne_prev = np.concatenate([[0], ne_seq[:-1]])
    hit = (nu_seq == 1) & gamma_e
    # leakage when intercepting: half the log-det drop from f(P_e) to Pbar
    leak = 0.5 * (stats.logdets(ne_prev + 1) - stats.ladder.logdets[0])
    I_e = np.where(hit, leak, 0.0)
    trP = stats.traces(n_seq)
    log_trPe = stats.log_traces(ne_seq)
    meta = {"policy": getattr(policy, "label", "policy"), "model": model.fingerprint(),
            "mode": config.mode.value, "seed": int(config.seed)}
    errors = {}
    if config.track_states:
        errors = _track_states(model, nu_seq, gamma, gamma_e, noise_rng)
    return SimRecord(nu_seq, gamma.astype(np.int8), gamma_e.astype(np.int8), n_seq, ne_seq,
                     I_e, trP, log_trPe, meta, stats.extrapolated, errors)


def _track_states(model: SystemModel, nu, gamma, gamma_e, rng) -> dict:
    """Simulate the estimation errors of the sensor filter and both receivers.

    The recursion runs on errors rather than raw states (``e = x - xhat``),
    which is algebraically the same but stays finite for unstable plants over
    long runs. Returns time-averaged squared errors; scheduling is not
    affected (the decisions and channel draws are given).
    """
    ss = steady_state_filter(model)
    A, C = model.A, model.C
    Kg = ss.gain
    nx, ny = model.n_x, model.n_y
    H = len(nu)
    w = rng.standard_normal((H, nx)) @ np.linalg.cholesky(model.Q).T
    v = rng.standard_normal((H, ny)) @ np.linalg.cholesky(model.R).T
    IKC = np.eye(nx) - Kg @ C
    es = np.linalg.cholesky(ss.P_bar) @ rng.standard_normal(nx)  # error covariance Pbar at k = 0
    er = es.copy()
    ee = es.copy()
    err_r = err_e = err_s = 0.0
    for k in range(H):
        pred = A @ es + w[k]
        es = IKC @ pred - Kg @ v[k]
        er = es if nu[k] and gamma[k] else A @ er + w[k]
        ee = es if nu[k] and gamma_e[k] else A @ ee + w[k]
        err_r += float(er @ er)
        err_e += float(ee @ ee)
        err_s += float(es @ es)
    return {"mse_estimator": err_r / H, "mse_eavesdropper": err_e / H, "mse_sensor": err_s / H}


def _simulate_measurement(model: SystemModel, config: SimConfig) -> SimRecord:
    H = int(config.horizon)
    ch_rng, _ = _streams(config.seed)
    gamma, gamma_e = _draw_channels(ch_rng, H, model)
    res = _meas_batch(model, config.policy, H, gamma[:, None], gamma_e[:, None])
    meta = {"policy": config.policy.label, "model": model.fingerprint(),
            "mode": config.mode.value, "seed": int(config.seed)}
    with np.errstate(divide="ignore"):
        log_trPe = np.log(res["trPe"][:, 0])
    return SimRecord(res["nu"][:, 0], gamma.astype(np.int8), gamma_e.astype(np.int8),
                     res["i"][:, 0], res["j"][:, 0], np.zeros(H), res["trP"][:, 0],
                     log_trPe, meta)


def _meas_batch(model, policy: Measurement, H: int, gamma, gamma_e) -> dict:
    sol = policy.sol
    tree = sol.tree
    R = gamma.shape[1]
    i = np.zeros(R, dtype=np.int64)
    j = np.zeros(R, dtype=np.int64)
    h = np.zeros(R, dtype=np.int64)
    out = {key: np.zeros((H, R)) for key in ("trP", "trPe")}
    out.update({key: np.zeros((H, R), dtype=np.int64) for key in ("nu", "i", "j")})
    for k in range(1, H + 1):
        d = k - 1
        nu = policy.decide_many(k, i, j, h).astype(bool)
        got = nu & gamma[d]
        got_e = nu & gamma_e[d]
        out["trP"][d] = np.where(got, tree.tr_g[d][i], tree.tr_f[d][i])
        out["trPe"][d] = np.where(got_e, tree.tr_g[d][j], tree.tr_f[d][j])
        D = 1 << d
        i = i + (~got) * D
        j = j + (~got_e) * D
        h = h + nu * D
        out["nu"][d], out["i"][d], out["j"][d] = nu, i, j
    return out


# ------------------------------------------------------- finite-horizon batch

@dataclass(frozen=True, eq=False)
class BatchResult:
    """Per-stage means over independent runs (finite horizon)."""

    trP: np.ndarray      # E tr P_{k|k}, k = 1..K
    trPe: np.ndarray
    Ie: np.ndarray
    tx: np.ndarray
    runs: int
    se_trP: float
    se_trPe: float
    se_Ie: float

    @property
    def mean_trP(self) -> float:
        return float(self.trP.mean())

    @property
    def mean_trPe(self) -> float:
        return float(self.trPe.mean())

    @property
    def mean_Ie(self) -> float:
        return float(self.Ie.mean())

    @property
    def tx_rate(self) -> float:
        return float(self.tx.mean())


def simulate_batch(model: SystemModel, ladder: CovarianceLadder, policy, K: int,
                   runs: int, seed: int) -> BatchResult:
    """``runs`` independent length-``K`` runs, all starting from ``(Pbar, Pbar)``.

    Standard errors are for the horizon-averaged statistics across runs.
    """
    if runs < 1 or K < 1:
        raise InputError("runs and K must be positive")
    ch_rng, _ = _streams(seed)
    gamma, gamma_e = _draw_channels(ch_rng, K, model, runs)
    if isinstance(policy, Measurement):
        res = _meas_batch(model, policy, K, gamma, gamma_e)
        per_run = res["trP"].mean(0), res["trPe"].mean(0), np.zeros(runs)
        return BatchResult(res["trP"].mean(1), res["trPe"].mean(1), np.zeros(K),
                           res["nu"].mean(1), runs, *_se(per_run))
    stats = _LadderStats(ladder, model, True)
    stats.ensure(K + 1)
    tr, lds = stats.ladder.traces, stats.ladder.logdets
    n = np.zeros(runs, dtype=np.int64)
    ne = np.zeros(runs, dtype=np.int64)
    hist = np.zeros(runs, dtype=np.int64)
    acc_P = np.zeros(runs)
    acc_Pe = np.zeros(runs)
    acc_I = np.zeros(runs)
    trP, trPe, Ie, tx = (np.zeros(K) for _ in range(4))
    for k in range(1, K + 1):
        nu = policy.decide_many(k, n, ne, hist).astype(bool)
        got = nu & gamma[k - 1]
        got_e = nu & gamma_e[k - 1]
        leak = np.where(got_e, 0.5 * (lds[ne + 1] - lds[0]), 0.0)
        n = np.where(got, 0, n + 1)
        ne = np.where(got_e, 0, ne + 1)
        hist = (hist << 1) | nu
        trP[k - 1], trPe[k - 1] = tr[n].mean(), tr[ne].mean()
        Ie[k - 1], tx[k - 1] = leak.mean(), nu.mean()
        acc_P += tr[n]
        acc_Pe += tr[ne]
        acc_I += leak
    return BatchResult(trP, trPe, Ie, tx, runs, *_se((acc_P / K, acc_Pe / K, acc_I / K)))


def _se(per_run):
    out = []
    for x in per_run:
        out.append(float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan)
    return out


def evaluate_finite(model: SystemModel, ladder: CovarianceLadder, policy, K: int) -> BatchResult:
    """Exact per-stage expectations by propagating the state distribution.

    The state is ``(n, n_e, decision history)``, so any estimate-mode policy
    can be evaluated without sampling error.
    """
    tr, lds = ladder.traces, ladder.logdets
    ladder.require(K + 1)
    # state arrays; duplicates are merged after every stage
    n = np.zeros(1, dtype=np.int64)
    ne = np.zeros(1, dtype=np.int64)
    hist = np.zeros(1, dtype=np.int64)
    p = np.ones(1)
    lam, lam_e = model.lam, model.lam_e
    trP, trPe, Ie, tx = (np.zeros(K) for _ in range(4))
    for k in range(1, K + 1):
        nu = policy.decide_many(k, n, ne, hist).astype(np.int64)
        leak_if = 0.5 * (lds[ne + 1] - lds[0])
        branches = []
        for g in (0, 1):
            for ge in (0, 1):
                pg = np.where(nu == 1, lam if g else 1 - lam, 1.0 if g == 0 else 0.0)
                pe = np.where(nu == 1, lam_e if ge else 1 - lam_e, 1.0 if ge == 0 else 0.0)
                w = p * pg * pe
                nn = np.where(g == 1, 0, n + 1)
                nne = np.where(ge == 1, 0, ne + 1)
                branches.append((w, np.broadcast_to(nn, n.shape), np.broadcast_to(nne, n.shape),
                                 (hist << 1) | nu, leak_if * ge))
        w = np.concatenate([b[0] for b in branches])
        n2 = np.concatenate([b[1] for b in branches])
        ne2 = np.concatenate([b[2] for b in branches])
        h2 = np.concatenate([b[3] for b in branches])
        leak = np.concatenate([b[4] for b in branches])
        trP[k - 1] = w @ tr[n2]
        trPe[k - 1] = w @ tr[ne2]
        Ie[k - 1] = w @ leak
        tx[k - 1] = p @ nu
        keep = w > 0
        key = np.stack([n2[keep], ne2[keep], h2[keep]], axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        p = np.bincount(inv.ravel(), weights=w[keep], minlength=len(uniq))
        n, ne, hist = uniq[:, 0].copy(), uniq[:, 1].copy(), uniq[:, 2].copy()
    return BatchResult(trP, trPe, Ie, tx, 0, 0.0, 0.0, 0.0)


# ----------------------------------------------------------------- pooling

@dataclass(frozen=True)
class Summary:
    mean_trP: float
    mean_trPe: float
    mean_Ie: float
    tx_rate: float
    se_trP: float
    se_trPe: float
    se_Ie: float
    runs: int
    steps: int
    seeds: tuple
    metadata: dict


_POOL_KEYS = ("policy", "model", "mode")


def aggregate(records) -> Summary:
    """Pool runs that share policy, model and mode; order is by seed."""
    records = sorted(records, key=lambda r: r.metadata.get("seed", 0))
    if not records:
        raise InputError("nothing to aggregate")
    ref = {k: records[0].metadata.get(k) for k in _POOL_KEYS}
    for r in records[1:]:
        got = {k: r.metadata.get(k) for k in _POOL_KEYS}
        if got != ref:
            raise MixError(f"cannot pool records with metadata {got} and {ref}")
    cols = np.array([[r.mean_trP, r.mean_trPe, r.mean_Ie, r.tx_rate] for r in records])
    means = cols.mean(axis=0)
    if len(records) > 1:
        se = cols.std(axis=0, ddof=1) / math.sqrt(len(records))
    else:
        se = np.zeros(4)
    return Summary(*map(float, means), float(se[0]), float(se[1]), float(se[2]),
                   len(records), sum(r.steps for r in records),
                   tuple(r.metadata.get("seed") for r in records), dict(ref))


SUMMARY_HEADER = ["policy", "beta", "t", "mean_trP", "mean_trPe", "mean_Ie", "tx_rate", "steps", "seed"]


def summary_row(record, beta="", t="") -> list:
    return [record.metadata.get("policy", ""), beta, t, _fmt(record.mean_trP), _fmt(record.mean_trPe),
            _fmt(record.mean_Ie), _fmt(record.tx_rate), record.steps, record.metadata.get("seed", "")]


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    w.writerows(rows)
    return buf.getvalue()


# ------------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class CurvePoint:
    beta: float
    mean_trP: float
    mean_trPe: float
    mean_Ie: float
    tx_rate: float


def sweep_beta(model: SystemModel, horizon, kind: str, info: str, beta_grid,
               sim_budget: int, seed: int = 0, N: int = 10, problem: Problem | None = None,
               exact: bool = False) -> list[CurvePoint]:
    """Solve and evaluate the optimal policy for every ``beta``.

    ``horizon`` is an integer ``K`` (finite horizon; ``sim_budget`` runs, or an
    exact evaluation with ``exact=True``) or ``"inf"`` (average cost with
    truncation ``N``; one run of ``sim_budget`` steps). Every point reuses the
    same seed, so the channel realizations are common across ``beta``.
    """
    from .belief_dp import solve_finite_partial
    from .horizon_inf import relative_value_iteration, relative_value_iteration_belief
    from .sched_dp import ObjectiveConfig, required_depth, solve_finite_full

    if info not in ("full", "partial"):
        raise InputError("info must be 'full' or 'partial'")
    betas = [float(b) for b in beta_grid]
    if any(not 0.0 < b < 1.0 for b in betas):
        raise InputError("every beta must lie in (0, 1)")
    infinite = horizon in ("inf", None, math.inf)
    if not infinite and (int(horizon) != horizon or horizon < 1):
        raise InputError(f"bad horizon {horizon!r}")
    depth = max(N, 20) if infinite else required_depth(int(horizon)) + 1
    problem = (problem or Problem.build(model, depth)).deepen(depth)
    ladder = problem.ladder
    points = []
    for beta in betas:
        obj = ObjectiveConfig(beta, kind)
        try:
            if infinite:
                if info == "full":
                    pol = Stationary(relative_value_iteration(model, ladder, obj, N))
                else:
                    pol = StationaryBelief(relative_value_iteration_belief(model, ladder, obj, N))
                rec = simulate(model, ladder, SimConfig(int(sim_budget), seed, pol))
                points.append(CurvePoint(beta, rec.mean_trP, rec.mean_trPe, rec.mean_Ie, rec.tx_rate))
                continue
            K = int(horizon)
            if info == "full":
                pol = FullInfoTable(solve_finite_full(model, ladder, K, obj))
            else:
                pol = BeliefTable(solve_finite_partial(model, ladder, K, obj))
            res = (evaluate_finite(model, ladder, pol, K) if exact
                   else simulate_batch(model, ladder, pol, K, int(sim_budget), seed))
            points.append(CurvePoint(beta, res.mean_trP, res.mean_trPe, res.mean_Ie, res.tx_rate))
        except Exception as exc:  # annotate and re-raise with the offending beta
            exc.args = (f"beta={beta:g}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
    return points


def curve_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "mean_trP", "mean_trPe", "mean_Ie", "tx_rate"])
    for p in points:
        w.writerow([_fmt(p.beta), _fmt(p.mean_trP), _fmt(p.mean_trPe), _fmt(p.mean_Ie), _fmt(p.tx_rate)])
    return buf.getvalue()

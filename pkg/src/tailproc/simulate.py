"""Path simulation for stencil moving averages and the finite-sample cluster experiments.

All experiments follow the same scheme: simulate independent paths on
counter-based streams keyed by ``(seed, purpose, replicate, chunk)``, tally
each path separately, then merge the tallies in replicate order.  Results are
therefore bit-identical for any worker count.

Thresholds ``c_n`` solve ``n * P(|X_0| > c_n) = u_target``.  The marginal tail
is evaluated by conditional Monte Carlo (see :class:`MarginalTail`), which
keeps its relative error small at the extreme levels used here.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from . import _rng
from .distcalc import (
    anchored_window_law,
    extremal_index_spectral,
    shape_law,
    support_pattern_law,
    tail_expectation,
    window_pattern_law,
)
from .models import MAStencilModel, ma_anchored, ma_extremal_index, ma_spectral
from .patterns import DEFAULT_REL_TOL, Pattern, describe, shape_key, support_patterns, exceedance_patterns
from .seqcore import anchor_dense

CALIBRATION_SEED = 20_240_601
CALIBRATION_SAMPLES = 200_000
PILOT_LENGTH = 10**6


ENGINES = ("dense", "sparse")


class ConfigError(ValueError):
    pass


class NoExceedances(RuntimeError):
    pass


class NoClusters(RuntimeError):
    pass


@dataclass(frozen=True)
class PathConfig:
    """Path length, blocking, threshold rule and randomness for one experiment.

    ``block_len`` overrides ``floor(n ** r_exponent)``; ``threshold`` overrides
    the calibrated ``c_n``.  ``threshold_rule`` is ``"tail"`` (conditional
    Monte Carlo on the marginal law) or ``"pilot"`` (quantile of a 10^6-sample
    pilot path).  ``engine`` selects how the replicate experiments draw paths:
    ``"dense"`` simulates every value, ``"sparse"`` only the neighbourhoods of
    large innovations (see :func:`exceedance_view`).
    """

    n: int = 100_000
    r_exponent: float = 0.4
    block_len: Optional[int] = None
    u_target: float = 100.0
    threshold: Optional[float] = None
    threshold_rule: str = "tail"
    window: int = 1
    seed: Optional[int] = None
    workers: int = 1
    chunk_size: int = _rng.DEFAULT_CHUNK
    engine: str = "dense"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.window < 0:
            raise ConfigError("window must be non-negative")
        if self.threshold is not None and not self.threshold > 0:
            raise ConfigError("threshold must be positive")
        if not self.u_target > 0 or self.u_target > self.n:
            raise ConfigError("u_target must lie in (0, n]")
        if self.threshold_rule not in ("tail", "pilot"):
            raise ConfigError("threshold_rule must be 'tail' or 'pilot'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        r = self.r_n
        if r < 2 * self.window + 1:
            raise ConfigError(f"block length {r} is shorter than 2*window+1 = {2 * self.window + 1}")
        if r > self.n:
            raise ConfigError(f"block length {r} exceeds n = {self.n}")

    @property
    def r_n(self) -> int:
        if self.block_len is not None:
            return int(self.block_len)
        return int(math.floor(self.n**self.r_exponent + 1e-9))

    @property
    def k_n(self) -> int:
        return self.n // self.r_n

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("an explicit seed is required for simulation")
        return int(self.seed)


# --------------------------------------------------------------------------
# path simulation


class _MarkTable:
    """Mark-space enumeration turned into a lookup table of coefficient rows."""

    def __init__(self, model: MAStencilModel):
        coef = model.coef
        env, prob = coef.enumerate_marks()
        self.rows = coef.evaluate(env, prob.size)
        self.marks = coef.marks
        self.cum = [np.cumsum(m.probs) for m in self.marks]
        sizes = [len(m.values) for m in self.marks]
        # itertools.product order: last mark varies fastest
        self.strides = [math.prod(sizes[j + 1 :]) for j in range(len(sizes))]

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Indices into ``rows`` for ``size`` independent mark draws."""
        idx = np.zeros(size, dtype=np.int64)
        for cum, stride in zip(self.cum, self.strides):
            pick = np.searchsorted(cum, rng.random(size), side="right")
            idx += np.minimum(pick, len(cum) - 1) * stride
        return idx


@lru_cache(maxsize=64)
def _mark_table(model: MAStencilModel) -> _MarkTable:
    return _MarkTable(model)


def _innovations(model: MAStencilModel, size: int, seed: int, key: Tuple[int, ...], chunk_size: int, workers: int):
    alpha, p = model.alpha, model.innovations.p

    def draw(ch):
        c, s0, s1 = ch
        rng = _rng.stream(seed, _rng.INNOVATIONS, *key, c)
        z = _rng.pareto(rng, alpha, s1 - s0)
        if p < 1.0:
            z *= _rng.signs(rng, p, s1 - s0)
        return z

    return _rng.concat(_rng.pmap(draw, _rng.chunks(size, chunk_size), workers))


def _mark_rows(model: MAStencilModel, size: int, seed: int, key: Tuple[int, ...], chunk_size: int, workers: int):
    table = _mark_table(model)
    if not table.marks:
        return np.broadcast_to(table.rows[0], (size, model.window))
    if model.mark_sharing == "global":
        idx = table.draw(_rng.stream(seed, _rng.MARKS, *key), 1)
        return np.broadcast_to(table.rows[idx[0]], (size, model.window))

    def draw(ch):
        c, s0, s1 = ch
        return table.draw(_rng.stream(seed, _rng.MARKS, *key, c), s1 - s0)

    idx = np.concatenate(_rng.pmap(draw, _rng.chunks(size, chunk_size), workers))
    return table.rows[idx]


def simulate_path(
    model: MAStencilModel,
    cfg: PathConfig,
    replicate: int = 0,
    length: Optional[int] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """One path ``X_0..X_{n-1}`` of the moving average.

    ``window - 1`` burn-in innovations precede index 0, so every output uses a
    full stencil.  The draw depends on ``(seed, replicate, chunk_size)`` only.
    """
    seed = cfg.require_seed()
    n = cfg.n if length is None else int(length)
    workers = cfg.workers if workers is None else workers
    m = model.window
    burn = m - 1
    total = n + burn
    key = (int(replicate),)
    z = _innovations(model, total, seed, key, cfg.chunk_size, workers)
    x = np.zeros(n)
    if model.attach == "output":
        rows = _mark_rows(model, n, seed, key, cfg.chunk_size, workers)
        for k in range(m):
            x += rows[:, k] * z[burn - k : burn - k + n]
    else:
        # marks travel with the innovation (or are global, which broadcasts)
        rows = _mark_rows(model, total, seed, key, cfg.chunk_size, workers)
        for k in range(m):
            x += rows[burn - k : burn - k + n, k] * z[burn - k : burn - k + n]
    return x


def _sparse_view(model: MAStencilModel, cfg: PathConfig, replicate: int, floor: float, n: int):
    m = model.window
    burn = m - 1
    total = n + burn
    alpha, p = model.alpha, model.innovations.p
    table = _mark_table(model)
    # |X_i| <= sum_k max|C_k| * max|Z| over its window: below `floor` unless some |Z| >= L
    big_level = floor / np.abs(table.rows).max(axis=0).sum()
    if big_level <= 1.0:
        return None
    rng = _rng.stream(cfg.require_seed(), _rng.SPARSE, int(replicate))
    q = big_level ** (-alpha)
    nb = int(rng.binomial(total, q))
    big = np.sort(rng.choice(total, size=nb, replace=False)) if nb else np.empty(0, np.int64)
    zbig = big_level * _rng.pareto(rng, alpha, nb)
    if p < 1.0:
        zbig *= _rng.signs(rng, p, nb)
    # slot j feeds outputs j - burn .. j; output i reads slots i .. i + burn
    act = np.unique((big[:, None] - burn + np.arange(m)[None, :]).ravel())
    act = act[(act >= 0) & (act < n)]
    slots = np.unique((act[:, None] + np.arange(m)[None, :]).ravel())
    isbig = np.isin(slots, big, assume_unique=True)
    z = np.empty(slots.size)
    z[isbig] = zbig
    ns = int((~isbig).sum())
    # |Z| given |Z| < L: inverse CDF of the truncated Pareto
    small = (1.0 - rng.random(ns) * (1.0 - q)) ** (-1.0 / alpha)
    if p < 1.0:
        small *= _rng.signs(rng, p, ns)
    z[~isbig] = small
    per_slot = bool(table.marks) and model.attach == "innovation" and model.mark_sharing == "per-index"
    if not table.marks:
        rows = np.broadcast_to(table.rows[0], (act.size, m))
    elif model.mark_sharing == "global":
        rows = np.broadcast_to(table.rows[table.draw(rng, 1)[0]], (act.size, m))
    elif per_slot:
        rows = table.rows[table.draw(rng, slots.size)]
    else:
        rows = table.rows[table.draw(rng, act.size)]
    x = np.zeros(act.size)
    for k in range(m):
        si = np.searchsorted(slots, act + burn - k)
        x += (rows[si, k] if per_slot else rows[:, k]) * z[si]
    return act, x


def exceedance_view(
    model: MAStencilModel,
    cfg: PathConfig,
    replicate: int,
    floor: float,
    length: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Positions and values of every ``|X_i| > floor`` on one path.

    With ``cfg.engine == "sparse"`` the path is never materialised: the number
    and positions of innovations with ``|Z| >= L`` are drawn first
    (``L = floor / sum_k max|C_k|``), then only the values they can push above
    ``floor`` are built, with the remaining innovations drawn from the Pareto law
    truncated to ``[1, L)``.  The result has the same law as the dense view but
    costs O(n L^-alpha) instead of O(n).  Falls back to dense when ``L <= 1``.
    """
    n = cfg.n if length is None else int(length)
    if cfg.engine == "sparse":
        out = _sparse_view(model, cfg, replicate, floor, n)
        if out is not None:
            act, x = out
            keep = np.abs(x) > floor
            return act[keep], x[keep]
    x = simulate_path(model, cfg, replicate, length=n, workers=1)
    idx = np.flatnonzero(np.abs(x) > floor)
    return idx, x[idx]


# --------------------------------------------------------------------------
# marginal tail and threshold calibration


def _pareto_sf_signed(s: np.ndarray, pp: float, alpha: float) -> np.ndarray:
    """``P(Z > s)`` for ``Z = kappa * Pareto(alpha)`` with ``P(kappa = 1) = pp``."""
    s = np.asarray(s, dtype=float)
    out = np.full(s.shape, pp)
    hi = s >= 1.0
    lo = s < -1.0
    with np.errstate(divide="ignore", over="ignore"):
        out[hi] = pp * s[hi] ** (-alpha)
        out[lo] = pp + (1.0 - pp) * (1.0 - (-s[lo]) ** (-alpha))
    return out


class MarginalTail:
    """``P(|X_0| > x)`` by Asmussen-Kroese conditional Monte Carlo.

    With ``Y_j = C_{0,j} Z_{-j}`` (non-zero terms only), ``S = sum_j Y_j`` and
    ``M_{-j} = max_{i != j} Y_i``,

        P(S > x) = sum_j E[ P(Y_j > max(M_{-j}, x - S_{-j}) | rest) ],

    since exactly one term is the largest.  The conditional probability is
    available in closed form for two-sided Pareto terms.  The lower tail is the
    same formula applied to ``-S``.  Coefficient rows are stratified over the
    law of ``C_{0,.}`` when it has at most ``max_strata`` atoms.
    """

    def __init__(self, model: MAStencilModel, n_samples: int = CALIBRATION_SAMPLES, seed: int = CALIBRATION_SEED, max_strata: int = 256):
        self.model = model
        alpha, p = model.alpha, model.innovations.p
        prob, rows = model.coefficient_law()
        rng = _rng.stream(seed, _rng.CALIBRATION)
        if prob.size <= max_strata:
            per = max(n_samples // prob.size, 2000)
            rows = np.repeat(rows, per, axis=0)
            weights = np.repeat(prob / per, per)
        else:
            pick = rng.choice(prob.size, size=n_samples, p=prob / prob.sum())
            rows = rows[pick]
            weights = np.full(n_samples, 1.0 / n_samples)
        z = _rng.pareto(rng, alpha, rows.shape)
        if p < 1.0:
            z *= _rng.signs(rng, p, rows.shape)
        self._y = rows * z
        self._nz = rows != 0.0
        self._a = rows
        self._w = weights

    def _upper(self, x: float, y: np.ndarray, flip: bool) -> float:
        alpha, p = self.model.alpha, self.model.innovations.p
        nz = self._nz
        masked = np.where(nz, y, -np.inf)
        s = np.where(nz, y, 0.0).sum(axis=1)
        total = np.zeros(y.shape[0])
        m = y.shape[1]
        for j in range(m):
            others = np.delete(masked, j, axis=1)
            mx = others.max(axis=1) if m > 1 else np.full(y.shape[0], -np.inf)
            t = np.maximum(mx, x - (s - np.where(nz[:, j], y[:, j], 0.0)))
            a = self._a[:, j] * (-1.0 if flip else 1.0)
            pos = a > 0
            # P(a Z > t): sign of a swaps the roles of p and 1 - p
            pp = np.where(pos, p, 1.0 - p)
            with np.errstate(divide="ignore", invalid="ignore"):
                sc = np.where(nz[:, j], t / np.abs(np.where(nz[:, j], a, 1.0)), np.inf)
            g = np.empty_like(sc)
            for val in (p, 1.0 - p):
                sel = pp == val
                g[sel] = _pareto_sf_signed(sc[sel], val, alpha)
            total += np.where(nz[:, j], g, 0.0)
        return float(np.dot(self._w, total))

    def sf(self, x: float) -> float:
        x = float(x)
        return self._upper(x, self._y, False) + self._upper(x, -self._y, True)

    def isf(self, q: float) -> float:
        """Level ``x`` with ``sf(x) = q``."""
        if not 0 < q < 1:
            raise ConfigError(f"tail probability {q!r} must lie in (0, 1)")
        f = lambda lx: math.log(self.sf(math.exp(lx))) - math.log(q)
        lo = 0.0
        hi = 1.0
        while f(hi) > 0:
            hi *= 2.0
        if f(lo) <= 0:
            return 1.0
        return math.exp(optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-12))


@lru_cache(maxsize=32)
def marginal_tail(model: MAStencilModel) -> MarginalTail:
    return MarginalTail(model)


@lru_cache(maxsize=64)
def _pilot_threshold(model: MAStencilModel, level: float) -> float:
    cfg = PathConfig(n=PILOT_LENGTH, seed=CALIBRATION_SEED, u_target=1.0, block_len=1, window=0)
    x = np.abs(simulate_path(model, cfg, replicate=1 << 30))
    return float(np.quantile(x, 1.0 - level))


def resolve_threshold(model: MAStencilModel, cfg: PathConfig) -> float:
    if cfg.threshold is not None:
        return float(cfg.threshold)
    level = cfg.u_target / cfg.n
    if cfg.threshold_rule == "pilot":
        return _pilot_threshold(model, level)
    return marginal_tail(model).isf(level)


# --------------------------------------------------------------------------
# tallies


@dataclass
class ClusterStats:
    """Merged tallies of a block-cluster extraction.

    ``cluster_counts`` holds the anchored support pattern of each cluster: the
    entries on ``-window..window`` around the anchor that exceed ``rel_tol``
    times the block maximum.  ``shape_counts`` holds the whole-block shape key.
    """

    n_exceedances: int = 0
    n_clusters: int = 0
    retained_length: int = 0
    tail_prob: float = float("nan")
    cluster_counts: Counter = field(default_factory=Counter)
    anchored_pattern_counts: Counter = field(default_factory=Counter)
    shape_counts: Counter = field(default_factory=Counter)
    size_hist: Counter = field(default_factory=Counter)
    poisson_counts: List[int] = field(default_factory=list)

    def merge(self, other: "ClusterStats") -> "ClusterStats":
        return ClusterStats(
            self.n_exceedances + other.n_exceedances,
            self.n_clusters + other.n_clusters,
            self.retained_length + other.retained_length,
            other.tail_prob if math.isnan(self.tail_prob) else self.tail_prob,
            self.cluster_counts + other.cluster_counts,
            self.anchored_pattern_counts + other.anchored_pattern_counts,
            self.shape_counts + other.shape_counts,
            self.size_hist + other.size_hist,
            self.poisson_counts + other.poisson_counts,
        )

    @property
    def theta_hat_ratio(self) -> float:
        return self.n_clusters / self.n_exceedances if self.n_exceedances else float("nan")

    @property
    def expected_exceedances(self) -> float:
        return self.retained_length * self.tail_prob

    @property
    def theta_hat_clusters(self) -> float:
        """``N_c / (n P(|X_0| > c_n))`` over the retained length."""
        return self.n_clusters / self.expected_exceedances

    def theta_ratio_se(self) -> float:
        """Delta-method standard error of ``N_c / N_e`` from the cluster sizes."""
        nc = self.n_clusters
        if nc < 2:
            return float("nan")
        sizes = np.repeat(np.array(list(self.size_hist.keys()), dtype=float), list(self.size_hist.values()))
        return float(sizes.std(ddof=1) / math.sqrt(nc) / sizes.mean() ** 2)


def _reduce(items: Iterable[ClusterStats]) -> ClusterStats:
    out = ClusterStats()
    for it in items:
        out = out.merge(it)
    return out


def _anchored_windows(blocks: np.ndarray, anchor: str, m: int, rel_tol: float):
    """Exceedance and support patterns on ``-m..m`` around each block's anchor.

    ``blocks`` are already divided by the threshold; outside the block is zero.
    """
    pos = anchor_dense(blocks, anchor)
    a = np.abs(blocks)
    top = a.max(axis=1, keepdims=True)
    pad = np.pad(a, ((0, 0), (m, m)))
    win = pad[np.arange(a.shape[0])[:, None], pos[:, None] + np.arange(2 * m + 1)[None, :]]
    exc = [tuple(r) for r in (win > 1.0).astype(int).tolist()]
    sup = [tuple(r) for r in (win > rel_tol * top).astype(int).tolist()]
    return exc, sup


def extract_clusters(
    path: np.ndarray,
    cfg: PathConfig,
    threshold: float,
    anchor: str = "fm",
    tail_prob: float = float("nan"),
    rel_tol: float = DEFAULT_REL_TOL,
) -> ClusterStats:
    """Split ``path`` into ``k_n`` blocks of ``r_n`` (dropping the remainder) and
    record every block whose sup-norm exceeds ``threshold``.

    Per cluster: its exceedance count, the exceedance and support patterns
    around its anchor, and its whole-block shape key.
    """
    r = cfg.r_n
    k = len(path) // r
    blocks = path[: k * r].reshape(k, r) / threshold
    sizes = (np.abs(blocks) > 1.0).sum(axis=1)
    hit = np.flatnonzero(sizes > 0)
    st = ClusterStats(
        n_exceedances=int(sizes.sum()),
        n_clusters=int(hit.size),
        retained_length=k * r,
        tail_prob=tail_prob,
        size_hist=Counter(sizes[hit].tolist()),
    )
    if hit.size:
        exc, sup = _anchored_windows(blocks[hit], anchor, cfg.window, rel_tol)
        st.anchored_pattern_counts = Counter(exc)
        st.cluster_counts = Counter(sup)
        st.shape_counts = Counter(shape_key(b, rel_tol) for b in blocks[hit])
    return st


# --------------------------------------------------------------------------
# pattern tables


@dataclass
class PatternTable:
    """Empirical frequencies of discrete keys next to their exact limits."""

    kind: str  # "window", "support" or "shape"
    counts: Dict[Pattern, int]
    exact: Dict[Pattern, float]
    total: int

    def rows(self) -> List[tuple]:
        """(pattern_id, description, count, empirical_freq, exact_prob, z_score)."""
        keys = sorted(set(self.counts) | set(self.exact), key=lambda k: (-self.exact.get(k, 0.0), k))
        label = "shape" if self.kind == "shape" else "window"
        out = []
        for key in keys:
            emp = self.freq(key)
            ex = float(self.exact.get(key, 0.0))
            se = math.sqrt(max(ex * (1 - ex), 1.0 / self.total) / self.total)
            pid = describe(key, "shape") if label == "shape" else "".join(map(str, key))
            out.append((pid, describe(key, label), self.counts.get(key, 0), emp, ex, (emp - ex) / se))
        return out

    def freq(self, key: Pattern) -> float:
        return self.counts.get(key, 0) / self.total

    def sigma(self, p: float) -> float:
        return math.sqrt(p * (1 - p) / self.total)

    def tv_distance(self, reference: Mapping[Pattern, float]) -> float:
        keys = set(self.counts) | set(reference)
        return 0.5 * sum(abs(self.freq(k) - reference.get(k, 0.0)) for k in keys)

    def max_abs_z(self) -> float:
        return max((abs(r[5]) for r in self.rows()), default=0.0)


# --------------------------------------------------------------------------
# experiments


@dataclass
class TailProcessResult:
    threshold: float
    n_exceedances: int
    window: PatternTable
    support: PatternTable


def empirical_tail_process(path: np.ndarray, cfg: PathConfig, threshold: float, model: Optional[MAStencilModel] = None, rel_tol: float = DEFAULT_REL_TOL) -> TailProcessResult:
    """Windows ``X_{i-m..i+m} / c_n`` around every exceedance away from the edges.

    Returns the exceedance-pattern table and the support-pattern table
    (entries above ``rel_tol * |X_i|``); exact columns are filled when
    ``model`` is given.
    """
    m = cfg.window
    n = len(path)
    idx = np.flatnonzero(np.abs(path) > threshold)
    idx = idx[(idx >= m) & (idx < n - m)]
    if idx.size == 0:
        raise NoExceedances(f"no exceedance of {threshold:.6g} in a path of length {n}")
    win = path[idx[:, None] + np.arange(-m, m + 1)[None, :]] / threshold
    exact_w, exact_s = {}, {}
    if model is not None:
        tail = ma_spectral(model)
        exact_w = window_pattern_law(tail, m)
        exact_s = support_pattern_law(tail, m, rel_tol)
    return TailProcessResult(
        threshold,
        int(idx.size),
        PatternTable("window", dict(Counter(exceedance_patterns(win))), exact_w, int(idx.size)),
        PatternTable("support", dict(Counter(support_patterns(win, rel_tol))), exact_s, int(idx.size)),
    )


def tail_process_experiment(model: MAStencilModel, cfg: PathConfig, rel_tol: float = DEFAULT_REL_TOL) -> TailProcessResult:
    c = resolve_threshold(model, cfg)
    return empirical_tail_process(simulate_path(model, cfg), cfg, c, model, rel_tol)


@dataclass
class ClusterResult:
    threshold: float
    stats: ClusterStats
    clusters: PatternTable  # anchored support patterns
    anchored: PatternTable  # anchored exceedance patterns
    theta_exact: float


def cluster_experiment(model: MAStencilModel, cfg: PathConfig, anchor: str = "fm", replicates: int = 1, rel_tol: float = DEFAULT_REL_TOL) -> ClusterResult:
    """Block clusters pooled over ``replicates`` independent paths."""
    c = resolve_threshold(model, cfg)
    fbar = marginal_tail(model).sf(c)
    inner = cfg.workers if replicates == 1 else 1

    def one(rep):
        return extract_clusters(simulate_path(model, cfg, rep, workers=inner), cfg, c, anchor, fbar, rel_tol)

    st = _reduce(_rng.pmap(one, range(replicates), cfg.workers))
    if st.n_clusters == 0:
        raise NoClusters("no block exceeded the threshold")
    q = ma_anchored(model)
    m = cfg.window
    return ClusterResult(
        c,
        st,
        PatternTable("support", dict(st.cluster_counts), anchored_window_law(q, anchor, m, "support", rel_tol), st.n_clusters),
        PatternTable("window", dict(st.anchored_pattern_counts), anchored_window_law(q, anchor, m), st.n_clusters),
        ma_extremal_index(model),
    )


@dataclass
class PoissonResult:
    threshold: float
    eps: float
    counts: List[int]
    expected_mean: float
    limit_mean: float
    mean: float
    variance: float
    mean_z: float
    dispersion: float
    chi2: float
    dof: int
    p_value: float
    table: List[tuple]  # (count label, observed, empirical_freq, poisson_pmf)


def _poisson_bins(lam: float, n: int, min_expected: float = 5.0) -> int:
    # bins 0..K-1 and ">= K", each expected to hold at least min_expected
    k = 1
    while n * stats.poisson.sf(k, lam) >= min_expected and n * stats.poisson.pmf(k, lam) >= min_expected:
        k += 1
    return k


def poisson_cluster_experiment(model: MAStencilModel, cfg: PathConfig, eps: float = 1.0, replicates: int = 2000) -> PoissonResult:
    """Number of blocks whose sup-norm exceeds ``eps * c_n``, one count per path.

    The limit is Poisson with mean ``theta * u * eps^-alpha``; the finite-n
    reference mean is ``theta * k_n r_n P(|X_0| > eps c_n)``.  The chi-square
    test pools the upper tail so that every bin expects at least 5 counts.
    """
    if not eps > 0:
        raise ConfigError("eps must be positive")
    c = resolve_threshold(model, cfg)
    level = c * eps
    theta = ma_extremal_index(model)
    r, k = cfg.r_n, cfg.k_n
    lam = theta * k * r * marginal_tail(model).sf(level)
    lam_limit = theta * cfg.u_target * eps ** (-model.alpha)

    def one(rep):
        idx, _ = exceedance_view(model, cfg, rep, level)
        return int(np.unique(idx[idx < k * r] // r).size)

    counts = _rng.pmap(one, range(replicates), cfg.workers)
    arr = np.asarray(counts)
    mean = float(arr.mean())
    var = float(arr.var(ddof=1)) if arr.size > 1 else float("nan")
    kb = _poisson_bins(lam, arr.size)
    obs = np.array([(arr == j).sum() for j in range(kb)] + [(arr >= kb).sum()], dtype=float)
    pmf = np.append(stats.poisson.pmf(np.arange(kb), lam), stats.poisson.sf(kb - 1, lam))
    expct = arr.size * pmf
    chi2 = float(((obs - expct) ** 2 / expct).sum())
    dof = len(obs) - 1
    table = [(str(j), int(o), float(o / arr.size), float(q)) for j, (o, q) in enumerate(zip(obs[:-1], pmf[:-1]))]
    table.append((f">={kb}", int(obs[-1]), float(obs[-1] / arr.size), float(pmf[-1])))
    return PoissonResult(
        c, eps, counts, lam, lam_limit, mean, var,
        (mean - lam) / math.sqrt(lam / arr.size),
        var / mean if mean > 0 else float("nan"),
        chi2, dof, float(stats.chi2.sf(chi2, dof)), table,
    )


@dataclass
class RandomizedResult:
    threshold: float
    n_paths: int
    n_sampled: int
    table: PatternTable


def _select_index(seed: int, rep: int, n: int) -> int:
    return int(_rng.stream(seed, _rng.SELECT, rep).integers(n))


def _lookup(idx: np.ndarray, vals: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Values at ``pos`` from a sorted sparse view; zero where absent."""
    j = np.minimum(np.searchsorted(idx, pos), max(idx.size - 1, 0))
    if idx.size == 0:
        return np.zeros(np.shape(pos))
    return np.where(idx[j] == pos, vals[j], 0.0)


def randomized_cluster_experiment(model: MAStencilModel, cfg: PathConfig, anchor: str = "fm", replicates: int = 1000, rel_tol: float = DEFAULT_REL_TOL) -> RandomizedResult:
    """Per path, one block drawn uniformly among those exceeding ``c_n``; the
    support pattern around its anchor (see :class:`ClusterStats`)."""
    seed = cfg.require_seed()
    c = resolve_threshold(model, cfg)
    r, k, m = cfg.r_n, cfg.k_n, cfg.window

    def one(rep):
        idx, vals = exceedance_view(model, cfg, rep, rel_tol * c)
        keep = idx < k * r
        idx, vals = idx[keep], vals[keep]
        hit = np.unique(idx[np.abs(vals) > c] // r)
        if hit.size == 0:
            return None
        b = int(hit[_select_index(seed, rep, hit.size)])
        block = _lookup(idx, vals, np.arange(b * r, (b + 1) * r)) / c
        _, sup = _anchored_windows(block[None, :], anchor, m, rel_tol)
        return sup[0]

    keys = [v for v in _rng.pmap(one, range(replicates), cfg.workers) if v is not None]
    if not keys:
        raise NoClusters("no path produced a cluster")
    exact = anchored_window_law(ma_anchored(model), anchor, m, "support", rel_tol)
    return RandomizedResult(c, replicates, len(keys), PatternTable("support", dict(Counter(keys)), exact, len(keys)))


def randomized_origin_experiment(model: MAStencilModel, cfg: PathConfig, replicates: int = 1000) -> RandomizedResult:
    """Per path, one exceedance drawn uniformly; the exceedance pattern on
    ``-window..window`` inside its block (outside the block counts as zero).

    The exact column is the window law of the tail process.  Models whose
    marks are shared by the whole path need not converge to it.
    """
    seed = cfg.require_seed()
    c = resolve_threshold(model, cfg)
    r, k, m = cfg.r_n, cfg.k_n, cfg.window

    def one(rep):
        idx, _ = exceedance_view(model, cfg, rep, c)
        idx = idx[idx < k * r]
        if idx.size == 0:
            return None
        i = int(idx[_select_index(seed, rep, idx.size)])
        start = (i // r) * r
        near = np.arange(i - m, i + m + 1)
        inside = (near >= start) & (near < start + r)
        return tuple((inside & np.isin(near, idx)).astype(int).tolist())

    keys = [v for v in _rng.pmap(one, range(replicates), cfg.workers) if v is not None]
    if not keys:
        raise NoExceedances("no path produced an exceedance")
    exact = window_pattern_law(ma_spectral(model), m)
    return RandomizedResult(c, replicates, len(keys), PatternTable("window", dict(Counter(keys)), exact, len(keys)))


# Campbell functionals f(t, y) = g1(t) * g2(y_{-m..m}); g2 sees windows scaled by 1/c_n
@dataclass(frozen=True)
class Functional:
    name: str
    g1: Callable[[np.ndarray], np.ndarray]
    g1_integral: float
    g2: Callable[[np.ndarray], np.ndarray]
    m: int
    doc: str


def _ind(j):
    return lambda w: (np.abs(w[:, w.shape[1] // 2 + j]) > 1.0).astype(float)


def _count_window(w):
    return (np.abs(w) > 1.0).sum(axis=1).astype(float)


FUNCTIONALS = {
    f.name: f
    for f in (
        Functional("one", np.ones_like, 1.0, lambda w: np.ones(w.shape[0]), 0, "f = 1"),
        Functional("t-origin", lambda t: t, 0.5, _ind(0), 0, "f = t 1{|y_0|>1}"),
        Functional("lag1", np.ones_like, 1.0, _ind(1), 1, "f = 1{|y_1|>1}"),
        Functional("lag-1", np.ones_like, 1.0, _ind(-1), 1, "f = 1{|y_-1|>1}"),
        Functional("t2-window", lambda t: t * t, 1.0 / 3.0, _count_window, 2, "f = t^2 #{|j|<=2: |y_j|>1}"),
    )
}


def _g2_exact(f: Functional, tail) -> float:
    m = f.m

    def g(y, _):
        return float(f.g2(np.array([[y[j] for j in range(-m, m + 1)]]))[0])

    return tail_expectation(tail, g)


@dataclass
class CampbellResult:
    functional: str
    threshold: float
    tau: float
    lhs: float
    lhs_se: float
    rhs: float
    replicates: int

    @property
    def z(self) -> float:
        return (self.lhs - self.rhs) / self.lhs_se


def campbell_check(model: MAStencilModel, cfg: PathConfig, functional: str = "t-origin", replicates: int = 10_000) -> CampbellResult:
    """Monte-Carlo mean of ``sum_{k=1..n} f(k/n, X_{k+.}/c_n) 1{|X_k| > c_n}``
    against ``tau * int_0^1 g1 * E g2(Y)`` with ``tau = u_target``.

    Paths carry ``m`` extra values on each side so windows never leave the path.
    Every library ``g2`` depends on ``y`` only through ``|y_j| > 1``.
    """
    try:
        f = FUNCTIONALS[functional]
    except KeyError:
        raise ConfigError(f"unknown functional {functional!r}; choose from {sorted(FUNCTIONALS)}") from None
    c = resolve_threshold(model, cfg)
    tau = cfg.u_target
    rhs = tau * f.g1_integral * _g2_exact(f, ma_spectral(model))
    n, m = cfg.n, f.m

    def one(rep):
        idx, vals = exceedance_view(model, cfg, rep, c, length=n + 2 * m)
        core = idx[(idx >= m) & (idx < m + n)]
        if core.size == 0:
            return 0.0
        win = _lookup(idx, vals, core[:, None] + np.arange(-m, m + 1)[None, :]) / c
        return float(np.dot(f.g1((core - m + 1) / n), f.g2(win)))

    vals = np.asarray(_rng.pmap(one, range(replicates), cfg.workers))
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")
    return CampbellResult(functional, c, tau, float(vals.mean()), se, rhs, replicates)


@dataclass
class EstimatorRow:
    n: int
    r_n: int
    c_n: float
    n_exceedances: int
    n_clusters: int
    theta_hat: float
    theta_exact: float
    exceedance_ratio: float  # N_e / (n P(|X_0| > c_n))
    cluster_ratio: float  # N_c / (theta n P(|X_0| > c_n))


def estimator_convergence(model: MAStencilModel, cfg: PathConfig, schedule: Sequence[int], replicates: int = 1) -> List[EstimatorRow]:
    """Cluster and exceedance counts, normalised by their limits, along ``schedule``."""
    theta = ma_extremal_index(model)
    out = []
    for n in schedule:
        sub = replace(cfg, n=int(n))
        st = cluster_experiment(model, sub, "fm", replicates).stats
        out.append(
            EstimatorRow(
                int(n), sub.r_n, resolve_threshold(model, sub), st.n_exceedances, st.n_clusters,
                st.theta_hat_ratio, theta,
                st.n_exceedances / st.expected_exceedances,
                st.n_clusters / (theta * st.expected_exceedances),
            )
        )
    return out


# --------------------------------------------------------------------------
# artifacts


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


PATTERN_HEADER = ("pattern_id", "description", "count", "empirical_freq", "exact_prob", "z_score")
ESTIMATOR_HEADER = ("n", "r_n", "c_n", "N_e", "N_c", "theta_hat", "theta_exact", "exceedance_ratio", "cluster_ratio")
POISSON_HEADER = ("count", "observed", "empirical_freq", "poisson_pmf")


def write_pattern_csv(path, table: PatternTable) -> None:
    write_csv(path, PATTERN_HEADER, table.rows())


def write_estimator_csv(path, rows: Sequence[EstimatorRow]) -> None:
    write_csv(path, ESTIMATOR_HEADER, (tuple(asdict(r).values()) for r in rows))


def write_poisson_csv(path, res: PoissonResult) -> None:
    write_csv(path, POISSON_HEADER, res.table)


def write_json(path, payload: Mapping) -> None:
    def default(o):
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, (tuple, set)):
            return list(o)
        return str(o)

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


__all__ = [
    "PathConfig",
    "ConfigError",
    "NoExceedances",
    "NoClusters",
    "simulate_path",
    "exceedance_view",
    "ENGINES",
    "MarginalTail",
    "marginal_tail",
    "resolve_threshold",
    "ClusterStats",
    "extract_clusters",
    "PatternTable",
    "empirical_tail_process",
    "tail_process_experiment",
    "cluster_experiment",
    "poisson_cluster_experiment",
    "randomized_cluster_experiment",
    "randomized_origin_experiment",
    "FUNCTIONALS",
    "campbell_check",
    "estimator_convergence",
    "write_csv",
    "write_pattern_csv",
    "write_estimator_csv",
    "write_poisson_csv",
    "write_json",
]

"""Exact calculus on finite-atom laws of spectral and anchored tail processes.

A spectral law is a finite mixture of :class:`~tailproc.seqcore.LatticeSeq`
atoms with ``|theta_0| = 1``; the tail process is ``Y = y * Theta`` with ``y``
Pareto(alpha) independent of ``Theta``.  Everything here except the three
``*_mc`` functions is exact arithmetic on atoms and weights.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import _rng
from .patterns import Pattern, shape_key, DEFAULT_REL_TOL
from .seqcore import (
    ANCHORS,
    LatticeSeq,
    anchor_dense,
    anchor_first_maximum,
    canonicalize_mod_shift,
    exceedance_set,
    sup_norm,
)

ATOM_RTOL = 1e-12
WEIGHT_TOL = 1e-12


class MalformedModel(ValueError):
    pass


class SamplingBudgetExceeded(RuntimeError):
    pass


class _AtomBag:
    """Accumulates (possibly signed) mass on atoms, merging near-equal ones."""

    def __init__(self, rtol: float = ATOM_RTOL):
        self.rtol = rtol
        self._buckets: Dict[Tuple[int, ...], List[list]] = {}
        self._order: List[list] = []

    def add(self, seq: LatticeSeq, w: float) -> None:
        bucket = self._buckets.setdefault(seq.indices, [])
        for entry in bucket:
            if entry[0].isclose(seq, self.rtol):
                entry[1] += w
                return
        entry = [seq, w]
        bucket.append(entry)
        self._order.append(entry)

    def items(self) -> List[Tuple[LatticeSeq, float]]:
        return [(s, w) for s, w in self._order]

    def total(self) -> float:
        return math.fsum(w for _, w in self._order)


def _sort_key(seq: LatticeSeq):
    return (len(seq), seq.indices, seq.values)


class AtomicDist:
    """Finite probability law on lattice sequences.

    Parameters
    ----------
    atoms : iterable of (LatticeSeq, weight)
        Equal atoms (up to ``1e-12`` relative) are merged; zero weights dropped.
    normalize : bool
        Divide by the total mass.  Otherwise the weights must already sum to 1.
    """

    def __init__(self, atoms: Iterable[Tuple[LatticeSeq, float]], normalize: bool = False):
        bag = _AtomBag()
        for seq, w in atoms:
            w = float(w)
            if w < 0 or not math.isfinite(w):
                raise MalformedModel(f"invalid weight {w!r} for atom {seq}")
            if w > 0:
                bag.add(seq, w)
        items = bag.items()
        if not items:
            raise MalformedModel("distribution has no atoms")
        total = bag.total()
        if normalize:
            items = [(s, w / total) for s, w in items]
        elif abs(total - 1.0) > WEIGHT_TOL:
            raise MalformedModel(f"weights sum to {total!r}, not 1")
        items.sort(key=lambda a: _sort_key(a[0]))
        self._atoms = tuple(s for s, _ in items)
        self._weights = tuple(w for _, w in items)

    @property
    def atoms(self) -> Tuple[LatticeSeq, ...]:
        return self._atoms

    @property
    def weights(self) -> Tuple[float, ...]:
        return self._weights

    def __iter__(self):
        return zip(self._atoms, self._weights)

    def __len__(self):
        return len(self._atoms)

    def expect(self, f: Callable[[LatticeSeq], float]) -> float:
        return math.fsum(w * f(s) for s, w in self)

    def prob(self, seq: LatticeSeq, rtol: float = ATOM_RTOL) -> float:
        return math.fsum(w for s, w in self if s.isclose(seq, rtol))

    def map(self, f: Callable[[LatticeSeq], LatticeSeq]) -> "AtomicDist":
        return AtomicDist(((f(s), w) for s, w in self), normalize=True)

    def distance(self, other: "AtomicDist") -> float:
        """Largest absolute weight difference over the union of atoms."""
        bag = _AtomBag()
        for s, w in self:
            bag.add(s, w)
        for s, w in other:
            bag.add(s, -w)
        return max(abs(w) for _, w in bag.items())

    def isclose(self, other: "AtomicDist", tol: float = 1e-12) -> bool:
        return self.distance(other) <= tol

    def to_text(self) -> str:
        return "".join(f"{w!r} | {s}\n" for s, w in self)

    @classmethod
    def from_text(cls, text: str, normalize: bool = False) -> "AtomicDist":
        """Parse ``weight | index:value,...`` lines; ``#`` starts a comment."""
        atoms = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "|" not in line:
                raise MalformedModel(f"line {lineno}: expected 'weight | atom'")
            w, seq = line.split("|", 1)
            try:
                atoms.append((LatticeSeq.parse(seq), float(w)))
            except ValueError as exc:
                raise MalformedModel(f"line {lineno}: {exc}") from None
        return cls(atoms, normalize=normalize)

    @classmethod
    def load(cls, path, normalize: bool = False) -> "AtomicDist":
        with open(path) as fh:
            return cls.from_text(fh.read(), normalize=normalize)

    def __repr__(self):
        body = "; ".join(f"{w:.6g}: {s}" for s, w in self)
        return f"AtomicDist({body})"


@dataclass(frozen=True)
class TailModel:
    """Tail index and spectral law; ``Y = Pareto(alpha) * Theta``."""

    alpha: float
    spectral: AtomicDist

    def __post_init__(self):
        if not self.alpha > 0:
            raise MalformedModel("alpha must be positive")
        for s in self.spectral.atoms:
            if abs(abs(s[0]) - 1.0) > 1e-12:
                raise MalformedModel(f"atom {s} has |theta_0| != 1")

    @property
    def support_radius(self) -> int:
        return max(max(abs(s.indices[0]), abs(s.indices[-1])) for s in self.spectral.atoms)


@dataclass(frozen=True)
class AnchoredModel:
    """Tail index and a law of the anchored spectral process ``Q``.

    Atoms have sup-norm 1 with their first maximum at the origin.
    """

    alpha: float
    q: AtomicDist

    def __post_init__(self):
        if not self.alpha > 0:
            raise MalformedModel("alpha must be positive")
        for s in self.q.atoms:
            if abs(sup_norm(s) - 1.0) > 1e-12:
                raise MalformedModel(f"atom {s} does not have sup-norm 1")
            if anchor_first_maximum(s) != 0:
                raise MalformedModel(f"atom {s} is not canonical (first maximum off origin)")


# --------------------------------------------------------------------------
# exact validity checks


@dataclass
class TCFReport:
    valid: bool
    max_violation: float
    witness: Optional[Tuple[int, LatticeSeq, float, float]] = None  # (k, atom, left, right)


def tcf_check(model: TailModel, k_range: Optional[int] = None, tol: float = 1e-10) -> TCFReport:
    """Compare both sides of the time-change identity atom by atom.

    For each lag ``k`` the left measure puts mass ``w`` on
    ``shift(theta, k) / |theta_k|`` (atoms with ``theta_k != 0``); the right
    measure puts mass ``w * |theta_{-k}|**alpha`` on ``theta``.
    """
    alpha = model.alpha
    if k_range is None:
        k_range = 2 * model.support_radius
    worst = 0.0
    witness = None
    for k in sorted(range(-k_range, k_range + 1), key=lambda j: (abs(j), -j)):
        left, right = _AtomBag(), _AtomBag()
        for s, w in model.spectral:
            tk = s[k]
            if tk != 0.0:
                left.add(s.shift(k) / abs(tk), w)
                right.add(s.shift(k) / abs(tk), 0.0)
            tmk = s[-k]
            if tmk != 0.0:
                right.add(s, w * abs(tmk) ** alpha)
                left.add(s, 0.0)
        # both bags hold the same atoms in the same insertion order
        for (atom, lw), (_, rw) in zip(left.items(), right.items()):
            if abs(lw - rw) > worst:
                worst = abs(lw - rw)
                witness = (k, atom, lw, rw)
    return TCFReport(valid=worst <= tol, max_violation=worst, witness=witness if worst > tol else None)


def mecke_sides(model: TailModel, g: Callable[[int, LatticeSeq], float]) -> Tuple[float, float]:
    """Both sides of the spectral Mecke identity for a test function ``g(k, x)``.

    ``E[sum_k g(-k, shift(Theta,k)/|Theta_k|)]`` against
    ``E[sum_k g(k, Theta) |Theta_k|**alpha]``, sums over the support.
    """
    a = model.alpha
    lhs = math.fsum(w * g(-k, s.shift(k) / abs(v)) for s, w in model.spectral for k, v in s.items())
    rhs = math.fsum(w * g(k, s) * abs(v) ** a for s, w in model.spectral for k, v in s.items())
    return lhs, rhs


# --------------------------------------------------------------------------
# Pareto-magnitude integration


def _regimes(theta: LatticeSeq, extra_breaks: Sequence[float] = ()) -> np.ndarray:
    # y-values where the exceedance set of y*theta (or a caller functional) changes
    brk = {1.0 / abs(v) for v in theta.values if abs(v) < 1.0}
    brk.update(b for b in extra_breaks if b > 1.0)
    return np.array(sorted(brk))


def _representatives(breaks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Midpoints and Pareto-free interval bounds for the regimes above 1."""
    lo = np.concatenate(([1.0], breaks))
    hi = np.concatenate((breaks, [np.inf]))
    mid = np.where(np.isinf(hi), 2.0 * lo, np.sqrt(lo * np.where(np.isinf(hi), 1.0, hi)))
    return lo, hi, mid


def pareto_expectation(
    theta: LatticeSeq,
    alpha: float,
    g: Callable[[LatticeSeq, float], float],
    extra_breaks: Sequence[float] = (),
) -> float:
    """``E[g(y * theta, y)]`` for ``y ~ Pareto(alpha)``, computed piecewise.

    ``g`` must be constant in ``y`` between consecutive breakpoints, which are
    the levels ``1/|theta_k|`` where an entry starts to exceed 1, plus
    ``extra_breaks``.
    """
    lo, hi, mid = _representatives(_regimes(theta, extra_breaks))
    mass = lo ** (-alpha) - np.where(np.isinf(hi), 0.0, hi ** (-alpha))
    return math.fsum(float(m) * g(theta * float(y), float(y)) for m, y in zip(mass, mid) if m > 0)


def tail_expectation(model: TailModel, g: Callable[[LatticeSeq, float], float], extra_breaks=()) -> float:
    """Exact ``E[g(Y, |Y_0|)]`` under the tail law; see :func:`pareto_expectation`."""
    return math.fsum(w * pareto_expectation(s, model.alpha, g, extra_breaks) for s, w in model.spectral)


def magnitude_edges(alpha: float, n_buckets: int = 32, quantile: float = 0.999) -> np.ndarray:
    """Log-spaced bucket edges on (1, q] with q the Pareto ``quantile``."""
    top = (1.0 - quantile) ** (-1.0 / alpha)
    return np.geomspace(1.0, top, n_buckets + 1)


def pareto_bucket_probs(alpha: float, edges: np.ndarray) -> np.ndarray:
    """Bucket probabilities of Pareto(alpha), with an overflow bucket last."""
    sf = edges ** (-alpha)
    return np.append(sf[:-1] - sf[1:], sf[-1])


def window_pattern_law(model: TailModel, m: int) -> Dict[Pattern, float]:
    """Exact law of the exceedance pattern of ``Y`` on offsets ``-m..m``."""
    law: Dict[Pattern, float] = Counter()
    for s, w in model.spectral:
        lo, hi, mid = _representatives(_regimes(s))
        for a, b, y in zip(lo, hi, mid):
            mass = float(a ** (-model.alpha) - (0.0 if np.isinf(b) else b ** (-model.alpha)))
            pat = tuple(int(abs(y * s[j]) > 1.0) for j in range(-m, m + 1))
            law[pat] += w * mass
    return dict(law)


def support_pattern_law(model: TailModel, m: int, rel_tol: float = DEFAULT_REL_TOL) -> Dict[Pattern, float]:
    """Exact law of the support pattern ``|Theta_j| > rel_tol`` on ``-m..m``."""
    law: Dict[Pattern, float] = Counter()
    for s, w in model.spectral:
        law[tuple(int(abs(s[j]) > rel_tol) for j in range(-m, m + 1))] += w
    return dict(law)


def shape_law(model: AnchoredModel, rel_tol: float = DEFAULT_REL_TOL) -> Dict[Pattern, float]:
    """Exact law of the shift-invariant shape key of ``Q``."""
    law: Dict[Pattern, float] = Counter()
    for s, w in model.q:
        law[shape_key(np.abs(s.to_dense(s.indices[0], s.indices[-1])), rel_tol)] += w
    return dict(law)


def anchored_window_law(
    model: AnchoredModel,
    anchor: str = "fm",
    m: int = 1,
    kind: str = "exceedance",
    rel_tol: float = DEFAULT_REL_TOL,
) -> Dict[Pattern, float]:
    """Exact pattern on ``-m..m`` of the cluster ``Pareto(alpha) * Q`` recentred
    at its anchor (``"fe"`` or ``"fm"``).

    ``kind="exceedance"`` marks entries above 1; ``kind="support"`` marks
    entries above ``rel_tol`` times the cluster maximum.
    """
    if kind not in ("exceedance", "support"):
        raise ValueError(f"unknown pattern kind {kind!r}")
    find = ANCHORS[anchor]
    law: Dict[Pattern, float] = Counter()
    for s, w in model.q:
        lo, hi, mid = _representatives(_regimes(s))
        for a_, b_, yv in zip(lo, hi, mid):
            mass = float(a_ ** (-model.alpha) - (0.0 if np.isinf(b_) else b_ ** (-model.alpha)))
            z = s * float(yv)
            pos = find(z)
            level = 1.0 if kind == "exceedance" else rel_tol * sup_norm(z)
            law[tuple(int(abs(z[pos + j]) > level) for j in range(-m, m + 1))] += w * mass
    return dict(law)


# --------------------------------------------------------------------------
# extremal index and Palm duality


def extremal_index_spectral(model: TailModel) -> float:
    a = model.alpha
    return model.spectral.expect(lambda s: sup_norm(s) ** a / s.alpha_mass(a))


def extremal_index_inverse_count(model: TailModel) -> float:
    """``E[1/|e(Y)|]`` by piecewise integration over the Pareto magnitude."""
    return tail_expectation(model, lambda y, _: 1.0 / len(exceedance_set(y)))


def mean_exceedance_count(model: TailModel) -> float:
    """``E[|e(Y)|]`` (exact)."""
    return tail_expectation(model, lambda y, _: float(len(exceedance_set(y))))


def mean_alpha_mass(model: AnchoredModel) -> float:
    a = model.alpha
    return model.q.expect(lambda s: s.alpha_mass(a))


def anchored_from_spectral(model: TailModel) -> AnchoredModel:
    """Law of ``Q`` by debiasing ``Theta/||Theta||`` with ``||Theta||^a / sum |Theta_k|^a``."""
    a = model.alpha
    atoms = []
    for s, w in model.spectral:
        top = sup_norm(s)
        atoms.append((canonicalize_mod_shift(s) / top, w * top**a / s.alpha_mass(a)))
    return AnchoredModel(a, AtomicDist(atoms, normalize=True))


def _random_shift_mixture(dist: AtomicDist, alpha: float, tilt: bool) -> AtomicDist:
    # shift(x, k)/|x_k| with probability prop. to |x_k|^alpha; when tilt is
    # False the shift is drawn conditionally on x (weights renormalised per atom)
    atoms = []
    for s, w in dist:
        norm = 1.0 if tilt else s.alpha_mass(alpha)
        for k, v in s.items():
            atoms.append((s.shift(k) / abs(v), w * abs(v) ** alpha / norm))
    return AtomicDist(atoms, normalize=True)


def spectral_from_anchored(model: AnchoredModel) -> TailModel:
    """Law of ``Theta`` from any representative ``Q`` of the anchored spectral process."""
    return TailModel(model.alpha, _random_shift_mixture(model.q, model.alpha, tilt=True))


def rs_transform(model: TailModel) -> TailModel:
    """Random shift to ``k`` w.p. ``|Theta_k|^a / sum_j |Theta_j|^a``, then rescale.

    Spectral tail processes are fixed points of this map.
    """
    return TailModel(model.alpha, _random_shift_mixture(model.spectral, model.alpha, tilt=False))


# --------------------------------------------------------------------------
# Monte-Carlo cross-checks


def _dense_atoms(dist: AtomicDist):
    """Per atom: (first index, dense values)."""
    return [(s.indices[0], s.to_dense(s.indices[0], s.indices[-1])) for s in dist.atoms]


def _sample_atoms(dist: AtomicDist, alpha: float, n: int, seed: int, key: int, chunk_size: int, workers: int):
    """Atom indices and Pareto magnitudes, drawn chunk-wise from independent streams."""
    p = np.asarray(dist.weights)

    def draw(ch):
        c, s0, s1 = ch
        rng = _rng.stream(seed, key, c)
        idx = rng.choice(len(p), size=s1 - s0, p=p)
        y = _rng.pareto(rng, alpha, s1 - s0)
        return idx, y

    parts = _rng.pmap(draw, _rng.chunks(n, chunk_size), workers)
    return np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts])


@dataclass
class StationarityReport:
    """Paired comparison of functionals of ``Y`` and ``B_tau Y``."""

    n_samples: int
    stat_distance_estimate: float
    ci: Tuple[float, float]
    max_z: float
    oracle_max_z: float
    z_threshold: float
    rows: List[tuple] = field(default_factory=list)  # (functional, category, p_Y, p_BY, exact, z)

    @property
    def consistent(self) -> bool:
        return self.max_z <= self.z_threshold and self.oracle_max_z <= self.z_threshold


def exceedance_stationarity_mc(
    model: TailModel,
    tau: Callable[[LatticeSeq], int],
    n_samples: int = 200_000,
    seed: int = 0,
    window: int = 2,
    workers: int = 1,
    chunk_size: int = _rng.DEFAULT_CHUNK,
    sigmas: float = 3.0,
) -> StationarityReport:
    """Monte-Carlo check that ``B_tau Y`` and ``Y`` have the same law.

    Compared functionals: exceedance count, log-bucketed value at the origin,
    exceedance pattern on ``-window..window`` and canonical shape.  Within a
    Pareto regime of an atom the exceedance set of ``y * theta`` is fixed, so
    ``tau`` is evaluated once per (atom, regime); this is exact for maps that
    depend on ``x`` only through ``e(x)`` or are scale-invariant (all maps in
    :mod:`tailproc.seqcore`).

    ``z_threshold`` is the two-sided ``sigmas`` level with a Bonferroni
    correction over all compared categories.
    """
    a = model.alpha
    idx, y = _sample_atoms(model.spectral, a, n_samples, seed, _rng.TAIL, chunk_size, workers)
    edges = magnitude_edges(a)
    shapes = _AtomBag()
    for s in model.spectral.atoms:
        shapes.add(canonicalize_mod_shift(s) / sup_norm(s), 0.0)
    shape_list = [s for s, _ in shapes.items()]

    def shape_id(s):
        c = canonicalize_mod_shift(s) / sup_norm(s)
        return next(i for i, t in enumerate(shape_list) if t.isclose(c, 1e-9))

    n = len(y)
    names = ("count", "origin", "pattern", "shape")
    codebook = {name: {} for name in names}

    def code(name, cat):
        return codebook[name].setdefault(cat, len(codebook[name]))

    feats = {name: (np.full(n, -1, np.int64), np.full(n, -1, np.int64)) for name in names}
    for ai, s in enumerate(model.spectral.atoms):
        sel = np.flatnonzero(idx == ai)
        if sel.size == 0:
            continue
        brk = _regimes(s)
        lo, hi, mid = _representatives(brk)
        reg = np.searchsorted(brk, y[sel], side="left")
        sid = shape_id(s)
        for r in np.unique(reg):
            rows = sel[reg == r]
            rep = s * float(mid[r])
            e = exceedance_set(rep)
            k = tau(rep)
            for which, origin in ((0, 0), (1, k)):
                feats["count"][which][rows] = code("count", len(e))
                feats["shape"][which][rows] = code("shape", sid)
                pat = tuple(int(abs(rep[origin + j]) > 1.0) for j in range(-window, window + 1))
                feats["pattern"][which][rows] = code("pattern", pat)
                bucket = np.searchsorted(edges, y[rows] * abs(s[origin]), side="left") - 1
                feats["origin"][which][rows] = bucket
    for b_ in range(len(edges)):
        code("origin", b_)  # origin buckets use their own index as code

    exact = {
        "pattern": window_pattern_law(model, window),
        "count": tail_expectation_law(model, lambda yv: len(exceedance_set(yv))),
        "shape": Counter(),
        "origin": dict(enumerate(pareto_bucket_probs(a, edges).tolist())),
    }
    for s, w in model.spectral:
        exact["shape"][shape_id(s)] += w

    out_rows = []
    worst = (0.0, 0.0, 0.0)  # (|diff|, se, diff)
    max_z = oracle_z = 0.0
    for name in names:
        fy, fb = feats[name]
        for c in exact[name]:
            code(name, c)
        size = len(codebook[name])
        cy = np.bincount(fy, minlength=size)
        cb = np.bincount(fb, minlength=size)
        # paired differences d_i = 1{fb_i = c} - 1{fy_i = c}
        same = np.bincount(fy[fy == fb], minlength=size)
        for c, j in sorted(codebook[name].items(), key=lambda t: repr(t[0])):
            py, pb = cy[j] / n, cb[j] / n
            diff = pb - py
            # E d^2 = P(exactly one indicator set)
            ed2 = (cy[j] + cb[j] - 2 * same[j]) / n
            var = max(ed2 - diff * diff, 0.0) * n / max(n - 1, 1)
            se = math.sqrt(var / n)
            z = abs(diff) / se if se > 0 else (0.0 if diff == 0 else math.inf)
            pe = float(exact[name].get(c, 0.0))
            se_o = math.sqrt(max(pe * (1 - pe), 1.0 / n) / n)
            zo = abs(pb - pe) / se_o
            out_rows.append((name, c, py, pb, pe, z))
            max_z = max(max_z, z)
            oracle_z = max(oracle_z, zo)
            if abs(diff) > worst[0]:
                worst = (abs(diff), se, diff)
    n_cat = len(out_rows)
    thr = float(stats.norm.isf(2 * stats.norm.sf(sigmas) / (2 * n_cat)))
    return StationarityReport(
        n_samples=n,
        stat_distance_estimate=worst[0],
        ci=(worst[2] - sigmas * worst[1], worst[2] + sigmas * worst[1]),
        max_z=max_z,
        oracle_max_z=oracle_z,
        z_threshold=thr,
        rows=out_rows,
    )


def tail_expectation_law(model: TailModel, f: Callable[[LatticeSeq], object]) -> Dict[object, float]:
    """Exact law of a discrete functional ``f(Y)`` that is constant on Pareto regimes."""
    law: Dict[object, float] = Counter()
    for s, w in model.spectral:
        lo, hi, mid = _representatives(_regimes(s))
        for a_, b_, yv in zip(lo, hi, mid):
            mass = float(a_ ** (-model.alpha) - (0.0 if np.isinf(b_) else b_ ** (-model.alpha)))
            law[f(s * float(yv))] += w * mass
    return dict(law)


@dataclass
class AnchoredSample:
    """Accepted draws of ``Y`` given ``A(Y) = 0``, summarised by shape and magnitude."""

    n_samples: int
    n_accepted: int
    shapes: List[LatticeSeq]
    shape_counts: np.ndarray
    magnitude_edges: np.ndarray
    magnitude_counts: np.ndarray

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_samples

    @property
    def acceptance_se(self) -> float:
        p = self.acceptance_rate
        return math.sqrt(p * (1 - p) / self.n_samples)

    def shape_law(self) -> AtomicDist:
        return AtomicDist(
            ((s, c) for s, c in zip(self.shapes, self.shape_counts) if c > 0), normalize=True
        )


def anchored_law_from_tail_mc(
    model: TailModel,
    anchor: str = "fm",
    n_samples: int = 200_000,
    seed: int = 0,
    workers: int = 1,
    chunk_size: int = _rng.DEFAULT_CHUNK,
) -> AnchoredSample:
    """Rejection-sample ``Y`` and keep draws whose anchor sits at the origin.

    The acceptance rate estimates the extremal index.  Accepted draws are
    summarised by the canonical shape ``canon(Y)/||Y||`` and by ``||Y||``
    bucketed on log-spaced edges (which should look Pareto(alpha)).
    """
    a = model.alpha
    idx, y = _sample_atoms(model.spectral, a, n_samples, seed, _rng.TAIL, chunk_size, workers)
    edges = magnitude_edges(a)
    bag = _AtomBag()
    for s in model.spectral.atoms:
        bag.add(canonicalize_mod_shift(s) / sup_norm(s), 0.0)
    shapes = [s for s, _ in bag.items()]
    shape_counts = np.zeros(len(shapes), dtype=np.int64)
    mag_counts = np.zeros(len(edges), dtype=np.int64)
    accepted = 0
    for ai, (start, dense) in enumerate(_dense_atoms(model.spectral)):
        sel = np.flatnonzero(idx == ai)
        if sel.size == 0:
            continue
        ys = y[sel]
        rows = ys[:, None] * dense[None, :]
        ok = anchor_dense(rows, anchor) == -start
        n_ok = int(ok.sum())
        if n_ok == 0:
            continue
        accepted += n_ok
        s = model.spectral.atoms[ai]
        c = canonicalize_mod_shift(s) / sup_norm(s)
        j = next(i for i, t in enumerate(shapes) if t.isclose(c, 1e-9))
        shape_counts[j] += n_ok
        norms = ys[ok] * sup_norm(s)
        b = np.searchsorted(edges, norms, side="left") - 1
        mag_counts += np.bincount(b, minlength=len(edges))[: len(edges)]
    if accepted == 0:
        raise SamplingBudgetExceeded(f"no draw accepted in {n_samples} samples")
    return AnchoredSample(n_samples, accepted, shapes, shape_counts, edges, mag_counts)


@dataclass
class SizeBiasedSample:
    """Weighted law of ``B_U Z`` under the size-biased tilt ``|e(Z)|``."""

    n_samples: int
    window: int
    patterns: Dict[Pattern, float]
    weighted_mean_count: float
    weight_total: float
    ess: float  # effective sample size of the importance weights


def size_biased_tail_from_anchored_mc(
    model: AnchoredModel,
    n_samples: int = 200_000,
    seed: int = 0,
    window: int = 1,
    workers: int = 1,
    chunk_size: int = _rng.DEFAULT_CHUNK,
) -> SizeBiasedSample:
    """Rebuild the tail law from cluster draws ``Z = Pareto(alpha) * Q``.

    Each draw is weighted by its number of exceedances and recentred at an
    exceedance-point chosen uniformly; the weighted pattern law on
    ``-window..window`` converges to that of the tail process.
    """
    a = model.alpha
    idx, y = _sample_atoms(model.q, a, n_samples, seed, _rng.TAIL, chunk_size, workers)
    u = _rng.concat(
        _rng.pmap(
            lambda ch: _rng.stream(seed, _rng.SELECT, ch[0]).random(ch[2] - ch[1]),
            _rng.chunks(n_samples, chunk_size),
            workers,
        )
    )
    pats: Dict[Pattern, float] = Counter()
    wsum = w2sum = wcount = 0.0
    for ai, (start, dense) in enumerate(_dense_atoms(model.q)):
        sel = np.flatnonzero(idx == ai)
        if sel.size == 0:
            continue
        L = dense.size
        pad = np.concatenate((np.zeros(window), dense, np.zeros(window)))
        rows = y[sel, None] * pad[None, :]
        exc = np.abs(rows) > 1.0
        cnt = exc.sum(axis=1)
        pick = np.minimum((u[sel] * cnt).astype(np.int64), cnt - 1)
        # column of the pick-th exceedance in each row
        csum = np.cumsum(exc, axis=1)
        col = (csum <= pick[:, None]).sum(axis=1)
        offs = np.arange(-window, window + 1)
        win = exc[np.arange(sel.size)[:, None], col[:, None] + offs[None, :]].astype(int)
        w = cnt.astype(float)
        for key, ww in zip(map(tuple, win.tolist()), w):
            pats[key] += ww
        wsum += w.sum()
        w2sum += (w * w).sum()
        wcount += (w * cnt).sum()
    return SizeBiasedSample(
        n_samples=n_samples,
        window=window,
        patterns={k: float(v / wsum) for k, v in pats.items()},
        weighted_mean_count=wcount / wsum,
        weight_total=wsum,
        ess=wsum * wsum / w2sum,
    )


__all__ = [
    "AtomicDist",
    "TailModel",
    "AnchoredModel",
    "MalformedModel",
    "SamplingBudgetExceeded",
    "TCFReport",
    "tcf_check",
    "mecke_sides",
    "pareto_expectation",
    "tail_expectation",
    "tail_expectation_law",
    "window_pattern_law",
    "support_pattern_law",
    "shape_law",
    "anchored_window_law",
    "magnitude_edges",
    "pareto_bucket_probs",
    "extremal_index_spectral",
    "extremal_index_inverse_count",
    "mean_exceedance_count",
    "mean_alpha_mass",
    "anchored_from_spectral",
    "spectral_from_anchored",
    "rs_transform",
    "exceedance_stationarity_mc",
    "StationarityReport",
    "anchored_law_from_tail_mc",
    "AnchoredSample",
    "size_biased_tail_from_anchored_mc",
    "SizeBiasedSample",
]

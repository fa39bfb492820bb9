"""Finite-stencil moving averages ``X_i = sum_k C_{i,k} Z_{i-k}`` with random coefficients.

Coefficients are expressions over named marks with finite supports, e.g.
``["1", "eps * b"]``.  How marks are attached decides the dependence
structure:

* ``attach="output"``: ``C_{i,k} = S(M_i)[k]``; every output index draws its
  own marks (``X_i = Z_i + eps_i b Z_{i-1}``);
* ``attach="innovation"``: ``C_{i,k} = S(M_{i-k})[k]``; marks travel with the
  innovation they multiply;
* ``mark_sharing="global"``: one mark draw for the whole path
  (``X_i = Z_i + eps_0 Z_{i-1}``).

The diagonal field ``C_k = C_{k,k}`` determines the tail calculus exactly.
"""
from __future__ import annotations

import ast
import itertools
import json
import math
import operator
import re
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .distcalc import AnchoredModel, AtomicDist, MalformedModel, TailModel
from .seqcore import LatticeSeq, canonicalize_mod_shift, sup_norm

DEFAULT_MARK_CAP = 10**6


class MarkSpaceTooLarge(ValueError):
    pass


class DegenerateModel(ValueError):
    pass


# --------------------------------------------------------------------------
# coefficient expressions

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
}


class Expr:
    """Arithmetic expression over named variables, evaluated on numpy arrays.

    Only numbers, names, ``+ - * / **``, unary signs and the functions
    ``abs min max sqrt exp log`` are accepted.

    >>> Expr("eps * b").evaluate({"eps": np.array([0.0, 1.0]), "b": 2.0})
    array([0., 2.])
    """

    def __init__(self, text: str):
        self.text = str(text).strip()
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise MalformedModel(f"cannot parse coefficient {self.text!r}: {exc.msg}") from None
        self._tree = tree.body
        self.names = frozenset(self._check(self._tree))

    def _check(self, node) -> set:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return set()
        if isinstance(node, ast.Name):
            return {node.id}
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return self._check(node.left) | self._check(node.right)
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return self._check(node.operand)
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and not node.keywords
        ):
            out = set()
            for a in node.args:
                out |= self._check(a)
            return out
        raise MalformedModel(f"unsupported construct in coefficient {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        fn = _FUNCS[node.func.id]
        args = [self._eval(a, env) for a in node.args]
        if node.func.id in ("min", "max"):
            out = args[0]
            for a in args[1:]:
                out = fn(out, a)
            return out
        return fn(*args)

    def evaluate(self, env: Mapping[str, object]):
        missing = self.names - set(env)
        if missing:
            raise MalformedModel(f"coefficient {self.text!r} uses undefined name(s) {sorted(missing)}")
        with np.errstate(all="raise"):
            try:
                return self._eval(self._tree, env)
            except FloatingPointError as exc:
                raise MalformedModel(f"coefficient {self.text!r}: {exc}") from None

    def __eq__(self, other):
        return isinstance(other, Expr) and other.text == self.text

    def __hash__(self):
        return hash(self.text)

    def __repr__(self):
        return f"Expr({self.text!r})"


# --------------------------------------------------------------------------
# model description


@dataclass(frozen=True)
class InnovationSpec:
    """Two-sided Pareto innovations: ``|Z| ~ Pareto(alpha)``, sign +1 w.p. ``p``."""

    alpha: float
    p: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise MalformedModel(f"alpha must be positive, got {self.alpha!r}")
        if not 0.0 <= self.p <= 1.0:
            raise MalformedModel(f"p must lie in [0, 1], got {self.p!r}")

    def sign_law(self) -> List[Tuple[float, float]]:
        return [(s, w) for s, w in ((1.0, self.p), (-1.0, 1.0 - self.p)) if w > 0]


@dataclass(frozen=True)
class Mark:
    name: str
    values: Tuple[float, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        if not self.name.isidentifier():
            raise MalformedModel(f"bad mark name {self.name!r}")
        if len(self.values) != len(self.probs) or not self.values:
            raise MalformedModel(f"mark {self.name}: values and probs must be non-empty and of equal length")
        if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise MalformedModel(f"mark {self.name}: probabilities must be non-negative and sum to 1")

    @classmethod
    def bernoulli(cls, name: str, q: float = 0.5) -> "Mark":
        return cls(name, (0.0, 1.0), (1.0 - q, q))


@dataclass(frozen=True)
class CoefStencil:
    """Coefficients ``C_{i,0..m-1}`` as expressions over marks and fixed parameters."""

    coefficients: Tuple[Expr, ...]
    marks: Tuple[Mark, ...] = ()
    params: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        if not self.coefficients:
            raise MalformedModel("stencil needs at least one coefficient")
        names = [m.name for m in self.marks]
        if len(set(names)) != len(names):
            raise MalformedModel("duplicate mark names")
        clash = set(names) & {k for k, _ in self.params}
        if clash:
            raise MalformedModel(f"names used both as mark and parameter: {sorted(clash)}")
        known = set(names) | {k for k, _ in self.params}
        for c in self.coefficients:
            bad = c.names - known
            if bad:
                raise MalformedModel(f"coefficient {c.text!r} uses undefined name(s) {sorted(bad)}")

    @property
    def window(self) -> int:
        return len(self.coefficients)

    def mark_space_size(self) -> int:
        return math.prod(len(m.values) for m in self.marks)

    def enumerate_marks(self, cap: int = DEFAULT_MARK_CAP) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        """All joint mark values as arrays, with their probabilities."""
        size = self.mark_space_size()
        if size > cap:
            raise MarkSpaceTooLarge(f"mark space has {size} points, cap is {cap}")
        combos = list(itertools.product(*(range(len(m.values)) for m in self.marks)))
        env = {}
        prob = np.ones(len(combos))
        for j, m in enumerate(self.marks):
            pick = np.array([c[j] for c in combos], dtype=np.int64)
            env[m.name] = np.asarray(m.values, dtype=float)[pick]
            prob = prob * np.asarray(m.probs, dtype=float)[pick]
        return env, prob

    def evaluate(self, marks: Mapping[str, np.ndarray], size: int) -> np.ndarray:
        """Coefficient matrix of shape ``(size, window)`` for the given mark arrays."""
        env = dict(self.params)
        env.update(marks)
        out = np.empty((size, self.window))
        for k, c in enumerate(self.coefficients):
            v = np.broadcast_to(np.asarray(c.evaluate(env), dtype=float), (size,))
            if not np.all(np.isfinite(v)):
                raise MalformedModel(f"coefficient {c.text!r} is not finite for some mark value")
            out[:, k] = v
        return out


ATTACH = ("output", "innovation")
SHARING = ("per-index", "global")


@dataclass(frozen=True)
class MAStencilModel:
    innovations: InnovationSpec
    coef: CoefStencil
    attach: str = "output"
    mark_sharing: str = "per-index"
    name: str = "custom"

    def __post_init__(self):
        if self.attach not in ATTACH:
            raise MalformedModel(f"attach must be one of {ATTACH}")
        if self.mark_sharing not in SHARING:
            raise MalformedModel(f"mark_sharing must be one of {SHARING}")
        _, rows = self.coefficient_law()
        if np.any(np.all(rows == 0.0, axis=1)):
            raise MalformedModel("some mark value makes every coefficient vanish")

    @property
    def alpha(self) -> float:
        return self.innovations.alpha

    @property
    def window(self) -> int:
        return self.coef.window

    def coefficient_law(self, cap: int = DEFAULT_MARK_CAP) -> Tuple[np.ndarray, np.ndarray]:
        """Joint law of one output's coefficients ``C_{0,0..m-1}``: (probs, rows).

        Rows may repeat; probabilities of repeated rows add.
        """
        env, prob = self.coef.enumerate_marks(cap)
        rows = self.coef.evaluate(env, prob.size)
        if self.attach == "innovation" and self.mark_sharing == "per-index":
            # C_{0,k} reads the marks of innovation -k: independent across k
            return _product_of_marginals(prob, rows, cap)
        return prob, rows

    def describe(self) -> str:
        coefs = ", ".join(c.text for c in self.coef.coefficients)
        return f"{self.name}: X_i = sum_k C_(i,k) Z_(i-k), C = [{coefs}], alpha={self.alpha:g}, p={self.innovations.p:g}"


def _marginal(prob: np.ndarray, col: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    vals, inv = np.unique(col, return_inverse=True)
    return vals, np.bincount(inv, weights=prob, minlength=vals.size)


def _product_of_marginals(prob: np.ndarray, rows: np.ndarray, cap: int) -> Tuple[np.ndarray, np.ndarray]:
    margins = [_marginal(prob, rows[:, k]) for k in range(rows.shape[1])]
    size = math.prod(v.size for v, _ in margins)
    if size > cap:
        raise MarkSpaceTooLarge(f"diagonal law has {size} atoms, cap is {cap}")
    out_rows = np.array(list(itertools.product(*(v for v, _ in margins))), dtype=float)
    out_prob = np.array([math.prod(c) for c in itertools.product(*(p for _, p in margins))])
    return out_prob, out_rows.reshape(size, rows.shape[1])


def _diagonal_rows(model: MAStencilModel, cap: int) -> Tuple[np.ndarray, np.ndarray]:
    env, prob = model.coef.enumerate_marks(cap)
    rows = model.coef.evaluate(env, prob.size)
    if model.attach == "output" and model.mark_sharing == "per-index":
        # C_k = S(M_k)[k] with M_k independent across k
        return _product_of_marginals(prob, rows, cap)
    return prob, rows


def diagonal_law(model: MAStencilModel, cap: int = DEFAULT_MARK_CAP) -> AtomicDist:
    """Exact law of the diagonal coefficients ``C_k = C_{k,k}``, k = 0..m-1.

    Zero rows (all diagonal coefficients vanish) are kept as the empty sequence.
    """
    prob, rows = _diagonal_rows(model, cap)
    atoms = [(LatticeSeq.from_dense(r), w) for r, w in zip(rows, prob)]
    return AtomicDist(atoms, normalize=True)


def _tail_constant(model: MAStencilModel, diag: AtomicDist) -> float:
    a = model.alpha
    c = diag.expect(lambda s: s.alpha_mass(a))
    if not c > 0:
        raise DegenerateModel("sum_k E|C_k|^alpha is zero")
    return c


def tail_constant(model: MAStencilModel) -> float:
    """``c = sum_k E|C_k|^alpha``."""
    return _tail_constant(model, diagonal_law(model))


def ma_spectral(model: MAStencilModel) -> TailModel:
    """Spectral law: ``kappa * shift(C, k) / |C_k|`` drawn with weight ``|C_k|^alpha / c``."""
    a = model.alpha
    diag = diagonal_law(model)
    c = _tail_constant(model, diag)
    atoms = []
    for s, w in diag:
        for k, v in s.items():
            base = s.shift(k) / abs(v)
            for sign, ws in model.innovations.sign_law():
                atoms.append((base * sign, w * ws * abs(v) ** a / c))
    return TailModel(a, AtomicDist(atoms, normalize=True))


def ma_anchored(model: MAStencilModel) -> AnchoredModel:
    """Anchored law: tilt by ``||C||^alpha`` and map to ``kappa * canon(C) / ||C||``."""
    a = model.alpha
    diag = diagonal_law(model)
    atoms = []
    for s, w in diag:
        if not s:
            continue
        top = sup_norm(s)
        base = canonicalize_mod_shift(s) / top
        for sign, ws in model.innovations.sign_law():
            atoms.append((base * sign, w * ws * top**a))
    if not atoms:
        raise DegenerateModel("E||C||^alpha is zero")
    return AnchoredModel(a, AtomicDist(atoms, normalize=True))


def ma_extremal_index(model: MAStencilModel) -> float:
    """``E||C||^alpha / sum_k E|C_k|^alpha``."""
    a = model.alpha
    diag = diagonal_law(model)
    c = _tail_constant(model, diag)
    return diag.expect(lambda s: sup_norm(s) ** a) / c


# --------------------------------------------------------------------------
# presets and model files


def _example_51(b: float = 1.0, alpha: float = 1.2, p: float = 1.0, name: str = "example-5.1") -> MAStencilModel:
    if not b > 0:
        raise MalformedModel("b must be positive")
    stencil = CoefStencil((Expr("1"), Expr("eps * b")), (Mark.bernoulli("eps"),), (("b", float(b)),))
    return MAStencilModel(InnovationSpec(alpha, p), stencil, name=name)


def _example_52(alpha: float = 1.2, p: float = 1.0) -> MAStencilModel:
    stencil = CoefStencil((Expr("1"), Expr("eps")), (Mark.bernoulli("eps"),))
    return MAStencilModel(InnovationSpec(alpha, p), stencil, mark_sharing="global", name="example-5.2")


def _three_lag(alpha: float = 1.2, p: float = 1.0) -> MAStencilModel:
    stencil = CoefStencil((Expr("1"), Expr("eps"), Expr("eps")), (Mark.bernoulli("eps"),))
    return MAStencilModel(InnovationSpec(alpha, p), stencil, name="three-lag-remark")


def _iid(alpha: float = 1.2, p: float = 1.0) -> MAStencilModel:
    return MAStencilModel(InnovationSpec(alpha, p), CoefStencil((Expr("1"),)), name="iid")


PRESETS = {
    "example-1.1": lambda alpha=1.2, p=1.0: _example_51(1.0, alpha, p, name="example-1.1"),
    "example-5.1": _example_51,
    "example-5.2": _example_52,
    "three-lag-remark": _three_lag,
    "iid": _iid,
}

_CALL = re.compile(r"^\s*([\w.\-]+?)\s*(?:\((.*)\))?\s*$")


def preset(spec: str, **overrides) -> MAStencilModel:
    """Build a named preset; accepts ``"example-5.1(b=2, alpha=1.5)"`` or keyword overrides.

    Positional arguments inside the parentheses follow the preset's signature,
    e.g. ``"example-5.1(0.5, 0.8)"`` means ``b=0.5, alpha=0.8``.
    """
    m = _CALL.match(spec)
    if not m or m.group(1) not in PRESETS:
        raise KeyError(f"unknown preset {spec!r}; choose from {sorted(PRESETS)}")
    name, argtext = m.groups()
    args, kwargs = [], {}
    if argtext:
        call = ast.parse(f"f({argtext})", mode="eval").body
        args = [ast.literal_eval(a) for a in call.args]
        kwargs = {k.arg: ast.literal_eval(k.value) for k in call.keywords}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return PRESETS[name](*args, **kwargs)
    except TypeError as exc:
        raise MalformedModel(f"preset {name}: {exc}") from None


def model_from_dict(cfg: Mapping) -> MAStencilModel:
    """Build a model from a nested mapping (the model-file schema).

    ::

        innovation: {alpha: 1.2, p: 1.0}
        stencil:
          coefficients: ["1", "eps * b"]
          marks: {eps: {values: [0, 1], probs: [0.5, 0.5]}}
          params: {b: 0.7}
        attach: output            # or innovation
        mark_sharing: per-index   # or global
    """
    try:
        inn = cfg["innovation"]
        st = cfg["stencil"]
        coefs = st["coefficients"]
    except (KeyError, TypeError) as exc:
        raise MalformedModel(f"model description is missing {exc}") from None
    window = st.get("window")
    if window is not None and int(window) != len(coefs):
        raise MalformedModel(f"stencil.window={window} but {len(coefs)} coefficients given")
    marks = []
    for name, spec in (st.get("marks") or {}).items():
        marks.append(Mark(str(name), tuple(float(v) for v in spec["values"]), tuple(float(q) for q in spec["probs"])))
    params = tuple(sorted((str(k), float(v)) for k, v in (st.get("params") or {}).items()))
    stencil = CoefStencil(tuple(Expr(str(c)) for c in coefs), tuple(marks), params)
    return MAStencilModel(
        InnovationSpec(float(inn["alpha"]), float(inn.get("p", 1.0))),
        stencil,
        attach=cfg.get("attach", "output"),
        mark_sharing=cfg.get("mark_sharing", "per-index"),
        name=str(cfg.get("name", "custom")),
    )


def load_model(path) -> MAStencilModel:
    """Read a model file (YAML, or JSON when the suffix is ``.json``)."""
    path = str(path)
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        cfg = json.loads(text)
    else:
        import yaml

        cfg = yaml.safe_load(text)
    if not isinstance(cfg, Mapping):
        raise MalformedModel(f"{path}: expected a mapping at top level")
    return model_from_dict(cfg)


def with_params(model: MAStencilModel, alpha: Optional[float] = None, p: Optional[float] = None) -> MAStencilModel:
    inn = InnovationSpec(alpha if alpha is not None else model.alpha, p if p is not None else model.innovations.p)
    return replace(model, innovations=inn)


__all__ = [
    "Expr",
    "InnovationSpec",
    "Mark",
    "CoefStencil",
    "MAStencilModel",
    "MarkSpaceTooLarge",
    "DegenerateModel",
    "diagonal_law",
    "tail_constant",
    "ma_spectral",
    "ma_anchored",
    "ma_extremal_index",
    "PRESETS",
    "preset",
    "model_from_dict",
    "load_model",
    "with_params",
]

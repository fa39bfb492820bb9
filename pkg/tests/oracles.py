"""Independent reference computations for the tests.

Nothing here calls into tailproc.models or tailproc.distcalc: diagonal laws
are enumerated with plain loops and coefficient text is evaluated by Python.
"""
import itertools
import math
import random

from tailproc.distcalc import MalformedModel
from tailproc.models import CoefStencil, DegenerateModel, Expr, InnovationSpec, MAStencilModel, Mark


def _coef(text, env):
    return float(eval(text, {"abs": abs, "min": min, "max": max, "sqrt": math.sqrt}, dict(env)))


def _marginals(model):
    marks = model.coef.marks
    return [list(zip(m.values, m.probs)) for m in marks], [m.name for m in marks]


def _joint(model):
    vals, names = _marginals(model)
    for combo in itertools.product(*vals):
        p = math.prod(q for _, q in combo)
        yield dict(zip(names, (v for v, _ in combo))), p


def diagonal_law(model):
    """{tuple(C_0..C_{m-1}): prob}"""
    texts = [c.text for c in model.coef.coefficients]
    params = dict(model.coef.params)
    law = {}
    if model.attach == "output" and model.mark_sharing == "per-index":
        per_k = []
        for t in texts:
            col = {}
            for env, p in _joint(model):
                v = _coef(t, {**params, **env})
                col[v] = col.get(v, 0.0) + p
            per_k.append(list(col.items()))
        for combo in itertools.product(*per_k):
            key = tuple(v for v, _ in combo)
            law[key] = law.get(key, 0.0) + math.prod(p for _, p in combo)
    else:
        for env, p in _joint(model):
            key = tuple(_coef(t, {**params, **env}) for t in texts)
            law[key] = law.get(key, 0.0) + p
    return law


def theta(model):
    a = model.innovations.alpha
    law = diagonal_law(model)
    num = sum(p * max(abs(c) for c in row) ** a for row, p in law.items())
    den = sum(p * sum(abs(c) ** a for c in row) for row, p in law.items())
    return num / den


def _key(d):
    return tuple(sorted((i, round(v, 9)) for i, v in d.items() if v != 0))


def spectral_atoms(model):
    """{((index, value), ...): weight} for the spectral tail process."""
    a = model.innovations.alpha
    p = model.innovations.p
    law = diagonal_law(model)
    c = sum(q * sum(abs(v) ** a for v in row) for row, q in law.items())
    out = {}
    for row, q in law.items():
        for k, ck in enumerate(row):
            if ck == 0:
                continue
            for sign, ws in ((1.0, p), (-1.0, 1.0 - p)):
                if ws == 0:
                    continue
                atom = {j - k: sign * v / abs(ck) for j, v in enumerate(row)}
                key = _key(atom)
                out[key] = out.get(key, 0.0) + q * ws * abs(ck) ** a / c
    return out


TEMPLATES = ["1", "a", "b", "a * b", "2 * a - b", "0.5", "a ** 2", "1 + a", "-b", "abs(a) + 0.25"]
SUPPORT = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]


def random_model(rng: random.Random):
    """A random finite-stencil model: width <= 4, mark supports <= 3."""
    while True:
        width = rng.randint(1, 4)
        coefs = tuple(Expr(rng.choice(TEMPLATES)) for _ in range(width))
        marks = []
        for name in ("a", "b"):
            size = rng.randint(1, 3)
            vals = tuple(rng.sample(SUPPORT, size))
            raw = [rng.uniform(0.2, 1.0) for _ in range(size)]
            probs = [r / sum(raw) for r in raw]
            probs[-1] = 1.0 - sum(probs[:-1])
            marks.append(Mark(name, vals, tuple(probs)))
        try:
            model = MAStencilModel(
                InnovationSpec(rng.choice([0.5, 0.8, 1.0, 1.2, 1.5, 2.0, 3.0]), rng.choice([1.0, 1.0, 0.5, 0.3])),
                CoefStencil(coefs, tuple(marks)),
                attach=rng.choice(["output", "innovation"]),
                mark_sharing=rng.choice(["per-index", "per-index", "global"]),
                name=f"random-{width}",
            )
        except (MalformedModel, DegenerateModel):
            continue
        if any(any(v != 0 for v in row) for row in diagonal_law(model)):
            return model


def corpus(n=24, seed=20240601):
    rng = random.Random(seed)
    return [random_model(rng) for _ in range(n)]

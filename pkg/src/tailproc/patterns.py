"""Discrete summaries of windows and clusters used for empirical-vs-exact tables.

Three keys are used:

* exceedance pattern: 0/1 tuple of ``|v_j| > 1`` over a centred window;
* support pattern: 0/1 tuple of ``|v_j| > rel_tol * |v_0|`` over a centred window
  (recovers the atom structure of the spectral process from rescaled data);
* shape key: offsets of entries above ``rel_tol * max|v|``, re-based to start
  at 0.  Invariant under shifts, so it compares clusters with any anchor.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np

Pattern = Tuple[int, ...]

DEFAULT_REL_TOL = 0.25


def exceedance_pattern(window: np.ndarray) -> Pattern:
    return tuple(int(v) for v in (np.abs(window) > 1.0))


def exceedance_patterns(windows: np.ndarray) -> list:
    """Row-wise :func:`exceedance_pattern` for a 2-d array."""
    return [tuple(r) for r in (np.abs(windows) > 1.0).astype(int).tolist()]


def support_patterns(windows: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> list:
    m = windows.shape[1] // 2
    ref = np.abs(windows[:, m : m + 1])
    return [tuple(r) for r in (np.abs(windows) > rel_tol * ref).astype(int).tolist()]


def shape_key(values: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> Pattern:
    a = np.abs(np.asarray(values, dtype=float))
    top = a.max()
    if top == 0:
        return ()
    idx = np.flatnonzero(a > rel_tol * top)
    return tuple(int(i) for i in idx - idx[0])


def describe(pattern: Pattern, kind: str = "window") -> str:
    """Human-readable label: ``'.X.'`` style for windows, offsets for shapes."""
    if kind == "shape":
        return "{" + ",".join(str(i) for i in pattern) + "}"
    m = len(pattern) // 2
    return "".join(("O" if j == m else "X") if v else "." for j, v in enumerate(pattern))

"""Built-in expressions addressed by id from configs and the command line.

Right-hand sides take ``(K, u, d)`` node arrays with ``K = psi(t) - psi(a)``.
Test functions and weights take ``K`` only.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from psifrac.errors import InvalidParameter


def _float(params: Mapping, key: str, default: float) -> float:
    return float(params.get(key, default))


RHS_IDS = ("zero", "constant", "power", "sine")


def make_rhs(expr: str, params: Mapping) -> tuple[Callable, tuple[float, float]]:
    """Return ``(g(K, u, d), (L1, L2))`` for a catalog right-hand side.

    ``constant``: ``value``.  ``power``: ``value * K**exponent``.
    ``sine``: ``c0 + l1 sin(u) + l2 sin(d)``.
    """
    if expr == "zero":
        return (lambda K, u, d: np.zeros_like(K)), (0.0, 0.0)
    if expr == "constant":
        c = _float(params, "value", 1.0)
        return (lambda K, u, d: np.full_like(K, c)), (0.0, 0.0)
    if expr == "power":
        c = _float(params, "value", 1.0)
        e = _float(params, "exponent", 1.0)
        return (lambda K, u, d: c * np.power(K, e)), (0.0, 0.0)
    if expr == "sine":
        c0 = _float(params, "c0", 1.0)
        l1 = _float(params, "l1", 0.0)
        l2 = _float(params, "l2", 0.0)
        return (lambda K, u, d: c0 + l1 * np.sin(u) + l2 * np.sin(d)), (abs(l1), abs(l2))
    raise InvalidParameter(f"unknown rhs expression {expr!r}; choose from {RHS_IDS}")


TEST_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": lambda K: np.ones_like(K),
    "K": lambda K: K + 0.0,
    "K2": lambda K: K * K,
    "K3": lambda K: K**3,
    "sinK": np.sin,
    "cosK": np.cos,
    "expK": np.exp,
}


def test_function(fn_id: str) -> Callable[[np.ndarray], np.ndarray]:
    """Look up a test function; ``pow:B`` gives ``K**B``."""
    if fn_id.startswith("pow:"):
        try:
            b = float(fn_id[4:])
        except ValueError:
            raise InvalidParameter(f"bad power exponent in {fn_id!r}") from None
        return lambda K: np.power(K, b)
    try:
        return TEST_FUNCTIONS[fn_id]
    except KeyError:
        raise InvalidParameter(
            f"unknown test function {fn_id!r}; choose from {sorted(TEST_FUNCTIONS)} or pow:B"
        ) from None

r"""Left and right :math:`\psi`-fractional integrals and Caputo derivatives.

On a mesh with :math:`s_i = \psi(a) + i h` the left integral

.. math::

    J^{\alpha}_{a+}[u](t_n) = \frac{1}{\Gamma(\alpha)}
        \int_{s_0}^{s_n} (s_n - s)^{\alpha - 1} u(s) \,\mathrm{d}s

is approximated by the product-trapezoidal rule: :math:`u` is replaced by its
piecewise linear interpolant in :math:`s` and the kernel moments are exact,

.. math::

    J^{\alpha}[u]_n = \frac{h^\alpha}{\Gamma(\alpha + 2)}
        \Big(a_n u_0 + \sum_{j = 1}^{n} c_{n - j} u_j\Big),

with :math:`c_0 = 1`, :math:`c_k = (k+1)^{\alpha+1} - 2 k^{\alpha+1} +
(k-1)^{\alpha+1}` and :math:`a_n = (n-1)^{\alpha+1} - (n - \alpha - 1)
n^\alpha`.  The sum is a discrete convolution with a fixed summation order.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from psifrac.errors import InvalidParameter, NonFinite, OrderError
from psifrac.psi import Mesh

# lags past max(_SERIES_FROM, _SERIES_SPAN * order) use a binomial series
_SERIES_FROM = 16
_SERIES_SPAN = 8.0
_SERIES_TERMS = 14


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a function at the nodes of a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.mesh.t.shape:
            raise InvalidParameter(
                f"grid function has {vals.size} values for {self.mesh.t.size} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise NonFinite("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_t(cls, mesh: Mesh, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample ``fn(t)`` at the nodes."""
        return cls(mesh, np.broadcast_to(fn(mesh.t), mesh.t.shape))

    @classmethod
    def from_K(cls, mesh: Mesh, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        r"""Sample ``fn`` at :math:`K_i = \psi(t_i) - \psi(a)`."""
        return cls(mesh, np.broadcast_to(fn(mesh.K), mesh.K.shape))

    @classmethod
    def zeros(cls, mesh: Mesh) -> "GridFunction":
        return cls(mesh, np.zeros_like(mesh.t))

    def norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]


def _bracket_interior(p: float, k: np.ndarray, series: np.ndarray) -> np.ndarray:
    # (1+x)^p + (1-x)^p - 2 with x = 1/k
    x = 1.0 / k
    with np.errstate(divide="ignore"):
        out = np.expm1(p * np.log1p(x)) + np.expm1(p * np.log1p(-x))
    if np.any(series):
        x2 = x[series] ** 2
        coef = 1.0
        acc = np.zeros_like(x2)
        xpow = np.ones_like(x2)
        for m in range(1, _SERIES_TERMS + 1):
            coef *= (p - (2 * m - 2)) * (p - (2 * m - 1)) / ((2 * m - 1) * (2 * m))
            xpow = xpow * x2
            acc += coef * xpow
        out[series] = 2.0 * acc
    return out


def _bracket_start(p: float, n: np.ndarray, series: np.ndarray) -> np.ndarray:
    # (1-x)^p - 1 + p x with x = 1/n
    x = 1.0 / n
    with np.errstate(divide="ignore"):
        out = np.expm1(p * np.log1p(-x)) + p * x
    if np.any(series):
        y = -x[series]
        coef = p
        acc = np.zeros_like(y)
        ypow = y.copy()
        for m in range(2, 2 * _SERIES_TERMS + 2):
            coef *= (p - (m - 1)) / m
            ypow = ypow * y
            acc += coef * ypow
        out[series] = acc
    return out


@functools.lru_cache(maxsize=256)
def trapezoid_weights(alpha: float, N: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(c, a)``: convolution weights ``c[0..N-1]`` and start weights
    ``a[0..N]`` of the product-trapezoidal rule, scaled by
    ``h^alpha / Gamma(alpha + 2)``.

    Both are written as ``k^(alpha+1)`` times a bracket and combined in log
    space, so large orders neither overflow nor lose the bracket to
    cancellation.
    """
    p = alpha + 1.0
    log_scale = alpha * math.log(h) - math.lgamma(alpha + 2.0)
    k = np.arange(1, max(N, 1), dtype=float)
    series = k >= max(_SERIES_FROM, _SERIES_SPAN * p)
    c = np.empty(N)
    c[0] = math.exp(log_scale)
    c[1:] = np.exp(p * np.log(k) + log_scale) * _bracket_interior(p, k, series)
    n = np.arange(1, N + 1, dtype=float)
    series = n >= max(_SERIES_FROM, _SERIES_SPAN * p)
    a = np.empty(N + 1)
    a[0] = 0.0
    a[1:] = np.exp(p * np.log(n) + log_scale) * _bracket_start(p, n, series)
    c.setflags(write=False)
    a.setflags(write=False)
    return c, a


def _check_integral_order(order: float) -> float:
    order = float(order)
    if not order > 0.0 or not math.isfinite(order):
        raise OrderError(f"integral order must be > 0, got {order}")
    return order


def riemann_liouville_left(order: float, values: np.ndarray, h: float) -> np.ndarray:
    """Product-trapezoidal left integral of nodal ``values`` on a uniform grid."""
    order = _check_integral_order(order)
    u = np.asarray(values, dtype=float)
    N = u.size - 1
    c, a = trapezoid_weights(order, N, float(h))
    out = np.empty(N + 1)
    out[0] = 0.0
    out[1:] = np.convolve(c, u[1:])[:N] + a[1:] * u[0]
    return out


def riemann_liouville_at(order: float, values: np.ndarray, h: float, m: int) -> float:
    """Left integral at the single node ``m``."""
    order = _check_integral_order(order)
    u = np.asarray(values, dtype=float)
    if m == 0:
        return 0.0
    c, a = trapezoid_weights(order, u.size - 1, float(h))
    return float(np.dot(c[m - 1 :: -1], u[1 : m + 1])) + a[m] * u[0]


def frac_integral_left(order: float, u: GridFunction) -> GridFunction:
    r"""Left :math:`\psi`-fractional integral :math:`J^{\alpha}_{a+}[u]` at every node."""
    return GridFunction(u.mesh, riemann_liouville_left(order, u.values, u.mesh.h))


def frac_integral_at(order: float, u: GridFunction, index: int) -> float:
    """Left integral evaluated only at node ``index`` (used for boundary functionals)."""
    return riemann_liouville_at(order, u.values, u.mesh.h, int(index))


def frac_integral_right(order: float, u: GridFunction) -> GridFunction:
    r"""Right :math:`\psi`-fractional integral :math:`J^{\alpha}_{b-}[u]`.

    The reflection :math:`s \mapsto s_0 + s_N - s` maps it onto the left rule.
    """
    vals = riemann_liouville_left(order, u.values[::-1], u.mesh.h)[::-1]
    return GridFunction(u.mesh, vals)


def s_derivative(values: np.ndarray, h: float, n: int) -> np.ndarray:
    """Second-order finite-difference ``n``-th derivative in ``s`` (``n`` = 1, 2)."""
    u = np.asarray(values, dtype=float)
    if n == 1:
        return np.gradient(u, h, edge_order=2)
    d2 = np.empty_like(u)
    d2[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    d2[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (h * h)
    d2[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / (h * h)
    return d2


def _caputo_values(order: float, values: np.ndarray, h: float) -> np.ndarray:
    order = float(order)
    if not (0.0 < order <= 2.0):
        raise OrderError(f"Caputo order must lie in (0, 1] or (1, 2], got {order}")
    n = int(math.ceil(order))
    if values.size < n + 3:
        raise InvalidParameter("grid too short for the derivative stencil")
    w = s_derivative(values, h, n)
    if order == n:
        return w
    return riemann_liouville_left(n - order, w, h)


def caputo_left(order: float, u: GridFunction) -> GridFunction:
    r"""Left :math:`\psi`-Caputo derivative :math:`{}^C D^{\alpha}_{a+}[u]`.

    Differentiates ``n = ceil(alpha)`` times in :math:`s = \psi(t)`, which
    realizes :math:`(\psi'(t)^{-1} \mathrm{d}/\mathrm{d}t)^n`, then integrates
    with order ``n - alpha``.  Integer orders return the plain derivative.
    """
    return GridFunction(u.mesh, _caputo_values(order, u.values, u.mesh.h))


def inversion_residual(order: float, u: GridFunction) -> float:
    r"""``max |J^alpha cD^alpha u - (u - u(a))|`` over the nodes, ``alpha`` in (0, 1)."""
    order = float(order)
    if not 0.0 < order < 1.0:
        raise OrderError(f"inversion check needs an order in (0, 1), got {order}")
    back = frac_integral_left(order, caputo_left(order, u)).values
    return float(np.max(np.abs(back - (u.values - u.values[0]))))


def _trapezoid(values: np.ndarray, h: float) -> float:
    return float(h * (np.sum(values) - 0.5 * (values[0] + values[-1])))


def ibp_residual(order: float, u: GridFunction, v: GridFunction) -> float:
    r"""Absolute defect of the fractional integration-by-parts identity.

    With :math:`w = v / \psi'` both sides are integrals in :math:`s`:

    .. math::

        \int w \, {}^C D^{\alpha}_{a+}[u] \,\mathrm{d}s
        = \int u \, D^{\alpha}_{b-}[w] \,\mathrm{d}s
        + \Big[ J^{1 - \alpha}_{b-}[w] \, u \Big]_{a}^{b},

    where :math:`D^{\alpha}_{b-}[w] = -\partial_s J^{1 - \alpha}_{b-}[w]` is
    assembled from :func:`frac_integral_right`.
    """
    order = float(order)
    if not 0.0 < order < 1.0:
        raise OrderError(f"integration by parts check needs an order in (0, 1), got {order}")
    mesh = u.mesh
    h = mesh.h
    w = v.values / mesh.psi.deriv(mesh.t)
    lhs = _trapezoid(w * caputo_left(order, u).values, h)
    G = riemann_liouville_left(1.0 - order, w[::-1], h)[::-1]
    right_deriv = -s_derivative(G, h, 1)
    boundary = G[-1] * u.values[-1] - G[0] * u.values[0]
    rhs = _trapezoid(u.values * right_deriv, h) + boundary
    return abs(lhs - rhs)


def continuity_bound_check(order: float, u: GridFunction, i1: int, i2: int) -> tuple[float, float]:
    r"""Compare :math:`|J^\alpha u(t_2) - J^\alpha u(t_1)|` with
    :math:`2 \|u\|_\infty (\psi(t_2) - \psi(t_1))^\alpha / \Gamma(\alpha + 1)`.

    ``i1 < i2`` are node indices.
    """
    order = float(order)
    if not 0.0 < order < 1.0:
        raise OrderError(f"continuity check needs an order in (0, 1), got {order}")
    if not 0 <= i1 < i2 <= u.mesh.n:
        raise InvalidParameter(f"need node indices 0 <= i1 < i2 <= N, got {i1}, {i2}")
    J = frac_integral_left(order, u).values
    lhs = abs(J[i2] - J[i1])
    dK = u.mesh.K[i2] - u.mesh.K[i1]
    rhs = 2.0 * u.norm() / math.gamma(order + 1.0) * dK**order
    return lhs, rhs


def power_integral(order: float, beta: float, K):
    r"""Closed form :math:`J^\alpha[K^\beta] = \Gamma(\beta+1)/\Gamma(\alpha+\beta+1) K^{\alpha+\beta}`."""
    K = np.asarray(K, dtype=float)
    return math.gamma(beta + 1.0) / math.gamma(order + beta + 1.0) * np.power(K, order + beta)


def power_caputo(order: float, beta: float, K):
    r"""Closed form Caputo derivative of :math:`K^\beta`; zero for integer
    :math:`\beta < \lceil \alpha \rceil`."""
    K = np.asarray(K, dtype=float)
    n = math.ceil(order)
    if beta == math.floor(beta) and beta < n:
        return np.zeros_like(K)
    if beta - order + 1.0 <= 0.0 and (beta - order + 1.0) == math.floor(beta - order + 1.0):
        return np.zeros_like(K)
    with np.errstate(divide="ignore"):
        return math.gamma(beta + 1.0) / math.gamma(beta - order + 1.0) * np.power(K, beta - order)

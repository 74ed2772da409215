r"""Generator functions :math:`\psi`, problem domains and :math:`\psi`-uniform meshes.

Every operator in :mod:`psifrac.ops` works in the coordinate
:math:`s = \psi(t)`.  The substitution :math:`s = \psi(\tau)` turns the
kernel :math:`\psi'(\tau)(\psi(t) - \psi(\tau))^{\alpha - 1}\,d\tau` into the
plain Riemann-Liouville kernel :math:`(s_t - s)^{\alpha - 1}\,ds`, so a mesh
that is uniform in :math:`s` lets a single quadrature engine serve all
generators.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from psifrac.errors import InvalidParameter, InversionFailure

BISECTION_TOL = 1.0e-12


class PsiKind(enum.Enum):
    Identity = "identity"
    Logarithm = "log"
    PowerLaw = "power"
    Tabulated = "tabulated"


@dataclass(frozen=True, eq=False)
class PsiFunction:
    r"""An increasing generator :math:`\psi` with its derivative.

    Use :func:`make_psi` rather than constructing this directly.
    """

    kind: PsiKind
    exponent: float = 1.0
    samples: Optional[tuple[np.ndarray, np.ndarray]] = None
    _interp: Optional[PchipInterpolator] = field(default=None, repr=False)

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is PsiKind.Identity:
            return t + 0.0
        if self.kind is PsiKind.Logarithm:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(t)
        if self.kind is PsiKind.PowerLaw:
            with np.errstate(invalid="ignore"):
                return np.power(t, self.exponent)
        return self._interp(t)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is PsiKind.Identity:
            return np.ones_like(t)
        if self.kind is PsiKind.Logarithm:
            with np.errstate(divide="ignore", invalid="ignore"):
                return 1.0 / t
        if self.kind is PsiKind.PowerLaw:
            rho = self.exponent
            with np.errstate(divide="ignore", invalid="ignore"):
                return rho * np.power(t, rho - 1.0)
        # centred difference on the monotone interpolant
        ts, _ = self.samples
        step = 1.0e-6 * max(1.0, float(ts[-1] - ts[0]))
        lo = np.clip(t - step, ts[0], ts[-1])
        hi = np.clip(t + step, ts[0], ts[-1])
        return (self._interp(hi) - self._interp(lo)) / (hi - lo)

    def inverse(self, s, lo: float, hi: float):
        """Return ``t`` in ``[lo, hi]`` with ``psi(t) = s``."""
        s = np.asarray(s, dtype=float)
        if self.kind is PsiKind.Identity:
            return s + 0.0
        if self.kind is PsiKind.Logarithm:
            return np.exp(s)
        if self.kind is PsiKind.PowerLaw:
            return np.power(s, 1.0 / self.exponent)
        return _bisect_inverse(self, s, lo, hi)

    @property
    def label(self) -> str:
        if self.kind is PsiKind.PowerLaw:
            return f"power:{self.exponent:g}"
        return self.kind.value


def make_psi(kind, params=None) -> PsiFunction:
    """Build a generator.

    ``kind`` is a :class:`PsiKind` or one of ``"identity"``, ``"log"``,
    ``"power"``, ``"tabulated"``.  ``params`` is the exponent for the power
    law and a ``(t_samples, psi_samples)`` pair for tabulated generators.
    """
    kind = PsiKind(kind) if not isinstance(kind, PsiKind) else kind
    if kind is PsiKind.PowerLaw:
        rho = float(params if params is not None else 1.0)
        if not rho > 0.0 or not math.isfinite(rho):
            raise InvalidParameter(f"power-law exponent must be > 0, got {rho}")
        return PsiFunction(kind, exponent=rho)
    if kind is PsiKind.Tabulated:
        if params is None:
            raise InvalidParameter("tabulated psi needs (t, psi) sample arrays")
        ts = np.asarray(params[0], dtype=float)
        ys = np.asarray(params[1], dtype=float)
        if ts.ndim != 1 or ts.shape != ys.shape or ts.size < 2:
            raise InvalidParameter("tabulated psi needs two equal-length 1-D arrays")
        if np.any(np.diff(ts) <= 0.0):
            raise InvalidParameter("tabulated abscissae must be strictly increasing")
        ts.setflags(write=False)
        ys.setflags(write=False)
        return PsiFunction(kind, samples=(ts, ys), _interp=PchipInterpolator(ts, ys))
    return PsiFunction(kind)


def _bisect_inverse(psi: PsiFunction, s: np.ndarray, lo: float, hi: float) -> np.ndarray:
    flo = float(psi.eval(lo))
    fhi = float(psi.eval(hi))
    scale = max(1.0, abs(flo), abs(fhi))
    if np.any(s < flo - BISECTION_TOL * scale) or np.any(s > fhi + BISECTION_TOL * scale):
        raise InversionFailure(
            f"targets outside [{flo!r}, {fhi!r}]; bisection cannot bracket them"
        )
    left = np.full(s.shape, float(lo))
    right = np.full(s.shape, float(hi))
    mid = 0.5 * (left + right)
    for _ in range(200):
        mid = 0.5 * (left + right)
        val = psi.eval(mid)
        if np.all(np.abs(val - s) <= BISECTION_TOL * scale):
            return mid
        below = val < s
        left = np.where(below, mid, left)
        right = np.where(below, right, mid)
        if np.all(right - left <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
            break
    if np.any(np.abs(psi.eval(mid) - s) > BISECTION_TOL * scale):
        raise InversionFailure("bisection stalled; tabulated psi is not monotone here")
    return mid


@dataclass(frozen=True)
class Domain:
    """Time points ``a < eta < xi < T``; ``eta``/``xi`` may be omitted for
    plain operator work on ``[a, T]``."""

    a: float
    T: float
    eta: Optional[float] = None
    xi: Optional[float] = None

    def __post_init__(self):
        pts = [self.a] + [p for p in (self.eta, self.xi) if p is not None] + [self.T]
        if any(not math.isfinite(p) for p in pts):
            raise InvalidParameter("domain points must be finite")
        if any(p >= q for p, q in zip(pts, pts[1:])):
            raise InvalidParameter(f"domain must satisfy a < eta < xi < T, got {pts}")
        if (self.eta is None) != (self.xi is None):
            raise InvalidParameter("eta and xi must be given together")

    @property
    def has_interior_points(self) -> bool:
        return self.eta is not None


@dataclass(frozen=True)
class Violation:
    index: int
    t: float
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]

    def __bool__(self) -> bool:
        return self.valid


def validate_psi(psi: PsiFunction, dom: Domain, samples: int = 100) -> ValidationReport:
    """Sample ``psi`` on ``[a, T]`` and report monotonicity or ``psi' <= 0``
    failures.  Smoothness is not checked."""
    if samples < 2:
        raise InvalidParameter("validate_psi needs at least 2 samples")
    found: list[Violation] = []
    if psi.kind is PsiKind.Logarithm and dom.a <= 0.0:
        found.append(Violation(0, dom.a, "log generator needs a > 0"))
    if psi.kind is PsiKind.PowerLaw and dom.a < 0.0:
        found.append(Violation(0, dom.a, "power-law generator needs a >= 0"))
    if psi.kind is PsiKind.Tabulated:
        ts, ys = psi.samples
        if ts[0] > dom.a or ts[-1] < dom.T:
            found.append(Violation(0, dom.a, "tabulated samples do not cover [a, T]"))
        for i in np.flatnonzero(np.diff(ys) <= 0.0):
            found.append(Violation(int(i + 1), float(ts[i + 1]), "sample values not increasing"))

    t = np.linspace(dom.a, dom.T, samples)
    with np.errstate(all="ignore"):
        vals = psi.eval(t)
        ders = psi.deriv(t)
    for i in range(samples):
        if not (math.isfinite(vals[i]) and math.isfinite(ders[i])):
            found.append(Violation(i, float(t[i]), "psi or psi' not finite"))
        elif ders[i] <= 0.0:
            found.append(Violation(i, float(t[i]), "psi' <= 0"))
    for i in range(1, samples):
        if math.isfinite(vals[i]) and math.isfinite(vals[i - 1]) and vals[i] <= vals[i - 1]:
            found.append(Violation(i, float(t[i]), "psi not strictly increasing"))
    return ValidationReport(not found, tuple(found))


@dataclass(frozen=True, eq=False)
class Mesh:
    r"""Nodes ``t_0 = a < ... < t_N = T`` with :math:`\psi(t_i)` equispaced.

    ``s`` holds the design values :math:`\psi(a) + i h` and ``K`` the exact
    offsets :math:`i h = \psi(t_i) - \psi(a)`; operators use only these, never
    :math:`\psi` re-evaluated at the nodes.
    """

    psi: PsiFunction
    t: np.ndarray
    s: np.ndarray
    K: np.ndarray
    h: float
    eta_index: Optional[int] = None
    xi_index: Optional[int] = None
    eta_snap: float = 0.0
    xi_snap: float = 0.0

    @property
    def n(self) -> int:
        """Number of intervals ``N`` (the mesh has ``N + 1`` nodes)."""
        return self.t.size - 1

    @property
    def a(self) -> float:
        return float(self.t[0])

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def eta(self) -> float:
        return float(self.t[self.eta_index])

    @property
    def xi(self) -> float:
        return float(self.t[self.xi_index])

    @property
    def span(self) -> float:
        r""":math:`\psi(T) - \psi(a)`."""
        return float(self.K[-1])

    def domain(self) -> Domain:
        """The domain with ``eta``/``xi`` replaced by their snapped nodes."""
        if self.eta_index is None:
            return Domain(self.a, self.T)
        return Domain(self.a, self.T, self.eta, self.xi)


def build_mesh(psi: PsiFunction, dom: Domain, N: int) -> Mesh:
    """Invert ``psi`` on an equispaced image grid of ``N`` intervals.

    ``eta`` and ``xi`` snap to their nearest node; the snap distances (in
    ``t``) are recorded on the mesh.
    """
    N = int(N)
    if N < 4:
        raise InvalidParameter(f"mesh needs N >= 4, got {N}")
    s0 = float(psi.eval(dom.a))
    s1 = float(psi.eval(dom.T))
    if not (math.isfinite(s0) and math.isfinite(s1)) or not s1 > s0:
        raise InvalidParameter(f"psi(a)={s0!r}, psi(T)={s1!r}: not an increasing finite image")
    h = (s1 - s0) / N
    idx = np.arange(N + 1, dtype=float)
    K = idx * h
    s = s0 + K
    s[-1] = s1
    t = np.asarray(psi.inverse(s, dom.a, dom.T), dtype=float)
    t[0] = dom.a
    t[-1] = dom.T
    if np.any(np.diff(t) <= 0.0) or not np.all(np.isfinite(t)):
        raise InvalidParameter("inverted mesh nodes are not strictly increasing")

    eta_i = xi_i = None
    eta_snap = xi_snap = 0.0
    if dom.has_interior_points:
        eta_i, eta_snap = _snap(psi, s0, h, N, dom.eta, t)
        xi_i, xi_snap = _snap(psi, s0, h, N, dom.xi, t)
        if not 0 < eta_i < xi_i < N:
            raise InvalidParameter(
                f"mesh N={N} too coarse: eta and xi snap to nodes {eta_i}, {xi_i}"
            )
    for arr in (t, s, K):
        arr.setflags(write=False)
    return Mesh(psi, t, s, K, h, eta_i, xi_i, eta_snap, xi_snap)


def _snap(psi, s0, h, N, point, t) -> tuple[int, float]:
    i = int(round((float(psi.eval(point)) - s0) / h))
    i = min(max(i, 0), N)
    return i, abs(float(t[i]) - point)


def psi_values(mesh: Mesh, t: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.asarray(mesh.psi.eval(np.asarray(t, dtype=float)))

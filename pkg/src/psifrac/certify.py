r"""Existence, uniqueness and Ulam-Hyers constants for the Langevin problem.

All suprema over :math:`[a, T]` are maxima over mesh nodes.  The integrals
of constants come from the power rule
:math:`J^{\alpha}[1] = K^{\alpha} / \Gamma(\alpha + 1)`, and the
:math:`d_{ij}` together with their :math:`\delta`-order Caputo derivatives are
exact combinations of powers of :math:`K`, so no quadrature error enters the
certificates except through user-supplied weights :math:`\Phi`.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from psifrac.errors import AssumptionViolated, ConditionViolated, InvalidParameter
from psifrac.langevin import BoundaryMode, LangevinProblem, StructuralConstants, structural_constants
from psifrac.ops import GridFunction, riemann_liouville_at, riemann_liouville_left
from psifrac.psi import Mesh
from psifrac.specfn import MLParams, mittag_leffler

EXISTENCE_SAFETY = 1.01
TRUNCATION_RATIO = 1.0e-8
PHI_CHECK_RTOL = 1.0e-12


class TruncationWarning(UserWarning):
    """The last retained Gronwall shell is not negligible against the bound."""


class Variant(enum.Enum):
    UH = "uh"
    GeneralizedUH = "guh"
    UHR = "uhr"
    GeneralizedUHR = "guhr"

    @property
    def generalized(self) -> bool:
        return self in (Variant.GeneralizedUH, Variant.GeneralizedUHR)


@dataclass(frozen=True)
class Assumptions:
    """Constants and weights used by the certificates.

    ``L1``, ``L2``: Lipschitz constants of ``f`` in its ``u`` and ``d`` slots.
    ``L``: a uniform bound on ``|f|``.  ``Phi``: increasing weight ``t -> Phi(t)``
    with ``J^rho[Phi] <= l_Phi * Phi``.  ``epsilon``: perturbation size.
    """

    L1: float = 0.0
    L2: float = 0.0
    L: Optional[float] = None
    chi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    Phi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    l_Phi: Optional[float] = None
    epsilon: float = 0.0

    def __post_init__(self):
        for name in ("L1", "L2", "epsilon"):
            if not getattr(self, name) >= 0.0:
                raise InvalidParameter(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.L is not None and not self.L >= 0.0:
            raise InvalidParameter(f"L must be >= 0, got {self.L}")
        if self.l_Phi is not None and not self.l_Phi > 0.0:
            raise InvalidParameter(f"l_Phi must be > 0, got {self.l_Phi}")


def _j1(order: float, K) -> np.ndarray:
    return np.power(np.asarray(K, dtype=float), order) / math.gamma(order + 1.0)


@dataclass(frozen=True)
class _BoundaryIntegrals:
    # integrals of 1 read at eta and the terminal combination J_T - mu J_xi
    eta_s: float
    eta_rs: float
    term_s: float
    term_rs: float


def _boundary_integrals(p: LangevinProblem, mesh: Mesh) -> _BoundaryIntegrals:
    r, s, d, mu = p.rho, p.sigma, p.delta, p.mu
    Ke = float(mesh.K[mesh.eta_index])
    Kx = float(mesh.K[mesh.xi_index])
    KT = mesh.span
    return _BoundaryIntegrals(
        eta_s=float(_j1(s, Ke)),
        eta_rs=float(_j1(r + s, Ke)),
        term_s=float(_j1(s, KT) - mu * _j1(s + d, Kx)),
        term_rs=float(_j1(r + s, KT) - mu * _j1(r + s + d, Kx)),
    )


@dataclass(frozen=True)
class UniquenessCertificate:
    rho11: float
    rho12: float
    rho21: float
    rho22: float
    sigma11: float
    sigma12: float
    sigma13: float
    sigma21: float
    sigma22: float
    sigma23: float
    sigma_max: float
    holds: bool
    #: radius of an invariant ball, ``L0 max(sigma13, sigma23) / (1 - sigma_max)``
    radius: Optional[float] = None


@dataclass(frozen=True)
class ExistenceCertificate:
    Lambda11: float
    Lambda12: float
    Lambda21: float
    Lambda22: float
    product: float
    radius: Optional[float]
    holds: bool


def uniqueness_certificate(
    p: LangevinProblem,
    asm: Assumptions,
    mesh: Mesh,
    sc: Optional[StructuralConstants] = None,
) -> UniquenessCertificate:
    """Contraction constants of the fixed-point operator in the ``E``-norm."""
    if sc is None:
        sc = structural_constants(p, mesh, BoundaryMode.Closed)
    r, s, d, lam = p.rho, p.sigma, p.delta, p.lam
    bi = _boundary_integrals(p, mesh)
    K = mesh.K
    rho11 = lam * float(np.max(np.abs(sc.d21.values) * bi.eta_s + np.abs(sc.d22.values) * bi.term_s))
    rho12 = float(np.max(np.abs(sc.d11.values) * bi.eta_rs + np.abs(sc.d12.values) * bi.term_rs))
    rho21 = lam * float(np.max(np.abs(sc.cd21) * bi.eta_s + np.abs(sc.cd22) * bi.term_s))
    rho22 = float(np.max(np.abs(sc.cd11) * bi.eta_rs + np.abs(sc.cd12) * bi.term_rs))

    s11 = float(np.max(np.abs(lam * _j1(s, K) + rho11 + asm.L1 * (_j1(r + s, K) + rho12))))
    s13 = float(np.max(np.abs(_j1(r + s, K)))) + rho12
    s21 = float(np.max(np.abs(lam * _j1(s - d, K) + rho21 + asm.L1 * (_j1(r + s - d, K) + rho22))))
    s23 = float(np.max(np.abs(_j1(r + s - d, K)))) + rho22
    s12 = asm.L2 * s13
    s22 = asm.L2 * s23
    smax = max(s11, s12, s21, s22)
    holds = 0.0 < smax < 1.0
    radius = None
    if holds:
        zero = np.zeros_like(mesh.t)
        L0 = float(np.max(np.abs(np.asarray(p.f(mesh.t, zero, zero), dtype=float))))
        radius = L0 * max(s13, s23) / (1.0 - smax)
    return UniquenessCertificate(
        rho11, rho12, rho21, rho22, s11, s12, s13, s21, s22, s23, smax, holds, radius
    )


def existence_certificate(
    p: LangevinProblem,
    asm: Assumptions,
    mesh: Mesh,
    sc: Optional[StructuralConstants] = None,
) -> ExistenceCertificate:
    """Constants of the Krasnoselskii-type splitting, all evaluated at ``T``."""
    if sc is None:
        sc = structural_constants(p, mesh, BoundaryMode.Closed)
    r, s, d, lam = p.rho, p.sigma, p.delta, p.lam
    bi = _boundary_integrals(p, mesh)
    KT = mesh.span
    L11 = float(_j1(r + s, KT) + _j1(r + s - d, KT) + (sc.d11[-1] + sc.cd11[-1]) * bi.eta_rs)
    L12 = float((sc.d12[-1] + sc.cd12[-1]) * bi.term_rs)
    L21 = float(_j1(s, KT) + sc.d21[-1] * bi.eta_s + sc.d22[-1] * bi.term_s)
    L22 = float(_j1(s - d, KT) + sc.cd21[-1] * bi.eta_s + sc.cd22[-1] * bi.term_s)
    prod = lam * (L21 + L22)
    holds = 0.0 < prod < 1.0
    radius = None
    if holds and asm.L is not None:
        # signed constants can make the lower bound nonpositive; no radius is reported then
        lower = (L11 + L12) * asm.L / (1.0 - prod)
        if lower > 0.0:
            radius = EXISTENCE_SAFETY * lower
    return ExistenceCertificate(L11, L12, L21, L22, prod, radius, holds)


def kappa0(p: LangevinProblem, mesh: Mesh) -> float:
    r""":math:`(\psi(T) - \psi(a))^{1 - \delta} / \Gamma(2 - \delta)`."""
    return mesh.span ** (1.0 - p.delta) / math.gamma(2.0 - p.delta)


@dataclass(frozen=True, eq=False)
class StabilityReport:
    variant: Variant
    epsilon: float
    kappa0: float
    c_eps: float
    uh_bound: Optional[float]
    bound: GridFunction
    envelope: Optional[GridFunction] = None
    #: largest Phi violation ratio observed in the (A4) spot check
    phi_check: Optional[float] = None


def uh_bound(
    p: LangevinProblem,
    asm: Assumptions,
    mesh: Mesh,
    variant: Variant = Variant.UH,
    cert: Optional[UniquenessCertificate] = None,
) -> StabilityReport:
    r"""Ulam-Hyers bound :math:`\epsilon \varsigma_{13} / (1 - \varsigma_{11}
    - \varsigma_{12} \kappa_0)`; the generalized variant sets
    :math:`\epsilon = 1`."""
    if variant not in (Variant.UH, Variant.GeneralizedUH):
        raise InvalidParameter(f"uh_bound handles uh/guh, got {variant.value}")
    if cert is None:
        cert = uniqueness_certificate(p, asm, mesh)
    k0 = kappa0(p, mesh)
    denom = 1.0 - cert.sigma11 - cert.sigma12 * k0
    if not 0.0 < denom < 1.0:
        raise ConditionViolated(
            f"1 - sigma11 - sigma12*kappa0 = {denom!r} is not in (0, 1)"
        )
    eps = 1.0 if variant.generalized else asm.epsilon
    c_eps = eps * cert.sigma13
    value = c_eps / denom
    bound = GridFunction(mesh, np.full_like(mesh.t, value))
    return StabilityReport(variant, eps, k0, c_eps, value, bound)


@dataclass(frozen=True, eq=False)
class GronwallResult:
    bound: GridFunction
    last_shell: float
    shells: int


def _compositions(k: int, n: int):
    if n == 1:
        yield (k,)
        return
    for first in range(k + 1):
        for rest in _compositions(k - first, n - 1):
            yield (first,) + rest


def _multinomial(parts: Sequence[int]) -> float:
    out = math.factorial(sum(parts))
    for q in parts:
        out //= math.factorial(q)
    return float(out)


def gronwall_bound(
    v: GridFunction,
    terms: Sequence[tuple[GridFunction, float]],
    K_max: int = 60,
) -> GronwallResult:
    r"""Truncated majorant for
    :math:`u \le v + \sum_i g_i(t) \int \psi' (\psi(t) - \psi(\tau))^{\varrho_i - 1} u`.

    Shell ``k`` sums over all index tuples of length ``k``.  Tuples that use
    each term the same number of times share one integral, so the shell is
    evaluated over compositions ``(k_1, .., k_n)`` of ``k`` with multinomial
    weights:

    .. math::

        S_k = \sum_{k_1 + \dots + k_n = k} \binom{k}{k_1, \dots, k_n}
            \prod_i \big(g_i(t) \Gamma(\varrho_i)\big)^{k_i}
            J^{\sum_i k_i \varrho_i}[v](t).
    """
    if not 1 <= len(terms) <= 3:
        raise InvalidParameter(f"gronwall_bound takes 1 to 3 terms, got {len(terms)}")
    if K_max < 1:
        raise InvalidParameter(f"K_max must be >= 1, got {K_max}")
    mesh = v.mesh
    if np.any(v.values < 0.0):
        raise InvalidParameter("v must be nonnegative")
    for g, order in terms:
        if not order > 0.0:
            raise InvalidParameter(f"term orders must be > 0, got {order}")
        if np.any(g.values < 0.0) or np.any(np.diff(g.values) < 0.0):
            raise InvalidParameter("each g_i must be nonnegative and nondecreasing")
    scaled = [g.values * math.gamma(order) for g, order in terms]
    orders = [order for _, order in terms]
    cache: dict[float, np.ndarray] = {}

    def integral(order: float) -> np.ndarray:
        if order not in cache:
            cache[order] = riemann_liouville_left(order, v.values, mesh.h)
        return cache[order]

    total = v.values.copy()
    shell = np.zeros_like(total)
    for k in range(1, K_max + 1):
        shell = np.zeros_like(total)
        for parts in _compositions(k, len(terms)):
            coef = np.full_like(total, _multinomial(parts))
            for q, gs in zip(parts, scaled):
                if q:
                    coef = coef * gs**q
            shell += coef * integral(sum(q * o for q, o in zip(parts, orders)))
        total += shell
    last = float(np.max(np.abs(shell)))
    if last > TRUNCATION_RATIO * float(np.max(np.abs(total))):
        warnings.warn(
            f"last Gronwall shell {last:.3e} is not negligible at K_max={K_max}",
            TruncationWarning,
            stacklevel=2,
        )
    return GronwallResult(GridFunction(mesh, total), last, K_max)


def gronwall_exhaustive(
    v: GridFunction, terms: Sequence[tuple[GridFunction, float]], K_max: int
) -> np.ndarray:
    """Reference evaluation that enumerates all ``n^k`` index tuples."""
    mesh = v.mesh
    total = v.values.copy()
    for k in range(1, K_max + 1):
        for idx in product(range(len(terms)), repeat=k):
            coef = np.ones_like(total)
            for i in idx:
                g, order = terms[i]
                coef = coef * g.values * math.gamma(order)
            order = sum(terms[i][1] for i in idx)
            total += coef * riemann_liouville_left(order, v.values, mesh.h)
    return total


def _phi_values(asm: Assumptions, mesh: Mesh) -> np.ndarray:
    if asm.Phi is None or asm.l_Phi is None:
        raise InvalidParameter("Rassias bounds need Phi and l_Phi")
    vals = np.broadcast_to(np.asarray(asm.Phi(mesh.t), dtype=float), mesh.t.shape).copy()
    if np.any(vals < 0.0) or np.any(np.diff(vals) < 0.0):
        raise AssumptionViolated("Phi must be nonnegative and nondecreasing on the mesh")
    return vals


def phi_assumption_check(p: LangevinProblem, asm: Assumptions, mesh: Mesh) -> float:
    """Spot-check ``J^rho[Phi] <= l_Phi Phi`` at every node.

    Returns the largest ratio ``J^rho[Phi] / (l_Phi Phi)`` and raises
    :class:`AssumptionViolated` when it exceeds one beyond rounding.
    """
    phi = _phi_values(asm, mesh)
    lhs = riemann_liouville_left(p.rho, phi, mesh.h)
    rhs = asm.l_Phi * phi
    slack = PHI_CHECK_RTOL * max(1.0, float(np.max(np.abs(rhs))))
    bad = np.flatnonzero(lhs > rhs + slack)
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolated(
            f"J^rho[Phi] = {lhs[i]!r} exceeds l_Phi*Phi = {rhs[i]!r} at t = {mesh.t[i]!r}"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0.0, lhs / rhs, 0.0)
    return float(np.max(ratio))


def uhr_bound(
    p: LangevinProblem,
    asm: Assumptions,
    mesh: Mesh,
    variant: Variant = Variant.UHR,
    initial_gap: float = 0.0,
) -> StabilityReport:
    r"""Ulam-Hyers-Rassias bound :math:`\epsilon l_\Phi \Phi(t)` and the
    Mittag-Leffler envelope

    .. math::

        q(t) \big[E_{\varsigma}(\lambda \Gamma(\varsigma) K^{\varsigma})
            + E_{\varrho + \varsigma}(\lambda \Gamma(\varrho + \varsigma) K^{\varrho + \varsigma})
            + E_{\varrho + \varsigma + \delta}(\lambda \Gamma(\varrho + \varsigma + \delta)
              K^{\varrho + \varsigma + \delta})\big],

    where :math:`K = \psi(t) - \psi(a)` and :math:`q` is the forcing response
    to :math:`\epsilon \Phi` plus, when ``initial_gap`` is nonzero, the
    start-value term.
    """
    if variant not in (Variant.UHR, Variant.GeneralizedUHR):
        raise InvalidParameter(f"uhr_bound handles uhr/guhr, got {variant.value}")
    check = phi_assumption_check(p, asm, mesh)
    phi = _phi_values(asm, mesh)
    eps = 1.0 if variant.generalized else asm.epsilon
    bound = GridFunction(mesh, eps * asm.l_Phi * phi)

    r, s, d, mu, lam = p.rho, p.sigma, p.delta, p.mu, p.lam
    sc = structural_constants(p, mesh, BoundaryMode.Closed)
    h = mesh.h
    J = riemann_liouville_left(r + s, phi, h)
    at_eta = J[mesh.eta_index]
    term = J[-1] - mu * riemann_liouville_at(r + s + d, phi, h, mesh.xi_index)
    q = eps * np.abs(J + sc.d11.values * at_eta + sc.d12.values * term)
    K = mesh.K
    if initial_gap:
        z0 = (
            abs(initial_gap) / math.gamma(r + s)
            * np.power(K, r + s - d) / ((r + s - d) * math.gamma(1.0 - d))
        )
        q = q + asm.L2 * z0
    factor = np.zeros_like(K)
    for order in (s, r + s, r + s + d):
        params = MLParams(order)
        z = lam * math.gamma(order) * np.power(K, order)
        factor += np.array([mittag_leffler(params, float(zi)) for zi in z])
    envelope = GridFunction(mesh, q * factor)
    return StabilityReport(
        variant, eps, kappa0(p, mesh), eps * uniqueness_certificate(p, asm, mesh, sc).sigma13,
        None, bound, envelope, check,
    )


def certificate_rows(p: LangevinProblem, asm: Assumptions, mesh: Mesh) -> list[tuple[str, float]]:
    """Every computed constant as ``(name, value)`` in a fixed order."""
    sc = structural_constants(p, mesh, BoundaryMode.Closed)
    uc = uniqueness_certificate(p, asm, mesh, sc)
    ec = existence_certificate(p, asm, mesh, sc)
    rows = [
        ("sigma_11", sc.s11), ("sigma_12", sc.s12), ("sigma_21", sc.s21), ("sigma_22", sc.s22),
        ("Delta", sc.det), ("Delta_reduced", sc.det_reduced),
        ("d11_T", float(sc.d11[-1])), ("d12_T", float(sc.d12[-1])),
        ("d21_T", float(sc.d21[-1])), ("d22_T", float(sc.d22[-1])),
        ("cDd11_T", float(sc.cd11[-1])), ("cDd12_T", float(sc.cd12[-1])),
        ("rho_11", uc.rho11), ("rho_12", uc.rho12), ("rho_21", uc.rho21), ("rho_22", uc.rho22),
        ("varsigma_11", uc.sigma11), ("varsigma_12", uc.sigma12), ("varsigma_13", uc.sigma13),
        ("varsigma_21", uc.sigma21), ("varsigma_22", uc.sigma22), ("varsigma_23", uc.sigma23),
        ("varsigma_max", uc.sigma_max),
        ("Lambda_11", ec.Lambda11), ("Lambda_12", ec.Lambda12),
        ("Lambda_21", ec.Lambda21), ("Lambda_22", ec.Lambda22),
        ("lambda_Lambda", ec.product),
        ("kappa0", kappa0(p, mesh)),
    ]
    if uc.radius is not None:
        rows.append(("radius_uniqueness", uc.radius))
    if ec.radius is not None:
        rows.append(("radius_existence", ec.radius))
    return rows

r"""Fixed-point solver for the nonlocal fractional Langevin boundary problem

.. math::

    {}^C D^{\varrho}_{a+} \big({}^C D^{\varsigma}_{a+} + \lambda\big)[u]
        = f\big(t, u(t), {}^C D^{\delta}_{a+}[u](t)\big),
    \qquad
    u(a) = 0, \quad u(\eta) = 0, \quad u(T) = \mu J^{\delta}_{a+}[u](\xi),

with :math:`1 < \varrho \le 2` and :math:`0 < \delta < \varsigma \le 1`.  The
problem is recast as :math:`u = \Psi u` with

.. math::

    \Psi u = -\lambda J^{\varsigma}[u] + J^{\varrho + \varsigma}[f_u]
        + d_{11} A_f + d_{12} B_f + \lambda d_{21} A_u - \lambda d_{22} B_u,

where :math:`A` collects integrals read at :math:`\eta`, :math:`B` the
terminal combination :math:`J_T - \mu J^{\delta}_{\xi} J`, and :math:`d_{ij}`
come from the :math:`2 \times 2` boundary system.  The iteration also carries
:math:`{}^C D^{\delta}[u]` as its own channel.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from psifrac._parallel import pmap
from psifrac.errors import (
    DegenerateProblem,
    InvalidParameter,
    NoConvergence,
    NonFinite,
)
from psifrac.ops import (
    GridFunction,
    caputo_left,
    frac_integral_at,
    riemann_liouville_at,
    riemann_liouville_left,
)
from psifrac.psi import Domain, Mesh, PsiFunction, build_mesh

DEGENERACY_TOL = 1.0e-12
DIVERGENCE_STREAK = 3
FALLBACK_OMEGA = 0.5

Rhs = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class NegativeRhsWarning(UserWarning):
    """The right-hand side took negative values (the theory assumes f >= 0)."""


class BoundaryMode(enum.Enum):
    #: the terminal functional is the discrete J^delta at xi of each
    #: contribution, so every iterate meets the boundary conditions to rounding
    Discrete = "discrete"
    #: the terminal functional uses the composed closed-form orders verbatim
    Closed = "closed"


@dataclass(frozen=True)
class LangevinProblem:
    """Orders, coefficients, domain, generator and right-hand side.

    ``f(t, u, d)`` is called with node arrays; ``d`` carries the
    ``delta``-order Caputo derivative of ``u``.
    """

    rho: float
    sigma: float
    delta: float
    lam: float
    mu: float
    domain: Domain
    psi: PsiFunction
    f: Rhs = field(compare=False)

    def __post_init__(self):
        if not 1.0 < self.rho <= 2.0:
            raise InvalidParameter(f"rho must lie in (1, 2], got {self.rho}")
        if not 0.0 < self.sigma <= 1.0:
            raise InvalidParameter(f"sigma must lie in (0, 1], got {self.sigma}")
        if not 0.0 < self.delta < self.sigma:
            raise InvalidParameter(
                f"delta must lie in (0, sigma), got delta={self.delta}, sigma={self.sigma}"
            )
        if not self.lam >= 0.0:
            raise InvalidParameter(f"lambda must be >= 0, got {self.lam}")
        if not self.mu >= 0.0:
            raise InvalidParameter(f"mu must be >= 0, got {self.mu}")
        if not self.domain.has_interior_points:
            raise InvalidParameter("the boundary problem needs eta and xi")

    def with_rhs(self, f: Rhs) -> "LangevinProblem":
        return replace(self, f=f)


@dataclass(frozen=True)
class SolverConfig:
    n: int = 512
    tol: float = 1.0e-10
    max_iter: int = 200
    omega: float = 1.0
    boundary: BoundaryMode = BoundaryMode.Discrete

    def __post_init__(self):
        if self.n < 4:
            raise InvalidParameter(f"n must be >= 4, got {self.n}")
        if not self.tol > 0.0:
            raise InvalidParameter(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidParameter(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0.0 < self.omega <= 1.0:
            raise InvalidParameter(f"omega must lie in (0, 1], got {self.omega}")


@dataclass(frozen=True, eq=False)
class StructuralConstants:
    r"""Boundary system entries and the functions :math:`d_{ij}(t)`.

    ``cd11`` .. ``cd22`` hold :math:`{}^C D^{\delta}[d_{ij}]`, exact because
    :math:`d_{ij}` is a combination of :math:`K^\varsigma` and
    :math:`K^{\varsigma + 1}`.  ``det_reduced`` is the determinant divided by
    ``s11``, the quantity usually written out in closed form.
    """

    s11: float
    s12: float
    s21: float
    s22: float
    det: float
    det_reduced: float
    d11: GridFunction
    d12: GridFunction
    d21: GridFunction
    d22: GridFunction
    cd11: np.ndarray
    cd12: np.ndarray
    cd21: np.ndarray
    cd22: np.ndarray
    mode: BoundaryMode


def _phi(mesh: Mesh, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    K = mesh.K
    return (
        np.power(K, sigma) / math.gamma(sigma + 1.0),
        np.power(K, sigma + 1.0) / math.gamma(sigma + 2.0),
    )


def reduced_determinant(p: LangevinProblem, mesh: Mesh) -> float:
    """Explicit closed form of ``det / s11`` on the snapped domain."""
    s, d, mu = p.sigma, p.delta, p.mu
    KT = mesh.span
    Ke = float(mesh.K[mesh.eta_index])
    Kx = float(mesh.K[mesh.xi_index])
    first = KT**s * (KT - Ke) / math.gamma(s + 2.0)
    second = (
        mu * Kx ** (s + d) * ((s + 1.0) * (Kx - Ke) - d * Ke)
        / (math.gamma(s + d + 2.0) * (s + 1.0))
    )
    return first - second


def structural_constants(
    p: LangevinProblem, mesh: Mesh, mode: BoundaryMode = BoundaryMode.Closed
) -> StructuralConstants:
    """Assemble the boundary system and ``d_ij`` on ``mesh``.

    ``Closed`` evaluates every entry from the power-law closed forms.
    ``Discrete`` replaces the ``mu``-terms of the second row by the discrete
    ``J^delta`` at ``xi`` so the solver's boundary functional is met exactly.
    """
    s, d, mu = p.sigma, p.delta, p.mu
    ie, ix = mesh.eta_index, mesh.xi_index
    phi1, phi2 = _phi(mesh, s)
    s11 = float(phi1[ie])
    s12 = float(phi2[ie])
    if mode is BoundaryMode.Closed:
        Kx = float(mesh.K[ix])
        s21 = float(phi1[-1]) - mu * Kx ** (s + d) / math.gamma(s + d + 1.0)
        s22 = float(phi2[-1]) - mu * Kx ** (s + d + 1.0) / math.gamma(s + d + 2.0)
    else:
        s21 = float(phi1[-1]) - mu * riemann_liouville_at(d, phi1, mesh.h, ix)
        s22 = float(phi2[-1]) - mu * riemann_liouville_at(d, phi2, mesh.h, ix)
    det = s11 * s22 - s12 * s21
    if abs(det) <= DEGENERACY_TOL * max(abs(s11 * s22), abs(s12 * s21)):
        raise DegenerateProblem(f"boundary determinant {det!r} vanishes relative to its terms")

    d11 = -(s22 * phi1 - s21 * phi2) / det
    d12 = (s12 * phi1 - s11 * phi2) / det
    K = mesh.K
    c1 = np.power(K, s - d) / math.gamma(s - d + 1.0)
    c2 = np.power(K, s + 1.0 - d) / math.gamma(s + 2.0 - d)
    cd11 = -(s22 * c1 - s21 * c2) / det
    cd12 = (s12 * c1 - s11 * c2) / det
    for arr in (cd11, cd12):
        arr.setflags(write=False)
    neg = -cd11
    neg.setflags(write=False)
    return StructuralConstants(
        s11, s12, s21, s22, det, reduced_determinant(p, mesh),
        GridFunction(mesh, d11), GridFunction(mesh, d12),
        GridFunction(mesh, -d11), GridFunction(mesh, d12),
        cd11, cd12, neg, cd12, mode,
    )


def _evaluate_rhs(p: LangevinProblem, mesh: Mesh, u: np.ndarray, du: np.ndarray) -> np.ndarray:
    fu = np.broadcast_to(np.asarray(p.f(mesh.t, u, du), dtype=float), mesh.t.shape)
    if not np.all(np.isfinite(fu)):
        raise NonFinite("right-hand side returned a non-finite value")
    return fu


def _terminal(order: float, full: np.ndarray, values: np.ndarray, p, mesh, sc) -> float:
    # J_T[order] - mu J_xi[order + delta], realized per the boundary mode
    ix = mesh.xi_index
    if sc.mode is BoundaryMode.Discrete:
        tail = riemann_liouville_at(p.delta, full, mesh.h, ix)
    else:
        tail = riemann_liouville_at(order + p.delta, values, mesh.h, ix)
    return float(full[-1]) - p.mu * tail


def apply_Psi(
    p: LangevinProblem, sc: StructuralConstants, u: GridFunction, du: GridFunction
) -> tuple[GridFunction, GridFunction]:
    """One application of the fixed-point operator to the pair ``(u, du)``."""
    mesh = u.mesh
    lam, s, r, d = p.lam, p.sigma, p.rho, p.delta
    uv, dv = u.values, du.values
    fu = _evaluate_rhs(p, mesh, uv, dv)
    h = mesh.h
    Js_u, Jrs_f, Jsd_u, Jrsd_f = pmap(
        [
            lambda: riemann_liouville_left(s, uv, h),
            lambda: riemann_liouville_left(r + s, fu, h),
            lambda: riemann_liouville_left(s - d, uv, h),
            lambda: riemann_liouville_left(r + s - d, fu, h),
        ]
    )
    ie = mesh.eta_index
    A_f = float(Jrs_f[ie])
    A_u = float(Js_u[ie])
    B_f = _terminal(r + s, Jrs_f, fu, p, mesh, sc)
    B_u = _terminal(s, Js_u, uv, p, mesh, sc)

    phi = (
        sc.d11.values * A_f + sc.d12.values * B_f
        + lam * sc.d21.values * A_u - lam * sc.d22.values * B_u
    )
    dphi = sc.cd11 * A_f + sc.cd12 * B_f + lam * sc.cd21 * A_u - lam * sc.cd22 * B_u
    new_u = -lam * Js_u + Jrs_f + phi
    new_du = -lam * Jsd_u + Jrsd_f + dphi
    return GridFunction(mesh, new_u), GridFunction(mesh, new_du)


@dataclass(frozen=True)
class ResidualReport:
    interior: float
    at_a: float
    at_eta: float
    at_T: float

    @property
    def boundary(self) -> float:
        return max(self.at_a, self.at_eta, self.at_T)


@dataclass(frozen=True, eq=False)
class SolutionBundle:
    mesh: Mesh
    u: GridFunction
    du: GridFunction
    iterations: int
    update_norm: float
    trace: tuple[float, ...]
    residual: ResidualReport
    converged: bool
    omega: float


def boundary_residuals(p: LangevinProblem, u: GridFunction) -> tuple[float, float, float]:
    mesh = u.mesh
    v = u.values
    term = frac_integral_at(p.delta, u, mesh.xi_index)
    return abs(float(v[0])), abs(float(v[mesh.eta_index])), abs(float(v[-1]) - p.mu * term)


def residual_profile(p: LangevinProblem, u: GridFunction, skip: int = 2) -> np.ndarray:
    r"""Nodewise defect of the differential form, computed independently of
    the solver: :math:`v = {}^C D^\varsigma u + \lambda u`, then
    :math:`|{}^C D^\varrho v - f(t, u, {}^C D^\delta u)|`.

    The ``skip`` nodes at each end, where the difference stencils are
    one-sided, are set to NaN.
    """
    mesh = u.mesh
    d_u = caputo_left(p.delta, u).values
    v = GridFunction(mesh, caputo_left(p.sigma, u).values + p.lam * u.values)
    lhs = caputo_left(p.rho, v).values
    fu = _evaluate_rhs(p, mesh, u.values, d_u)
    out = np.abs(lhs - fu)
    out[:skip] = np.nan
    out[mesh.n + 1 - skip :] = np.nan
    return out


def residual(p: LangevinProblem, u: GridFunction, skip: int = 2) -> ResidualReport:
    """Maximum interior defect plus the three boundary residuals."""
    interior = float(np.nanmax(residual_profile(p, u, skip)))
    return ResidualReport(interior, *boundary_residuals(p, u))


def solve_picard(
    p: LangevinProblem,
    cfg: SolverConfig = SolverConfig(),
    initial: Optional[tuple[np.ndarray, np.ndarray]] = None,
    mesh: Optional[Mesh] = None,
) -> SolutionBundle:
    """Relaxed Picard iteration on ``(u, du)`` from ``initial`` (zero by default).

    Stops when ``max(|u_new - u|, |du_new - du|)`` drops below ``cfg.tol``.
    If that norm grows for three sweeps in a row the relaxation falls back
    once to ``0.5``.
    """
    if mesh is None:
        mesh = build_mesh(p.psi, p.domain, cfg.n)
    sc = structural_constants(p, mesh, cfg.boundary)
    if initial is None:
        u = GridFunction.zeros(mesh)
        du = GridFunction.zeros(mesh)
    else:
        u = GridFunction(mesh, initial[0])
        du = GridFunction(mesh, initial[1])
    omega = cfg.omega
    trace: list[float] = []
    streak = 0
    converged = False
    for _ in range(cfg.max_iter):
        pu, pdu = apply_Psi(p, sc, u, du)
        step_u = pu.values - u.values
        step_d = pdu.values - du.values
        norm = float(max(np.max(np.abs(step_u)), np.max(np.abs(step_d))))
        if omega == 1.0:
            u, du = pu, pdu
        else:
            u = GridFunction(mesh, u.values + omega * step_u)
            du = GridFunction(mesh, du.values + omega * step_d)
        trace.append(norm)
        if norm < cfg.tol:
            converged = True
            break
        streak = streak + 1 if len(trace) > 1 and norm > trace[-2] else 0
        if streak >= DIVERGENCE_STREAK and omega > FALLBACK_OMEGA:
            omega = FALLBACK_OMEGA
            streak = 0

    fu = _evaluate_rhs(p, mesh, u.values, du.values)
    if np.any(fu < 0.0):
        warnings.warn("right-hand side is negative at some nodes", NegativeRhsWarning, stacklevel=2)
    bundle = SolutionBundle(
        mesh, u, du, len(trace), trace[-1], tuple(trace), residual(p, u), converged, omega
    )
    if not converged:
        raise NoConvergence(
            f"no convergence after {cfg.max_iter} iterations (last update {trace[-1]:.3e})",
            bundle,
        )
    return bundle


def solve_linear(
    F: GridFunction, p: LangevinProblem, cfg: SolverConfig = SolverConfig()
) -> SolutionBundle:
    """Solve the problem with a forcing ``F(t)`` that ignores ``u`` and ``du``.

    For ``lambda = 0`` the operator no longer depends on ``u`` and a single
    application is the solution; otherwise this runs the Picard iteration.
    """
    mesh = F.mesh
    values = F.values
    q = p.with_rhs(lambda t, u, d: values)
    if p.lam > 0.0:
        return solve_picard(q, replace(cfg, n=mesh.n), mesh=mesh)
    sc = structural_constants(q, mesh, cfg.boundary)
    zero = GridFunction.zeros(mesh)
    u, du = apply_Psi(q, sc, zero, zero)
    norm = float(max(u.norm(), du.norm()))
    return SolutionBundle(mesh, u, du, 1, norm, (norm,), residual(q, u), True, 1.0)


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    r"""Exact solution :math:`u^* = \sum_j p_j K^{\kappa + j}` with its
    Caputo derivatives available in closed form."""

    kappa: float
    coeffs: tuple[float, ...]

    def _terms(self):
        return [(c, self.kappa + j) for j, c in enumerate(self.coeffs) if c != 0.0]

    def u(self, K) -> np.ndarray:
        K = np.asarray(K, dtype=float)
        return sum(c * np.power(K, b) for c, b in self._terms())

    def caputo(self, order: float, K) -> np.ndarray:
        K = np.asarray(K, dtype=float)
        return sum(
            c * math.gamma(b + 1.0) / math.gamma(b + 1.0 - order) * np.power(K, b - order)
            for c, b in self._terms()
        )

    def integral(self, order: float, K) -> np.ndarray:
        K = np.asarray(K, dtype=float)
        return sum(
            c * math.gamma(b + 1.0) / math.gamma(b + 1.0 + order) * np.power(K, b + order)
            for c, b in self._terms()
        )

    def forcing(self, rho: float, sigma: float, lam: float, K) -> np.ndarray:
        r""":math:`{}^C D^\varrho({}^C D^\varsigma + \lambda) u^*` term by term."""
        K = np.asarray(K, dtype=float)
        out = np.zeros_like(K)
        for c, b in self._terms():
            g = math.gamma(b + 1.0)
            out += c * g / math.gamma(b + 1.0 - sigma - rho) * np.power(K, b - sigma - rho)
            out += lam * c * g / math.gamma(b + 1.0 - rho) * np.power(K, b - rho)
        return out


def manufactured_solution(
    mesh: Mesh,
    sigma: float,
    delta: float,
    mu: float,
    kappa: float = 4.0,
    coeffs: Sequence[float] = (1.0,),
) -> ManufacturedSolution:
    r"""Build :math:`u^* = K^\kappa (K - K_\eta) Q(K)` meeting all three
    boundary conditions on the snapped nodes of ``mesh``.

    ``coeffs`` are the leading coefficients of :math:`Q`; one more
    coefficient is appended and solved from the terminal condition.
    """
    if not kappa > sigma + 1.0:
        raise InvalidParameter(f"kappa must exceed sigma + 1, got {kappa}")
    q = [float(c) for c in coeffs]
    if not q:
        raise InvalidParameter("need at least one polynomial coefficient")
    Ke = float(mesh.K[mesh.eta_index])
    Kx = float(mesh.K[mesh.xi_index])
    KT = mesh.span

    def g(b):
        return KT**b - mu * math.gamma(b + 1.0) / math.gamma(b + 1.0 + delta) * Kx ** (b + delta)

    m = len(q)
    w = [g(kappa + i + 1.0) - Ke * g(kappa + i) for i in range(m + 1)]
    if w[m] == 0.0:
        raise DegenerateProblem("terminal condition does not determine the last coefficient")
    q.append(-sum(qi * wi for qi, wi in zip(q, w)) / w[m])
    pcoef = [0.0] * (m + 2)
    for i, qi in enumerate(q):
        pcoef[i + 1] += qi
        pcoef[i] -= Ke * qi
    return ManufacturedSolution(kappa, tuple(pcoef))


def manufactured_problem(
    psi: PsiFunction,
    domain: Domain,
    rho: float,
    sigma: float,
    delta: float,
    lam: float,
    mu: float,
    n: int,
    kappa: float = 4.0,
    coeffs: Sequence[float] = (1.0,),
    lipschitz: tuple[float, float] = (0.0, 0.0),
) -> tuple[LangevinProblem, ManufacturedSolution, Mesh]:
    r"""A problem whose exact solution is a known polynomial in :math:`K`.

    The right-hand side is
    :math:`f(t, u, d) = G(t) + \ell_1 \sin u + \ell_2 \sin d` with :math:`G`
    chosen so that :math:`u^*` solves the problem; ``lipschitz`` sets
    :math:`(\ell_1, \ell_2)`.  ``eta`` and ``xi`` are snapped to the ``n``
    mesh first, and the returned problem uses the snapped domain.
    """
    mesh = build_mesh(psi, domain, n)
    snapped = mesh.domain()
    exact = manufactured_solution(mesh, sigma, delta, mu, kappa, coeffs)
    l1, l2 = lipschitz
    s0 = float(psi.eval(domain.a))

    def f(t, u, d):
        K = np.maximum(np.asarray(psi.eval(t), dtype=float) - s0, 0.0)
        G = (
            exact.forcing(rho, sigma, lam, K)
            - l1 * np.sin(exact.u(K))
            - l2 * np.sin(exact.caputo(delta, K))
        )
        return G + l1 * np.sin(u) + l2 * np.sin(d)

    p = LangevinProblem(rho, sigma, delta, lam, mu, snapped, psi, f)
    return p, exact, build_mesh(psi, snapped, n)

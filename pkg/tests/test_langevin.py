from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from psifrac.errors import DegenerateProblem, InvalidParameter, NoConvergence, NonFinite
from psifrac.langevin import (
    BoundaryMode,
    LangevinProblem,
    NegativeRhsWarning,
    SolverConfig,
    apply_Psi,
    boundary_residuals,
    manufactured_problem,
    manufactured_solution,
    residual,
    solve_linear,
    solve_picard,
    structural_constants,
)
from psifrac.ops import GridFunction, caputo_left, frac_integral_at
from psifrac.psi import Domain, build_mesh, make_psi

IDENT = make_psi("identity")
CONCRETE = dict(rho=1.5, sigma=0.9, delta=0.3, lam=0.05, mu=0.1)
CONCRETE_DOMAIN = Domain(0.0, 0.5, 0.25, 0.375)


def zero_rhs(t, u, d):
    return np.zeros_like(t)


def problem(f=zero_rhs, domain=CONCRETE_DOMAIN, psi=IDENT, **kw):
    args = dict(CONCRETE)
    args.update(kw)
    return LangevinProblem(args["rho"], args["sigma"], args["delta"], args["lam"], args["mu"], domain, psi, f)


def manufactured(n=512, psi=IDENT, domain=CONCRETE_DOMAIN, lipschitz=(0.05, 0.05), **kw):
    args = dict(CONCRETE)
    args.update(kw)
    return manufactured_problem(
        psi, domain, args["rho"], args["sigma"], args["delta"], args["lam"], args["mu"], n,
        lipschitz=lipschitz,
    )


# --- problem validation ---------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [dict(rho=1.0), dict(rho=2.1), dict(sigma=0.0), dict(sigma=1.2), dict(delta=0.95), dict(delta=0.0), dict(lam=-0.1), dict(mu=-1.0)],
)
def test_problem_ranges(kw):
    with pytest.raises(InvalidParameter):
        problem(**kw)


def test_problem_needs_interior_points():
    with pytest.raises(InvalidParameter):
        problem(domain=Domain(0.0, 1.0))


# --- structural constants -------------------------------------------------


def test_sigma11_equals_eta_for_unit_orders():
    p = problem(sigma=1.0, delta=0.5, domain=Domain(0.0, 1.0, 0.25, 0.5))
    sc = structural_constants(p, build_mesh(IDENT, p.domain, 64))
    assert sc.s11 == pytest.approx(0.25, rel=1e-15)


@pytest.mark.parametrize("mode", list(BoundaryMode))
def test_d21_is_minus_d11(mode):
    p = problem()
    sc = structural_constants(p, build_mesh(IDENT, p.domain, 128), mode)
    assert np.all(sc.d21.values + sc.d11.values == 0.0)
    assert np.array_equal(sc.d22.values, sc.d12.values)


def test_sigma21_without_mu():
    p = problem(mu=0.0)
    mesh = build_mesh(IDENT, p.domain, 128)
    sc = structural_constants(p, mesh)
    assert sc.s21 == pytest.approx(0.5**0.9 / math.gamma(1.9), rel=1e-14)


@pytest.mark.parametrize("kind,dom", [("identity", CONCRETE_DOMAIN), ("log", Domain(1.0, math.e, 1.5, 2.0))])
def test_determinant_matches_reduced_closed_form(kind, dom):
    p = problem(psi=make_psi(kind), domain=dom)
    mesh = build_mesh(p.psi, dom, 256)
    sc = structural_constants(p, mesh)
    assert sc.det / sc.s11 == pytest.approx(sc.det_reduced, rel=1e-10)


def test_discrete_and_closed_modes_agree_to_quadrature_error():
    p = problem()
    mesh = build_mesh(IDENT, p.domain, 1024)
    a = structural_constants(p, mesh, BoundaryMode.Closed)
    b = structural_constants(p, mesh, BoundaryMode.Discrete)
    assert abs(a.s21 - b.s21) <= 1e-6 and abs(a.s22 - b.s22) <= 1e-6


def test_boundary_weight_derivatives_match_numerical_caputo():
    """The analytic delta-derivatives of d_ij agree with ``caputo_left`` under
    refinement; the numerical route converges only at about half order."""
    errs = []
    for n in (128, 256, 512, 1024):
        p = problem(rho=1.5, sigma=0.8, delta=0.3, lam=0.5, mu=0.5)
        mesh = build_mesh(p.psi, p.domain, n)
        sc = structural_constants(p, mesh, BoundaryMode.Closed)
        errs.append(max(
            float(np.max(np.abs(caputo_left(p.delta, getattr(sc, f"d{k}")).values - getattr(sc, f"cd{k}"))))
            for k in ("11", "12", "21", "22")
        ))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < 1e-2
    assert np.log2(errs[0] / errs[-1]) / 3 >= 0.4


def _degenerate_mu(p, mesh):
    s, d = p.sigma, p.delta
    Ke, Kx, KT = mesh.K[mesh.eta_index], mesh.K[mesh.xi_index], mesh.span
    s11, s12 = Ke**s / math.gamma(s + 1), Ke ** (s + 1) / math.gamma(s + 2)
    A1, A2 = Kx ** (s + d) / math.gamma(s + d + 1), Kx ** (s + d + 1) / math.gamma(s + d + 2)
    P1, P2 = KT**s / math.gamma(s + 1), KT ** (s + 1) / math.gamma(s + 2)
    return (s11 * P2 - s12 * P1) / (s11 * A2 - s12 * A1)


def test_degenerate_system_detected():
    p = problem()
    mesh = build_mesh(IDENT, p.domain, 64)
    q = problem(mu=_degenerate_mu(p, mesh))
    with pytest.raises(DegenerateProblem):
        structural_constants(q, mesh, BoundaryMode.Closed)


# --- fixed-point operator -------------------------------------------------


def test_apply_psi_zero_is_fixed():
    p = problem()
    mesh = build_mesh(IDENT, p.domain, 64)
    sc = structural_constants(p, mesh)
    z = GridFunction.zeros(mesh)
    u, du = apply_Psi(p, sc, z, z)
    assert not np.any(u.values) and not np.any(du.values)


def test_apply_psi_drops_u_without_lambda_and_forcing():
    p = problem(lam=0.0)
    mesh = build_mesh(IDENT, p.domain, 64)
    sc = structural_constants(p, mesh)
    rng = np.random.default_rng(3)
    u, du = apply_Psi(p, sc, GridFunction(mesh, rng.normal(size=65)), GridFunction(mesh, rng.normal(size=65)))
    assert not np.any(u.values) and not np.any(du.values)


def test_apply_psi_rejects_non_finite_rhs():
    p = problem(f=lambda t, u, d: np.full_like(t, np.nan))
    mesh = build_mesh(IDENT, p.domain, 32)
    sc = structural_constants(p, mesh)
    z = GridFunction.zeros(mesh)
    with pytest.raises(NonFinite):
        apply_Psi(p, sc, z, z)


def test_manufactured_is_near_fixed_point_under_refinement():
    errs = []
    for n in (128, 256, 512, 1024):
        p, exact, mesh = manufactured(n)
        sc = structural_constants(p, mesh, BoundaryMode.Discrete)
        u = GridFunction.from_K(mesh, exact.u)
        du = GridFunction.from_K(mesh, lambda K: exact.caputo(p.delta, K))
        pu, pdu = apply_Psi(p, sc, u, du)
        errs.append(max(np.max(np.abs(pu.values - u.values)), np.max(np.abs(pdu.values - du.values))))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-6


# --- manufactured solution ------------------------------------------------


@pytest.mark.parametrize("coeffs", [(1.0,), (1.0, -2.0), (0.5, 0.0, 3.0)])
def test_manufactured_meets_boundary_conditions(coeffs):
    mesh = build_mesh(IDENT, CONCRETE_DOMAIN, 128)
    ex = manufactured_solution(mesh, 0.9, 0.3, 0.1, 4.0, coeffs)
    Ke, Kx, KT = mesh.K[mesh.eta_index], mesh.K[mesh.xi_index], mesh.span
    assert ex.u(0.0) == 0.0
    assert abs(ex.u(Ke)) <= 1e-16
    assert ex.u(KT) == pytest.approx(0.1 * ex.integral(0.3, Kx), abs=1e-16)


def test_manufactured_rejects_low_kappa():
    mesh = build_mesh(IDENT, CONCRETE_DOMAIN, 32)
    with pytest.raises(InvalidParameter):
        manufactured_solution(mesh, 0.9, 0.3, 0.1, kappa=1.5)


# --- Picard solver ----------------------------------------------------------


def test_zero_rhs_converges_in_one_iteration():
    b = solve_picard(problem(), SolverConfig(n=64))
    assert b.iterations == 1 and b.converged
    assert not np.any(b.u.values)
    assert b.trace == (0.0,)


@pytest.mark.filterwarnings("ignore::psifrac.langevin.NegativeRhsWarning")
def test_no_convergence_carries_bundle():
    p, _, mesh = manufactured(128)
    with pytest.raises(NoConvergence) as info:
        solve_picard(p, SolverConfig(n=128, max_iter=2), mesh=mesh)
    assert info.value.bundle is not None and len(info.value.bundle.trace) == 2


@pytest.fixture(scope="module")
def concrete_solution():
    p, exact, mesh = manufactured(512)
    cfg = SolverConfig(n=512)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeRhsWarning)
        b = solve_picard(p, cfg, mesh=mesh)
    return p, exact, mesh, cfg, b


def test_solution_matches_manufactured(concrete_solution):
    p, exact, mesh, cfg, b = concrete_solution
    assert np.max(np.abs(b.u.values - exact.u(mesh.K))) <= 1e-6
    assert b.u.values[0] == 0.0


def test_fixed_point_consistency(concrete_solution):
    p, _, mesh, cfg, b = concrete_solution
    sc = structural_constants(p, mesh, cfg.boundary)
    pu, pdu = apply_Psi(p, sc, b.u, b.du)
    gap = max(np.max(np.abs(pu.values - b.u.values)), np.max(np.abs(pdu.values - b.du.values)))
    assert gap <= 2 * cfg.tol


def test_boundary_satisfaction(concrete_solution):
    p, _, mesh, cfg, b = concrete_solution
    at_a, at_eta, at_T = boundary_residuals(p, b.u)
    assert at_a == 0.0 and at_eta <= 10 * cfg.tol and at_T <= 10 * cfg.tol
    assert b.residual.boundary == max(at_a, at_eta, at_T)
    assert at_T == abs(b.u.values[-1] - p.mu * frac_integral_at(p.delta, b.u, mesh.xi_index))


def test_distinct_initial_guesses_agree(concrete_solution):
    p, _, mesh, cfg, b = concrete_solution
    one = (np.ones(mesh.n + 1), np.ones(mesh.n + 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeRhsWarning)
        c = solve_picard(p, cfg, initial=one, mesh=mesh)
    assert np.max(np.abs(c.u.values - b.u.values)) <= 10 * cfg.tol


def test_solver_is_deterministic(concrete_solution):
    p, _, mesh, cfg, b = concrete_solution
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeRhsWarning)
        c = solve_picard(p, cfg, mesh=mesh)
    assert np.array_equal(c.u.values, b.u.values) and np.array_equal(c.du.values, b.du.values)
    assert c.trace == b.trace


def test_negative_rhs_warns():
    p = problem(f=lambda t, u, d: -np.ones_like(t))
    with pytest.warns(NegativeRhsWarning):
        solve_picard(p, SolverConfig(n=64))


def test_relaxation_still_converges():
    p, exact, mesh = manufactured(256)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeRhsWarning)
        b = solve_picard(p, SolverConfig(n=256, omega=0.6), mesh=mesh)
    assert b.converged and np.max(np.abs(b.u.values - exact.u(mesh.K))) <= 1e-5


# --- residual oracle --------------------------------------------------------


def test_residual_of_zero():
    p = problem()
    r = residual(p, GridFunction.zeros(build_mesh(IDENT, p.domain, 64)))
    assert (r.interior, r.at_a, r.at_eta, r.at_T) == (0.0, 0.0, 0.0, 0.0)


def test_manufactured_residual_converges():
    ns = [128, 256, 512, 1024]
    errs = []
    for n in ns:
        p, exact, mesh = manufactured(n)
        errs.append(residual(p, GridFunction.from_K(mesh, exact.u)).interior)
    order = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert order >= 1.0


@pytest.mark.xfail(strict=True, reason="the oracle amplifies the O(h^2) K^sigma component of the discrete solution; see the decisions ledger")
def test_solver_residual_within_ten_times_oracle(concrete_solution):
    p, exact, mesh, cfg, b = concrete_solution
    ref = residual(p, GridFunction.from_K(mesh, exact.u)).interior
    assert b.residual.interior <= 10 * ref


# --- linear problems --------------------------------------------------------


def test_linear_zero_forcing():
    p = problem(lam=0.0)
    mesh = build_mesh(IDENT, p.domain, 64)
    b = solve_linear(GridFunction.zeros(mesh), p)
    assert not np.any(b.u.values)


def test_linear_unit_forcing_closed_form_and_picard():
    p = problem(lam=0.0)
    mesh = build_mesh(IDENT, p.domain, 512)
    cfg = SolverConfig(n=512, boundary=BoundaryMode.Closed)
    one = GridFunction.from_K(mesh, np.ones_like)
    b = solve_linear(one, p, cfg)
    r, s, d, mu = p.rho, p.sigma, p.delta, p.mu
    K, Ke, Kx, KT = mesh.K, mesh.K[mesh.eta_index], mesh.K[mesh.xi_index], mesh.span
    sc = structural_constants(p, mesh, BoundaryMode.Closed)
    A = Ke ** (r + s) / math.gamma(r + s + 1)
    B = KT ** (r + s) / math.gamma(r + s + 1) - mu * Kx ** (r + s + d) / math.gamma(r + s + d + 1)
    ref = K ** (r + s) / math.gamma(r + s + 1) + sc.d11.values * A + sc.d12.values * B
    assert np.max(np.abs(b.u.values - ref)) <= 1e-13
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeRhsWarning)
        pic = solve_picard(p.with_rhs(lambda t, u, d: np.ones_like(t)), cfg, mesh=mesh)
    assert np.max(np.abs(pic.u.values - b.u.values)) <= 1e-8


def test_linear_two_point_condition():
    p = problem(lam=0.0, mu=0.0)
    mesh = build_mesh(IDENT, p.domain, 256)
    b = solve_linear(GridFunction.from_K(mesh, lambda K: 1.0 + K), p)
    assert b.u.values[0] == 0.0
    assert abs(b.u.values[mesh.eta_index]) <= 1e-14 and abs(b.u.values[-1]) <= 1e-14


def test_linear_with_lambda_uses_picard():
    p = problem()
    mesh = build_mesh(IDENT, p.domain, 128)
    b = solve_linear(GridFunction.from_K(mesh, np.ones_like), p)
    assert b.iterations > 1 and b.converged


# --- special cases of the generator -----------------------------------------


def test_identity_equals_unit_power_law():
    pa, _, ma = manufactured(256)
    pb, _, mb = manufactured(256, psi=make_psi("power", 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeRhsWarning)
        a = solve_picard(pa, SolverConfig(n=256), mesh=ma)
        b = solve_picard(pb, SolverConfig(n=256), mesh=mb)
    assert np.max(np.abs(a.u.values - b.u.values)) <= 1e-12


def test_log_generator_reproduces_identity_in_log_coordinates():
    dom_log = Domain(1.0, math.e, math.exp(0.4), math.exp(0.7))
    dom_id = Domain(0.0, 1.0, 0.4, 0.7)
    pa, _, ma = manufactured(256, domain=dom_id)
    pb, _, mb = manufactured(256, psi=make_psi("log"), domain=dom_log)
    assert ma.eta_index == mb.eta_index and ma.xi_index == mb.xi_index
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeRhsWarning)
        a = solve_picard(pa, SolverConfig(n=256), mesh=ma)
        b = solve_picard(pb, SolverConfig(n=256), mesh=mb)
    assert np.allclose(np.log(mb.t), ma.t, atol=1e-15)
    assert np.max(np.abs(a.u.values - b.u.values)) <= 1e-9

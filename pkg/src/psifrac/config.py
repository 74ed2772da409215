"""YAML run configuration: parsing, schema and range checks, and assembly of
problems, solver settings and assumptions.

Example::

    version: "1"
    psi: {kind: identity}
    domain: {a: 0.0, eta: 0.25, xi: 0.375, T: 0.5}
    orders: {rho: 1.5, sigma: 0.9, delta: 0.3}
    params: {lambda: 0.05, mu: 0.1}
    rhs:
      manufactured: {kappa: 4.0, coeffs: [1.0], lipschitz: [0.05, 0.05]}
    solver: {n: 512, tol: 1.0e-10, max_iter: 200, omega: 1.0}
    assumptions: {L1: 0.05, L2: 0.05, epsilon: 0.01}
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from psifrac.catalog import RHS_IDS, make_rhs, test_function
from psifrac.certify import Assumptions
from psifrac.errors import ParseError, RangeError, SchemaError
from psifrac.langevin import (
    BoundaryMode,
    LangevinProblem,
    ManufacturedSolution,
    SolverConfig,
    manufactured_problem,
)
from psifrac.psi import Domain, Mesh, PsiFunction, build_mesh, make_psi

SCHEMA_VERSION = "1"

_SCHEMA: dict[str, Any] = {
    "version": None,
    "psi": {"kind": None, "param": None},
    "domain": {"a": None, "eta": None, "xi": None, "T": None},
    "orders": {"rho": None, "sigma": None, "delta": None},
    "params": {"lambda": None, "mu": None},
    "rhs": {
        "expr": None,
        "value": None,
        "exponent": None,
        "c0": None,
        "l1": None,
        "l2": None,
        "manufactured": {"kappa": None, "coeffs": None, "lipschitz": None},
    },
    "solver": {"n": None, "tol": None, "max_iter": None, "omega": None, "boundary": None},
    "assumptions": {
        "L1": None, "L2": None, "L": None, "epsilon": None, "phi": None, "l_phi": None,
    },
}

_REQUIRED = ("psi", "domain", "orders", "params", "rhs")


def _check_keys(doc: dict, schema: dict, prefix: str) -> None:
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise SchemaError(f"unknown key {path!r}")
        sub = schema[key]
        if sub is not None:
            if not isinstance(value, dict):
                raise SchemaError(f"{path!r} must be a mapping")
            _check_keys(value, sub, path + ".")


def _number(section: dict, key: str, path: str, default=None) -> float:
    if key not in section:
        if default is None:
            raise SchemaError(f"missing required key {path!r}")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RangeError(f"{path!r} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise RangeError(f"{path!r} must be finite")
    return value


def _integer(section: dict, key: str, path: str, default: int) -> int:
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise RangeError(f"{path!r} must be an integer, got {value!r}")
    return value


@dataclass(frozen=True)
class ManufacturedSpec:
    kappa: float = 4.0
    coeffs: tuple[float, ...] = (1.0,)
    lipschitz: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class RunConfig:
    version: str
    psi_kind: str
    psi_param: Optional[float]
    domain: Domain
    rho: float
    sigma: float
    delta: float
    lam: float
    mu: float
    rhs_expr: Optional[str]
    rhs_params: tuple[tuple[str, float], ...]
    manufactured: Optional[ManufacturedSpec]
    solver: SolverConfig
    L1: Optional[float] = None
    L2: Optional[float] = None
    L: Optional[float] = None
    epsilon: float = 0.0
    phi: Optional[str] = None
    l_phi: Optional[float] = None

    def psi(self) -> PsiFunction:
        return make_psi(self.psi_kind, self.psi_param)


def parse_config(path) -> RunConfig:
    """Read and validate a YAML config; every failure names the offending key."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"config {path} must be a mapping at top level")
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> RunConfig:
    _check_keys(doc, _SCHEMA, "")
    for key in _REQUIRED:
        if key not in doc:
            raise SchemaError(f"missing required section {key!r}")
    version = str(doc.get("version", SCHEMA_VERSION))
    if version != SCHEMA_VERSION:
        raise RangeError(f"'version' must be {SCHEMA_VERSION!r}, got {version!r}")

    psi_sec = doc["psi"]
    kind = psi_sec.get("kind")
    if kind not in ("identity", "log", "power"):
        raise RangeError(f"'psi.kind' must be identity, log or power, got {kind!r}")
    param = None
    if kind == "power":
        param = _number(psi_sec, "param", "psi.param")
        if not param > 0.0:
            raise RangeError(f"'psi.param' must be > 0, got {param}")

    dom = doc["domain"]
    a = _number(dom, "a", "domain.a")
    eta = _number(dom, "eta", "domain.eta")
    xi = _number(dom, "xi", "domain.xi")
    T = _number(dom, "T", "domain.T")
    if not a < eta < xi < T:
        raise RangeError(f"'domain' must satisfy a < eta < xi < T, got {a}, {eta}, {xi}, {T}")
    if kind == "log" and not a > 0.0:
        raise RangeError(f"'domain.a' must be > 0 for a log generator, got {a}")
    if kind == "power" and a < 0.0:
        raise RangeError(f"'domain.a' must be >= 0 for a power generator, got {a}")

    orders = doc["orders"]
    rho = _number(orders, "rho", "orders.rho")
    sigma = _number(orders, "sigma", "orders.sigma")
    delta = _number(orders, "delta", "orders.delta")
    if not 1.0 < rho <= 2.0:
        raise RangeError(f"'orders.rho' must lie in (1, 2], got {rho}")
    if not 0.0 < sigma <= 1.0:
        raise RangeError(f"'orders.sigma' must lie in (0, 1], got {sigma}")
    if not 0.0 < delta < sigma:
        raise RangeError(f"'orders.delta' must lie in (0, sigma), got {delta} with sigma={sigma}")

    params = doc["params"]
    lam = _number(params, "lambda", "params.lambda")
    mu = _number(params, "mu", "params.mu")
    if not lam > 0.0:
        raise RangeError(f"'params.lambda' must be > 0, got {lam}")
    if not mu > 0.0:
        raise RangeError(f"'params.mu' must be > 0, got {mu}")

    rhs = doc["rhs"]
    manufactured = None
    expr = None
    rhs_params: list[tuple[str, float]] = []
    if "manufactured" in rhs:
        if len(rhs) != 1:
            raise SchemaError("'rhs' takes either 'manufactured' or 'expr', not both")
        m = rhs["manufactured"]
        kappa = _number(m, "kappa", "rhs.manufactured.kappa", 4.0)
        if not kappa > sigma + 1.0:
            raise RangeError(f"'rhs.manufactured.kappa' must exceed sigma + 1, got {kappa}")
        coeffs = m.get("coeffs", [1.0])
        if not isinstance(coeffs, list) or not coeffs or not all(
            isinstance(c, (int, float)) and not isinstance(c, bool) for c in coeffs
        ):
            raise RangeError("'rhs.manufactured.coeffs' must be a non-empty list of numbers")
        lip = m.get("lipschitz", [0.0, 0.0])
        if not isinstance(lip, list) or len(lip) != 2 or not all(
            isinstance(c, (int, float)) and not isinstance(c, bool) and c >= 0 for c in lip
        ):
            raise RangeError("'rhs.manufactured.lipschitz' must be two nonnegative numbers")
        manufactured = ManufacturedSpec(
            kappa, tuple(float(c) for c in coeffs), (float(lip[0]), float(lip[1]))
        )
    else:
        expr = rhs.get("expr")
        if expr not in RHS_IDS:
            raise RangeError(f"'rhs.expr' must be one of {RHS_IDS}, got {expr!r}")
        for key in ("value", "exponent", "c0", "l1", "l2"):
            if key in rhs:
                rhs_params.append((key, _number(rhs, key, f"rhs.{key}")))

    sol = doc.get("solver", {})
    n = _integer(sol, "n", "solver.n", 512)
    if n < 4:
        raise RangeError(f"'solver.n' must be >= 4, got {n}")
    tol = _number(sol, "tol", "solver.tol", 1.0e-10)
    if not tol > 0.0:
        raise RangeError(f"'solver.tol' must be > 0, got {tol}")
    max_iter = _integer(sol, "max_iter", "solver.max_iter", 200)
    if max_iter < 1:
        raise RangeError(f"'solver.max_iter' must be >= 1, got {max_iter}")
    omega = _number(sol, "omega", "solver.omega", 1.0)
    if not 0.0 < omega <= 1.0:
        raise RangeError(f"'solver.omega' must lie in (0, 1], got {omega}")
    boundary = sol.get("boundary", BoundaryMode.Discrete.value)
    try:
        mode = BoundaryMode(boundary)
    except ValueError:
        raise RangeError(f"'solver.boundary' must be discrete or closed, got {boundary!r}") from None

    asm = doc.get("assumptions", {})
    opt = {}
    for key in ("L1", "L2", "L", "epsilon", "l_phi"):
        if key in asm:
            value = _number(asm, key, f"assumptions.{key}")
            if value < 0.0 or (key == "l_phi" and value == 0.0):
                raise RangeError(f"'assumptions.{key}' must be positive, got {value}")
            opt[key] = value
    phi = asm.get("phi")
    if phi is not None:
        if not isinstance(phi, str):
            raise RangeError("'assumptions.phi' must be a test-function id")
        try:
            test_function(phi)
        except ValueError as exc:
            raise RangeError(f"'assumptions.phi': {exc}") from None

    return RunConfig(
        version=version,
        psi_kind=kind,
        psi_param=param,
        domain=Domain(a, T, eta, xi),
        rho=rho,
        sigma=sigma,
        delta=delta,
        lam=lam,
        mu=mu,
        rhs_expr=expr,
        rhs_params=tuple(rhs_params),
        manufactured=manufactured,
        solver=SolverConfig(n, tol, max_iter, omega, mode),
        L1=opt.get("L1"),
        L2=opt.get("L2"),
        L=opt.get("L"),
        epsilon=opt.get("epsilon", 0.0),
        phi=phi,
        l_phi=opt.get("l_phi"),
    )


@dataclass(frozen=True, eq=False)
class Built:
    problem: LangevinProblem
    mesh: Mesh
    assumptions: Assumptions
    exact: Optional[ManufacturedSolution] = None


def build(cfg: RunConfig) -> Built:
    """Instantiate the problem, mesh and assumptions described by ``cfg``."""
    psi = cfg.psi()
    n = cfg.solver.n
    if cfg.manufactured is not None:
        ms = cfg.manufactured
        p, exact, mesh = manufactured_problem(
            psi, cfg.domain, cfg.rho, cfg.sigma, cfg.delta, cfg.lam, cfg.mu, n,
            ms.kappa, ms.coeffs, ms.lipschitz,
        )
        lip = ms.lipschitz
    else:
        g, lip = make_rhs(cfg.rhs_expr, dict(cfg.rhs_params))
        s0 = float(psi.eval(cfg.domain.a))

        def f(t, u, d):
            K = np.maximum(np.asarray(psi.eval(t), dtype=float) - s0, 0.0)
            return np.broadcast_to(g(K, u, d), np.shape(t))

        mesh = build_mesh(psi, cfg.domain, n)
        p = LangevinProblem(
            cfg.rho, cfg.sigma, cfg.delta, cfg.lam, cfg.mu, mesh.domain(), psi, f
        )
        mesh = build_mesh(psi, p.domain, n)
        exact = None
    phi_fn = None
    if cfg.phi is not None:
        base = test_function(cfg.phi)
        s0 = float(psi.eval(cfg.domain.a))
        phi_fn = lambda t: base(np.maximum(np.asarray(psi.eval(t), dtype=float) - s0, 0.0))
    asm = Assumptions(
        L1=cfg.L1 if cfg.L1 is not None else lip[0],
        L2=cfg.L2 if cfg.L2 is not None else lip[1],
        L=cfg.L,
        Phi=phi_fn,
        l_Phi=cfg.l_phi,
        epsilon=cfg.epsilon,
    )
    return Built(p, mesh, asm, exact)

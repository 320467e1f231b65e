"""Darboux factorisation of the half-line operator.

The operator -d^2/dx^2 + Q factorises formally as D* D with
D = i (d/dx - V) where V solves the matrix Riccati equation
V' + V^2 = Q.  The Riccati solution is linearised through the zero-energy
frame: V = Xi0' Xi0^{-1} where Xi0'' = Q Xi0 starts from the canonical
boundary values of a unitary U0 constrained by P U0 = P U.  Nodes where
Xi0 is numerically singular are flagged rather than fatal (a Dirichlet
frame is singular at the origin by construction).

The partner operator swaps the transformed equation: D D* = -d^2/dx^2 +
(Q - 2V'), with domain conditions {P phi(0) = 0, P_perp (phi' + V phi)(0)
= 0} re-encoded as a unitary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .boundary import bc_from_parts, check_bc
from .errors import (AllSingular, ConstraintViolated, DomainViolation,
                     ShapeMismatch, SingularAtOrigin)
from .potentials import MatrixPotential

__all__ = [
    "ZeroEnergyFrame",
    "DarbouxFactor",
    "DomainFunction",
    "choose_U0",
    "zero_energy_frame",
    "darboux_potential",
    "riccati_residual",
    "factorization_check",
    "partner_operator",
    "frame_test_functions",
]

SINGULAR_COND = 1e10


@dataclass
class ZeroEnergyFrame:
    """Matrix zero-energy solution Xi0 with canonical boundary values."""

    grid: np.ndarray
    Xi0: np.ndarray     # (M, n, n)
    Xi0x: np.ndarray    # (M, n, n)
    U0: np.ndarray

    @property
    def n(self):
        return self.U0.shape[0]


@dataclass
class DarbouxFactor:
    """Hermitian factor V on the shared grid with singular nodes flagged."""

    grid: np.ndarray
    V: np.ndarray               # (M, n, n); nan-free but unreliable at
    singular: np.ndarray        # boolean mask of flagged nodes
    singular_points: list = field(default_factory=list)

    @property
    def n(self):
        return self.V.shape[1]


def choose_U0(bc, override=None, tol=1e-10):
    """U0 for the zero-energy frame; defaults to U itself.

    An override must be unitary and satisfy the projection constraint
    P U0 = P U (the freedom lives on the Dirichlet subspace only).
    """
    if override is None:
        return bc.U.copy()
    override = np.asarray(override, dtype=complex)
    defect = np.linalg.norm(override.conj().T @ override - np.eye(bc.n))
    if defect > tol:
        raise ConstraintViolated(f"override not unitary: defect {defect:.3e}")
    res = np.linalg.norm(bc.P @ (override - bc.U))
    if res > tol:
        raise ConstraintViolated(
            f"||P (U0 - U)|| = {res:.3e} violates the projection constraint")
    return override


def zero_energy_frame(pot, U0, rtol=1e-10, atol=1e-13, jump_bound=None):
    """Integrate Xi0'' = Q Xi0 outward from the canonical boundary values.

    The potential must be resolved near the origin: consecutive samples in
    the first part of the grid may not jump by more than ``jump_bound``
    (defaults to 10 * median |grid step| * sup ||Q|| + 1).
    """
    n = pot.n
    grid = pot.grid
    if jump_bound is None:
        jump_bound = 10.0 * pot.sup_norm() * float(
            np.median(np.diff(grid))) + 1.0
    near = grid <= grid[0] + 0.2 * (grid[-1] - grid[0])
    jumps = np.abs(np.diff(pot.values[near], axis=0)).max(
        axis=(1, 2), initial=0.0)
    if np.any(jumps > jump_bound):
        raise ShapeMismatch(
            "potential jumps near the origin exceed the continuity bound; "
            "refine the grid")

    U0 = np.asarray(U0, dtype=complex)
    A0 = 0.5 * (U0 + np.eye(n))
    B0 = 0.5j * (U0 - np.eye(n))
    breaks, coeffs = pot.spline_data()
    g, gp = _kernels.integrate_batch(
        breaks, coeffs, np.zeros(1, dtype=complex), grid[0], grid,
        A0, B0, rtol=rtol, atol=atol)
    return ZeroEnergyFrame(grid=grid.copy(), Xi0=g[0], Xi0x=gp[0], U0=U0)


def darboux_potential(frame, cond_limit=SINGULAR_COND):
    """V = Xi0' Xi0^{-1} per node; ill-conditioned nodes are flagged."""
    M = frame.grid.size
    n = frame.n
    V = np.zeros((M, n, n), dtype=complex)
    singular = np.zeros(M, dtype=bool)
    for i in range(M):
        Xi = frame.Xi0[i]
        cond = np.linalg.cond(Xi)
        if not np.isfinite(cond) or cond > cond_limit:
            singular[i] = True
            continue
        V[i] = np.linalg.solve(Xi.conj().T, frame.Xi0x[i].conj().T).conj().T
    if np.all(singular):
        raise AllSingular("Xi0 is singular at every grid node")
    return DarbouxFactor(grid=frame.grid.copy(), V=V, singular=singular,
                         singular_points=list(frame.grid[singular]))


def _centered_derivative(grid, values):
    d = np.empty_like(values)
    d[1:-1] = ((values[2:] - values[:-2])
               / (grid[2:] - grid[:-2])[:, None, None])
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (
        grid[2] - grid[0])
    d[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (
        grid[-1] - grid[-3])
    return d


def riccati_residual(factor, pot):
    """Per-node ||V' + V^2 - Q|| with centred differences.

    Endpoints and nodes adjacent to singular ones carry NaN (no reliable
    difference stencil there).
    """
    if factor.grid.shape != pot.grid.shape or np.any(factor.grid != pot.grid):
        raise ShapeMismatch("factor and potential must share their grid")
    V = factor.V
    out = np.full(factor.grid.size, np.nan)
    bad = factor.singular
    for i in range(1, factor.grid.size - 1):
        if bad[i - 1] or bad[i] or bad[i + 1]:
            continue
        dV = (V[i + 1] - V[i - 1]) / (factor.grid[i + 1] - factor.grid[i - 1])
        out[i] = np.linalg.norm(dV + V[i] @ V[i] - pot.values[i])
    return out


@dataclass
class DomainFunction:
    """Sampled test function in the operator domain: psi, psi', psi''."""

    psi: np.ndarray     # (M, n)
    psix: np.ndarray
    psixx: np.ndarray
    label: str = ""


def frame_test_functions(frame, pot, count=5, widths=None):
    """Domain test functions psi(x) = Xi0(x) w phi(x).

    Any smooth scalar phi with phi(0) = 1, phi'(0) = 0 keeps the boundary
    data of the frame, so psi satisfies the vertex condition and the
    factorisation domain conditions exactly; second derivatives come from
    Xi0'' = Q Xi0 analytically, no differencing.
    """
    n = frame.n
    grid = frame.grid
    if widths is None:
        widths = 0.35 * grid[-1] * (1.0 + 0.25 * np.arange(count))
    Q = pot.values
    fns = []
    for j in range(count):
        w = np.zeros(n, dtype=complex)
        w[j % n] = 1.0
        if j >= n:
            w[(j + 1) % n] = 0.5j
        ell = widths[j % len(widths)]
        phi = np.exp(-((grid / ell) ** 2))
        phix = -2.0 * grid / ell ** 2 * phi
        phixx = (-2.0 / ell ** 2 + 4.0 * grid ** 2 / ell ** 4) * phi
        base = frame.Xi0 @ w
        basex = frame.Xi0x @ w
        psi = base * phi[:, None]
        psix = basex * phi[:, None] + base * phix[:, None]
        psixx = (np.einsum("mij,mj->mi", Q, base) * phi[:, None]
                 + 2.0 * basex * phix[:, None] + base * phixx[:, None])
        fns.append(DomainFunction(psi=psi, psix=psix, psixx=psixx,
                                  label=f"Xi0 w{j} gauss({ell:.2f})"))
    return fns


@dataclass
class FactorizationReport:
    factorization_residual: float
    boundary_residual: float
    initial_residual: float
    per_function: list


def factorization_check(factor, bc, pot, testfns, domain_tol=1e-6):
    """Check D*D psi = -psi'' + Q psi plus the boundary structure.

    For each admissible test function the report carries the interior sup of
    ||D*D psi - (-psi'' + Q psi)|| where D psi = i(psi' - V psi) and the
    outer derivative is a centred difference.  Functions violating the
    domain preconditions raise DomainViolation.
    """
    V = factor.V
    grid = factor.grid
    ok = ~factor.singular
    origin_ok = ok[0]

    init_res = np.nan
    if origin_ok:
        init_res = float(np.linalg.norm(bc.P @ V[0] + bc.P @ bc.H))

    per = []
    worst = 0.0
    worst_bd = 0.0
    for fn in testfns:
        bres = check_bc(bc, fn.psi[0], fn.psix[0])
        perp = float(np.linalg.norm(bc.P_perp @ fn.psi[0]))
        if origin_ok:
            dom = float(np.linalg.norm(
                bc.P @ (fn.psix[0] - V[0] @ fn.psi[0])))
        else:
            dom = 0.0
        if max(bres, perp, dom) > domain_tol:
            raise DomainViolation(
                f"{fn.label}: boundary {bres:.2e}, P_perp {perp:.2e}, "
                f"P(D psi) {dom:.2e} exceed {domain_tol:.1e}")

        dpsi = 1j * (fn.psix - np.einsum("mij,mj->mi", V, fn.psi))
        lhs = np.full_like(fn.psi, np.nan)
        valid = np.zeros(grid.size, dtype=bool)
        for i in range(1, grid.size - 1):
            if not (ok[i - 1] and ok[i] and ok[i + 1]):
                continue
            ddpsi = (dpsi[i + 1] - dpsi[i - 1]) / (grid[i + 1] - grid[i - 1])
            lhs[i] = 1j * (ddpsi + V[i] @ dpsi[i])
            valid[i] = True
        rhs = -fn.psixx + np.einsum("mij,mj->mi", pot.values, fn.psi)
        diff = np.linalg.norm(lhs[valid] - rhs[valid], axis=1)
        scale = max(float(np.max(np.linalg.norm(rhs, axis=1))), 1.0)
        res = float(np.max(diff, initial=0.0)) / scale
        eq6 = float(np.linalg.norm(bc.P @ fn.psix[0] + bc.P @ bc.H
                                   @ fn.psi[0]))
        per.append({"label": fn.label, "factorization": res,
                    "boundary": max(bres, perp, eq6)})
        worst = max(worst, res)
        worst_bd = max(worst_bd, bres, perp, eq6)
    return FactorizationReport(factorization_residual=worst,
                               boundary_residual=worst_bd,
                               initial_residual=init_res,
                               per_function=per)


def partner_operator(factor, bc, pot):
    """Darboux partner: potential Q - 2V' and the swapped vertex condition.

    The partner domain is {P phi(0) = 0, P_perp (phi' + V phi)(0) = 0};
    in the canonical parameterisation that is the Dirichlet projector P and
    Robin coefficient P_perp V(0) P_perp on its complement.
    """
    if factor.singular[0]:
        raise SingularAtOrigin(
            "V is singular at the origin; partner conditions undefined")
    if np.any(factor.singular):
        raise SingularAtOrigin(
            "V must be regular on the whole grid for the partner operator")
    dV = _centered_derivative(factor.grid, factor.V)
    Qt = pot.values - 2.0 * dV
    Qt = 0.5 * (Qt + Qt.conj().transpose(0, 2, 1))
    partner_pot = MatrixPotential(factor.grid.copy(), Qt)
    H_t = bc.P_perp @ factor.V[0] @ bc.P_perp
    partner_bc = bc_from_parts(bc.P, H_t)
    return partner_pot, partner_bc

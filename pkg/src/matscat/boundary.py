"""Self-adjoint vertex conditions for the matrix Schrodinger operator.

A condition at the origin is encoded by a unitary n x n matrix U through

    (i/2) (U^* - I) psi(0) + (1/2) (U^* + I) psi_x(0) = 0,

with ^* the conjugate transpose.  Every derived object used elsewhere in the
package (boundary-value matrices A and B, the high-energy limit of the
scattering matrix, the projections it defines and the Robin coefficient on
the non-Dirichlet subspace) is computed once, at construction time, which is
also the single validation point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BadParams, NotUnitary, ShapeMismatch

# |z + 1| below this counts as eigenvalue -1 of U (Dirichlet channel).
MINUS_ONE_TOL = 1e-8

__all__ = [
    "BoundaryCondition",
    "make_bc",
    "standard_bc",
    "high_energy_limit",
    "robin_matrix",
    "check_bc",
    "bc_from_parts",
    "bc_to_json",
    "bc_from_json",
]


def _unitary_eig(U):
    """Eigenphases and an orthonormal eigenbasis of a (normal) unitary matrix.

    The complex Schur form of a normal matrix is diagonal, so its unitary
    factor is an orthonormal eigenbasis even for degenerate eigenvalues,
    which bare ``numpy.linalg.eig`` does not guarantee.
    """
    T, W = scipy.linalg.schur(np.asarray(U, dtype=complex), output="complex")
    return np.diag(T).copy(), W


def _require_unitary(U, tol=1e-10):
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {U.shape}")
    defect = np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]))
    if defect > tol:
        raise NotUnitary(f"||U^H U - I|| = {defect:.3e} exceeds {tol:.1e}")
    return U


@dataclass(frozen=True)
class BoundaryCondition:
    """Vertex condition together with its eagerly derived matrices.

    Attributes
    ----------
    n : int
        Channel count.
    U : ndarray
        Defining unitary.
    A, B : ndarray
        Boundary values (U + I)/2 and i(U - I)/2 of the canonical solution.
    U_hat : ndarray
        High-energy limit of the scattering matrix (hermitian unitary).
    P, P_perp : ndarray
        Orthogonal projections (I + U_hat)/2 and (I - U_hat)/2.
    H : ndarray
        Robin coefficient on the range of P: P psi_x(0) + P H psi(0) = 0.
    """

    n: int
    U: np.ndarray
    A: np.ndarray
    B: np.ndarray
    U_hat: np.ndarray
    P: np.ndarray
    P_perp: np.ndarray
    H: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        for name in ("U", "A", "B", "U_hat", "P", "P_perp", "H"):
            getattr(self, name).setflags(write=False)

    def dirichlet_part(self):
        """Projection onto the channels with psi(0) = 0."""
        return self.P_perp

    def robin_part(self):
        """Projection onto the channels carrying the Robin condition."""
        return self.P


def make_bc(U, tol=1e-10, minus_one_tol=MINUS_ONE_TOL, kind="custom"):
    """Build a :class:`BoundaryCondition` from its defining unitary.

    Raises
    ------
    NotUnitary
        If ``||U^H U - I||`` exceeds ``tol``.
    """
    U = _require_unitary(U, tol)
    n = U.shape[0]
    A = 0.5 * (U + np.eye(n))
    B = 0.5j * (U - np.eye(n))

    z, W = _unitary_eig(U)
    minus_one = np.abs(z + 1.0) < minus_one_tol
    hat_diag = np.where(minus_one, -1.0, 1.0)
    U_hat = (W * hat_diag) @ W.conj().T
    U_hat = 0.5 * (U_hat + U_hat.conj().T)

    P = 0.5 * (np.eye(n) + U_hat)
    P_perp = 0.5 * (np.eye(n) - U_hat)

    # tan(phi/2) on eigenvectors with eigenvalue e^{i phi} != -1, zero on the
    # Dirichlet subspace; the sign follows from expanding the vertex condition
    # for scalar U = e^{i phi}: psi_x(0) = -tan(phi/2) psi(0).
    phases = np.angle(z)
    h_diag = np.where(minus_one, 0.0, np.tan(0.5 * phases))
    H = (W * h_diag) @ W.conj().T
    H = 0.5 * (H + H.conj().T)

    return BoundaryCondition(
        n=n, U=U.copy(), A=A, B=B, U_hat=U_hat, P=P, P_perp=P_perp, H=H, kind=kind
    )


def standard_bc(kind, n, params=None):
    """Standard vertex conditions: dirichlet, neumann, kirchhoff or robin.

    ``robin`` takes a list of ``n`` eigenphases in (-pi, pi]; the resulting U
    is diagonal with entries e^{i phi_j}.
    """
    if n < 1:
        raise BadParams(f"channel count must be >= 1, got {n}")
    kind = kind.lower()
    if kind == "dirichlet":
        U = -np.eye(n, dtype=complex)
    elif kind == "neumann":
        U = np.eye(n, dtype=complex)
    elif kind == "kirchhoff":
        U = (2.0 / n) * np.ones((n, n), dtype=complex) - np.eye(n)
    elif kind == "robin":
        if params is None:
            raise BadParams("robin conditions need a list of n phases")
        phases = np.asarray(params, dtype=float)
        if phases.shape != (n,):
            raise BadParams(f"expected {n} phases, got shape {phases.shape}")
        if np.any(phases <= -np.pi) or np.any(phases > np.pi):
            raise BadParams("robin phases must lie in (-pi, pi]")
        U = np.diag(np.exp(1j * phases))
    else:
        raise BadParams(f"unknown boundary-condition kind {kind!r}")
    return make_bc(U, kind=kind)


def high_energy_limit(U, tol=1e-10, minus_one_tol=MINUS_ONE_TOL):
    """Spectral map z -> 1 (z != -1), -1 (z = -1) applied to a unitary U.

    Returns the hermitian unitary limit of the scattering matrix as k grows.
    Idempotent: applying it to its own output is the identity operation.
    """
    U = _require_unitary(U, tol)
    z, W = _unitary_eig(U)
    hat_diag = np.where(np.abs(z + 1.0) < minus_one_tol, -1.0, 1.0)
    U_hat = (W * hat_diag) @ W.conj().T
    return 0.5 * (U_hat + U_hat.conj().T)


def robin_matrix(bc):
    """Robin coefficient H with P psi_x(0) + P H psi(0) = 0 on range(P)."""
    return bc.H


def check_bc(bc, psi0, psix0):
    """Residual norm of the vertex condition for boundary data (psi0, psix0).

    Returns ``|| (i/2)(U^H - I) psi0 + (1/2)(U^H + I) psix0 ||`` (Frobenius).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    psix0 = np.asarray(psix0, dtype=complex)
    if psi0.ndim == 1:
        psi0 = psi0[:, None]
    if psix0.ndim == 1:
        psix0 = psix0[:, None]
    if psi0.shape != psix0.shape or psi0.shape[0] != bc.n:
        raise ShapeMismatch(
            f"boundary data shapes {psi0.shape}, {psix0.shape} do not conform "
            f"with n = {bc.n}"
        )
    Uh = bc.U.conj().T
    eye = np.eye(bc.n)
    res = 0.5j * (Uh - eye) @ psi0 + 0.5 * (Uh + eye) @ psix0
    return float(np.linalg.norm(res))


def bc_from_parts(dirichlet_proj, robin, tol=1e-10):
    """Encode {Pd psi(0) = 0, Pc psi_x(0) + Pc H psi(0) = 0} as a unitary.

    ``dirichlet_proj`` is the orthogonal projection Pd onto the clamped
    subspace and ``robin`` the hermitian coefficient on its complement
    (anything of ``robin`` outside that complement is projected away).  The
    Robin block maps through the Cayley-type transform
    (I + iH)(I - iH)^{-1}, i.e. eigenvalue tan(phi/2) -> e^{i phi}.
    """
    Pd = np.asarray(dirichlet_proj, dtype=complex)
    nloc = Pd.shape[0]
    if np.linalg.norm(Pd @ Pd - Pd) > tol or np.linalg.norm(Pd - Pd.conj().T) > tol:
        raise BadParams("dirichlet_proj is not an orthogonal projection")
    Pc = np.eye(nloc) - Pd
    Hc = Pc @ np.asarray(robin, dtype=complex) @ Pc
    Hc = 0.5 * (Hc + Hc.conj().T)
    cayley = np.linalg.solve(np.eye(nloc) - 1j * Hc, np.eye(nloc) + 1j * Hc)
    U = -Pd + Pc @ cayley @ Pc
    return make_bc(U, tol=max(tol, 1e-10))


def bc_to_json(bc):
    """JSON-ready dict: {"n", "U" (re/im entries), "kind"}."""
    return {
        "n": bc.n,
        "U": [
            [{"re": float(v.real), "im": float(v.imag)} for v in row]
            for row in bc.U
        ],
        "kind": bc.kind,
    }


def bc_from_json(obj):
    """Inverse of :func:`bc_to_json`; the "kind" shortcut wins if present."""
    kind = obj.get("kind", "custom")
    if "U" not in obj:
        n = int(obj["n"])
        params = obj.get("params")
        return standard_bc(kind, n, params)
    U = np.array(
        [[complex(v["re"], v["im"]) for v in row] for row in obj["U"]],
        dtype=complex,
    )
    if obj.get("n") is not None and int(obj["n"]) != U.shape[0]:
        raise BadParams("field n disagrees with the shape of U")
    return make_bc(U, kind=kind)

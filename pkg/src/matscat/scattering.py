"""Forward scattering: coefficient matrices, S(k), bound states, pipeline.

The canonical solution with boundary values (A, B) expands in Jost solutions
as Xi = f_- M_- + f_+ M_+ where, by taking conserved Wronskians,

    M_+ = (1/2ik) [f_+^dag B - f_+'^dag A]|_0,
    M_- = -(1/2ik) [f_-^dag B - f_-'^dag A]|_0,

with dag the involution Y^dag(k) = Y(conj k)^H.  The scattering matrix is
S = M_+ M_-^{-1}; discrete eigenvalues -kappa^2 are the zeros of
det M_-(i kappa), where the involution turns the minus-side trace into the
numerically stable decaying solution f_+(., i kappa).
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq, minimize_scalar

from .boundary import high_energy_limit
from .errors import (ShapeMismatch, SingularCoefficient, VirtualLevelWarning,
                     ZeroWavenumber)
from .jost import DEFAULT_ATOL, DEFAULT_RTOL, JostFunctions, jost_traces

__all__ = [
    "MCoefficients",
    "BoundState",
    "ScatteringData",
    "m_coefficients",
    "scattering_matrix",
    "bound_states",
    "scattering_pipeline",
    "symmetric_kgrid",
    "unitarity_defect",
    "scattering_to_json",
    "scattering_from_json",
    "scattering_to_csv",
]

COND_THRESHOLD = 1e12
KAPPA_MIN = 1e-3
SCAN_DENSITY = 400  # scan nodes per unit kappa
ACCEPT_RATIO = 1e-6  # normalised smallest singular value accepting a root


@dataclass
class MCoefficients:
    """Expansion coefficients of the canonical solution at one wavenumber."""

    k: complex
    M_plus: np.ndarray
    M_minus: np.ndarray


@dataclass
class BoundState:
    """One discrete eigenvalue -kappa^2 with its normalisation matrix C^2."""

    kappa: float
    C2: np.ndarray
    order: int = 1


@dataclass
class ScatteringData:
    """Scattering matrix samples, high-energy limit and bound-state data."""

    kgrid: np.ndarray
    S: np.ndarray
    U_hat: np.ndarray
    bound_states: list = field(default_factory=list)
    x_max: float = 0.0

    @property
    def n(self):
        return self.U_hat.shape[0]

    def at(self, k):
        """S at a grid node (exact match required)."""
        idx = int(np.argmin(np.abs(self.kgrid - k)))
        if abs(self.kgrid[idx] - k) > 1e-12:
            raise ShapeMismatch(f"k = {k} is not a grid node")
        return self.S[idx]


def symmetric_kgrid(k_max, count_per_side):
    """Midpoint lattice +/-(j + 1/2) h, h = k_max / count; never contains 0.

    The nodes form one uniform lattice across the origin, which keeps both
    the Fourier quadrature of the Marchenko kernel and the principal-value
    Hilbert sums exact trapezoid rules.
    """
    h = k_max / count_per_side
    pos = (np.arange(count_per_side) + 0.5) * h
    return np.concatenate([-pos[::-1], pos])


def m_coefficients(jf, bc):
    """M_+/M_- from one-wavenumber Jost traces (real k only)."""
    k = jf.k
    if k == 0:
        raise ZeroWavenumber("M coefficients are undefined at k = 0")
    if abs(k.imag) > 1e-14:
        raise ShapeMismatch("m_coefficients expects a real wavenumber")
    if jf.F_plus is None or jf.F_minus is None:
        raise ShapeMismatch("both Jost signs are required")
    A, B = bc.A, bc.B
    M_plus = (jf.F_plus.conj().T @ B - jf.Fx_plus.conj().T @ A) / (2j * k)
    M_minus = -(jf.F_minus.conj().T @ B - jf.Fx_minus.conj().T @ A) / (2j * k)
    return MCoefficients(k=k, M_plus=M_plus, M_minus=M_minus)


def scattering_matrix(mc, cond_threshold=COND_THRESHOLD):
    """S(k) = M_+(k) M_-(k)^{-1}.

    The orientation is anchored by the free cases: Dirichlet gives S = -I
    and Neumann S = +I (the coefficient of the incoming Jost solution is
    normalised to the identity).
    """
    cond = np.linalg.cond(mc.M_minus)
    if not np.isfinite(cond) or cond > cond_threshold:
        raise SingularCoefficient(
            f"cond(M_minus) = {cond:.3e} at k = {mc.k}: spectral singularity "
            "or k too close to 0")
    return np.linalg.solve(mc.M_minus.conj().T, mc.M_plus.conj().T).conj().T


def _m_minus_imag_axis(F, Fx, bc, kappa):
    # M_-(i kappa) via f_-^dag(0, i kappa) = f_+(0, i kappa)^H.
    return (F.conj().T @ bc.B - Fx.conj().T @ bc.A) / (2.0 * kappa)


def _det_scaled(pot, bc, kappas, rtol, atol):
    """det(2 kappa M_-(i kappa)) for an array of kappa values.

    Self-adjointness makes this determinant real up to one constant phase,
    so discrete eigenvalues show up as sign changes after rotating it.
    """
    f, fx = jost_traces(pot, 1j * np.asarray(kappas, dtype=float), rtol=rtol,
                        atol=atol)
    out = np.empty(len(kappas), dtype=complex)
    for i in range(len(kappas)):
        out[i] = np.linalg.det(f[i, -1].conj().T @ bc.B
                               - fx[i, -1].conj().T @ bc.A)
    return out


def default_kappa_max(pot, bc):
    """Guaranteed cover of the discrete spectrum.

    The quadratic form bound <psi, L psi> >= -(||Q||_inf + ||H||^2)||psi||^2
    caps kappa at sqrt(||Q||_inf + ||H||^2); one unit of headroom is added.
    """
    hnorm = float(np.linalg.norm(bc.H, 2))
    return float(np.sqrt(pot.sup_norm() + hnorm * hnorm)) + 1.0


def bound_states(pot, bc, kappa_max=None, kappa_min=KAPPA_MIN,
                 scan_density=SCAN_DENSITY, rtol=DEFAULT_RTOL,
                 atol=DEFAULT_ATOL):
    """Locate discrete eigenvalues and assemble normalisation matrices.

    Scans kappa in (kappa_min, kappa_max] for dips of the scale-free ratio
    sigma_min/sigma_max of M_-(i kappa), refines each dip to 1e-10 in kappa,
    and keeps roots whose refined ratio is below ``ACCEPT_RATIO``.  For each
    root the eigenfunctions are f_+(., i kappa) w with w spanning the null
    space of M_-(i kappa)^H (the boundary-condition kernel); C^2 = W G^{-1}
    W^H where G is the L2 Gram matrix of those columns, so that the columns
    of f_+ C would be orthonormal.  Returned sorted by decreasing kappa.
    """
    if kappa_max is None:
        kappa_max = default_kappa_max(pot, bc)
    if kappa_max <= kappa_min:
        return []
    count = max(int(np.ceil((kappa_max - kappa_min) * scan_density)), 8)
    kappas = np.linspace(kappa_min, kappa_max, count)
    det = _det_scaled(pot, bc, kappas, rtol, atol)

    scale = float(np.median(np.abs(det)))
    theta = float(np.angle(det[int(np.argmax(np.abs(det)))]))
    rotated = det * np.exp(-1j * theta)
    re, im = rotated.real, rotated.imag
    real_mode = float(np.max(np.abs(im))) < 1e-6 * float(np.max(np.abs(re)))

    if np.all(np.abs(det[:4]) < 1e-3 * scale):
        warnings.warn(
            "det M_-(i kappa) stays small toward kappa -> 0+; a virtual "
            "level may be present", VirtualLevelWarning)

    def reval(kap):
        return float((_det_scaled(pot, bc, [kap], rtol, atol)[0]
                      * np.exp(-1j * theta)).real)

    def aeval(kap):
        return float(np.abs(_det_scaled(pot, bc, [kap], rtol, atol)[0]))

    roots = []
    if real_mode:
        for j in range(count - 1):
            if re[j] == 0.0:
                roots.append(float(kappas[j]))
            elif re[j] * re[j + 1] < 0.0:
                roots.append(float(brentq(reval, kappas[j], kappas[j + 1],
                                          xtol=1e-10)))
    # |det| minima catch even-order zeros and back up the sign-change pass.
    absd = np.abs(det)
    for j in range(1, count - 1):
        if not (absd[j] <= absd[j - 1] and absd[j] <= absd[j + 1]):
            continue
        if absd[j] > 0.2 * min(absd[j - 1], absd[j + 1]):
            continue
        res = minimize_scalar(aeval, bounds=(kappas[j - 1], kappas[j + 1]),
                              method="bounded", options={"xatol": 1e-10})
        if res.fun < ACCEPT_RATIO * scale:
            roots.append(float(res.x))

    states = []
    for kappa in sorted(set(roots), reverse=True):
        if states and abs(states[-1].kappa - kappa) < 1e-8:
            continue
        states.append(_assemble_state(pot, bc, kappa, rtol, atol))
    states.sort(key=lambda s: -s.kappa)
    return states


def _assemble_state(pot, bc, kappa, rtol, atol):
    xs = pot.grid[::-1].copy()
    f, fx = jost_traces(pot, [1j * kappa], x_eval=xs, rtol=rtol, atol=atol)
    F0, Fx0 = f[0, -1], fx[0, -1]
    M = _m_minus_imag_axis(F0, Fx0, bc, kappa)
    u, sv, _ = np.linalg.svd(M)
    mult = max(int(np.sum(sv < 1e-8 * sv[0])), 1)
    W = u[:, -mult:]

    # L2 Gram of f_+(., i kappa) columns: Simpson over the grid plus the
    # exact tail beyond x_max where f_+ = e^{-kappa x} I.
    prods = np.einsum("mji,mjl->mil", f[0].conj(), f[0])[::-1]
    N = simpson(prods, x=pot.grid, axis=0)
    N = N + np.exp(-2.0 * kappa * pot.x_max) / (2.0 * kappa) * np.eye(pot.n)
    G = W.conj().T @ N @ W
    C2 = W @ np.linalg.solve(G, W.conj().T)
    C2 = 0.5 * (C2 + C2.conj().T)
    return BoundState(kappa=kappa, C2=C2, order=1)


def _s_for_nodes(pot, bc, kgrid, rtol, atol):
    # One integration per node: sigma = k covers f_+(k) and f_-(−k).
    f, fx = jost_traces(pot, np.asarray(kgrid, dtype=complex), rtol=rtol,
                        atol=atol)
    lookup = {round(float(k), 14): i for i, k in enumerate(kgrid)}
    S = np.empty((len(kgrid), pot.n, pot.n), dtype=complex)
    for i, k in enumerate(kgrid):
        jm = lookup[round(float(-k), 14)]
        jf = JostFunctions(k=complex(k), F_plus=f[i, -1], Fx_plus=fx[i, -1],
                           F_minus=f[jm, -1], Fx_minus=fx[jm, -1])
        S[i] = scattering_matrix(m_coefficients(jf, bc))
    return S


def scattering_pipeline(pot, bc, kgrid, kappa_max=None, rtol=DEFAULT_RTOL,
                        atol=DEFAULT_ATOL, parallel=1, with_bound_states=True):
    """Forward pipeline: S on a symmetric k grid, U_hat, bound states."""
    kgrid = np.asarray(kgrid, dtype=float)
    if np.any(kgrid == 0.0):
        raise ShapeMismatch("kgrid must exclude k = 0")
    for k in kgrid:
        if not np.any(np.abs(kgrid + k) < 1e-12):
            raise ShapeMismatch("kgrid must be symmetric about 0")

    if pot.n != bc.n:
        raise ShapeMismatch("potential and boundary condition disagree on n")

    if parallel > 1:
        chunks = np.array_split(np.arange(len(kgrid)), parallel)
        S = np.empty((len(kgrid), pot.n, pot.n), dtype=complex)

        def work(idx):
            # Each task needs the mirrored nodes too; compute on the full
            # union and keep the requested rows.
            sub = kgrid[idx]
            union = np.unique(np.concatenate([sub, -sub]))
            Su = _s_for_nodes(pot, bc, union, rtol, atol)
            pos = {round(float(k), 14): i for i, k in enumerate(union)}
            return idx, np.array([Su[pos[round(float(k), 14)]] for k in sub])

        with ThreadPoolExecutor(max_workers=parallel) as ex:
            for idx, block in ex.map(work, [c for c in chunks if c.size]):
                S[idx] = block
    else:
        S = _s_for_nodes(pot, bc, kgrid, rtol, atol)

    states = bound_states(pot, bc, kappa_max=kappa_max, rtol=rtol,
                          atol=atol) if with_bound_states else []
    return ScatteringData(kgrid=kgrid, S=S, U_hat=high_energy_limit(bc.U),
                          bound_states=states, x_max=pot.x_max)


def unitarity_defect(data):
    """max_k || S(k)^H S(k) - I ||_F over the grid."""
    eye = np.eye(data.n)
    return float(max(np.linalg.norm(S.conj().T @ S - eye) for S in data.S))


def scattering_to_json(data):
    def cmat(M):
        return [[[float(v.real), float(v.imag)] for v in row] for row in M]

    return {
        "n": data.n,
        "kgrid": [float(k) for k in data.kgrid],
        "S": [cmat(S) for S in data.S],
        "U_hat": cmat(data.U_hat),
        "bound_states": [
            {"kappa": float(b.kappa), "C2": cmat(b.C2), "order": int(b.order)}
            for b in data.bound_states
        ],
        "x_max": float(data.x_max),
    }


def scattering_from_json(obj):
    def cmat(rows):
        return np.array([[complex(v[0], v[1]) for v in row] for row in rows])

    return ScatteringData(
        kgrid=np.asarray(obj["kgrid"], dtype=float),
        S=np.array([cmat(S) for S in obj["S"]]),
        U_hat=cmat(obj["U_hat"]),
        bound_states=[
            BoundState(kappa=float(b["kappa"]), C2=cmat(b["C2"]),
                       order=int(b.get("order", 1)))
            for b in obj.get("bound_states", [])
        ],
        x_max=float(obj.get("x_max", 0.0)),
    )


def scattering_to_csv(data):
    """CSV text: one row per k, columns Re/Im of every S entry."""
    n = data.n
    header = ["k"]
    for i in range(n):
        for j in range(n):
            header += [f"ReS{i + 1}{j + 1}", f"ImS{i + 1}{j + 1}"]
    lines = [",".join(header)]
    for k, S in zip(data.kgrid, data.S):
        row = [f"{k:.17g}"]
        for i in range(n):
            for j in range(n):
                row += [f"{S[i, j].real:.17g}", f"{S[i, j].imag:.17g}"]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"

"""Jost solutions of the half-line matrix Schrodinger equation.

The Jost solution f_s(x, k), s = +/-, solves -f'' + Q f = k^2 f with
f_s(x, k) = e^{s i k x} I exactly beyond the support of Q.  Everything is
integrated in the phase-factored (envelope) form from x_max toward the
origin, so the asymptotic data is exact and bound-state wavenumbers
k = i kappa run in their numerically stable direction.

Only the signed wavenumber sigma = s * k enters the equation; the identity
f_-(x, k) = f_+(x, -k) holds exactly and is used throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ShapeMismatch

__all__ = ["JostFunctions", "compute_jost", "jost_pair", "jost_traces",
           "wronskian_defect"]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-13


@dataclass
class JostFunctions:
    """Boundary traces of the Jost solutions at the origin.

    For a free potential, F_plus = F_minus = I and Fx_(plus/minus) = +/- ik I.
    Either sign may be absent (None) when only one integration was run.
    """

    k: complex
    F_plus: np.ndarray | None = None
    F_minus: np.ndarray | None = None
    Fx_plus: np.ndarray | None = None
    Fx_minus: np.ndarray | None = None


def jost_traces(pot, sigmas, x_eval=None, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                chunk=64):
    """Jost solutions for a batch of signed wavenumbers.

    Parameters
    ----------
    sigmas : array of complex
        Signed wavenumbers; entry sigma corresponds to the solution with
        asymptote e^{i sigma x} I.
    x_eval : array, optional
        Strictly decreasing evaluation points in [0, x_max]; defaults to
        the single point x = 0.

    Returns
    -------
    f, fx : (nb, nc, n, n) complex arrays
        Solution and x-derivative traces at the requested points.
    """
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=complex))
    if x_eval is None:
        x_eval = np.array([0.0])
    x_eval = np.asarray(x_eval, dtype=float)
    if x_eval.size > 1 and np.any(np.diff(x_eval) >= 0):
        raise ShapeMismatch("x_eval must be strictly decreasing")
    if x_eval[0] > pot.x_max + 1e-12:
        raise ShapeMismatch("x_eval must lie inside [0, x_max]")

    breaks, coeffs = pot.spline_data()
    n = pot.n
    eye = np.eye(n, dtype=complex)
    zero = np.zeros((n, n), dtype=complex)

    f = np.empty((sigmas.size, x_eval.size, n, n), dtype=complex)
    fx = np.empty_like(f)

    # Sort by |sigma| so each lockstep chunk shares a natural step size.
    order = np.argsort(np.abs(sigmas), kind="stable")
    for start in range(0, sigmas.size, chunk):
        sel = order[start:start + chunk]
        g, gp = _kernels.integrate_batch(
            breaks, coeffs, sigmas[sel], pot.x_max, x_eval, eye, zero,
            rtol=rtol, atol=atol)
        sig = sigmas[sel][:, None]
        phase = np.exp(1j * sig * x_eval[None, :])[..., None, None]
        f[sel] = phase * g
        fx[sel] = phase * (gp + 1j * sig[..., None, None] * g)
    return f, fx


def compute_jost(pot, k, sign, x_eval=None, rtol=DEFAULT_RTOL,
                 atol=DEFAULT_ATOL):
    """One-sign Jost boundary trace at wavenumber k.

    ``sign`` is +1 or -1; the solution has asymptote e^{sign * i k x} I.
    """
    if sign not in (+1, -1):
        raise ShapeMismatch("sign must be +1 or -1")
    f, fx = jost_traces(pot, [sign * complex(k)], x_eval=x_eval, rtol=rtol,
                        atol=atol)
    jf = JostFunctions(k=complex(k))
    if sign > 0:
        jf.F_plus, jf.Fx_plus = f[0, -1], fx[0, -1]
    else:
        jf.F_minus, jf.Fx_minus = f[0, -1], fx[0, -1]
    return jf


def jost_pair(pot, k, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Both Jost boundary traces at wavenumber k."""
    f, fx = jost_traces(pot, [complex(k), -complex(k)], rtol=rtol, atol=atol)
    return JostFunctions(k=complex(k), F_plus=f[0, 0], Fx_plus=fx[0, 0],
                         F_minus=f[1, 0], Fx_minus=fx[1, 0])


def wronskian_defect(pot, k, xs, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Constancy defect of the conserved Wronskians at real k.

    Checks, at each requested x, the exact relations

        f_+(k)^H f_+'(k) - f_+'(k)^H f_+(k) = 2ik I
        f_-(k)^H f_+'(k) - f_-'(k)^H f_+(k) = 0

    and returns the largest deviation (Frobenius norm).
    """
    k = float(k)
    xs = np.asarray(sorted(set(float(x) for x in xs)), dtype=float)[::-1]
    f, fx = jost_traces(pot, [k, -k], x_eval=xs, rtol=rtol, atol=atol)
    n = pot.n
    worst = 0.0
    for i in range(xs.size):
        fp, fpx = f[0, i], fx[0, i]
        fm, fmx = f[1, i], fx[1, i]
        w_pp = fp.conj().T @ fpx - fpx.conj().T @ fp
        w_mp = fm.conj().T @ fpx - fmx.conj().T @ fp
        worst = max(worst,
                    float(np.linalg.norm(w_pp - 2j * k * np.eye(n))),
                    float(np.linalg.norm(w_mp)))
    return worst

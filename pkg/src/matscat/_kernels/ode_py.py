"""Pure-NumPy fallback integrator for the phase-factored Jost system.

Integrates, for a batch of signed wavenumbers sigma, the envelope form of
the matrix Schrodinger equation

    g'' = Q(x) g - 2 i sigma g',        f(x) = e^{i sigma x} g(x),

with Dormand-Prince 5(4) adaptive steps.  The batch advances in lockstep
(one shared step size); the compiled twin in ``ode_cy`` steps each batch
element independently.  The envelope form removes the e^{i sigma x}
oscillation, so step sizes are set by the potential, not by |k|, and purely
imaginary sigma (bound-state scans) integrates in its stable direction
without overflow.

Q(x) is a piecewise cubic in PPoly layout: ``breaks`` (M,) ascending and
``coeffs`` (4, M-1, n, n), zero outside [breaks[0], breaks[-1]].
"""

from __future__ import annotations

import numpy as np

from ..errors import IntegratorFailure

# Dormand-Prince 5(4) tableau.
_C = (0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0,
     -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
     11.0 / 84.0),
)
_E = (71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
      -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def eval_potential(breaks, coeffs, x):
    """Evaluate the piecewise-cubic potential at scalar x (zero outside)."""
    if x < breaks[0] or x > breaks[-1]:
        n = coeffs.shape[2]
        return np.zeros((n, n), dtype=complex)
    idx = int(np.searchsorted(breaks, x, side="right")) - 1
    idx = min(max(idx, 0), len(breaks) - 2)
    dx = x - breaks[idx]
    acc = coeffs[0, idx]
    for m in range(1, 4):
        acc = acc * dx + coeffs[m, idx]
    return acc


def integrate_batch(breaks, coeffs, sigmas, x_from, checkpoints, y0, yp0,
                    rtol=1e-10, atol=1e-12, max_steps=1_000_000):
    """Integrate the envelope system for every sigma, landing on checkpoints.

    Parameters
    ----------
    sigmas : (nb,) complex
        Signed wavenumbers (sigma = +k for the plus Jost solution, -k for
        the minus one; sigma = 0 recovers the zero-energy equation).
    x_from : float
        Starting abscissa; initial data ``y0``/``yp0`` apply there.
    checkpoints : (nc,) float
        Strictly monotone recording points, moving away from ``x_from``
        (the first entry may equal ``x_from``).
    y0, yp0 : (n, n) or (nb, n, n) complex
        Initial envelope and envelope derivative.

    Returns
    -------
    g, gp : (nb, nc, n, n) complex arrays of envelope traces.
    """
    breaks = np.asarray(breaks, dtype=float)
    coeffs = np.asarray(coeffs, dtype=complex)
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=complex))
    checkpoints = np.asarray(checkpoints, dtype=float)
    nb = sigmas.size
    n = coeffs.shape[2]

    y = np.empty((nb, 2, n, n), dtype=complex)
    y[:, 0] = np.asarray(y0, dtype=complex)
    y[:, 1] = np.asarray(yp0, dtype=complex)

    out_g = np.empty((nb, checkpoints.size, n, n), dtype=complex)
    out_gp = np.empty_like(out_g)

    direction = 1.0 if checkpoints[-1] >= x_from else -1.0
    damp = (-2j * sigmas)[:, None, None]

    def rhs(x, state):
        q = eval_potential(breaks, coeffs, x)
        d = np.empty_like(state)
        d[:, 0] = state[:, 1]
        d[:, 1] = np.matmul(q, state[:, 0]) + damp * state[:, 1]
        return d

    span = max(abs(checkpoints[-1] - x_from), 1e-30)
    hmin = 1e-14 * max(1.0, abs(x_from), abs(checkpoints[-1]))
    scale0 = 1.0 + float(np.max(np.abs(sigmas))) + float(np.sqrt(np.max(np.abs(coeffs[3]), initial=0.0)))
    h = min(0.05 * span, 0.5 / scale0)

    pos = x_from
    k1 = rhs(pos, y)
    nsteps = 0
    ks = [None] * 7

    for ic, target in enumerate(checkpoints):
        while (target - pos) * direction > 1e-14 * span:
            remaining = abs(target - pos)
            truncated = h >= remaining
            h_try = min(h, remaining)
            dx = h_try * direction

            ks[0] = k1
            for s in range(6):
                acc = _A[s][0] * ks[0]
                for j in range(1, s + 1):
                    if _A[s][j] != 0.0:
                        acc = acc + _A[s][j] * ks[j]
                ks[s + 1] = rhs(pos + _C[s] * dx, y + dx * acc)
            y_new = y + dx * (_A[5][0] * ks[0] + _A[5][2] * ks[2]
                              + _A[5][3] * ks[3] + _A[5][4] * ks[4]
                              + _A[5][5] * ks[5])
            ks[6] = rhs(pos + dx, y_new)

            err_vec = _E[0] * ks[0]
            for j in range(2, 7):
                err_vec = err_vec + _E[j] * ks[j]
            err_vec = dx * err_vec
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            ratio = np.abs(err_vec) / sc
            err = float(np.sqrt(np.mean(ratio * ratio)))

            if err <= 1.0:
                pos = target if truncated else pos + dx
                y = y_new
                k1 = ks[6]
                factor = _MAX_FACTOR if err == 0.0 else min(
                    _MAX_FACTOR, _SAFETY * err ** -0.2)
                if truncated:
                    h = max(h, h_try * factor)
                else:
                    h = h_try * factor
            else:
                h = h_try * max(_MIN_FACTOR, _SAFETY * err ** -0.2)

            if h < hmin:
                raise IntegratorFailure(
                    f"step size underflow at x = {pos:.6g}", x=pos)
            nsteps += 1
            if nsteps > max_steps:
                raise IntegratorFailure(
                    f"step budget exceeded at x = {pos:.6g}", x=pos)

        out_g[:, ic] = y[:, 0]
        out_gp[:, ic] = y[:, 1]

    return out_g, out_gp

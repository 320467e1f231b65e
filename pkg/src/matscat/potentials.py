"""Matrix potentials sampled on a half-line grid.

Potentials are hermitian matrix-valued samples on a strictly increasing grid
x_0 = 0 < ... < x_M = x_max and are treated as identically zero beyond x_max
(compact-support truncation).  Between nodes the integrator sees the natural
piecewise-cubic interpolant of the samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BadParams, ShapeMismatch

HERMITICITY_TOL = 1e-12
DIAGONAL_TOL = 1e-14

__all__ = [
    "MatrixPotential",
    "sample_potential",
    "preset_potential",
    "potential_to_json",
    "potential_from_json",
]


@dataclass
class MatrixPotential:
    """Hermitian matrix potential Q(x) on [0, x_max], zero beyond.

    ``values`` has shape (M, n, n) with ``values[m]`` the sample at
    ``grid[m]``.  ``diagonal`` is true iff every off-diagonal magnitude is
    below ``DIAGONAL_TOL`` at every node.
    """

    grid: np.ndarray
    values: np.ndarray
    diagonal: bool = field(init=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.grid.ndim != 1 or self.grid.size < 2:
            raise BadParams("grid must hold at least two samples")
        if np.any(np.diff(self.grid) <= 0):
            raise BadParams("grid must be strictly increasing")
        if abs(self.grid[0]) > 0:
            raise BadParams("grid must start at x = 0")
        if self.values.ndim != 3 or self.values.shape[0] != self.grid.size:
            raise ShapeMismatch(
                f"values shape {self.values.shape} does not match grid size "
                f"{self.grid.size}"
            )
        if self.values.shape[1] != self.values.shape[2]:
            raise ShapeMismatch("samples must be square matrices")
        herm = np.max(np.abs(self.values - self.values.conj().transpose(0, 2, 1)))
        if herm > HERMITICITY_TOL:
            raise BadParams(f"samples not hermitian: max defect {herm:.3e}")
        off = self.values.copy()
        idx = np.arange(self.n)
        off[:, idx, idx] = 0.0
        self.diagonal = bool(np.max(np.abs(off), initial=0.0) < DIAGONAL_TOL)
        self._spline = None

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def x_max(self):
        return float(self.grid[-1])

    def spline_data(self):
        """Breakpoints and cubic coefficients consumed by the ODE kernels.

        Returns ``(breaks, coeffs)`` where ``coeffs`` has shape
        (4, M-1, n, n) in descending power order, PPoly layout.
        """
        if self._spline is None:
            cs = CubicSpline(self.grid, self.values, axis=0)
            self._spline = (cs.x.copy(), np.ascontiguousarray(cs.c))
        return self._spline

    def __call__(self, x):
        """Evaluate the interpolated potential at scalar or array x."""
        breaks, coeffs = self.spline_data()
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x)
        out = np.zeros(xv.shape + (self.n, self.n), dtype=complex)
        inside = (xv >= breaks[0]) & (xv <= breaks[-1])
        if np.any(inside):
            xi = xv[inside]
            idx = np.clip(np.searchsorted(breaks, xi, side="right") - 1, 0,
                          len(breaks) - 2)
            dx = (xi - breaks[idx])[:, None, None]
            acc = np.zeros((xi.size, self.n, self.n), dtype=complex)
            for m in range(4):
                acc = acc * dx + coeffs[m, idx]
            out[inside] = acc
        return out[0] if scalar else out

    def sup_norm(self):
        """Largest spectral norm over the sample nodes."""
        return float(max(np.linalg.norm(Q, 2) for Q in self.values))

    def is_zero(self, tol=0.0):
        return bool(np.max(np.abs(self.values)) <= tol)


def sample_potential(fn, n, x_max, num=301):
    """Sample a callable x -> (n, n) array (or scalar for n = 1)."""
    grid = np.linspace(0.0, x_max, num)
    vals = np.empty((num, n, n), dtype=complex)
    for i, x in enumerate(grid):
        q = np.asarray(fn(x), dtype=complex)
        vals[i] = q.reshape(n, n) if q.ndim else q * np.eye(n)
    return MatrixPotential(grid, vals)


def preset_potential(name, n=1, x_max=None, num=301, **params):
    """Built-in analytic presets sampled onto a uniform grid.

    constant_well : depth, width       -> q = -depth on [0, width]
    gaussian      : depth, center, width
    sech2         : depth, width       -> q = -depth * sech(x / width)^2
    zero          : flat zero potential
    """
    name = name.lower()
    if name == "constant_well":
        depth = params.get("depth", 4.0)
        width = params.get("width", 1.0)
        x_max = width if x_max is None else x_max
        fn = lambda x: -depth * (x <= width) * np.eye(n)
        if x_max > width:
            raise BadParams("constant_well must end at its support (x_max = width)")
    elif name == "gaussian":
        depth = params.get("depth", 2.0)
        center = params.get("center", 1.0)
        width = params.get("width", 0.5)
        x_max = center + 4.0 * width if x_max is None else x_max
        fn = lambda x: -depth * np.exp(-((x - center) / width) ** 2) * np.eye(n)
    elif name == "sech2":
        depth = params.get("depth", 2.0)
        width = params.get("width", 1.0)
        x_max = 8.0 * width if x_max is None else x_max
        fn = lambda x: -depth / np.cosh(x / width) ** 2 * np.eye(n)
    elif name == "zero":
        x_max = 1.0 if x_max is None else x_max
        fn = lambda x: np.zeros((n, n))
    else:
        raise BadParams(f"unknown preset {name!r}")
    return sample_potential(fn, n, x_max, num)


def potential_to_json(pot):
    """JSON-ready dict {"n", "x", "Q"} with Q[m][i][j] = [re, im]."""
    return {
        "n": pot.n,
        "x": [float(x) for x in pot.grid],
        "Q": [
            [[[float(v.real), float(v.imag)] for v in row] for row in Q]
            for Q in pot.values
        ],
    }


def potential_from_json(obj):
    """Accepts either sampled form {"n","x","Q"} or {"preset", "params", ...}."""
    if "preset" in obj:
        kw = dict(obj.get("params", {}))
        return preset_potential(
            obj["preset"],
            n=int(obj.get("n", 1)),
            x_max=obj.get("x_max"),
            num=int(obj.get("num", 301)),
            **kw,
        )
    grid = np.asarray(obj["x"], dtype=float)
    Q = np.array(
        [[[complex(v[0], v[1]) for v in row] for row in sample]
         for sample in obj["Q"]],
        dtype=complex,
    )
    if int(obj["n"]) != Q.shape[1]:
        raise BadParams("field n disagrees with the shape of Q")
    return MatrixPotential(grid, Q)

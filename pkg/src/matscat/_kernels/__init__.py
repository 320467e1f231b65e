"""Integrator kernel backends.

The compiled Cython kernel is preferred when it was built at install time;
the NumPy implementation is the always-available fallback.  Set the
environment variable ``MATSCAT_FORCE_PYTHON=1`` to skip the compiled kernel
(used by the benchmark and the backend-agreement tests).
"""

import os

from . import ode_py

BACKEND = "python"
integrate_batch = ode_py.integrate_batch
eval_potential = ode_py.eval_potential

if not os.environ.get("MATSCAT_FORCE_PYTHON"):
    try:
        from . import ode_cy  # built from ode_cy.pyx; optional

        integrate_batch = ode_cy.integrate_batch
        BACKEND = "compiled"
    except ImportError:
        pass


def get_backend(name):
    """Return ``integrate_batch`` for an explicit backend name."""
    if name == "python":
        return ode_py.integrate_batch
    if name == "compiled":
        from . import ode_cy

        return ode_cy.integrate_batch
    raise ValueError(f"unknown backend {name!r}")

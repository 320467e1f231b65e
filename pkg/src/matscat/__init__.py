"""matscat: scattering and inverse scattering for the half-line matrix
Schrodinger operator with general self-adjoint vertex conditions.

Subpackages cover the forward problem (Jost solutions, scattering matrix,
bound states), the Darboux factorisation of the operator, the Marchenko
inverse problem recovering both the potential and the vertex condition, and
the star-graph specialisation that rebuilds the last ray from n - 1
reflection coefficients.
"""

from ._kernels import BACKEND as kernel_backend
from .boundary import (BoundaryCondition, bc_from_json, bc_from_parts,
                       bc_to_json, check_bc, high_energy_limit, make_bc,
                       robin_matrix, standard_bc)
from .potentials import (MatrixPotential, potential_from_json,
                         potential_to_json, preset_potential,
                         sample_potential)
from .jost import JostFunctions, compute_jost, jost_pair, jost_traces
from .scattering import (BoundState, MCoefficients, ScatteringData,
                         bound_states, m_coefficients, scattering_from_json,
                         scattering_matrix, scattering_pipeline,
                         scattering_to_csv, scattering_to_json,
                         symmetric_kgrid, unitarity_defect)

__version__ = "0.1.0"

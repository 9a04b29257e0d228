"""Parallel (PCA) spin dynamics for the 2D Ising model.

Exact small-box checks of the kernel identities, contour and polymer-gas
expansions with a convergence checker, and a Monte Carlo sampler with a
Glauber baseline.
"""

from __future__ import annotations

from .contours import (
    Connectivity,
    ContourSet,
    KPReport,
    contour_dump,
    contour_partition,
    decompose,
    even_subgraphs,
    extract_contour,
    kp_check,
    polymer_gas_partition,
    spin_side_partition,
    window_crossing,
)
from .dynamics import (
    detailed_balance_residual,
    dynamical_balance_residual,
    log_z_sigma,
    stationarity_residual,
    sweep,
    transition_matrix,
)
from .hamiltonian import KernelKind, ModelParams, energy_pair, energy_single, kind_for, pair_energy_matrix
from .lattice import BC, Geometry, all_configs, build_geometry
from .mc import Trace, batch_means, run_glauber, run_pca
from .measures import (
    delta_functional,
    factorization_residual,
    first_order_check,
    gibbs_measure,
    pca_measure,
    tv_distance,
)

__all__ = [
    "BC",
    "Connectivity",
    "ContourSet",
    "Geometry",
    "KPReport",
    "KernelKind",
    "ModelParams",
    "Trace",
    "all_configs",
    "batch_means",
    "build_geometry",
    "contour_dump",
    "contour_partition",
    "decompose",
    "delta_functional",
    "detailed_balance_residual",
    "dynamical_balance_residual",
    "energy_pair",
    "energy_single",
    "even_subgraphs",
    "extract_contour",
    "factorization_residual",
    "first_order_check",
    "gibbs_measure",
    "kind_for",
    "kp_check",
    "log_z_sigma",
    "pair_energy_matrix",
    "pca_measure",
    "polymer_gas_partition",
    "run_glauber",
    "run_pca",
    "spin_side_partition",
    "stationarity_residual",
    "sweep",
    "transition_matrix",
    "tv_distance",
    "window_crossing",
]

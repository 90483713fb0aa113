# settings.py
"""
Shared constants for the Data-Driven elasticity toolkit.

Edit the dicts below to change defaults; the only environment override is
DD_THREADS (worker threads used for certificate sample batches).
"""

import os

# Worker threads for batched sampling
NUM_THREADS = max(1, int(os.environ.get("DD_THREADS", "4")))

# Numerical tolerances - all relative to (1 + |A|) unless noted
TOLERANCES = {
    'rotation_orthogonality': 1e-14,
    'moment_equilibrium': 1e-10,     # relative to 1 + |F||P|
    'frame_indifference': 1e-10,     # relative to 1 + |P|
    'projection_residual': 1e-10,
    'newton_residual': 1e-10,
    'margin_roundoff': 1e-12,        # margins below -tol*scale count as violations
    'strong_J_per_element': 1e-10,   # tol_J = value * elements * modulus
    'energy_plateau': 1e-10,         # Newton: predicted decrease below this, relative to 1 + |E|
    'energy_roundoff': 1e-12,        # Newton: energy rise tolerated on a plateau, relative to 1 + |E|
}

# Defaults for the sampling-based certificates
CERTIFICATE_DEFAULTS = {
    'norm_range': (1e-2, 1e3),       # log-uniform norms for coercivity sampling
    'poly_norm_max': 10.0,           # |F|, |G| <= 10 for polymonotone checks
    'coarse_radii': 40,              # radial grid points for constant fitting
    'coarse_directions': 64,
    'batch_size': 4096,
    'growth_ladder': (1.0, 10.0, 100.0, 1000.0),
    'growth_divergence_factor': 1e3,
    'quasimonotone_modes': 5,
    'quasimonotone_grid': {2: 24, 3: 10},
    'bump_margin': 0.1,
    'orbit_covering_samples': 2000,
}

# Defaults for the solvers
SOLVER_DEFAULTS = {
    'newton_tol': 1e-10,
    'newton_max_iter': 50,
    'newton_min_step': 2.0 ** -20,
    'dd_max_outer': 100,
    'graph_psi_starts': 9,
    'graph_psi_perturbation': 0.1,
    'study_box_factor': 1.5,
    'study_square': 8,               # built-in mesh when no mesh is given
    'study_stretch': 0.04,           # uniaxial stretch of the built-in benchmark
    'data_box': 0.3,                 # gen-data half-width around the identity
}

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

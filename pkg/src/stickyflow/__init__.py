"""stickyflow: sticky-coupled lattice flows and their continuum verification.

Simulates the discrete flow of kernels driven by a marked Poisson
environment on Z, the N-point Markov chains it induces, and their
diffusively rescaled limits (consistent families of sticky-coupled
Brownian motions); verifies the continuum formulas — generator
identities, exit-time moments, exit-cell distributions, half-plane
occupation probabilities — by exact identity checks and seeded Monte
Carlo.
"""

from .params import (
    AtomicMeasure,
    PFamily,
    ThetaFamily,
    drift_transform,
    gauge_shift,
    p_from_mu,
    p_n_from_theta,
    theta_from_nu,
    validate,
)
from .cells import (
    Partition,
    PwlFunction,
    SplitVector,
    apply_generator,
    directional_gradient,
    neighbors_of_diagonal,
    partition_of,
    split_vectors,
)
from .chain import (
    ChainSpec,
    JumpPath,
    rescale,
    sample_continuum_family,
    sample_sticky_bm,
    simulate_chain,
)
from .latticeflow import (
    Environment,
    MassVector,
    build_environment,
    compose_check,
    propagate_kernel,
    sample_particles,
)
from .halfplane import (
    HalfPlaneSpec,
    StripSpec,
    TriangleSpec,
    erfcx,
    exit_strip,
    exit_triangle,
    occupation_probability,
    simulate_halfplane,
    time_change,
)
from .verify import McEstimate, mc_run
from .rng import Stream

__version__ = "0.1.0"

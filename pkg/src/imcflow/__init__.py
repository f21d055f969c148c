"""Inductive matrix completion by multi-phase projected gradient descent."""

from .core import (
    CoherenceStats,
    FactorPair,
    FeaturePair,
    GroundTruth,
    IMCError,
    ObservationSet,
    SampleSplit,
    coherence,
    coherence_mu0,
    coherence_mu1,
    optimal_rotation,
    orthonormalize,
    procrustes_distance,
    relative_error,
    split_observations,
)
from .datagen import ProblemSpec, generate_problem, sample_bernoulli, sample_fixed_count
from .objective import build_cache, gradient, gradient_sparse_reg, loss, loss_sparse_reg
from .projection import (
    ProjectionError,
    RowNormConstraint,
    constraint_bound,
    feasibility_violation,
    project_qcqp,
    project_single_row,
)
from .solver import (
    RecoveryReport,
    SolverConfig,
    SolverError,
    Trace,
    estimate_sigma1,
    run_phase2,
    run_phase3,
    solve,
    spectral_init,
)

__version__ = "0.1.0"

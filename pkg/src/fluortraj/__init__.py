"""Stochastic quantum trajectories for remote two-qubit entanglement generation
by joint continuous monitoring (photodetection, homodyne, heterodyne) of
spontaneous emission mixed on a beamsplitter."""

__version__ = "0.1.0"

from ._kernels import USE_NUMBA
from .ensemble import (
    EnsembleStats,
    HeraldedSample,
    analytic_mean_concurrence,
    collect_heralds,
    mean_concurrence_ode,
    phase_sweep,
    postselect_heralded,
    run_ensemble,
)
from .engine import (
    TrajectoryRecord,
    apply_kraus,
    derive_stream_key,
    make_rng,
    run_trajectory,
    sample_heterodyne_readout,
    sample_homodyne_readout,
    sample_photodetection_outcome,
)
from .errors import (
    ConfigError,
    FluortrajError,
    InvalidDensityError,
    InvalidStateError,
    SamplerError,
)
from .kraus import (
    JointPropagator,
    KrausOperator,
    MeasurementConfig,
    completeness_defect,
    heterodyne_kraus,
    homodyne_kraus,
    joint_propagator,
    photodetection_kraus,
    which_path_density,
)
from .qstate import (
    BellAmplitudes,
    PureTwoQubitState,
    TwoQubitDensity,
    bell_compose,
    bell_decompose,
    concurrence_mixed,
    concurrence_pure,
    make_product_state,
)

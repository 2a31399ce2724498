"""spinsense: spin-J rotation sensing toolkit.

Probe-state construction, Majorana constellations, classical and quantum
Fisher information for SO(3) rotations, optimal and Husimi-sampling
measurements, and Monte Carlo verification that maximum-likelihood
estimators saturate the quantum Cramer-Rao bound.
"""

from .su2 import (
    HalfInt,
    OperatorSet,
    RotationParams,
    GeneratorFrame,
    make_operators,
    rotation_unitary,
    so3_matrix,
    generator_frame,
    numerical_generator,
)
from .states import (
    SpinState,
    BlochPoint,
    basis_state,
    coherent_state,
    noon_state,
    cat_state,
    balanced_state,
    king_state,
)
from .majorana import (
    MajoranaPoly,
    Constellation,
    majorana_poly,
    constellation,
    husimi,
    husimi_grid,
)
from .metrology import (
    SensCov,
    QfiMatrix,
    SldOperator,
    cov_matrix,
    qfi_single_pure,
    qfi_single_mixed,
    sld,
    qfi_rotation_matrix,
    reparametrize,
    avg_qfi,
    avg_variance,
    classical_fi,
    gaussian_fi,
    singular_diagnosis,
    crb,
)
from .estimation import (
    MeasurementModel,
    ShotRecord,
    EstimationReport,
    optimal_pvm,
    husimi_design,
    simulate_shots,
    ml_estimate,
    monte_carlo_qcrb,
    estimator_stats,
)
from .twomode import (
    TwoModeState,
    SubspaceDecomposition,
    schwinger_operators,
    two_mode_coherent,
    coherent_plus_squeezed,
    decompose,
    hypergeometric_check,
)

__version__ = "0.1.0"

"""Characterization and validation experiments against a mock qubit."""

from .cliffords import (
    CLIFFORD_MATS,
    CLIFFORD_WORDS,
    CNOT,
    COMPOSE,
    INVERSE,
    N_CLIFFORDS,
    PAULI_INDEX,
    axis_angle,
    bloch_rotation,
    clifford_index,
    net_index,
    overrotated,
    rotation,
    sequence_inverse,
)
from .gmm import (
    GaussianMixture,
    calibrated_discriminator,
    confusion_matrix,
    gmm_fit,
    readout_correct,
)
from .model import (
    MockQubitModel,
    chevron,
    excited_probability,
    mock_response,
    rabi_amplitude_sweep,
    rabi_p1,
)
from .rb import (
    RBResult,
    fit_rb_decay,
    random_rb_sequence,
    rb_experiment,
    rb_experiment_2q,
    run_sequence_1q,
)
from .rc import (
    TVDReport,
    circuit_unitary,
    TwoQubitCircuit,
    ideal_distribution,
    paired_improvement_pvalue,
    random_circuit,
    rc_harness,
    twirl_circuit,
    verify_twirl,
)
from .tvd import distribution, merge_counts, tvd

__all__ = [
    "CLIFFORD_MATS",
    "CLIFFORD_WORDS",
    "CNOT",
    "COMPOSE",
    "INVERSE",
    "N_CLIFFORDS",
    "PAULI_INDEX",
    "axis_angle",
    "bloch_rotation",
    "circuit_unitary",
    "clifford_index",
    "net_index",
    "overrotated",
    "rotation",
    "sequence_inverse",
    "GaussianMixture",
    "calibrated_discriminator",
    "confusion_matrix",
    "gmm_fit",
    "readout_correct",
    "MockQubitModel",
    "chevron",
    "excited_probability",
    "mock_response",
    "rabi_amplitude_sweep",
    "rabi_p1",
    "RBResult",
    "fit_rb_decay",
    "random_rb_sequence",
    "rb_experiment",
    "rb_experiment_2q",
    "run_sequence_1q",
    "TVDReport",
    "TwoQubitCircuit",
    "ideal_distribution",
    "paired_improvement_pvalue",
    "random_circuit",
    "rc_harness",
    "twirl_circuit",
    "verify_twirl",
    "distribution",
    "merge_counts",
    "tvd",
]

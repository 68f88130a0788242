"""riccatiflow: evolution operators via matrix Riccati flow on coset charts.

The package builds time-evolution operators for N-level systems by
factorizing them over a rectangular chart obeying a matrix Riccati
equation, unitarizing with Hermitian gauge roots, and recursing on the
residual block problems.  For four-level systems it adds the linear
rotation picture (five- and six-component Bloch-type vectors), the
Plucker-coordinate picture of the evolving two-plane, and an independent
direct-integration oracle used for verification throughout.
"""

from .errors import (
    AntipodeError,
    ChartBreakdownError,
    ConfigError,
    DegenerateChartError,
    DimensionError,
    DivergenceError,
    InvalidIndexError,
    NearSingularGaugeError,
    RiccatiFlowError,
    StepSizeUnderflowError,
    ValidationError,
)
from .generators import (
    AntisymmetricCoeffs,
    So6Generator,
    coeffs_from_hamiltonian,
    hamiltonian_from_coeffs,
    so6_commutator_table,
    so6_generator,
    su4_generator,
    su4_generator_table,
)
from .schedule import (
    BlockPartition,
    ConstantLaw,
    HamiltonianSchedule,
    HarmonicLaw,
    PolynomialLaw,
    Segment,
    SubalgebraTag,
    TableLaw,
    block_partition,
    classify_subalgebra,
    load_config,
    make_traceless,
    parse_config,
    sample,
    sample_coeffs,
)
from .stepper import IntegratorConfig
from .decompose import (
    EvolutionRecord,
    GaugeFactors,
    ZChart,
    assemble_unitary,
    effective_hamiltonians,
    gamma_matrices,
    gauge_factors,
    hermitian_sqrt,
    non_hermitian_propagate,
    phase_rate,
    propagate_decomposed,
    riccati_rhs,
    so5_component_rhs,
    su4_component_rhs,
    z_components,
    z_matrix,
)
from .bloch import (
    BlochTrajectory,
    MVector,
    bloch_rhs,
    m_from_z_so5,
    m_from_z_su4,
    phase_stripped_distance,
    propagate_bloch,
    stiefel_residuals,
    z_from_m,
)
from .plucker import (
    OMEGA,
    PluckerTrajectory,
    PluckerVector,
    m_from_plucker,
    plucker_from_m,
    plucker_from_unitary,
    plucker_hamiltonian,
    propagate_plucker,
    symplectic_form,
    symplectic_pairing,
    z_from_unitary,
)
from .oracle import DirectTrajectory, compare_unitaries, matrix_exponential, propagate_direct
from .verify import CheckResult, DEFAULT_TOLERANCES, run_verification

__version__ = "0.1.0"

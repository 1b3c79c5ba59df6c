"""Dark collective modes of a multimode field coupled to a single decaying atom."""
from ._backend import BACKEND
from .analysis import EnergyPartition, PlanckReport, energy_partition, g1_intensity, planck_report
from .collective import (
    CollectiveBasis,
    CollectiveIndex,
    build_basis,
    collective_annihilator,
    collective_state,
    field_correlations,
    occupation_expectations,
)
from .combinatorics import CountKind, CountResult, count, survival_ratio
from .dynamics import (
    CouplingSchedule,
    EvolutionConfig,
    TrajectoryRecord,
    effective_evolve,
    effective_nbar,
    evolve,
    hamiltonian_at,
    interaction_action,
    kappa,
    lindblad_rhs,
    standard_observables,
)
from .errors import (
    ConfigurationError,
    DarkModesError,
    DimensionMismatchError,
    DomainError,
    IntegrationError,
    InvalidDimensionError,
    TruncationError,
    TruncationWarning,
)
from .hilbert import (
    DensityMatrix,
    ModeSpec,
    Operator,
    StateVector,
    SystemSpec,
    annihilation_op,
    creation_op,
    embed,
    expectation,
    number_op,
    sigma_minus,
    sigma_plus,
)
from .thermal import ThermalSpec, product_thermal, thermal_dm

__version__ = "0.1.0"

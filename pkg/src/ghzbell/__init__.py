"""Bell-inequality violation by GHZ correlations under random local measurements."""
from .correlations import (
    CorrelationTable,
    MeasurementConfig,
    MeasurementDirection,
    NoiseKind,
    NoiseSpec,
    bell_state_correlation,
    build_correlation_table,
    correlation_table_to_probabilities,
    ghz_full_correlation,
    ghz_restricted_correlation,
)
from .exceptions import (
    ConsistencyError,
    GHZBellError,
    ResourceLimitError,
    SolverIndeterminateError,
    UsageError,
)
from .inequalities import InequalityClass, InequalityVerdict, check_violation
from .local_polytope import PolytopeVerdict, is_local, is_local_correlation_basis
from .sampling import SamplerSpec, Scheme

__version__ = "0.1.0"

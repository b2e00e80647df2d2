"""Bayesian multivariate Bernoulli analysis of binary clinical footprints.

Records are fixed-width binary vectors. The fitted object is a sparse table of
observed outcomes with counts plus a symmetric Dirichlet prior; every
posterior quantity (marginal and conditional event rates, pairwise
correlations, a plug-in death predictor) is computed from that table.
"""

__version__ = "0.1.0"

from .schema import Event, Footprint, SchemaError, SchemaViolation, Variable, VariableSchema
from .table import ActiveOutcomeTable, EventMass, PriorConfig, TableFormatError, build_table, event_mass
from .layout import footprint_schema
from .inference import (
    CorrelationMatrix,
    EventPosterior,
    ExpFitError,
    InconsistentMassError,
    RiskTable,
    UndefinedConditionalError,
    conditional,
    correlation,
    correlation_matrix,
    cross_events,
    fit_exponential,
    marginal,
    mortality_decomposition,
    risk_table,
)
from .ingest import IngestReport, Mapping, MappingError, bundled_mapping, emit_csv, ingest, load_mapping
from .predictor import (
    ConfusionMatrix,
    PredictorModel,
    ReducedSchema,
    cross_validate,
    fit,
    fit_table,
    optimize_cutpoint,
    predict_proba,
    roc_sweep,
)

__all__ = [
    "__version__",
    "Event",
    "Footprint",
    "SchemaError",
    "SchemaViolation",
    "Variable",
    "VariableSchema",
    "ActiveOutcomeTable",
    "EventMass",
    "PriorConfig",
    "TableFormatError",
    "build_table",
    "event_mass",
    "footprint_schema",
    "CorrelationMatrix",
    "EventPosterior",
    "ExpFitError",
    "InconsistentMassError",
    "RiskTable",
    "UndefinedConditionalError",
    "conditional",
    "correlation",
    "correlation_matrix",
    "cross_events",
    "fit_exponential",
    "marginal",
    "mortality_decomposition",
    "risk_table",
    "IngestReport",
    "Mapping",
    "MappingError",
    "bundled_mapping",
    "emit_csv",
    "ingest",
    "load_mapping",
    "ConfusionMatrix",
    "PredictorModel",
    "ReducedSchema",
    "cross_validate",
    "fit",
    "fit_table",
    "optimize_cutpoint",
    "predict_proba",
    "roc_sweep",
]

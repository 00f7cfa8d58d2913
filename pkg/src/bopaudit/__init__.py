"""Audit whether personalizing a model with group attributes benefits every group."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AuditDataset,
    BopReport,
    CostKind,
    CostVector,
    GroupTable,
    Task,
    bop_report,
    group_cost,
    group_cost_rank,
    index_groups,
    individual_costs,
)
from .stats import (  # noqa: E402
    Family,
    hypothesis_test,
    lambert_w0,
    max_attributes,
    min_reliable_epsilon,
    pe_bound_categorical,
    pe_bound_gaussian,
    pe_bound_gen_gaussian,
    pe_bound_laplace,
)

__all__ = [
    "AuditDataset",
    "BopReport",
    "CostKind",
    "CostVector",
    "Family",
    "GroupTable",
    "Task",
    "bop_report",
    "group_cost",
    "group_cost_rank",
    "hypothesis_test",
    "index_groups",
    "individual_costs",
    "lambert_w0",
    "max_attributes",
    "min_reliable_epsilon",
    "pe_bound_categorical",
    "pe_bound_gaussian",
    "pe_bound_gen_gaussian",
    "pe_bound_laplace",
]

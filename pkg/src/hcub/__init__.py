"""hcub: batch h-adaptive multidimensional cubature over hyper-rectangles.

The library integrates functions on axis-aligned boxes with fully
symmetric embedded cubature rules, refining whole batches of subregions
per iteration, and can spread irregular refinement work across several
workers through a capped donor/receiver redistribution protocol.
"""

__version__ = "0.1.0"

from .regions import HyperRect, RegionRecord, RegionStore, split, uniform_partition, volume
from .rules import (
    RuleEvaluation,
    RuleTable,
    UnsupportedDimensionError,
    apply_rule,
    apply_rule_batch,
    build_gk_tensor_rule,
    build_gm_rule,
    get_rule,
    load_rule_table,
    parse_rule_table,
    select_axis,
)
from .driver import (
    DriverConfig,
    GlobalEstimate,
    IntegrationResult,
    IterationTrace,
    TerminationReason,
    VolumeBudgetClassifier,
    check_convergence,
    integrate,
)
from .distributed import (
    DistributedResult,
    MetadataRecord,
    ProtocolError,
    RedistributionConfig,
    TimeBreakdown,
    TransferBatch,
    WorkerState,
    fair_share,
    metadata_reduce,
    plan_transfer,
    round_robin_pairs,
    run_distributed,
)
from .integrands import (
    FUNCTION_IDS,
    BenchmarkIntegrand,
    make_integrand,
    make_product_peak,
    reference_integral,
)
from .experiments import (
    ExperimentSpec,
    SpecError,
    run_accuracy_sweep,
    run_idle_breakdown,
    run_scaling_sweep,
)

__all__ = [
    "__version__",
    "HyperRect",
    "RegionRecord",
    "RegionStore",
    "split",
    "uniform_partition",
    "volume",
    "RuleEvaluation",
    "RuleTable",
    "UnsupportedDimensionError",
    "apply_rule",
    "apply_rule_batch",
    "build_gk_tensor_rule",
    "build_gm_rule",
    "get_rule",
    "load_rule_table",
    "parse_rule_table",
    "select_axis",
    "DriverConfig",
    "GlobalEstimate",
    "IntegrationResult",
    "IterationTrace",
    "TerminationReason",
    "VolumeBudgetClassifier",
    "check_convergence",
    "integrate",
    "DistributedResult",
    "MetadataRecord",
    "ProtocolError",
    "RedistributionConfig",
    "TimeBreakdown",
    "TransferBatch",
    "WorkerState",
    "fair_share",
    "metadata_reduce",
    "plan_transfer",
    "round_robin_pairs",
    "run_distributed",
    "FUNCTION_IDS",
    "BenchmarkIntegrand",
    "make_integrand",
    "make_product_peak",
    "reference_integral",
    "ExperimentSpec",
    "SpecError",
    "run_accuracy_sweep",
    "run_idle_breakdown",
    "run_scaling_sweep",
]

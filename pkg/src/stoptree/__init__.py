"""Exact optimal single, double, and d-fold stopping on finite event trees."""
from .market_model import (
    CapExceededError,
    InfeasibleError,
    ModelValidationError,
    MultiReward,
    Node,
    NodeProcess,
    StoppingTime,
    TreeModel,
    build_binomial_lattice,
    build_tree_from_spec,
    conditional_expectation,
    count_stopping_times,
    dump_model,
    enumerate_stopping_times,
    instance_fingerprint,
    load_model,
    stopping_time_value,
)
from .multiple_stopping import (
    MinimalityReport,
    MultiStoppingTuple,
    NestedValue,
    SolveReport,
    assemble_optimal_tuple,
    new_reward,
    solve_multi,
    tuple_order_below,
    tuple_order_compare,
    tuple_value,
    u_component,
    verify_minimal_optimal,
)
from .oracle import CertificationVerdict, OracleReport, brute_force_value, certify
from .single_stopping import (
    CriteriumReport,
    SnellSolution,
    check_optimality,
    lambda_stop,
    lambda_threshold,
    minimal_optimal_stop,
    snell_solve,
)
from .symmetric_swing import (
    SwingSolution,
    SymmetricSolution,
    swing_solve,
    symmetric_backward,
)

__version__ = "0.1.0"

__all__ = [
    "CapExceededError",
    "CertificationVerdict",
    "CriteriumReport",
    "InfeasibleError",
    "MinimalityReport",
    "ModelValidationError",
    "MultiReward",
    "MultiStoppingTuple",
    "NestedValue",
    "Node",
    "NodeProcess",
    "OracleReport",
    "SnellSolution",
    "SolveReport",
    "StoppingTime",
    "SwingSolution",
    "SymmetricSolution",
    "TreeModel",
    "assemble_optimal_tuple",
    "brute_force_value",
    "build_binomial_lattice",
    "build_tree_from_spec",
    "certify",
    "check_optimality",
    "conditional_expectation",
    "count_stopping_times",
    "dump_model",
    "enumerate_stopping_times",
    "instance_fingerprint",
    "lambda_stop",
    "lambda_threshold",
    "load_model",
    "minimal_optimal_stop",
    "new_reward",
    "snell_solve",
    "solve_multi",
    "stopping_time_value",
    "swing_solve",
    "symmetric_backward",
    "tuple_order_below",
    "tuple_order_compare",
    "tuple_value",
    "u_component",
    "verify_minimal_optimal",
]

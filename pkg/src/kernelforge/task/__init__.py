from .graph import (
    EW_BINARY_OPS,
    EW_OPS,
    MAX_ELEMENTS,
    NODE_KINDS,
    REDUCTION_OPS,
    GraphValidationError,
    OperatorNode,
    OperatorTask,
    OpGraph,
    TensorSpec,
    ValidationResult,
    consumers,
    infer_node_shape,
    infer_shapes,
    input_ref_index,
    is_input_ref,
    node_arity,
    output_shapes,
    validate_graph,
)
from .interp import (
    NonFiniteError,
    allclose,
    evaluate_graph,
    evaluate_reference,
    generate_graph_inputs,
    generate_inputs,
    outputs_allclose,
)
from .serialize import (
    TaskFormatError,
    dumps_task,
    graph_digest,
    graph_from_dict,
    graph_to_dict,
    load_task,
    loads_task,
    save_task,
    task_digest,
    task_from_dict,
    task_to_dict,
)

__all__ = [
    "EW_BINARY_OPS",
    "EW_OPS",
    "MAX_ELEMENTS",
    "NODE_KINDS",
    "REDUCTION_OPS",
    "GraphValidationError",
    "NonFiniteError",
    "OperatorNode",
    "OperatorTask",
    "OpGraph",
    "TaskFormatError",
    "TensorSpec",
    "ValidationResult",
    "allclose",
    "consumers",
    "dumps_task",
    "evaluate_graph",
    "evaluate_reference",
    "generate_graph_inputs",
    "generate_inputs",
    "graph_digest",
    "graph_from_dict",
    "graph_to_dict",
    "infer_node_shape",
    "infer_shapes",
    "input_ref_index",
    "is_input_ref",
    "load_task",
    "loads_task",
    "node_arity",
    "output_shapes",
    "outputs_allclose",
    "save_task",
    "task_digest",
    "task_from_dict",
    "task_to_dict",
    "validate_graph",
]

from .costmodel import (
    BYTES_PER_ELEMENT,
    FUSIBLE_KINDS,
    PARAM_KEYS,
    CostModelParams,
    PartitionError,
    compiled_partition,
    cost_compiled,
    cost_eager,
    cost_of_partition,
    greedy_fuse,
    noisy_samples,
    singleton_partition,
    validate_partition,
)
from .executor import (
    PROFILE_REPEATS,
    PROFILE_WARMUP,
    VERIFY_ATOL,
    VERIFY_RTOL,
    VERIFY_SEED_COUNT,
    BaselineTimes,
    Executor,
    MeasurementReport,
    SimulatedExecutor,
    failure_report,
    verification_seeds,
    verify_graphs,
)
from .protocol import (
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    ExecutorServer,
    ExecutorUnavailable,
    ProtocolError,
    RemoteExecutor,
    parse_address,
    recv_frame,
    send_frame,
    serve_connection,
)
from .rewrites import (
    RULES,
    AppliedCandidate,
    CandidateError,
    KernelCandidate,
    RewriteApplication,
    apply_candidate,
)

__all__ = [
    "BYTES_PER_ELEMENT",
    "FUSIBLE_KINDS",
    "MAX_FRAME_BYTES",
    "PARAM_KEYS",
    "PROFILE_REPEATS",
    "PROFILE_WARMUP",
    "PROTOCOL_VERSION",
    "RULES",
    "VERIFY_ATOL",
    "VERIFY_RTOL",
    "VERIFY_SEED_COUNT",
    "AppliedCandidate",
    "BaselineTimes",
    "CandidateError",
    "CostModelParams",
    "Executor",
    "ExecutorServer",
    "ExecutorUnavailable",
    "KernelCandidate",
    "MeasurementReport",
    "PartitionError",
    "ProtocolError",
    "RemoteExecutor",
    "RewriteApplication",
    "SimulatedExecutor",
    "apply_candidate",
    "compiled_partition",
    "cost_compiled",
    "cost_eager",
    "cost_of_partition",
    "failure_report",
    "greedy_fuse",
    "noisy_samples",
    "parse_address",
    "recv_frame",
    "send_frame",
    "serve_connection",
    "singleton_partition",
    "validate_partition",
    "verification_seeds",
    "verify_graphs",
]

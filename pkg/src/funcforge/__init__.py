"""funcforge: train LLM agents by optimizing their function set."""

from .actions import (
    AddFunction,
    OptimizerAction,
    RemoveFunction,
    ReviseFunction,
    StepTranscript,
    Terminate,
    parse_action,
    progressive_update,
    tool_schemas,
)
from .agents import (
    AgentLimits,
    AgentOutcome,
    ReActAgent,
    Task,
    ToolCallAgent,
    check_answer,
    parse_react,
)
from .backend import (
    Cassette,
    ChatRequest,
    ChatResponse,
    LiveBackend,
    Message,
    RecordingBackend,
    ReplayBackend,
    ToolCall,
    record,
    request_digest,
    text_response,
    tool_call_response,
)
from .bounds import generalization_bound, hoeffding_gap_bound, min_train_size
from .datasets import Dataset, load_tasks, save_tasks, split
from .execution import ExecRequest, ExecResponse, StubExecutor, SubprocessExecutor
from .prompts import (
    PromptContext,
    TruncationPolicy,
    format_percent,
    render_failure_ledger,
    render_optimizer_prompt,
    render_react_prompt,
    render_statistic,
    truncate_history,
)
from .registry import (
    FunctionSet,
    FunctionSpec,
    Snapshot,
    apply_mutation,
    canonical_json,
    canonically_equal,
    load,
    render_signatures,
    restore,
    save,
    snapshot,
)
from .reporting import UsageStats, emit_learning_curve, emit_usage_csv, function_usage_stats
from .trainer import (
    EpochRecord,
    EvalPoint,
    FailureLedger,
    TrainerConfig,
    TrainResult,
    evaluate,
    sample_batch,
    train,
    train_batched,
)

__version__ = "0.1.0"

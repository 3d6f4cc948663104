"""
Run trace for tool calls.
Records every tool invocation with inputs, a short output digest, timing, and status.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)


def _digest(value: Any) -> Any:
    """Compact, printable stand-in for large arguments and results."""
    if isinstance(value, np.ndarray):
        return f"ndarray{value.shape}"
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return value if len(value) <= 8 else f"{type(value).__name__}[{len(value)}]"
    return type(value).__name__


@dataclass
class ToolCall:
    """Single tool invocation record."""
    tool_name: str
    inputs: Dict[str, Any]
    output: Any = None
    status: str = "pending"  # pending | success | error
    timestamp: float = field(default_factory=time.perf_counter)
    duration_ms: float = 0.0
    error: Optional[str] = None


class RunTrace:
    """Tracks the sequence of tool calls made by one subcommand."""

    def __init__(self):
        self.calls: List[ToolCall] = []

    def start_call(self, tool_name: str, inputs: Dict[str, Any]) -> int:
        """Register a new tool call. Returns its index."""
        call = ToolCall(tool_name=tool_name, inputs={k: _digest(v) for k, v in inputs.items()})
        self.calls.append(call)
        logger.debug("tool %s started", tool_name)
        return len(self.calls) - 1

    def end_call(self, index: int, output: Any, error: Optional[str] = None):
        """Finalize a tool call with its output or error."""
        call = self.calls[index]
        call.output = _digest(output)
        call.duration_ms = round((time.perf_counter() - call.timestamp) * 1000, 1)
        call.status = "error" if error else "success"
        call.error = error

    def summary(self) -> List[Dict[str, Any]]:
        return [{"tool": c.tool_name, "status": c.status, "duration_ms": c.duration_ms, "error": c.error}
                for c in self.calls]

    def log_summary(self, level: int = logging.INFO):
        for row in self.summary():
            suffix = f" ({row['error']})" if row["error"] else ""
            logger.log(level, "trace: %-28s %-7s %8.1f ms%s", row["tool"], row["status"],
                       row["duration_ms"], suffix)


# ---------- Dispatch ----------
def check_schema(tool_name: str, schema: Optional[Dict[str, Any]], kwargs: Dict[str, Any]):
    """Reject arguments the tool's schema does not declare."""
    if schema is None:
        return
    unknown = sorted(set(kwargs) - set(schema))
    if unknown:
        raise TypeError(f"{tool_name} got undeclared arguments {unknown}; schema allows {sorted(schema)}")


def dispatch(trace: RunTrace, registry: Dict[str, Any], tool_name: str, **kwargs) -> Any:
    """Execute a registered tool and record it in the trace.

    Args:
        trace: RunTrace instance for recording.
        registry: Maps tool names to ``(callable, schema parameters or None)``.
        tool_name: Name of the tool to call.
        **kwargs: Arguments to pass to the tool.

    Returns:
        The tool's output. Failures are recorded and re-raised.
    """
    idx = trace.start_call(tool_name, kwargs)
    try:
        fn, schema = registry[tool_name]
        check_schema(tool_name, schema, kwargs)
        result = fn(**kwargs)
        trace.end_call(idx, result)
        return result
    except Exception as e:
        trace.end_call(idx, None, error=f"{type(e).__name__}: {e}")
        logger.debug("tool %s failed: %s", tool_name, e)
        raise

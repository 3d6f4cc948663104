import numpy as np
import pytest

from utils.trace import RunTrace, check_schema, dispatch


def _square(x):
    return x * x


def _explode(x):
    raise ValueError("boom")


REGISTRY = {
    "square": (_square, {"x": {"type": "number"}}),
    "explode": (_explode, None),
}


def test_dispatch_records_success():
    trace = RunTrace()
    assert dispatch(trace, REGISTRY, "square", x=3) == 9
    call = trace.calls[0]
    assert (call.tool_name, call.status, call.output) == ("square", "success", 9)
    assert call.duration_ms >= 0.0
    assert [row["status"] for row in trace.summary()] == ["success"]


def test_dispatch_records_and_reraises_errors():
    trace = RunTrace()
    with pytest.raises(ValueError):
        dispatch(trace, REGISTRY, "explode", x=1)
    assert trace.calls[0].status == "error"
    assert trace.summary()[0]["error"] == "ValueError: boom"


def test_undeclared_arguments_are_rejected():
    trace = RunTrace()
    with pytest.raises(TypeError, match="undeclared"):
        dispatch(trace, REGISTRY, "square", x=2, y=1)
    check_schema("free", None, {"anything": 1})


def test_large_values_are_digested():
    trace = RunTrace()
    dispatch(trace, {"id": (lambda a: a, None)}, "id", a=np.zeros((3, 4)))
    call = trace.calls[0]
    assert call.inputs["a"] == "ndarray(3, 4)"
    assert call.output == "ndarray(3, 4)"

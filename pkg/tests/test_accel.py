import numpy as np
import pytest

from tools.jump_process import _edge_arrays, _gillespie_chunk
from utils.accel import jit_now, maybe_jit, numba_requested


def test_switch_reads_environment(monkeypatch):
    monkeypatch.delenv("SIMPLEXDIFF_USE_NUMBA", raising=False)
    assert not numba_requested()
    monkeypatch.setenv("SIMPLEXDIFF_USE_NUMBA", "yes")
    assert numba_requested()


def test_maybe_jit_is_identity_when_off(monkeypatch):
    monkeypatch.setenv("SIMPLEXDIFF_USE_NUMBA", "0")

    def f(x):
        return x + 1

    assert maybe_jit(f) is f


def _run(kernel, network, counts, uniforms):
    src, dst, rate, _ = _edge_arrays(network)
    times = np.empty(uniforms.size // 2)
    edges = np.empty(uniforms.size // 2, dtype=np.int64)
    counts = counts.copy()
    n, t, status = kernel(counts, src, dst, rate, 0.0, 5.0, uniforms, times, edges)
    return n, t, status, counts, times[:n], edges[:n]


def test_compiled_gillespie_kernel_matches_python(ring3):
    pytest.importorskip("numba")
    uniforms = np.random.default_rng(4).random(2048)
    counts = np.array([30, 0, 0], dtype=np.int64)
    plain = _run(_gillespie_chunk, ring3, counts, uniforms)
    compiled = _run(jit_now(_gillespie_chunk), ring3, counts, uniforms)
    assert plain[0] == compiled[0] and plain[2] == compiled[2]
    assert compiled[1] == pytest.approx(plain[1], rel=1e-13)
    np.testing.assert_array_equal(plain[3], compiled[3])
    np.testing.assert_allclose(plain[4], compiled[4], rtol=1e-13)
    np.testing.assert_array_equal(plain[5], compiled[5])

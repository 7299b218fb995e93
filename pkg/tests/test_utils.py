import numpy as np

from contraction_cert.utils import config
from contraction_cert.utils.parallel import map_items, map_points, max_reduce
from contraction_cert.utils.run_metrics import get_run_metrics


def test_env_helpers(monkeypatch):
    monkeypatch.setenv("CC_TEST_INT", " 12 ")
    monkeypatch.setenv("CC_TEST_BAD", "abc")
    monkeypatch.setenv("CC_TEST_FLOAT", "2.5e-3")
    monkeypatch.setenv("CC_TEST_BOOL", "Yes")
    assert config._int_env("CC_TEST_INT", 1) == 12
    assert config._int_env("CC_TEST_BAD", 7) == 7
    assert config._int_env("CC_TEST_MISSING", 3) == 3
    assert config._float_env("CC_TEST_FLOAT", 1.0) == 2.5e-3
    assert config._float_env("CC_TEST_BAD", 1.0) == 1.0
    assert config._bool_env("CC_TEST_BOOL") is True
    assert config._bool_env("CC_TEST_MISSING", True) is True


def test_run_metrics_counters_and_errors():
    metrics = get_run_metrics()
    metrics.increment_counter("integration_steps", 5)
    metrics.increment_counter("integration_steps")
    metrics.record_error("fixed_point", "did not converge", "t=1.5")
    snap = metrics.snapshot()
    assert snap["counters"] == {"integration_steps": 6}
    assert snap["last_errors"][0] == {"type": "fixed_point", "error": "did not converge", "entity_id": "t=1.5"}
    metrics.reset()
    assert metrics.snapshot() == {"counters": {}, "last_errors": []}


def test_parallel_maps_preserve_order():
    pts = np.arange(12, dtype=float).reshape(6, 2)
    serial = map_points(lambda p: p.sum(), pts, threads=1)
    threaded = map_points(lambda p: p.sum(), pts, threads=3)
    assert serial.tolist() == threaded.tolist()
    value, idx, _ = max_reduce(lambda p: -abs(p[0] - 4.0), pts, threads=2)
    assert (value, idx) == (0.0, 2)
    assert map_items(lambda s: s.upper(), ["a", "b", "c"], threads=2) == ["A", "B", "C"]

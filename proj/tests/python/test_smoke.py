import json

import pytest

import fedirr


def test_soil_examples():
    s = fedirr.SoilState()
    s.moisture, s.et_coeff = 0.4, 0.05
    assert fedirr.et_loss(s, 2.0) == pytest.approx(0.04)
    s2 = fedirr.SoilState()
    s2.saturation, s2.moisture, s2.field_capacity, s2.drain_coeff = 0.6, 0.5, 0.3, 0.2
    assert fedirr.drainage_loss(s2) == pytest.approx(0.04)
    state, report = fedirr.step_soil(fedirr.SoilState(), 0.02, 0.01, 1.2, 1.0)
    assert abs((state.moisture - 0.25) - report["net_rate"]) < 1e-12


def test_scenarios():
    heavy = fedirr.make_scenario("rain-heavy", 24, 7)
    dry = fedirr.make_scenario("dry-spell", 24, 7)
    assert heavy == fedirr.make_scenario("rain-heavy", 24, 7)
    assert sum(r for r, _ in heavy) > sum(r for r, _ in dry)
    with pytest.raises(fedirr.FedirrError):
        fedirr.make_scenario("monsoon", 3, 1)


def test_sensor():
    assert fedirr.analog_read(0.5) == 512
    assert fedirr.digital_read(204) is True
    assert fedirr.digital_read(205) is False
    counts = [fedirr.analog_read(i / 100) for i in range(101)]
    assert counts == sorted(counts)


def test_learning():
    assert fedirr.predict([2.0, 3.0, 1.0], [0.5, 0.5]) == 3.5
    assert fedirr.aggregate([[0.0], [4.0]], [1, 3]) == [3.0]
    x = [[0.0], [1.0], [2.0], [3.0]]
    y = [1.0, 3.0, 5.0, 7.0]
    w, loss = fedirr.local_train([0.0, 0.0], x, y, local_epochs=2000, learning_rate=0.05)
    assert w == pytest.approx([2.0, 1.0], abs=1e-6)
    assert loss < 1e-10


def test_protocol():
    assert fedirr.heartbeat_frame("n1") == b'{"type":"heartbeat","client_id":"n1"}'
    assert fedirr.roundtrip_update("n1", 0, [0.1, 1 / 3], 5, 0.0) == [0.1, 1 / 3]
    assert fedirr.DRY_MESSAGE == "ALERT: The soil moisture is dry"


def test_demo_and_compare(tmp_path):
    cfg = json.loads(fedirr.default_config())
    cfg.update(nodes=2, ticks=48, warmup_ticks=96)
    cfg["server"]["validation_ticks"] = 24
    res = fedirr.run_demo(json.dumps(cfg), str(tmp_path / "a"))
    assert len(res["nodes"]) == 2
    assert res["total"]["wasted_liters"] >= 0
    assert (tmp_path / "a" / "telemetry" / "n1.csv").exists()
    fedirr.run_demo(json.dumps(cfg), str(tmp_path / "b"))
    rows = fedirr.compare(str(tmp_path / "a"), str(tmp_path / "b"))
    assert rows and all(r["delta_pct"] == 0.0 for r in rows)

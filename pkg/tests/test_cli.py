import json

import pytest

from contraction_cert.main import build_parser, main


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(path)


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


# =========================
# lognorm
# =========================

def test_lognorm_identity_linf(tmp_path, capsys):
    path = _write(tmp_path, "eye.json", [[1, 0], [0, 1]])
    code, report = _run(capsys, ["lognorm", path, "--norm", "linf", "--no-timestamp"])
    assert code == 0
    assert report["status"] == "ok"
    assert report["result"]["lognorm"] == pytest.approx(1.0)
    assert "timestamp" not in report


def test_lognorm_skew_matrix_l2(tmp_path, capsys):
    path = _write(tmp_path, "skew.json", {"A": [[0, 1], [-1, 0]]})
    code, report = _run(capsys, ["lognorm", path, "--norm", "l2"])
    assert code == 0
    assert report["result"]["lognorm"] == pytest.approx(0.0, abs=1e-12)
    assert report["result"]["spectral"]["alpha"] == pytest.approx(0.0, abs=1e-12)


def test_lognorm_malformed_input(tmp_path, capsys):
    path = _write(tmp_path, "bad.json", "[[1, 0],")
    code, report = _run(capsys, ["lognorm", path])
    assert code == 2
    assert report["status"] == "error"
    assert report["result"]["error"] == "SpecFileError"


def test_lognorm_norm_dimension_mismatch(tmp_path, capsys):
    eta = _write(tmp_path, "eta.json", [1.0, 2.0, 3.0])
    path = _write(tmp_path, "eye.json", [[1, 0], [0, 1]])
    code, report = _run(capsys, ["lognorm", path, "--norm", f"winf:{eta}"])
    assert code == 3
    assert report["result"]["error"] == "DimensionError"


def test_reruns_are_byte_identical(tmp_path, capsys):
    path = _write(tmp_path, "m.json", [[-1, 2], [0.5, -3]])
    main(["lognorm", path, "--no-timestamp"])
    first = capsys.readouterr().out
    main(["lognorm", path, "--no-timestamp"])
    assert capsys.readouterr().out == first


# =========================
# certify
# =========================

def test_certify_firing_rate(tmp_path, capsys):
    path = _write(tmp_path, "fr.json", {"system": {"firing_rate": {"A": [[0.25, 0.25], [0.25, 0.25]], "C": [[1, 0], [0, 1]]}}})
    out_dir = tmp_path / "out"
    code, report = _run(capsys, ["certify", path, "--out", str(out_dir)])
    assert code == 0
    assert report["status"] == "found"
    cert = report["result"]["certificate"]
    assert cert["rate"] == pytest.approx(0.5)
    assert cert["norm"] == {"kind": "linf"}
    assert (out_dir / "certificate.json").exists()


def test_certify_unstable_lure(tmp_path, capsys):
    path = _write(
        tmp_path,
        "lure.json",
        {"system": {"lure": {"A": [[1, 0], [0, 1]], "B": [[1], [0]], "C": [[1, 0]], "eta_rate": 0.5}}},
    )
    code, report = _run(capsys, ["certify", path])
    assert code == 1
    assert report["status"] == "not_found"
    assert report["result"]["message"] == "no certificate found"


def test_certify_network(tmp_path, capsys):
    path = _write(tmp_path, "net.json", {"system": {"network": {"blocks": [2, 2], "gains": [[0, 1], [1, 0]]}}})
    code, report = _run(capsys, ["certify", path])
    assert code == 0
    assert report["result"]["certificate"]["rate"] == pytest.approx(1.0, abs=1e-8)
    assert report["result"]["network_rate"] == pytest.approx(1.0)


def test_certify_linear_with_requested_norm(tmp_path, capsys):
    path = _write(tmp_path, "lin.json", {"system": {"linear": {"A": [[-2, 1], [0, -3]]}}, "norm": "linf"})
    code, report = _run(capsys, ["certify", path])
    assert code == 0
    assert report["result"]["certificate"]["rate"] == pytest.approx(1.0)
    assert report["result"]["certificate"]["method"] == "ClosedForm"


# =========================
# simulate
# =========================

def _scalar_sim(**simulation):
    return {"system": {"linear": {"A": [[-1.0]]}}, "simulation": {"t_span": [0, 10], "dt": 1e-3, **simulation}}


def test_simulate_iiss_passes(tmp_path, capsys):
    spec = _scalar_sim(
        x0=[0.0],
        y0=[0.0],
        input={"kind": "constant", "value": [1.0]},
        input_y={"kind": "constant", "value": [0.0]},
        rate=1.0,
        ell=1.0,
    )
    path = _write(tmp_path, "iiss.json", spec)
    out_dir = tmp_path / "out"
    code, report = _run(capsys, ["simulate", path, "--check", "iiss", "--out", str(out_dir)])
    assert code == 0
    assert report["status"] == "pass"
    assert (out_dir / "trajectory_x.csv").read_text().startswith("t,x_1,theta_1\n")


def test_simulate_overstated_rate_fails(tmp_path, capsys):
    path = _write(tmp_path, "inc.json", _scalar_sim(x0=[1.0], y0=[0.0], rate=2.0))
    code, report = _run(capsys, ["simulate", path])
    assert code == 1
    assert report["status"] == "fail"
    assert report["result"]["passes"] is False


def test_simulate_checks_fallback_certificate_in_its_own_norm(tmp_path, capsys):
    # μ₂(A) = 4: el certificado sale en una norma ponderada, no en la ℓ2 pedida
    spec = {
        "system": {"linear": {"A": [[-1.0, 10.0], [0.0, -1.0]]}},
        "norm": "l2",
        "simulation": {"t_span": [0, 5], "dt": 1e-3, "x0": [0.0, 1.0], "y0": [0.0, 0.0]},
    }
    path = _write(tmp_path, "fallback.json", spec)
    code, report = _run(capsys, ["simulate", path, "--no-timestamp"])
    assert code == 0
    assert report["status"] == "pass"
    result = report["result"]
    assert result["rate_source"].startswith("certificate")
    assert result["norm"]["kind"] != "l2"
    assert result["requested_norm"] == {"kind": "l2"}


def test_simulate_explicit_rate_keeps_requested_norm(tmp_path, capsys):
    path = _write(tmp_path, "inc.json", {**_scalar_sim(x0=[1.0], y0=[0.0], rate=1.0), "norm": "linf"})
    code, report = _run(capsys, ["simulate", path])
    assert code == 0
    assert report["result"]["norm"] == {"kind": "linf"}
    assert "requested_norm" not in report["result"]


def test_simulate_network_is_rejected(tmp_path, capsys):
    spec = {"system": {"network": {"blocks": [1], "gains": [[0]]}}, "simulation": {"t_span": [0, 1]}}
    path = _write(tmp_path, "net.json", spec)
    code, report = _run(capsys, ["simulate", path])
    assert code == 3
    assert report["result"]["field"] == "system.network"


def test_simulate_blow_up_exit_code(tmp_path, capsys):
    path = _write(tmp_path, "up.json", {"system": {"linear": {"A": [[1.0]]}}, "simulation": {"x0": [1.0], "y0": [0.0], "rate": 1.0}})
    # con h = 1, RK4 multiplica por ~2.7 en cada paso: desborda antes de t = 1000
    code, report = _run(capsys, ["simulate", path, "--tspan", "0,1000", "--dt", "1"])
    assert code == 4
    assert report["status"] == "error"
    assert report["result"]["error"] == "IntegrationBlowUp"
    assert 0.0 < report["result"]["time"] <= 1000.0


# =========================
# scan
# =========================

def test_scan_double_well(tmp_path, capsys):
    path = _write(tmp_path, "dw.json", {"system": {"gradient_flow": {"double_well": [1.0]}}})
    out_dir = tmp_path / "out"
    code, report = _run(capsys, ["scan", path, "--grid", "11", "--out", str(out_dir), "--no-timestamp"])
    assert code == 0
    assert report["status"] == "found"
    assert report["result"]["ball"]["radius"] == pytest.approx(0.4)
    lines = (out_dir / "mu_field.csv").read_text().splitlines()
    assert lines[0] == "x_1,mu"
    assert len(lines) == 12


def test_scan_grid_rejects_high_dimension(tmp_path, capsys):
    A = [[-1.0 if i == j else 0.0 for j in range(5)] for i in range(5)]
    path = _write(tmp_path, "big.json", {"system": {"linear": {"A": A}}})
    code, report = _run(capsys, ["scan", path, "--grid", "3"])
    assert code == 3
    assert report["result"]["field"] == "--grid"


def test_certify_double_well_points_to_scan(tmp_path, capsys):
    path = _write(tmp_path, "dw.json", {"system": {"gradient_flow": {"double_well": [1.0]}}})
    code, report = _run(capsys, ["certify", path])
    assert code == 1
    assert "scan" in report["result"]["reason"]


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])

import json

import pytest

from serrinlab.cli import convergence_study, main
from serrinlab.geometry import EllipseDomain, build_domain


@pytest.fixture()
def disk_spec(tmp_path):
    path = tmp_path / "disk.json"
    path.write_text(json.dumps({"rho0": 1.0, "modes": []}))
    return str(path)


@pytest.fixture()
def pdisk_spec(tmp_path):
    path = tmp_path / "pdisk.json"
    path.write_text(json.dumps({"rho0": 1.0, "modes": [[2, 0.05, 0.0]]}))
    return str(path)


def test_solve_writes_artifacts(tmp_path, disk_spec):
    out = tmp_path / "run"
    code = main(
        ["--out", str(out), "solve", "--domain", disk_spec,
         "--h-target", "0.1", "--problem", "torsion-dirichlet"]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == 0
    assert any("solve_report.json" in a for a in manifest["artifacts"])
    report = json.loads((out / "solve_report.json").read_text())
    assert abs(report["center_value"] + 0.5) < 1e-5


def test_verify_identity_rigid(tmp_path, disk_spec):
    out = tmp_path / "run"
    code = main(
        ["--out", str(out), "verify-identity", "--identity", "neumann_1_11",
         "--domain", disk_spec, "--h-target", "0.1"]
    )
    assert code == 0
    data = json.loads((out / "identity_neumann_1_11.json").read_text())
    assert data["identity"] == "neumann_1_11"
    assert data["anchor"] == "Eq. (1.11)"
    assert abs(data["abs_residual"]) < 1e-8


def test_verify_identity_tight_tol_fails(tmp_path, pdisk_spec):
    out = tmp_path / "run"
    code = main(
        ["--out", str(out), "verify-identity", "--identity", "general_1_9",
         "--domain", pdisk_spec, "--h-target", "0.1", "--tol", "1e-12"]
    )
    assert code == 2


def test_pointwise_identity(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        ["--out", str(out), "pointwise-identity", "--N", "2,3",
         "--degree", "3", "--cases", "3"]
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6
    assert all("zero_residual=True" in ln for ln in lines)


def test_spectral_command(tmp_path, disk_spec):
    out = tmp_path / "run"
    code = main(
        ["--out", str(out), "spectral", "--domain", disk_spec,
         "--h-target", "0.1"]
    )
    assert code == 0
    data = json.loads((out / "spectral.json").read_text())
    assert abs(data["sigma2"] - 1.0) < 5e-3
    assert abs(data["nu2"] - 3.39) < 0.02


def test_check_bounds_command(tmp_path, pdisk_spec):
    out = tmp_path / "run"
    code = main(
        ["--out", str(out), "check-bounds", "--domain", pdisk_spec,
         "--h-target", "0.1"]
    )
    assert code == 0
    data = json.loads((out / "bounds.json").read_text())
    assert data["geometric"]["quadratic_slack_min"] >= -1e-3
    assert data["l2_bound"]["slack"] >= -1e-3


def test_sweep_csv_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(
            ["--out", str(out), "sweep", "--mode", "2",
             "--amplitudes", "0.05,0.075,0.1,0.15", "--h-target", "0.1"]
        )
        assert code == 0
        outs.append((out / "sweep_records.csv").read_text())
    assert outs[0] == outs[1]


def test_missing_domain_file_is_operational_error(tmp_path):
    code = main(
        ["--out", str(tmp_path / "r"), "solve", "--domain",
         str(tmp_path / "nope.json"), "--h-target", "0.1"]
    )
    assert code == 1


def test_convergence_study_rigid_flag(disk_spec):
    rows, order, flag = convergence_study(
        build_domain(1.0, []), "neumann_1_11", [0.2, 0.1, 0.05]
    )
    assert flag == "rigid"
    assert order is None


def test_convergence_study_classical_ellipse():
    # the ellipse torsion field is a global quadratic, so the identity sits
    # at the converged noise floor on every level
    rows, order, flag = convergence_study(
        EllipseDomain(2.0, 1.0), "classical_1_2", [0.2, 0.1, 0.05]
    )
    assert flag == "converged"
    assert all(r["rel_residual"] <= 1e-6 for r in rows)


def test_convergence_study_perturbed_neumann():
    rows, order, flag = convergence_study(
        build_domain(1.0, [(2, 0.05, 0.0)]), "neumann_1_11", [0.2, 0.1, 0.05]
    )
    assert flag is None
    assert order >= 1.0
    res = [r["rel_residual"] for r in rows]
    assert res[-1] < res[0]


def test_dof_cap_env_var(tmp_path, disk_spec, monkeypatch):
    monkeypatch.setenv("SERRINLAB_DOF_CAP", "100")
    code = main(
        ["--out", str(tmp_path / "r"), "solve", "--domain", disk_spec,
         "--h-target", "0.1"]
    )
    assert code == 1

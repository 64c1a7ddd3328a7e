import csv
import io
import json

import numpy as np
import pytest

from ivem.cli import export_mesh, import_mesh, main
from ivem.mesh import build_mesh, squircle


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def data_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_convergence_csv_shape(capsys):
    code, out, _ = run(["convergence", "--n", "2,4,8", "--no-timing"], capsys)
    assert code == 0
    rows = data_rows(out)
    levels = [r for r in rows if r["row"] == "level"]
    rates = [r for r in rows if r["row"] == "rate"]
    assert [int(r["N"]) for r in levels] == [2, 4, 8]
    assert [r["N"] for r in rates] == ["2-4", "4-8"]
    for r in levels:
        assert float(r["energy_err"]) > 0 and float(r["wall_ms"]) == 0.0
    e = [float(r["energy_err"]) for r in levels]
    assert float(rates[0]["energy_err"]) == pytest.approx(np.log2(e[0] / e[1]))


def test_convergence_reproducible(capsys):
    argv = ["convergence", "--n", "2,4", "--kind", "unfitted", "--no-timing"]
    _, first, _ = run(argv, capsys)
    _, second, _ = run(argv, capsys)
    assert first == second


def test_method_kind_mismatch(capsys):
    code, _, err = run(["convergence", "--method", "ivem", "--kind", "fitted"], capsys)
    assert code == 2 and "requires kind" in err


@pytest.mark.parametrize("bad", [["--n", "3,6"], ["--n", "8,4"], ["--beta-plus", "-1"]])
def test_usage_errors(bad, capsys):
    assert run(["mesh"] + bad, capsys)[0] == 2


def test_assert_exit_code(capsys):
    # two coarse levels stay pre-asymptotic, so the L2 window is missed
    code, _, err = run(["convergence", "--n", "2,4", "--assert", "--no-timing"], capsys)
    assert code == 1 and "rate assertion failed" in err


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": [2, 4], "beta_plus": 3.0, "kind": "unfitted"}))
    _, out, _ = run(["convergence", "--config", str(cfg), "--beta-plus", "5", "--no-timing"], capsys)
    meta = [l for l in out.splitlines() if l.startswith("# method")][0]
    assert "kind=unfitted" in meta and "beta_plus=5.0" in meta
    assert [int(r["N"]) for r in data_rows(out) if r["row"] == "level"] == [2, 4]
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["mesh", "--config", str(cfg)], capsys)[0] == 2


def test_mesh_stats_line(capsys):
    code, out, _ = run(["mesh", "--n", "4"], capsys)
    assert code == 0
    fields = dict(kv.split("=") for kv in out.split())
    assert float(fields["total_volume"]) == pytest.approx(8.0, rel=1e-12)
    assert float(fields["min_piece_volume"]) > 0
    assert int(fields["elements"]) > 64 and int(fields["interface"]) > 0


@pytest.mark.parametrize("kind", ["fitted", "unfitted"])
def test_export_round_trip(kind, tmp_path, capsys):
    path = tmp_path / "mesh.txt"
    assert run(["mesh", "--n", "4", "--kind", kind, "--export", str(path)], capsys)[0] == 0
    text = path.read_text()
    assert ("\nplane " in text) == (kind == "unfitted")
    mesh = import_mesh(io.StringIO(text))
    buf = io.StringIO()
    export_mesh(mesh, buf)
    assert buf.getvalue() == text
    ref = build_mesh(4, squircle(0.1), kind)
    np.testing.assert_array_equal(mesh.vertices, ref.vertices)
    assert mesh.element_volumes().sum() == pytest.approx(8.0, rel=1e-12)


def test_validate_plane_outside(capsys):
    code, out, _ = run(["validate", "--n", "4", "--levelset", "plane", "--plane-offset", "5"], capsys)
    assert code == 0
    rows = data_rows(out)
    assert len(rows) == 64
    for r in rows:
        assert float(r["theta_M_deg"]) == pytest.approx(90.0, abs=1e-9)
        assert r["a2_pass"] == "1"
        assert float(r["inscribed_radius"]) == pytest.approx(0.25, rel=1e-9)
        assert float(r["poincare_ratio"]) <= float(r["poincare_bound"])


def test_validate_cut_family(tmp_path, capsys):
    path = tmp_path / "v.csv"
    code, _, _ = run(["validate", "--n", "4", "--eps", "1e-6", "--output", str(path)], capsys)
    assert code == 0
    text = path.read_text()
    rows = data_rows(text)
    assert max(float(r["theta_M_deg"]) for r in rows) <= 144.000001
    assert all(float(r["poincare_ratio"]) <= float(r["poincare_bound"]) for r in rows)
    summary = text.splitlines()[-1]
    assert summary.startswith("# summary") and "poincare_violations=0" in summary

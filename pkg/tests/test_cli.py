import json
import subprocess
import sys

import numpy as np
import pytest

from oneshot_dpd.cli import main
from oneshot_dpd.datasets import DATASETS, embedded_dataset, format_csv, ingest_csv, parse_csv, write_csv
from oneshot_dpd.errors import DataError
from oneshot_dpd.model import TestPlan


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def _csv_body(text):
    lines = text.splitlines()
    assert lines[0].startswith("# manifest ")
    return json.loads(lines[0][len("# manifest "):]), lines[1:]


# -- datasets -------------------------------------------------------------------


def test_embedded_fan_data(fan):
    assert fan.total_devices == 90 and len(fan) == 9
    c = fan.conditions[2]
    assert (c.tau, c.stress[1], c.devices, c.failures) == (10.0, 1 / 328, 10, 6)
    assert np.all(fan.failures <= fan.devices)


def test_fan_gof_variant_differs_in_one_cell():
    a, b = embedded_dataset("fan2009"), embedded_dataset("fan2009-gof")
    diff = np.flatnonzero(a.failures != b.failures)
    assert diff.size == 1 and b.failures[diff[0]] == 5


def test_sim_design(sim_design):
    assert len(sim_design) == 9 and not sim_design.has_failures
    last = sim_design.conditions[8]
    assert (last.tau, last.stress, last.devices) == (2.5, (1.0, 1.0), 100)


def test_unknown_dataset():
    with pytest.raises(DataError, match="sim-design"):
        embedded_dataset("nope")


@pytest.mark.parametrize("name", sorted(DATASETS))
def test_csv_round_trip(tmp_path, name):
    plan = embedded_dataset(name)
    path = tmp_path / "plan.csv"
    write_csv(plan, path)
    back = ingest_csv(path)
    assert back == plan


def test_csv_round_trip_random(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(5):
        k = rng.integers(1, 50, 6)
        plan = TestPlan.from_arrays(rng.uniform(0.1, 9, 6), rng.uniform(0, 1, (6, 2)), k, rng.integers(0, k + 1))
        assert parse_csv(format_csv(plan)) == plan


@pytest.mark.parametrize("text,match", [
    ("", "empty"),
    ("tau,x1,K,n\n", "no data rows"),
    ("tau,x1,K,n\n1,0.5,10,11\n", "line 2"),
    ("tau,x1,K,n\n1,0.5,10,2\n2,abc,10,1\n", "line 3"),
    ("tau,temp,K,n\n1,0.5,10,2\n", "header"),
    ("tau,x1,K,n\n1,0.5,10,2\n2,0.1,10,\n", "n"),
])
def test_csv_errors(text, match):
    with pytest.raises(DataError, match=match):
        parse_csv(text)


# -- commands -------------------------------------------------------------------


def test_fit_json(capsys):
    code, out = run(capsys, "fit", "--gamma", "0", "0.5")
    assert code == 0
    doc = json.loads(out.out)
    assert doc["manifest"]["command"] == "fit" and doc["manifest"]["gammas"] == [0.0, 0.5]
    first = doc["fits"][0]
    assert first["converged"] and set(first["theta"]) == {"a0", "a1", "b0", "b1"}
    assert first["mean_lifetimes"][-1]["stress"] == [1 / 298]


def test_fit_csv_to_file(tmp_path, capsys):
    out = tmp_path / "fit.csv"
    code, _ = run(capsys, "fit", "--gamma", "0.2", "--format", "csv", "--out", str(out))
    assert code == 0
    meta, lines = _csv_body(out.read_text())
    assert meta["options"]["format"] == "csv"
    assert lines[0].startswith("gamma,a0,a1,b0,b1,se_a0")
    assert len(lines) == 2


def test_wald_and_rao(capsys):
    for cmd in ("test-wald", "test-rao"):
        code, out = run(capsys, cmd, "--dataset", "fan2009", "--gamma", "0.3", "--fix", "b1=0")
        assert code == 0
        res = json.loads(out.out)["results"][0]
        assert res["test"] == cmd[5:] and res["dof"] == 1 and 0 <= res["p_value"] <= 1


def test_gof_at_given_theta(capsys):
    code, out = run(capsys, "gof", "--dataset", "fan2009-gof", "--theta", "-10.6674", "4291.109", "4.3174",
                    "-1202.56")
    assert code == 0
    res = json.loads(out.out)["results"][0]
    assert res["statistic"] == pytest.approx(5.2979, abs=5e-3) and res["dof"] == 15


def test_simulate_csv(capsys):
    code, out = run(capsys, "simulate", "--study", "rmse", "--replications", "2", "--gamma", "0", "1")
    assert code == 0
    meta, lines = _csv_body(out.out)
    assert meta["source"] == "sim-design"
    assert lines[0] == "study,test,gamma,degree,devices,metric,value,replications,excluded"
    assert len(lines) == 1 + 2 * 4


def test_curves_files(tmp_path, capsys):
    code, out = run(capsys, "curves", "--out", str(tmp_path), "--points", "20")
    assert code == 0
    files = sorted(tmp_path.iterdir())
    assert len(files) == 4 and len(out.out.split()) == 4
    meta, lines = _csv_body(files[0].read_text())
    assert lines[0] == "t,pdf,cdf,survival,hazard" and len(lines) == 21
    t, pdf, cdf, surv, haz = map(float, lines[5].split(","))
    assert cdf + surv == pytest.approx(1.0) and haz == pytest.approx(pdf / surv)


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\ngamma = 0.4\nformat = csv\n")
    code, out = run(capsys, "fit", "--config", str(cfg), "--format", "json")
    assert code == 0
    doc = json.loads(out.out)
    assert doc["manifest"]["gammas"] == [0.4]


@pytest.mark.parametrize("argv,code", [
    (["fit", "--gamma", "-1"], 2),
    (["fit", "--dataset", "missing"], 3),
    (["test-wald"], 2),
    (["test-wald", "--fix", "b0"], 2),
    (["bogus"], 2),
    (["fit", "--input", "/nonexistent/file.csv"], 3),
    (["fit", "--max-iterations", "1", "--multistart", "0"], 4),
])
def test_exit_codes(capsys, argv, code):
    assert main(argv) == code
    err = capsys.readouterr().err
    assert err.strip()


def test_bad_input_file_names_row(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("tau,x1,K,n\n1,0.5,10,3\n2,0.7,10,11\n")
    assert main(["fit", "--input", str(path)]) == 3
    assert "line 3" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "oneshot_dpd", "gof", "--dataset", "fan2009", "--gamma", "0"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"][0]["dof"] == 15

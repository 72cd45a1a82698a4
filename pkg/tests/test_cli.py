import json
import shutil
import subprocess

import pytest

from nonlocal_lab import cli


def _run(tmp_path, *args, name="out"):
    out = tmp_path / name
    return cli.main(["run", *args, "--out", str(out)]), out


def test_ko_example(tmp_path, capsys):
    code, out = _run(tmp_path, "ko", "--f", "power", "--p", "2.5", "--s", "0.5")
    assert code == 0
    rows = cli.read_csv(out / "results.csv")
    assert (rows[0]["KO"], rows[0]["L1"], rows[0]["E"]) == (True, True, True)
    assert cli.main(["report", str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all(ln.endswith(" - PASS") for ln in lines)


def test_meta_contents(tmp_path):
    code, out = _run(tmp_path, "ko", "--f", "lower", "--alpha", "1.2", "--seed", "7")
    assert code == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["command"] == "ko" and meta["seed"] == 7
    assert meta["params"]["alpha"] == 1.2 and meta["params"]["p"] is None
    assert set(meta) == {"command", "params", "seed", "out_dir", "tolerances", "version"}


def test_es2_table(tmp_path):
    code, out = _run(tmp_path, "curvature", "--demo", "es2")
    assert code == 0
    rows = cli.read_csv(out / "results.csv")
    assert len(rows) == 721
    assert rows[0]["theta"] == 0.0 and rows[0]["K"] == 0.0
    assert cli.report(out)[0] == 0


def test_wos_rerun_and_meta_round_trip(tmp_path, monkeypatch):
    args = ["wos", "--samples", "4000", "--seed", "11", "--set", "radii=[0.0, 0.5]"]
    assert _run(tmp_path, *args, name="a")[0] == 0
    assert _run(tmp_path, *args, name="b")[0] == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    monkeypatch.setenv("NONLOCAL_LAB_THREADS", "8")
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    meta["out_dir"] = str(tmp_path / "c")
    (tmp_path / "cfg.json").write_text(json.dumps(meta))
    assert cli.main(["run", "--config", str(tmp_path / "cfg.json")]) == 0
    assert (tmp_path / "c" / "results.csv").read_bytes() == a


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "kernels", "params": {"s": 0.3, "dim": 3}}))
    code, out = _run(tmp_path, "--config", str(cfg), "--s", "0.7")
    assert code == 0
    rows = cli.read_csv(out / "results.csv")
    assert rows[0]["s"] == 0.7 and rows[0]["N"] == 3


def test_report_detects_tampering(tmp_path, capsys):
    code, out = _run(tmp_path, "eval", "--demo", "torsion", "--points", "2")
    assert code == 0
    assert cli.main(["report", str(out)]) == 0
    text = (out / "results.csv").read_text().splitlines()
    head, first = text[0].split(","), text[1].split(",")
    first[head.index("value")] = "1.5"
    (out / "results.csv").write_text("\n".join([text[0], ",".join(first), *text[2:]]) + "\n")
    capsys.readouterr()
    assert cli.main(["report", str(out)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_report_missing_files(tmp_path):
    assert cli.main(["report", str(tmp_path)]) == 2
    (tmp_path / "meta.json").write_text("{}")
    (tmp_path / "results.csv").write_text("a\n1\n")
    assert cli.main(["report", str(tmp_path)]) == 2


@pytest.mark.parametrize("args", [
    ["spectral", "--demo", "ladder", "--p", "2", "--s", "0.5"],
    ["eval", "--sigma", "0.9", "--s", "0.3"],
    ["ko", "--f", "lower"],
    ["kernels", "--set", "bogus=1"],
    ["curvature", "--s", "0.5"],
])
def test_precondition_errors(tmp_path, args):
    code, out = _run(tmp_path, *args)
    assert code == 2
    assert not (out / "results.csv").exists()


def test_convergence_error_exit(tmp_path):
    # the Green rule in N = 2 does not resolve delta = 1e-5 to its tolerance
    code, out = _run(tmp_path, "rates", "--dim", "2", "--beta", "0.3")
    assert code == 3


def test_console_script(tmp_path):
    exe = shutil.which("nonlocal-lab")
    if exe is None:
        pytest.skip("console script not installed")
    out = tmp_path / "k"
    res = subprocess.run([exe, "run", "kernels", "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0
    res = subprocess.run([exe, "report", str(out)], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout

import subprocess
import sys

import pandas as pd
import pytest

from qdbell.cli import main
from qdbell.report import parse_report

SMALL = ["--pulses", "20000"]


@pytest.fixture(scope="module")
def event_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("ev") / "events.csv"
    assert main(["simulate", "--config", "noise-calibrated", "--out", str(path), *SMALL]) == 0
    return path


def report(capsys):
    return parse_report(capsys.readouterr().out)


def test_simulate_deterministic(tmp_path, capsys):
    digests = []
    for name in ("a.csv", "b.csv"):
        assert main(["simulate", "--config", "ideal-psi-plus", "--out", str(tmp_path / name),
                     "--pulses", "5000", "--seed", "3"]) == 0
        digests.append(report(capsys)["digest"])
    assert digests[0] == digests[1]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_simulate_seed_changes_output(tmp_path, capsys):
    main(["simulate", "--config", "ideal-psi-plus", "--out", str(tmp_path / "a.csv"),
          "--pulses", "5000", "--seed", "3"])
    main(["simulate", "--config", "ideal-psi-plus", "--out", str(tmp_path / "b.csv"),
          "--pulses", "5000", "--seed", "4"])
    out = capsys.readouterr().out.splitlines()
    digests = [line for line in out if line.startswith("digest")]
    assert digests[0] != digests[1]


def test_simulate_truth_and_timing(tmp_path, capsys):
    path = tmp_path / "t.csv"
    assert main(["simulate", "--config", "noise-calibrated", "--out", str(path), "--pulses",
                 "2000", "--truth", "--timing"]) == 0
    rep = report(capsys)
    assert "elapsed_s" in rep
    assert path.read_text().splitlines()[2].split(",")[-1] in ("dot", "background", "reexcite",
                                                              "dark")


def test_bell_report(event_file, capsys):
    assert main(["bell", str(event_file)]) == 0
    rep = report(capsys)
    for key in ("ungated.fidelity", "gated.fidelity", "gated.S_RC", "gated.gate_xx_start_ns"):
        assert key in rep
    assert float(rep["gated.fidelity"]) > float(rep["ungated.fidelity"])


def test_bell_csv(event_file, capsys, tmp_path):
    out = tmp_path / "bell.csv"
    assert main(["bell", str(event_file), "--gate", "on", "--report", "csv", "--out",
                 str(out)]) == 0
    df = pd.read_csv(out)
    assert set(df["analysis"]) == {"gated"}
    assert "S_RD" in set(df["quantity"])


def test_bell_peak_gate(event_file, capsys):
    assert main(["bell", str(event_file), "--gate", "on", "--gate-placement", "peak"]) == 0
    assert "gated.fidelity" in report(capsys)


def test_bell_figures(event_file, tmp_path, capsys):
    assert main(["bell", str(event_file), "--figures", str(tmp_path)]) == 0
    for name in ("bell.png", "g2_ungated.png", "g2_gated.png"):
        assert (tmp_path / name).stat().st_size > 1000


def test_chsh(event_file, capsys, tmp_path):
    assert main(["chsh", str(event_file), "--figures", str(tmp_path)]) == 0
    rep = report(capsys)
    assert "gated.S_CHSH" in rep
    assert (tmp_path / "chsh.png").exists()


def test_splitting_simulated(capsys, tmp_path):
    scan = tmp_path / "scan.csv"
    assert main(["splitting", "--simulate-S", "0.32", "--seed", "1", "--scan-out", str(scan),
                 "--figures", str(tmp_path)]) == 0
    rep = report(capsys)
    assert rep["below_threshold"] == "true"
    assert (tmp_path / "splitting.png").exists()
    assert main(["splitting", "--scan", str(scan)]) == 0
    assert float(report(capsys)["S_ueV"]) == pytest.approx(float(rep["S_ueV"]), abs=1e-6)


def test_splitting_large(capsys):
    assert main(["splitting", "--simulate-S", "2.0", "--seed", "1"]) == 0
    assert report(capsys)["below_threshold"] == "false"


def test_gate_sweep_config(capsys, tmp_path):
    assert main(["gate-sweep", "--config", "noise-calibrated", "--widths", "0.5,1,2",
                 "--figures", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("gate_xx_ns")
    assert len(text.strip().splitlines()) == 4
    assert (tmp_path / "gate_sweep.png").exists()


def test_gate_sweep_events(event_file, capsys):
    assert main(["gate-sweep", "--events", str(event_file), "--widths", "1"]) == 0
    assert "fidelity_err" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["simulate", "--config", "/nope.cfg", "--out", "x.csv"],
    ["bell", "/nope/events.csv"],
    ["splitting", "--scan", "/nope/scan.csv"],
    ["gate-sweep"],
    ["gate-sweep", "--config", "noise-calibrated", "--widths", "30"],
])
def test_errors(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_negative_seed(tmp_path):
    assert main(["simulate", "--config", "ideal-psi-plus", "--out", str(tmp_path / "x.csv"),
                 "--seed", "-1"]) == 2


def test_bad_gate_width(event_file, capsys):
    assert main(["bell", str(event_file), "--gate-x-ns", "20"]) == 1


def test_chsh_without_settings(tmp_path, capsys):
    cfg = tmp_path / "r.cfg"
    from qdbell.config import preset_text
    cfg.write_text(preset_text("ideal-psi-plus").replace(
        "settings = rectilinear, diagonal, circular, chsh", "settings = rectilinear"))
    ev = tmp_path / "ev.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(ev), "--pulses", "1000"]) == 0
    assert main(["chsh", str(ev)]) == 1


def test_reproduce(tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["reproduce", "--out", str(out), "--pulses", "20000"]) == 0
    for name in ("events.csv", "report.txt", "bell.csv", "chsh.csv", "gate_sweep.csv",
                 "splitting_scan.csv", "bell.png", "chsh.png", "splitting.png",
                 "gate_sweep.png", "g2_ungated.png", "g2_gated.png"):
        assert (out / name).exists(), name


def test_console_entry():
    r = subprocess.run([sys.executable, "-m", "qdbell", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout

import json
import math
import os

import numpy as np
import pytest

from kerrblockade.cli import main

STD = """
[cavity]
omega_rad_s = 1.215e15
q_factor = 1e7
kappa_rad_s = 1.934e8
veff_m3 = 1e-20

[material]
chi3_m2_v2 = 0.45e-18
epsilon_r = 12.1

[blockade]
alpha = 2.0
n = 1
"""


def write_cfg(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestPower:
    def test_standard_chain(self, tmp_path):
        cfg = write_cfg(tmp_path, STD)
        assert main(["power", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "power.csv")
        vals = {r[0]: r[1] for r in rows}
        u = float(vals["u_rad_s"])
        assert abs(u - 4.4e6) / 4.4e6 < 0.15
        assert math.isfinite(float(vals["p1_watt"]))
        assert vals["blockade_possible"] == "true"

    def test_zero_chi3_flags_blockade_impossible(self, tmp_path):
        cfg = write_cfg(tmp_path, STD.replace("chi3_m2_v2 = 0.45e-18",
                                              "chi3_m2_v2 = 0.0"))
        assert main(["power", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "power.csv")
        vals = {r[0]: r[1] for r in rows}
        assert float(vals["u_rad_s"]) == 0.0
        assert vals["blockade_possible"] == "false"

    def test_missing_cavity_section_exit_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "[material]\nchi3_m2_v2 = 1e-19\nepsilon_r = 12.0\n")
        assert main(["power", "--config", cfg, "--out-dir", str(tmp_path)]) == 2
        assert "cavity" in capsys.readouterr().err


class TestSimulate:
    def test_standard_run_outputs(self, tmp_path):
        cfg = write_cfg(tmp_path, STD)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "trajectory.csv")
        assert header == ["t_s", "n_expect", "p0", "p1", "p2", "g2", "trace_err"]
        summary = json.loads((out / "summary.json").read_text())
        assert not summary["failed"]
        assert 0.008 < summary["peak_p1"] < 0.016
        for name in ("init_end", "hold_peak", "hold_end", "final"):
            assert (out / f"state_{name}.csv").exists()
        assert (out / "schedule.csv").exists()

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_cfg(tmp_path, STD)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out-dir", str(out1)]) == 0
        assert main(["simulate", "--config", cfg, "--out-dir", str(out2)]) == 0
        for name in ("trajectory.csv", "summary.json", "schedule.csv",
                     "state_final.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_zero_drive_run(self, tmp_path):
        cfg = write_cfg(tmp_path, STD.replace("alpha = 2.0", "alpha = 0.0"))
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "trajectory.csv")
        icols = {c: header.index(c) for c in header}
        for row in rows:
            assert float(row[icols["n_expect"]]) == pytest.approx(0.0, abs=1e-12)
            assert row[icols["g2"]] == "nan"

    def test_displaced_frame_run(self, tmp_path):
        cfg = write_cfg(tmp_path, STD)
        out = tmp_path / "disp"
        assert main(["simulate", "--config", cfg, "--out-dir", str(out),
                     "--frame", "displaced"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["frame"] == "displaced"
        assert 0.008 < summary["peak_p1"] < 0.016

    def test_truncation_failure_exit_3(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, STD + "\n[protocol]\nlab_dim = 6\n")
        out = tmp_path / "fail"
        assert main(["simulate", "--config", cfg, "--out-dir", str(out)]) == 3
        summary = json.loads((out / "summary.json").read_text())
        assert summary["failed"]
        assert "t_fail_s" in summary


class TestOptimize:
    def test_linear_cavity_single_row(self, tmp_path):
        cfg = write_cfg(tmp_path, STD.replace("chi3_m2_v2 = 0.45e-18",
                                              "chi3_m2_v2 = 0.0"))
        out = tmp_path / "opt0"
        assert main(["optimize", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "loss_curve.csv")
        assert len(rows) <= 2
        assert float(rows[-1][1]) < 1e-3
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final_loss"] < 1e-3

    def test_standard_improves(self, tmp_path):
        cfg = write_cfg(tmp_path, STD + "\n[optimizer]\nmax_iterations = 6\n")
        out = tmp_path / "opt"
        assert main(["optimize", "--config", cfg, "--out-dir", str(out)]) == 0
        _, rows = read_csv(out / "loss_curve.csv")
        losses = [float(r[1]) for r in rows]
        assert losses[-1] < losses[0]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_zero_weights_immediate(self, tmp_path):
        cfg = write_cfg(tmp_path, STD + "\n[optimizer]\nweights = [0.0, 0.0, 0.0, 0.0]\n")
        out = tmp_path / "optz"
        assert main(["optimize", "--config", cfg, "--out-dir", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final_loss"] == 0.0


class TestSweep:
    def test_delta_alpha_sweep(self, tmp_path):
        cfg = write_cfg(tmp_path, STD + """
[sweep]
axis = "delta_alpha"
min = -0.01
max = 0.01
count = 3
metrics = ["g2", "p1_peak"]
""")
        out = tmp_path / "swp"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "sweep.csv")
        assert header[0] == "delta_alpha_frac"
        assert len(rows) == 3
        g2s = [float(r[header.index("g2")]) for r in rows]
        assert all(g < 1e-3 for g in g2s)

    def test_parallel_matches_serial(self, tmp_path):
        text = STD + """
[sweep]
axis = "delta_alpha"
min = -0.01
max = 0.01
count = 4
metrics = ["g2"]
"""
        cfg = write_cfg(tmp_path, text)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out1)]) == 0
        assert main(["sweep", "--config", cfg, "--out-dir", str(out2),
                     "--jobs", "2"]) == 0
        assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()

    def test_hold_err_grid(self, tmp_path):
        cfg = write_cfg(tmp_path, STD + """
[sweep]
axis = "hold_err_grid"
min = -0.1
max = 0.1
count = 2
metrics = ["g2"]
""")
        out = tmp_path / "grid"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "sweep.csv")
        assert header[:2] == ["lambda1_hold_err_frac", "lambda2_hold_err_frac"]
        assert len(rows) == 4

    def test_q_axis_fixed_power(self, tmp_path):
        cfg = write_cfg(tmp_path, STD + """
[sweep]
axis = "q"
min = 3e6
max = 1e7
count = 2
scale = "log"
metrics = ["n_peak"]
fixed_p1_watt = 0.01
""")
        out = tmp_path / "q"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "sweep.csv")
        assert "alpha" in header and "n_peak" in header
        n_peaks = [float(r[header.index("n_peak")]) for r in rows]
        assert n_peaks[1] > n_peaks[0]  # higher Q retains more

    def test_veff_axis_power_at_target(self, tmp_path):
        cfg = write_cfg(tmp_path, STD + """
[sweep]
axis = "veff"
min = 1e-20
max = 1e-19
count = 2
scale = "log"
metrics = ["p1_watt"]
target_n_peak = 0.3
""")
        out = tmp_path / "v"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "sweep.csv")
        p1s = [float(r[header.index("p1_watt")]) for r in rows]
        assert p1s[1] > p1s[0]  # weaker nonlinearity needs more power

    def test_tau_axis(self, tmp_path):
        cfg = write_cfg(tmp_path, STD + """
[sweep]
axis = "tau"
min = 2.5e-11
max = 1e-10
count = 2
metrics = ["loss", "g2"]
""")
        out = tmp_path / "tau"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "sweep.csv")
        assert header[0] == "tau_s"
        for r in rows:
            assert float(r[header.index("loss")]) < 1.0

    def test_lambda1_init_err_axis(self, tmp_path):
        cfg = write_cfg(tmp_path, STD + """
[sweep]
axis = "lambda1_init_err"
min = -0.05
max = 0.05
count = 3
metrics = ["g2", "loss"]
""")
        out = tmp_path / "l1e"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        header, rows = read_csv(out / "sweep.csv")
        g2s = [float(r[header.index("g2")]) for r in rows]
        # ideal point sits at the minimum of the error slice
        assert g2s[1] < g2s[0] and g2s[1] < g2s[2]


class TestWigner:
    def test_vacuum_grid(self, tmp_path):
        cfg = write_cfg(tmp_path, STD)
        out = tmp_path / "wv"
        assert main(["wigner", "--config", cfg, "--out-dir", str(out),
                     "--checkpoint", "vacuum", "--grid-max", "2.0",
                     "--grid-points", "21"]) == 0
        header, rows = read_csv(out / "wigner.csv")
        assert header == ["re", "im", "w"]
        best = max(rows, key=lambda r: float(r[2]))
        assert abs(float(best[2]) - 2 / math.pi) / (2 / math.pi) < 0.01
        assert abs(float(best[0])) < 0.11 and abs(float(best[1])) < 0.11

    def test_fock1_origin(self, tmp_path):
        cfg = write_cfg(tmp_path, STD)
        out = tmp_path / "wf"
        assert main(["wigner", "--config", cfg, "--out-dir", str(out),
                     "--checkpoint", "fock1", "--grid-max", "2.0",
                     "--grid-points", "21"]) == 0
        _, rows = read_csv(out / "wigner.csv")
        origin = [r for r in rows
                  if abs(float(r[0])) < 1e-12 and abs(float(r[1])) < 1e-12]
        assert origin and abs(float(origin[0][2]) + 2 / math.pi) < 0.01

    def test_linear_initialization_checkpoint_peaks_at_alpha(self, tmp_path):
        # linear cavity: the initialized state is the coherent target, so the
        # distribution peaks within one grid cell of (Re alpha, Im alpha)
        cfg = write_cfg(tmp_path, STD.replace("chi3_m2_v2 = 0.45e-18",
                                              "chi3_m2_v2 = 0.0"))
        out = tmp_path / "wlin"
        assert main(["simulate", "--config", cfg, "--out-dir", str(out)]) == 0
        assert main(["wigner", "--config", cfg, "--out-dir", str(out),
                     "--checkpoint", "init_end", "--grid-points", "41"]) == 0
        _, rows = read_csv(out / "wigner.csv")
        best = max(rows, key=lambda r: float(r[2]))
        cell = 2 * 5.0 / 40  # grid spans +-(alpha+3) with 41 points
        assert abs(float(best[0]) - 2.0) <= cell + 1e-9
        assert abs(float(best[1]) - 0.0) <= cell + 1e-9

    def test_unknown_checkpoint_exit_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, STD)
        out = tmp_path / "wu"
        os.makedirs(out, exist_ok=True)
        assert main(["wigner", "--config", cfg, "--out-dir", str(out),
                     "--checkpoint", "nope"]) == 2
        assert "nope" in capsys.readouterr().err

import numpy as np
import pytest

from kerrblockade.config import (
    ConfigError,
    RunConfig,
    default_config_text,
    dump_config,
    parse_config,
)
from kerrblockade.dynamics import DriveSchedule, Segment
from kerrblockade.fock import coherent_state, QuantumState
from kerrblockade.io import (
    ResultTable,
    SCHEDULE_COLUMNS,
    TRAJECTORY_COLUMNS,
    fmt_float,
    schedule_from_csv,
    schedule_to_csv,
    state_from_csv,
    state_to_csv,
)

MINIMAL = """
[cavity]
omega_rad_s = 1.215e15
q_factor = 1e7
veff_m3 = 1e-20

[material]
chi3_m2_v2 = 0.45e-18
epsilon_r = 12.1

[blockade]
alpha = 2.0
n = 1
"""


class TestConfigParsing:
    def test_roundtrip_identity(self):
        cfg = parse_config(MINIMAL)
        again = parse_config(dump_config(cfg))
        assert cfg == again

    def test_default_config_roundtrip(self):
        text = default_config_text()
        assert parse_config(text) == parse_config(dump_config(parse_config(text)))

    def test_kappa_defaults_to_omega_over_q(self):
        cfg = parse_config(MINIMAL)
        assert cfg.cavity.kappa() == pytest.approx(1.215e15 / 1e7)

    def test_kappa_override(self):
        cfg = parse_config(MINIMAL + "\n[protocol]\n")
        assert cfg.cavity.kappa_rad_s is None
        cfg2 = parse_config(MINIMAL.replace("veff_m3 = 1e-20",
                                            "veff_m3 = 1e-20\nkappa_rad_s = 1.934e8"))
        assert cfg2.cavity.kappa() == 1.934e8

    def test_unknown_key_rejected_with_path(self):
        with pytest.raises(ConfigError, match="cavity.q_facter"):
            parse_config(MINIMAL.replace("q_factor", "q_facter"))

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="cavvity"):
            parse_config(MINIMAL.replace("[cavity]", "[cavvity]"))

    def test_required_section_named_in_error(self):
        with pytest.raises(ConfigError, match="cavity"):
            parse_config("[material]\nchi3_m2_v2 = 1e-19\nepsilon_r = 12.0\n",
                         required=("cavity",))

    def test_sweep_validation(self):
        base = MINIMAL + "\n[sweep]\naxis = \"delta_alpha\"\n"
        with pytest.raises(ConfigError, match="sweep.count"):
            parse_config(base + "min = 0.0\nmax = 1.0\ncount = 1\n")
        with pytest.raises(ConfigError, match="sweep.min"):
            parse_config(base + "min = 2.0\nmax = 1.0\ncount = 5\n")
        with pytest.raises(ConfigError, match="sweep.min"):
            parse_config(base + 'min = -1.0\nmax = 1.0\ncount = 5\nscale = "log"\n')
        with pytest.raises(ConfigError, match="sweep.axis"):
            parse_config(MINIMAL + '\n[sweep]\naxis = "bogus"\n')
        with pytest.raises(ConfigError, match="sweep.metrics"):
            parse_config(MINIMAL + '\n[sweep]\nmetrics = ["bogus"]\n')

    def test_bad_toml_reported(self):
        with pytest.raises(ConfigError):
            parse_config("[cavity\nomega = ")


class TestResultTable:
    def test_rectangular_enforced(self):
        with pytest.raises(ValueError):
            ResultTable(["a", "b"], [(1, 2), (3,)])

    def test_nonfinite_needs_flag_column(self):
        with pytest.raises(ValueError):
            ResultTable(["a", "b"], [(1.0, float("nan"))])
        ResultTable(["a", "b", "reachable"], [(1.0, float("nan"), False)])
        ResultTable(["a", "b", "finite_flag"], [(1.0, float("nan"), False)])

    def test_write(self, tmp_path):
        t = ResultTable(["x", "y"], [(1.0, 2.5), (2.0, 3.5)])
        path = tmp_path / "t.csv"
        t.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y"
        assert lines[1] == "1.0,2.5"


class TestScheduleRoundTrip:
    def test_roundtrip(self, tmp_path):
        segs = (
            Segment(1e-9, 0.0, 1e8 + 2e7j, 0.0, -3e6, -7e7),
            Segment(2e-9, 1e8 + 2e7j, 5e7, -3e6, -1.76e7, -7e7),
        )
        sched = DriveSchedule(segs)
        path = tmp_path / "sched.csv"
        schedule_to_csv(path, sched)
        header = path.read_text().splitlines()[0].split(",")
        assert tuple(header) == SCHEDULE_COLUMNS
        back = schedule_from_csv(path)
        for a, b in zip(sched.segments, back.segments):
            assert a.duration_s == b.duration_s
            assert complex(a.l1_start) == b.l1_start
            assert complex(a.l2_end) == b.l2_end
            assert a.delta == b.delta


class TestStateRoundTrip:
    def test_roundtrip(self, tmp_path):
        state = coherent_state(1.2 + 0.4j, 12)
        path = tmp_path / "state.csv"
        state_to_csv(path, state)
        back = state_from_csv(path)
        assert isinstance(back, QuantumState)
        assert np.abs(back.density() - state.density()).max() < 1e-15


def test_fmt_float_deterministic():
    assert fmt_float(1.0) == "1.0"
    assert fmt_float(float("nan")) == "nan"
    assert fmt_float(True) == "true"
    assert fmt_float(0.1) == fmt_float(0.1)


def test_trajectory_columns_contract():
    assert TRAJECTORY_COLUMNS == ("t_s", "n_expect", "p0", "p1", "p2", "g2",
                                  "trace_err")

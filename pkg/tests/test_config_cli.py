import shutil

import numpy as np
import pytest

from ionpair import cli
from ionpair.config import data_path, parse_config, parse_fiber
from ionpair.errors import ConfigError
from ionpair.reference import load_reference_table


@pytest.fixture
def workdir(tmp_path):
    for name in ("nrl_2050.cfg", "nrl_fiber.cfg", "nrl_absorption.csv"):
        shutil.copy(data_path(name), tmp_path / name)
    return tmp_path


def write_cfg(workdir, extra="", drop=()):
    lines = [l for l in (workdir / "nrl_2050.cfg").read_text().splitlines()
             if not any(l.startswith(d) for d in drop)]
    path = workdir / "run.cfg"
    path.write_text("\n".join(lines) + "\n" + extra + "\n")
    return path


class TestParse:
    def test_units(self, nrl_run):
        amp = nrl_run.amplifier
        assert amp.length == 2.5
        assert amp.signal.power == pytest.approx(1e-3)
        assert amp.signal.wavelength == pytest.approx(2051e-9)
        assert amp.pairing.k == pytest.approx(0.04)
        assert nrl_run.get("sweep.pump_powers")[-1] == pytest.approx(2.5)
        assert len(nrl_run.get("sweep.pump_powers")) == 26
        assert nrl_run.pump_power_wavelengths == pytest.approx((1860e-9, 1940e-9))

    def test_fiber(self, nrl_fiber):
        assert nrl_fiber.core_radius == pytest.approx(5e-6)
        assert nrl_fiber.dopant_wt_fraction == pytest.approx(0.007)

    @pytest.mark.parametrize("line,value", [
        ("signal.power = 0 dBm", 1e-3),
        ("signal.power = 1000 uW", 1e-3),
        ("signal.power = 0.001 W", 1e-3),
    ])
    def test_power_units(self, workdir, line, value):
        cfg = parse_config(write_cfg(workdir, line, drop=("signal.power",)))
        assert cfg.amplifier.signal.power == pytest.approx(value)

    def test_unknown_key(self, workdir):
        with pytest.raises(ConfigError) as err:
            parse_config(write_cfg(workdir, "amplifier.lenght = 2 m"))
        assert err.value.key == "amplifier.lenght"

    def test_wrong_unit(self, workdir):
        with pytest.raises(ConfigError) as err:
            parse_config(write_cfg(workdir, "amplifier.length = 2 W", drop=("amplifier.length",)))
        assert err.value.key == "amplifier.length"
        assert "unit" in str(err.value)

    def test_missing_required(self, workdir):
        with pytest.raises(ConfigError) as err:
            parse_config(write_cfg(workdir, drop=("pump.power",)))
        assert err.value.key == "pump.power"

    def test_out_of_spectrum(self, workdir):
        with pytest.raises(ConfigError) as err:
            parse_config(write_cfg(workdir, "pump.wavelength = 1550 nm", drop=("pump.wavelength",)))
        assert err.value.key == "pump.wavelength"

    def test_range_must_land(self, workdir):
        with pytest.raises(ConfigError):
            parse_config(write_cfg(workdir, "sweep.pump_powers = 0:1:0.3 W",
                                   drop=("sweep.pump_powers",)))

    def test_negative_length(self, workdir):
        with pytest.raises(ConfigError) as err:
            parse_config(write_cfg(workdir, "amplifier.length = -1 m", drop=("amplifier.length",)))
        assert err.value.key == "amplifier.length"

    def test_stray_key(self, workdir):
        with pytest.raises(ConfigError, match="strict schema") as err:
            parse_config(write_cfg(workdir, "pump.color = 3"))
        assert err.value.key == "pump.color"

    def test_duplicate(self, workdir):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(write_cfg(workdir, "pump.power = 1 W"))

    def test_zero_length_allowed(self, workdir):
        cfg = parse_config(write_cfg(workdir, "amplifier.length = 0 m", drop=("amplifier.length",)))
        assert cfg.amplifier.length == 0.0

    def test_auto_zero_line(self, workdir):
        fib = workdir / "nrl_fiber.cfg"
        lines = [l for l in fib.read_text().splitlines() if not l.startswith("fiber.zero_line")]
        fib.write_text("\n".join(lines + ["fiber.zero_line_wavelength = auto"]) + "\n")
        assert parse_fiber(fib).zero_line_wavelength == "auto"
        cfg = parse_config(workdir / "nrl_2050.cfg")
        assert 1940e-9 < cfg.amplifier.cross_sections.zero_line_wavelength < 2100e-9

    def test_bad_spectrum(self, workdir):
        (workdir / "nrl_absorption.csv").write_text("wavelength_nm,alpha_dB_per_m\n1700,1\n1700,2\n")
        with pytest.raises(ConfigError) as err:
            parse_config(workdir / "nrl_2050.cfg")
        assert "line 3" in str(err.value)

    def test_digest_covers_inputs(self, workdir):
        d0 = parse_config(workdir / "nrl_2050.cfg").digest
        assert parse_config(workdir / "nrl_2050.cfg").digest == d0
        assert parse_config(workdir / "nrl_2050.cfg", ["pump.power = 1.2 W"]).digest != d0
        spec = workdir / "nrl_absorption.csv"
        spec.write_text(spec.read_text() + "# touched\n")
        assert parse_config(workdir / "nrl_2050.cfg").digest != d0

    def test_override(self, workdir):
        cfg = parse_config(workdir / "nrl_2050.cfg", ["amplifier.pairing = 0.1"])
        assert cfg.amplifier.pairing.k == pytest.approx(0.1)


class TestReferenceTable:
    def test_rows(self):
        table = load_reference_table()
        assert len(table) == 6
        vals = [r.value for r in table]
        assert vals == pytest.approx([0.212, 0.15, 0.135, 0.10, 0.10, 0.04])
        assert [r.formatted() for r in table][1] == "15 ± 1%"

    def test_cli(self, capsys):
        assert cli.main(["show-reference-table"]) == 0
        out = capsys.readouterr().out
        assert "NRL" in out and "21.2%" in out and "13.5 ± 1%" in out
        assert any(l.split()[:2] == ["Exail", "IXF-HDF-PM-8-125"] and "[9]" in l and "15 ± 1%" in l for l in out.splitlines())
        assert len(out.strip().splitlines()) == 2 + 6


class TestCli:
    def test_simulate(self, workdir, capsys):
        out = workdir / "out"
        assert cli.main(["simulate", "--config", str(workdir / "nrl_2050.cfg"), "--out", str(out)]) == 0
        summary = (out / "simulate_summary.txt").read_text()
        assert summary.startswith("config_digest: ")
        assert "signal out" in summary
        prof = (out / "simulate_profile.csv").read_text().splitlines()
        assert prof[1] == "z_m,channel_id,power_W"

    def test_zero_length_simulate(self, workdir):
        out = workdir / "out"
        rc = cli.main(["simulate", "--config", str(workdir / "nrl_2050.cfg"), "--out", str(out),
                       "--set", "amplifier.length = 0 m", "--set", "amplifier.port_loss_in = 0 dB",
                       "--set", "amplifier.port_loss_out = 0 dB"])
        assert rc == 0
        assert "signal out = 1.000 mW" in (out / "simulate_summary.txt").read_text()

    def test_shipped_config_by_name(self, tmp_path):
        assert cli.main(["simulate", "--config", "nrl_2050.cfg", "--out", str(tmp_path)]) == 0

    def test_sweep_pump_power(self, workdir):
        out = workdir / "out"
        rc = cli.main(["sweep-pump-power", "--config", str(workdir / "nrl_2050.cfg"), "--out", str(out),
                       "--set", "sweep.pump_powers = 0:2.5:0.5 W", "--jobs", "2"])
        assert rc == 0
        text = (out / "slope_efficiency.txt").read_text()
        assert "1860 nm pump: slope efficiency" in text
        assert (out / "sweep_pump_power_1940nm.csv").exists()

    def test_invert(self, workdir, capsys):
        out = workdir / "out"
        rc = cli.main(["invert-pairing", "--config", str(workdir / "nrl_2050.cfg"), "--out", str(out)])
        assert rc == 0
        assert "k_hat" in capsys.readouterr().out
        rows = (out / "ratio_curve.csv").read_text().splitlines()
        assert rows[2] == "k,ratio" and len(rows) == 3 + 31

    def test_ratio_out_of_range_exit_code(self, workdir, capsys):
        rc = cli.main(["invert-pairing", "--config", str(workdir / "nrl_2050.cfg"),
                       "--out", str(workdir / "out"), "--set", "invert.measured_ratio = 1000"])
        assert rc == 1
        assert "outside" in capsys.readouterr().err

    def test_config_error_exit_code(self, workdir, capsys):
        rc = cli.main(["simulate", "--config", str(write_cfg(workdir, "bogus = 1"))])
        assert rc == 1
        assert "bogus" in capsys.readouterr().err

    def test_missing_config(self):
        with pytest.raises(SystemExit) as err:
            cli.main(["simulate"])
        assert err.value.code == 2

    def test_ase_and_steps_flags(self, workdir):
        out = workdir / "out"
        rc = cli.main(["simulate", "--config", str(workdir / "nrl_2050.cfg"), "--out", str(out),
                       "--ase", "on", "--steps", "2", "--set", "ase.bins = 20"])
        assert rc == 0
        labels = {l.split(",")[1] for l in (out / "simulate_profile.csv").read_text().splitlines()[2:]}
        assert len(labels) == 2 + 40

    def test_optimize_length(self, workdir):
        out = workdir / "out"
        rc = cli.main(["optimize-length", "--config", str(workdir / "nrl_2050.cfg"), "--out", str(out),
                       "--set", "pump.power = 2.5 W"])
        assert rc == 0
        length = float((out / "optimize_length.txt").read_text().split("optimum length = ")[1].split()[0])
        assert 1.0 < length < 4.0


def test_digest_ignores_execution_keys(workdir):
    d0 = parse_config(workdir / "nrl_2050.cfg").digest
    d1 = parse_config(workdir / "nrl_2050.cfg", ["numerics.jobs = 4", "output.directory = elsewhere"]).digest
    assert d0 == d1

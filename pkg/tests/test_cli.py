"""CLI tests: option resolution, artifacts, exit codes."""

import numpy as np
import pytest

from cipm.channel import ChannelMatrix
from cipm.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_VALIDATION,
    _parse_region_grid,
    build_parser,
    main,
    read_config,
    resolve_options,
)

SWEEP_HEADER = ("target_sinr_db,precoder,avg_power_dbw,avg_power_watts,"
                "ser_user1,ser_user2,goodput_user1,goodput_user2,eta")


def _read(path):
    return path.read_text(encoding="ascii").splitlines()


# ------------------------------------------------------------ option plumbing

def test_read_config_parses_flat_files(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nframes = 7\n\nzeta-db = 9.5  # inline\n",
                    encoding="ascii")
    assert read_config(path) == {"frames": "7", "zeta_db": "9.5"}
    path.write_text("frames 7\n", encoding="ascii")
    with pytest.raises(ValueError):
        read_config(path)


def test_option_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("frames = 7\nzeta-db = 9.5\ngrid = 3,5\n", encoding="ascii")
    args = build_parser().parse_args(
        ["sweep", "--config", str(cfg), "--frames", "3"])
    opts = resolve_options(args)
    assert opts["frames"] == 3          # flag beats file
    assert opts["zeta_db"] == 9.5       # file beats default
    assert opts["grid"] == [3.0, 5.0]   # file value parsed like a flag
    assert opts["symbols"] == 100       # untouched default


def test_unknown_config_key_exits_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus = 1\n", encoding="ascii")
    code = main(["sweep", "--config", str(cfg)])
    assert code == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_parse_region_grid_forms():
    assert _parse_region_grid(None) == pytest.approx(np.linspace(4.0, 14.0, 6))
    assert _parse_region_grid("5") == pytest.approx(np.linspace(4.0, 14.0, 5))
    assert _parse_region_grid("4,10") == [4.0, 10.0]
    assert _parse_region_grid("4.5") == [4.5]


# -------------------------------------------------------------------- sweeps

def test_sweep_writes_csv_and_is_deterministic(tmp_path, capsys):
    common = ["sweep", "--frames", "1", "--symbols", "10", "--grid", "4.0",
              "--precoders", "cipm", "--threads", "1"]
    out1, out2, out3 = (tmp_path / n for n in ("a", "b", "c"))
    assert main(common + ["--out", str(out1)]) == EXIT_OK
    assert main(common + ["--out", str(out2)]) == EXIT_OK
    assert main(common + ["--out", str(out3), "--seed", "1"]) == EXIT_OK
    rows1 = _read(out1 / "sweep.csv")
    assert rows1[0] == SWEEP_HEADER
    assert len(rows1) == 2
    assert rows1 == _read(out2 / "sweep.csv")
    assert rows1 != _read(out3 / "sweep.csv")
    assert "wrote" in capsys.readouterr().out


def test_sweep_summary_prints_rows(tmp_path, capsys):
    code = main(["sweep", "--frames", "1", "--symbols", "10", "--grid", "4.0",
                 "--precoders", "cipm", "--threads", "1", "--summary",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "sinr=4" in out and "dBW" in out


# ------------------------------------------------------------- fixed channel

def test_fixed_preset_combination_table(tmp_path, capsys):
    code = main(["fixed", "--preset", "combos", "--summary",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    lines = _read(tmp_path / "combinations.csv")
    assert lines[0] == ("combination,symbol_user1,symbol_user2,"
                        "cipm_power_dbw,ob_power_dbw,gap_db")
    assert len(lines) == 17            # 4x4 QPSK combinations
    assert "gap" in capsys.readouterr().out


def test_fixed_region_map(tmp_path):
    code = main(["fixed", "--preset", "regions", "--grid", "4,10",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    lines = _read(tmp_path / "regions.csv")
    assert lines[0] == "zeta1_db,zeta2_db,modulation1,modulation2,avg_power_dbw,eta"
    assert len(lines) == 5


def test_fixed_channel_file_single_user(tmp_path):
    ch = tmp_path / "ch.txt"
    ChannelMatrix(np.array([[1.3 + 0.7j]])).save_text(ch)
    code = main(["fixed", "--channel", str(ch), "--out", str(tmp_path)])
    assert code == EXIT_OK
    lines = _read(tmp_path / "combinations.csv")
    assert lines[0] == "combination,symbol_user1,cipm_power_dbw,ob_power_dbw,gap_db"
    gaps = [float(line.split(",")[-1]) for line in lines[1:]]
    assert gaps == pytest.approx([0.0] * 4, abs=1e-9)


def test_fixed_requires_one_channel_source(tmp_path, capsys):
    ch = tmp_path / "ch.txt"
    ChannelMatrix(np.array([[1.0 + 0.0j]])).save_text(ch)
    assert main(["fixed", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["fixed", "--preset", "combos", "--channel", str(ch),
                 "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["fixed", "--channel", str(tmp_path / "missing.txt"),
                 "--out", str(tmp_path)]) == EXIT_CONFIG
    capsys.readouterr()


def test_fixed_conflicting_users_exit_solver(tmp_path, capsys):
    # identical rows: any combination with distinct symbols is infeasible
    ch = tmp_path / "ch.txt"
    ChannelMatrix(np.array([[1.0 + 0.0j, 0.5 + 0.0j],
                            [1.0 + 0.0j, 0.5 + 0.0j]])).save_text(ch)
    code = main(["fixed", "--channel", str(ch), "--out", str(tmp_path)])
    assert code == EXIT_SOLVER
    assert "solver error" in capsys.readouterr().err


# ------------------------------------------------------------------ pdfcheck

def test_pdfcheck_passes_at_scale(tmp_path, capsys):
    code = main(["pdfcheck", "--constellation", "qpsk",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out
    lines = _read(tmp_path / "distribution.csv")
    assert lines[0] == "z,analytic_pdf,empirical_pdf"
    assert len(lines) == 201


def test_pdfcheck_fails_undersampled(tmp_path, capsys):
    # 3000 draws over 24 bins: binomial noise alone exceeds the threshold
    code = main(["pdfcheck", "--samples", "3000", "--out", str(tmp_path)])
    assert code == EXIT_VALIDATION
    assert "FAIL" in capsys.readouterr().err


def test_pdfcheck_insufficient_samples_warns(tmp_path, capsys):
    code = main(["pdfcheck", "--samples", "100", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "too few" in capsys.readouterr().err


# -------------------------------------------------------------------- modmap

def test_modmap_analytic_output(capsys):
    code = main(["modmap", "--rates", "3.6,1.998", "--backend", "analytic"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "[analytic]" in out
    assert "16qam" in out and "qpsk" in out
    assert "SER 0.1," in out


def test_modmap_requires_rates(capsys):
    assert main(["modmap", "--backend", "analytic"]) == EXIT_CONFIG
    assert "--rates" in capsys.readouterr().err


def test_modmap_unsupported_rate(capsys):
    assert main(["modmap", "--rates", "7.0",
                 "--backend", "analytic"]) == EXIT_CONFIG
    capsys.readouterr()

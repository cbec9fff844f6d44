import json
import subprocess
import sys

import numpy as np
import pytest

from isoland.cli import EXIT_CONFIG, EXIT_OK, gamma_star_table, main
from isoland.core import Params, gamma_star, make_grid
from isoland.evolve import gaussian_density, make_state
from isoland.io import (SnapshotError, read_csv, read_snapshot, read_snapshot_state,
                        read_trajectory, sha256_file, write_csv, write_snapshot)

SMALL = ["--set", "n_cells=64", "--set", "r_max=8", "--set", "dt=1e-3", "--set", "t_end=0.02",
         "--set", "snapshot_count=5", "--set", "monitor_every=2"]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out), "--set", "gamma=-2.5"] + SMALL) == EXIT_OK
    return out


def test_snapshot_round_trip_is_bit_exact(tmp_path):
    P = Params.make(3, -2.5)
    g = make_grid(8, 100, 1.01)
    st = make_state(gaussian_density(g, 0.7), P, 0.125)
    write_snapshot(tmp_path / "x", st)
    back = read_snapshot_state(tmp_path / "x.bin")
    assert np.array_equal(back.f.grid.edges, g.edges)
    for a, b in ((back.f, st.f), (back.pair.a, st.pair.a), (back.pair.h, st.pair.h)):
        assert np.array_equal(a.values, b.values)
    assert back.t == 0.125 and back.pair.c_a == st.pair.c_a
    header, f = read_snapshot(tmp_path / "x")
    assert header["n"] == 100 and np.array_equal(f.values, st.f.values)


def test_malformed_snapshots_are_rejected(tmp_path):
    st = make_state(gaussian_density(make_grid(8, 64)), Params.make(3, -2.5))
    write_snapshot(tmp_path / "s", st)
    with pytest.raises(SnapshotError):
        read_snapshot(tmp_path / "missing")
    raw = (tmp_path / "s.bin").read_bytes()
    (tmp_path / "s.bin").write_bytes(raw[:-8])
    with pytest.raises(SnapshotError):
        read_snapshot(tmp_path / "s")
    (tmp_path / "s.bin").write_bytes(raw)
    (tmp_path / "s.json").write_text("{not json")
    with pytest.raises(SnapshotError):
        read_snapshot(tmp_path / "s")
    with pytest.raises(SnapshotError):
        read_trajectory(tmp_path / "empty")


def test_csv_full_precision(tmp_path):
    vals = [[0.1, 1 / 3, 2, True], [np.float64(np.pi), 1e-300, -0.0, False]]
    path = write_csv(tmp_path / "t.csv", ["a", "b", "c", "d"], vals)
    cols, arr = read_csv(path)
    assert cols == ["a", "b", "c", "d"]
    assert arr[0, 1] == 1 / 3 and arr[1, 0] == np.pi and arr[1, 1] == 1e-300
    assert path.read_text().splitlines()[1] == "0.10000000000000001,0.33333333333333331,2,1"


def test_simulate_outputs_and_manifest(sim_dir):
    man = json.loads((sim_dir / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["outcome"] == "success"
    # the config is stored in the same key = value form the --config flag reads
    assert "gamma = -2.5" in man["config"].splitlines() and "tool_version" in man
    assert man["gamma_below_gamma_star"] is True and "range_flag" in man
    assert man["gamma_star"] == pytest.approx(gamma_star(3))
    for item in man["files"]:
        assert sha256_file(sim_dir / item["path"]) == item["sha256"]
    cols, arr = read_csv(sim_dir / "monitors.csv")
    assert cols[:5] == ["t", "mass", "m1", "m2", "m2_rhs"] and "lp_2" in cols
    assert arr.shape[0] == 11
    assert len(read_trajectory(sim_dir)) == 5


def test_simulate_is_deterministic(sim_dir, tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "gamma=-2.5"] + SMALL) == EXIT_OK
    assert (tmp_path / "monitors.csv").read_bytes() == (sim_dir / "monitors.csv").read_bytes()
    for a in sorted((sim_dir / "snapshots").glob("*.bin")):
        assert (tmp_path / "snapshots" / a.name).read_bytes() == a.read_bytes()


def test_range_flag_absent_above_threshold(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "gamma=-2.2"] + SMALL) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["gamma_below_gamma_star"] is False and "range_flag" not in man


def test_flag_below_threshold_far_out(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "gamma=-2.9",
                 "--set", "scheme=nondivergence"] + SMALL) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert "outside the gamma range" in man["range_flag"]


@pytest.mark.parametrize("argv", [
    ["simulate", "--set", "dt=-1"],
    ["simulate", "--set", "gamma=-1.5"],
    ["simulate", "--set", "no_such_key=1"],
    ["simulate", "--set", "dt"],
    ["frobnicate"],
    ["gamma-star", "2"],
    ["moser"],
])
def test_usage_and_config_errors_exit_1(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv + ["--out", str(tmp_path)] if argv[0] != "frobnicate" else argv))
    assert exc.value.code == EXIT_CONFIG


def test_malformed_snapshot_input_exits_1(tmp_path):
    (tmp_path / "bad.json").write_text("[]")
    (tmp_path / "bad.bin").write_bytes(b"")
    rc = main(["verify", "--out", str(tmp_path / "o"), "--set", f"snapshot={tmp_path / 'bad.json'}"])
    assert rc == EXIT_CONFIG
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["outcome"] == "config_error" and "error" in man


def test_gamma_star_command(capsys):
    assert main(["gamma-star", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "gamma_star = -2.4586" in out
    assert gamma_star_table(4).splitlines()[1].startswith("gamma_star = -2.87689")


def test_moser_command_clips_n_max(sim_dir, tmp_path, capsys):
    rc = main(["moser", "--out", str(tmp_path), "--set", f"trajectory={sim_dir}",
               "--set", "moser_n_max=9"])
    assert rc in (0, 3)
    assert "clipped" in capsys.readouterr().err
    cols, arr = read_csv(tmp_path / "moser.csv")
    assert arr.shape[0] == 9 and cols[0] == "n"


def test_verify_zero_density(tmp_path):
    rc = main(["verify", "--out", str(tmp_path), "--set", "initial=zero", "--set", "n_cells=64",
               "--set", "r_max=8", "--set", "suite_size=3"])
    assert rc == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["checks"]["trivial_density"] is True and man["checks"]["violations"] == 0


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "isoland.cli", "gamma-star", "5"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "d = 5" in res.stdout

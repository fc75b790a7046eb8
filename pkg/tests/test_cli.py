"""End-to-end CLI runs in temp directories: artifacts, exit codes,
determinism."""

import filecmp
import json
import os

import pytest

from endolab.cli import main

Z2 = {"n": 1, "components": [[{"exps": [2], "re": 1.0, "im": 0.0}]]}
BASILICA = {"n": 1, "components": [[{"exps": [2], "re": 1.0, "im": 0.0},
                                    {"exps": [0], "re": -1.0, "im": 0.0}]]}


@pytest.fixture()
def mapfile(tmp_path):
    def write(spec, name="map.json"):
        p = tmp_path / name
        p.write_text(json.dumps(spec))
        return str(p)
    return write


def same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(
        a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors


class TestPeriodic:
    def test_artifacts_and_content(self, tmp_path, mapfile):
        out = tmp_path / "out"
        rc = main(["periodic", "--map", mapfile(Z2), "--out", str(out),
                   "--set", "m_max", "3", "--set", "seeds", "512"])
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        # 0, 1, one 2-cycle, two 3-cycles
        assert summary["cycle_count"] == 5
        assert "config_hash" in summary["meta"]
        csv = (out / "cycles.csv").read_text()
        assert csv.startswith("# config_hash=")

    def test_bitwise_reproducible(self, tmp_path, mapfile):
        m = mapfile(Z2)
        for d in ("a", "b"):
            rc = main(["periodic", "--map", m, "--out", str(tmp_path / d),
                       "--set", "m_max", "3", "--set", "seeds", "512"])
            assert rc == 0
        assert same_tree(str(tmp_path / "a"), str(tmp_path / "b"))


class TestJulia:
    def test_artifacts(self, tmp_path, mapfile):
        out = tmp_path / "out"
        rc = main(["julia", "--map", mapfile(Z2), "--out", str(out),
                   "--set", "res", "64", "--set", "m_max", "4",
                   "--set", "seeds", "512"])
        assert rc == 0
        for name in ("grid.pgm", "grid.json", "boundary.csv",
                     "repellers.csv", "hausdorff.json"):
            assert (out / name).exists()
        pgm = (out / "grid.pgm").read_bytes()
        assert pgm.startswith(b"P5\n# config_hash=")
        hd = json.loads((out / "hausdorff.json").read_text())
        assert hd["repeller_count"] > 0 and hd["boundary_count"] > 0

    def test_bitwise_reproducible(self, tmp_path, mapfile):
        m = mapfile(Z2)
        for d in ("a", "b"):
            rc = main(["julia", "--map", m, "--out", str(tmp_path / d),
                       "--set", "res", "64", "--set", "m_max", "3",
                       "--set", "seeds", "256"])
            assert rc == 0
        assert same_tree(str(tmp_path / "a"), str(tmp_path / "b"))


class TestConley:
    def test_artifacts(self, tmp_path, mapfile):
        out = tmp_path / "out"
        rc = main(["conley", "--map", mapfile(BASILICA), "--out", str(out),
                   "--set", "depth", "4", "--set", "m_max", "2",
                   "--set", "window", "[[-1.75,1.75],[-1.75,1.75]]"])
        assert rc == 0
        dot = (out / "morse.dot").read_text()
        assert dot.startswith("// config_hash=")
        assert "digraph morse {" in dot
        assert (out / "recurrent.pgm").exists()
        rep = json.loads((out / "hurley.json").read_text())
        assert rep["items"]["i_nonrecurrent_in_basins"]["pass"]

    def test_bitwise_reproducible(self, tmp_path, mapfile):
        m = mapfile(BASILICA)
        for d in ("a", "b"):
            rc = main(["conley", "--map", m, "--out", str(tmp_path / d),
                       "--set", "depth", "4", "--set", "m_max", "2"])
            assert rc == 0
        assert same_tree(str(tmp_path / "a"), str(tmp_path / "b"))


class TestPerturb:
    def test_make_periodic(self, tmp_path, mapfile):
        out = tmp_path / "out"
        rc = main(["perturb", "--map", mapfile(Z2), "--out", str(out),
                   "--set", "operation", "make_periodic",
                   "--set", "q", "[[0.41, 0.13]]",
                   "--set", "m", "2", "--set", "kind",
                   "super_attracting", "--set", "budget", "10"])
        assert rc == 0
        ver = json.loads((out / "verification.json").read_text())
        assert ver["kind"] == "super_attracting" and ver["period"] == 3
        assert (out / "produced_map.json").exists()

    def test_escaping(self, tmp_path, mapfile):
        out = tmp_path / "out"
        rc = main(["perturb", "--map", mapfile(Z2), "--out", str(out),
                   "--set", "operation", "escaping",
                   "--set", "q", "[[1.1, 0.0]]"])
        assert rc == 0
        ver = json.loads((out / "verification.json").read_text())
        assert ver["exits_last_window"]
        eps = 1.0
        for s, nm in enumerate(ver["stage_norms"]):
            assert nm <= eps / 2 ** (s + 1)

    def test_infeasible_exit_code(self, tmp_path, mapfile):
        out = tmp_path / "out"
        rc = main(["perturb", "--map", mapfile(BASILICA), "--out", str(out),
                   "--set", "operation", "escaping",
                   "--set", "q", "[[0.05, 0.0]]"])
        assert rc == 3


class TestHakim:
    def test_run(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["hakim", "--out", str(out), "--set", "steps", "2000",
                   "--set", "start", "[[-0.5, 0.0]]"])
        assert rc == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["multipliers"] == [{"re": 1.0, "im": 0.0}]
        decay = (out / "decay.csv").read_text().splitlines()
        assert decay[1] == "k,norm,k_times_norm"


class TestErrors:
    def test_missing_map_is_config_error(self, tmp_path):
        rc = main(["periodic", "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_bad_map_file_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        rc = main(["periodic", "--map", str(bad),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_bad_key_value_is_config_error(self, tmp_path, mapfile):
        rc = main(["periodic", "--map", mapfile(Z2),
                   "--out", str(tmp_path / "o"),
                   "--set", "m_max", "-3"])
        assert rc == 2

    def test_config_file_plus_override(self, tmp_path, mapfile):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"m_max": 2, "seeds": 256}))
        out = tmp_path / "out"
        rc = main(["periodic", "--map", mapfile(Z2),
                   "--config", str(cfgfile), "--out", str(out),
                   "--set", "m_max", "1"])
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["cycle_count"] == 2  # fixed points only

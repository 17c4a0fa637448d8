import json
from pathlib import Path

import pytest

from singular_functions import cli
from singular_functions.errors import ConfigError
from singular_functions.scenarios import KINDS, load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def run(kind, config, out, *extra):
    return cli.main([kind, "--config", str(config), "--out", str(out), "--quiet", *extra])


def summary(out, name):
    return json.loads((out / name / "summary.json").read_text())


@pytest.mark.usefixtures("no_out_env")
class TestScenarioRuns:
    def test_construct_writes_pair_and_summary(self, tmp_path):
        out = tmp_path / "out"
        code = run("construct", SCENARIO_DIR / "construct_bump.toml", out, "--grid-n", "1024")
        assert code == 0
        data = summary(out, "construct_bump")
        assert data["success"] is True
        assert data["exit_code"] == 0
        assert data["grid"] == {"L": 1.0, "N": 1024}
        assert data["report"]["recovered_c"] == pytest.approx(2.0, abs=data["report"]["tol"])
        lines = (out / "construct_bump" / "construct_bump__u.csv").read_text().splitlines()
        assert lines[0] == "x,value"
        assert len(lines) == 1026
        assert (out / "construct_bump" / "construct_bump__g.csv").exists()

    def test_expected_nonexistence_is_success(self, tmp_path):
        out = tmp_path / "out"
        assert run("find-cstar", SCENARIO_DIR / "cstar_nonexistence.toml", out, "--grid-n", "512") == 0
        data = summary(out, "cstar_nonexistence")
        assert data["no_solution"] is True
        assert data["flags"]["bounded_below"] is True

    def test_unexpected_nonexistence(self, tmp_path, scenario_file):
        config = scenario_file("cstar_nonexistence", {"expect_solution = false": "expect_solution = true"})
        out = tmp_path / "out"
        assert run("find-cstar", config, out, "--grid-n", "512") == 3
        assert summary(out, "cstar_nonexistence")["success"] is False

    def test_non_member_is_reported(self, tmp_path):
        out = tmp_path / "out"
        assert run("verify", SCENARIO_DIR / "verify_nonmember.toml", out, "--grid-n", "256") == 0
        data = summary(out, "verify_nonmember")
        assert data["report"]["verdict"] is False
        assert data["membership"]["divergent"] is True

    def test_alternative_on_a_coarse_grid(self, tmp_path):
        out = tmp_path / "out"
        assert run("alternative", SCENARIO_DIR / "alternative.toml", out, "--grid-n", "64") == 0
        data = summary(out, "alternative")
        assert data["verdict"] == "ZeroLimit"
        assert (out / "alternative" / "alternative__u_n10.csv").exists()

    def test_tail_fix_success_carries_the_verdict(self, tmp_path):
        out = tmp_path / "out"
        assert run("tail-fix", SCENARIO_DIR / "tail_fix.toml", out, "--grid-n", "1024") == 0
        data = summary(out, "tail_fix")
        assert data["success"] is True
        assert data["tail_fix"]["report"]["verdict"] is True
        assert data["tail_fix"]["g_hat_tail_min"] < 0.0

    def test_instability_shares_the_stability_pair(self, tmp_path):
        out = tmp_path / "out"
        assert run("instability", SCENARIO_DIR / "instability.toml", out, "--grid-n", "256") == 0
        data = summary(out, "instability")
        assert data["success"] is True
        assert data["stability"]["steps"][-1]["sup_distance"] <= data["stability"]["tol"]
        assert data["instability"]["verdict"] == "ZeroLimit"
        distances = data["instability"]["datum_distance"]
        assert all(later < earlier for earlier, later in zip(distances, distances[1:]))

    def test_instability_needs_a_clip_level_per_eps(self, tmp_path, scenario_file):
        config = scenario_file("instability", {"clip = [2.0, 4.0, 8.0]": "clip = [2.0, 4.0]"})
        assert run("instability", config, tmp_path / "out") == 64

    def test_runs_are_byte_identical(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        for out in (first, second):
            run("construct", SCENARIO_DIR / "construct_bump.toml", out, "--grid-n", "256")
        names = sorted(p.name for p in (first / "construct_bump").iterdir())
        assert "summary.json" in names
        assert names == sorted(p.name for p in (second / "construct_bump").iterdir())
        for name in names:
            assert (first / "construct_bump" / name).read_bytes() == (second / "construct_bump" / name).read_bytes()


class TestOutputDirectory:
    def test_environment_overrides_out(self, tmp_path, monkeypatch):
        env_out = tmp_path / "env"
        monkeypatch.setenv("SFL_OUT", str(env_out))
        run("verify", SCENARIO_DIR / "verify_nonmember.toml", tmp_path / "cli", "--grid-n", "64")
        assert (env_out / "verify_nonmember" / "summary.json").exists()
        assert not (tmp_path / "cli").exists()


@pytest.mark.usefixtures("no_out_env")
class TestConfigErrors:
    def test_missing_field(self, tmp_path, scenario_file):
        config = scenario_file("construct_bump", {"gamma = 0.3333333333333333": ""})
        assert run("construct", config, tmp_path / "out") == 64
        assert not (tmp_path / "out").exists()

    def test_kind_mismatch(self, tmp_path):
        assert run("solve-ivp", SCENARIO_DIR / "construct_bump.toml", tmp_path / "out") == 64

    @pytest.mark.parametrize("n", ["16", "1000"])
    def test_grid_size(self, tmp_path, n):
        assert run("construct", SCENARIO_DIR / "construct_bump.toml", tmp_path / "out", "--grid-n", n) == 64

    def test_toml_syntax(self, tmp_path, scenario_file):
        config = scenario_file("construct_bump", {'kind = "power"': 'kind = "power'})
        assert run("construct", config, tmp_path / "out") == 64

    def test_missing_file(self, tmp_path):
        assert run("construct", tmp_path / "nope.toml", tmp_path / "out") == 64

    def test_unknown_kind_is_rejected_by_the_parser(self, tmp_path):
        with pytest.raises(SystemExit):
            run("bogus", SCENARIO_DIR / "construct_bump.toml", tmp_path / "out")


class TestGallery:
    @pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.toml")), ids=lambda p: p.stem)
    def test_every_scenario_parses(self, path):
        scenario = load_scenario(path)
        assert scenario.kind in KINDS
        assert scenario.name == path.stem

    def test_unknown_phi_kind(self, scenario_file):
        config = scenario_file("construct_bump", {'kind = "power"': 'kind = "spline"'})
        with pytest.raises(ConfigError):
            load_scenario(config)

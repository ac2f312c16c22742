"""Command line runner: configs, exit codes and outputs."""
import json
from pathlib import Path

import pytest

from holodiff.cli import main


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(args):
    return main(["run", *args])


def test_list_catalogue_names(capsys):
    assert main(["list-catalogue"]) == 0
    out = capsys.readouterr().out
    for name in ("constant-field", "rotation-field", "su2-two-axis"):
        assert name in out


def test_list_catalogue_user_entries(tmp_path, capsys):
    main(["list-catalogue"])
    default = capsys.readouterr().out
    empty = write(tmp_path, "fields = []\n", "empty.toml")
    main(["list-catalogue", "--config", empty])
    assert capsys.readouterr().out == default
    one = write(tmp_path, '[[fields]]\nid = "mine"\nfamily = "constant-field"\nvector = [0.5, 0.0]\n')
    main(["list-catalogue", "--config", one])
    assert "field mine: constant-field" in capsys.readouterr().out


@pytest.mark.parametrize(
    "text",
    ["suite = 'unitarity\n", "suite = 'nope'\n", "suite = 'unitarity'\nbogus = 1\n", "suite = 'unitarity'\n[options]\nresolutions = 'x'\n",
     "suite = 'unitarity'\nseed = -1\n"],
)
def test_malformed_config_exit_2(tmp_path, text):
    out = tmp_path / "out"
    assert run(["--config", write(tmp_path, text), "--out", str(out)]) == 2
    assert not out.exists()


def test_unknown_id_exit_3(tmp_path):
    out = tmp_path / "out"
    cfg = write(tmp_path, "suite = 'unitarity'\n[options]\nconnections = ['missing']\n")
    assert run(["--config", cfg, "--out", str(out)]) == 3
    assert not out.exists()
    cfg = write(tmp_path, "suite = 'unitarity'\n[[fields]]\nid = 'bad'\nfamily = 'no-such-family'\n")
    assert run(["--config", cfg, "--out", str(out)]) == 3


def test_grid_cap_exit_2(tmp_path):
    out = tmp_path / "out"
    cfg = write(tmp_path, "suite = 'unitarity'\n[options]\nresolutions = [128, 1024]\n")
    assert run(["--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()


def test_bad_flag_exit_2():
    assert main(["run", "--threads", "many"]) == 2


UNITARITY_SHIFT = """
suite = "unitarity"
seed = 3

[[fields]]
id = "T"
family = "constant-field"
vector = [0.25, 0.125]

[options]
metrics = ["flat"]
connections = ["trivial"]
words = [[["T", 1]]]
resolutions = [64, 128]
tolerance = 1e-10
"""


def test_commensurate_unitarity(tmp_path):
    out = tmp_path / "out"
    assert run(["--config", write(tmp_path, UNITARITY_SHIFT), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] and report["checks"]
    for rec in report["records"]:
        assert max(rec["errors"].values()) < 1e-10
    assert (out / "data.csv").read_text().startswith("series,x,y\n")
    assert "PASS" in (out / "log.txt").read_text()


def test_discrete_round_trip(tmp_path):
    out = tmp_path / "out"
    assert run(["--suite", "discrete-lqg", "--out", str(out)]) == 0
    checks = {c["name"]: c for c in json.loads((out / "report.json").read_text())["checks"]}
    assert checks["round-trip recovered-U edge residual"]["value"] < 1e-12


def test_report_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["--suite", "discrete-lqg", "--seed", "11", "--out", str(a)]) == 0
    assert run(["--suite", "discrete-lqg", "--seed", "11", "--out", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()


def test_threads_agree(tmp_path):
    cfg = write(tmp_path, UNITARITY_SHIFT.replace('["trivial"]', '["trivial", "su2"]').replace("1e-10", "1e-2"))
    one, two = tmp_path / "one", tmp_path / "two"
    assert run(["--config", cfg, "--out", str(one)]) == 0
    assert run(["--config", cfg, "--out", str(two), "--threads", "2"]) == 0
    r1 = json.loads((one / "report.json").read_text())
    r2 = json.loads((two / "report.json").read_text())
    assert [c["name"] for c in r1["checks"]] == [c["name"] for c in r2["checks"]]
    for c1, c2 in zip(r1["checks"], r2["checks"]):
        assert c1["passed"] == c2["passed"]
        assert abs(c1["value"] - c2["value"]) <= 1e-12 * max(1.0, abs(c1["value"]))


COARSE_PROBE = """
suite = "norm-gap"
[options]
resolutions = [24]
cases = [{coefficients = [1.0], matrices = [[[1.0, 0.0], [0.0, 1.0]]], exact = 1.0}]
"""


def test_strict_turns_warnings_into_failures(tmp_path):
    cfg = write(tmp_path, COARSE_PROBE)
    assert run(["--config", cfg, "--out", str(tmp_path / "lax")]) == 0
    report = json.loads((tmp_path / "lax" / "report.json").read_text())
    assert report["warnings"]
    assert run(["--config", cfg, "--out", str(tmp_path / "strict"), "--strict"]) == 1


def test_numeric_error_exit_4(tmp_path):
    cfg = write(
        tmp_path,
        """
suite = "radon-nikodym"
[domain]
topology = "box"
[[fields]]
id = "push"
family = "constant-field"
vector = [1.0, 0.0]
[options]
metrics = ["flat"]
words = [[["push", 1]]]
resolution = 16
""",
    )
    out = tmp_path / "out"
    assert run(["--config", cfg, "--out", str(out)]) == 4
    report = json.loads((out / "report.json").read_text())
    assert "TrajectoryEscapeError" in report["error"] and report["passed"] is False


def test_json_config(tmp_path):
    cfg = write(tmp_path, json.dumps({"suite": "discrete-lqg", "seed": 2}), "cfg.json")
    assert run(["--config", cfg, "--out", str(tmp_path / "out")]) == 0
    assert json.loads(Path(tmp_path / "out" / "report.json").read_text())["seed"] == 2


EXAMPLES = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.toml"))


@pytest.mark.parametrize("path", EXAMPLES, ids=lambda p: p.stem)
def test_example_configs_validate(path):
    from holodiff.cli import load_config, prepare
    from holodiff.suites import DEFAULT_OPTIONS

    cfg = load_config(path)
    suite, _, options, _ = prepare(cfg)
    assert suite == path.stem
    assert set(options) == set(DEFAULT_OPTIONS[suite])


def test_every_suite_has_an_example():
    from holodiff.suites import SUITES

    assert {p.stem for p in EXAMPLES} == set(SUITES)

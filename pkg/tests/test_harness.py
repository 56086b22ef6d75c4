import csv
import io
import json
from importlib import resources

import numpy as np
import pytest

from hoferlab.harness import cli, ops, runner, scenario
from hoferlab.harness.scenario import ScenarioError, build_hamiltonian, loads

HEAD = 'id = "t"\nstructure = "symplectic2n:1"\n'


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, text, name="s.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# -- scenario parsing ---------------------------------------------------------------------------


def test_empty_experiment_list_exits_zero(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "run", write(tmp_path, HEAD))
    assert code == 0 and out == ""


def test_malformed_structure_label_reports_location(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", write(tmp_path, 'id = "t"\nstructure = "sympletic:1"\n'))
    assert code == 2
    assert "line 2, column 14" in err


def test_toml_syntax_error_reports_location():
    with pytest.raises(ScenarioError) as info:
        loads(HEAD + "seed = \n")
    assert (info.value.line, info.value.column) == (3, 8)


@pytest.mark.parametrize("text, needle", [
    (HEAD + "[[experiments]]\nop = \"frobnicate\"\n", "unknown op"),
    (HEAD + "[[experiments]]\nop = \"length\"\nhamiltonian = \"F\"\n", "undeclared hamiltonian"),
    (HEAD + "colour = 1\n", "unknown top-level key"),
    (HEAD + "seed = -1\n", "seed"),
    (HEAD + "[hamiltonians.F]\nfamily = \"wobble{1}\"\n", "unknown family"),
    (HEAD + "[hamiltonians.F]\nfamily = \"t*bump{[0,0], 1}\"\nprofile = \"t\"\n", "twice"),
    (HEAD + "[grid]\nsize = 3\n", "unknown grid key"),
    (HEAD + "[[experiments]]\nop = \"realization\"\nrealization = \"pair:heisenberg3\"\n",
     "symplectic"),
    ('id = "t"\n', "missing required key"),
])
def test_schema_errors(text, needle):
    with pytest.raises(ScenarioError, match=needle):
        loads(text)


def test_large_seed_accepted():
    assert loads(HEAD + f"seed = {2**63 - 1}\n").seed == 2**63 - 1


@pytest.mark.parametrize("family", [
    "translation{1.2}", "bump{[0.1, 0.2], 0.5, 2.0}", "coordinate{2, 0.5}*plateau{[-1, -1], [1, 1]}",
    "coordinate{1}·plateau{[-1, -1], [1, 1], 0.3}", "rotation{1.5, [0.1, 0.0]}",
    "custom{x1*sin(x2)}", "zero{}", "sin(pi*t)*bump{[0, 0], 0.5}", "(1 + t)·translation{0.5}",
])
def test_family_declarations_build(family):
    scn = loads(HEAD + f"[hamiltonians.F]\nfamily = \"{family}\"\n")
    F = build_hamiltonian(scn, "F")
    assert F.dimension == 2 and F.compact
    assert F.check_support() == 0.0
    assert np.all(np.isfinite(F.value(0.3, np.zeros((1, 2)))))


def test_profile_prefix_is_applied():
    scn = loads(HEAD + '[hamiltonians.F]\nfamily = "(2*t)*bump{[0, 0], 0.5, 1.0}"\n')
    assert build_hamiltonian(scn, "F")(0.25, np.zeros(2)) == pytest.approx(0.5)


# -- running ----------------------------------------------------------------------------------


def test_bundled_scenarios_cover_every_op():
    reached = set()
    for name in cli.bundled_scenarios():
        text = (resources.files("hoferlab") / "scenarios" / f"{name}.toml").read_text()
        for exp in loads(text, name).experiments:
            reached |= ops.covered(exp["op"], exp)
    assert set(ops.OPERATIONS) <= reached
    assert {"pair_groupoid", "cotangent_heisenberg"} <= reached


def test_record_schema_and_exit_codes(tmp_path, capsys):
    text = HEAD + ('[hamiltonians.B]\nfamily = "bump{[0, 0], 0.5, 1.0}"\n'
                   '[[experiments]]\nop = "oscillation"\nhamiltonian = "B"\nexpect = 1.0\n'
                   '[[experiments]]\nop = "oscillation"\nhamiltonian = "B"\nexpect = 2.0\n')
    code, out, err = run_cli(capsys, "run", write(tmp_path, text))
    records = [json.loads(line) for line in out.splitlines()]
    assert code == 1 and "failed" in err
    assert [r["status"] for r in records] == ["pass", "fail"]
    for i, r in enumerate(records):
        assert tuple(r) == runner.FIELDS
        assert r["schema_version"] == scenario.SCHEMA_VERSION and r["index"] == i
        assert r["runtime_ms"] is None


def test_failure_carries_diagnostics():
    scn = loads(HEAD + '[[experiments]]\nop = "sharp"\npoint = [0, 0, 0]\ncovector = [1, 0]\n')
    (rec,) = runner.run_scenario(scn)
    assert rec["status"] == "fail" and "ContractViolation" in rec["diagnostics"]["error"]


def test_unsupported_geometry_is_not_implemented():
    scn = loads(HEAD + '[[experiments]]\nop = "gromov_width_lower"\n'
                       'region = { lo = [0, 0], hi = [1, 1] }\n')
    (rec,) = runner.run_scenario(scn)
    assert rec["status"] == "not-implemented"


def test_nonfinite_values_become_null():
    assert runner.plain({"a": np.inf, "b": [np.nan, np.float64(1.5)], "c": np.bool_(True)}) == \
        {"a": None, "b": [None, 1.5], "c": True}


def test_timing_only_on_request():
    scn = loads(HEAD + '[[experiments]]\nop = "sharp"\npoint = [0, 0]\ncovector = [1, 0]\n')
    assert runner.run_scenario(scn)[0]["runtime_ms"] is None
    assert runner.run_scenario(scn, timing=True)[0]["runtime_ms"] >= 0


def test_reports_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(capsys, "run", "poisson-basics", "leaves", "--out", str(a))[0] == 0
    assert run_cli(capsys, "run", "poisson-basics", "leaves", "--out", str(b), "--jobs", "3")[0] == 0
    for name in ("poisson-basics.jsonl", "poisson-basics.csv", "leaves.jsonl", "leaves.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = list(csv.reader(io.StringIO((a / "leaves.csv").read_text())))
    assert tuple(rows[0]) == runner.FIELDS and len(rows) == 5


def test_seed_override_is_deterministic():
    scn = loads(HEAD + '[[experiments]]\nop = "jacobi_residual"\nsamples = 5\n')
    assert runner.run_scenario(scn, seed=1) == runner.run_scenario(scn, seed=1)


def test_format_selection(tmp_path, capsys):
    run_cli(capsys, "run", write(tmp_path, HEAD), "--out", str(tmp_path / "o"), "--format", "csv")
    assert [p.name for p in (tmp_path / "o").iterdir()] == ["t.csv"]


def test_missing_file_exits_two(capsys):
    code, _, err = run_cli(capsys, "run", "no-such-scenario")
    assert code == 2 and "no scenario" in err


# -- other commands -------------------------------------------------------------------------------


def test_unknown_suite_exits_two(capsys):
    assert run_cli(capsys, "suite", "nope")[0] == 2


def test_groupoid_suite_passes_and_is_deterministic(capsys, tmp_path):
    code, first, _ = run_cli(capsys, "suite", "groupoid", "--seed", "4", "--out", str(tmp_path))
    _, second, _ = run_cli(capsys, "suite", "groupoid", "--seed", "4")
    assert code == 0 and first == second
    assert (tmp_path / "suite-groupoid.txt").read_text() == first


def test_listing_and_describe(capsys):
    code, out, _ = run_cli(capsys, "list-structures")
    assert code == 0 and "heisenberg3" in out and "cotangent:heisenberg3" in out
    code, out, _ = run_cli(capsys, "list-families")
    assert "translation" in out and "disk-displacement-r05" in out
    code, out, _ = run_cli(capsys, "describe", "product2x1")
    assert json.loads(out)["casimirs"] == 1
    code, out, _ = run_cli(capsys, "describe", "pair:symplectic2n:1")
    assert json.loads(out)["source_axes"] == [2, 3]
    assert run_cli(capsys, "describe", "nonsense")[0] == 2


@pytest.mark.parametrize("name", cli.bundled_scenarios())
def test_bundled_scenario_passes(name):
    text = (resources.files("hoferlab") / "scenarios" / f"{name}.toml").read_text()
    scn = loads(text, name)
    records = runner.run_scenario(scn, jobs=4)
    assert len(records) == len(scn.experiments)
    assert [r for r in records if r["status"] != "pass"] == []
    if name == "disk-displacement-r05":
        (energy,) = [r for r in records if r["op"] == "energy_capacity_check"]
        assert energy["value"] is True

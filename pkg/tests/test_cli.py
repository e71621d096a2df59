import json

import pytest

from resolvent_kit import cli
from resolvent_kit.families import read_family_csv

NIL_UPPER = "2\n0 1\n0 0\n"
SCALAR = "1\n-1\n"


@pytest.fixture
def gen_file(tmp_path):
    def write(text, name="gen.txt"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def test_ml_prints_value(capsys):
    assert cli.run(["ml", "--alpha", "1", "--beta", "1", "--z", "1"]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert first.startswith("2.71828182845")


def test_ml_json_report(tmp_path, capsys):
    out = tmp_path / "ml.json"
    assert cli.run(["ml", "--alpha", "0.5", "--z", "-1", "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["schema"] == cli.SCHEMA
    assert payload["regime"] == "series"
    assert payload["value"][1] == 0.0


@pytest.mark.parametrize("argv,expect", [
    (["kernel", "eval", "g(2)", "--t", "1.5"], "1.5\t1.5"),
    (["kernel", "conv", "g(0.5)", "g(1.5)"], "g(2)"),
    (["kernel", "pow", "g(0.5)", "4"], "g(2)"),
])
def test_kernel_commands(argv, expect, capsys):
    assert cli.run(argv) == 0
    assert expect in capsys.readouterr().out


def test_funceq_pass_and_negative_control(gen_file, capsys):
    g = gen_file(NIL_UPPER)
    base = ["verify", "funceq", "--pair", "semigroup", "--generator", g, "--grid", "2:64",
            "--equation", "cauchy"]
    assert cli.run(base) == 0
    assert cli.run(base + ["--perturb", "1e-2"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_funceq_validity_is_usage_error(gen_file, capsys):
    g = gen_file(NIL_UPPER)
    argv = ["verify", "funceq", "--pair", "semigroup", "--generator", g, "--grid", "2:16",
            "--equation", "dalembert"]
    assert cli.run(argv) == 2
    assert "ValidityViolation" in capsys.readouterr().err


def test_funceq_divergent_moment_flag(gen_file, tmp_path):
    out = tmp_path / "rof.json"
    argv = ["verify", "funceq", "--alpha", "1.5", "--beta", "1", "--generator", gen_file(SCALAR),
            "--grid", "2:16", "--equation", "rof_translation", "--out", str(out)]
    assert cli.run(argv) == 1
    payload = json.loads(out.read_text())
    assert "divergent-moment" in payload["flags"] and payload["pass"] is False


@pytest.mark.parametrize("argv", [
    ["suite", "no-such-suite"],
    ["ml", "--alpha", "0.5"],
    ["verify", "volterra", "--pair", "semigroup"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    assert cli.run(argv) == 2
    assert capsys.readouterr().err


def test_extend_then_verify_roundtrip(gen_file, tmp_path, capsys):
    csv = tmp_path / "ext.csv"
    argv = ["extend", "--method", "general", "--n", "1", "--pair", "semigroup",
            "--generator", gen_file(NIL_UPPER), "--grid", "1:32", "--out", str(csv)]
    assert cli.run(argv) == 0
    fam = read_family_csv(csv)
    assert fam.grid.text() == "2:64"
    report = tmp_path / "v.json"
    assert cli.run(["verify", "volterra", "--family", str(csv), "--tier", "coarse", "--out", str(report)]) == 0
    payload = json.loads(report.read_text())
    assert payload["grid"] == "2:64" and payload["tier"] == "coarse"


def test_reports_are_deterministic(gen_file, tmp_path):
    g = gen_file("2\n-1 0.3\n0.2 -2\n")
    texts = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        cli.run(["verify", "volterra", "--pair", "frac(0.5,0)", "--generator", g, "--grid", "1:32",
                 "--out", str(out)])
        d = json.loads(out.read_text())
        d.pop("runtime", None)
        texts.append(d)
    assert texts[0] == texts[1]


def test_seed_only_moves_the_random_probe():
    from resolvent_kit.families import default_probes

    p1, p2 = default_probes(3, 1), default_probes(3, 2)
    assert (p1[:, :3] == p2[:, :3]).all()
    assert not (p1[:, 3] == p2[:, 3]).all()


def test_atomic_write(tmp_path):
    path = tmp_path / "x.txt"
    cli.atomic_write(str(path), "one")
    cli.atomic_write(str(path), "two")
    assert path.read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]

import json
import subprocess
import sys
from math import e, log

import pytest

from npconvex import SaddleFailureError, cli, documents
from npconvex.instances import EXAMPLE_NAMES


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def docs(tmp_path, capsys):
    paths = {}
    for name in EXAMPLE_NAMES:
        code, out, _ = run(capsys, "example", name)
        assert code == 0
        path = tmp_path / f"{name}.json"
        path.write_text(out)
        paths[name] = path
    return paths


def write(tmp_path, doc, name="doc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_example_ex31_content(capsys):
    _, out, _ = run(capsys, "example", "ex31")
    doc = json.loads(out)
    assert doc["atoms"]["mu"] == [0.5, 0.5]
    assert doc["rho1"] == {"type": "linear", "density": [1.0, 1.0]}
    assert doc["rho2"] == {"type": "entropic", "reference": [1.5, 0.5]}
    assert (doc["k1"], doc["k2"], doc["alpha"]) == (0.0, 1.0, 0.5)
    assert doc["density_convention"] == "dP/dmu" and "format_version" in doc


def test_example_ex21_and_ex41(capsys):
    doc = json.loads(run(capsys, "example", "ex21")[1])
    assert doc["rho1"]["density"] == [2.0, 0.0] and doc["rho2"]["density"] == [0.0, 2.0]
    doc = json.loads(run(capsys, "example", "ex41")[1])
    assert doc["alpha"] == (3 - e) / (e - 1)
    assert doc["atoms"]["mu"] == [(e - 2) / (e - 1), 1 - (e - 2) / (e - 1)]
    assert "two-atom reduction" in doc["comment"]


def test_unknown_example(capsys):
    code, _, err = run(capsys, "example", "ex99")
    assert code == 1
    assert all(name in err for name in EXAMPLE_NAMES)


@pytest.mark.parametrize("name", EXAMPLE_NAMES)
def test_problem_round_trip(capsys, name):
    doc = json.loads(run(capsys, "example", name)[1])
    spec, _ = documents.problem_from_dict(doc)
    assert documents.problem_to_dict(spec, doc.get("comment")) == doc
    prob = json.loads(run(capsys, "example", name, "--as-probabilities")[1])
    spec_p, _ = documents.problem_from_dict(prob)
    assert spec_p.space == spec.space
    assert spec_p.alpha == spec.alpha


def test_solve_ex33_z(capsys, docs):
    code, out, _ = run(capsys, "solve", str(docs["ex33"]))
    assert code == 0
    sol = json.loads(out)
    assert sol["z"] == 1.10363832351
    assert sol["x_star"] == {"0": 1.0, "1": 0.0}
    assert sol["format_version"] == documents.FORMAT_VERSION and sol["status"] == "ok"


def test_solve_ex41(capsys, docs, tmp_path):
    doc = json.loads(docs["ex41"].read_text())
    code, out, _ = run(capsys, "solve", str(docs["ex41"]))
    assert code == 0
    # at the stated level the optimum is not (0, 1)
    assert json.loads(out)["beta"] == pytest.approx(0.491868776044, abs=1e-12)
    doc["alpha"] = (3 - e) / (e - 1) ** 2
    code, out, _ = run(capsys, "solve", write(tmp_path, doc))
    assert json.loads(out)["beta"] == float(f"{log(e - 1):.12g}") == 0.541324854613


def test_solve_infeasible(capsys, docs, tmp_path):
    doc = json.loads(docs["ex31"].read_text())
    doc["k1"] = 0.8
    code, out, err = run(capsys, "solve", write(tmp_path, doc))
    assert code == 2
    assert "rho1(k1)" in err and "significance level" in err
    assert json.loads(out)["status"] == "infeasible"


def test_solve_unverified_still_emits(capsys, docs, monkeypatch):
    def fail(spec, config):
        raise SaddleFailureError("gap", lower_bound=0.1, upper_bound=0.2)

    monkeypatch.setattr(cli, "solve", fail)
    code, out, _ = run(capsys, "solve", str(docs["ex31"]))
    assert code == 3
    doc = json.loads(out)
    assert doc["status"] == "saddle_failure" and doc["lower_bound"] == 0.1


def test_parse_errors_are_positioned(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"atoms": {"mu": [0.5, 0.5]},\n "k1": 0,, }')
    code, _, err = run(capsys, "solve", str(bad))
    assert code == 1 and "line 2" in err


def test_field_errors_name_the_path(capsys, docs, tmp_path):
    doc = json.loads(docs["ex31"].read_text())
    doc["rho1"]["density"] = [1.0, "x"]
    code, _, err = run(capsys, "solve", write(tmp_path, doc))
    assert code == 1 and "rho1.density[1]" in err
    doc = json.loads(docs["ex31"].read_text())
    doc["rho2"]["type"] = "quantile"
    code, _, err = run(capsys, "solve", write(tmp_path, doc))
    assert code == 1 and "rho2.type" in err


def test_negative_generator_penalty_rejected(capsys, docs, tmp_path):
    doc = json.loads(docs["ex31"].read_text())
    doc["rho2"] = {"type": "finitely_generated", "generators": [{"density": [1.0, 1.0], "penalty": -0.5}]}
    code, _, err = run(capsys, "certify", write(tmp_path, doc))
    assert code == 1 and "penalty" in err


def test_certify(capsys, docs):
    code, out, _ = run(capsys, "certify", str(docs["ex31"]), "--trials", "1000", "--seed", "7")
    assert code == 0 and json.loads(out)["passed"]
    code, out, _ = run(capsys, "certify", str(docs["ex33"]))
    report = json.loads(out)
    assert code == 0
    assert all(r["passed"] and r["deviation"] <= 1.1e-3 for r in report["rho2"]["representation"])


def test_oracle_commands(capsys, docs, tmp_path):
    code, out, _ = run(capsys, "oracle", str(docs["ex31"]), "--test-res", "101", "--simplex-res", "10000")
    assert code == 0 and json.loads(out)["passed"]
    code, _, _ = run(capsys, "oracle", str(docs["ex33"]))
    assert code == 0
    five = {
        "atoms": {"mu": [0.2] * 5},
        "rho1": {"type": "linear", "density": [1.0] * 5},
        "rho2": {"type": "entropic", "reference": [1.0] * 5},
        "k1": 0,
        "k2": 1,
        "alpha": 0.5,
    }
    code, out, err = run(capsys, "oracle", write(tmp_path, five))
    assert code == 4
    assert json.loads(out)["required"] == 101**5


def test_out_flag_and_determinism(capsys, docs, tmp_path):
    for name in EXAMPLE_NAMES:
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(capsys, "solve", str(docs[name]), "--out", str(a))[0] == 0
        assert run(capsys, "solve", str(docs[name]), "--out", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()


def test_solution_round_trip(capsys, docs):
    _, out, _ = run(capsys, "solve", str(docs["ex41"]))
    assert documents.write_solution(documents.read_solution(out)) == out


def test_infinite_values_marked():
    doc = documents.write_solution({"x": float("inf"), "y": [1 / 3]})
    assert json.loads(doc) == {"x": "+inf", "y": [0.333333333333]}
    assert documents.read_solution(doc)["x"] == float("inf")


def test_as_probabilities_matches(capsys, tmp_path):
    _, dens, _ = run(capsys, "example", "ex33")
    _, prob, _ = run(capsys, "example", "ex33", "--as-probabilities")
    assert json.loads(prob)["rho1"]["reference"] == [0.25, 0.75]
    a = json.loads(run(capsys, "solve", write(tmp_path, json.loads(dens), "d.json"))[1])
    b = json.loads(run(capsys, "solve", write(tmp_path, json.loads(prob), "p.json"))[1])
    assert a["beta"] == b["beta"] and a["z"] == b["z"]
    # flag overrides a document written in density form
    doc = json.loads(prob)
    doc["density_convention"] = "dP/dmu"
    code, _, _ = run(capsys, "solve", write(tmp_path, doc, "q.json"), "--as-probabilities")
    assert code == 0


def test_verbose_summary(capsys, docs):
    code, _, err = run(capsys, "solve", str(docs["ex31"]), "--verbose", "--tol-opt", "1e-9")
    assert code == 0 and "beta" in err


def test_module_entry_point(docs):
    res = subprocess.run([sys.executable, "-m", "npconvex", "example", "ex21"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["k2"] == 1.0

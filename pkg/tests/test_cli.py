import csv
import io
import json

import pytest

from rankcollide.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, config_hash, main, run_sweep


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def finite(sigma2, g=None, x0=None):
    N = len(sigma2)
    return {"N": N, "g": g or [0.0] * N, "sigma2": sigma2,
            "x0": x0 or [float(i) for i in range(N)]}


@pytest.fixture
def infinite_doc():
    return {"n0": 1, "g_head": [], "sigma2_head": [], "g_tail": 0.0, "sigma2_tail": 1.0,
            "init": {"kind": "linear", "a": 0.0, "b": 0.5}}


# ----------------------------------------------------------------------------
# check / validate
# ----------------------------------------------------------------------------


def test_check_remark_example_holds(tmp_path, capsys):
    spec = write(tmp_path, "s.json", finite([1, 0.5, 0.5, 1]))
    assert main(["check", spec, "--n", "4"]) == EXIT_OK
    (report,) = json.loads(capsys.readouterr().out)
    assert report["label"] == "TOTAL" and report["holds"]


def test_check_thm11_fails(tmp_path, capsys):
    spec = write(tmp_path, "s.json", finite([2, 1, 1, 1]))
    assert main(["check", spec, "--n", "4", "--criterion", "THM11"]) == EXIT_FAIL
    (report,) = json.loads(capsys.readouterr().out)
    assert report["margin"] == -0.5


def test_check_zero_diffusion_is_input_error(tmp_path, capsys):
    spec = write(tmp_path, "s.json", finite([1, 0, 1, 1]))
    assert main(["check", spec, "--n", "4"]) == EXIT_INPUT
    assert "sigma2[2]" in capsys.readouterr().err


def test_check_malformed_spec_names_field(tmp_path, capsys):
    spec = write(tmp_path, "s.json", {"N": 2, "g": [0, 0], "sigma2": "oops", "x0": [0, 1]})
    assert main(["check", spec]) == EXIT_INPUT
    assert "sigma2" in capsys.readouterr().err


def test_check_missing_file(tmp_path):
    assert main(["check", str(tmp_path / "nope.json")]) == EXIT_INPUT


def test_check_table_and_csv_formats(tmp_path, capsys):
    spec = write(tmp_path, "s.json", finite([1, 0.5, 0.5, 1]))
    code = main(["check", spec, "--criterion", "LEMMA31", "--format", "table"])
    out = capsys.readouterr().out
    assert code == EXIT_FAIL  # TRIPLE_123 fails
    assert "TRIPLE_123" in out and "NO" in out
    main(["check", spec, "--criterion", "COR22", "--criterion", "COR24", "--format", "csv"])
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows == [["criterion", "holds", "margin"], ["COR22", "true", "0.125"],
                    ["COR24", "false", "-0.25"]]


def test_check_strictness_override(tmp_path, capsys):
    spec = write(tmp_path, "s.json", finite([2, 1, 1, 1, 1]))
    assert main(["check", spec, "--n", "5", "--criterion", "THM11"]) == EXIT_FAIL
    capsys.readouterr()
    assert main(["check", spec, "--n", "5", "--criterion", "THM11",
                 "--strictness", "nonstrict"]) == EXIT_OK
    (report,) = json.loads(capsys.readouterr().out)
    assert "printed sense" in report["note"]


def test_check_infinite(tmp_path, capsys, infinite_doc):
    spec = write(tmp_path, "inf.json", {**infinite_doc, "n0": 2, "g_head": [0.0],
                                        "sigma2_head": [2.0]})
    assert main(["check", spec, "--n", "4"]) == EXIT_FAIL
    assert main(["check", spec, "--n", "6"]) == EXIT_OK
    assert main(["check", spec]) == EXIT_INPUT


def test_check_writes_manifest(tmp_path):
    spec = write(tmp_path, "s.json", finite([1, 1, 1, 1]))
    out = tmp_path / "out"
    assert main(["check", spec, "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "check" and len(manifest["config_hash"]) == 64
    assert (out / "check.json").exists()


def test_validate(tmp_path, capsys, infinite_doc):
    assert main(["validate", write(tmp_path, "a.json", finite([1, 1]))]) == EXIT_OK
    assert main(["validate", write(tmp_path, "b.json", finite([1, -1]))]) == EXIT_FAIL
    bad = {**infinite_doc, "init": {"kind": "log", "c": 1.0, "beta": 0.5}}
    assert main(["validate", write(tmp_path, "c.json", bad)]) == EXIT_FAIL
    assert "[series]" in capsys.readouterr().out
    weird = {**infinite_doc, "init": {"kind": "spiral"}}
    assert main(["validate", write(tmp_path, "d.json", weird)]) == EXIT_INPUT


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


# ----------------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------------


def test_simulate_single_step_smoke(tmp_path):
    spec = write(tmp_path, "s.json", finite([1, 1, 1], x0=[0.0, 0.5, 1.0]))
    out = tmp_path / "run"
    args = ["simulate", spec, "--paths", "1", "--T", "0.1", "--dt", "0.1", "--seed", "3",
            "--out", str(out), "--window", "1:3"]
    assert main(args) == EXIT_OK
    first = (out / "aggregate.csv").read_bytes()
    assert main(args) == EXIT_OK
    assert (out / "aggregate.csv").read_bytes() == first
    doc = json.loads((out / "aggregate.json").read_text())
    assert doc["paths"] == 1 and doc["steps"] == 1
    assert json.loads((out / "manifest.json").read_text())["seed"] == 3


def test_simulate_requires_seed_and_out(tmp_path):
    spec = write(tmp_path, "s.json", finite([1, 1]))
    assert main(["simulate", spec, "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert main(["simulate", spec, "--seed", "1"]) == EXIT_INPUT


def test_simulate_infinite_needs_truncation(tmp_path, capsys, infinite_doc):
    spec = write(tmp_path, "inf.json", infinite_doc)
    assert main(["simulate", spec, "--seed", "1", "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "truncation-M" in capsys.readouterr().err


def test_simulate_infinite_with_extras(tmp_path, infinite_doc):
    spec = write(tmp_path, "inf.json", infinite_doc)
    out = tmp_path / "o"
    assert main(["simulate", spec, "--seed", "1", "--out", str(out), "--truncation-M", "20",
                 "--buffer-B", "5", "--paths", "20", "--dt", "0.01", "--n", "4",
                 "--trajectory", "--convergence-check"]) == EXIT_OK
    doc = json.loads((out / "aggregate.json").read_text())
    # windows reach rank 15, right below the buffer names 16..20
    assert doc["truncation"]["boundary_contact_fraction"] > 0.5
    assert len(doc["windows"]) == 15 - 4 + 1
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,X_1,X_2") and header.endswith("X_20")
    assert (out / "convergence.json").exists()


def test_simulate_unwritable_out(tmp_path):
    spec = write(tmp_path, "s.json", finite([1, 1]))
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", spec, "--seed", "1", "--out", str(blocker / "sub"),
                 "--paths", "2", "--dt", "0.1"]) == EXIT_INPUT


def test_simulate_thread_count_does_not_change_bytes(tmp_path):
    spec = write(tmp_path, "s.json", finite([1, 0.2, 1], g=[0.5, 0, -0.5], x0=[-0.1, 0, 0.1]))
    outputs = []
    for threads in ("1", "3"):
        out = tmp_path / f"t{threads}"
        assert main(["simulate", spec, "--seed", "5", "--out", str(out), "--paths", "3000",
                     "--dt", "0.01", "--threads", threads, "--window", "1:3"]) == EXIT_OK
        outputs.append(((out / "aggregate.csv").read_bytes(),
                        (out / "aggregate.json").read_bytes()))
    assert outputs[0] == outputs[1]


# ----------------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------------


def read_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_sweep_remark_family_all_hold(tmp_path, capsys):
    template = write(tmp_path, "t.json", {"family": "remark23", "criteria": ["COR22"]})
    assert main(["sweep", template, "--axis", "N=4:10"]) == EXIT_OK
    rows = read_rows(capsys.readouterr().out)
    assert [int(r["N"]) for r in rows] == list(range(4, 11))
    assert all(r["holds"] == "true" for r in rows)


def test_sweep_n_margin_nondecreasing():
    text = run_sweep({"spec": finite([1.3, 1.0, 1.9, 1.1, 1.4, 1.2, 1.0, 1.6]),
                      "criteria": ["THM11"]}, {"n": list(range(4, 9))})
    margins = [float(r["margin"]) for r in read_rows(text)]
    assert margins == sorted(margins)


def test_sweep_boundary_flips_once():
    """EQ_TOTAL4 on (s, 1, 1, 1), s >= 1: holds iff s < 3/8 (s + 3), i.e. s < 9/5."""
    values = [1.0 + 0.05 * i for i in range(41)]
    text = run_sweep({"spec": finite([1, 1, 1, 1]), "criteria": ["EQ_TOTAL4"]},
                     {"sigma2[1]": values})
    holds = [r["holds"] == "true" for r in read_rows(text)]
    flips = sum(a != b for a, b in zip(holds, holds[1:]))
    assert flips == 1

    # bisection on the verdict converges to the closed-form threshold
    lo, hi = 1.0, 3.0
    for _ in range(60):
        mid = (lo + hi) / 2
        row = read_rows(run_sweep({"spec": finite([1, 1, 1, 1]), "criteria": ["EQ_TOTAL4"]},
                                  {"sigma2[1]": [mid]}))[0]
        lo, hi = (mid, hi) if row["holds"] == "true" else (lo, mid)
    assert lo == pytest.approx(1.8, abs=1e-12)


def test_sweep_with_simulation(tmp_path, capsys):
    template = write(tmp_path, "t.json", {
        "family": "constant", "criteria": ["COR24"],
        "simulate": {"T": 0.1, "dt": 0.01, "paths": 10, "windows": [[1, 3]]}})
    out = tmp_path / "sw"
    assert main(["sweep", template, "--axis", "N=3,4", "--seed", "2", "--out", str(out)]) == EXIT_OK
    rows = read_rows((out / "sweep.csv").read_text())
    assert len(rows) == 2 * 3
    assert {"proximity_fraction", "stderr", "epsilon"} <= set(rows[0])
    assert (out / "manifest.json").exists()


def test_sweep_empty_grid(tmp_path):
    template = write(tmp_path, "t.json", {"family": "remark23"})
    assert main(["sweep", template]) == EXIT_INPUT
    assert main(["sweep", template, "--axis", "N=5:4"]) == EXIT_INPUT

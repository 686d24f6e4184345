import json
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from fswel import io
from fswel.cli import read_replicates, run_cli
from fswel.errors import InvariantViolation, SchemaError
from fswel.simulation import summarize

MODEL = {"covariates": ["x"], "assoc_terms": ["x", "G"], "miss_terms": ["1", "Y", "x", "G"]}
HEADER = "id,y,x,r,g,proxy_kind,gs,gc,gm,gf\n"


def toy_paths():
    base = resources.files("fswel") / "datasets"
    return Path(str(base / "toy.csv")), Path(str(base / "toy.yaml"))


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def model():
    return io.ModelConfig.from_dict(MODEL)


# -- ingestion ----------------------------------------------------------------


def test_round_trip(tmp_path, sim_sample):
    _, data = sim_sample
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    io.write_dataset(data, p1)
    loaded, report = io.load_dataset(p1, model())
    io.write_dataset(loaded, p2)
    assert p1.read_text() == p2.read_text()
    for field in ("y", "x", "r", "g", "proxy"):
        assert np.array_equal(getattr(loaded, field), getattr(data, field))
    assert report["n"] == len(data)
    assert report["patterns"] == [{"x": 0.0}, {"x": 1.0}]


def test_empty_data_section(tmp_path):
    with pytest.raises(SchemaError, match="no records"):
        io.load_dataset(write(tmp_path, HEADER), model())


def test_genotype_with_r0_is_invariant_violation(tmp_path):
    text = HEADER + "a1,0,1,1,1,none,,,,\nb7,0,0,0,1,none,,,,\n"
    with pytest.raises(InvariantViolation) as err:
        io.load_dataset(write(tmp_path, text), model())
    assert err.value.row == "b7"


@pytest.mark.parametrize(
    "row, column",
    [
        ("1,2,0,1,1,none,,,,", "y"),
        ("1,0,0,1,3,none,,,,", "g"),
        ("1,0,abc,1,1,none,,,,", "x"),
        ("1,0,,1,1,none,,,,", "x"),
        ("1,0,0,1,1,cousin,,,,", "proxy_kind"),
        ("1,0,0,0,,spouse_child,1,x,,", "gc"),
    ],
)
def test_schema_errors_carry_location(tmp_path, row, column):
    with pytest.raises(SchemaError) as err:
        io.load_dataset(write(tmp_path, HEADER + row + "\n"), model())
    assert err.value.row == 2 and err.value.column == column


def test_missing_header_column(tmp_path):
    with pytest.raises(SchemaError) as err:
        io.load_dataset(write(tmp_path, "id,y,r,g,proxy_kind\n1,0,1,1,none\n"), model())
    assert err.value.column == "x"


@pytest.mark.parametrize(
    "row",
    ["1,0,0,0,,two_parents,,,1,", "1,0,0,0,,one_parent,,,1,2", "1,0,0,0,,none,1,,,", "1,0,0,0,,one_parent,1,,,"],
)
def test_proxy_fields_must_match_kind(tmp_path, row):
    with pytest.raises(InvariantViolation):
        io.load_dataset(write(tmp_path, HEADER + row + "\n"), model())


def test_one_parent_from_either_column(tmp_path):
    text = HEADER + "1,0,0,0,,one_parent,,,2,\n2,0,0,0,,one_parent,,,,2\n3,0,0,1,1,none,,,,\n"
    data, _ = io.load_dataset(write(tmp_path, text), model())
    assert data.proxy[0] == data.proxy[1]


def test_parent_proxy_fixture_counts(tmp_path):
    rng = np.random.default_rng(0)
    lines = [HEADER.rstrip("\n")]
    k = 0

    def add(y, r, kind, rel=("", "", "", "")):
        nonlocal k
        k += 1
        g = str(rng.integers(0, 3)) if r else ""
        lines.append(",".join([str(k), str(y), str(rng.integers(0, 2)), str(r), g, kind, *rel]))

    for _ in range(521):
        add(1, 1, "none")
    for _ in range(351):
        add(0, 1, "none")
    for _ in range(328):
        add(0, 0, "two_parents", ("", "", "1", "0"))
    for _ in range(245):
        add(0, 0, "one_parent", ("", "", "", "2"))
    _, report = io.load_dataset(write(tmp_path, "\n".join(lines) + "\n"), model())
    assert report["cases"] == 521 and report["complete_cases"] == 521
    assert report["controls"] == 924 and report["complete_controls"] == 351
    assert report["missing_by_proxy"] == {"one_parent": 245, "two_parents": 328}
    assert report["missing_without_proxy"] == 0


def test_categorical_expansion(tmp_path):
    cfg = io.ModelConfig.from_dict(
        {
            "covariates": ["age"],
            "categorical": {"age": {"levels": ["<24", "24-30", ">30"], "reference": "<24"}},
            "assoc_terms": ["age[24-30]", "age[>30]", "G"],
            "miss_terms": ["1", "age[>30]"],
        }
    )
    text = "id,y,age,r,g,proxy_kind\n1,0,<24,1,0,none\n2,1,>30,1,2,none\n"
    data, report = io.load_dataset(write(tmp_path, text), cfg)
    assert data.covariates == ("age[24-30]", "age[>30]")
    np.testing.assert_array_equal(data.x, [[0, 0], [0, 1]])
    bad = "id,y,age,r,g,proxy_kind\n1,0,40+,1,0,none\n"
    with pytest.raises(SchemaError):
        io.load_dataset(write(tmp_path, bad, "bad.csv"), cfg)


def test_model_config_validation():
    with pytest.raises(ValueError):
        io.ModelConfig.from_dict({"covariates": ["x"], "assoc_terms": ["x"]})
    with pytest.raises(ValueError):
        io.ModelConfig.from_dict({**MODEL, "extra": 1})


def test_json_helpers(tmp_path):
    p = tmp_path / "r.json"
    io.dump_json({"a": np.float64(np.nan), "b": np.arange(2), "c": np.bool_(True)}, p)
    assert io.load_json(p) == {"a": None, "b": [0, 1], "c": True}
    assert io.config_hash({"a": 1, "b": 2}) == io.config_hash({"b": 2, "a": 1})
    assert io.provenance({}, 3)["seed"] == 3


# -- command line --------------------------------------------------------------


def test_fit_on_bundled_toy_is_byte_identical(tmp_path, capsys):
    data, cfg = toy_paths()
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.json"
        assert run_cli(["fit", "--data", str(data), "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    result = json.loads(outs[0].read_text())
    assert result["provenance"]["seed"] == 7 and result["provenance"]["version"]
    assert result["fswel"]["converged"] and result["fswel"]["final_residual_norm"] < 1e-8
    assert set(result["baselines"]) == {"MCAR", "MAR"}
    assert (tmp_path / "a.txt").read_text().startswith("parameter")
    assert (tmp_path / "a.png").stat().st_size > 0
    assert "FS-WEL (SE)" in capsys.readouterr().out


def test_simulate_then_report_gives_identical_summary(tmp_path, capsys):
    cfg = tmp_path / "sim.yaml"
    cfg.write_text(yaml.safe_dump({"simulation": {"n_cases": 200, "n_controls": 200, "cohort_size": 15000}}))
    out = tmp_path / "reps.csv"
    assert run_cli(["simulate", "--config", str(cfg), "--reps", "3", "--seed", "11", "--out", str(out)]) == 0
    first = (tmp_path / "reps.summary.txt").read_text()
    text = out.read_text()
    assert text.startswith("# software")
    df = read_replicates(out)
    assert df.rep.nunique() == 3
    from fswel.simulation import SimConfig, run_replications

    direct = run_replications(SimConfig(n_cases=200, n_controls=200, cohort_size=15000, reps=3, seed=11))
    pd.testing.assert_frame_equal(summarize(df).table, summarize(direct).table, check_exact=True)
    (tmp_path / "reps.summary.txt").unlink()
    assert run_cli(["report", "--in", str(out)]) == 0
    assert (tmp_path / "reps.summary.txt").read_text() == first
    assert (tmp_path / "reps.png").exists()


def test_exit_codes(tmp_path, sim_sample, capsys):
    data, cfg = toy_paths()
    assert run_cli([]) == 2
    assert run_cli(["fit", "--data", str(data)]) == 2
    bad_cfg = write(tmp_path, "model:\n  covariates: [x]\n", "bad.yaml")
    assert run_cli(["fit", "--data", str(data), "--config", str(bad_cfg), "--out", str(tmp_path / "o.json")]) == 2
    bad_data = write(tmp_path, HEADER + "1,0,0,0,1,none,,,,\n")
    assert run_cli(["fit", "--data", str(bad_data), "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == 3
    missing = tmp_path / "nope.csv"
    assert run_cli(["fit", "--data", str(missing), "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == 5
    # every subject genotyped: the availability model is not identified
    _, sample = sim_sample
    full = tmp_path / "full.csv"
    io.write_dataset(sample.take(sample.r == 1), full)
    cfg2 = write(tmp_path, yaml.safe_dump({"model": MODEL}), "m.yaml")
    assert run_cli(["fit", "--data", str(full), "--config", str(cfg2), "--out", str(tmp_path / "o.json")]) == 4
    assert run_cli(["report", "--in", str(write(tmp_path, "a,b\n1,2\n", "x.csv"))]) == 3
    err = capsys.readouterr().err
    assert "CompleteSeparation" in err


def test_failure_budget_exit_code(tmp_path, capsys):
    cfg = tmp_path / "sim.yaml"
    sim = {"n_cases": 150, "n_controls": 150, "cohort_size": 10000}
    cfg.write_text(yaml.safe_dump({"simulation": sim, "solver": {"max_outer": 1}}))
    out = tmp_path / "reps.csv"
    assert run_cli(["simulate", "--config", str(cfg), "--reps", "2", "--out", str(out), "--no-figure"]) == 6
    assert read_replicates(out).query("method == 'FS-WEL'").converged.sum() == 0

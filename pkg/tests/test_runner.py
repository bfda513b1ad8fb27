import copy
import json
from pathlib import Path

import numpy as np
import pytest

from tomosemi import runner
from tomosemi.core_ops import operator_to_json
from tomosemi.runner import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

FINITE = {
    "schema_version": 1,
    "representation": {"kind": "discrete_weyl", "d": 3},
    "semigroup": {"kind": "compound_poisson", "base": {"support": [[1, 0], [0, 1]], "weights": [0.5, 0.5]}, "rate": 1.0},
    "state": {"kind": "random", "seed": 1},
    "time_grid": [0, 0.5, 1],
}
PLANE = {
    "schema_version": 1,
    "representation": {"kind": "fock_displacement", "N": 32, "grid": {"n": 64}},
    "semigroup": {"kind": "gaussian", "diffusion": [[1, 0], [0, 1]]},
    "state": {"kind": "fock", "n": 0},
    "time_grid": [0, 0.5, 1],
    "monte_carlo": {"n_samples": 20000},
}


def config(base, experiment, **changes):
    cfg = copy.deepcopy(base)
    cfg["experiment"] = experiment
    cfg.update(changes)
    return cfg


@pytest.mark.parametrize("experiment", [e for e in runner.EXPERIMENTS if e != "bochner_check"])
def test_finite_experiments_pass(experiment):
    report = runner.run(config(FINITE, experiment))
    assert report.status == "pass"
    assert report.records


@pytest.mark.parametrize("experiment", runner.EXPERIMENTS)
def test_plane_experiments_pass(experiment):
    report = runner.run(config(PLANE, experiment))
    assert report.status == "pass", [r.to_dict() for r in report.records]


def test_intertwine_example():
    report = runner.run(runner.load_config(CONFIGS / "finite_intertwine.json"))
    assert report.status == "pass"
    assert all(r.value <= 1e-12 for r in report.records)
    assert len(report.records) == 3


def test_evolve_example():
    report = runner.run(runner.load_config(CONFIGS / "plane_evolve.json"))
    assert report.status == "pass"
    slopes = {r.name: r.value for r in report.records}
    assert slopes["slope_cov_qq"] <= 1e-3 and slopes["slope_cov_pp"] <= 1e-3
    rows = report.data["evolution.csv"].splitlines()
    assert rows[0] == "t,observable_name,value,error_estimate"
    assert len(rows) > 9


def test_report_embeds_resolved_config():
    d = runner.run(config(FINITE, "dequantize")).to_dict()
    assert d["config"]["tolerances"]["isometry"] == runner.DEFAULT_TOLERANCES["isometry"]
    assert d["environment"]["precision"] == "float64"
    assert set(d["timings"]) == {"setup", "experiment"}


def test_status_fails_with_any_record():
    rep = runner.RunReport("evolve", {})
    rep.check("a", 0.1, 1.0)
    assert rep.status == "pass"
    rep.check("b", 2.0, 1.0)
    assert rep.status == "fail"


def test_tight_tolerance_fails():
    cfg = config(FINITE, "dequantize", tolerances={"isometry": 1e-300, "inverse_roundtrip": 1e-300})
    assert runner.run(cfg).status == "fail"


@pytest.mark.parametrize(
    "change, field",
    [
        ({"time_grid": [0, 1, 0.5]}, "time_grid"),
        ({"time_grid": [0.1, 0.5]}, "time_grid"),
        ({"time_grid": [0, 0]}, "time_grid"),
        ({"colour": "blue"}, "colour"),
        ({"schema_version": 2}, "schema_version"),
        ({"representation": {"kind": "discrete_weyl", "d": 4}}, "representation.d"),
        ({"tolerances": {"nonsense": 1.0}}, "tolerances"),
        ({"state": {"kind": "file", "path": "missing.npy"}}, "state.path"),
    ],
)
def test_invalid_config_names_field(change, field):
    cfg = config(FINITE, "dequantize", **change)
    with pytest.raises(ConfigError) as exc:
        runner.validate_config(cfg)
    assert exc.value.field.startswith(field.split(".")[0])
    assert field.split(".")[-1] in exc.value.field or field.split(".")[-1] in str(exc.value)


def test_non_positive_tolerance_rejected():
    with pytest.raises(ConfigError):
        runner.validate_config(config(FINITE, "dequantize", tolerances={"isometry": 0.0}))


def test_missing_field_named():
    cfg = config(FINITE, "dequantize")
    del cfg["semigroup"]
    with pytest.raises(ConfigError) as exc:
        runner.validate_config(cfg)
    assert "semigroup" in exc.value.field


def test_representation_semigroup_mismatch():
    cfg = config(FINITE, "evolve", semigroup=PLANE["semigroup"])
    with pytest.raises(ConfigError):
        runner.validate_config(cfg)


def test_state_file(tmp_path):
    rho = np.diag([0.5, 0.3, 0.2]).astype(complex)
    (tmp_path / "rho.json").write_text(operator_to_json(rho))
    cfg = config(FINITE, "dequantize", state={"kind": "file", "path": "rho.json"})
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    loaded = runner.load_config(tmp_path / "c.json")
    assert runner.run(loaded).status == "pass"


@pytest.mark.parametrize("base, experiment", [(FINITE, "evolve"), (PLANE, "intertwine_check"), (PLANE, "dequantize")])
def test_deterministic_csv(tmp_path, base, experiment):
    cfg = config(base, experiment, seed=4)
    a = runner.write_report(runner.run(cfg), tmp_path / "a").parent
    b = runner.write_report(runner.run(cfg), tmp_path / "b").parent
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_compare_self_empty():
    d = runner.run(config(FINITE, "intertwine_check")).to_dict()
    diff = runner.compare_runs(d, d)
    assert diff["identical"] and not diff["differences"] and not diff["missing"]


def test_compare_seeds_statistical():
    cfg = config(PLANE, "intertwine_check")
    a = runner.run(cfg, seed=1).to_dict()
    b = runner.run(cfg, seed=2).to_dict()
    diff = runner.compare_runs(a, b)
    assert not diff["differences"]
    assert diff["statistical_ok"]


def test_compare_rejects_different_d():
    a = runner.run(config(FINITE, "dequantize")).to_dict()
    b = runner.run(config(FINITE, "dequantize", representation={"kind": "discrete_weyl", "d": 5})).to_dict()
    with pytest.raises(ValueError):
        runner.compare_runs(a, b)


def test_compare_flags_real_difference():
    a = runner.run(config(FINITE, "dequantize")).to_dict()
    b = copy.deepcopy(a)
    b["records"][0]["value"] = 1.0
    assert [e["name"] for e in runner.compare_runs(a, b)["differences"]] == [a["records"][0]["name"]]


def test_schema_is_json():
    schema = runner.config_schema()
    assert schema["additionalProperties"] is False
    json.dumps(schema)

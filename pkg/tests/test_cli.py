import argparse
import csv
import json

import pytest

from conftest import DATA_DIR
from lmh.app.main import main
from lmh.errors import ConfigurationError
from lmh.estimation.tables import MarginalTable
from lmh.generators.ising import IsingSpec, ising_grid
from lmh.routers.commands import apply_overrides, parse_seeds
from lmh.samplers import KernelKind
from lmh.schemas import GroupsDocument, ScheduleConfig
from lmh.services import DerivedGroups, chain_seed, load_config, method_plan, sample_methods
from lmh.symmetry.clustering import zero_unaries


def write_config(path, out, **overrides):
    config = {
        "name": "grid3",
        "source": {"kind": "ising", "spec": {"rows": 3, "cols": 3, "J": 0.4, "field": 0.1, "field_noise": 0.05, "seed": 3}},
        "osa": {"zero_unaries": True},
        "heuristic": {"K": 20},
        "symmetry_mode": "template",
        "schedule": {"iterations": 2000},
        "seeds": [1, 2],
        "out": str(out),
    }
    config.update(overrides)
    path.write_text(json.dumps(config))
    return path


def test_parse_seeds():
    assert parse_seeds("1,2, 3") == [1, 2, 3]
    assert parse_seeds(None) is None
    with pytest.raises(ConfigurationError):
        parse_seeds("1,x")
    with pytest.raises(ConfigurationError):
        parse_seeds(" , ")
    with pytest.raises(ConfigurationError):
        parse_seeds("1,-2")


def test_overrides_win_over_config(tmp_path):
    config = load_config(write_config(tmp_path / "grid.json", tmp_path / "runs"))
    args = argparse.Namespace(seeds="4,5,6", method="lmh", alpha=0.5, iterations=300, out=tmp_path / "other")
    updated = apply_overrides(config, args)
    assert updated.seeds == [4, 5, 6]
    assert updated.kernel.methods == ["lmh"]
    assert updated.kernel.alpha == 0.5
    assert updated.schedule.iterations == 300
    assert updated.out == tmp_path / "other"
    assert config.seeds == [1, 2]


def test_shipped_configs_load():
    for path in sorted((DATA_DIR / "experiments").iterdir()):
        config = load_config(path)
        assert config.seeds
        for file in config.referenced_files():
            assert file.exists()


def test_missing_config_fails(tmp_path, capsys):
    assert main(["generate", "--config", str(tmp_path / "nope.json")]) == 1
    assert "❌ Error" in capsys.readouterr().out


def test_duplicate_seeds_fail(tmp_path):
    config = write_config(tmp_path / "grid.json", tmp_path / "runs")
    assert main(["run", "--config", str(config), "--seeds", "1,1"]) == 1
    assert not (tmp_path / "runs").exists()


def test_failed_run_leaves_no_partial_output(tmp_path):
    broken = tmp_path / "model.json"
    broken.write_text('{"variables": [], "potentials": [{"id": 0}]}')
    out = tmp_path / "runs"
    config = write_config(tmp_path / "file.json", out, source={"kind": "file", "path": "model.json"})
    assert main(["run", "--config", str(config)]) == 1
    assert not out.exists()
    assert not (tmp_path / ".runs.partial").exists()


def test_generate_writes_model(tmp_path, capsys):
    out = tmp_path / "gen"
    config = write_config(tmp_path / "grid.json", out)
    assert main(["generate", "--config", str(config)]) == 0
    model = json.loads((out / "model.json").read_text())
    assert len(model["variables"]) == 9
    assert "✅ Model generated!" in capsys.readouterr().out


def test_symmetrize_writes_groups(tmp_path):
    out = tmp_path / "sym"
    config = write_config(tmp_path / "grid.json", out)
    assert main(["symmetrize", "--config", str(config)]) == 0
    groups = GroupsDocument.model_validate_json((out / "groups.json").read_text())
    assert groups.degree == 9
    # zeroed fields expose the grid's rotations and reflections
    assert groups.osa is not None and len(groups.osa.generators) == 2
    assert groups.osa.to_group().degree == 9
    assert all(g.to_group().symmetric_support for g in groups.heuristic)
    manifest = json.loads((out / "osa_manifest.json").read_text())
    assert manifest["label"] == "OSA---"
    assert manifest["zero_unaries"] is True


def test_sample_then_evaluate(tmp_path, capsys):
    out = tmp_path / "chains"
    config = write_config(tmp_path / "grid.json", out)
    assert main(["generate", "--config", str(config)]) == 0
    assert main(["sample", "--model", str(out / "model.json"), "--iterations", "500", "--seeds", "1,2", "--out", str(out)]) == 0
    estimates = [out / "marginals" / "gibbs_chain0.csv", out / "marginals" / "gibbs_chain1.csv"]
    assert all(p.exists() for p in estimates)
    with open(out / "traces.csv", newline="") as f:
        header = next(csv.reader(f))
    assert header == ["chain_id", "kernel", "iteration", "wallclock_ms", "avg_kl", "acceptance_rate"]

    report = tmp_path / "kl.json"
    capsys.readouterr()
    args = ["evaluate", "--model", str(out / "model.json"), "--estimate", *map(str, estimates), "--out", str(report)]
    assert main(args) == 0
    assert "📋" in capsys.readouterr().out
    reports = json.loads(report.read_text())
    assert set(reports) == {str(p) for p in estimates}
    assert all(r["average_kl"] >= 0 for r in reports.values())


def test_evaluate_needs_a_truth(tmp_path):
    assert main(["evaluate", "--estimate", str(tmp_path / "x.csv")]) == 1


def test_run_writes_all_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    config = write_config(tmp_path / "grid.json", out)
    assert main(["run", "--config", str(config), "--workers", "1"]) == 0
    for name in ("model.json", "osa_model.json", "groups.json", "osa_manifest.json", "truth.csv", "traces.csv",
                 "kl_summary.json", "manifest.json"):
        assert (out / name).exists(), name
    for method in ("gibbs", "lifted-mcmc", "lmh"):
        for chain in (0, 1):
            assert (out / "traces" / f"{method}_chain{chain}.csv").exists()
    summary = json.loads((out / "kl_summary.json").read_text())
    assert set(summary["methods"]) == {"gibbs", "lifted-mcmc", "lmh"}
    assert all(m["mean_final_kl"] >= 0 for m in summary["methods"].values())
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["chain_seeds"] == [chain_seed(1, 0), chain_seed(2, 1)]
    assert len(set(manifest["chain_seeds"])) == 2
    assert manifest["truth"]["source"] == "enumeration"
    assert not (tmp_path / ".run.partial").exists()
    assert "✅ Experiment 'grid3' finished!" in capsys.readouterr().out


def test_run_is_reproducible(tmp_path):
    config = write_config(tmp_path / "grid.json", tmp_path / "a", kernel={"methods": ["lmh"]})
    assert main(["run", "--config", str(config), "--iterations", "800"]) == 0
    assert main(["run", "--config", str(config), "--iterations", "800", "--out", str(tmp_path / "b")]) == 0
    a = MarginalTable.read_csv(tmp_path / "a" / "marginals" / "lmh_chain1.csv")
    b = MarginalTable.read_csv(tmp_path / "b" / "marginals" / "lmh_chain1.csv")
    assert a.max_abs_error(b) == 0.0


def test_json_config_accepts_exponent_notation(tmp_path):
    path = write_config(tmp_path / "grid.json", tmp_path / "runs")
    path.write_text(path.read_text().replace('"seeds"', '"truth": {"gold_iterations": 1e7}, "seeds"'))
    assert "1e7" in path.read_text()
    config = load_config(path)
    assert config.truth.gold_iterations == 10_000_000


def test_unparsable_config_fails(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"name": ')
    assert main(["generate", "--config", str(path)]) == 1
    assert "Cannot parse config" in capsys.readouterr().out


def test_osa_direct_needs_an_osa_model(tmp_path, capsys):
    out = tmp_path / "chains"
    config = write_config(tmp_path / "grid.json", out)
    assert main(["generate", "--config", str(config)]) == 0
    capsys.readouterr()
    args = ["sample", "--model", str(out / "model.json"), "--method", "osa-direct", "--iterations", "100", "--out", str(out)]
    assert main(args) == 1
    assert "needs an OSA model" in capsys.readouterr().out
    assert not (out / "traces.csv").exists()


def test_chain_seeds_are_pairwise_distinct():
    seeds = list(range(1, 11))
    derived = [chain_seed(s, i) for i, s in enumerate(seeds)]
    assert len(set(derived)) == len(seeds)
    # every pairing of base seed and chain position gets its own stream
    grid = {chain_seed(s, i) for s in range(0, 11) for i in range(0, 11)}
    assert len(grid) == 121


def test_chains_with_swapped_seed_and_index_differ():
    model = ising_grid(IsingSpec(rows=3, cols=3, J=0.4, field=0.1))
    schedule = ScheduleConfig(iterations=500)
    results = sample_methods(model, None, DerivedGroups(), ["gibbs"], [1, 0], schedule, 0.8, None, workers=1)
    first, second = results["gibbs"]
    assert first.marginals.max_abs_error(second.marginals) > 0


def test_method_plan_osa_direct_needs_osa():
    model = ising_grid(IsingSpec(rows=2, cols=2, J=0.4, field=0.1))
    with pytest.raises(ConfigurationError, match="needs an OSA model"):
        method_plan("osa-direct", model, None, DerivedGroups(), alpha=0.8)
    osa = zero_unaries(model)
    target, kernel = method_plan("osa-direct", model, osa, DerivedGroups(), alpha=0.8)
    assert target == osa.model
    assert kernel.kind is KernelKind.GIBBS

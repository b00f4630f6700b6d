import copy
import csv
import dataclasses
import io
import json
import random

import pytest

from agora.cli import apply_params, main, parse_grid, parse_seeds
from agora.harness import run_comparison
from agora.scenario import (
    BUNDLED, ScenarioError, build_scenario, bundled_path, load_scenario, read_document, validate_document,
    validate_file,
)


def write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def small_doc(name="default-market", n=12):
    doc = read_document(name)
    doc["n_tasks"] = n
    return doc


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_validate(name, capsys):
    assert validate_file(bundled_path(name)) == []
    assert main(["validate", "--scenario", name]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_weights_must_sum_to_one():
    doc = small_doc()
    doc["weights"] = {"perc": 0.5, "sem": 0.3, "inf": 0.3}
    diags = validate_document(doc)
    assert any(d.startswith("weights:") and "DimensionWeights" in d for d in diags)


def test_negative_cost_cites_invariant():
    doc = small_doc()
    doc["pool"][1]["unit_cost"] = -1.0
    assert any(d.startswith("pool[1].unit_cost:") and "c > 0" in d for d in validate_document(doc))


def test_calibrated_counts_bounded_by_task_count():
    doc = small_doc("appendix-e", 5)
    assert any("exceeds n_tasks" in d for d in validate_document(doc))


def test_every_violation_listed():
    doc = small_doc()
    doc["pool"][0]["unit_cost"] = 0
    doc["pool"][2]["expertise"] = [2, 0, 0]
    doc["market"] = {"tau_trade": -1}
    doc["bogus"] = 1
    paths = {d.split(":")[0] for d in validate_document(doc)}
    assert {"pool[0].unit_cost", "pool[2].expertise[0]", "market.tau_trade", "bogus"} <= paths


def test_missing_field_exits_nonzero_with_path(tmp_path, capsys):
    doc = small_doc()
    del doc["pool"][0]["id"]
    path = write(tmp_path, doc)
    assert main(["run", "--scenario", path, "--out", str(tmp_path / "out")]) != 0
    assert "pool[0].id" in capsys.readouterr().err
    assert main(["validate", "--scenario", path]) != 0


def test_unreadable_file(tmp_path):
    assert main(["validate", "--scenario", str(tmp_path / "nope.json")]) == 2


def test_parse_seeds():
    assert parse_seeds("1,2,3") == [1, 2, 3]
    assert parse_seeds("0-2,7") == [0, 1, 2, 7]
    with pytest.raises(Exception):
        parse_seeds("x")


def test_run_writes_one_report_per_seed(tmp_path):
    out = tmp_path / "out"
    path = write(tmp_path, small_doc())
    assert main(["run", "--scenario", path, "--out", str(out), "--seeds", "1,2,3", "--format", "json"]) == 0
    agora = sorted(p.name for p in out.glob("*__agora__*.json"))
    assert agora == [f"default-market__agora__seed{s}.json" for s in (1, 2, 3)]
    summary = list(csv.DictReader(io.StringIO((out / "summary.csv").read_text())))
    assert {r["n_seeds"] for r in summary} == {"3"}
    assert (out / "summary.txt").exists() and (out / "plot.csv").exists()
    assert not any(p.name.startswith(".agora-") for p in out.iterdir())


def test_run_is_byte_identical(tmp_path):
    path = write(tmp_path, small_doc())
    for d in ("a", "b"):
        assert main(["run", "--scenario", path, "--out", str(tmp_path / d), "--seeds", "0,1"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_kernel_choice_does_not_change_output(tmp_path):
    from agora import kernel

    if "cython" not in kernel.available_backends():
        pytest.skip("extension not built")
    path = write(tmp_path, small_doc())
    for k in ("python", "cython"):
        assert main(["run", "--scenario", path, "--out", str(tmp_path / k), "--kernel", k]) == 0
    for f in (tmp_path / "python").iterdir():
        assert f.read_bytes() == (tmp_path / "cython" / f.name).read_bytes()


def sweep_rows(out):
    return list(csv.DictReader(io.StringIO((out / "sweep.csv").read_text())))


def test_sweep_pool_size(tmp_path):
    out = tmp_path / "out"
    path = write(tmp_path, small_doc())
    assert main(["sweep", "--scenario", path, "--out", str(out), "--seeds", "0,1", "--grid", "pool_size=1,2,5"]) == 0
    rows = sweep_rows(out)
    assert len(rows) == 6 and {r["pool_size"] for r in rows} == {"1", "2", "5"}


def test_sweep_empty_grid(tmp_path):
    out = tmp_path / "out"
    path = write(tmp_path, small_doc())
    assert main(["sweep", "--scenario", path, "--out", str(out)]) == 0
    assert len(sweep_rows(out)) == 1


def test_sweep_unknown_parameter(tmp_path, capsys):
    path = write(tmp_path, small_doc())
    assert main(["sweep", "--scenario", path, "--out", str(tmp_path / "o"), "--grid", "temperature=1"]) != 0
    assert "temperature" in capsys.readouterr().err
    with pytest.raises(ValueError):
        parse_grid(["tau_trade"])


def test_sweep_pool_size_out_of_range(tmp_path):
    path = write(tmp_path, small_doc())
    assert main(["sweep", "--scenario", path, "--out", str(tmp_path / "o"), "--grid", "pool_size=9"]) != 0


def test_trade_frequency_falls_with_trigger_threshold():
    config = dataclasses.replace(load_scenario("default-market"), comparisons=())
    means = []
    for tau in (0.05, 0.15, 0.25):
        cfg = apply_params(config, {"tau_trade": tau})
        per_seed = [run_comparison(dataclasses.replace(cfg, seed=s))[0].aggregate["trades_per_task"] for s in range(3)]
        means.append(sum(per_seed) / len(per_seed))
    assert means[0] >= means[1] >= means[2]


def test_apply_params_maps_names():
    config = load_scenario("default-market")
    cfg = apply_params(config, {"gamma_decay": 0.9, "lambda_dist": 0.1, "eta_synergy": 0.2, "omega_strategic": 0.3,
                                  "tau_benefit": 0.01})
    assert (cfg.broker.gamma_decay, cfg.broker.lambda_dist, cfg.broker.eta_synergy, cfg.broker.omega_strategic) == \
        (0.9, 0.1, 0.2, 0.3)
    assert cfg.market.tau_benefit == 0.01


def _mutate(doc, rng):
    """Random structural damage: drop, retype or perturb one field somewhere in the document."""
    doc = copy.deepcopy(doc)
    paths = []

    def walk(node, trail):
        if isinstance(node, dict):
            for k, v in node.items():
                paths.append((node, k))
                walk(v, trail + [k])
        elif isinstance(node, list):
            for i, v in enumerate(node):
                paths.append((node, i))
                walk(v, trail + [i])

    walk(doc, [])
    container, key = rng.choice(paths)
    choice = rng.randrange(6)
    if choice == 0 and isinstance(container, dict):
        del container[key]
    elif choice == 1:
        container[key] = rng.choice([None, "x", [], {}, True])
    elif choice == 2:
        container[key] = rng.uniform(-2, 2)
    elif choice == 3:
        container[key] = rng.randint(-3, 3)
    elif choice == 4 and isinstance(container, dict):
        container["unexpected_" + str(rng.randrange(9))] = 1
    else:
        container[key] = copy.deepcopy(container[key])
    return doc


def test_validate_run_parity_fuzzed():
    rng = random.Random(5)
    seeds = [small_doc(name, 12) for name in BUNDLED]
    accepted = rejected = 0
    for i in range(300):
        doc = _mutate(rng.choice(seeds), rng)
        if rng.random() < 0.5:
            doc = _mutate(doc, rng)
        diags = validate_document(doc)
        if diags:
            with pytest.raises(ScenarioError):
                build_scenario(doc)
            rejected += 1
        else:
            run_comparison(build_scenario(doc))
            accepted += 1
    assert accepted > 30 and rejected > 30

import json
import math

import pytest

from degrade_opt import InstanceError, builtin_instance, builtin_instances, load_instance, save_instance
from degrade_opt.instance import BUILTIN_NAMES, instance_from_dict, instance_to_dict, validation_errors


def test_all_builtins_load_and_validate():
    insts = builtin_instances()
    assert [i.name for i in insts] == list(BUILTIN_NAMES)
    for inst in insts:
        assert validation_errors(inst) == []


def test_toy_tables(toy):
    assert [u.name for u in toy.units] == ["Heater", "Reactor"]
    assert toy.unit("Heater").s_max == 80
    assert toy.unit("Reactor").s_init == 30
    md = toy.mode_data("Reaction 2", "Reactor", "Normal")
    assert (md.p, md.d, md.sigma) == (6, 13, 3.51)
    assert toy.products == ["P1", "P2"]
    assert set(toy.scenarios) == {"low", "avg", "high"}
    assert toy.demand["avg"]["P1"][:3] == (121, 137, 149)


def test_horizon_counts(toy):
    hz = toy.horizons
    assert hz.n_sched == 30
    assert hz.n_periods == 24
    assert hz.n_plan == 23
    assert hz.steps_per_period == 30


def test_triples_follow_unit_order(toy):
    units = [j for _, j, _ in toy.triples()]
    assert units == sorted(units, key=["Heater", "Reactor"].index)
    assert toy.unit_modes("Reactor") == ["Slow", "Normal"]


def test_steps_rounds_up(toy):
    assert toy.steps(1) == 1
    assert toy.steps(2.2) == 3
    assert toy.steps(0.3) == 1


def test_round_trip(tmp_path, toy):
    path = tmp_path / "toy.json"
    save_instance(toy, path)
    back = load_instance(path)
    assert back == toy
    assert math.isinf(back.state("F1").initial)
    assert json.loads(path.read_text())["states"][0]["capacity"] == "inf"


def test_load_by_name():
    assert load_instance("P1").name == "p1"


@pytest.mark.parametrize("mutate, fragment", [
    (lambda d: d["units"][0].update(s_init=200), "s_0 <= s_init <= s_max"),
    (lambda d: d["units"][0].update(tau=0), "tau"),
    (lambda d: d["tasks"][0]["produces"].update(I1=0.7), "sum to 1"),
    (lambda d: d["tasks"][0]["units"]["Heater"].update(v_min=500), "v_min exceeds v_max"),
    (lambda d: d["demand"]["avg"]["P1"].pop(), "expected 24 rows"),
    (lambda d: d["demand"]["avg"]["P1"].__setitem__(0, -1), "nonnegative"),
    (lambda d: d["tasks"][1]["consumes"].update(X9=0.0), "unknown state"),
])
def test_invalid_instances_are_reported(toy, mutate, fragment):
    d = instance_to_dict(toy)
    mutate(d)
    errs = validation_errors(instance_from_dict(d))
    assert any(fragment in e for e in errs), errs


def test_load_rejects_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(InstanceError):
        load_instance(p)


def test_load_reports_every_problem(tmp_path, toy):
    d = instance_to_dict(toy)
    d["units"][0]["tau"] = 0
    d["units"][1]["s_init"] = -5
    p = tmp_path / "two.json"
    p.write_text(json.dumps(d))
    with pytest.raises(InstanceError) as exc:
        load_instance(p)
    assert len(exc.value.problems) >= 2


def test_non_numeric_field_is_rejected(toy):
    d = instance_to_dict(toy)
    d["units"][0]["s_max"] = "lots"
    with pytest.raises(InstanceError):
        instance_from_dict(d)


def test_builtin_p1_has_failure_costs():
    p1 = builtin_instance("p1")
    assert all(u.c_fail > 0 for u in p1.units)


def test_builtins_match_json_schema():
    jsonschema = pytest.importorskip("jsonschema")
    from importlib import resources
    from pathlib import Path
    schema = json.loads((Path(__file__).parents[1] / "docs" / "instance.schema.json").read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    for name in BUILTIN_NAMES:
        doc = json.loads((resources.files("degrade_opt") / "instances" / f"{name}.json").read_text())
        jsonschema.validate(doc, schema)
    bad = json.loads((resources.files("degrade_opt") / "instances" / "toy.json").read_text())
    bad["units"][0]["tau"] = 0
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, schema)

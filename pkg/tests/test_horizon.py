import xml.etree.ElementTree as ET

import numpy as np
import pytest

from degrade_opt.degradation import IDLE, MAINT, Activity, Schedule
from degrade_opt.horizon import (TrainingDataset, _counts, default_demand_box, extract_mode_sequences,
                                 gantt_svg, generate_training_data, latin_hypercube, roll,
                                 symbol_name, token_sequence, unit_symbols, write_labels_csv)
from degrade_opt.milp import SolverConfig

EXACT = SolverConfig(mip_gap=0.0)


def test_roll_tiny_meets_demand(tiny):
    inst = tiny(demand=(15, 15))
    res = roll(inst, "avg", 0.5, 2, EXACT)
    assert res.status == "ok"
    assert len(res.iterations) == 2
    assert res.schedule.n_steps == 8
    assert res.slack_log == []
    made = sum(a.steps for a in res.schedule.unit_activities("U") if not a.is_maintenance)
    assert made >= 3
    assert res.cost["total"] == pytest.approx(sum(v for k, v in res.cost.items() if k != "total"))


def test_roll_carries_signal(tiny):
    inst = tiny(demand=(15, 15))
    res = roll(inst, "avg", 0.5, 2, EXACT)
    # planned propagation (alpha 0.5, so d_max = 4): reset by maintenance, capped at s_max
    s = 0.0
    for r in range(2):
        for a in res.schedule.unit_activities("U"):
            if r * 4 <= a.start < (r + 1) * 4:
                s = 0.0 if a.is_maintenance else s + 4.0
        assert res.signals["U"][r] == pytest.approx(min(s, 10.0))


def test_roll_is_reproducible(tiny):
    inst = tiny(demand=(25, 15))
    a = roll(inst, "avg", 0.5, 2, EXACT, seed=3)
    b = roll(inst, "avg", 0.5, 2, EXACT, seed=3)
    assert a.schedule.activities == b.schedule.activities
    assert a.cost == b.cost


def test_roll_with_simulated_degradation(tiny):
    inst = tiny(demand=(15, 15), sigma=0.5)
    res = roll(inst, "avg", 0.5, 2, EXACT, seed=1, simulate_degradation=True)
    assert res.status == "ok"
    assert all(0.0 <= v <= 10.0 for v in res.signals["U"])


def test_roll_demand_override(tiny):
    inst = tiny(demand=(0, 0))
    res = roll(inst, "avg", 0.5, 1, EXACT, demand={"P": [10, 0]}, planning=False)
    assert sum(1 for a in res.schedule.unit_activities("U") if not a.is_maintenance) == 1


def test_roll_rejects_zero_periods(tiny):
    with pytest.raises(ValueError):
        roll(tiny(), n_periods=0)


def test_roll_outputs(tmp_path, tiny):
    res = roll(tiny(demand=(25, 0)), "avg", 0.5, 1, EXACT, planning=False)
    res.to_csv(tmp_path / "s.csv")
    res.to_svg(tmp_path / "g.svg")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "step,time,U"
    assert "maint" in lines[3]
    ET.parse(tmp_path / "g.svg")


def test_token_sequence_drops_maintenance():
    s = Schedule(1.0, 9, {"U": [Activity(0, 3, "T", "k"), Activity(3, 2), Activity(6, 2, "T", "j")]})
    assert token_sequence(s, "U") == [("T", "k"), IDLE, ("T", "j"), IDLE]
    assert extract_mode_sequences(s)["U"][3] == MAINT


def test_counts():
    syms = [("T", "a"), ("T", "b"), IDLE]
    f, t = _counts(syms, [("T", "a"), IDLE, IDLE, MAINT, ("T", "b"), ("T", "a")])
    assert f.tolist() == [2, 1, 2]
    assert t[0, 2] == 1 and t[2, 2] == 1 and t[2, 1] == 1 and t[1, 0] == 1
    assert t.sum() == 4


def test_gantt_svg_marks_maintenance():
    s = Schedule(1.0, 6, {"A": [Activity(0, 2, "T", "k"), Activity(2, 2)], "B": [Activity(1, 3, "T", "j")]})
    root = ET.fromstring(gantt_svg(s, "demo"))
    assert root.tag.endswith("svg") and root.get("version") == "1.1"
    text = gantt_svg(s, "demo")
    assert "#d62728" in text or "red" in text


def test_labels_csv(tmp_path):
    s = Schedule(0.5, 3, {"A": [Activity(1, 1, "T", "k")]})
    write_labels_csv(s, tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text().splitlines() == ["step,time,A", "0,0,idle", "1,0.5,T:k", "2,1,idle"]


def test_latin_hypercube_strata():
    products, pts = latin_hypercube({"a": (0, 10), "b": (5, 6)}, 20, seed=1)
    assert products == ["a", "b"]
    assert pts.shape == (20, 2)
    # one point per stratum in each coordinate
    assert sorted(np.floor(pts[:, 0] / 0.5).astype(int)) == list(range(20))
    assert np.all((pts[:, 1] >= 5) & (pts[:, 1] <= 6))


def test_default_box_spans_scenarios(toy):
    box = default_demand_box(toy)
    allp1 = [v for sc in toy.scenarios for v in toy.demand[sc]["P1"]]
    assert box["P1"] == (min(allp1), max(allp1))


def test_symbols(toy):
    syms = unit_symbols(toy)
    assert syms["Heater"] == [("Heating", "Slow"), ("Heating", "Normal"), IDLE]
    assert symbol_name(("Heating", "Slow")) == "Heating-Slow"


def test_training_data_round_trip(tmp_path, toy):
    ds = generate_training_data(toy, 3, seed=2, solver_config=SolverConfig(mip_gap=0.05))
    assert len(ds) == 3
    for u, syms in ds.symbols.items():
        # every scheduling step is a task step or an idle step unless maintenance or spill intervened
        assert ds.freq[u].shape == (3, len(syms))
        assert ds.trans[u].sum() == sum(len(s) - 1 for s in ds.sequences[u])
    ds.to_csv(tmp_path / "t.csv")
    back = TrainingDataset.from_csv(tmp_path / "t.csv", toy)
    assert np.allclose(back.psi, ds.psi)
    for u in ds.symbols:
        assert (back.freq[u] == ds.freq[u]).all()
        assert (back.trans[u] == ds.trans[u]).all()


def test_training_needs_two_samples(toy):
    with pytest.raises(ValueError):
        generate_training_data(toy, 1)

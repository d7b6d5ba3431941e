import pytest

from degrade_opt import builtin_instance
from degrade_opt.degradation import DegradationModel


@pytest.fixture(scope="session")
def toy():
    return builtin_instance("toy")


@pytest.fixture(scope="session")
def p1():
    return builtin_instance("p1")


@pytest.fixture(scope="session")
def toy_model(toy):
    return DegradationModel.from_instance(toy)


def tiny_dict(demand=(15, 0), sigma=0.0):
    """One unit, one task, one mode: every optimum can be worked out by hand."""
    return {
        "name": "tiny",
        "horizons": {"T_S": 4, "dt_S": 1, "T_P": 8, "dt_P": 4},
        "idle": {"mean": 0.0, "sigma": 0.0},
        "states": [
            {"name": "F", "capacity": "inf", "initial": "inf", "storage_cost": 0, "is_product": False},
            {"name": "P", "capacity": "inf", "initial": 0, "storage_cost": 1, "is_product": True},
        ],
        "units": [{"name": "U", "s_max": 10, "s_init": 0, "s_0": 0, "tau": 1, "c_maint": 100,
                   "c_fail": 500}],
        "tasks": [{"name": "T", "consumes": {"F": 1.0}, "produces": {"P": 1.0},
                   "units": {"U": {"v_min": 0, "v_max": 10,
                                   "modes": {"A": {"p": 1, "d": 4, "sigma": sigma}}}}}],
        "demand": {"avg": {"P": list(demand)}},
    }


@pytest.fixture
def tiny():
    from degrade_opt.instance import instance_from_dict, validate
    return lambda **kw: validate(instance_from_dict(tiny_dict(**kw)))


ACCEPTANCE = []


def record(criterion, ok, detail):
    """Remember one acceptance verdict; the summary prints them all after the run."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

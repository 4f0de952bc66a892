import copy

import pytest

from gogsim.scenario import Scenario
from gogsim.scenario_io import load_scenario


def with_changes(sc, fn):
    """Copy of a scenario after ``fn`` edits its plain-dict form."""
    d = copy.deepcopy(sc.model_dump(by_alias=True))
    fn(d)
    return Scenario.model_validate(d)


@pytest.fixture(scope="session")
def eb_single():
    return load_scenario("single_ipc_energy_balancing")


@pytest.fixture(scope="session")
def eb_quiet(eb_single):
    """Dispatched single-IPC system without events."""
    def edit(d):
        d["events"] = []
        d["options"]["t_end"] = 0.2
    return with_changes(eb_single, edit)


ACCEPTANCE = []     # (criterion, passed, detail) appended by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    by_num = {}
    for tag, ok, detail in ACCEPTANCE:
        num, _, case = tag.partition(" ")
        by_num.setdefault(int(num), []).append((ok, f"[{case}] {detail}" if case else detail))
    for num in sorted(by_num):
        rows = by_num[num]
        ok = all(r[0] for r in rows)
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  "
                                    + "; ".join(r[1] for r in rows))

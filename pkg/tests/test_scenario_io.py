import pytest

from gogsim.errors import ValidationError
from gogsim.scenario_io import (BUNDLED, bundled, dump_scenario, load_scenario,
                                parse_scenario, save_scenario)

TEXT = (BUNDLED / "single_ipc_energy_balancing.yaml").read_text()


@pytest.mark.parametrize("name", bundled())
def test_bundled_round_trip(name, tmp_path):
    sc = load_scenario(name)
    assert parse_scenario(dump_scenario(sc)) == sc
    save_scenario(sc, tmp_path / "x.yaml")
    assert load_scenario(tmp_path / "x.yaml") == sc


def test_bundled_set():
    names = bundled()
    assert len(names) == 14
    assert "grid_of_grids_hybrid_droop" in names
    assert load_scenario("single_ipc_zero_flow.yaml").name == "single_ipc_zero_flow"


def test_missing_scenario_lists_bundled():
    with pytest.raises(ValidationError, match="four_ipc_consistent"):
        load_scenario("no_such_thing")


def test_yaml_syntax_error_has_line():
    bad = TEXT.replace("  - {id: b2}", "  - {id: b2", 1)
    with pytest.raises(ValidationError, match=r"line \d+.*not valid YAML"):
        parse_scenario(bad)


def test_schema_error_points_at_line():
    bad = TEXT.replace("p_set: 0.15", "p_set: fast")
    line = next(i for i, s in enumerate(bad.splitlines(), 1) if "fast" in s)
    with pytest.raises(ValidationError, match=rf"line {line}: devices\[0\]"):
        parse_scenario(bad)


def test_negative_length_rejected():
    bad = TEXT.replace("length_km: 50}", "length_km: -50}", 1)
    with pytest.raises(ValidationError, match="length_km"):
        parse_scenario(bad)


def test_unknown_event_target_names_event():
    bad = TEXT.replace("target: L5", "target: L9")
    with pytest.raises(ValidationError, match=r"events\[0\].*'L9'"):
        parse_scenario(bad)


def test_setpoint_event_field_checked():
    bad = TEXT.replace("action: set_load, target: L5, value: 0.5",
                       "action: set_setpoint, target: U1, field: colour, value: 0.5")
    with pytest.raises(ValidationError, match="colour"):
        parse_scenario(bad)


def test_duplicate_ids_rejected():
    bad = TEXT.replace("id: P2", "id: U1")
    with pytest.raises(ValidationError, match="duplicate"):
        parse_scenario(bad)


def test_non_mapping_rejected():
    with pytest.raises(ValidationError, match="mapping"):
        parse_scenario("- 1\n- 2\n")

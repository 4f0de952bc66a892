"""Reading and writing scenario files."""
from __future__ import annotations

import pathlib

import pydantic
import yaml

from .errors import ValidationError
from .scenario import Scenario

BUNDLED = pathlib.Path(__file__).parent / "scenarios"


def _line_of(text, loc):
    """Best-effort line number of a pydantic error location in the YAML text."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            if nxt is None:
                return line
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _format(exc: pydantic.ValidationError, text=None):
    msgs = []
    for e in exc.errors():
        loc = [p for p in e["loc"] if not (isinstance(p, str) and p in
                                              ("ac_source", "pll_source", "ac_load", "dc_source",
                                               "dc_load"))]
        where = ".".join(f"[{p}]" if isinstance(p, int) else str(p) for p in loc).replace(".[", "[")
        line = _line_of(text, loc) if text else None
        tag = f"line {line}: " if line else ""
        msg = e["msg"].removeprefix("Value error, ")
        msgs.append(f"{tag}{where or 'scenario'}: {msg}")
    return "; ".join(msgs)


def parse_scenario(text: str, source="<string>") -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}" if mark is not None else ""
        raise ValidationError(f"{source}:{where} not valid YAML: "
                              f"{getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{source}: scenario must be a mapping")
    try:
        return Scenario.model_validate(data)
    except pydantic.ValidationError as exc:
        raise ValidationError(f"{source}: {_format(exc, text)}") from None


def resolve(path) -> pathlib.Path:
    """A path, or the name of a bundled scenario (with or without .yaml)."""
    p = pathlib.Path(path)
    if p.exists():
        return p
    for cand in (BUNDLED / p.name, BUNDLED / f"{p.name}.yaml"):
        if cand.exists():
            return cand
    raise ValidationError(f"scenario {str(path)!r} not found (bundled: {', '.join(bundled())})")


def load_scenario(path) -> Scenario:
    p = resolve(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {p}: {exc}") from None
    return parse_scenario(text, str(p))


def dump_scenario(sc: Scenario) -> str:
    data = sc.model_dump(by_alias=True, mode="json")
    return yaml.safe_dump(data, sort_keys=False)


def save_scenario(sc: Scenario, path):
    pathlib.Path(path).write_text(dump_scenario(sc))


def bundled():
    return sorted(p.stem for p in BUNDLED.glob("*.yaml"))

"""
Line-oriented run-config reader and writer.

    # comment
    [section]
    key = value
    d = plateau(center=0.5, half_width=0.2)
    eps_list = 0.01, 0.001

Function values use ``tag(key=value, ...)``; list parameters are written in
brackets, ``points=[0 0.5 1]``.
"""
import re
from typing import Dict, List, Tuple

from pydantic import ValidationError

from models.errors import InvalidValue, ParseError, UnknownKey
from models.run_config import FUNCTION_KEYS, LIST_KEYS, SECTIONS, FunctionSpec, RunConfig
from services.functions import BUILDERS

_SECTION = re.compile(r"^\[([A-Za-z_]\w*)\]$")
_ASSIGN = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.*)$")
_CALL = re.compile(r"^([A-Za-z_]\w*)\s*\((.*)\)$")


def _parse_float(text: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise InvalidValue(f"expected a number, got '{text}'", line)


def _parse_function(text: str, line: int) -> dict:
    match = _CALL.match(text)
    if not match:
        raise ParseError(f"expected 'tag(key=value, ...)', got '{text}'", line)
    tag, body = match.group(1), match.group(2).strip()
    params: Dict[str, object] = {}
    if body:
        for item in body.split(","):
            if "=" not in item:
                raise ParseError(f"function parameter '{item.strip()}' is not key=value", line)
            key, value = (part.strip() for part in item.split("=", 1))
            if key in params:
                raise ParseError(f"duplicate parameter '{key}'", line)
            if value.startswith("[") and value.endswith("]"):
                params[key] = [_parse_float(tok, line) for tok in value[1:-1].split()]
            elif len(value.split()) > 1:
                params[key] = [_parse_float(tok, line) for tok in value.split()]
            else:
                params[key] = _parse_float(value, line)
    return {"tag": tag, "params": params}


def _tokenize(text: str) -> Tuple[Dict[str, Dict[str, Tuple[str, int]]], Dict[str, int]]:
    sections: Dict[str, Dict[str, Tuple[str, int]]] = {}
    headers: Dict[str, int] = {}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        header = _SECTION.match(line)
        if header:
            current = header.group(1)
            if current not in SECTIONS:
                raise UnknownKey(f"unknown section [{current}]", number)
            if current in headers:
                raise ParseError(f"duplicate section [{current}]", number)
            headers[current] = number
            sections[current] = {}
            continue
        assign = _ASSIGN.match(line)
        if not assign:
            raise ParseError(f"expected 'key = value' or '[section]', got '{line}'", number)
        if current is None:
            raise ParseError("key outside of any section", number)
        key, value = assign.group(1), assign.group(2).strip()
        if key not in SECTIONS[current].model_fields:
            raise UnknownKey(f"unknown key '{key}' in [{current}]", number)
        if key in sections[current]:
            raise ParseError(f"duplicate key '{key}' in [{current}]", number)
        sections[current][key] = (value, number)
    return sections, headers


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run config.

    Raises:
        ParseError: malformed text
        UnknownKey: unknown section or key
        InvalidValue: a value outside its domain
    """
    sections, headers = _tokenize(text)
    if "problem" not in sections:
        raise InvalidValue("missing [problem] section")

    data: Dict[str, dict] = {}
    lines: Dict[Tuple[str, str], int] = {}
    for name, entries in sections.items():
        block = {}
        for key, (value, line) in entries.items():
            lines[(name, key)] = line
            if name == "problem" and key in FUNCTION_KEYS:
                block[key] = _parse_function(value, line)
            elif key in LIST_KEYS:
                block[key] = [_parse_float(tok.strip(), line) for tok in value.split(",") if tok.strip()]
            else:
                block[key] = value
        data[name] = block

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        loc = [str(p) for p in err["loc"]]
        line = lines.get(tuple(loc[:2])) if len(loc) >= 2 else None
        if line is None and loc:
            line = headers.get(loc[0])
        raise InvalidValue(f"{'.'.join(loc)}: {err['msg']}", line) from e

    for key in FUNCTION_KEYS:
        spec: FunctionSpec = getattr(config.problem, key)
        try:
            BUILDERS[key](spec.tag, spec.params)
        except InvalidValue as e:
            raise InvalidValue(f"problem.{key}: {e}", lines.get(("problem", key), headers["problem"])) from e
    return config


def _format_number(value: float) -> str:
    return repr(float(value))


def _format_function(spec: FunctionSpec) -> str:
    parts = []
    for key, value in spec.params.items():
        if isinstance(value, list):
            parts.append(f"{key}=[{' '.join(_format_number(v) for v in value)}]")
        else:
            parts.append(f"{key}={_format_number(value)}")
    return f"{spec.tag}({', '.join(parts)})"


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _format_number(value)
    if isinstance(value, list):
        return ", ".join(_format_number(v) for v in value)
    return str(value)


def render_config(config: RunConfig) -> str:
    """Inverse of parse_config."""
    out: List[str] = []
    for name in SECTIONS:
        block = getattr(config, name)
        out.append(f"[{name}]")
        for key in type(block).model_fields:
            value = getattr(block, key)
            if value is None:
                continue
            if isinstance(value, FunctionSpec):
                out.append(f"{key} = {_format_function(value)}")
            elif key in LIST_KEYS and not value:
                continue
            else:
                out.append(f"{key} = {_format_value(value)}")
        out.append("")
    return "\n".join(out)


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as handle:
        return parse_config(handle.read())

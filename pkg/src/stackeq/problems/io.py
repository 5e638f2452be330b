"""Versioned instance files: canonical JSON in, instances out.

Serialization is canonical (sorted keys, fixed indentation, shortest
round-trip floats), so parse -> serialize reproduces the file byte for
byte. Parse errors name the offending field.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import InstanceFormatError
from .charging import ChargingInstance
from .dispatch import DispatchInstance

FORMAT_VERSION = 1

_CHARGING_FIELDS = ("b", "s", "capacity")
_DISPATCH_FIELDS = ("ev_pos", "station_pos", "e", "alpha_d", "alpha_p",
                    "alpha_v", "targets", "load_cap", "count_cap",
                    "p_min", "p_max")


def _listify(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def serialize_instance(inst, path=None) -> str:
    """Render an instance to canonical JSON; optionally write it to path."""
    if isinstance(inst, ChargingInstance):
        kind, fields = "charging", _CHARGING_FIELDS
    elif isinstance(inst, DispatchInstance):
        kind, fields = "dispatch", _DISPATCH_FIELDS
    else:
        raise InstanceFormatError(f"cannot serialize {type(inst).__name__}")
    payload = {"format_version": FORMAT_VERSION, "kind": kind,
               "name": inst.name}
    for f in fields:
        payload[f] = _listify(getattr(inst, f))
    text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _field(data, key, kind, where):
    if key not in data:
        raise InstanceFormatError(
            f"{where}: missing field '{key}' for a {kind} instance")
    return data[key]


def parse_instance(path):
    """Read an instance file; raises InstanceFormatError with context."""
    where = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InstanceFormatError(f"{where}: {exc}") from exc
    return parse_instance_text(text, where=where)


def parse_instance_text(text: str, where: str = "<string>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(
            f"{where}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InstanceFormatError(f"{where}: top level must be an object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise InstanceFormatError(
            f"{where}: format_version {version!r} is not supported; "
            f"this build reads version {FORMAT_VERSION}")
    kind = _field(data, "kind", "any", where)
    name = data.get("name", "")
    try:
        if kind == "charging":
            return ChargingInstance(
                b=_field(data, "b", kind, where),
                s=_field(data, "s", kind, where),
                capacity=_field(data, "capacity", kind, where),
                name=name)
        if kind == "dispatch":
            kwargs = {f: _field(data, f, kind, where)
                      for f in _DISPATCH_FIELDS}
            return DispatchInstance(name=name, **kwargs)
    except InstanceFormatError:
        raise
    except Exception as exc:
        raise InstanceFormatError(f"{where}: {exc}") from exc
    raise InstanceFormatError(f"{where}: unknown instance kind {kind!r}")

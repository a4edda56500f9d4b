"""System definition files: schema validation, construction and canonical form."""

from __future__ import annotations

import copy
import json
from importlib import resources

import jsonschema
import numpy as np

from .errors import InvalidInputError

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_CNUM = {"oneOf": [{"type": "number"}, _POINT]}
_WORD = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}
_COMMON = {
    "family": {"type": "string"},
    "name": {"type": "string"},
    "iterate_order": {"type": "integer", "minimum": 1},
    "parabolic_words": {"type": "array", "items": _WORD},
}
_CIRCLE = {
    "type": "object",
    "properties": {
        "center": _POINT,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "orientation": {"enum": ["interior", "exterior"]},
        "label": {"type": "integer"},
    },
    "required": ["center", "radius"],
    "additionalProperties": False,
}
_DOMAIN = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"interval": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}},
            "required": ["interval"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"disk": {"type": "object", "properties": {"center": _POINT, "radius": {"type": "number", "exclusiveMinimum": 0}},
                                    "required": ["center", "radius"], "additionalProperties": False}},
            "required": ["disk"],
            "additionalProperties": False,
        },
    ]
}


def _family(props: dict, required=()) -> dict:
    return {
        "type": "object",
        "properties": {**_COMMON, **props},
        "required": ["family", *required],
        "additionalProperties": False,
    }


FAMILY_SCHEMAS = {
    "similarity": _family(
        {
            "ratios": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            "shifts": {"type": "array", "items": {"type": "number"}},
        },
        ["ratios"],
    ),
    "moebius_list": _family(
        {
            "maps": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "properties": {
                        "matrix": {"type": "array", "items": {"type": "array", "items": _CNUM, "minItems": 2, "maxItems": 2},
                                   "minItems": 2, "maxItems": 2},
                        "conjugate": {"type": "boolean"},
                    },
                    "required": ["matrix"],
                    "additionalProperties": False,
                },
            },
            "domain": _DOMAIN,
        },
        ["maps", "domain"],
    ),
    "gauss": _family({"truncation": {"type": "integer", "minimum": 1}, "tail": {"type": "boolean"}}),
    "farey": _family({}),
    "manneville_pomeau": _family({"alpha": {"type": "number", "exclusiveMinimum": 0}}, ["alpha"]),
    "schottky": _family(
        {
            "circles": {"type": "array", "items": _CIRCLE, "minItems": 2},
            "pairing": {"enum": ["bisector", "reflection"]},
            "tangency_allowed": {"type": "boolean"},
        },
        ["circles"],
    ),
    "apollonian": _family(
        {
            "circles": {"type": "array", "items": _CIRCLE, "minItems": 4, "maxItems": 4},
            "system": {"enum": ["triangle", "pairs"]},
        },
    ),
}

DEFAULTS = {
    "similarity": {},
    "moebius_list": {},
    "gauss": {"truncation": 200, "tail": True},
    "farey": {},
    "manneville_pomeau": {},
    "schottky": {"pairing": "bisector", "tangency_allowed": False},
    "apollonian": {"system": "triangle"},
}


def _error_message(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"field {path}: {err.message}"


def validate_definition(obj) -> dict:
    """Schema-check a parsed definition and fill defaults. Returns a new dict."""
    if not isinstance(obj, dict):
        raise InvalidInputError("system definition must be a JSON object")
    fam = obj.get("family")
    if fam not in FAMILY_SCHEMAS:
        raise InvalidInputError(f"field family: must be one of {sorted(FAMILY_SCHEMAS)}, got {fam!r}")
    validator = jsonschema.Draft202012Validator(FAMILY_SCHEMAS[fam])
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        raise InvalidInputError("; ".join(_error_message(e) for e in errors))
    out = copy.deepcopy(DEFAULTS[fam])
    out.update(copy.deepcopy(obj))
    return out


def parse_definition(text: str) -> dict:
    """Parse JSON text; syntax errors report line and column."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return validate_definition(obj)


def load_definition(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_definition(fh.read())


def canonical_json(defn: dict) -> str:
    """Canonical serialization: defaults filled, sorted keys, two-space indent."""
    return json.dumps(validate_definition(defn), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def example_path(name: str):
    """Path of a bundled example definition, e.g. ``"gauss"``."""
    return resources.files("gdmskit") / "data" / f"{name}.json"


def example_names() -> list:
    return sorted(p.name[:-5] for p in (resources.files("gdmskit") / "data").iterdir() if p.name.endswith(".json"))


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------


def _complex(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _circles(defn):
    from .kleinian import Circle

    out = []
    for c in defn["circles"]:
        out.append(Circle(_complex(c["center"]), c["radius"], c.get("orientation", "interior")))
    return out


def build_system(defn: dict):
    """Gdms described by a validated definition.

    For ``apollonian`` the triangle IFS is returned unless ``system`` is
    ``"pairs"``.
    """
    from . import systems
    from .gdms import Gdms
    from .maps import Disk, Interval, Moebius
    from .symbolic import Alphabet, IncidenceMatrix

    fam = defn["family"]
    common = {}
    if "iterate_order" in defn:
        common["iterate_order"] = defn["iterate_order"]
    if "parabolic_words" in defn:
        common["parabolic_words"] = tuple(tuple(w) for w in defn["parabolic_words"])
    if fam == "similarity":
        shifts = defn.get("shifts")
        if shifts is not None and len(shifts) != len(defn["ratios"]):
            raise InvalidInputError("field shifts: length must match ratios")
        g = systems.similarity_system(defn["ratios"], shifts, name=defn.get("name", "similarity"))
    elif fam == "moebius_list":
        maps = [Moebius(np.array([[_complex(x) for x in row] for row in m["matrix"]]), m.get("conjugate", False))
                for m in defn["maps"]]
        d = defn["domain"]
        dom = Interval(*d["interval"]) if "interval" in d else Disk(_complex(d["disk"]["center"]), d["disk"]["radius"])
        n = len(maps)
        g = Gdms(Alphabet.single_vertex(n), IncidenceMatrix.full(n), maps, (dom,), name=defn.get("name", "moebius"))
    elif fam == "gauss":
        g = systems.gauss_system(defn["truncation"], defn["tail"])
    elif fam == "farey":
        g = systems.farey_system()
    elif fam == "manneville_pomeau":
        g = systems.manneville_pomeau_system(defn["alpha"])
    elif fam == "schottky":
        cs = _circles(defn)
        labels = [c.get("label") for c in defn["circles"]]
        if any(lab is None for lab in labels):
            if defn["pairing"] == "bisector":
                q = len(cs) // 2
                labels = [j for k in range(1, q + 1) for j in (k, -k)]
            else:
                labels = list(range(1, len(cs) + 1))
        if len(set(labels)) != len(labels):
            raise InvalidInputError("field circles: labels must be distinct")
        g = systems.schottky_system(dict(zip(labels, cs)), defn["pairing"], defn["tangency_allowed"])
    elif fam == "apollonian":
        cs = _circles(defn) if "circles" in defn else None
        if defn["system"] == "pairs":
            g = systems.apollonian(cs).gdms
        else:
            g = systems.apollonian_triangle(cs)
    else:  # pragma: no cover - schema rejects this
        raise InvalidInputError(f"unknown family {fam!r}")
    if common:
        g = g.with_maps(g.maps, **common)
    return g

"""Test reports and their JSON serialisation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import jsonschema

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_OPT_NUM = {"type": ["number", "null"]}
_OPT_INT = {"type": ["integer", "null"]}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ecftest report",
    "type": "object",
    "required": ["schema_version", "reports"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "reports": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "test", "statistic", "p_value", "method", "alpha",
                    "reject", "eps_hits", "grid", "sizes",
                ],
                "additionalProperties": False,
                "properties": {
                    "test": {"enum": ["gpf-nv", "gpf-rp", "fmax-rp", "l2-rp", "tmax-rp"]},
                    "statistic": _NUM,
                    "p_value": {"type": "number", "minimum": 0, "maximum": 1},
                    "method": {"enum": ["nv", "rp"]},
                    "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    "reject": {"type": "boolean"},
                    "critical_value": _OPT_NUM,
                    "beta": _OPT_NUM,
                    "d": _OPT_NUM,
                    "varpi": {"enum": ["empirical", "gaussian", None]},
                    "B": _OPT_INT,
                    "seed": _OPT_INT,
                    "eps_hits": {"type": "integer", "minimum": 0},
                    "perm_eps_hits": _OPT_INT,
                    "recenter": {"type": ["boolean", "null"]},
                    "grid": {
                        "type": "object",
                        "required": ["a", "b", "J"],
                        "properties": {"a": _NUM, "b": _NUM, "J": {"type": "integer"}},
                    },
                    "sizes": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                    "labels": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}


def grid_summary(grid) -> dict:
    return {"a": float(grid.a), "b": float(grid.b), "J": int(grid.J)}


@dataclass
class TestReport:
    """Outcome of one test on one dataset.

    ``method`` is ``"nv"`` (scaled chi-square) or ``"rp"`` (random
    permutation); fields irrelevant to the method stay ``None``.
    """

    __test__ = False  # not a pytest class

    test: str
    statistic: float
    p_value: float
    method: str
    alpha: float
    reject: bool
    critical_value: Optional[float] = None
    beta: Optional[float] = None
    d: Optional[float] = None
    varpi: Optional[str] = None
    B: Optional[int] = None
    seed: Optional[int] = None
    eps_hits: int = 0
    perm_eps_hits: Optional[int] = None
    recenter: Optional[bool] = None
    grid: dict = field(default_factory=dict)
    sizes: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("statistic", "p_value", "alpha", "critical_value", "beta", "d"):
            if d[key] is not None:
                d[key] = float(d[key])
        d["reject"] = bool(d["reject"])
        return d


def reports_to_json(reports) -> str:
    # Python's float repr is the shortest string that round-trips exactly
    payload = {"schema_version": SCHEMA_VERSION, "reports": [r.to_dict() for r in reports]}
    jsonschema.validate(payload, REPORT_SCHEMA)
    return json.dumps(payload, indent=2)


def reports_from_json(text: str) -> list:
    payload = json.loads(text)
    jsonschema.validate(payload, REPORT_SCHEMA)
    return [TestReport(**r) for r in payload["reports"]]

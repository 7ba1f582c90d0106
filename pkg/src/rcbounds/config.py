"""Scenario files and the small text formats used on the command line.

Scenario files are YAML mappings whose keys mirror the long options of the
subcommand (with dashes or underscores).  Unknown keys are rejected.  For
``verify`` the file holds a :class:`~rcbounds.montecarlo.Scenario` plus an
optional ``outputs`` mapping; a JSON report written by ``verify`` is also
accepted, in which case its embedded scenario is used.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path
from typing import Any

import yaml

from .errors import DomainError
from .norms import NormSpec
from .transforms import parse_phi, parse_psi


class ConfigError(DomainError):
    """A scenario file or option value is malformed."""

    exit_code = 1


def load_document(path) -> dict:
    """Read a YAML or JSON mapping."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return doc


def normalize_keys(doc: dict, allowed: set[str], where: str) -> dict:
    out = {}
    for key, value in doc.items():
        k = str(key).replace("-", "_")
        if k not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}; allowed: {sorted(allowed)}")
        out[k] = value
    return out


def scenario_document(path) -> tuple[dict, dict]:
    """(scenario mapping, outputs mapping) from a scenario file or a report."""
    doc = load_document(path)
    if "scenario" in doc and "verdict" in doc:
        return dict(doc["scenario"]), {}
    doc = {str(k).replace("-", "_"): v for k, v in doc.items()}
    outputs = doc.pop("outputs", None) or {}
    if not isinstance(outputs, dict):
        raise ConfigError("outputs must be a mapping")
    outputs = normalize_keys(outputs, {"report", "csv", "jsonl"}, "outputs")
    return doc, outputs


# -- option value formats ----------------------------------------------------------------

def parse_float_list(text) -> list[float]:
    """``1,2,4`` / ``[1, 2, 4]`` / ``geom:2:64:16`` / ``lin:-5:5:11``."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    s = str(text).strip()
    m = re.fullmatch(r"(geom|lin):([^:]+):([^:]+):(\d+)", s)
    if m:
        import numpy as np

        kind, a, b, k = m.group(1), float(m.group(2)), float(m.group(3)), int(m.group(4))
        grid = np.geomspace(a, b, k) if kind == "geom" else np.linspace(a, b, k)
        return [float(v) for v in grid]
    try:
        return [float(v) for v in s.strip("[]").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


def parse_int_list(text) -> list[int]:
    """Integer list; ``pow2:0:12`` gives 1, 2, ..., 4096."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    s = str(text).strip()
    m = re.fullmatch(r"pow2:(\d+):(\d+)", s)
    if m:
        return [2 ** k for k in range(int(m.group(1)), int(m.group(2)) + 1)]
    vals = parse_float_list(s)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def parse_norm(text, p_grid=None, lam_grid=None) -> NormSpec:
    """``Lp(4)``, ``Lorentz(2,inf)``, ``GLS(psi_m(2))``, ``Bphi(phi_2)``, or a mapping."""
    if isinstance(text, NormSpec):
        return text
    if isinstance(text, dict):
        d = dict(text)
        tag = d.pop("tag", None)
        if tag == "Lp":
            return NormSpec.lp(float(d["p"]))
        if tag == "Lorentz":
            return NormSpec.lorentz(float(d["p"]), float(d["q"]))
        if tag == "GLS":
            return NormSpec.gls(parse_psi(d["psi"]), p_grid=d.get("p_grid", p_grid))
        if tag == "Bphi":
            return NormSpec.bphi(parse_phi(d["phi"]), lam_grid=d.get("lam_grid", lam_grid))
        raise ConfigError(f"unknown norm tag {tag!r}")
    s = str(text).strip()
    m = re.fullmatch(r"(\w+)\((.*)\)", s)
    if not m:
        raise ConfigError(f"cannot parse norm {text!r}")
    tag, inner = m.group(1), m.group(2)
    if tag == "Lp":
        return NormSpec.lp(float(inner))
    if tag == "Lorentz":
        p, q = (float(v) if v.strip() != "inf" else math.inf for v in inner.split(","))
        return NormSpec.lorentz(p, q)
    if tag == "GLS":
        return NormSpec.gls(parse_psi(inner), p_grid=p_grid)
    if tag == "Bphi":
        return NormSpec.bphi(parse_phi(inner), lam_grid=lam_grid)
    raise ConfigError(f"unknown norm tag {tag!r}")


def jsonable(obj: Any):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, (str, int, bool)) or obj is None or isinstance(obj, float):
        return obj
    return repr(obj)

"""Strict JSON run configuration.

Every block is optional; missing entries take the defaults below and the
fully resolved configuration is embedded in every JSON output. Unknown keys,
wrong types and out-of-range numbers are rejected with the offending key and,
where it can be located, the line in the source file.
"""
from __future__ import annotations

import copy
import json
import math
import re

from .dynamics import BoxSet, DiskSet, builtin_system, control_grid, system_from_expressions
from .errors import ConfigError, OccLPError

DEFAULTS = {
    "system": {"builtin": "rotation-polar", "control_count": 11, "delta0": 0.1},
    "grids": {"nodes": 41, "h_t": 1e-2},
    "horizons": {"T": [5.0, 10.0, 20.0], "lambda": [0.5, 0.1, 0.02], "delta": [0.0]},
    "lp": {"nodes": 41, "degree": 4, "epsilon_c": 1e-3, "xi_cap": 1e3,
           "perturbation": {"epsilon": 1e-2, "T": 1e3}, "dump": False},
    "y0": [[0.5, 1.0]],
    "simulate": {"T": 10.0, "signal": None},
    "certificate": None,
    "feedback": {"T": 50.0, "tie_rule": "smallest-index", "stop_weight": 0.3},
    "diagnose": {"samples": 20, "switches": 3, "hausdorff_T": [2.0, 5.0, 10.0], "w_measures": 8,
                 "metric_J": 16, "tol_w_value": 5e-2},
    "output": "out",
    "seed": 0,
}

_BUILTIN_KEYS = {"builtin", "control_count", "delta0"}
_EXPR_KEYS = {"name", "f", "k", "state_names", "constraint", "controls", "M_f", "M_k", "delta0", "angle_axes"}
_CERT_KEYS = {"closed_form", "mu", "psi", "eta", "y0"}


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Checker:
    def __init__(self, text):
        self.text = text

    def fail(self, key, message):
        raise ConfigError(message, key=key, line=_line_of(self.text, key.split(".")[-1]))

    def keys(self, block, allowed, where):
        if not isinstance(block, dict):
            self.fail(where, f"{where} must be an object")
        for k in block:
            if k not in allowed:
                self.fail(f"{where}.{k}" if where else k, f"unknown key {k!r} in {where or 'config'}")

    def number(self, value, key, lo=-math.inf, hi=math.inf, lo_open=False, integer=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(key, f"{key} must be a number")
        if integer and int(value) != value:
            self.fail(key, f"{key} must be an integer")
        if not math.isfinite(value):
            self.fail(key, f"{key} must be finite")
        if value < lo or value > hi or (lo_open and value == lo):
            bound = f"({lo}, {hi}]" if lo_open else f"[{lo}, {hi}]"
            self.fail(key, f"{key} = {value} outside {bound}")
        return int(value) if integer else float(value)

    def number_list(self, value, key, *args, **kw):
        if not isinstance(value, list) or not value:
            self.fail(key, f"{key} must be a nonempty list")
        return [self.number(v, key, *args, **kw) for v in value]


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(out.get(k), dict) and isinstance(v, dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text)


def parse_config(text):
    """Parse and validate; returns the resolved configuration dictionary."""
    try:
        raw = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", key=None, line=exc.lineno) from None
    return resolve_config(raw, text)


def _reject_constant(name):
    raise ConfigError(f"non-finite literal {name} is not allowed")


def resolve_config(raw, text=None):
    chk = _Checker(text)
    chk.keys(raw, set(DEFAULTS), "")
    cfg = _merge(DEFAULTS, raw)
    if "system" in raw and "builtin" not in raw["system"]:
        cfg["system"] = dict(raw["system"])
    _check_system(chk, cfg["system"])
    chk.keys(cfg["grids"], set(DEFAULTS["grids"]), "grids")
    cfg["grids"]["nodes"] = chk.number(cfg["grids"]["nodes"], "grids.nodes", 3, 401, integer=True)
    cfg["grids"]["h_t"] = chk.number(cfg["grids"]["h_t"], "grids.h_t", 0, 1, lo_open=True)
    chk.keys(cfg["horizons"], set(DEFAULTS["horizons"]), "horizons")
    cfg["horizons"]["T"] = chk.number_list(cfg["horizons"]["T"], "horizons.T", 0, 1e6, lo_open=True)
    cfg["horizons"]["lambda"] = chk.number_list(cfg["horizons"]["lambda"], "horizons.lambda", 0, 1e3, lo_open=True)
    cfg["horizons"]["delta"] = chk.number_list(cfg["horizons"]["delta"], "horizons.delta", 0, 1)
    _check_lp(chk, cfg["lp"])
    y0 = cfg["y0"]
    if not isinstance(y0, list) or not y0 or not all(isinstance(p, list) and p for p in y0):
        chk.fail("y0", "y0 must be a nonempty list of points")
    cfg["y0"] = [chk.number_list(p, "y0") for p in y0]
    chk.keys(cfg["simulate"], set(DEFAULTS["simulate"]), "simulate")
    cfg["simulate"]["T"] = chk.number(cfg["simulate"]["T"], "simulate.T", 0, 1e6, lo_open=True)
    sig = cfg["simulate"]["signal"]
    if sig is not None:
        chk.keys(sig, {"breakpoints", "values"}, "simulate.signal")
        for key in ("breakpoints", "values"):
            if key not in sig:
                chk.fail(f"simulate.signal.{key}", f"simulate.signal needs {key!r}")
            sig[key] = chk.number_list(sig[key], f"simulate.signal.{key}")
    if cfg["certificate"] is not None:
        _check_certificate(chk, cfg["certificate"])
    fb = cfg["feedback"]
    chk.keys(fb, set(DEFAULTS["feedback"]), "feedback")
    fb["T"] = chk.number(fb["T"], "feedback.T", 0, 1e6, lo_open=True)
    fb["stop_weight"] = chk.number(fb["stop_weight"], "feedback.stop_weight", 0, 1e6)
    if fb["tie_rule"] not in ("smallest-index", "smallest-magnitude"):
        chk.fail("feedback.tie_rule", "feedback.tie_rule must be smallest-index or smallest-magnitude")
    dg = cfg["diagnose"]
    chk.keys(dg, set(DEFAULTS["diagnose"]), "diagnose")
    dg["samples"] = chk.number(dg["samples"], "diagnose.samples", 1, 10000, integer=True)
    dg["switches"] = chk.number(dg["switches"], "diagnose.switches", 0, 100, integer=True)
    dg["w_measures"] = chk.number(dg["w_measures"], "diagnose.w_measures", 1, 1000, integer=True)
    dg["metric_J"] = chk.number(dg["metric_J"], "diagnose.metric_J", 1, 256, integer=True)
    dg["tol_w_value"] = chk.number(dg["tol_w_value"], "diagnose.tol_w_value", 0, 10)
    dg["hausdorff_T"] = chk.number_list(dg["hausdorff_T"], "diagnose.hausdorff_T", 0, 1e6, lo_open=True)
    if not isinstance(cfg["output"], str) or not cfg["output"]:
        chk.fail("output", "output must be a nonempty path string")
    cfg["seed"] = chk.number(cfg["seed"], "seed", 0, 2 ** 32 - 1, integer=True)
    return cfg


def _check_system(chk, s):
    if not isinstance(s, dict):
        chk.fail("system", "system must be an object")
    if "builtin" in s:
        chk.keys(s, _BUILTIN_KEYS, "system")
        if s["builtin"] not in ("rotation-polar", "rotation-cartesian"):
            chk.fail("system.builtin", f"unknown builtin system {s['builtin']!r}")
        s["control_count"] = chk.number(s.get("control_count", 11), "system.control_count", 2, 1001, integer=True)
        s["delta0"] = chk.number(s.get("delta0", 0.1), "system.delta0", 0, 1, lo_open=True)
        return
    chk.keys(s, _EXPR_KEYS, "system")
    for key in ("f", "k", "constraint", "controls", "M_f", "M_k", "delta0"):
        if key not in s:
            chk.fail(f"system.{key}", f"expression-defined system needs {key!r}")
    if not isinstance(s["f"], list) or not s["f"] or not all(isinstance(v, str) for v in s["f"]):
        chk.fail("system.f", "system.f must be a list of expression strings")
    if not isinstance(s["k"], str):
        chk.fail("system.k", "system.k must be an expression string")
    s["M_f"] = chk.number(s["M_f"], "system.M_f", 0, lo_open=True)
    s["M_k"] = chk.number(s["M_k"], "system.M_k", 0, lo_open=True)
    s["delta0"] = chk.number(s["delta0"], "system.delta0", 0, lo_open=True)
    c = s["constraint"]
    if not isinstance(c, dict) or c.get("type") not in ("box", "disk"):
        chk.fail("system.constraint", "constraint must be {\"type\": \"box\" | \"disk\", ...}")
    if c["type"] == "box":
        chk.keys(c, {"type", "lower", "upper"}, "system.constraint")
        c["lower"] = chk.number_list(c.get("lower"), "system.constraint.lower")
        c["upper"] = chk.number_list(c.get("upper"), "system.constraint.upper")
    else:
        chk.keys(c, {"type", "center", "radius"}, "system.constraint")
        c["center"] = chk.number_list(c.get("center"), "system.constraint.center")
        c["radius"] = chk.number(c.get("radius"), "system.constraint.radius", 0, lo_open=True)
    u = s["controls"]
    if isinstance(u, dict):
        chk.keys(u, {"lo", "hi", "count"}, "system.controls")
        for key in ("lo", "hi", "count"):
            if key not in u:
                chk.fail(f"system.controls.{key}", f"system.controls needs {key!r}")
        u["lo"] = chk.number(u["lo"], "system.controls.lo")
        u["hi"] = chk.number(u["hi"], "system.controls.hi")
        u["count"] = chk.number(u["count"], "system.controls.count", 1, 1001, integer=True)
    else:
        s["controls"] = chk.number_list(u, "system.controls")
    if "state_names" in s and (not isinstance(s["state_names"], list)
                               or not all(isinstance(v, str) for v in s["state_names"])):
        chk.fail("system.state_names", "state_names must be a list of strings")
    if "angle_axes" in s:
        s["angle_axes"] = [chk.number(v, "system.angle_axes", 0, len(s["f"]) - 1, integer=True)
                           for v in s["angle_axes"]]


def _check_lp(chk, lp):
    chk.keys(lp, set(DEFAULTS["lp"]), "lp")
    lp["nodes"] = chk.number(lp["nodes"], "lp.nodes", 2, 201, integer=True)
    lp["degree"] = chk.number(lp["degree"], "lp.degree", 0, 12, integer=True)
    lp["epsilon_c"] = chk.number(lp["epsilon_c"], "lp.epsilon_c", 0, 1)
    lp["xi_cap"] = chk.number(lp["xi_cap"], "lp.xi_cap", 0, lo_open=True)
    p = lp["perturbation"]
    if p is not None:
        chk.keys(p, {"epsilon", "T"}, "lp.perturbation")
        p["epsilon"] = chk.number(p.get("epsilon"), "lp.perturbation.epsilon", 0)
        p["T"] = chk.number(p.get("T"), "lp.perturbation.T", 0, lo_open=True)
    if not isinstance(lp["dump"], bool):
        chk.fail("lp.dump", "lp.dump must be true or false")


def _check_certificate(chk, c):
    chk.keys(c, _CERT_KEYS, "certificate")
    if "closed_form" in c:
        if c["closed_form"] != "rotation":
            chk.fail("certificate.closed_form", "the only named closed form is 'rotation'")
        if "y0" in c:
            c["y0"] = chk.number_list(c["y0"], "certificate.y0")
        return
    for key in ("mu", "psi", "eta", "y0"):
        if key not in c:
            chk.fail(f"certificate.{key}", f"certificate needs {key!r}")
    c["mu"] = chk.number(c["mu"], "certificate.mu")
    c["y0"] = chk.number_list(c["y0"], "certificate.y0")
    for key in ("psi", "eta"):
        chk.keys(c[key], {"value", "grad"}, f"certificate.{key}")
        if not isinstance(c[key].get("value"), str) or not isinstance(c[key].get("grad"), list):
            chk.fail(f"certificate.{key}", f"certificate.{key} needs a value string and a grad list")


def build_system(cfg):
    s = cfg["system"]
    try:
        if "builtin" in s:
            return builtin_system(s["builtin"], s["control_count"], s["delta0"])
        c = s["constraint"]
        if c["type"] == "box":
            constraint = BoxSet(tuple(c["lower"]), tuple(c["upper"]))
        else:
            constraint = DiskSet(tuple(c["center"]), c["radius"])
        u = s["controls"]
        controls = control_grid(u["lo"], u["hi"], u["count"]) if isinstance(u, dict) else u
        return system_from_expressions(s["f"], s["k"], constraint, controls, s["M_f"], s["M_k"], s["delta0"],
                                       state_names=s.get("state_names"), name=s.get("name", "custom"),
                                       angle_axes=tuple(s.get("angle_axes", ())))
    except OccLPError as exc:
        raise ConfigError(f"system block: {exc}", key="system") from exc

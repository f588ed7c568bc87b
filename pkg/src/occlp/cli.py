"""Command-line entry point: ``occlp <subcommand> <config.json> [--strict] [--run-id ID]``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 a diagnostic
reported FAIL under ``--strict``.
"""
from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import idlp, svg
from .basis import ExprFunction
from .config import build_system, load_config
from .dynamics import ControlSignal, integrate
from .errors import ConfigError, OccLPError
from .lp import write_lp_dump
from .occupation import (
    cesaro_measure, default_metric, hausdorff_diagnostic, sample_viable_trajectories, w_residual,
    w_residual_bound, _lie_derivative_bounds,
)
from .report import Report, _plain
from .values import abel_value_dp, cesaro_value_dp, dpp_gradient_diagnostic

log = logging.getLogger("occlp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAIL = 0, 2, 3, 4
SUBCOMMANDS = ("simulate", "value", "lp", "certify", "feedback", "diagnose", "report")


class Run:
    """Output directory plus the collected pass/fail reports of one invocation."""

    def __init__(self, cfg, subcommand, run_id):
        self.cfg = cfg
        self.system = build_system(cfg)
        self.dir = os.path.join(cfg["output"], subcommand, run_id)
        os.makedirs(self.dir, exist_ok=True)
        self.reports = []

    def write(self, name, text):
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=".tmp-")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, os.path.join(self.dir, name))

    def write_json(self, name, payload):
        doc = {"config": self.cfg, **_plain(payload)}
        self.write(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def add(self, report):
        self.reports.append(report)
        log.info("%s", report)
        return report.to_dict()


# --------------------------------------------------------------------------
# helpers


def _disc(run, y0, perturbation="config"):
    lp = run.cfg["lp"]
    pert = lp["perturbation"] if perturbation == "config" else perturbation
    pert = None if pert is None else (pert["epsilon"], pert["T"])
    return idlp.make_discretization(run.system, y0, nodes=lp["nodes"], degree=lp["degree"],
                                    eps_c=lp["epsilon_c"], xi_cap=lp["xi_cap"], perturbation=pert)


def _certificate_from_config(run):
    c = run.cfg["certificate"]
    if c is None:
        return None
    if "closed_form" in c:
        y0 = c.get("y0", run.cfg["y0"][0])
        if run.system.name != "rotation-polar":
            raise ConfigError("the rotation closed form needs system rotation-polar", key="certificate.closed_form")
        return idlp.rotation_certificate(y0)
    names = run.system.state_names
    try:
        return idlp.Certificate(c["mu"], ExprFunction(c["psi"]["value"], c["psi"]["grad"], names),
                                ExprFunction(c["eta"]["value"], c["eta"]["grad"], names), np.asarray(c["y0"]))
    except OccLPError as exc:
        raise ConfigError(f"certificate: {exc}", key="certificate") from exc


def _value_at(table, y0):
    v = float(table.at(y0))
    return v if np.isfinite(v) else None


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(run):
    sc = run.cfg["simulate"]
    sysm = run.system
    if sc["signal"] is None:
        u = float(sysm.control_grid[np.argmin(np.abs(sysm.control_grid))])
        signal = ControlSignal.constant(u)
    else:
        signal = ControlSignal(tuple(sc["signal"]["breakpoints"]), tuple(sc["signal"]["values"]))
    out = []
    for i, y0 in enumerate(run.cfg["y0"]):
        traj = integrate(sysm, y0, signal, sc["T"], run.cfg["grids"]["h_t"], wrap_angles=bool(sysm.angle_axes))
        m = cesaro_measure(traj)
        run.write(f"trajectory_{i}.csv", traj.to_csv(sysm.state_names))
        run.write(f"occupation_{i}.csv", m.to_csv(sysm.state_names))
        out.append({"y0": y0, "final_state": traj.states[-1],
                    "average_cost": float(m.weights @ sysm.k(m.states, m.controls)), "atoms": len(m)})
    run.write_json("simulate.json", {"runs": out})


def _value_tables(run, write=True):
    g = run.cfg["grids"]
    hz = run.cfg["horizons"]
    ces, abel = {}, {}
    for d in hz["delta"]:
        for T in hz["T"]:
            t = cesaro_value_dp(run.system, T, delta=d, nodes=g["nodes"], h_t=g["h_t"])
            ces[(T, d)] = t
            if write:
                run.write(f"V_T{T:g}_delta{d:g}.csv", t.to_csv(run.system.state_names))
        for lam in hz["lambda"]:
            t = abel_value_dp(run.system, lam, delta=d, nodes=g["nodes"], h_t=g["h_t"])
            abel[(lam, d)] = t
            if write:
                run.write(f"h_lambda{lam:g}_delta{d:g}.csv", t.to_csv(run.system.state_names))
    return ces, abel


def cmd_value(run):
    ces, abel = _value_tables(run)
    rows = []
    for y0 in run.cfg["y0"]:
        rows.append({
            "y0": y0,
            "V_T": [{"T": T, "delta": d, "value": _value_at(t, y0)} for (T, d), t in ces.items()],
            "h_lambda": [{"lambda": lam, "delta": d, "value": _value_at(t, y0)} for (lam, d), t in abel.items()],
        })
    run.write_json("value.json", {"values": rows,
                                  "tables": [t.describe() for t in (*ces.values(), *abel.values())]})


def _lp_solve(run, y0, index, write=True):
    disc = _disc(run, y0)
    res = idlp.solve_kstar(run.system, disc)
    cert = idlp.extract_certificate(res)
    check = idlp.verify_certificate(cert, run.system, points=disc.state_nodes, controls=disc.controls)
    if write:
        run.write_json(f"certificate_{index}.json", {"certificate": cert.to_dict()})
        run.write(f"gamma_{index}.csv", res.gamma.to_csv(run.system.state_names))
        run.write(f"xi_{index}.csv", res.xi.to_csv(run.system.state_names))
        if run.cfg["lp"]["dump"]:
            path = os.path.join(run.dir, f"primal_{index}.lpdump")
            with open(path, "w", encoding="utf-8") as fh:
                write_lp_dump(res.primal.problem, fh)
    return disc, res, cert, check


def cmd_lp(run):
    results = []
    for i, y0 in enumerate(run.cfg["y0"]):
        disc, res, cert, check = _lp_solve(run, y0, i)
        sol = res.solution
        results.append({
            "y0": y0, "kstar": res.value, "mu": cert.mu, "gap": abs(res.value - cert.mu),
            "epsilon_c": disc.eps_c, "xi_mass": res.xi.mass, "iterations": sol.iterations,
            "basis": disc.basis.names, "grid": disc.describe()["grid"], "perturbation": disc.describe()["perturbation"],
            "grid_feasibility": run.add(check),
        })
    run.write_json("lp.json", {"results": results})


def cmd_certify(run):
    cert = _certificate_from_config(run)
    if cert is None:
        raise ConfigError("certify needs a certificate block", key="certificate")
    points = idlp.verification_grid(run.system, run.cfg["lp"]["nodes"])
    rep = run.add(idlp.verify_certificate(cert, run.system, points=points))
    run.write_json("certify.json", {"certificate": cert.to_dict(), "report": rep})


def cmd_feedback(run):
    fc = run.cfg["feedback"]
    out = []
    given = _certificate_from_config(run)
    for i, y0 in enumerate(run.cfg["y0"]):
        if given is not None:
            cert = given
        else:
            disc, _, cert, _ = _lp_solve(run, y0, i, write=False)
            cert = idlp.refine_eta(cert, run.system, disc, stop_weight=fc["stop_weight"])
        law = idlp.synthesize_feedback(cert, run.system, tie_rule=fc["tie_rule"])
        traj, avg = idlp.closed_loop_rollout(law, run.system, y0, fc["T"], run.cfg["grids"]["h_t"])
        run.write(f"rollout_{i}.csv", traj.to_csv(run.system.state_names))
        out.append({"y0": y0, "average_cost": avg, "final_state": traj.states[-1],
                    "certificate": cert.to_dict(), "tie_rule": fc["tie_rule"]})
    run.write_json("feedback.json", {"rollouts": out})


def cmd_diagnose(run):
    cfg = run.cfg
    dg = cfg["diagnose"]
    sysm = run.system
    rng = np.random.default_rng(cfg["seed"])
    basis = idlp.basis_for_system(sysm, cfg["lp"]["degree"])
    bounds = _lie_derivative_bounds(basis, sysm)
    # W-residuals of sampled Cesaro measures against their a priori bound
    wres = []
    for T in cfg["horizons"]["T"]:
        worst = -np.inf
        for traj in sample_viable_trajectories(sysm, dg["samples"], T, dg["switches"], rng, cfg["grids"]["h_t"]):
            res = np.abs(w_residual(cesaro_measure(traj), basis, sysm))
            bound = w_residual_bound(traj, basis, sysm, dg["switches"], bounds=bounds)
            worst = max(worst, float(np.max(res - bound)))
        wres.append(run.add(Report("w_residual_bound", worst <= 0, {"T": T, "max_excess": worst,
                                                                     "samples": dg["samples"]})))
    # Hausdorff proxy between sampled occupational measures and discretized W
    metric = default_metric(sysm, dg["metric_J"])
    disc = _disc(run, cfg["y0"][0], perturbation=None)
    w_meas = idlp.w_grid_measures(sysm, disc, dg["w_measures"], rng)
    trend = []
    for T in dg["hausdorff_T"]:
        sampled = [cesaro_measure(t) for t in
                   sample_viable_trajectories(sysm, dg["samples"], T, dg["switches"], rng, cfg["grids"]["h_t"])]
        ab, ba = hausdorff_diagnostic(sampled, w_meas, metric, one_sided=True)
        trend.append({"T": T, "distance": max(ab, ba), "sampled_to_W": ab, "W_to_sampled": ba})
    # informational: finite-sample greedy hull fits are too noisy to gate on
    haus = run.add(Report("hausdorff_trend", True, {"trend": trend, "metric": metric.to_dict()},
                          ["informational; greedy hull fits on finite samples bound nothing"]))
    # DPP gradient diagnostic and the value-below-cost inequality on W
    ces, _ = _value_tables(run, write=False)
    dpp = [run.add(dpp_gradient_diagnostic(t, sysm)) for (T, d), t in ces.items() if d == 0.0]
    wv = []
    for y0 in cfg["y0"]:
        res = idlp.solve_kstar(sysm, _disc(run, y0, perturbation=None))
        for (T, d), t in ces.items():
            if d == 0.0:
                wv.append(run.add(idlp.w_value_check(res.gamma, t, sysm, dg["tol_w_value"])))
    run.write_json("diagnose.json", {"w_residual": wres, "hausdorff": haus, "dpp_gradient": dpp, "w_value": wv})


def cmd_report(run):
    cfg = run.cfg
    ces, abel = _value_tables(run, write=False)
    entries = []
    for i, y0 in enumerate(cfg["y0"]):
        _, res, cert, _ = _lp_solve(run, y0, i, write=False)
        Ts = sorted(T for (T, d) in ces if d == 0.0)
        lams = sorted(lam for (lam, d) in abel if d == 0.0)
        vt = [_value_at(ces[(T, 0.0)], y0) for T in Ts]
        hl = [_value_at(abel[(lam, 0.0)], y0) for lam in lams]
        entries.append({"y0": y0, "T": Ts, "V_T": vt, "lambda": lams, "h_lambda": hl,
                        "kstar": res.value, "mu": cert.mu})
        nan = [float("nan") if v is None else v for v in vt]
        run.write(f"V_T_{i}.svg", svg.line_plot(
            [("V_T", Ts, nan)], f"V_T at y0 = {y0}", "T", "V_T",
            bands=[("[mu, k*]", Ts, [cert.mu] * len(Ts), [res.value] * len(Ts))]))
        run.write(f"h_lambda_{i}.svg", svg.line_plot(
            [("h_lambda", lams, [float("nan") if v is None else v for v in hl])],
            f"h_lambda at y0 = {y0}", "lambda", "h_lambda", logx=True,
            bands=[("[mu, k*]", lams, [cert.mu] * len(lams), [res.value] * len(lams))]))
    if len(cfg["y0"]) > 1:
        xs = list(range(len(entries)))
        run.write("sandwich.svg", svg.line_plot(
            [("mu", xs, [e["mu"] for e in entries]), ("k*", xs, [e["kstar"] for e in entries]),
             ("V_T (largest T)", xs, [float("nan") if e["V_T"][-1] is None else e["V_T"][-1] for e in entries])],
            "sandwich mu <= V_T <= k*", "initial state index", "value"))
    run.write_json("report.json", {"entries": entries})


COMMANDS = {"simulate": cmd_simulate, "value": cmd_value, "lp": cmd_lp, "certify": cmd_certify,
            "feedback": cmd_feedback, "diagnose": cmd_diagnose, "report": cmd_report}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="occlp", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", help="JSON run configuration")
    parser.add_argument("--strict", action="store_true", help="exit 4 if any diagnostic reports FAIL")
    parser.add_argument("--run-id", help="output subdirectory name (default: UTC timestamp)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    run_id = args.run_id or datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    try:
        cfg = load_config(args.config)
        run = Run(cfg, args.subcommand, run_id)
        COMMANDS[args.subcommand](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OccLPError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    failed = [r for r in run.reports if not r.passed]
    for r in failed:
        print(f"FAIL {r}", file=sys.stderr)
    print(run.dir)
    if failed and args.strict:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

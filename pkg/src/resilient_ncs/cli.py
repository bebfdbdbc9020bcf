"""Command line entry point: scenario files in, JSON reports and CSV tables out.

Exit codes: 0 success, 2 infeasible (or a report that fails verification),
3 validation or parse error, 4 solver inconclusive.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, lmi
from .analysis import (FULL, REGIMES, AnalysisCertificate, analyze, assemble_analysis,
                       security_metrics)
from .errors import (Infeasible, IterationLimit, ParseError, PreconditionFailed, SingularXi,
                     ValidationError)
from .model import (AttackParameters, DesignParameters, GainSet, MixedParameters, Scenario,
                    SimulationSettings, SwitchedPlant, augmented_initial_state, validate)
from .synthesis import METHODS, assemble_mixed, design_mixed, synthesize
from .sim import LAWS, MIXED, TIME, monte_carlo

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_INCONCLUSIVE = 0, 2, 3, 4
CSV_COLUMNS = ("k", "mean_state_norm", "mean_square_norm", "envelope", "psi")
SWEEP_PARAMS = ("alpha_bar", "beta_bar", "gamma_bar")
RESOLVE, FIXED = "resolve", "fixed"


# --------------------------------------------------------------------- scenario files

def _get(table: dict, key: str, where: str, kind=float, default=...):
    if key not in table:
        if default is ...:
            raise ParseError(f"{where}.{key}: missing")
        return default
    val = table[key]
    try:
        if kind is float:
            if isinstance(val, bool):
                raise TypeError
            return float(val)
        if kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise TypeError
            return int(val)
        if kind is str:
            if not isinstance(val, str):
                raise TypeError
            return val
    except (TypeError, ValueError):
        raise ParseError(f"{where}.{key}: expected {kind.__name__}, got {val!r}") from None
    return val


def _matrix(val, where: str) -> np.ndarray:
    try:
        M = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: expected a nested numeric array") from None
    if M.ndim == 1:
        M = M[None, :]
    if M.ndim != 2:
        raise ParseError(f"{where}: expected a 2-D array")
    return M


def _numbered(table: dict, where: str) -> list[dict]:
    try:
        keys = sorted(table, key=int)
    except ValueError:
        raise ParseError(f"{where}: mode keys must be 1, 2, ...") from None
    if [int(k) for k in keys] != list(range(1, len(keys) + 1)):
        raise ParseError(f"{where}: modes must be numbered 1..m without gaps")
    return [table[k] for k in keys]


def _gains(table: dict | None, where: str) -> GainSet | None:
    if table is None:
        return None
    modes = _numbered(table.get("mode", {}), f"{where}.mode")
    if not modes:
        raise ParseError(f"{where}: no [{where}.mode.N] tables")
    return GainSet([_matrix(_get(md, "K", f"{where}.mode.{i + 1}", kind=None), f"{where}.mode.{i + 1}.K")
                    for i, md in enumerate(modes)])


def scenario_from_dict(data: dict, name: str = "scenario") -> Scenario:
    """Build a scenario from the parsed TOML layout (no validation)."""
    if "plant" not in data or "mode" not in data["plant"]:
        raise ParseError("plant.mode: missing [plant.mode.N] tables")
    modes = []
    for i, md in enumerate(_numbered(data["plant"]["mode"], "plant.mode")):
        where = f"plant.mode.{i + 1}"
        modes.append((_matrix(_get(md, "A", where, kind=None), f"{where}.A"),
                      _matrix(_get(md, "B", where, kind=None), f"{where}.B")))
    if "attack" not in data:
        raise ParseError("attack: missing section")
    at = data["attack"]
    attack = AttackParameters(_get(at, "alpha_bar", "attack"), _get(at, "beta_bar", "attack"),
                              _get(at, "gamma_bar", "attack"),
                              _get(at, "coupling", "attack", str, "independent"))
    design = None
    if "design" in data:
        d = data["design"]
        design = DesignParameters(_get(d, "rho_s", "design"), _get(d, "rho_u", "design"),
                                  _get(d, "mu", "design"))
    mixed = None
    if "mixed" in data:
        d = data["mixed"]
        mixed = MixedParameters(_get(d, "rho_s", "mixed"), _get(d, "lambda", "mixed"),
                                _get(d, "mu", "mixed"), _get(d, "mu1", "mixed"), _get(d, "mu2", "mixed"))
    s = data.get("simulation", {})
    sim = SimulationSettings(
        runs=_get(s, "runs", "simulation", int, 100),
        horizon=_get(s, "horizon", "simulation", int, 200),
        seed=_get(s, "seed", "simulation", int, 0),
        payload=_get(s, "payload", "simulation", str, "sphere"),
        tau_d=_get(s, "tau_d", "simulation", int, None),
        guard_threshold=_get(s, "guard_threshold", "simulation", float, None),
    )
    x0 = None
    if "x0" in s:
        x0 = _matrix(s["x0"], "simulation.x0").ravel()
    return Scenario(
        plant=SwitchedPlant(modes), attack=attack, design=design, mixed=mixed,
        gains=_gains(data.get("gains"), "gains"),
        mixed_gains=_gains(data.get("mixed_gains"), "mixed_gains"),
        x0=x0, simulation=sim, name=str(data.get("name", name)),
    )


def _gains_dict(gains: GainSet) -> dict:
    return {"mode": {str(p + 1): {"K": K.tolist()} for p, K in enumerate(gains.K)}}


def scenario_to_dict(s: Scenario) -> dict:
    out: dict = {"name": s.name, "plant": {"mode": {
        str(p + 1): {"A": md.A.tolist(), "B": md.B.tolist()} for p, md in enumerate(s.plant.modes)}}}
    out["attack"] = asdict(s.attack)
    if s.design is not None:
        out["design"] = asdict(s.design)
    if s.mixed is not None:
        mp = asdict(s.mixed)
        mp["lambda"] = mp.pop("lam")
        out["mixed"] = mp
    if s.gains is not None:
        out["gains"] = _gains_dict(s.gains)
    if s.mixed_gains is not None:
        out["mixed_gains"] = _gains_dict(s.mixed_gains)
    sim = {k: v for k, v in asdict(s.simulation).items() if v is not None}
    if s.x0 is not None:
        sim["x0"] = np.asarray(s.x0, dtype=float).ravel().tolist()
    out["simulation"] = sim
    return out


def load_scenario(path) -> Scenario:
    """Parse and validate a TOML scenario; raises ParseError or ValidationError."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    s = scenario_from_dict(data, path.stem)
    findings = validate(s)
    if findings:
        raise ValidationError(findings)
    return s


# --------------------------------------------------------------------- reports

def _plain(obj):
    """JSON-ready copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _values(problem: lmi.FeasibilityProblem, assignment: lmi.Assignment) -> dict:
    out = {}
    for v in problem.variables:
        val = assignment[v]
        out[v.name] = float(val) if v.kind == "scalar" else np.asarray(val).tolist()
    return out


def certificate_record(kind: str, problem: lmi.FeasibilityProblem, assignment: lmi.Assignment,
                       gains: GainSet, **extra) -> dict:
    report = lmi.verify(problem, assignment)
    return {
        "kind": kind, "delta": problem.delta, "gains": [K.tolist() for K in gains.K],
        "values": _values(problem, assignment), "min_margin": report.min_margin,
        "margins": {c.name: c.margin for c in report.checks}, **extra,
    }


def rebuild_problem(record: dict, scenario: Scenario) -> lmi.FeasibilityProblem:
    gains = GainSet(record["gains"])
    delta = float(record["delta"])
    attack = scenario.attack
    if "attack" in record:
        attack = AttackParameters(**record["attack"])
    if record["kind"] == "analysis":
        return assemble_analysis(scenario.plant, gains, attack, scenario.design,
                                 record.get("regime", FULL), delta)
    if record["kind"] == "mixed":
        return assemble_mixed(scenario.plant, gains, attack, scenario.mixed, delta)
    raise ParseError(f"certificate kind {record['kind']!r} cannot be rebuilt")


def verify_record(record: dict, scenario: Scenario, tol: float = 1e-9) -> lmi.VerificationReport:
    problem = rebuild_problem(record, scenario)
    assignment = lmi.Assignment()
    for v in problem.variables:
        if v.name not in record["values"]:
            raise ParseError(f"certificate is missing variable {v.name!r}")
        val = record["values"][v.name]
        assignment[v] = float(val) if v.kind == "scalar" else np.array(val, dtype=float)
    return lmi.verify(problem, assignment, tol)


def analysis_record(cert: AnalysisCertificate, scenario: Scenario) -> dict:
    rep = security_metrics(cert, augmented_initial_state(scenario.initial_state))
    rec = certificate_record("analysis", cert.problem, cert.assignment, cert.gains,
                             regime=cert.regime, attack=asdict(cert.attack))
    rec["security"] = asdict(rep)
    return rec


def _report(command: str, scenario: Scenario, args, **body) -> dict:
    return _plain({"tool": "resilient-ncs", "version": __version__, "command": command,
                   "scenario": scenario_to_dict(scenario),
                   "options": {"delta": args.delta, "tol": args.tol}, **body})


def _write_json(out_dir: Path, name: str, payload: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def write_aggregate_csv(path: Path, agg) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in agg.rows():
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


# --------------------------------------------------------------------- sweeps

def parse_grid(spec: str) -> list[float]:
    """``a:b:step`` inclusive of ``b`` (within half a step)."""
    try:
        a, b, step = (float(t) for t in spec.split(":"))
    except ValueError:
        raise ParseError(f"--grid expects a:b:step, got {spec!r}") from None
    if step <= 0 or b < a:
        raise ParseError("--grid needs step > 0 and a <= b")
    n = int(math.floor((b - a) / step + 0.5)) + 1
    return [round(a + i * step, 12) for i in range(n)]


def run_sweep(scenario: Scenario, param: str, grid, mode: str = FIXED,
              opts: lmi.SolverOptions | None = None, delta: float = 1e-6) -> list[dict]:
    """Security metrics across ``grid`` values of one attack parameter.

    ``fixed`` keeps the base certificate and re-verifies it at every point
    (for ``gamma_bar`` it stays valid, so only the payload term moves);
    ``resolve`` solves the analysis afresh at every point.
    """
    if param not in SWEEP_PARAMS:
        raise PreconditionFailed(f"--param must be one of {SWEEP_PARAMS}")
    if mode not in (FIXED, RESOLVE):
        raise PreconditionFailed("--mode must be resolve or fixed")
    if scenario.gains is None or scenario.design is None:
        raise PreconditionFailed("sweeps need gains and a [design] section")
    xt0 = augmented_initial_state(scenario.initial_state)
    base = analyze(scenario.plant, scenario.gains, scenario.attack, scenario.design,
                   opts=opts, delta=delta) if mode == FIXED else None
    rows = []
    for value in grid:
        attack = replace(scenario.attack, **{param: float(value)})
        row = {param: float(value), "feasible": False}
        if attack.findings() or scenario.design.findings(attack):
            row["reason"] = "; ".join(attack.findings() + scenario.design.findings(attack))
            rows.append(row)
            continue
        try:
            if mode == RESOLVE:
                cert = analyze(scenario.plant, scenario.gains, attack, scenario.design, opts=opts, delta=delta)
            else:
                problem = assemble_analysis(scenario.plant, scenario.gains, attack, scenario.design, FULL, delta)
                assignment = lmi.Assignment({v: base.assignment[bv]
                                             for v, bv in zip(problem.variables, base.problem.variables)})
                report = lmi.verify(problem, assignment)
                if not report.passed:
                    raise Infeasible(f"base certificate fails {report.failed()}")
                cert = replace(base, attack=attack, problem=problem, assignment=assignment, report=report)
        except (Infeasible, IterationLimit, PreconditionFailed) as exc:
            row["reason"] = str(exc)
            rows.append(row)
            continue
        rep = security_metrics(cert, xt0)
        row.update(feasible=True, tau_d_star=rep.tau_d_star, psi=rep.psi, ell=rep.ell,
                   psi_over_gamma2=rep.psi / attack.gamma_bar ** 2 if attack.gamma_bar > 0 else None)
        rows.append(row)
    return rows


# --------------------------------------------------------------------- commands

def _opts(args) -> lmi.SolverOptions:
    return lmi.SolverOptions(verify_tol=args.tol)


def _ensure_gains(scenario: Scenario, args) -> tuple[Scenario, dict | None]:
    if scenario.gains is not None:
        return scenario, None
    if scenario.design is None:
        raise PreconditionFailed("no gains given and no [design] section to synthesize them")
    gains, cert = synthesize(scenario.plant, scenario.attack, scenario.design, _opts(args), args.delta)
    return scenario.with_gains(gains), {"method": cert.method, "gains": [K.tolist() for K in gains.K]}


def cmd_analyze(args) -> int:
    scenario = load_scenario(args.scenario)
    if scenario.design is None:
        raise PreconditionFailed("analyze needs a [design] section")
    scenario, synth = _ensure_gains(scenario, args)
    cert = analyze(scenario.plant, scenario.gains, scenario.attack, scenario.design, args.regime,
                   _opts(args), args.delta)
    rec = analysis_record(cert, scenario)
    path = _write_json(Path(args.out), "analyze.json", _report("analyze", scenario, args,
                                                               synthesized=synth, certificate=rec))
    sec = rec["security"]
    print(f"feasible: tau_d*={sec['tau_d_star']:.6g} psi={sec['psi']:.6g} ell={sec['ell']:.6g} -> {path}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    scenario = load_scenario(args.scenario)
    if scenario.design is None:
        raise PreconditionFailed("synthesize needs a [design] section")
    gains, cert = synthesize(scenario.plant, scenario.attack, scenario.design, _opts(args), args.delta,
                             method=args.method)
    scenario = scenario.with_gains(gains)
    body = {"method": cert.method, "iterations": cert.iterations,
            "certificate": analysis_record(cert.analysis, scenario)}
    if cert.method == "congruence":
        body["synthesis"] = certificate_record("synthesis", cert.problem, cert.assignment, gains,
                                               coefficients=cert.coefficients)
    path = _write_json(Path(args.out), "synthesize.json", _report("synthesize", scenario, args, **body))
    print(f"gains ({cert.method}): " + "; ".join(np.array2string(K, precision=4) for K in gains.K) + f" -> {path}")
    return EXIT_OK


def _mixed_design(scenario: Scenario, args):
    if scenario.mixed is None:
        raise PreconditionFailed("mixed needs a [mixed] section")
    gains = scenario.mixed_gains or scenario.gains
    if gains is None:
        scenario, _ = _ensure_gains(scenario, args)
        gains = scenario.gains
    return design_mixed(scenario.plant, gains, scenario.attack, scenario.mixed, _opts(args), args.delta)


def cmd_mixed(args) -> int:
    scenario = load_scenario(args.scenario)
    design = _mixed_design(scenario, args)
    rec = certificate_record("mixed", design.problem, design.assignment, design.gains,
                             tau_d1_star=design.tau_d1_star, tau_d2_star=design.tau_d2_star,
                             tau_d1=design.tau_d1, tau_d2=design.tau_d2)
    path = _write_json(Path(args.out), "mixed.json", _report("mixed", scenario, args, certificate=rec))
    print(f"feasible: tau_d1*={design.tau_d1_star:.6g} tau_d2*={design.tau_d2_star:.6g} -> {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    sim = scenario.simulation
    scenario = replace(scenario, simulation=replace(
        sim, runs=args.runs or sim.runs, seed=sim.seed if args.seed is None else args.seed,
        horizon=args.horizon or sim.horizon, payload=args.payload or sim.payload))
    cert, mixed = None, None
    body: dict = {"law": args.law}
    if args.law == TIME:
        scenario, synth = _ensure_gains(scenario, args)
        body["synthesized"] = synth
        if scenario.design is not None:
            try:
                cert = analyze(scenario.plant, scenario.gains, scenario.attack, scenario.design,
                               opts=_opts(args), delta=args.delta)
                body["certificate"] = analysis_record(cert, scenario)
            except Infeasible as exc:
                body["certificate"] = None
                body["note"] = f"no analysis certificate; envelope omitted ({exc})"
        if cert is None and scenario.simulation.tau_d is None:
            raise PreconditionFailed("time-switching needs simulation.tau_d or a certifiable design")
    else:
        mixed = _mixed_design(scenario, args)
    agg = monte_carlo(scenario, args.law, mixed=mixed, certificate=cert, workers=args.workers)
    out = Path(args.out)
    write_aggregate_csv(out / "aggregate.csv", agg)
    body.update(runs=agg.runs, seed=agg.seed, psi=agg.psi, ell=agg.ell,
                final_mean_square_norm=agg.mean_square_norm[-1],
                final_mean_state_norm=agg.mean_state_norm[-1])
    path = _write_json(out, "simulate.json", _report("simulate", scenario, args, **body))
    print(f"{agg.runs} runs, final mean-square norm {agg.mean_square_norm[-1]:.6g} -> {out / 'aggregate.csv'}, {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario, synth = _ensure_gains(scenario, args)
    rows = run_sweep(scenario, args.param, parse_grid(args.grid), args.mode, _opts(args), args.delta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = [args.param, "feasible", "tau_d_star", "psi", "ell", "psi_over_gamma2"]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r.get(c, "") for c in cols])
    path = _write_json(out, "sweep.json", _report("sweep", scenario, args, synthesized=synth,
                                                  param=args.param, mode=args.mode, rows=rows))
    for r in rows:
        if r["feasible"]:
            print(f"{args.param}={r[args.param]:g}: psi={r['psi']:.6g} ell={r['ell']:.6g} tau_d*={r['tau_d_star']:.6g}")
        else:
            print(f"{args.param}={r[args.param]:g}: infeasible")
    print(f"-> {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        data = json.loads(Path(args.report).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{args.report}: {exc}") from None
    if "scenario" not in data or "certificate" not in data or not data["certificate"]:
        raise ParseError("report has no scenario echo or certificate")
    scenario = scenario_from_dict(data["scenario"])
    report = verify_record(data["certificate"], scenario, args.tol)
    if report.passed:
        print(f"verified: {len(report.checks)} constraints, min margin {report.min_margin:.3e}")
        return EXIT_OK
    worst = report.most_violated()
    print(f"verification failed: {report.failed()} (worst {worst.name} margin {worst.margin:.3e})")
    return EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--delta", type=float, default=1e-6, help="required LMI margin")
    common.add_argument("--tol", type=float, default=1e-9, help="verification tolerance")
    common.add_argument("--out", default=".", help="output directory")
    p = argparse.ArgumentParser(prog="resilient-ncs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", parents=[common], help="certify fixed gains")
    a.add_argument("scenario")
    a.add_argument("--regime", choices=REGIMES, default=FULL)
    s = sub.add_parser("synthesize", parents=[common], help="design gains")
    s.add_argument("scenario")
    s.add_argument("--method", choices=METHODS, default="auto")
    mx = sub.add_parser("mixed", parents=[common], help="mixed-switching design")
    mx.add_argument("scenario")
    sm = sub.add_parser("simulate", parents=[common], help="Monte Carlo runs")
    sm.add_argument("scenario")
    sm.add_argument("--law", choices=LAWS, default=TIME)
    sm.add_argument("--runs", type=int)
    sm.add_argument("--seed", type=int)
    sm.add_argument("--horizon", type=int)
    sm.add_argument("--payload", choices=("sphere", "ball", "constant"))
    sm.add_argument("--workers", type=int, default=1)
    sw = sub.add_parser("sweep", parents=[common], help="attack-parameter sweep")
    sw.add_argument("scenario")
    sw.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    sw.add_argument("--grid", required=True, help="a:b:step")
    sw.add_argument("--mode", choices=(RESOLVE, FIXED), default=FIXED)
    v = sub.add_parser("verify", parents=[common], help="re-check a report's certificate")
    v.add_argument("report")
    return p


COMMANDS = {"analyze": cmd_analyze, "synthesize": cmd_synthesize, "mixed": cmd_mixed,
            "simulate": cmd_simulate, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ValidationError, PreconditionFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (Infeasible, SingularXi) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IterationLimit as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())

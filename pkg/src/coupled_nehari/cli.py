"""Command-line interface: ``coupled-nehari {solve,sync,check,sweep,probe}``.

Exit codes: 0 success, 1 invalid input, 2 finished but indeterminate.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .discretize import BlockFunction, assemble, fields_from_csv, fields_to_csv
from .minimize import SolveFailure, SolverConfig, classify_solution, initial_guess, minimize_psi, _Profiles
from .model import (InstanceError, check_b2, check_coercivity, estimate_constants, load_instance, spec_from_dict,
                    validate_b1)
from .nehari import OutsideDomainError, ScaleSolveError, project_to_nehari

EXIT_OK, EXIT_INVALID, EXIT_INDETERMINATE = 0, 1, 2


class CliError(Exception):
    """Invalid input; reported on stderr with exit code 1."""


# -- manifest and writers -----------------------------------------------------

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def build_manifest(args, command: str, config: dict, extra: dict | None = None) -> dict:
    inst = args.instance
    inst_hash = _sha256(Path(inst).read_bytes()) if inst and Path(inst).is_file() else None
    manifest = {"command": command, "instance": inst, "instance_sha256": inst_hash, "seed": args.seed,
                "config": config, "config_hash": _sha256(_canonical(config).encode())[:16], "version": __version__}
    if extra:
        manifest.update(extra)
    args.config_hash = manifest["config_hash"]
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def manifest_comment(manifest: dict) -> str:
    return "manifest " + _canonical(_jsonable(manifest))


def log_run(out: Path, manifest: dict, status: int, wall: float):
    """Append timestamp and wall time to the run log, kept apart so artifacts stay reproducible."""
    entry = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "wall_time": round(wall, 3), "exit": status,
             "command": manifest["command"], "config_hash": manifest["config_hash"], "seed": manifest["seed"]}
    with open(out / "run_log.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def svg_plot(r: np.ndarray, curves: np.ndarray, labels, title: str = "", width: int = 640,
             height: int = 400) -> str:
    """Minimal SVG line plot of several curves over a shared abscissa."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    pad = 50
    x0, x1 = float(r.min()), float(r.max())
    y0, y1 = min(0.0, float(curves.min())), float(curves.max()) or 1.0
    sx = lambda x: pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
    sy = lambda y: height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{sy(0):.2f}" x2="{width - pad}" y2="{sy(0):.2f}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{title}</text>',
             f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">r</text>',
             f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{x0:.3g}</text>',
             f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{x1:.3g}</text>',
             f'<text x="{pad - 5}" y="{sy(y1):.2f}" font-size="10" text-anchor="end">{y1:.3g}</text>']
    for k, (curve, label) in enumerate(zip(curves, labels)):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(r, curve))
        col = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 60}" y="{pad + 15 * (k + 1)}" font-size="12" fill="{col}">'
                     f'{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- shared loading -----------------------------------------------------------

def load_config(path) -> dict:
    if not path:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed config JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise CliError("config must be a JSON object")
    return data


def solver_config(cfg: dict, seed: int) -> SolverConfig:
    opts = dict(cfg.get("solver", {}))
    opts["seed"] = seed
    try:
        return SolverConfig.from_dict(opts)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid solver options: {exc}") from None


def load_spec(args, cfg: dict, need_domain: bool = True):
    if not args.instance:
        raise CliError("--instance is required")
    try:
        spec = load_instance(args.instance)
    except OSError as exc:
        raise CliError(f"cannot read instance: {exc}") from None
    except InstanceError as exc:
        raise CliError(str(exc)) from None
    if spec.domain is None:
        if need_domain:
            raise CliError("instance has no domain")
        return spec, None
    grid = cfg.get("grid_points")
    if grid is not None:
        spec = spec.with_domain(spec.domain.with_grid(int(grid)))
    return spec, assemble(spec.domain)


def _require_b1_and_coercive(spec, domain, cfg):
    b1 = validate_b1(spec.coupling, spec.partition)
    if not b1.passed:
        first = b1.violations[0]
        raise CliError(f"coupling violates the sign rule: {first['rule']} at beta{tuple(first['entry'])} "
                       f"= {first['value']}")
    coer = check_coercivity(spec, domain, cfg.get("margin", 1e-9))
    if coer.status == "fail":
        bad = coer.violations[0]
        raise CliError(f"lambda_{bad['component']} = {bad['lambda']} is not above {bad['bound']:.6g}")
    return b1, coer


# -- subcommands --------------------------------------------------------------

def cmd_solve(args, cfg, out: Path) -> int:
    spec, domain = load_spec(args, cfg)
    _require_b1_and_coercive(spec, domain, cfg)
    scfg = solver_config(cfg, args.seed)
    if args.restarts is not None:
        scfg = SolverConfig.from_dict({**scfg.to_dict(), "restart_count": args.restarts})
    manifest = build_manifest(args, "solve", {**cfg, "solver": scfg.to_dict(), "instance_data": spec.to_dict()})
    constants = None
    if args.with_bound:
        constants = estimate_constants(spec, domain, cfg.get("safety_factor", 2.0), seed=args.seed)
    try:
        u, report = minimize_psi(spec, domain, scfg, constants=constants)
    except SolveFailure as exc:
        write_json(out / "report.json", {"manifest": manifest, "error": str(exc), "status": "indeterminate"})
        return EXIT_INDETERMINATE
    payload = {"manifest": manifest, "report": report.to_dict(include_time=False)}
    if args.oracle and spec.ell == 1:
        from .oracle import shooting_ground_state
        from .discretize import energy
        sh = shooting_ground_state(domain, float(spec.lam[0]), spec.p, float(spec.beta[0, 0]))
        ref = project_to_nehari(BlockFunction(domain, sh.values[None, :]), spec)
        payload["oracle"] = {"shooting_parameter": sh.parameter, "continuum_energy": sh.energy,
                             "discrete_energy": energy(ref, spec),
                             "energy_difference": report.energy - energy(ref, spec),
                             "sup_difference": float(np.max(np.abs(u.values[0] - sh.values)))}
    write_json(out / "report.json", payload)
    (out / "solution.csv").write_text(fields_to_csv(u, [manifest_comment(manifest)]), encoding="utf-8")
    if args.plot:
        (out / "solution.svg").write_text(svg_plot(domain.r, u.values, [f"u_{i + 1}" for i in range(u.ell)],
                                                   f"energy {report.energy:.8g} ({report.classification})"))
    ok = report.converged and report.classification != "indeterminate"
    return EXIT_OK if ok else EXIT_INDETERMINATE


def _sync_payload(spec, compose: bool, domain, seed: int) -> tuple[dict, bool]:
    from .synchronized import (lemma_sync_p2_check, m_identity_report, solve_sync, sync_p2_two_component,
                               synchronize_with_pde)

    beta, p = spec.beta, spec.p
    out: dict = {}
    cand = solve_sync(beta, p, seed=seed)
    if cand is None:
        out["solution"] = None
        out["verdict"] = "no solution on M"
        return out, False
    out["solution"] = cand.to_dict()
    out["verdict"] = "positive solution" if cand.positive else "no positive solution"
    out["m_identity"] = m_identity_report(cand.min_c, beta, p)
    if p == 2:
        out["minimizer_bound_check"] = lemma_sync_p2_check(cand.min_c, beta)
        if spec.ell == 2:
            v = sync_p2_two_component(beta)
            out["two_component"] = v.to_dict()
            out["verdict"] = {"positive": "positive solution", "none": "no positive solution",
                              "degenerate": "degenerate"}[v.verdict]
    if compose:
        from .oracle import shooting_ground_state
        if np.ptp(spec.lam) != 0:
            raise CliError("--compose needs equal lambda_i")
        sh = shooting_ground_state(domain, float(spec.lam[0]), p, 1.0)
        _, sys_res, scalar_res = synchronize_with_pde(cand, sh.values, spec, domain)
        out["composed"] = {"system_residual": sys_res.tolist(), "scalar_residual": scalar_res,
                           "ratio": float(np.max(sys_res) / scalar_res) if scalar_res > 0 else None}
    return out, True


def cmd_sync(args, cfg, out: Path) -> int:
    spec, domain = load_spec(args, cfg, need_domain=args.compose)
    if not np.all(np.diag(spec.beta) > 0):
        raise CliError("diagonal couplings must be positive")
    manifest = build_manifest(args, "sync", {**cfg, "instance_data": spec.to_dict(), "compose": args.compose})
    payload, _ = _sync_payload(spec, args.compose, domain, args.seed)
    write_json(out / "sync.json", {"manifest": manifest, **payload})
    return EXIT_OK


def cmd_check(args, cfg, out: Path) -> int:
    spec, domain = load_spec(args, cfg)
    manifest = build_manifest(args, "check", {**cfg, "instance_data": spec.to_dict()})
    margin = cfg.get("margin", 1e-9)
    coer = check_coercivity(spec, domain, margin)
    b1 = validate_b1(spec.coupling, spec.partition)
    constants = estimate_constants(spec, domain, cfg.get("safety_factor", 2.0), seed=args.seed)
    if "C_star" in cfg:
        from .model import ConditionConstants
        constants = ConditionConstants.from_values(constants.S, constants.d1, spec.p, constants.safety_factor,
                                                   dict(constants.provenance), C_star=float(cfg["C_star"]))
    b2 = check_b2(spec, constants, margin)
    write_json(out / "check.json", {"manifest": manifest, "coercivity": coer.to_dict(), "B1": b1.to_dict(),
                                    "constants": constants.to_dict(), "B2": b2.to_dict(),
                                    "heuristic_constants": constants.heuristic})
    if coer.status == "inconclusive" or b2.status == "inconclusive":
        return EXIT_INDETERMINATE
    return EXIT_OK


# -- sweep ----------------------------------------------------------------------

def parse_axis(text: str) -> tuple[str, list[float]]:
    """``name=START:STOP:STEP`` (inclusive) or ``name=v1,v2,...``."""
    if "=" not in text:
        raise CliError(f"axis {text!r} must look like name=START:STOP:STEP or name=v1,v2")
    name, spec = text.split("=", 1)
    name = name.strip()
    try:
        if ":" in spec:
            start, stop, step = (float(x) for x in spec.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + k * step, 12) for k in range(n)]
        else:
            values = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"cannot parse axis values {spec!r}") from None
    if not values:
        raise CliError(f"axis {name!r} has no values")
    _axis_target(name, 99)
    return name, values


def _axis_target(name: str, ell: int):
    if name == "p":
        return ("p",)
    for prefix, kind in (("beta", "beta"), ("lambda", "lambda")):
        if name.startswith(prefix):
            digits = name[len(prefix):].replace("_", "")
            if kind == "beta" and len(digits) == 2 and digits.isdigit():
                i, j = int(digits[0]) - 1, int(digits[1]) - 1
                if min(i, j) < 0 or max(i, j) >= ell:
                    raise CliError(f"axis {name!r} out of range")
                return ("beta", i, j)
            if kind == "lambda" and digits.isdigit():
                i = int(digits) - 1
                if not 0 <= i < ell:
                    raise CliError(f"axis {name!r} out of range")
                return ("lambda", i)
    raise CliError(f"unknown sweep parameter {name!r} (use p, betaIJ or lambdaI)")


def _apply_axes(data: dict, axes, values) -> dict:
    d = json.loads(json.dumps(data))
    ell = len(d["beta"])
    for (name, _), v in zip(axes, values):
        target = _axis_target(name, ell)
        if target[0] == "p":
            d["p"] = v
        elif target[0] == "beta":
            _, i, j = target
            d["beta"][i][j] = v
            d["beta"][j][i] = v
        else:
            lam = d["lambda"] if isinstance(d["lambda"], list) else [d["lambda"]] * ell
            lam[target[1]] = v
            d["lambda"] = lam
    return d


def _sweep_point(data: dict, mode: str, cfg: dict, seed: int) -> dict:
    from .synchronized import solve_sync, sync_p2_two_component

    try:
        spec = spec_from_dict(data)
    except InstanceError as exc:
        return {"status": "invalid", "error": str(exc)}
    if mode == "sync":
        if spec.p == 2 and spec.ell == 2:
            v = sync_p2_two_component(spec.beta)
            c = v.candidate.c.tolist() if v.candidate is not None else [None] * 2
            res = v.candidate.residual if v.candidate is not None else None
            en = v.candidate.energy if v.candidate is not None else None
            return {"status": "ok", "exists": v.verdict == "positive", "verdict": v.verdict, "c": c,
                    "energy": en, "residual": res}
        cand = solve_sync(spec.beta, spec.p, seed=seed)
        if cand is None:
            return {"status": "ok", "exists": False, "verdict": "none", "c": [None] * spec.ell,
                    "energy": None, "residual": None}
        support = "".join("1" if x > 0 else "0" for x in cand.min_c)
        return {"status": "ok", "exists": cand.positive, "verdict": "positive" if cand.positive else "none",
                "c": cand.c.tolist(), "energy": cand.energy, "residual": cand.residual,
                "minimizer_support": support}
    domain = assemble(spec.domain.with_grid(int(cfg["grid_points"])) if "grid_points" in cfg else spec.domain)
    scfg = solver_config(cfg, seed)
    try:
        _, rep = minimize_psi(spec, domain, scfg)
    except SolveFailure as exc:
        return {"status": "indeterminate", "error": str(exc)}
    return {"status": "ok", "exists": rep.classification == "fully-nontrivial", "verdict": rep.classification,
            "energy": rep.energy, "residual": max(rep.residuals), "converged": rep.converged}


def cmd_sweep(args, cfg, out: Path) -> int:
    if not args.axis:
        raise CliError("sweep needs at least one --axis")
    if len(args.axis) > 2:
        raise CliError("at most two swept parameters")
    axes = [parse_axis(a) for a in args.axis]
    if not args.instance:
        raise CliError("--instance is required")
    try:
        text = Path(args.instance).read_text(encoding="utf-8")
        data = json.loads(text)
    except OSError as exc:
        raise CliError(f"cannot read instance: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        base_spec = spec_from_dict(data)
    except InstanceError as exc:
        raise CliError(str(exc)) from None
    for name, _ in axes:
        _axis_target(name, base_spec.ell)
    if args.mode == "solve" and base_spec.domain is None:
        raise CliError("solve-mode sweep needs a domain")
    grid = [()]
    for _, vals in axes:
        grid = [g + (v,) for g in grid for v in vals]
    manifest = build_manifest(args, "sweep", {**cfg, "axes": [[n, v] for n, v in axes], "mode": args.mode,
                                              "instance_data": data})
    journal = out / "sweep.journal.jsonl"
    done: dict[int, dict] = {}
    if journal.exists():
        for line in journal.read_text(encoding="utf-8").splitlines():
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # a torn last line from an interrupted run
            if rec.get("config_hash") == manifest["config_hash"]:
                done[int(rec["index"])] = rec["result"]
    todo = [k for k in range(len(grid)) if k not in done]
    workers = int(os.environ.get("NEHARI_THREADS", "1") or 1)

    def run(k):
        return k, _sweep_point(_apply_axes(data, axes, grid[k]), args.mode, cfg, args.seed)

    with open(journal, "a", encoding="utf-8") as jf:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = pool.map(run, todo)
                for k, res in results:
                    done[k] = res
                    jf.write(json.dumps(_jsonable({"index": k, "config_hash": manifest["config_hash"],
                                                   "result": res}), sort_keys=True) + "\n")
                    jf.flush()
        else:
            for k in todo:
                _, res = run(k)
                done[k] = res
                jf.write(json.dumps(_jsonable({"index": k, "config_hash": manifest["config_hash"], "result": res}),
                                    sort_keys=True) + "\n")
                jf.flush()

    ell = base_spec.ell
    names = [n for n, _ in axes]
    if args.mode == "sync":
        header = names + ["exists", "verdict"] + [f"c_{i + 1}" for i in range(ell)] + ["energy", "residual"]
    else:
        header = names + ["exists", "verdict", "energy", "residual", "converged"]
    fmt = lambda x: "" if x is None else (repr(float(x)) if isinstance(x, float) else str(x))
    lines = ["# " + manifest_comment(manifest), ",".join(header)]
    any_bad = False
    for k, point in enumerate(grid):
        res = done[k]
        if res.get("status") != "ok":
            any_bad = True
            lines.append(",".join([fmt(float(v)) for v in point] + ["", res.get("status", "")] +
                                  [""] * (len(header) - len(point) - 2)))
            continue
        row = [fmt(float(v)) for v in point] + [str(bool(res["exists"])).lower(), res["verdict"]]
        if args.mode == "sync":
            row += [fmt(None if c is None else float(c)) for c in res["c"]]
            row += [fmt(res["energy"]), fmt(res["residual"])]
        else:
            row += [fmt(res["energy"]), fmt(res["residual"]), str(res["converged"]).lower()]
        lines.append(",".join(row))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_INDETERMINATE if any_bad else EXIT_OK


# -- probe ----------------------------------------------------------------------

def cmd_probe(args, cfg, out: Path) -> int:
    from .perturb import EscapeProbe, default_direction, escape_csv, escape_test

    spec, domain = load_spec(args, cfg)
    _require_b1_and_coercive(spec, domain, cfg)
    dead = args.dead - 1
    if not 0 <= dead < spec.ell:
        raise CliError(f"--dead must lie in 1..{spec.ell}")
    if args.solution:
        try:
            u = fields_from_csv(Path(args.solution).read_text(encoding="utf-8"), domain, spec.bounds)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot use solution file: {exc}") from None
        vals = np.array(u.values)
        vals[dead] = 0.0
        u = u.replace(vals)
    else:
        rng = np.random.default_rng(args.seed)
        u0 = initial_guess(spec, domain, rng, _Profiles(domain, spec.p), 1)
        vals = np.array(u0.values)
        vals[dead] = 0.0
        u = u0.replace(vals)
    try:
        u = project_to_nehari(u, spec)
    except (ValueError, ScaleSolveError, OutsideDomainError) as exc:
        raise CliError(f"cannot place the semitrivial state on the constraint set: {exc}") from None
    if u is None:
        raise CliError("the semitrivial state lies outside the domain of the scaling map")
    if args.phi:
        try:
            phi_bf = fields_from_csv(Path(args.phi).read_text(encoding="utf-8"), domain)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot use direction file: {exc}") from None
        phi = phi_bf.values[0]
    else:
        try:
            phi = default_direction(u, spec, dead)
        except ValueError as exc:
            raise CliError(str(exc)) from None
    manifest = build_manifest(args, "probe", {**cfg, "instance_data": spec.to_dict(), "dead": args.dead,
                                              "solution": args.solution, "phi": args.phi})
    report = escape_test(EscapeProbe(dead, phi), u, spec)
    (out / "probe.csv").write_text(escape_csv(report, [manifest_comment(manifest)]), encoding="utf-8")
    write_json(out / "probe.json", {"manifest": manifest, "fit": report.to_dict(),
                                    "classification_of_state": classify_solution(u, spec),
                                    "warning": report.truncated or bool(report.warnings)})
    return EXIT_OK


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coupled-nehari", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance JSON file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON with solver options and overrides")
    common.add_argument("--plot", action="store_true", help="also write an SVG plot where applicable")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="least-energy solution by descent of the reduced functional")
    p.add_argument("--restarts", type=int)
    p.add_argument("--oracle", action="store_true", help="compare a one-component run with the shooting oracle")
    p.add_argument("--with-bound", action="store_true", help="estimate d1 and report the energy upper bound")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sync", parents=[common], help="amplitudes of synchronised solutions")
    p.add_argument("--compose", action="store_true", help="compose with a scalar profile and report residuals")
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("check", parents=[common], help="coercivity, sign rule and the fully-nontrivial condition")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", parents=[common], help="parameter sweep over one or two axes")
    p.add_argument("--axis", action="append", help="name=START:STOP:STEP or name=v1,v2 (p, betaIJ, lambdaI)")
    p.add_argument("--mode", choices=("sync", "solve"), default="sync")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("probe", parents=[common], help="energy change when switching on a dead component")
    p.add_argument("--dead", type=int, default=1, help="1-based index of the dead component")
    p.add_argument("--solution", help="solution CSV to start from (the dead component is zeroed)")
    p.add_argument("--phi", help="CSV whose first field is the direction")
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg = load_config(args.config)
        status = args.func(args, cfg, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_INVALID
    try:
        log_run(out, {"command": args.command, "config_hash": getattr(args, "config_hash", None),
                      "seed": args.seed}, status,
                time.perf_counter() - t0)
    except OSError:
        pass
    return status


if __name__ == "__main__":
    sys.exit(main())

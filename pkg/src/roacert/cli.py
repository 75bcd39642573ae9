"""Command line entry point: ``roacert {certify,search,synth,validate,bench}``.

Exit codes: 0 certified / success, 1 rejected, 2 heavy tail, 3 config or
runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .certifier import Decision, binary_search_rho, certify_level, linearization_seed
from .config import build_candidate, build_system, evt_config, load_config, psgld_config, synthesis_config
from .dynamics import HurwitzSpec, make_dense_hurwitz
from .errors import BudgetExceededError, RoaCertError
from .lyapunov import GramCandidate, LieDerivative, save_candidate
from .oracle import eigen_exact_linear, measure_kappa
from .sampler import resolve_config, write_blockmax_csv

log = logging.getLogger("roacert")

EXIT_CODES = {Decision.CERTIFIED: 0, Decision.REJECTED: 1, Decision.FAIL_HEAVY_TAIL: 2}
EXIT_ERROR = 3


def to_jsonable(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _result_doc(res) -> dict:
    doc = to_jsonable(res)
    # raw bootstrap endpoints are bulky; keep the summary only
    if doc.get("bootstrap"):
        doc["bootstrap"].pop("endpoint_samples", None)
    return doc


def _base_report(cfg: dict, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": cfg["seed"],
        "threads": cfg["threads"],
        "config": to_jsonable(cfg),
    }


def _resolved_psgld(cfg, system, candidate, rho):
    lie = LieDerivative(candidate, system)
    return to_jsonable(resolve_config(lie, rho, psgld_config(cfg)))


def _write_report(report: dict, cfg: dict) -> None:
    path = cfg["output"].get("report")
    text = json.dumps(report, indent=2, sort_keys=False)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_certify(cfg: dict) -> int:
    t0 = time.perf_counter()
    system = build_system(cfg)
    candidate, _ = build_candidate(cfg, system)
    t_build = time.perf_counter() - t0
    rho = float(cfg["certify"]["rho"])
    res = certify_level(system, candidate, rho, psgld_config(cfg), evt_config(cfg), threads=cfg["threads"])
    res.diagnostics.setdefault("phase_seconds", {})["build"] = t_build
    export = cfg["output"].get("export_blockmax")
    if export and res.block_maxima is not None:
        write_blockmax_csv(export, res.block_maxima, rho, cfg["seed"], res.diagnostics.get("config_hash", ""))
    report = _base_report(cfg, "certify")
    report["psgld_resolved"] = _resolved_psgld(cfg, system, candidate, rho)
    report["result"] = _result_doc(res)
    _write_report(report, cfg)
    log.info("rho=%g decision=%s ci_upper=%s", rho, res.decision, res.ci_upper)
    return EXIT_CODES[res.decision]


def cmd_search(cfg: dict) -> int:
    system = build_system(cfg)
    candidate, syn = build_candidate(cfg, system)
    s = cfg["search"]
    rho_low = s.get("rho_low")
    if rho_low is None:
        rho_low = linearization_seed(system, candidate, seed=cfg["seed"])
    rho_high = s.get("rho_high") or 100.0 * rho_low
    out = binary_search_rho(
        system,
        candidate,
        float(rho_low),
        float(rho_high),
        float(s.get("rel_tol", 0.02)),
        psgld_config(cfg),
        evt_config(cfg),
        threads=cfg["threads"],
        callback=lambda i, r: log.info("iter %d rho=%g %s", i, r.rho, r.decision),
    )
    report = _base_report(cfg, "search")
    report["rho_low"] = rho_low
    report["rho_high"] = rho_high
    report["rho_star"] = out.rho_star
    report["iterations"] = out.iterations
    report["trace"] = [{"rho": r, "decision": str(d), "wall_time": w} for r, d, w in out.trace]
    report["best_result"] = _result_doc(out.best_result)
    if syn is not None:
        report["synthesis"] = {"loss": syn.loss, "converged": syn.converged, "n_iter": syn.n_iter}
    if system.name == "vdp_reversed":
        k = measure_kappa(system, candidate, out.rho_star, seed=cfg["seed"])
        report["kappa"] = to_jsonable(k)
    if cfg["candidate"].get("output"):
        save_candidate(candidate, cfg["candidate"]["output"])
    _write_report(report, cfg)
    return 0


def cmd_synth(cfg: dict) -> int:
    system = build_system(cfg)
    cfg = {**cfg, "candidate": {**cfg["candidate"], "source": "synthesize"}}
    candidate, res = build_candidate(cfg, system)
    target = cfg["candidate"].get("output") or cfg["candidate"].get("path") or "candidate.json"
    save_candidate(candidate, target)
    report = _base_report(cfg, "synth")
    report["synthesis"] = {
        "config": to_jsonable(synthesis_config(cfg)),
        "loss": res.loss,
        "converged": res.converged,
        "n_iter": res.n_iter,
        "min_eigenvalue": float(np.linalg.eigvalsh(candidate.gram)[0]),
        "candidate_path": str(target),
    }
    _write_report(report, cfg)
    return 0


def cmd_validate(cfg: dict) -> int:
    from .validate import run_validation

    checks = run_validation(cfg)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    report = _base_report(cfg, "validate")
    report["checks"] = [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in checks]
    if cfg["output"].get("report"):
        Path(cfg["output"]["report"]).write_text(json.dumps(to_jsonable(report), indent=2) + "\n")
    return 0 if all(ok for _, ok, _ in checks) else 1


def run_bench(cfg: dict) -> list[dict]:
    """Dense Hurwitz certification with ``V = x^T x`` for each dimension."""
    b = cfg["bench"]
    budget = float(b.get("budget_seconds", 600.0))
    rows = []
    for n in b["dimensions"]:
        n = int(n)
        system = make_dense_hurwitz(HurwitzSpec(n, seed=int(b.get("system_seed", 0))))
        cand = GramCandidate.quadratic(np.eye(n))
        gamma = eigen_exact_linear(system.matrix, np.eye(n), 1.0).gamma_true
        row = {"N": n, "gamma_true": gamma}
        t0 = time.perf_counter()
        if budget <= 0:
            rows.append({**row, "decision": "TIMEOUT", "ci_upper": None, "wall_time": 0.0})
            continue
        try:
            # the deadline covers sampling; the EVT stage is short
            res = certify_level(
                system, cand, 1.0, psgld_config(cfg), evt_config(cfg), threads=cfg["threads"], deadline=t0 + budget
            )
        except BudgetExceededError:
            rows.append({**row, "decision": "TIMEOUT", "ci_upper": None, "wall_time": time.perf_counter() - t0})
            continue
        wall = time.perf_counter() - t0
        decision = str(res.decision) if wall <= budget else "TIMEOUT"
        rows.append({**row, "decision": decision, "ci_upper": res.ci_upper, "xi": res.gev.params.shape if res.gev else None, "wall_time": wall})
        log.info("N=%d %s ci_upper=%s %.1fs", n, decision, res.ci_upper, wall)
    return rows


def cmd_bench(cfg: dict) -> int:
    rows = run_bench(cfg)
    report = _base_report(cfg, "bench")
    report["rows"] = to_jsonable(rows)
    print(f"{'N':>5}  {'decision':<16} {'ci_upper':>14} {'gamma_true':>12} {'wall_s':>8}")
    for r in rows:
        ci = "-" if r["ci_upper"] is None else f"{r['ci_upper']:.6g}"
        print(f"{r['N']:>5}  {r['decision']:<16} {ci:>14} {r['gamma_true']:>12.6g} {r['wall_time']:>8.1f}")
    if cfg["output"].get("report"):
        Path(cfg["output"]["report"]).write_text(json.dumps(to_jsonable(report), indent=2) + "\n")
    return 0 if all(r["decision"] == "CERTIFIED" for r in rows) else 1


COMMANDS = {
    "certify": cmd_certify,
    "search": cmd_search,
    "synth": cmd_synth,
    "validate": cmd_validate,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roacert", description="Statistical region-of-attraction certification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads (default: SCORE_THREADS or 1)")
        p.add_argument("--export-blockmax", help="write block maxima as CSV")
        p.add_argument("--report", help="write the JSON report here instead of stdout")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides: dict = {"output": {}}
    if args.seed is not None:
        overrides["seed"] = args.seed
    threads = args.threads if args.threads is not None else os.environ.get("SCORE_THREADS")
    if threads is not None:
        overrides["threads"] = threads
    if args.export_blockmax:
        overrides["output"]["export_blockmax"] = args.export_blockmax
    if args.report:
        overrides["output"]["report"] = args.report
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (RoaCertError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

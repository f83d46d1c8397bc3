"""Batch front end: ``uniexp <command> --config <file> [--set key=value ...]``.

Exit status: 0 on success, 2 when ``expect=`` is set and the verdict differs,
1 on any error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, reports
from .config import ConfigError, ExperimentConfig, parse_config
from .expansion import BundleGrid, find_minimal_N, scan_N
from .measures import parse_measure
from .seeding import derive_seed
from .spectrum import (defect_ladder, invariant_structure_defect, nonrandom_stable_test,
                       stable_direction, top_lyapunov)
from .torus import projective_distance
from .walk import finite_orbit_detect, run_orbit, smoothing_check, weyl_report

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2


@dataclass
class RunResult:
    """What a command produced: the JSON payload, its verdict and any extra files."""

    verdict: str
    expect_key: str | None
    payload: dict
    files: dict[str, str] = field(default_factory=dict)  # suffix -> text, grouped by format below
    exit_code: int = EXIT_OK


def _pmap(fn, items, workers: int):
    """Ordered map; results never depend on the pool size."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _grid(cfg: ExperimentConfig) -> BundleGrid:
    return BundleGrid(cfg["nx"], cfg["ny"], cfg["ntheta"])


def _expansion_kw(cfg: ExperimentConfig) -> dict:
    return dict(certify=cfg["certify"], rng_seed=cfg.master_seed, budget=cfg["budget"],
                samples=cfg["samples"], workers=cfg.workers, refine=cfg["refine"])


def _expansion_files(trace) -> dict:
    last = min(trace, key=lambda r: r.min_value)
    return {"csv": {"grid.csv": reports.grid_csv(last), "trace.csv": reports.trace_csv(trace)},
            "svg": {"heatmap.svg": reports.heatmap_svg(last.point_minima, f"min over theta of E_{last.N}")}}


def cmd_verify(cfg, measure):
    res = find_minimal_N(measure, _grid(cfg), C=cfg["C"], N_max=cfg["N_max"], mode=cfg["mode"],
                         **_expansion_kw(cfg))
    verdict = f"Found({res.n_star})" if res.found else "NotFound"
    return RunResult(verdict, "found" if res.found else "notfound", res.to_dict(), _expansion_files(res.trace))


def cmd_scan_n(cfg, measure):
    trace = scan_N(measure, _grid(cfg), range(1, cfg["N_max"] + 1), threshold=cfg["C"], mode=cfg["mode"],
                   **_expansion_kw(cfg))
    passing = [r.N for r in trace if r.passes]
    n_star = passing[0] if passing else None
    verdict = f"Found({n_star})" if passing else "NotFound"
    payload = {"found": bool(passing), "N_star": n_star, "N_max": cfg["N_max"], "threshold": cfg["C"],
               "passing": passing, "trace": [r.to_dict() for r in trace]}
    return RunResult(verdict, "found" if passing else "notfound", payload, _expansion_files(trace))


def cmd_lyapunov(cfg, measure):
    def one(i):
        return top_lyapunov(measure, cfg["x0"], cfg["theta0"], cfg["n_steps"], cfg["n_batches"],
                            derive_seed(cfg.master_seed, i))

    ests = _pmap(one, range(cfg["replicas"]), cfg.workers)
    lam = math.fsum(e.lambda1 for e in ests) / len(ests)
    half = max(e.ci_halfwidth for e in ests)
    expanding = lam - half > 0
    payload = {"lambda1": lam, "lambda2": -lam, "ci_halfwidth": half, "replicas": [e.to_dict() for e in ests]}
    rows = [[i, e.lambda1, e.ci_halfwidth] for i, e in enumerate(ests)]
    return RunResult("Expanding" if expanding else "NonExpanding", "expanding" if expanding else "nonexpanding",
                     payload, {"csv": {"replicas.csv": reports.rows_csv(["replica", "lambda1", "ci_halfwidth"],
                                                                        rows)}})


def _direction_rows(samples):
    return reports.rows_csv(["omega", "omega_seed", "direction", "gap"],
                            [[i, s.omega_seed, s.direction, s.gap] for i, s in enumerate(samples)])


def cmd_stable(cfg, measure):
    def one(i):
        return stable_direction(measure, cfg["x0"], cfg["n"], derive_seed(cfg.master_seed, i))

    samples = _pmap(one, range(cfg["n_omegas"]), cfg.workers)
    dirs = np.array([s.direction for s in samples])
    dispersion = float(projective_distance(dirs[:, None], dirs[None, :]).max())
    payload = {"dispersion": dispersion, "samples": [s.to_dict() for s in samples]}
    return RunResult("Done", None, payload, {"csv": {"directions.csv": _direction_rows(samples)}})


def cmd_nonrandom(cfg, measure):
    rep = nonrandom_stable_test(measure, cfg["x0"], cfg["n"], cfg["n_omegas"], cfg["tolerance"], cfg.master_seed)
    payload = rep.to_dict() | {"samples": [s.to_dict() for s in rep.samples]}
    return RunResult(rep.verdict, "nonrandom" if rep.nonrandom else "random", payload,
                     {"csv": {"directions.csv": _direction_rows(rep.samples)}})


def cmd_defect(cfg, measure):
    kw = dict(test_points_m=cfg["points"], rng_seed=cfg.master_seed, n_starts=cfg["starts"],
              maxiter=cfg["maxiter"])
    if cfg["degree"] == 0:
        ladder = [invariant_structure_defect(measure, cfg["kind"], 0, **kw)]
    else:
        ladder = defect_ladder(measure, cfg["kind"], cfg["degree"], **kw)
    best = ladder[-1]
    payload = best.to_dict() | {"ladder": [r.to_dict() for r in ladder]}
    rows = [[r.family_degree, r.defect, int(r.is_zero)] for r in ladder]
    verdict = "Zero" if best.is_zero else "Positive"
    return RunResult(verdict, "zero" if best.is_zero else "positive", payload,
                     {"csv": {"ladder.csv": reports.rows_csv(["degree", "defect", "is_zero"], rows)}})


def cmd_orbit(cfg, measure):
    trace = run_orbit(measure, cfg["x0"], cfg["n"], cfg.master_seed)
    fin = finite_orbit_detect(trace, cfg["tol"])
    weyl = weyl_report(trace, cfg["F"])
    payload = {"finite": fin.to_dict(), "equidistribution": weyl.to_dict(), "n": trace.n,
               "seed": trace.seed, "last_point": [float(v) for v in trace.points[-1]]}
    return RunResult(fin.verdict, "finite" if fin.finite else "infinite", payload,
                     {"csv": {"orbit.csv": trace.to_csv()}})


def cmd_equidist(cfg, measure):
    def one(i):
        seed = derive_seed(cfg.master_seed, i)
        return seed, weyl_report(run_orbit(measure, cfg["x0"], cfg["n"], seed), cfg["F"])

    results = _pmap(one, range(cfg["seeds"]), cfg.workers)
    passed = sum(r.equidistributing for _, r in results)
    frac = passed / len(results)
    ok = frac >= cfg["pass_fraction"]
    payload = {"passed": passed, "seeds": len(results), "pass_fraction": frac,
               "required_fraction": cfg["pass_fraction"],
               "runs": [{"seed": s} | r.to_dict() for s, r in results]}
    rows = [[i, s, r.max_weyl, r.threshold, r.verdict] for i, (s, r) in enumerate(results)]
    return RunResult("Equidistributing" if ok else "Suspicious", "equidistributing" if ok else "suspicious",
                     payload, {"csv": {"equidist.csv": reports.rows_csv(
                         ["run", "seed", "max_weyl", "threshold", "verdict"], rows)}})


def cmd_smoothing(cfg, measure):
    rep = smoothing_check(measure, cfg["v"], cfg["samples"], cfg["g"], cfg.master_seed)
    density = rep.histogram * (rep.grid ** 2 / cfg["samples"])
    return RunResult("Pass" if rep.passes else "Fail", "pass" if rep.passes else "fail", rep.to_dict(),
                     {"csv": {"grid.csv": reports.matrix_csv(density)},
                      "svg": {"heatmap.svg": reports.heatmap_svg(density, "two-step density")}})


COMMAND_TABLE = {
    "verify": cmd_verify, "scan-n": cmd_scan_n, "lyapunov": cmd_lyapunov, "stable": cmd_stable,
    "nonrandom": cmd_nonrandom, "defect": cmd_defect, "orbit": cmd_orbit, "equidist": cmd_equidist,
    "smoothing": cmd_smoothing,
}


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def build_report(cfg: ExperimentConfig, result: RunResult) -> dict:
    """JSON document; ``workers`` and ``output`` are left out so reports match across runs."""
    return {
        "artifact": "uniexp",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.resolved(portable=True),
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "verdict": result.verdict,
        "expect": cfg.expect,
        "expect_met": None if cfg.expect is None else result.expect_key == cfg.expect,
        "result": result.payload,
    }


def execute(cfg: ExperimentConfig) -> RunResult:
    """Run the command in memory without writing files."""
    measure = parse_measure(cfg.measure)
    result = COMMAND_TABLE[cfg.command](cfg, measure)
    if cfg.expect is not None and result.expect_key != cfg.expect:
        result.exit_code = EXIT_MISMATCH
    return result


def write_outputs(cfg: ExperimentConfig, result: RunResult) -> list[Path]:
    prefix = Path(cfg.output)
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in cfg.formats:
        path = Path(f"{prefix}.report.json")
        path.write_text(reports.to_json(build_report(cfg, result)), encoding="utf-8")
        written.append(path)
    for fmt in ("csv", "svg"):
        if fmt in cfg.formats:
            for suffix, text in result.files.get(fmt, {}).items():
                path = Path(f"{prefix}.{suffix}")
                path.write_text(text, encoding="utf-8")
                written.append(path)
    return written


def run(cfg: ExperimentConfig) -> int:
    """Execute and write reports; returns the process exit status."""
    try:
        result = execute(cfg)
        write_outputs(cfg, result)
    except (ConfigError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"uniexp: error [{_error_code(exc)}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    line = f"{cfg.command}: {result.verdict}"
    if cfg.expect is not None:
        line += f" (expect {cfg.expect}: {'ok' if result.exit_code == EXIT_OK else 'MISMATCH'})"
    print(line)
    return result.exit_code


def _error_code(exc: BaseException) -> str:
    mod = type(exc).__module__.rsplit(".", 1)[-1]
    return f"{mod}.{type(exc).__name__}"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="uniexp", description="Uniform-expansion experiments on the 2-torus.")
    parser.add_argument("command", help="one of verify, scan-n, lyapunov, stable, nonrandom, defect, orbit, "
                                        "equidist, smoothing")
    parser.add_argument("--config", required=True, help="key=value config file ('-' for stdin)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--version", action="version", version=f"uniexp {__version__}")
    args = parser.parse_args(argv)

    try:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text(encoding="utf-8")
        overrides = [f"command={args.command}", *args.set]
        if os.environ.get("UNIEXP_WORKERS"):
            overrides.append(f"workers={os.environ['UNIEXP_WORKERS']}")
        # the positional command wins over a command= line in the file
        cfg = parse_config(_drop_command(text), overrides)
    except (ConfigError, OSError) as exc:
        print(f"uniexp: error [{_error_code(exc)}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return run(cfg)


def _drop_command(text: str) -> str:
    # blank out (rather than delete) so reported line numbers stay right
    return "\n".join("" if ln.split("#", 1)[0].strip().replace(" ", "").startswith("command=") else ln
                     for ln in text.splitlines())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Batch command-line surface: pressure tables, solvers, verification suites.

Exit codes: 0 success, 2 enumeration/dense cap exceeded, 3 invalid model,
4 bad input (range or suite), 5 optimizer failure.  Output files are
written atomically (temp + rename); JSON payloads carry a schema_version
and keep their timestamp in a separate "meta" object so that the payload
itself is byte-identical across reruns with the same configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from typing import List, Optional

import numpy as np

from . import evp as evp_mod
from . import exact, gdfp
from .duality import saddle_audit
from .evp import AtomicMetaMeasure, cavity_values, evp_objective, solve_evp
from .exact import PressureTable, extrapolate_pressure, pressure
from .interaction import classify_shape
from .models import ModelError, ModelSpec, build, builtin
from .simplex import OptimizerError
from .state_space import (
    CapExceededError,
    DenseProductMeasure,
    DiscreteMeasure,
    relative_entropy,
    relative_entropy_dense,
)

SCHEMA_VERSION = 1
SUITES = ("additivity", "bounds", "entropy", "cavity", "duality", "all")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CAP = 2
EXIT_MODEL = 3
EXIT_USAGE = 4
EXIT_OPTIMIZER = 5


class UsageError(ValueError):
    pass


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mfspin-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit_json(payload: dict, out: Optional[str]) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **payload,
           "meta": {"created_at": datetime.now(timezone.utc).isoformat()}}
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _emit_csv(text: str, out: Optional[str]) -> None:
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _parse_range(text: str) -> List[int]:
    try:
        lo_s, hi_s = text.split("..")
        lo, hi = int(lo_s), int(hi_s)
    except ValueError as exc:
        raise UsageError(f"range '{text}' is not of the form A..B") from exc
    if hi < lo:
        raise UsageError(f"range '{text}' is empty")
    return list(range(lo, hi + 1))


def _load_model(source: str):
    if source.startswith("builtin:"):
        spec = builtin(source[len("builtin:"):])
    elif source.startswith("file:"):
        spec = ModelSpec.from_file(source[len("file:"):])
    else:
        spec = ModelSpec.from_file(source)
    space, phi = build(spec)
    return spec, space, phi


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------
def cmd_pressure(args) -> int:
    spec, _, phi = _load_model(args.model)
    Ns = _parse_range(args.n)
    table = PressureTable.compute(phi, Ns, model=spec.name, cap=args.occupancy_cap)
    if args.format == "csv":
        _emit_csv(table.to_csv_text(), args.out)
    else:
        _emit_json({"pressure_table": table.to_json_dict()}, args.out)
    return EXIT_OK if all(r.bound_ok for r in table.rows) else EXIT_CHECK_FAILED


def _extrapolation_ladder(phi) -> List[int]:
    """Powers of two from 64 (or the body count) up, sized to stay cheap."""
    m = phi.space.m
    Ns = []
    N = max(64, phi.n)
    while N <= 4096 and exact.occupancy_count(N, m) <= 200_000:
        Ns.append(N)
        N *= 2
    while len(Ns) < 4:
        lead = Ns[0] if Ns else max(8, phi.n * 2)
        if lead // 2 < phi.n:
            break
        Ns.insert(0, lead // 2)
    return Ns


def cmd_solve(args) -> int:
    spec, space, phi = _load_model(args.model)
    payload: dict = {"model": spec.name, "principle": args.principle}
    disagreement = 0.0

    evp_value = gdfp_value = None
    if args.principle in ("evp", "both"):
        if args.cap is not None:
            capped = evp_mod.minimize_evp_capped(
                phi, args.cap, tol=args.tol_opt, seed=args.seed)
            payload["evp"] = capped.to_json_dict()
            evp_value = capped.value
        else:
            sol = solve_evp(phi, restarts=args.restarts, seed=args.seed,
                            tol=args.tol_opt)
            payload["evp"] = sol.to_json_dict()
            evp_value = sol.value
    if args.principle in ("gdfp", "both"):
        sol = gdfp.solve_gdfp(phi, damping=args.damping, restarts=args.restarts,
                              seed=args.seed)
        payload["gdfp"] = sol.to_json_dict()
        gdfp_value = sol.value

    if args.principle == "both":
        ladder = _extrapolation_ladder(phi)
        table = PressureTable.compute(phi, ladder, model=spec.name,
                                      cap=args.occupancy_cap)
        extra = extrapolate_pressure(table)
        values = [evp_value, gdfp_value, extra.value]
        disagreement = max(abs(a - b) for a in values for b in values)
        payload["cross_check"] = {
            "evp_value": evp_value,
            "gdfp_value": gdfp_value,
            "extrapolated_p": extra.value,
            "extrapolation_residual": extra.residual,
            "extrapolation_Ns": ladder,
            "max_abs_disagreement": disagreement,
            "tolerance": args.tol,
        }
    _emit_json(payload, args.out)
    if args.principle == "both" and disagreement > args.tol:
        return EXIT_CHECK_FAILED
    return EXIT_OK


# ----------------------------------------------------------------------
# verification suites
# ----------------------------------------------------------------------
def _suite_additivity(space, phi, args) -> List[dict]:
    Nmax = min(max(_parse_range(args.n)), 12)
    report = exact.verify_finite_n(max(Nmax, phi.n + 1), phi, cap=args.occupancy_cap)
    wanted = ("evp_pressure_additivity", "pressure_subadditivity")
    return [c.to_json_dict() for c in report.checks if c.name in wanted]


def _suite_bounds(space, phi, args) -> List[dict]:
    Nmax = min(max(_parse_range(args.n)), 12)
    report = exact.verify_finite_n(max(Nmax, phi.n + 1), phi, cap=args.occupancy_cap)
    wanted = ("pressure_lower_bound", "pressure_comparison_bound")
    return [c.to_json_dict() for c in report.checks if c.name in wanted]


def _suite_entropy(space, phi, args) -> List[dict]:
    rng = np.random.default_rng(args.seed)
    m = space.m
    checks = []

    def random_dense(N):
        return DenseProductMeasure(space, N, rng.dirichlet(np.ones(m ** N)))

    ok, worst = True, -math.inf
    for _ in range(20):
        mu = DiscreteMeasure(space, rng.dirichlet(np.ones(m)))
        s = relative_entropy(mu)
        worst = max(worst, s)
        ok &= s <= 1e-12
    checks.append({"name": "entropy_nonpositive", "passed": ok,
                   "detail": f"max entropy {worst:.3e}"})

    ok = True
    for _ in range(10):
        m1 = DiscreteMeasure(space, rng.dirichlet(np.ones(m)))
        m2 = DiscreteMeasure(space, rng.dirichlet(np.ones(m)))
        gap = relative_entropy(m1.mix(m2, 0.5)) - 0.5 * (
            relative_entropy(m1) + relative_entropy(m2))
        ok &= gap > 0.0
    checks.append({"name": "entropy_strictly_concave", "passed": ok, "detail": ""})

    def psi(t):
        return 0.0 if t == 0.0 else -t * math.log(t)

    ok = True
    for N in (1, 2):
        for _ in range(6):
            r1, r2 = random_dense(N), random_dense(N)
            theta = float(rng.uniform(0.1, 0.9))
            mix = DenseProductMeasure(
                space, N, theta * r1.weights + (1.0 - theta) * r2.weights)
            lhs = relative_entropy_dense(mix)
            rhs = (theta * relative_entropy_dense(r1)
                   + (1.0 - theta) * relative_entropy_dense(r2)
                   + psi(theta) + psi(1.0 - theta))
            ok &= lhs <= rhs + 1e-12
    checks.append({"name": "entropy_almost_convex", "passed": ok, "detail": ""})

    ok = True
    for _ in range(6):
        rho = random_dense(3)
        lhs = relative_entropy_dense(rho) + relative_entropy_dense(rho.marginal({1}))
        rhs = (relative_entropy_dense(rho.marginal({0, 1}))
               + relative_entropy_dense(rho.marginal({1, 2})))
        ok &= lhs <= rhs + 1e-12
    checks.append({"name": "entropy_strongly_subadditive", "passed": ok, "detail": ""})

    ok = True
    for _ in range(6):
        rho = random_dense(3).symmetrized()
        s1 = relative_entropy_dense(rho.marginal({0}))
        s2 = relative_entropy_dense(rho.marginal({0, 1})) / 2.0
        s3 = relative_entropy_dense(rho) / 3.0
        ok &= s1 >= s2 - 1e-12 and s2 >= s3 - 1e-12
    checks.append({"name": "entropy_density_monotone", "passed": ok, "detail": ""})

    ok = True
    detail = ""
    for N in range(phi.n, 4):
        rho = exact.gibbs_measure(N, phi)
        diff = abs(exact.gibbs_function(rho, phi) - pressure(N, phi, "standard"))
        detail = f"N={N}: |G_N(gibbs) - p(N)| = {diff:.3e}"
        ok &= diff <= 1e-10
    checks.append({"name": "gibbs_identity", "passed": ok, "detail": detail})
    return checks


def _suite_cavity(space, phi, args) -> List[dict]:
    rng = np.random.default_rng(args.seed)
    m = space.m
    shape = classify_shape(phi)
    checks = []

    probes = [DiscreteMeasure.a_priori(space)]
    probes += [DiscreteMeasure(space, rng.dirichlet(np.ones(m))) for _ in range(5)]
    worst = 0.0
    for nu in probes:
        want = evp_objective(nu, phi)
        for N in (1, 2, 4, 8, 16):
            got = cavity_values(AtomicMetaMeasure.dirac(nu), N, phi).total
            worst = max(worst, abs(got - want))
    checks.append({"name": "cavity_dirac_collapse", "passed": worst <= 1e-10,
                   "detail": f"max deviation {worst:.3e}"})

    rho = AtomicMetaMeasure(
        [(float(w), DiscreteMeasure(space, rng.dirichlet(np.ones(m))))
         for w in rng.uniform(0.2, 2.0, size=3)])
    base = cavity_values(rho, 3, phi).total
    worst = max(abs(cavity_values(rho.scaled(t), 3, phi).total - base)
                for t in (0.1, 3.0, 100.0))
    checks.append({"name": "cavity_degree0_homogeneity", "passed": worst <= 1e-12,
                   "detail": f"max deviation {worst:.3e}"})

    if shape.kind != "neither":
        ok, worst = True, math.inf
        for N in range(1, 5):
            p_t = pressure(N, phi, "evp", cap=args.occupancy_cap)
            for _ in range(25):
                k = int(rng.integers(1, 4))
                rho = AtomicMetaMeasure(
                    [(float(w), DiscreteMeasure(space, rng.dirichlet(np.ones(m))))
                     for w in rng.uniform(0.2, 2.0, size=k)])
                val = cavity_values(rho, N, phi).total
                margin = (val - p_t) if shape.is_convex else (p_t - val)
                worst = min(worst, margin)
                ok &= margin >= -1e-9
        checks.append({"name": "cavity_evp_inequality", "passed": ok,
                       "detail": f"worst margin {worst:.3e}"})
    else:
        checks.append({"name": "cavity_evp_inequality", "passed": True,
                       "detail": "skipped: energy functional neither convex nor concave"})

    if shape.kind == "concave":
        sol = solve_evp(phi, seed=args.seed)
        if len(sol.optimal_set) >= 2:
            nu1, nu2 = sol.optimal_set[0], sol.optimal_set[1]
            worst = 0.0
            for w in (0.25, 0.5, 0.75):
                rho = AtomicMetaMeasure([(w, nu1), (1.0 - w, nu2)])
                for N in (1, 4, 16):
                    worst = max(worst,
                                abs(cavity_values(rho, N, phi).total - sol.value))
            checks.append({"name": "cavity_optimizer_mixtures", "passed": worst <= 1e-8,
                           "detail": f"max deviation {worst:.3e}"})
    return checks


def _suite_duality(space, phi, args) -> List[dict]:
    cap = 10.0 if args.cap is None else args.cap
    audit = saddle_audit(phi, cap, seed=args.seed)
    return [{
        "name": "saddle_gap",
        "passed": audit.passed,
        "detail": (f"maxmin={audit.maxmin:.12g}, minmax={audit.minmax:.12g}, "
                   f"gap={audit.gap:.3e}"),
    }]


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite '{args.suite}'")
    spec, space, phi = _load_model(args.model)
    suites = {
        "additivity": _suite_additivity,
        "bounds": _suite_bounds,
        "entropy": _suite_entropy,
        "cavity": _suite_cavity,
        "duality": _suite_duality,
    }
    names = list(suites) if args.suite == "all" else [args.suite]
    results = {}
    for name in names:
        results[name] = suites[name](space, phi, args)
    all_passed = all(c["passed"] for checks in results.values() for c in checks)
    _emit_json({"model": spec.name, "suites": results, "all_passed": all_passed},
               args.out)
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfspin",
        description="Mean-field spin pressures: exact enumeration, EVP, GdFP.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True,
                       help="'builtin:<id>' or a model JSON file path ('file:' optional)")
        p.add_argument("--n", default="1..8", help="body-count range A..B")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--tol", type=float, default=5e-2,
                       help="cross-check disagreement tolerance")
        p.add_argument("--tol-opt", type=float, default=1e-11,
                       help="optimizer stationarity tolerance")
        p.add_argument("--restarts", type=int, default=8)
        p.add_argument("--damping", type=float, default=0.5)
        p.add_argument("--cap", type=float, default=None,
                       help="density-cap exponent C for capped optimizations")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--occupancy-cap", type=int, default=None,
                       help="override the occupancy enumeration cap")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p_pressure = sub.add_parser("pressure", help="exact pressure table over an N range")
    common(p_pressure)
    p_pressure.set_defaults(func=cmd_pressure)

    p_solve = sub.add_parser("solve", help="variational solvers")
    common(p_solve)
    p_solve.add_argument("--principle", choices=("evp", "gdfp", "both"),
                         default="both")
    p_solve.set_defaults(func=cmd_solve, format="json")

    p_verify = sub.add_parser("verify", help="invariant suites")
    common(p_verify)
    p_verify.add_argument("--suite", default="all",
                          help="|".join(SUITES))
    p_verify.set_defaults(func=cmd_verify, format="json")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OptimizerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER


if __name__ == "__main__":
    sys.exit(main())

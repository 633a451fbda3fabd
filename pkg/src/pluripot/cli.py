"""Command line runner: one subcommand per module, deterministic report files.

Every run directory receives ``report.json`` (sorted keys, 12 significant
digits, config hash, statement tag), ``table.csv`` and ``plot.gp``.  Exit code
0 means every check passed, 1 lists failing checks, 2 is a usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bounds, densities, families, green, psh, skoda, solver
from .geometry import build_torus, euclidean_form, fubini_study_atlas

SUBCOMMANDS = ("bounds", "solve", "capacity", "skoda", "density", "green", "family")

DEFAULTS = {
    "run": {"seed": "0", "output": "runs", "workers": str(os.cpu_count() or 1)},
    "bounds": {"n": "1", "p": "2", "C": "1", "alpha": "1", "A": "1", "mode": "Lp", "eps": "1"},
    "solve": {"preset": "flat-trivial", "n": "1", "resolution": "", "tol": "1e-10"},
    "capacity": {"resolution": "32", "radii": "0.05,0.1,0.2,0.3,0.4", "levels": "0.05,0.1"},
    "skoda": {"mode": "projective", "resolution": "24", "count": "30", "samples": "100",
              "deltas": "0.25,0.5,0.75", "ladder": "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6"},
    "density": {"kind": "wt", "p": "1", "a_list": "-1", "m": "1", "eps": "1", "t": "1e-6", "dA": "0.5",
                "ladder": "1e-2,1e-4,1e-6,1e-8,1e-10,1e-12"},
    "green": {"n": "1", "resolution": "32", "count": "12"},
    "family": {"kind": "general-type", "ladder": "", "resolution": "", "p": "2", "eps": "1"},
}

FAMILY_LADDERS = {
    "general-type": "0.5,0.25,0.125",
    "cusp": "",
    "stable": "1e-1,1e-2,1e-3",
    "calabi-yau": "0.5,0.25,0.125,0.0625",
    "non-collapsing": "0.4,0.2,0.1,0.05",
    "collapsing": "0.2,0.05,0.0125,0.003125",
}


MANUFACTURED_MODES = {
    1: [solver.TrigMode(0.01, (1, 0)), solver.TrigMode(0.005, (1, 1), 0.3), solver.TrigMode(0.003, (0, 2), 1.0)],
    2: [solver.TrigMode(0.01, (1, 0, 0, 0)), solver.TrigMode(0.008, (0, 1, 1, 0), 0.3),
        solver.TrigMode(0.006, (0, 0, 0, 1), 1.0), solver.TrigMode(0.005, (1, 0, 0, 1), 0.7)],
}


class UsageError(Exception):
    pass


@dataclass
class RunResult:
    statement: str
    report: dict
    checks: dict
    table: list = field(default_factory=list)
    plot: tuple | None = None  # (x column, y columns, log axes)


# ---------------------------------------------------------------- formatting

def _round(obj):
    """Recursively round floats to 12 significant digits for printing."""
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.12g}")
    if isinstance(obj, complex):
        return [_round(obj.real), _round(obj.imag)]
    return obj


def _floats(s) -> list:
    return [float(Fraction(x.strip())) if "/" in x else float(x) for x in str(s).split(",") if x.strip()]


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def write_outputs(out: Path, sub: str, cfg: dict, res: RunResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    failed = sorted(k for k, v in res.checks.items() if not v)
    doc = {"subcommand": sub, "config": cfg, "config_sha256": config_hash(cfg),
           "statement": res.statement, "checks": res.checks, "passed": not failed,
           "failed": failed, "results": res.report}
    (out / "report.json").write_text(json.dumps(_round(doc), sort_keys=True, indent=1) + "\n")
    rows = _round(res.table)
    cols = sorted({k for r in rows for k in r})
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    lines = ["set datafile separator ','", "set key autotitle columnhead", f"set title '{sub}'"]
    if res.plot and cols:
        x, ys, logs = res.plot
        if logs:
            lines.append(f"set logscale {logs}")
        xi = cols.index(x) + 1
        lines.append("plot " + ", ".join(f"'table.csv' using {xi}:{cols.index(y) + 1} with linespoints"
                                         for y in ys if y in cols))
    (out / "plot.gp").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- runners

def run_bounds(c, seed, workers) -> RunResult:
    mode = c["mode"]
    H = bounds.HypothesisData(int(c["n"]), float(c["alpha"]), float(c["A"]), float(c["C"]),
                              float(c["p"]) if mode != "orlicz" else None,
                              float(c["eps"]) if mode == "orlicz" else None, mode)
    cert = bounds.certificate(H)
    checks = {"M_finite": math.isfinite(cert.M), "M_at_least_s0": cert.M >= cert.s_0}
    if mode in ("Lp", "big"):
        Me = bounds.kolodziej_M_expanded(H.n, H.p, H.C, H.alpha, H.A)
        checks["expanded_formula"] = abs(Me - cert.M) <= 1e-9 * max(1.0, abs(Me))
    row = {"n": H.n, "M": cert.M, "D": cert.D, "s_0": cert.s_0, "b_n": cert.b_n}
    return RunResult("uniform a priori lower bound for normalized potentials", cert.to_dict(), checks, [row])


def run_solve(c, seed, workers) -> RunResult:
    n, tol = int(c["n"]), float(c["tol"])
    N = int(c["resolution"]) if c["resolution"] else (64 if n == 1 else 24)
    form = euclidean_form(build_torus(n, resolution=N))
    preset = c["preset"]
    if preset == "flat-trivial":
        sol = solver.solve_ma(solver.make_problem(form, lam=0, tol=tol))
        err = float(np.max(np.abs(sol.values)))
        checks = {"phi_zero": err <= 1e-8, "residual": sol.residual <= max(tol, 1e-9)}
        rep = {"sup_abs_phi": err, "residual": sol.residual, "steps": sol.steps}
        return RunResult("trivial density gives the zero potential", rep, checks, [rep])
    if preset == "manufactured":
        modes = MANUFACTURED_MODES[n]
        rows = []
        for res in (N // 2, N):
            fm = euclidean_form(build_torus(n, resolution=res))
            prob, exact = solver.manufactured_problem(fm, modes, lam=1, tol=tol)
            sol = solver.solve_ma(prob)
            rows.append({"resolution": res, "error": solver.manufactured_error(sol, exact, 1),
                         "residual": sol.residual, "steps": sol.steps})
        ratio = rows[0]["error"] / rows[1]["error"]
        checks = {"second_order": 3.5 <= ratio <= 4.5, "residual": rows[-1]["residual"] <= max(tol, 1e-9)}
        return RunResult("second-order recovery of a manufactured solution",
                         {"rows": rows, "ratio": ratio}, checks, rows, ("resolution", ["error"], "xy"))
    raise UsageError(f"unknown preset {preset!r}")


def _disk(M, center, radius):
    x = M.coords()
    d2 = sum(((x[a] - center[a] + 0.5) % 1.0 - 0.5) ** 2 for a in range(M.real_dim))
    return d2 <= radius * radius


def run_capacity(c, seed, workers) -> RunResult:
    N = int(c["resolution"])
    form = euclidean_form(build_torus(1, resolution=N))
    M = form.manifold
    full = psh.capacities(np.ones(M.shape, bool), form)
    checks = {"cap_full_one": full.cap == 1.0, "t_full_one": full.t_cap == 1.0}
    rows = [full.to_record("X")]
    ok_cap = True
    for r in _floats(c["radii"]):
        rep = psh.capacities(_disk(M, (0.5, 0.5), r), form)
        rows.append(rep.to_record(f"disk{r:g}"))
        ok_cap &= psh.capacity_comparison_holds(rep)
    checks["capacity_vs_extremal"] = bool(ok_cap)
    rng = np.random.default_rng(seed)
    phi = psh.make_function(form, psh.random_psh(form, rng), normalization="sup-zero")
    okma, ma_rows = True, []
    span = float(-phi.values.min())
    for frac in (0.25, 0.5):
        for d in _floats(c["levels"]):
            r = psh.capma_check(phi, frac * span, d)
            ma_rows.append(r)
            okma &= r["holds"]
    checks["capacity_vs_mass"] = bool(okma)
    return RunResult("capacity comparison inequalities", {"sets": rows, "sublevels": ma_rows}, checks, rows)


def run_skoda(c, seed, workers) -> RunResult:
    mode = c["mode"]
    if mode == "projective":
        _, form = fubini_study_atlas(1, int(c["resolution"]))
        reps = [skoda.projective_skoda_check(psi) for psi in skoda.skoda_dictionary(form, int(c["count"]), seed)]
        rows = [r.to_dict() for r in reps]
        return RunResult("uniform integrability on projective space", {"members": rows},
                         {"all_hold": all(r.holds for r in reps)}, rows)
    if mode == "kernels":
        rng = np.random.default_rng(seed)
        rows, ok = [], True
        for d in _floats(c["deltas"]):
            for _ in range(int(c["samples"])):
                x = rng.normal(size=2) + 1j * rng.normal(size=2)
                y = rng.normal(size=2) + 1j * rng.normal(size=2)
                r = skoda.kernel_inequality_check(x, y, d)
                ok &= r.holds
                rows.append({"delta": d, "G": r.G, "lam": r.lam, "mu": r.mu, "holds": r.holds})
        betas = (0.25, 0.5, 0.75)
        ph = all(skoda.power_hessian_bound_holds(b, rng.normal(size=2) + 1j * rng.normal(size=2))
                 for b in betas for _ in range(20))
        return RunResult("pointwise kernel inequalities", {"samples": len(rows)},
                         {"kernel_pointwise": bool(ok), "power_hessian": bool(ph)}, rows)
    ts = _floats(c["ladder"])
    if mode == "conic":
        fit = skoda.conic_counterexample(ts)
        sups = [skoda.conic_sup(t)[0] for t in ts]
        checks = {"slope": abs(fit.slope - 0.5) <= 0.1, "sup_zero": max(abs(s) for s in sups) <= 1e-8}
        rep = {"slope": fit.slope, "intercept": fit.intercept, "sups": sups,
               "refinement_change": fit.refinement_change}
        return RunResult("degenerating conic family without uniform integral bound", rep, checks, fit.rows(),
                         ("t", ["integral"], "x"))
    if mode == "gap":
        gt = skoda.sup_mean_gap(skoda.conic_family(ts))
        rep = {"max_gap": gt.max_gap, "slope": gt.slope, "bounded": gt.bounded}
        return RunResult("sup and mean gap along the conic family", rep, {"gap_unbounded": not gt.bounded},
                         gt.rows(), ("t", ["gap"], "x"))
    raise UsageError(f"unknown skoda mode {mode!r}")


def run_density(c, seed, workers) -> RunResult:
    kind = c["kind"]
    model = densities.model_from_config(c)
    eps = float(c["eps"])
    ts = _floats(c["ladder"])
    if kind == "wt":
        t = float(c["t"])
        val, bnd = densities.wt_integral(model, eps, 0.25, t)
        checks = {"within_box_bound": val <= bnd * (1 + 1e-12)}
        rep = {"value": val, "bound": bnd, "t": t}
        if model.p == 1 and model.s == 1:
            exact = densities.wt_closed_form_p1(eps, -math.log(t))
            rep["closed_form"] = exact
            checks["closed_form"] = abs(val - exact) <= 1e-9
        return RunResult("weighted integral over the region where the section is large", rep, checks, [rep])
    if kind == "canonical":
        cert = densities.canonical_integrability(model, float(c["dA"]), ts)
        checks = {"uniformly_bounded": cert.verdict == "uniformly bounded",
                  "closed_form": cert.extras["max_rel_error"] <= 1e-6}
    elif kind == "h2prime":
        cert = densities.h2prime_certificate(model, eps, ts)
        checks = {"uniformly_bounded": cert.verdict == "uniformly bounded"}
    else:
        raise UsageError(f"unknown density kind {kind!r}")
    return RunResult("uniform integrability of fiberwise densities", cert.to_dict(), checks, cert.rows(),
                     ("t", ["value"], "x"))


def run_green(c, seed, workers) -> RunResult:
    n, N = int(c["n"]), int(c["resolution"])
    form = euclidean_form(build_torus(n, resolution=N))
    G = green.torus_green((0,) * (2 * n), form)
    res = green.green_residual(G)
    heat = green.heat_trace_check(form, seed=seed)
    r = np.array([[0.1] * (2 * n), [0.3] + [0.2] * (2 * n - 1)]).T
    semi = green.semigroup_residual(form, r, 0.05, 0.02)
    ok_mv, slack = True, math.inf
    for v in green.psh_dictionary(form, int(c["count"]), seed):
        mv = green.mean_value_inequality(psh.make_function(form, v), G)
        ok_mv &= mv.holds
        slack = min(slack, mv.min_slack)
    rep = {"inf_G": G.inf_G, "inf_G_continuum": G.inf_G_continuum, "residual": res, "semigroup": semi,
           "heat": heat.to_dict(), "mean_value_min_slack": slack}
    checks = {"residual": res <= 1e-6, "semigroup": semi <= 1e-8, "mean_value": bool(ok_mv),
              "heat_mass": max(heat.mass_error) <= 1e-10 if np.ndim(heat.mass_error) else heat.mass_error <= 1e-10}
    if n == 1:
        h1 = green.torus_h1_constants(form)
        rep["h1"] = {"alpha": h1.alpha, "A": h1.A, "alpha_critical": h1.alpha_critical}
    rows = [{"t": t, "scaled_diagonal": s} for t, s in zip(heat.t, heat.scaled)]
    return RunResult("Green function representation and heat kernel bounds", rep, checks, rows,
                     ("t", ["scaled_diagonal"], "x"))


def _h_family(M):
    x = M.coords()

    def h(t):
        return 0.5 * (1.0 + t) * np.cos(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1])
    return h


def run_family(c, seed, workers) -> RunResult:
    kind = c["kind"]
    if kind not in FAMILY_LADDERS:
        raise UsageError(f"unknown family kind {kind!r}")
    ladder = _floats(c["ladder"] or FAMILY_LADDERS[kind])
    res = int(c["resolution"]) if c.get("resolution") else None
    if kind == "cusp":
        fit = families.cusp_exponent()
        return RunResult("cusp singularity exponent", fit.to_dict(),
                         {"kappa": abs(fit.kappa - 2.0) <= 0.05, "conclusive": fit.conclusive},
                         [{"r": r, "phi": v} for r, v in zip(fit.radii, fit.values)], ("r", ["phi"], "x"))
    if kind in ("general-type", "calabi-yau", "stable"):
        form = euclidean_form(build_torus(1, resolution=res or 64))
        if kind == "general-type":
            exp = families.general_type_family(ladder, _h_family(form.manifold), form, float(c["p"]), workers)
            d = exp.diagnostics
            checks = {"sup_bound_holds": d["sup_bound_all"], "uniform_bound": d["bound_holds"]}
            stmt = "sup bound and uniform estimate for general type families"
        elif kind == "calabi-yau":
            exp = families.cy_oscillation(ladder, None, form, float(c["p"]), workers)
            d = exp.diagnostics
            checks = {"oscillation": d["holds"]}
            stmt = "uniform oscillation bound for Calabi-Yau families"
        else:
            model = densities.SncLocalModel(p=1, a=(-1.0,))
            exp = families.stable_family_bound(ladder, model, float(c["eps"]), form, workers=workers)
            d = exp.diagnostics
            checks = {"comparisons": d["all_comparisons"], "bound": d["bound_holds"]}
            stmt = "uniform lower bound with log log singularity for stable families"
        if "members" in d:
            rows = [{"t": t, **{k: v for k, v in m.items() if not isinstance(v, (list, dict))}}
                    for t, m in zip(ladder, d["members"])]
        else:
            rows = [{"t": t, "osc": o, "c_t": ct} for t, o, ct in zip(ladder, d["osc"], d["c_t"])]
        ycol = next(k for k in ("osc", "sup_norm", "u_sup_norm", "sup") if k in rows[0])
        return RunResult(stmt, exp.to_dict(), checks, rows, ("t", [ycol], "x"))
    if kind == "non-collapsing":
        exp, rep = families.noncollapsing_limit(ladder, resolution=res or 64)
        checks = {"converges": rep.verdict == "converges", "bound": bool(rep.extras["bound_holds"])}
        stmt = "convergence of potentials in a non-collapsing degeneration"
    else:
        exp, rep = families.collapsing_fibration(ladder, resolution=res or 24, workers=workers)
        vt = rep.extras["vt_error"]
        checks = {"strictly_decreasing": rep.extras["strictly_decreasing"],
                  "final_below_tenth": rep.extras["final_over_initial"] < 0.1,
                  "single_g": rep.extras["single_g"], "volume_expansion": max(vt) <= 1e-12}
        stmt = "collapsing limit along a fibration"
    rows = [{"t": t, "distance": d_, "pairing": p_} for t, d_, p_ in zip(rep.t, rep.distance, rep.pairing)]
    return RunResult(stmt, {"convergence": rep.to_dict(), "experiment": exp.to_dict()}, checks, rows,
                     ("t", ["distance"], "xy"))


RUNNERS = {"bounds": run_bounds, "solve": run_solve, "capacity": run_capacity, "skoda": run_skoda,
           "density": run_density, "green": run_green, "family": run_family}

# quick settings for ``all``: one run per module
ALL_PLAN = (
    ("bounds", {}), ("solve", {}), ("solve-manufactured", {"preset": "manufactured"}), ("capacity", {}),
    ("skoda", {"mode": "projective"}), ("skoda-kernels", {"mode": "kernels"}),
    ("skoda-conic", {"mode": "conic"}), ("skoda-gap", {"mode": "gap"}), ("density", {}),
    ("density-canonical", {"kind": "canonical", "a_list": "-1/2,-1/2", "p": "2", "m": "2"}),
    ("density-h2prime", {"kind": "h2prime", "a_list": "-1,-1/2", "p": "2", "m": "2"}), ("green", {}),
    ("family", {"kind": "general-type"}), ("family-cusp", {"kind": "cusp"}),
    ("family-stable", {"kind": "stable"}), ("family-calabi-yau", {"kind": "calabi-yau"}),
    ("family-non-collapsing", {"kind": "non-collapsing"}), ("family-collapsing", {"kind": "collapsing"}),
)


# ---------------------------------------------------------------- orchestration

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pluripot", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="INI file with [run] and per-subcommand sections")
    ap.add_argument("--output", help="output directory (default: runs/<subcommand>)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    sp = ap.add_subparsers(dest="sub", metavar="subcommand")
    opts = {"bounds": ["n", "p", "C", "alpha", "A", "mode", "eps"],
            "solve": ["preset", "n", "resolution", "tol"],
            "capacity": ["resolution", "radii", "levels"],
            "skoda": ["mode", "resolution", "count", "samples", "deltas", "ladder"],
            "density": ["kind", "p", "a_list", "m", "eps", "t", "dA", "ladder"],
            "green": ["n", "resolution", "count"],
            "family": ["kind", "ladder", "resolution", "p", "eps"]}
    for name, keys in opts.items():
        s = sp.add_parser(name)
        for k in keys:
            s.add_argument(f"--{k.replace('_', '-')}", dest=k)
    sp.add_parser("all")
    return ap


def merged_config(args, sub: str, overrides: dict | None = None) -> tuple:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if args.config:
        if not cp.read(args.config):
            raise UsageError(f"cannot read config {args.config}")
    run = dict(DEFAULTS["run"])
    if cp.has_section("run"):
        run.update(cp["run"])
    for k in ("seed", "workers", "output"):
        if getattr(args, k, None) is not None:
            run[k] = str(getattr(args, k))
    cfg = dict(DEFAULTS[sub])
    if cp.has_section(sub):
        cfg.update(cp[sub])
    cfg.update(overrides or {})
    for k in DEFAULTS[sub]:
        v = getattr(args, k, None)
        if v is not None and getattr(args, "sub", None) == sub:
            cfg[k] = v
    cfg["seed"] = run["seed"]
    return cfg, run


def run_one(args, sub, out: Path, overrides=None) -> list:
    cfg, run = merged_config(args, sub, overrides)
    res = RUNNERS[sub](cfg, int(run["seed"]), max(1, int(run["workers"])))
    # workers does not enter the config hash: results do not depend on it
    write_outputs(out, sub, cfg, res)
    return sorted(k for k, v in res.checks.items() if not v)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not args.sub:
        ap.print_usage(sys.stderr)
        return 2
    try:
        base = Path(args.output) if args.output else None
        if args.sub == "all":
            _, run = merged_config(args, "bounds")
            root = base or Path(run["output"]) / "all"
            failures = {}
            for label, over in ALL_PLAN:
                sub = label.split("-")[0]
                bad = run_one(args, sub, root / label, over)
                if bad:
                    failures[label] = bad
            summary = {"runs": [lbl for lbl, _ in ALL_PLAN], "failed": failures, "passed": not failures}
            root.mkdir(parents=True, exist_ok=True)
            (root / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
        else:
            _, run = merged_config(args, args.sub)
            out = base or Path(run["output"]) / args.sub
            bad = run_one(args, args.sub, out)
            failures = {args.sub: bad} if bad else {}
    except (UsageError, ValueError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    if failures:
        for k, v in failures.items():
            print(f"FAILED {k}: {', '.join(v)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

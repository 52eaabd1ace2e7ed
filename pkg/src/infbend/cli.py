"""Command-line front end: ``bend <command> [options]``.

Exit codes: 0 success, 2 configuration or missing inputs, 3 the surface
violates the curvature hypotheses, 4 a numerical stage failed, 5 a
verification tolerance was missed (the report is still written).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import artifacts, pipeline
from .bending import bending_residual, rigid_fit
from .errors import ConfigError, HypothesisError, SolverError
from .first_integral import planar_exclusion

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4, 5
COMMANDS = ("run", "analyze", "integral", "solve", "bend", "deform", "verify")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2 as well, but say so explicitly
        self.print_usage(sys.stderr)
        print(f"bend: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bend", description="Nontrivial infinitesimal bendings of surfaces "
                "with isolated planar points.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--surface", help="catalogue name or path of a surface file")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--grid", type=int, help="resolution N (33, 65, 129 or 257)")
    p.add_argument("--k", type=int, help="smoothness target k")
    p.add_argument("--sigma", help="comma-separated deformation amplitudes")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", help="holomorphic seed: one | z<k>")
    p.add_argument("--solver", help="auto | dense | gmres | fixed-point")
    p.add_argument("--no-checks", action="store_true",
                   help="skip the refinement comparison and self-checks in 'run'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    keys = ("surface", "grid", "k", "sigma", "out", "seed", "solver")
    out = {k: getattr(args, k) for k in keys if getattr(args, k) is not None}
    if args.no_checks:
        out["refine_check"] = "false"
        out["self_checks"] = "false"
    return out


def _late_config(args) -> pipeline.RunConfig:
    """Configuration of a stage that consumes earlier artifacts."""
    out = args.out or (pipeline.load_config(args.config).out if args.config else
                       pipeline.RunConfig().out)
    ov = _overrides(args)
    for fixed in ("surface", "grid"):
        ov.pop(fixed, None)
    ov.pop("out", None)
    return pipeline.stored_config(out, ov)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.3e}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    return str(x)


def _print(title: str, d: dict, keys) -> None:
    print(title)
    for k in keys:
        if k in d:
            print(f"  {k:32s} {_fmt(d[k])}")


def cmd_run(args) -> int:
    cfg = pipeline.load_config(args.config, _overrides(args))
    rep = pipeline.run_pipeline(cfg)
    for name, c in rep.criteria.items():
        state = {True: "PASS", False: "FAIL", None: "n/a "}[c["passed"]]
        print(f"{state} {name}")
    print(f"nontrivial: {rep.verdict['nontrivial']}  "
          f"(rigid-fit residual {rep.verdict['rigid_fit_relative_residual']:.3e})")
    print(f"report: {Path(cfg.out) / 'report.json'}  total {rep.timings['total']:.1f}s")
    return rep.exit_code


def cmd_analyze(args) -> int:
    cfg = pipeline.load_config(args.config, _overrides(args))
    an = pipeline.analyze(cfg)
    pipeline.write_analysis(an, cfg)
    _print(f"surface {an.surface.name}, N = {cfg.grid}, {an.grid.n} nodes", an.summary,
           ("K_min", "K_max", "orientation_flipped", "quadratic_identity"))
    for p in an.summary["planar_points"]:
        print(f"  planar point at {p['location']}: m_K fit {_fmt(p['m_K_fit'])}, mu {_fmt(p['mu'])}")
    return EXIT_OK


def cmd_integral(args) -> int:
    cfg = _late_config(args)
    an = pipeline.analyze(cfg)
    it = pipeline.integral(an, cfg)
    pipeline.write_integral(an, it, cfg)
    _print("first integral", it.summary, ("residual",))
    print(f"  injective                        {it.injectivity['passed']}")
    for f in it.local_models:
        print(f"  local exponent                   {_fmt(f['slope'])} (mu {_fmt(f.get('mu'))})")
    return EXIT_OK if it.injectivity["passed"] else EXIT_VERIFY


def cmd_solve(args) -> int:
    cfg = _late_config(args)
    an, it, _, _ = pipeline.load_prior(cfg, "integral")
    sv = pipeline.solve(an, it, cfg)
    pipeline.write_solve(an, sv, cfg)
    _print("vekua", sv.summary, ("M", "residual_modified", "residual_original",
                                 "vanishing_slopes_W", "W1_sup", "method"))
    return EXIT_OK


def cmd_bend(args) -> int:
    cfg = _late_config(args)
    an, it, sv, _ = pipeline.load_prior(cfg, "solve")
    bd = pipeline.bend(an, sv, cfg)
    pipeline.write_bend(an, bd, cfg)
    _print("bending", bd.summary, ("relative_residual", "relative_components", "U_sup"))
    print(f"  rigid-fit residual               {_fmt(bd.rigid.relative_residual)}")
    ok = bd.summary["relative_residual"] < pipeline.scaled_tolerance(cfg.bending_tol, cfg.grid)
    if an.planar:
        ok = ok and bd.rigid.nontrivial
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_deform(args) -> int:
    cfg = _late_config(args)
    U = pipeline.load_stage(cfg, "bend")["U"]
    an = pipeline.analyze(cfg)
    fam, summ = pipeline.deformation_summary(an, U, cfg)
    paths = pipeline.write_deformation(an, U, fam, cfg)
    _print("deformation", summ, ("sigma", "defect", "slope", "plus_minus_max",
                                 "regime_crossover_sigma"))
    print(f"  meshes written                   {len(paths)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    """Residuals recomputed from stored fields; no solve is repeated."""
    cfg = _late_config(args)
    an, it, sv, U = pipeline.load_prior(cfg, "bend")
    pn = [p.node for p in an.planar]
    br = bending_residual(an.jet, U, an.grid, exclude=planar_exclusion(an.grid, pn, 2.0))
    rf = rigid_fit(an.jet.R, U)
    _, deform = pipeline.deformation_summary(an, U, cfg)
    checks = {
        "first_integral_residual": it.summary["residual"],
        "injective": it.injectivity["passed"],
        "vekua_residual_modified": sv.summary["residual_modified"],
        "vekua_residual_original": sv.summary["residual_original"],
        "vanishing_slopes_W": sv.summary["vanishing_slopes_W"],
        "M": sv.M,
        "bending_relative_residual": br.relative,
        "rigid_fit_relative_residual": rf.relative_residual,
        "defect_slope": deform["slope"],
        "plus_minus_max": deform["plus_minus_max"],
    }
    for k, v in checks.items():
        print(f"  {k:32s} {_fmt(v)}")
    ok = (it.injectivity["passed"]
          and sv.summary["residual_modified"] < cfg.vekua_tol
          and sv.summary["residual_original"] < cfg.original_tol
          and all(s >= sv.M - 0.2 for s in sv.summary["vanishing_slopes_W"])
          and br.relative < pipeline.scaled_tolerance(cfg.bending_tol, cfg.grid)
          and (rf.nontrivial or not an.planar))
    artifacts.write_json(Path(cfg.out) / "verify.json", {**checks, "passed": ok})
    return EXIT_OK if ok else EXIT_VERIFY


HANDLERS = {"run": cmd_run, "analyze": cmd_analyze, "integral": cmd_integral,
            "solve": cmd_solve, "bend": cmd_bend, "deform": cmd_deform, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"bend: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisError as exc:
        print(f"bend: hypothesis violated: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except SolverError as exc:
        print(f"bend: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())

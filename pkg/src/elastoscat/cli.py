"""Command-line driver.

Subcommands ``validate``, ``rate-study``, ``farfield`` and ``mesh-export``
read an INI experiment config (defaults reproduce the standard scene) and
write ``report.txt``, ``rates.csv`` and ``farfield.csv`` to the output
directory. The exit code is 0 iff every enabled check passes. The only
environment variable consulted is ``ELASTOSCAT_THREADS``.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from .experiments import (SLOPE_BAND, Check, ExperimentConfig, in_band, oracle_rate_study, run_rate_study,
                          run_validation)

INTERIOR_GROWTH_FLOOR = -0.55


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    over = {}
    if getattr(args, "case", None) is not None:
        over["case"] = args.case
        over["obstacle"] = "traction_free" if args.case == 1 else "rigid"
    if getattr(args, "h", None) is not None:
        over["h"] = args.h
    if getattr(args, "out", None) is not None:
        over["directory"] = args.out
    return cfg.with_overrides(**over) if over else cfg


def _write_report(cfg: ExperimentConfig, text: str) -> str:
    os.makedirs(cfg.directory, exist_ok=True)
    path = os.path.join(cfg.directory, "report.txt")
    with open(path, "w") as fh:
        fh.write(text)
    return path


def rate_checks(result, case: int) -> List[Check]:
    """Slope-band checks of a rate study (FEM or series)."""
    fits = result.fits
    names = ["h1_diff", "farfield_dist"] + (["traction_hm12"] if case == 1 else ["interior_h1"])
    checks = []
    for n in names:
        f = fits[n]
        checks.append(Check(f"slope_{n}", in_band(f.slope), f.slope,
                            f"in [{SLOPE_BAND[0]}, {SLOPE_BAND[1]}]", f"R^2={f.r2:.4f}"))
    checks.append(Check("r2_h1_diff", fits["h1_diff"].r2 >= 0.98, fits["h1_diff"].r2, ">= 0.98"))
    if case == 1:
        f = fits["interior_h1"]
        checks.append(Check("slope_interior_h1", f.slope >= INTERIOR_GROWTH_FLOOR, f.slope,
                            f">= {INTERIOR_GROWTH_FLOOR}"))
    return checks


def cmd_validate(args) -> int:
    cfg = _load(args)
    rep = run_validation(cfg, log=None if args.quiet else print)
    path = _write_report(cfg, rep.text())
    print(f"{'PASS' if rep.passed else 'FAIL'}: report written to {path}")
    return 0 if rep.passed else 1


def cmd_rate_study(args) -> int:
    cfg = _load(args)
    log = None if args.quiet else print
    if args.oracle:
        res = oracle_rate_study(cfg, cfg.directory)
    else:
        res = run_rate_study(cfg, cfg.directory, log=log)
    checks = rate_checks(res, cfg.case)
    lines = [f"rate study: case {cfg.case}, {'series oracle' if args.oracle else f'FEM h={cfg.h} P{cfg.degree}'}",
             f"unknowns: {res.dofs}"]
    lines += [f"fit {k}: slope={f.slope:.6g} intercept={f.intercept:.6g} R^2={f.r2:.6g}" for k, f in res.fits.items()]
    lines += [c.line() for c in checks]
    lines += [f"warning: {w}" for w in res.warnings] + [f"note: {n}" for n in cfg.notes]
    ok = all(c.passed for c in checks)
    lines.append("PASS" if ok else "FAIL")
    text = "\n".join(lines) + "\n"
    _write_report(cfg, text)
    print(text, end="")
    return 0 if ok else 1


def cmd_farfield(args) -> int:
    from .fem import solve_effective, solve_obstacle
    from .mesh import build_scene_mesh
    from .waves import far_field, far_field_distance

    cfg = _load(args)
    geom = cfg.geometry
    mesh = build_scene_mesh(geom, cfg.h, cfg.layer())
    inc, src = cfg.incident_field(), cfg.source_field()
    ref = solve_obstacle(cfg.scene, geom, cfg.condition, inc, src, mesh=mesh, order=cfg.n_dtn, degree=cfg.degree)
    pat = far_field(ref, args.directions)
    os.makedirs(cfg.directory, exist_ok=True)
    pat.to_csv(os.path.join(cfg.directory, "farfield.csv"))
    lines = [f"obstacle far field: {args.directions} directions -> farfield.csv"]
    cross = far_field(ref, args.directions, surface="medium")
    rel = far_field_distance(pat, cross) / max(float(abs(pat.amplitude).max()), 1e-300)
    ok = rel <= 0.01
    lines.append(Check("two_surface_consistency", ok, rel, "relative <= 0.01").line())
    if args.eps is not None:
        eff = solve_effective(cfg.scene, geom, cfg.case, args.eps, cfg.params, inc, src, mesh=mesh,
                              order=cfg.n_dtn, degree=cfg.degree)
        pe = far_field(eff, args.directions)
        pe.to_csv(os.path.join(cfg.directory, "farfield_effective.csv"))
        lines.append(f"effective eps={args.eps:g}: sup distance {far_field_distance(pat, pe):.6g}")
    text = "\n".join(lines) + "\n"
    _write_report(cfg, text)
    print(text, end="")
    return 0 if ok else 1


def cmd_mesh_export(args) -> int:
    from .mesh import build_scene_mesh
    from .mshio import write_msh

    cfg = _load(args)
    mesh = build_scene_mesh(cfg.geometry, cfg.h, cfg.layer() if args.layer else None)
    out = args.output or os.path.join(cfg.directory, "mesh.msh")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    write_msh(mesh, out)
    print(f"{mesh.n_nodes} nodes, {mesh.n_triangles} triangles -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastoscat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI experiment config (defaults: standard scene)")
        sp.add_argument("--out", help="output directory (overrides [output] directory)")
        sp.add_argument("--h", type=float, help="mesh size override")
        sp.add_argument("--case", type=int, choices=(1, 2), help="effective-medium case override")
        sp.add_argument("--quiet", action="store_true")

    s = sub.add_parser("validate", help="FEM-vs-series, manufactured solutions, DtN and flux checks")
    common(s)
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("rate-study", help="obstacle vs effective medium over the eps schedule")
    common(s)
    s.add_argument("--oracle", action="store_true", help="use the mesh-free series oracle")
    s.set_defaults(func=cmd_rate_study)
    s = sub.add_parser("farfield", help="far-field pattern of the obstacle (and optionally one effective run)")
    common(s)
    s.add_argument("--directions", type=int, default=64)
    s.add_argument("--eps", type=float)
    s.set_defaults(func=cmd_farfield)
    s = sub.add_parser("mesh-export", help="write the scene mesh as MSH 2.2")
    common(s)
    s.add_argument("--output", help="target .msh path")
    s.add_argument("--layer", action="store_true", help="include the boundary layer inside D")
    s.set_defaults(func=cmd_mesh_export)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

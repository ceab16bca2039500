"""Command-line pipeline: analyze, modal, optimize, reconstruct, report."""
from __future__ import annotations

import os

_threads = os.environ.get("DENSLEG_THREADS")
if _threads:
    # cap BLAS/OpenMP pools before numpy spins them up; results are identical
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import modal, reconstruct, report, simp, static
from .model import SolverError, ValidationError, baseline_field, validate_problem
from .output import (atomic_write, read_density_txt, read_frequency_csv,
                     read_summary_csv, write_density_pgm, write_density_txt,
                     write_frequency_csv, write_history_csv, write_summary_csv,
                     write_vtk)
from .probfile import load_problem


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit code 1 instead of argparse's 2
        raise ValidationError(message)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _stamp(args, out: Path, argv: list[str]) -> None:
    if args.stamp:
        now = datetime.now(timezone.utc).isoformat()
        atomic_write(out / "run_info.txt",
                     f"created = {now}\ncommand = densleg {' '.join(argv)}\n")


def _check_problem(problem) -> None:
    violations = validate_problem(problem)
    if violations:
        raise ValidationError("; ".join(violations))


def _static_summary(result, mass: float, material, max_stress: float) -> list:
    verdict = static.check_strength(max_stress, material)
    return [("max_stress_pa", float(max_stress)),
            ("max_displacement_m", float(result.max_displacement)),
            ("compliance_nm", float(result.compliance)),
            ("mass_kg", float(mass)),
            ("allowable_pa", float(verdict.allowable)),
            ("strength", "PASS" if verdict.passed else "FAIL")]


def _cmd_analyze(args) -> int:
    problem = load_problem(args.problem)
    _check_problem(problem)
    out = _outdir(args)
    result = static.analyze_design(problem)
    design = baseline_field(problem.design)
    mass = report.mass_of(design, problem.mesh, problem.material)
    max_stress = result.max_stress
    if args.exclude_singular:
        max_stress = static.max_stress_excluding_singular(
            result.vm_stress, problem.mesh, problem.loads)
    entries = _static_summary(result, mass, problem.material, max_stress)
    if args.exclude_singular:
        entries.append(("max_stress_raw_pa", float(result.max_stress)))
    atomic_write(out / "static_summary.csv", write_summary_csv(entries))
    atomic_write(out / "fields.vtk",
                 write_vtk(problem.mesh, design.densities,
                           displacement=result.displacement,
                           vm_stress=result.vm_stress))
    _say(args, f"max stress {max_stress / 1e6:.4g} MPa "
               f"(allowable {problem.material.allowable_stress / 1e6:.4g} MPa), "
               f"max displacement {result.max_displacement * 1e3:.4g} mm, "
               f"mass {mass:.6g} kg")
    _stamp(args, out, ["analyze", str(args.problem)])
    return 0


def _cmd_modal(args) -> int:
    problem = load_problem(args.problem)
    _check_problem(problem)
    out = _outdir(args)
    result = modal.modal_analyze(problem, n_modes=args.modes)
    design = baseline_field(problem.design)
    atomic_write(out / "frequencies.csv", write_frequency_csv(result.frequencies))
    atomic_write(out / "fields.vtk",
                 write_vtk(problem.mesh, design.densities, modes=result.modes))
    _say(args, "natural frequencies (Hz): "
               + ", ".join(f"{f:.6g}" for f in result.frequencies))
    _stamp(args, out, ["modal", str(args.problem)])
    return 0


def _cmd_optimize(args) -> int:
    problem = load_problem(args.problem)
    _check_problem(problem)
    out = _outdir(args)

    def observer(rec, snap) -> None:
        _say(args, f"iter {rec.iter:4d}  compliance {rec.compliance:.6e}  "
                   f"volfrac {rec.volume_fraction:.4f}  change {rec.max_change:.4f}")
        if args.snapshot_every and rec.iter % args.snapshot_every == 0:
            atomic_write(out / f"snapshot_{rec.iter:04d}.pgm",
                         write_density_pgm(snap.physical, problem.mesh))

    outcome = simp.optimize(problem, observer)
    xphys = outcome.final_design.densities
    atomic_write(out / "history.csv", write_history_csv(outcome.history))
    atomic_write(out / "density.txt", write_density_txt(xphys, problem.mesh))
    atomic_write(out / "density.pgm", write_density_pgm(xphys, problem.mesh))
    result = static.analyze_design(problem, densities=xphys)
    atomic_write(out / "fields.vtk",
                 write_vtk(problem.mesh, xphys, displacement=result.displacement,
                           vm_stress=result.vm_stress))
    _say(args, f"{'converged' if outcome.converged else 'stopped'} after "
               f"{outcome.iterations} iterations, final volume fraction "
               f"{outcome.history[-1].volume_fraction:.4f}")
    _stamp(args, out, ["optimize", str(args.problem)])
    return 0


def _cmd_reconstruct(args) -> int:
    problem = load_problem(args.problem)
    _check_problem(problem)
    out = _outdir(args)
    nx, ny, values = read_density_txt(Path(args.density).read_text(encoding="utf-8"))
    if (nx, ny) != (problem.mesh.nx, problem.mesh.ny):
        raise ValidationError(f"density grid {nx}x{ny} does not match problem "
                              f"grid {problem.mesh.nx}x{problem.mesh.ny}")
    design = problem.design.with_densities(values)

    if args.match_volume:
        layout = reconstruct.threshold_for_volume(
            design, problem.mesh, problem.params.volfrac, tol=0.01,
            symmetry=args.symmetry)
    else:
        layout = reconstruct.threshold(design, args.threshold)
        if args.symmetry:
            layout = reconstruct.enforce_symmetry(layout, problem.mesh, args.symmetry)
    layout = reconstruct.cleanup_connectivity(layout, problem.mesh, problem.loads)

    result = reconstruct.reanalyze(layout, problem, n_modes=args.modes)
    mass = report.mass_of(layout, problem.mesh, problem.material)
    max_stress = result.static.max_stress
    if args.exclude_singular:
        max_stress = static.max_stress_excluding_singular(
            result.static.vm_stress, problem.mesh, problem.loads)
    entries = _static_summary(result.static, mass, problem.material, max_stress)
    atomic_write(out / "static_summary.csv", write_summary_csv(entries))
    atomic_write(out / "frequencies.csv",
                 write_frequency_csv(result.modal.frequencies))
    atomic_write(out / "layout.txt",
                 write_density_txt(layout.densities(), problem.mesh))
    atomic_write(out / "layout.pgm",
                 write_density_pgm(layout.densities(), problem.mesh))
    atomic_write(out / "fields.vtk",
                 write_vtk(problem.mesh, layout.densities(),
                           displacement=result.static.displacement,
                           vm_stress=result.static.vm_stress,
                           modes=result.modal.modes))
    prov = layout.provenance
    atomic_write(out / "provenance.csv", write_summary_csv([
        ("threshold", float(prov.threshold)),
        ("symmetry_axis", prov.symmetry_axis or "none"),
        ("removed_islands", str(prov.removed_islands)),
        ("volume_fraction", float(layout.volume_fraction))]))
    _say(args, f"binary volume fraction {layout.volume_fraction:.4f} at threshold "
               f"{prov.threshold:.4f}; removed {prov.removed_islands} island(s); "
               f"max stress {max_stress / 1e6:.4g} MPa, "
               f"f1 {result.modal.frequencies[0]:.6g} Hz")
    _stamp(args, out, ["reconstruct", str(args.density), str(args.problem)])
    return 0


def _load_record(directory: Path) -> report.AnalysisRecord:
    summary_path = directory / "static_summary.csv"
    if not summary_path.exists():
        raise ValidationError(f"no static_summary.csv in {directory}")
    summary = read_summary_csv(summary_path.read_text(encoding="utf-8"))
    freq_path = directory / "frequencies.csv"
    freqs: tuple[float, ...] = ()
    if freq_path.exists():
        freqs = tuple(read_frequency_csv(freq_path.read_text(encoding="utf-8")))
    try:
        return report.AnalysisRecord(
            max_stress=float(summary["max_stress_pa"]),
            max_displacement=float(summary["max_displacement_m"]),
            frequencies=freqs,
            mass=float(summary["mass_kg"]) if "mass_kg" in summary else None,
            allowable=float(summary["allowable_pa"]) if "allowable_pa" in summary else None)
    except KeyError as exc:
        raise ValidationError(f"missing {exc} in {summary_path}")


def _cmd_report(args) -> int:
    before = _load_record(Path(args.before))
    after = _load_record(Path(args.after))
    out = _outdir(args)
    cmp = report.build_comparison(before, after)
    atomic_write(out / "report.csv", report.render_comparison_csv(cmp))
    if cmp.frequencies_before:
        atomic_write(out / "frequencies.csv", report.render_frequencies_csv(cmp))
    if before.mass is not None and after.mass is not None:
        atomic_write(out / "masses.csv", report.render_masses_csv(
            [("model", before.mass, after.mass)]))
        _say(args, f"mass reduction: "
                   f"{report.display_round(report.reduction_ratio(before.mass, after.mass))}%")
    _stamp(args, out, ["report"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="densleg",
                     description="Topology optimization of 2D plane-stress plates: "
                                 "statics, modal analysis, density-based compliance "
                                 "minimization, binary reconstruction, reporting.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p) -> None:
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--quiet", action="store_true", help="suppress progress lines")
        p.add_argument("--stamp", action="store_true",
                       help="also write run_info.txt with a timestamp")

    p = sub.add_parser("analyze", help="static analysis and strength check")
    p.add_argument("problem")
    p.add_argument("--exclude-singular", action="store_true",
                   help="ignore stresses in elements touching loaded/fixed nodes")
    common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("modal", help="natural frequencies and mode shapes")
    p.add_argument("problem")
    p.add_argument("-k", "--modes", type=int, default=6)
    common(p)
    p.set_defaults(func=_cmd_modal)

    p = sub.add_parser("optimize", help="run the compliance-minimization loop")
    p.add_argument("problem")
    p.add_argument("--snapshot-every", type=int, default=0, metavar="N",
                   help="write a density PGM every N iterations")
    common(p)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("reconstruct",
                       help="threshold a density field and re-analyze the binary layout")
    p.add_argument("density", help="density.txt from an optimize run")
    p.add_argument("problem")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--match-volume", action="store_true",
                   help="bisect the threshold to hit the problem's volume fraction")
    p.add_argument("--symmetry", choices=("x", "y"), default=None)
    p.add_argument("-k", "--modes", type=int, default=6)
    p.add_argument("--exclude-singular", action="store_true")
    common(p)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("report", help="before/after comparison tables")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    common(p)
    p.set_defaults(func=_cmd_report)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

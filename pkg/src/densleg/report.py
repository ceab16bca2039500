"""Before/after comparison artifacts: mass reduction, static performance,
natural-frequency tables, rendered as CSV with 2-decimal display rounding."""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .model import GridMesh, Material, ValidationError
from .static import StrengthCheck, check_strength

MPA = 1e6
MM = 1e-3


def display_round(value: float, places: int = 2) -> str:
    """Round half-up to ``places`` decimals for table display."""
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


def mass_of(obj, mesh: GridMesh, material: Material) -> float:
    """Mass in kg of a density field, binary layout, or raw density array."""
    if hasattr(obj, "densities"):
        dens = obj.densities() if callable(obj.densities) else obj.densities
    else:
        dens = np.asarray(obj, dtype=np.float64)
    if dens.size != mesh.n_elems:
        raise ValidationError(
            f"density field has {dens.size} entries, mesh has {mesh.n_elems} elements")
    return material.density * mesh.thickness_m * mesh.elem_size_m ** 2 * float(np.sum(dens))


def reduction_ratio(before: float, after: float) -> float:
    """Percent mass reduction, 100 * (before - after) / before."""
    if before <= 0:
        raise ValidationError(f"mass before must be > 0, got {before}")
    return 100.0 * (before - after) / before


@dataclass(frozen=True)
class MassReport:
    mass_before: float  # kg
    mass_after: float  # kg

    @property
    def reduction(self) -> float:
        return reduction_ratio(self.mass_before, self.mass_after)


@dataclass(frozen=True)
class AnalysisRecord:
    """One side of a before/after comparison (all values SI)."""

    max_stress: float  # Pa
    max_displacement: float  # m
    frequencies: tuple[float, ...] = ()  # Hz
    mass: float | None = None  # kg
    allowable: float | None = None  # Pa


@dataclass(frozen=True)
class ComparisonReport:
    stress_before: float
    stress_after: float
    displacement_before: float
    displacement_after: float
    frequencies_before: tuple[float, ...]
    frequencies_after: tuple[float, ...]
    strength_before: StrengthCheck
    strength_after: StrengthCheck


def build_comparison(before: AnalysisRecord, after: AnalysisRecord,
                     material: Material | None = None) -> ComparisonReport:
    """Pair two analyses. Strength verdicts come from ``material`` when given,
    otherwise from the allowable stress stored in the records."""
    if len(before.frequencies) != len(after.frequencies):
        raise ValidationError(
            f"mismatched mode counts: {len(before.frequencies)} before, "
            f"{len(after.frequencies)} after")
    if material is not None:
        sb = check_strength(before.max_stress, material)
        sa = check_strength(after.max_stress, material)
    else:
        if before.allowable is None or after.allowable is None:
            raise ValidationError("no material and no stored allowable stress")
        sb = StrengthCheck(before.allowable, before.max_stress <= before.allowable)
        sa = StrengthCheck(after.allowable, after.max_stress <= after.allowable)
    return ComparisonReport(
        stress_before=before.max_stress, stress_after=after.max_stress,
        displacement_before=before.max_displacement,
        displacement_after=after.max_displacement,
        frequencies_before=tuple(before.frequencies),
        frequencies_after=tuple(after.frequencies),
        strength_before=sb, strength_after=sa)


def render_comparison_csv(cmp: ComparisonReport) -> str:
    """report.csv: quantity,before,after with 2-decimal display rounding."""
    rows = [
        ("max_stress_mpa", display_round(cmp.stress_before / MPA),
         display_round(cmp.stress_after / MPA)),
        ("max_displacement_mm", display_round(cmp.displacement_before / MM),
         display_round(cmp.displacement_after / MM)),
        ("allowable_mpa", display_round(cmp.strength_before.allowable / MPA),
         display_round(cmp.strength_after.allowable / MPA)),
        ("strength", "PASS" if cmp.strength_before.passed else "FAIL",
         "PASS" if cmp.strength_after.passed else "FAIL"),
    ]
    lines = ["quantity,before,after"]
    lines += [f"{q},{b},{a}" for q, b, a in rows]
    return "\n".join(lines) + "\n"


def render_frequencies_csv(cmp: ComparisonReport) -> str:
    """frequencies.csv: mode,f_before_hz,f_after_hz at full precision."""
    lines = ["mode,f_before_hz,f_after_hz"]
    for idx, (fb, fa) in enumerate(zip(cmp.frequencies_before,
                                       cmp.frequencies_after), start=1):
        lines.append(f"{idx},{fb!r},{fa!r}")
    return "\n".join(lines) + "\n"


def render_masses_csv(rows: list[tuple[str, float, float]]) -> str:
    """masses.csv: structure,before_kg,after_kg,reduction_pct (2-decimal display)."""
    lines = ["structure,before_kg,after_kg,reduction_pct"]
    for name, before, after in rows:
        lines.append(f"{name},{display_round(before)},{display_round(after)},"
                     f"{display_round(reduction_ratio(before, after))}")
    return "\n".join(lines) + "\n"

"""Penalized variable-density compliance minimization.

The loop per iteration: density filter -> assemble -> solve -> compliance ->
adjoint sensitivity -> filter chain rule -> optimality-criteria update.
The modulus interpolation is the modified power law E(x) = Emin + x^p (E0 - Emin)
with Emin = 1e-9 * E0, which keeps the stiffness matrix nonsingular as x -> 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import sparse

from .model import (DesignField, GridMesh, OptimizationProblem, SimpParams,
                    SolverError, ValidationError, element_dof_table,
                    validate_problem)

EMIN_RATIO = 1e-9

VOLUME_TOL = 1e-4  # |V/V0 - volfrac| enforced by every OC step
_LAMBDA_LO = 1e-10
_LAMBDA_HI = 1e10
_LAMBDA_REL_WIDTH = 1e-12


def simp_young(x, penal: float, e0: float, emin: float):
    """Interpolated Young's modulus Emin + x^penal * (e0 - emin)."""
    return emin + np.asarray(x, dtype=np.float64) ** penal * (e0 - emin)


class DensityFilter:
    """Cone-weighted local averaging on the element grid.

    Weights are max(0, rmin - dist) with centroid distances measured in
    element-edge units. A radius of at most one element leaves the field
    unchanged (only the self-weight is nonzero).
    """

    def __init__(self, mesh: GridMesh, rmin: float) -> None:
        if rmin < 0:
            raise ValidationError(f"rmin must be >= 0, got {rmin}")
        self.mesh = mesh
        self.rmin = rmin
        if rmin <= 1.0:
            self._weights = None
            self._row_sum = None
            return
        nx, ny = mesh.nx, mesh.ny
        reach = int(np.ceil(rmin)) - 1
        rows, cols, vals = [], [], []
        jj, ii = np.divmod(np.arange(mesh.n_elems), nx)
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                w = rmin - np.hypot(dx, dy)
                if w <= 0.0:
                    continue
                ok = ((ii + dx >= 0) & (ii + dx < nx)
                      & (jj + dy >= 0) & (jj + dy < ny))
                src = np.flatnonzero(ok)
                dst = src + dy * nx + dx
                rows.append(src)
                cols.append(dst)
                vals.append(np.full(src.size, w))
        weights = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(mesh.n_elems, mesh.n_elems)).tocsr()
        self._weights = weights
        self._row_sum = np.asarray(weights.sum(axis=1)).ravel()

    @property
    def is_identity(self) -> bool:
        return self._weights is None

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Physical densities: row-normalized weighted average of the design field."""
        if self._weights is None:
            return np.array(x, dtype=np.float64)
        return (self._weights @ np.asarray(x, dtype=np.float64)) / self._row_sum

    def adjoint(self, sens: np.ndarray) -> np.ndarray:
        """Exact transpose of ``apply``: maps d/d(physical) to d/d(design)."""
        if self._weights is None:
            return np.array(sens, dtype=np.float64)
        return self._weights.T @ (np.asarray(sens, dtype=np.float64) / self._row_sum)


@lru_cache(maxsize=32)
def get_filter(mesh: GridMesh, rmin: float) -> DensityFilter:
    return DensityFilter(mesh, rmin)


def apply_density_filter(design: DesignField, mesh: GridMesh, rmin: float) -> np.ndarray:
    """Filtered (physical) densities with passive masks re-imposed."""
    xphys = get_filter(mesh, rmin).apply(design.densities)
    return design.impose_passive(xphys)


def chain_rule_filter(sens: np.ndarray, mesh: GridMesh, rmin: float) -> np.ndarray:
    """Pull sensitivities w.r.t. physical densities back to the design variables."""
    return get_filter(mesh, rmin).adjoint(sens)


def compliance_sensitivity(u: np.ndarray, mesh: GridMesh, xphys: np.ndarray,
                           params: SimpParams, material) -> np.ndarray:
    """dC/d(physical density), elementwise; nonpositive for any displacement field."""
    from .static import _unit_modulus_stiffness

    ke1 = _unit_modulus_stiffness(material.poisson, mesh.thickness_m, mesh.elem_size_m)
    ue = u[element_dof_table(mesh)]
    energies = np.einsum("ni,ij,nj->n", ue, ke1, ue)
    e0 = material.young_modulus
    x = np.asarray(xphys, dtype=np.float64)
    # d/dx of (Emin + x^p (E0 - Emin)) times the unit-modulus element energy
    return -params.penal * x ** (params.penal - 1.0) * (e0 - EMIN_RATIO * e0) * energies


def element_volumes(mesh: GridMesh) -> np.ndarray:
    """Full-solid element volumes in m^3 (uniform on a regular grid)."""
    return np.full(mesh.n_elems, mesh.thickness_m * mesh.elem_size_m ** 2)


def oc_update(x: np.ndarray, sens: np.ndarray, volumes: np.ndarray,
              params: SimpParams, field: DesignField,
              to_physical: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """One optimality-criteria step with a bisected volume multiplier.

    The volume constraint is measured on the physical densities produced by
    ``to_physical`` (default: passive imposition only). Passive elements are
    exempt from the update but their volume counts.
    """
    if to_physical is None:
        to_physical = field.impose_passive
    x = np.asarray(x, dtype=np.float64)
    design = field.design_mask
    neg_sens = np.maximum(-np.asarray(sens, dtype=np.float64), 0.0)[design]
    xd = x[design]
    lower = np.maximum(xd - params.move, field.x_min)
    upper = np.minimum(xd + params.move, 1.0)
    vd = volumes[design]

    v0 = float(volumes.sum())
    target = params.volfrac * v0

    def candidate(lam: float) -> np.ndarray:
        xc = x.copy()
        xc[design] = np.clip(xd * (neg_sens / (lam * vd)) ** params.eta, lower, upper)
        return field.impose_passive(xc)

    def measured(xc: np.ndarray) -> float:
        return float(volumes @ to_physical(xc))

    vol_hi = measured(candidate(_LAMBDA_LO))  # loosest multiplier -> max volume
    vol_lo = measured(candidate(_LAMBDA_HI))
    if vol_hi < target - VOLUME_TOL * v0 or vol_lo > target + VOLUME_TOL * v0:
        achieved = vol_hi if vol_hi < target else vol_lo
        raise SolverError(
            "volume constraint unattainable in one move-limited step: target "
            f"fraction {params.volfrac}, achievable fraction {achieved / v0:.6f}")

    lo, hi = _LAMBDA_LO, _LAMBDA_HI
    while hi - lo > _LAMBDA_REL_WIDTH * 0.5 * (hi + lo):
        lam = 0.5 * (lo + hi)
        xc = candidate(lam)
        vol = measured(xc)
        if abs(vol - target) <= VOLUME_TOL * v0:
            return xc
        if vol > target:
            lo = lam
        else:
            hi = lam
    xc = candidate(0.5 * (lo + hi))
    vol = measured(xc)
    if abs(vol - target) <= VOLUME_TOL * v0:
        return xc
    raise SolverError(
        f"volume bisection stalled: achieved fraction {vol / v0:.6f}, "
        f"target {params.volfrac}")


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    compliance: float  # N*m
    volume_fraction: float
    max_change: float


@dataclass(frozen=True, eq=False)
class DensitySnapshot:
    """Read-only per-iteration densities handed to the observer callback."""

    design: np.ndarray
    physical: np.ndarray


@dataclass(frozen=True, eq=False)
class OptimizeOutcome:
    final_design: DesignField  # physical (filtered) densities
    history: tuple[IterationRecord, ...]
    converged: bool
    iterations: int


def optimize(problem: OptimizationProblem,
             observer: Callable[[IterationRecord, DensitySnapshot], None] | None = None
             ) -> OptimizeOutcome:
    """Run the compliance-minimization loop until the density change stalls.

    Stops when the max design-density change drops below ``tol_change`` or
    after ``max_iters`` iterations. The observer, if given, is invoked once
    per iteration with the IterationRecord and a read-only density snapshot.
    """
    from .static import (assemble_stiffness, build_load_vector, compliance,
                         solve_static)

    violations = validate_problem(problem)
    if violations:
        raise ValidationError("invalid problem: " + "; ".join(violations))

    mesh, material, params, loads = (problem.mesh, problem.material,
                                     problem.params, problem.loads)
    field = problem.design
    filt = get_filter(mesh, params.rmin)
    force = build_load_vector(mesh, material, loads)
    volumes = element_volumes(mesh)
    v0 = float(volumes.sum())

    def to_physical(x: np.ndarray) -> np.ndarray:
        return field.impose_passive(filt.apply(x))

    x = np.array(field.densities)
    history: list[IterationRecord] = []
    converged = False
    xphys = to_physical(x)
    for it in range(1, params.max_iters + 1):
        k = assemble_stiffness(mesh, field.with_densities(xphys), params, material)
        u = solve_static(k, loads, force)
        c = compliance(u, force)
        dc_phys = compliance_sensitivity(u, mesh, xphys, params, material)
        dc = filt.adjoint(dc_phys)
        try:
            xnew = oc_update(x, dc, volumes, params, field, to_physical)
        except SolverError as exc:
            raise SolverError(f"iteration {it}: {exc}") from exc
        change = float(np.abs(xnew - x).max())
        xphys = to_physical(xnew)
        record = IterationRecord(iter=it, compliance=c,
                                 volume_fraction=float(volumes @ xphys) / v0,
                                 max_change=change)
        history.append(record)
        if observer is not None:
            snap_design = xnew.copy()
            snap_phys = xphys.copy()
            snap_design.flags.writeable = False
            snap_phys.flags.writeable = False
            observer(record, DensitySnapshot(design=snap_design, physical=snap_phys))
        x = xnew
        if change < params.tol_change:
            converged = True
            break

    return OptimizeOutcome(final_design=field.with_densities(xphys),
                           history=tuple(history), converged=converged,
                           iterations=len(history))

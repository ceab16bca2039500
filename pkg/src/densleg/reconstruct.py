"""Binary reconstruction of a converged gray design: threshold, symmetry,
connectivity cleanup, and re-analysis with void elements removed from the model."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .model import (DesignField, GridMesh, LoadCase, OptimizationProblem,
                    ValidationError)
from .modal import ModalResult, mass_from_element_masses, solve_modes
from .static import (StaticResult, assemble_from_modulus, build_load_vector,
                     make_static_result, solve_static, von_mises_from_modulus)

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])  # 4-connectivity


@dataclass(frozen=True)
class LayoutProvenance:
    threshold: float
    symmetry_axis: str | None
    removed_islands: int


@dataclass(frozen=True, eq=False)
class BinaryLayout:
    """Solid/void element flags plus a record of how they were produced."""

    solid: np.ndarray  # bool, (n_elems,)
    provenance: LayoutProvenance

    def __post_init__(self) -> None:
        solid = np.array(self.solid, dtype=bool)
        solid.flags.writeable = False
        object.__setattr__(self, "solid", solid)

    @property
    def volume_fraction(self) -> float:
        return float(self.solid.mean())

    def densities(self) -> np.ndarray:
        return self.solid.astype(np.float64)


def _impose_passive(solid: np.ndarray, design: DesignField) -> np.ndarray:
    out = solid.copy()
    out[design.passive_solid] = True
    out[design.passive_void] = False
    return out


def threshold(design: DesignField, t: float) -> BinaryLayout:
    """Cut the gray field at ``t``: solid where density >= t, passive re-imposed."""
    if not 0.0 < t < 1.0:
        raise ValidationError(f"threshold must be in (0, 1), got {t}")
    solid = _impose_passive(design.densities >= t, design)
    return BinaryLayout(solid=solid,
                        provenance=LayoutProvenance(t, None, 0))


def enforce_symmetry(obj, mesh: GridMesh, axis: str):
    """Mirror a gray field (pairwise mean) or a binary layout (pairwise OR).

    ``axis="x"`` mirrors across the vertical centerline (left-right),
    ``axis="y"`` across the horizontal one. Passive masks are re-imposed, so
    exact mirror invariance holds whenever the masks themselves are symmetric.
    """
    if axis not in ("x", "y"):
        raise ValidationError(f"symmetry axis must be 'x' or 'y', got {axis!r}")
    flip_axis = 1 if axis == "x" else 0
    if isinstance(obj, DesignField):
        grid = obj.densities.reshape(mesh.ny, mesh.nx)
        mirrored = 0.5 * (grid + np.flip(grid, axis=flip_axis))
        return obj.with_densities(mirrored.ravel())
    if isinstance(obj, BinaryLayout):
        grid = obj.solid.reshape(mesh.ny, mesh.nx)
        mirrored = grid | np.flip(grid, axis=flip_axis)
        return BinaryLayout(solid=mirrored.ravel(),
                            provenance=replace(obj.provenance, symmetry_axis=axis))
    raise ValidationError(f"cannot symmetrize {type(obj).__name__}")


def threshold_for_volume(design: DesignField, mesh: GridMesh, target: float,
                         tol: float = 0.01, symmetry: str | None = None) -> BinaryLayout:
    """Bisect the threshold until the binary volume fraction matches ``target``.

    When ``symmetry`` is given, the gray field is mirror-averaged before the
    cut (the pairwise mean preserves volume, so any target stays reachable;
    an OR after the cut could not drop below the union of the mirror halves).
    The cut of a symmetric gray field is itself symmetric.
    """
    if not 0 < target <= 1:
        raise ValidationError(f"target volume fraction must be in (0, 1], got {target}")
    if symmetry is not None:
        design = enforce_symmetry(design, mesh, symmetry)

    def cut(t: float) -> BinaryLayout:
        layout = threshold(design, t)
        if symmetry is not None:
            layout = BinaryLayout(solid=layout.solid,
                                  provenance=replace(layout.provenance,
                                                     symmetry_axis=symmetry))
        return layout

    lo, hi = 1e-9, 1.0 - 1e-9
    best = cut(0.5)
    best_err = abs(best.volume_fraction - target)
    for _ in range(60):
        if best_err <= tol:
            break
        t = 0.5 * (lo + hi)
        layout = cut(t)
        err = abs(layout.volume_fraction - target)
        if err < best_err:
            best, best_err = layout, err
        if layout.volume_fraction > target:
            lo = t
        else:
            hi = t
    if best_err > tol:
        raise ValidationError(
            f"no threshold reaches volume fraction {target} +/- {tol}; "
            f"closest achieved {best.volume_fraction:.4f}")
    return best


def _anchor_elements(mesh: GridMesh, loads: LoadCase) -> np.ndarray:
    """Elements touching a loaded or fixed node."""
    mask = np.zeros(mesh.n_elems, dtype=bool)
    for n in loads.loaded_nodes | loads.fixed_nodes:
        i, j = mesh.node_grid(n)
        for ei in (i - 1, i):
            for ej in (j - 1, j):
                if 0 <= ei < mesh.nx and 0 <= ej < mesh.ny:
                    mask[ej * mesh.nx + ei] = True
    return mask


def cleanup_connectivity(layout: BinaryLayout, mesh: GridMesh,
                         loads: LoadCase) -> BinaryLayout:
    """Drop 4-connected solid components that touch no loaded or fixed node."""
    grid = layout.solid.reshape(mesh.ny, mesh.nx)
    labels, n_comp = ndimage.label(grid, structure=_CROSS)
    labels = labels.ravel()
    anchored = np.unique(labels[_anchor_elements(mesh, loads) & layout.solid])
    anchored = anchored[anchored > 0]
    keep = np.isin(labels, anchored) & layout.solid
    removed = int(n_comp - anchored.size)
    if not keep.any():
        raise ValidationError("design vanished: no solid component touches a "
                              "loaded or fixed node")
    prov = replace(layout.provenance,
                   removed_islands=layout.provenance.removed_islands + removed)
    return BinaryLayout(solid=keep, provenance=prov)


@dataclass(frozen=True, eq=False)
class ReanalysisResult:
    static: StaticResult
    modal: ModalResult
    alive_dofs: np.ndarray


def reanalyze(layout: BinaryLayout, problem: OptimizationProblem,
              n_modes: int = 6) -> ReanalysisResult:
    """Static plus modal analysis of the binary layout with voids removed.

    Void elements contribute neither stiffness nor mass; nodes touching no
    solid element are dropped from the system. Loads and boundary conditions
    are identical to the pre-optimization analysis.
    """
    mesh, material, loads = problem.mesh, problem.material, problem.loads
    solid = layout.solid

    node_alive = np.zeros(mesh.n_nodes, dtype=bool)
    e = np.flatnonzero(solid)
    n0 = (e // mesh.nx) * (mesh.nx + 1) + e % mesh.nx
    for nodes in (n0, n0 + 1, n0 + mesh.nx + 2, n0 + mesh.nx + 1):
        node_alive[nodes] = True

    for pl in loads.point_loads:
        if not node_alive[pl.node]:
            i, j = mesh.node_grid(pl.node)
            raise ValidationError(
                f"loaded node ({i},{j}) is not attached to solid material")

    orphan_dofs = frozenset(np.flatnonzero(np.repeat(~node_alive, 2)).tolist())
    eff_loads = replace(loads, fixed_dofs=loads.fixed_dofs | orphan_dofs)

    e0 = material.young_modulus
    k = assemble_from_modulus(mesh, e0 * solid, material.poisson)
    f = build_load_vector(mesh, material, loads)
    u = solve_static(k, eff_loads, f)
    vm = von_mises_from_modulus(u, mesh, e0 * solid, material.poisson)
    vm[~solid] = 0.0
    static = make_static_result(u, f, vm)

    elem_mass = material.density * mesh.thickness_m * mesh.elem_size_m ** 2 * solid
    m = mass_from_element_masses(mesh, elem_mass)
    modal = solve_modes(k, m, eff_loads, n_modes)

    alive_dofs = np.flatnonzero(np.repeat(node_alive, 2))
    return ReanalysisResult(static=static, modal=modal, alive_dofs=alive_dofs)

"""Core domain types: grid mesh, material, load case, design field, problem.

Conventions used throughout the package:

* node index(i, j) = j*(nx+1) + i for 0 <= i <= nx, 0 <= j <= ny
* node n carries DOFs (2n, 2n+1) for (ux, uy)
* element index(ei, ej) = ej*nx + ei; its nodes are listed counter-clockwise
  starting at the lower-left corner: (i,j), (i+1,j), (i+1,j+1), (i,j+1)

Mesh geometry is authored and stored in millimetres; all physics runs in SI
units via the ``elem_size_m`` / ``thickness_m`` properties.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

MM = 1e-3  # millimetres to metres


class ValidationError(ValueError):
    """Invalid input: malformed problem files, inconsistent data, broken invariants."""


class SolverError(RuntimeError):
    """A numerical solve failed or could not meet its accuracy contract."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


@dataclass(frozen=True)
class GridMesh:
    """Regular grid of square 4-node plane-stress elements.

    nx, ny are element counts; elem_size and thickness are in millimetres.
    """

    nx: int
    ny: int
    elem_size: float
    thickness: float

    def __post_init__(self) -> None:
        _require(self.nx >= 1, f"nx must be >= 1, got {self.nx}")
        _require(self.ny >= 1, f"ny must be >= 1, got {self.ny}")
        _require(self.elem_size > 0, f"elem_size must be > 0, got {self.elem_size}")
        _require(self.thickness > 0, f"thickness must be > 0, got {self.thickness}")

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elems(self) -> int:
        return self.nx * self.ny

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def elem_size_m(self) -> float:
        return self.elem_size * MM

    @property
    def thickness_m(self) -> float:
        return self.thickness * MM

    def node_index(self, i: int, j: int) -> int:
        _require(0 <= i <= self.nx and 0 <= j <= self.ny,
                 f"node ({i},{j}) outside grid 0..{self.nx} x 0..{self.ny}")
        return j * (self.nx + 1) + i

    def node_grid(self, n: int) -> tuple[int, int]:
        if not 0 <= n < self.n_nodes:
            raise IndexError(f"node index {n} out of range 0..{self.n_nodes - 1}")
        return n % (self.nx + 1), n // (self.nx + 1)

    def node_xy(self, n: int) -> tuple[float, float]:
        """Node coordinates in metres."""
        i, j = self.node_grid(n)
        return i * self.elem_size_m, j * self.elem_size_m

    def element_index(self, ei: int, ej: int) -> int:
        _require(0 <= ei < self.nx and 0 <= ej < self.ny,
                 f"element ({ei},{ej}) outside grid 0..{self.nx - 1} x 0..{self.ny - 1}")
        return ej * self.nx + ei

    def element_grid(self, e: int) -> tuple[int, int]:
        if not 0 <= e < self.n_elems:
            raise IndexError(f"element index {e} out of range 0..{self.n_elems - 1}")
        return e % self.nx, e // self.nx

    def element_nodes(self, e: int) -> tuple[int, int, int, int]:
        """The element's four node indices in counter-clockwise order."""
        ei, ej = self.element_grid(e)
        n0 = self.node_index(ei, ej)
        n1 = n0 + 1
        n2 = n1 + (self.nx + 1)
        n3 = n0 + (self.nx + 1)
        return n0, n1, n2, n3

    def element_dofs(self, e: int) -> np.ndarray:
        """8 DOF indices of element e, node by node in CCW order, (ux, uy) per node."""
        return element_dof_table(self)[e]

    def element_centers(self) -> np.ndarray:
        """Element centroids in element-edge units, shape (n_elems, 2)."""
        e = np.arange(self.n_elems)
        return np.column_stack([e % self.nx + 0.5, e // self.nx + 0.5])


def build_grid(nx: int, ny: int, elem_size: float, thickness: float) -> GridMesh:
    """Construct a GridMesh (dimensions in millimetres), validating inputs."""
    return GridMesh(nx=nx, ny=ny, elem_size=elem_size, thickness=thickness)


@lru_cache(maxsize=32)
def element_dof_table(mesh: GridMesh) -> np.ndarray:
    """DOF indices of every element, shape (n_elems, 8), read-only."""
    e = np.arange(mesh.n_elems)
    ei = e % mesh.nx
    ej = e // mesh.nx
    n0 = ej * (mesh.nx + 1) + ei
    n1 = n0 + 1
    n2 = n1 + (mesh.nx + 1)
    n3 = n0 + (mesh.nx + 1)
    dofs = np.column_stack([2 * n0, 2 * n0 + 1, 2 * n1, 2 * n1 + 1,
                            2 * n2, 2 * n2 + 1, 2 * n3, 2 * n3 + 1])
    dofs.flags.writeable = False
    return dofs


@dataclass(frozen=True)
class Material:
    """Linear elastic material with strength data. All values in SI units."""

    young_modulus: float  # Pa
    poisson: float
    density: float  # kg/m^3
    yield_strength: float  # Pa
    safety_factor: float

    def __post_init__(self) -> None:
        _require(self.young_modulus > 0, f"young_modulus must be > 0, got {self.young_modulus}")
        _require(0 <= self.poisson < 0.5, f"poisson must be in [0, 0.5), got {self.poisson}")
        _require(self.density > 0, f"density must be > 0, got {self.density}")
        _require(self.yield_strength > 0, f"yield_strength must be > 0, got {self.yield_strength}")
        _require(self.safety_factor >= 1, f"safety_factor must be >= 1, got {self.safety_factor}")

    @property
    def shear_modulus(self) -> float:
        return self.young_modulus / (2.0 * (1.0 + self.poisson))

    @property
    def allowable_stress(self) -> float:
        return self.yield_strength / self.safety_factor


#: 6061 aluminium alloy as used for the bundled robot-leg plate scenarios.
AA6061 = Material(young_modulus=69.6e9, poisson=0.330, density=2770.0,
                  yield_strength=276e6, safety_factor=2.0)

MATERIAL_PRESETS: dict[str, Material] = {"AA6061": AA6061}


@dataclass(frozen=True)
class PointLoad:
    node: int
    axis: str  # "x" or "y"
    magnitude: float  # N

    def __post_init__(self) -> None:
        _require(self.axis in ("x", "y"), f"load axis must be 'x' or 'y', got {self.axis!r}")
        _require(np.isfinite(self.magnitude), f"load magnitude must be finite, got {self.magnitude}")

    @property
    def dof(self) -> int:
        return 2 * self.node + (0 if self.axis == "x" else 1)


@dataclass(frozen=True)
class LoadCase:
    """Point loads, displacement constraints, and a gravity acceleration vector."""

    point_loads: tuple[PointLoad, ...] = ()
    fixed_dofs: frozenset[int] = frozenset()
    gravity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "point_loads", tuple(self.point_loads))
        object.__setattr__(self, "fixed_dofs", frozenset(self.fixed_dofs))
        object.__setattr__(self, "gravity", (float(self.gravity[0]), float(self.gravity[1])))
        _require(all(np.isfinite(g) for g in self.gravity),
                 f"gravity must be finite, got {self.gravity}")

    @property
    def loaded_nodes(self) -> frozenset[int]:
        return frozenset(pl.node for pl in self.point_loads)

    @property
    def fixed_nodes(self) -> frozenset[int]:
        return frozenset(d // 2 for d in self.fixed_dofs)

    def sorted_fixed(self) -> np.ndarray:
        return np.fromiter(sorted(self.fixed_dofs), dtype=np.intp,
                           count=len(self.fixed_dofs))


@dataclass(frozen=True, eq=False)
class DesignField:
    """Per-element design densities with passive solid/void masks.

    Construction imposes the passive values (solid -> 1, void -> x_min) and
    rejects densities outside [x_min, 1]. Instances are immutable; use
    ``with_densities`` to derive a modified field.
    """

    densities: np.ndarray
    passive_solid: np.ndarray = None  # type: ignore[assignment]
    passive_void: np.ndarray = None  # type: ignore[assignment]
    x_min: float = 1e-3

    def __post_init__(self) -> None:
        dens = np.array(self.densities, dtype=np.float64)
        _require(dens.ndim == 1 and dens.size >= 1, "densities must be a 1-D array")
        n = dens.size
        solid = (np.zeros(n, dtype=bool) if self.passive_solid is None
                 else np.array(self.passive_solid, dtype=bool))
        void = (np.zeros(n, dtype=bool) if self.passive_void is None
                else np.array(self.passive_void, dtype=bool))
        _require(solid.shape == dens.shape and void.shape == dens.shape,
                 "passive masks must match densities in length")
        _require(0 < self.x_min < 1, f"x_min must be in (0, 1), got {self.x_min}")
        dens = self._impose(dens, solid, void, self.x_min)
        if dens.min() < self.x_min - 1e-9 or dens.max() > 1.0 + 1e-9:
            raise ValidationError(
                f"densities outside [{self.x_min}, 1]: range "
                f"[{dens.min()}, {dens.max()}]")
        np.clip(dens, self.x_min, 1.0, out=dens)
        dens = self._impose(dens, solid, void, self.x_min)
        for arr in (dens, solid, void):
            arr.flags.writeable = False
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "passive_solid", solid)
        object.__setattr__(self, "passive_void", void)

    @staticmethod
    def _impose(values: np.ndarray, solid: np.ndarray, void: np.ndarray,
                x_min: float) -> np.ndarray:
        out = np.array(values, dtype=np.float64)
        out[solid] = 1.0
        out[void] = x_min
        return out

    @property
    def n_elems(self) -> int:
        return self.densities.size

    @property
    def design_mask(self) -> np.ndarray:
        return ~(self.passive_solid | self.passive_void)

    @property
    def mask_overlap(self) -> np.ndarray:
        """Element indices claimed both solid and void (an invalid configuration)."""
        return np.flatnonzero(self.passive_solid & self.passive_void)

    def impose_passive(self, values: np.ndarray) -> np.ndarray:
        """Return a copy of ``values`` with the passive densities re-imposed."""
        return self._impose(values, self.passive_solid, self.passive_void, self.x_min)

    def with_densities(self, densities: np.ndarray) -> "DesignField":
        return DesignField(densities=densities, passive_solid=self.passive_solid,
                           passive_void=self.passive_void, x_min=self.x_min)


def uniform_field(mesh: GridMesh, volfrac: float,
                  passive_solid: np.ndarray | None = None,
                  passive_void: np.ndarray | None = None,
                  x_min: float = 1e-3) -> DesignField:
    """Uniform starting design at the target volume fraction, passive masks applied."""
    dens = np.full(mesh.n_elems, float(volfrac))
    return DesignField(densities=dens, passive_solid=passive_solid,
                       passive_void=passive_void, x_min=x_min)


def baseline_field(design: DesignField) -> DesignField:
    """Fully dense variant of a design (all ones, passive masks re-imposed)."""
    return design.with_densities(np.ones(design.n_elems))


@dataclass(frozen=True)
class SimpParams:
    """Penalized-interpolation optimization settings."""

    volfrac: float
    penal: float = 3.0
    rmin: float = 1.5  # filter radius in element-edge units
    move: float = 0.2
    eta: float = 0.5
    max_iters: int = 200
    tol_change: float = 0.01

    def __post_init__(self) -> None:
        _require(self.penal > 0, f"penal must be > 0, got {self.penal}")
        _require(0 < self.volfrac <= 1, f"volfrac must be in (0, 1], got {self.volfrac}")
        _require(self.rmin >= 0, f"rmin must be >= 0, got {self.rmin}")
        _require(0 < self.move <= 1, f"move must be in (0, 1], got {self.move}")
        _require(0 < self.eta <= 1, f"eta must be in (0, 1], got {self.eta}")
        _require(self.max_iters >= 1, f"max_iters must be >= 1, got {self.max_iters}")
        _require(self.tol_change > 0, f"tol_change must be > 0, got {self.tol_change}")


@dataclass(frozen=True, eq=False)
class OptimizationProblem:
    """A complete minimum-compliance problem on a grid mesh."""

    mesh: GridMesh
    material: Material
    loads: LoadCase
    design: DesignField
    params: SimpParams


def validate_problem(problem: OptimizationProblem) -> list[str]:
    """Check cross-cutting invariants, returning every violation (empty list = ok)."""
    violations: list[str] = []
    mesh, loads, design = problem.mesh, problem.loads, problem.design

    if design.n_elems != mesh.n_elems:
        violations.append(
            f"design field has {design.n_elems} elements, mesh has {mesh.n_elems}")
    overlap = design.mask_overlap
    if overlap.size:
        violations.append(
            "passive solid and void masks overlap at elements "
            f"{overlap.tolist()}")

    if not loads.fixed_dofs:
        violations.append("unconstrained rigid body motion: no fixed DOFs")
    bad_fixed = [d for d in loads.fixed_dofs if not 0 <= d < mesh.n_dofs]
    if bad_fixed:
        violations.append(f"fixed DOFs out of range: {sorted(bad_fixed)}")

    for pl in loads.point_loads:
        if not 0 <= pl.node < mesh.n_nodes:
            violations.append(f"load on node {pl.node} outside mesh")
        elif pl.dof in loads.fixed_dofs:
            i, j = mesh.node_grid(pl.node)
            violations.append(
                f"load applied on fixed DOF: node ({i},{j}) component {pl.axis}")
    return violations

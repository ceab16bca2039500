"""Problem-file grammar: line-oriented `[section]` / `key = value` text.

Sections: domain, material, loads, supports, optimization, passive.
`#` starts a comment, lists are expressed as repeated keys, and unknown or
duplicated scalar keys are rejected with their line number. All quantities
are converted to SI exactly once, here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (DesignField, GridMesh, LoadCase, Material, MATERIAL_PRESETS,
                    OptimizationProblem, PointLoad, SimpParams, ValidationError,
                    build_grid, uniform_field)

GPA = 1e9
MPA = 1e6
G_CM3 = 1000.0  # g/cm^3 -> kg/m^3

_SECTION_KEYS: dict[str, set[str]] = {
    "domain": {"nx", "ny", "elem_size_mm", "thickness_mm"},
    "material": {"preset", "young_gpa", "poisson", "density_g_cm3",
                 "yield_mpa", "safety_factor"},
    "loads": {"load", "couple", "gravity_m_s2"},
    "supports": {"fix", "fix_edge"},
    "optimization": {"volfrac", "penal", "rmin_elem", "move", "eta", "x_min",
                     "max_iters", "tol_change"},
    "passive": {"solid_rect", "void_rect"},
}
_REPEATABLE = {"load", "couple", "fix", "fix_edge", "solid_rect", "void_rect"}

_EDGES = {"left", "right", "bottom", "top"}
_COMPONENTS = {"x", "y", "both"}


@dataclass
class _Entry:
    value: str
    line: int


def _err(line: int, message: str) -> ValidationError:
    return ValidationError(f"line {line}: {message}")


def _tokenize(text: str) -> dict[str, list[tuple[str, _Entry]]]:
    sections: dict[str, list[tuple[str, _Entry]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTION_KEYS:
                raise _err(lineno, f"unknown section [{name}]")
            current = name
            sections.setdefault(name, [])
            continue
        if "=" not in line:
            raise _err(lineno, f"expected 'key = value', got {line!r}")
        if current is None:
            raise _err(lineno, "key before any [section] header")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SECTION_KEYS[current]:
            raise _err(lineno, f"unknown key {key!r} in section [{current}]")
        sections[current].append((key, _Entry(value, lineno)))
    return sections


class _Section:
    def __init__(self, name: str, entries: list[tuple[str, _Entry]]) -> None:
        self.name = name
        self.scalars: dict[str, _Entry] = {}
        self.lists: dict[str, list[_Entry]] = {}
        for key, entry in entries:
            if key in _REPEATABLE:
                self.lists.setdefault(key, []).append(entry)
            elif key in self.scalars:
                raise _err(entry.line, f"duplicate key {key!r} in section [{name}]")
            else:
                self.scalars[key] = entry

    def require(self, key: str) -> _Entry:
        if key not in self.scalars:
            raise ValidationError(
                f"missing required key {key!r} in section [{self.name}]")
        return self.scalars[key]

    def optional(self, key: str) -> _Entry | None:
        return self.scalars.get(key)


def _parse_float(entry: _Entry, key: str) -> float:
    try:
        return float(entry.value)
    except ValueError:
        raise _err(entry.line, f"malformed value for {key!r}: {entry.value!r}")


def _parse_int(entry: _Entry, key: str) -> int:
    try:
        return int(entry.value)
    except ValueError:
        raise _err(entry.line, f"malformed value for {key!r}: {entry.value!r}")


def _split(entry: _Entry, key: str, n: int) -> list[str]:
    parts = [p.strip() for p in entry.value.split(",")]
    if len(parts) != n:
        raise _err(entry.line,
                   f"{key!r} expects {n} comma-separated fields, got {len(parts)}")
    return parts


def _node_at(mesh: GridMesh, i: int, j: int, entry: _Entry) -> int:
    if not (0 <= i <= mesh.nx and 0 <= j <= mesh.ny):
        raise _err(entry.line,
                   f"node ({i},{j}) outside grid 0..{mesh.nx} x 0..{mesh.ny}")
    return j * (mesh.nx + 1) + i


def _parse_material(sec: _Section) -> Material:
    preset = sec.optional("preset")
    constants = [k for k in ("young_gpa", "poisson", "density_g_cm3",
                             "yield_mpa", "safety_factor") if sec.optional(k)]
    if preset is not None:
        if constants:
            raise _err(preset.line,
                       "material preset cannot be combined with explicit constants")
        name = preset.value
        if name not in MATERIAL_PRESETS:
            raise _err(preset.line, f"unknown material preset {name!r}; "
                       f"known: {sorted(MATERIAL_PRESETS)}")
        return MATERIAL_PRESETS[name]
    return Material(
        young_modulus=_parse_float(sec.require("young_gpa"), "young_gpa") * GPA,
        poisson=_parse_float(sec.require("poisson"), "poisson"),
        density=_parse_float(sec.require("density_g_cm3"), "density_g_cm3") * G_CM3,
        yield_strength=_parse_float(sec.require("yield_mpa"), "yield_mpa") * MPA,
        safety_factor=_parse_float(sec.require("safety_factor"), "safety_factor"))


def _parse_rects(sec: _Section, key: str, mesh: GridMesh) -> np.ndarray:
    mask = np.zeros(mesh.n_elems, dtype=bool)
    for entry in sec.lists.get(key, []):
        i0, j0, i1, j1 = (_parse_int(_Entry(p, entry.line), key)
                          for p in _split(entry, key, 4))
        if not (0 <= i0 <= i1 < mesh.nx and 0 <= j0 <= j1 < mesh.ny):
            raise _err(entry.line,
                       f"{key!r} rectangle ({i0},{j0})..({i1},{j1}) outside "
                       f"element grid 0..{mesh.nx - 1} x 0..{mesh.ny - 1}")
        for j in range(j0, j1 + 1):
            mask[j * mesh.nx + i0:j * mesh.nx + i1 + 1] = True
    return mask


def _parse_supports(sec: _Section, mesh: GridMesh) -> frozenset[int]:
    fixed: set[int] = set()

    def add(node: int, comp: str) -> None:
        if comp in ("x", "both"):
            fixed.add(2 * node)
        if comp in ("y", "both"):
            fixed.add(2 * node + 1)

    for entry in sec.lists.get("fix", []):
        si, sj, comp = _split(entry, "fix", 3)
        if comp not in _COMPONENTS:
            raise _err(entry.line, f"fix component must be x, y or both, got {comp!r}")
        i = _parse_int(_Entry(si, entry.line), "fix")
        j = _parse_int(_Entry(sj, entry.line), "fix")
        add(_node_at(mesh, i, j, entry), comp)

    for entry in sec.lists.get("fix_edge", []):
        edge, comp = _split(entry, "fix_edge", 2)
        if edge not in _EDGES:
            raise _err(entry.line,
                       f"fix_edge edge must be one of {sorted(_EDGES)}, got {edge!r}")
        if comp not in _COMPONENTS:
            raise _err(entry.line,
                       f"fix_edge component must be x, y or both, got {comp!r}")
        if edge in ("left", "right"):
            i = 0 if edge == "left" else mesh.nx
            nodes = [mesh.node_index(i, j) for j in range(mesh.ny + 1)]
        else:
            j = 0 if edge == "bottom" else mesh.ny
            nodes = [mesh.node_index(i, j) for i in range(mesh.nx + 1)]
        for n in nodes:
            add(n, comp)
    return frozenset(fixed)


def _parse_loads(sec: _Section, mesh: GridMesh
                 ) -> tuple[list[tuple[PointLoad, int]], tuple[float, float]]:
    entries: list[tuple[PointLoad, int]] = []

    for entry in sec.lists.get("load", []):
        si, sj, sfx, sfy = _split(entry, "load", 4)
        i = _parse_int(_Entry(si, entry.line), "load")
        j = _parse_int(_Entry(sj, entry.line), "load")
        fx = _parse_float(_Entry(sfx, entry.line), "load")
        fy = _parse_float(_Entry(sfy, entry.line), "load")
        node = _node_at(mesh, i, j, entry)
        if fx != 0.0:
            entries.append((PointLoad(node, "x", fx), entry.line))
        if fy != 0.0:
            entries.append((PointLoad(node, "y", fy), entry.line))

    for entry in sec.lists.get("couple", []):
        parts = _split(entry, "couple", 5)
        i1, j1, i2, j2 = (_parse_int(_Entry(p, entry.line), "couple")
                          for p in parts[:4])
        torque = _parse_float(_Entry(parts[4], entry.line), "couple")
        n1 = _node_at(mesh, i1, j1, entry)
        n2 = _node_at(mesh, i2, j2, entry)
        a = mesh.elem_size_m
        rx, ry = (i2 - i1) * a, (j2 - j1) * a
        dist = float(np.hypot(rx, ry))
        if dist == 0.0:
            raise _err(entry.line, "couple nodes must be distinct")
        # force pair perpendicular to the separation: rot90(u) = (-uy, ux)
        fx2, fy2 = -torque / dist * (ry / dist), torque / dist * (rx / dist)
        for node, fx, fy in ((n1, -fx2, -fy2), (n2, fx2, fy2)):
            if fx != 0.0:
                entries.append((PointLoad(node, "x", fx), entry.line))
            if fy != 0.0:
                entries.append((PointLoad(node, "y", fy), entry.line))

    gravity = (0.0, 0.0)
    gentry = sec.optional("gravity_m_s2")
    if gentry is not None:
        parts = [p.strip() for p in gentry.value.split(",")]
        if len(parts) == 1:
            g = _parse_float(gentry, "gravity_m_s2")
            gravity = (0.0, -g)  # scalar form: magnitude of downward acceleration
        elif len(parts) == 2:
            gravity = (_parse_float(_Entry(parts[0], gentry.line), "gravity_m_s2"),
                       _parse_float(_Entry(parts[1], gentry.line), "gravity_m_s2"))
        else:
            raise _err(gentry.line, "gravity_m_s2 expects 1 or 2 fields")
    return entries, gravity


def parse_problem(text: str) -> OptimizationProblem:
    """Parse problem text into a validated, SI-unit OptimizationProblem."""
    sections = _tokenize(text)
    for required in ("domain", "material", "optimization"):
        if required not in sections:
            raise ValidationError(f"missing required section [{required}]")

    dom = _Section("domain", sections["domain"])
    mesh = build_grid(
        nx=_parse_int(dom.require("nx"), "nx"),
        ny=_parse_int(dom.require("ny"), "ny"),
        elem_size=_parse_float(dom.require("elem_size_mm"), "elem_size_mm"),
        thickness=_parse_float(dom.require("thickness_mm"), "thickness_mm"))

    material = _parse_material(_Section("material", sections["material"]))

    opt = _Section("optimization", sections["optimization"])
    params = SimpParams(
        volfrac=_parse_float(opt.require("volfrac"), "volfrac"),
        penal=_parse_float(opt.require("penal"), "penal"),
        rmin=_parse_float(opt.require("rmin_elem"), "rmin_elem"),
        move=(_parse_float(opt.optional("move"), "move")
              if opt.optional("move") else 0.2),
        eta=(_parse_float(opt.optional("eta"), "eta")
             if opt.optional("eta") else 0.5),
        max_iters=(_parse_int(opt.optional("max_iters"), "max_iters")
                   if opt.optional("max_iters") else 200),
        tol_change=(_parse_float(opt.optional("tol_change"), "tol_change")
                    if opt.optional("tol_change") else 0.01))
    x_min = (_parse_float(opt.optional("x_min"), "x_min")
             if opt.optional("x_min") else 1e-3)

    passive = _Section("passive", sections.get("passive", []))
    solid_mask = _parse_rects(passive, "solid_rect", mesh)
    void_mask = _parse_rects(passive, "void_rect", mesh)

    supports = _Section("supports", sections.get("supports", []))
    fixed = _parse_supports(supports, mesh)

    load_sec = _Section("loads", sections.get("loads", []))
    load_entries, gravity = _parse_loads(load_sec, mesh)
    for pl, line in load_entries:
        if pl.dof in fixed:
            i, j = mesh.node_grid(pl.node)
            raise _err(line, f"load applied on fixed DOF: node ({i},{j}) "
                       f"component {pl.axis}")

    loads = LoadCase(point_loads=tuple(pl for pl, _ in load_entries),
                     fixed_dofs=fixed, gravity=gravity)
    design = uniform_field(mesh, params.volfrac, solid_mask, void_mask, x_min)
    return OptimizationProblem(mesh=mesh, material=material, loads=loads,
                               design=design, params=params)


def load_problem(path) -> OptimizationProblem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())


def _fmt(value: float, scale: float = 1.0) -> str:
    """Shortest decimal whose reparse (token * scale) reproduces ``value`` exactly."""
    for cand in (repr(value / scale), "%.17g" % (value / scale)):
        if float(cand) * scale == value:
            return cand
    return "%.17g" % (value / scale)


def _mask_rects(mask: np.ndarray, nx: int, ny: int) -> list[tuple[int, int, int, int]]:
    rects = []
    grid = mask.reshape(ny, nx)
    for j in range(ny):
        i = 0
        while i < nx:
            if grid[j, i]:
                start = i
                while i < nx and grid[j, i]:
                    i += 1
                rects.append((start, j, i - 1, j))
            else:
                i += 1
    return rects


def serialize_problem(problem: OptimizationProblem) -> str:
    """Canonical text form; parse(serialize(p)) reproduces p exactly."""
    mesh, mat, loads, params = (problem.mesh, problem.material, problem.loads,
                                problem.params)
    design = problem.design
    out = ["[domain]",
           f"nx = {mesh.nx}",
           f"ny = {mesh.ny}",
           f"elem_size_mm = {_fmt(mesh.elem_size)}",
           f"thickness_mm = {_fmt(mesh.thickness)}",
           "",
           "[material]",
           f"young_gpa = {_fmt(mat.young_modulus, GPA)}",
           f"poisson = {_fmt(mat.poisson)}",
           f"density_g_cm3 = {_fmt(mat.density, G_CM3)}",
           f"yield_mpa = {_fmt(mat.yield_strength, MPA)}",
           f"safety_factor = {_fmt(mat.safety_factor)}",
           "",
           "[loads]"]
    if loads.gravity != (0.0, 0.0):
        out.append(f"gravity_m_s2 = {_fmt(loads.gravity[0])},{_fmt(loads.gravity[1])}")
    for pl in loads.point_loads:
        i, j = mesh.node_grid(pl.node)
        fx = _fmt(pl.magnitude) if pl.axis == "x" else "0.0"
        fy = _fmt(pl.magnitude) if pl.axis == "y" else "0.0"
        out.append(f"load = {i},{j},{fx},{fy}")
    out += ["", "[supports]"]
    by_node: dict[int, set[str]] = {}
    for dof in sorted(loads.fixed_dofs):
        by_node.setdefault(dof // 2, set()).add("x" if dof % 2 == 0 else "y")
    for node in sorted(by_node):
        comps = by_node[node]
        comp = "both" if comps == {"x", "y"} else comps.pop()
        i, j = mesh.node_grid(node)
        out.append(f"fix = {i},{j},{comp}")
    out += ["", "[optimization]",
            f"volfrac = {_fmt(params.volfrac)}",
            f"penal = {_fmt(params.penal)}",
            f"rmin_elem = {_fmt(params.rmin)}",
            f"move = {_fmt(params.move)}",
            f"eta = {_fmt(params.eta)}",
            f"x_min = {_fmt(design.x_min)}",
            f"max_iters = {params.max_iters}",
            f"tol_change = {_fmt(params.tol_change)}"]
    rect_lines = []
    for key, mask in (("solid_rect", design.passive_solid),
                      ("void_rect", design.passive_void)):
        for i0, j0, i1, j1 in _mask_rects(mask, mesh.nx, mesh.ny):
            rect_lines.append(f"{key} = {i0},{j0},{i1},{j1}")
    if rect_lines:
        out += ["", "[passive]"] + rect_lines
    return "\n".join(out) + "\n"

"""Plain-text output formats: PGM density images, legacy VTK fields, density
text files, CSV summaries. All writers are byte-deterministic."""
from __future__ import annotations

import os
import tempfile

import numpy as np

from .model import GridMesh, ValidationError


def _fmt9(value: float) -> str:
    return "%.9g" % value


def write_density_pgm(values: np.ndarray, mesh: GridMesh) -> bytes:
    """Plain PGM (P2) of a density field, solid rendered black, y-up.

    Pixel = round(255 * (1 - density)), ties away from zero.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size != mesh.n_elems:
        raise ValidationError(
            f"field has {x.size} values, mesh has {mesh.n_elems} elements")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValidationError(
            f"density values outside [0, 1]: range [{x.min()}, {x.max()}]")
    pix = np.floor(255.0 * (1.0 - x) + 0.5).astype(int).reshape(mesh.ny, mesh.nx)
    lines = ["P2", f"{mesh.nx} {mesh.ny}", "255"]
    for j in range(mesh.ny - 1, -1, -1):
        lines.append(" ".join(str(v) for v in pix[j]))
    return ("\n".join(lines) + "\n").encode("ascii")


def write_density_txt(values: np.ndarray, mesh: GridMesh) -> str:
    """Density text format: `<nx> <ny>` header, then one full-precision value
    per line in row-major element order."""
    x = np.asarray(values, dtype=np.float64)
    if x.size != mesh.n_elems:
        raise ValidationError(
            f"field has {x.size} values, mesh has {mesh.n_elems} elements")
    lines = [f"{mesh.nx} {mesh.ny}"]
    lines += [repr(float(v)) for v in x]
    return "\n".join(lines) + "\n"


def read_density_txt(text: str) -> tuple[int, int, np.ndarray]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("empty density file")
    try:
        nx, ny = (int(p) for p in lines[0].split())
    except ValueError:
        raise ValidationError(f"bad density header {lines[0]!r}; expected '<nx> <ny>'")
    expected = nx * ny
    if len(lines) - 1 != expected:
        raise ValidationError(
            f"density file has {len(lines) - 1} values, header promises {expected}")
    try:
        values = np.array([float(v) for v in lines[1:]])
    except ValueError as exc:
        raise ValidationError(f"bad density value: {exc}")
    return nx, ny, values


def write_vtk(mesh: GridMesh, density: np.ndarray,
              displacement: np.ndarray | None = None,
              vm_stress: np.ndarray | None = None,
              modes: np.ndarray | None = None,
              title: str = "densleg fields") -> bytes:
    """Legacy ASCII VTK structured points with cell densities/stress and nodal
    vectors (9 significant digits)."""
    density = np.asarray(density, dtype=np.float64)
    if density.size != mesh.n_elems:
        raise ValidationError(
            f"density has {density.size} values, mesh has {mesh.n_elems} elements")
    a = mesh.elem_size_m
    out = ["# vtk DataFile Version 3.0", title, "ASCII",
           "DATASET STRUCTURED_POINTS",
           f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1",
           "ORIGIN 0 0 0",
           f"SPACING {_fmt9(a)} {_fmt9(a)} {_fmt9(a)}",
           f"CELL_DATA {mesh.n_elems}",
           "SCALARS density float",
           "LOOKUP_TABLE default"]
    out += [_fmt9(v) for v in density]
    if vm_stress is not None:
        vm = np.asarray(vm_stress, dtype=np.float64)
        if vm.size != mesh.n_elems:
            raise ValidationError(
                f"vm_stress has {vm.size} values, mesh has {mesh.n_elems} elements")
        out += ["SCALARS vm_stress float", "LOOKUP_TABLE default"]
        out += [_fmt9(v) for v in vm]
    point_blocks: list[tuple[str, np.ndarray]] = []
    if displacement is not None:
        point_blocks.append(("displacement", np.asarray(displacement)))
    if modes is not None:
        for idx in range(np.asarray(modes).shape[1]):
            point_blocks.append((f"mode_{idx + 1}", np.asarray(modes)[:, idx]))
    if point_blocks:
        out.append(f"POINT_DATA {mesh.n_nodes}")
        for name, vec in point_blocks:
            if vec.size != mesh.n_dofs:
                raise ValidationError(
                    f"{name} has {vec.size} values, mesh has {mesh.n_dofs} DOFs")
            out.append(f"VECTORS {name} float")
            out += [f"{_fmt9(vec[2 * n])} {_fmt9(vec[2 * n + 1])} 0"
                    for n in range(mesh.n_nodes)]
    return ("\n".join(out) + "\n").encode("ascii")


def write_history_csv(history) -> str:
    lines = ["iter,compliance,volfrac,change"]
    for rec in history:
        lines.append(f"{rec.iter},{rec.compliance!r},{rec.volume_fraction!r},"
                     f"{rec.max_change!r}")
    return "\n".join(lines) + "\n"


def write_summary_csv(entries: list[tuple[str, object]]) -> str:
    lines = ["quantity,value"]
    for key, value in entries:
        lines.append(f"{key},{value!r}" if isinstance(value, float)
                     else f"{key},{value}")
    return "\n".join(lines) + "\n"


def read_summary_csv(text: str) -> dict[str, str]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "quantity,value":
        raise ValidationError("summary CSV must start with 'quantity,value' header")
    out = {}
    for ln in lines[1:]:
        key, _, value = ln.partition(",")
        out[key] = value
    return out


def write_frequency_csv(frequencies) -> str:
    lines = ["mode,f_hz"]
    for idx, f in enumerate(frequencies, start=1):
        lines.append(f"{idx},{float(f)!r}")
    return "\n".join(lines) + "\n"


def read_frequency_csv(text: str) -> list[float]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "mode,f_hz":
        raise ValidationError("frequency CSV must start with 'mode,f_hz' header")
    return [float(ln.split(",")[1]) for ln in lines[1:]]


def atomic_write(path, data) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-densleg-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

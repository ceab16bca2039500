"""Natural frequencies and mode shapes of the constrained structure.

Solves the generalized eigenproblem K phi = lambda M phi on the reduced
(free-DOF) system with a lumped diagonal mass matrix. Mode shapes are
mass-normalized (phi' M phi = 1) and frequencies returned in Hz, ascending.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from .model import (DesignField, GridMesh, LoadCase, Material, SolverError,
                    ValidationError)

EIGEN_RESIDUAL_TOL = 1e-6
_RIGID_FRACTION = 1e-9  # eigenvalues below this fraction of the largest count as rigid


@dataclass(frozen=True, eq=False)
class ModalResult:
    frequencies: np.ndarray  # (k,), Hz, ascending
    modes: np.ndarray  # (n_dofs, k), mass-normalized, zero on fixed DOFs


def assemble_mass(mesh: GridMesh, design: DesignField, material: Material) -> sparse.csc_matrix:
    """Lumped mass matrix: each element spreads rho*t*a^2*x over its 4 nodes."""
    masses = material.density * mesh.thickness_m * mesh.elem_size_m ** 2 * design.densities
    return mass_from_element_masses(mesh, masses)


def mass_from_element_masses(mesh: GridMesh, element_masses: np.ndarray) -> sparse.csc_matrix:
    node_mass = np.zeros(mesh.n_nodes)
    e = np.arange(mesh.n_elems)
    n0 = (e // mesh.nx) * (mesh.nx + 1) + e % mesh.nx
    quarter = np.asarray(element_masses, dtype=np.float64) / 4.0
    for nodes in (n0, n0 + 1, n0 + mesh.nx + 2, n0 + mesh.nx + 1):
        np.add.at(node_mass, nodes, quarter)
    diag = np.repeat(node_mass, 2)
    return sparse.diags(diag, format="csc")


def solve_modes(k: sparse.spmatrix, m: sparse.spmatrix, loads: LoadCase,
                n_modes: int, allow_rigid: bool = False) -> ModalResult:
    """Smallest ``n_modes`` eigenpairs of the reduced system.

    With no fixed DOFs the stiffness is singular; pass ``allow_rigid=True`` to
    shift the factorization slightly and return the rigid modes as (near) zero
    frequencies.
    """
    ndof = k.shape[0]
    fixed = loads.sorted_fixed()
    if fixed.size == 0 and not allow_rigid:
        raise SolverError("insufficient constraints: no fixed DOFs "
                          "(enable rigid-mode tolerance for free structures)")
    free = np.setdiff1d(np.arange(ndof), fixed)
    nfree = free.size
    if not 1 <= n_modes <= nfree:
        raise ValidationError(f"mode count {n_modes} outside 1..{nfree} free DOFs")
    kff = k.tocsr()[free][:, free].tocsc()
    mff = m.tocsr()[free][:, free].tocsc()
    mdiag = mff.diagonal()
    if np.any(mdiag <= 0):
        raise SolverError("mass matrix has non-positive diagonal entries on free DOFs")

    if nfree <= max(2 * n_modes + 1, 32):
        vals, vecs = eigh(kff.toarray(), np.diag(mdiag))
        vals, vecs = vals[:n_modes], vecs[:, :n_modes]
    else:
        sigma = 0.0
        if allow_rigid:
            # small negative shift keeps K - sigma*M factorizable when K is singular
            sigma = -1e-6 * float(kff.diagonal().max() / mdiag.max())
        v0 = np.full(nfree, 1.0 / np.sqrt(nfree))  # deterministic start vector
        vals, vecs = eigsh(kff, k=n_modes, M=mff, sigma=sigma, which="LM", v0=v0)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vals = np.where(np.abs(vals) < _RIGID_FRACTION * max(abs(vals[-1]), 1e-300),
                    0.0, vals)
    if vals[0] < 0:
        raise SolverError(f"negative eigenvalue {vals[0]:.3e}: indefinite system")

    # exact mass normalization plus a deterministic sign convention
    norms = np.sqrt(np.einsum("ij,i,ij->j", vecs, mdiag, vecs))
    vecs = vecs / norms
    for col in range(vecs.shape[1]):
        peak = np.argmax(np.abs(vecs[:, col]))
        if vecs[peak, col] < 0:
            vecs[:, col] = -vecs[:, col]

    _check_residuals(kff, mff, vals, vecs, allow_rigid)

    modes = np.zeros((ndof, n_modes))
    modes[free] = vecs
    freqs = np.sqrt(np.maximum(vals, 0.0)) / (2.0 * np.pi)
    return ModalResult(frequencies=freqs, modes=modes)


def _check_residuals(kff, mff, vals, vecs, allow_rigid: bool) -> None:
    lam_max = float(np.abs(vals).max())
    for lam, phi in zip(vals, vecs.T):
        kphi = kff @ phi
        resid = np.linalg.norm(kphi - lam * (mff @ phi))
        denom = np.linalg.norm(kphi)
        if allow_rigid and lam <= _RIGID_FRACTION * lam_max:
            continue  # relative-to-Kphi is ill-posed at lambda ~ 0
        if resid > EIGEN_RESIDUAL_TOL * denom:
            raise SolverError(
                f"eigenpair residual {resid:.3e} exceeds {EIGEN_RESIDUAL_TOL:.0e} "
                f"* |K phi| = {EIGEN_RESIDUAL_TOL * denom:.3e}")


def modal_analyze(problem, n_modes: int = 6,
                  densities: np.ndarray | None = None) -> ModalResult:
    """Modal analysis of a problem at the given densities (default: fully dense)."""
    from .model import baseline_field
    from .static import assemble_stiffness

    design = (baseline_field(problem.design) if densities is None
              else problem.design.with_densities(densities))
    k = assemble_stiffness(problem.mesh, design, problem.params, problem.material)
    m = assemble_mass(problem.mesh, design, problem.material)
    return solve_modes(k, m, problem.loads, n_modes)

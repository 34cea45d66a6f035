"""P1 assembly for the Helmholtz impedance problem, sparse direct solves, region L2 products."""

from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import BoundaryTag, Region
from .mesh import Field, Mesh

# exact P1 element mass matrix on the reference triangle, scaled by |E|
_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0
_LOCAL_EDGE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0

_cache: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


class SolverError(RuntimeError):
    pass


def _mesh_cache(mesh: Mesh) -> dict:
    try:
        return _cache[mesh]
    except KeyError:
        d = _cache[mesh] = {}
        return d


def _scatter(mesh: Mesh, local: np.ndarray, conn: np.ndarray) -> sp.csr_matrix:
    """Sum per-element (n_el, k, k) blocks into an (N, N) CSR matrix."""
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel()
    cols = np.tile(conn, (1, k)).ravel()
    n = mesh.n_vertices
    # coo -> csr sums duplicates in a fixed order, so assembly is deterministic
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    c = _mesh_cache(mesh)
    if "K" not in c:
        p = mesh.vertices[mesh.triangles]
        area = mesh.areas
        # gradient of hat function i is rot90 of the opposite edge / (2|E|)
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        local = np.einsum("eid,ejd->eij", e, e) / (4.0 * area)[:, None, None]
        c["K"] = _scatter(mesh, local, mesh.triangles)
    return c["K"]


def mass_matrix(mesh: Mesh, region: Region = Region.STATE) -> sp.csr_matrix:
    """P1 mass matrix over the elements of ``region`` (all elements for STATE)."""
    region = Region(region)
    c = _mesh_cache(mesh)
    key = ("M", region)
    if key not in c:
        sel = slice(None) if region == Region.STATE else mesh.element_tags == region
        tris = mesh.triangles[sel]
        local = mesh.areas[sel][:, None, None] * _LOCAL_MASS
        c[key] = _scatter(mesh, local, tris)
    return c[key]


def boundary_mass(mesh: Mesh, tag: BoundaryTag = BoundaryTag.OUTER) -> sp.csr_matrix:
    c = _mesh_cache(mesh)
    key = ("B", BoundaryTag(tag))
    if key not in c:
        edges = mesh.boundary_edges[mesh.boundary_tags == tag]
        length = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
        c[key] = _scatter(mesh, length[:, None, None] * _LOCAL_EDGE_MASS, edges)
    return c[key]


def assemble_helmholtz(mesh: Mesh, k: float, robin_sign: int = 1) -> sp.csr_matrix:
    """Weak form of Δu + k²u with impedance ∂u/∂n = robin_sign·ik·u on the outer boundary.

    A = -K + k²M + robin_sign·ik·B_outer. Scatterer edges get no term
    (homogeneous Neumann).
    """
    if robin_sign not in (1, -1):
        raise ValueError("robin_sign must be +1 or -1")
    K = stiffness_matrix(mesh)
    M = mass_matrix(mesh)
    B = boundary_mass(mesh, BoundaryTag.OUTER)
    A = (-K + (k * k) * M).astype(complex) + (robin_sign * 1j * k) * B
    return A.tocsr()


def assemble_load(mesh: Mesh, f: Field) -> np.ndarray:
    """b_p = ∫ f_h ψ_p with f_h zero outside the support region of ``f``."""
    if f.mesh is not mesh:
        raise ValueError("field does not live on this mesh")
    return np.asarray(mass_matrix(mesh, f.support) @ f.values, dtype=complex)


class Factorization:
    """Sparse LU of a square complex matrix with a residual contract on every solve."""

    count = 0  # factorizations built in this process; read by performance tests

    def __init__(self, A, rtol: float = 1e-9):
        A = sp.csc_matrix(A, dtype=complex)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.A = A
        self.rtol = rtol
        try:
            self._lu = splu(A)
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise SolverError(f"factorization failed: {exc}") from exc
        diag = np.abs(self._lu.U.diagonal())
        if diag.size and diag.min() <= 1e-14 * diag.max():
            raise SolverError(f"numerically singular: min |pivot| = {diag.min():.3e}, max = {diag.max():.3e}")
        type(self).count += 1

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=complex)
        if b.shape != (self.A.shape[0],):
            raise ValueError("right-hand side has the wrong dimension")
        x = self._lu.solve(b)
        nb = np.linalg.norm(b)
        if nb > 0:
            rel = np.linalg.norm(self.A @ x - b) / nb
            if not rel <= self.rtol:
                raise SolverError(f"relative residual {rel:.3e} exceeds {self.rtol:.1e}")
        return x


def solve(A, b: np.ndarray) -> np.ndarray:
    return Factorization(A).solve(b)


def inner_product(f: Field, g: Field, region: Region) -> float:
    """Real L² inner product Re ∫_region conj(f) g."""
    if f.mesh is not g.mesh:
        raise ValueError("fields live on different meshes")
    M = mass_matrix(f.mesh, region)
    return float(np.real(np.vdot(f.values, M @ g.values)))


def norm(f: Field, region: Region) -> float:
    return float(np.sqrt(max(inner_product(f, f, region), 0.0)))

"""Tagged triangular meshes: generation, red-green refinement, P1 transfer, text dumps."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import BoundaryTag, GeometrySpec, Region

# local edge l of a triangle joins local vertices l and (l + 1) % 3
_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class MeshError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with per-element region tags.

    Arrays are read-only; refinement returns a new mesh. ``mesh_id`` counts
    refinement levels starting from 0 for a freshly generated mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    element_tags: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    geometry: Optional[GeometrySpec] = None
    mesh_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "element_tags", _frozen(self.element_tags, np.int8))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", _frozen(self.boundary_tags, np.int8))

    def __repr__(self):
        return (f"Mesh(id={self.mesh_id}, vertices={self.n_vertices}, "
                f"triangles={self.n_triangles}, h={mesh_size(self):.4g})")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @property
    def element_sizes(self) -> np.ndarray:
        """Per-element size sqrt(2 |E|), roughly the largest triangle height."""
        return np.sqrt(2.0 * self.areas)

    @property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2).max(axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def _edge_structure(self):
        all_edges = np.sort(self.triangles[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(all_edges, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs."""
        return self._edge_structure[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(M, 3) indices into ``edges``; column l is local edge (l, l+1)."""
        return self._edge_structure[1]

    @property
    def edge_counts(self) -> np.ndarray:
        return self._edge_structure[2]

    def region_vertex_mask(self, region: Region) -> np.ndarray:
        """Vertices in the closure of ``region`` (vertices of its elements)."""
        return self._region_masks[Region(region)]

    @cached_property
    def _region_masks(self):
        masks = {Region.STATE: np.zeros(self.n_vertices, bool)}
        masks[Region.STATE][self.triangles.ravel()] = True
        for reg in (Region.SOURCE, Region.BUFFER, Region.MEASUREMENT):
            m = np.zeros(self.n_vertices, bool)
            m[self.triangles[self.element_tags == reg].ravel()] = True
            m.setflags(write=False)
            masks[reg] = m
        masks[Region.STATE].setflags(write=False)
        return masks

    def check(self) -> None:
        """Raise :class:`MeshError` if the mesh is not a valid conforming triangulation."""
        if self.n_triangles == 0:
            raise MeshError("empty mesh")
        if np.any(self.signed_areas <= 0):
            raise MeshError("non-positive triangle orientation")
        if np.any(self.edge_counts > 2):
            raise MeshError("edge shared by more than two triangles")
        # a hanging node shows up as a vertex lying in the interior of a boundary edge
        b = self.edges[self.edge_counts == 1]
        if len(b) != len(self.boundary_edges):
            raise MeshError("boundary edge list out of sync with triangle incidence")
        pa, pb = self.vertices[b[:, 0]], self.vertices[b[:, 1]]
        tree = cKDTree(self.vertices)
        mids = 0.5 * (pa + pb)
        half = 0.5 * np.linalg.norm(pb - pa, axis=1)
        for m, r, e, a, seg in zip(mids, half, b, pa, pb - pa):
            for v in tree.query_ball_point(m, r * (1 - 1e-9)):
                if v in e:
                    continue
                rel = self.vertices[v] - a
                if abs(seg[0] * rel[1] - seg[1] * rel[0]) <= 1e-12 * (seg @ seg):
                    raise MeshError(f"hanging node {v} on edge {tuple(e)}")
        if self.geometry is not None:
            c = self.centroids
            if np.any(self.geometry.in_hole(c[:, 0], c[:, 1])):
                raise MeshError("element inside a scatterer")


def mesh_size(mesh: Mesh) -> float:
    """Max over elements of sqrt(2 |E|)."""
    if mesh.n_triangles == 0:
        raise MeshError("mesh_size of an empty mesh")
    return float(mesh.element_sizes.max())


def _boundary_from_triangles(vertices, triangles, geometry):
    """Edges used by one triangle, oriented as in that triangle (domain on the left)."""
    directed = triangles[:, _LOCAL_EDGES].reshape(-1, 2)
    key = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bnd = directed[counts[inverse.ravel()] == 1]
    mid = 0.5 * (vertices[bnd[:, 0]] + vertices[bnd[:, 1]])
    if geometry is None:
        tags = np.full(len(bnd), BoundaryTag.OUTER, np.int8)
    else:
        outer = geometry.on_outer_boundary(mid[:, 0], mid[:, 1])
        tags = np.where(outer, BoundaryTag.OUTER, BoundaryTag.SCATTERER).astype(np.int8)
    return bnd, tags


def _axis_nodes(breaks, target_h):
    nodes = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / target_h - 1e-9))
        nodes.extend(np.linspace(a, b, n + 1)[1:])
    nodes = np.array(nodes)
    nodes[-1] = breaks[-1]
    return nodes


def generate_mesh(geom: GeometrySpec, target_h: float) -> Mesh:
    """Structured triangulation aligned with every rectangle edge of ``geom``.

    Each interval between consecutive breakpoints is split into
    ``ceil(length / target_h)`` cells, so every cell has sides ``<= target_h``
    and ``mesh_size <= target_h``. Cells inside scatterers are dropped, and cell
    diagonals alternate in a checkerboard pattern.
    """
    if not target_h > 0:
        raise ValueError("target_h must be positive")
    geom.validate()
    xs, ys = geom.breakpoints()
    xn, yn = _axis_nodes(xs, target_h), _axis_nodes(ys, target_h)
    nx, ny = len(xn), len(yn)
    X, Y = np.meshgrid(xn, yn, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    cx = 0.5 * (xn[i] + xn[i + 1])
    cy = 0.5 * (yn[j] + yn[j + 1])
    keep = ~geom.in_hole(cx, cy)
    i, j = i[keep], j[keep]

    p00 = i * ny + j
    p10 = (i + 1) * ny + j
    p01 = i * ny + j + 1
    p11 = (i + 1) * ny + j + 1
    even = (i + j) % 2 == 0
    t1 = np.where(even[:, None], np.column_stack([p00, p10, p11]), np.column_stack([p00, p10, p01]))
    t2 = np.where(even[:, None], np.column_stack([p00, p11, p01]), np.column_stack([p10, p11, p01]))
    tris = np.vstack([t1, t2])

    used = np.unique(tris)
    renumber = np.full(len(verts), -1)
    renumber[used] = np.arange(len(used))
    verts = verts[used]
    tris = renumber[tris]

    cent = verts[tris].mean(axis=1)
    tags = geom.classify(cent[:, 0], cent[:, 1])
    bnd, btags = _boundary_from_triangles(verts, tris, geom)
    return Mesh(verts, tris, tags, bnd, btags, geometry=geom, mesh_id=0)


def _mark_closure(mesh: Mesh, marked: np.ndarray):
    """Grow the red set until every unmarked triangle has at most one split edge."""
    tri_edges = mesh.triangle_edges
    marked = marked.copy()
    while True:
        split = np.zeros(len(mesh.edges), bool)
        split[tri_edges[marked].ravel()] = True
        n_split = split[tri_edges].sum(axis=1)
        grow = ~marked & (n_split >= 2)
        if not grow.any():
            return marked, split, n_split
        marked |= grow


def refine(mesh: Mesh, h_max: float, diameter_guard: bool = False) -> Mesh:
    """Red-refine every element with sqrt(2|E|) > h_max, green-close the rest.

    Unmarked triangles with two or more split edges are promoted to red; those
    with exactly one split edge are bisected from the midpoint to the opposite
    vertex. Children inherit the parent's region tag. Passes repeat until no
    element exceeds ``h_max``. When nothing exceeds
    ``h_max`` the input mesh is returned unchanged. ``diameter_guard`` also
    marks elements whose longest edge exceeds ``2·h_max`` (limits slivers).
    """
    if not h_max > 0:
        raise ValueError("h_max must be positive")
    level = mesh.mesh_id
    out = mesh
    while True:
        marked = out.element_sizes > h_max
        if diameter_guard:
            marked |= out.diameters > 2.0 * h_max
        if not marked.any():
            break
        out = _split(out, marked)
    if out is mesh:
        return mesh
    # repeated passes (h_max below half the largest size) still count as one level
    return dataclasses.replace(out, mesh_id=level + 1)


def refine_uniformly(mesh: Mesh) -> Mesh:
    """Red-refine every element (exact halving of every element size)."""
    return _split(mesh, np.ones(mesh.n_triangles, bool))


def _split(mesh: Mesh, marked: np.ndarray) -> Mesh:
    marked, split, n_split = _mark_closure(mesh, marked)
    edges = mesh.edges
    nv = mesh.n_vertices
    split_ids = np.flatnonzero(split)
    mid_index = np.full(len(edges), -1)
    mid_index[split_ids] = nv + np.arange(len(split_ids))
    mids = 0.5 * (mesh.vertices[edges[split_ids, 0]] + mesh.vertices[edges[split_ids, 1]])
    verts = np.vstack([mesh.vertices, mids])

    T = mesh.triangles
    tags = mesh.element_tags
    te = mesh.triangle_edges
    keep = ~marked & (n_split == 0)
    out_tris = [T[keep]]
    out_tags = [tags[keep]]

    r = np.flatnonzero(marked)
    a, b, c = T[r, 0], T[r, 1], T[r, 2]
    mab, mbc, mca = mid_index[te[r, 0]], mid_index[te[r, 1]], mid_index[te[r, 2]]
    for child in ((a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)):
        out_tris.append(np.column_stack(child))
        out_tags.append(tags[r])

    g = np.flatnonzero(~marked & (n_split == 1))
    if len(g):
        local = np.argmax(split[te[g]], axis=1)
        v0 = T[g, local]
        v1 = T[g, (local + 1) % 3]
        v2 = T[g, (local + 2) % 3]
        m = mid_index[te[g, local]]
        out_tris += [np.column_stack([v0, m, v2]), np.column_stack([m, v1, v2])]
        out_tags += [tags[g], tags[g]]

    tris = np.vstack(out_tris)
    etags = np.concatenate(out_tags)
    bnd, btags = _boundary_from_triangles(verts, tris, mesh.geometry)
    return Mesh(verts, tris, etags, bnd, btags, geometry=mesh.geometry, mesh_id=mesh.mesh_id + 1)


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal P1 values on ``mesh`` with a support annotation.

    Values at vertices outside the closure of ``support`` are meaningless to
    every consumer and are kept at zero by :func:`transfer` and ``restrict``.
    """

    mesh: Mesh
    values: np.ndarray
    support: Region = Region.STATE

    def __post_init__(self):
        v = np.array(self.values)
        if v.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} nodal values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "support", Region(self.support))

    @property
    def mesh_id(self) -> int:
        return self.mesh.mesh_id

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def with_values(self, values) -> "Field":
        return Field(self.mesh, values, self.support)

    def __add__(self, other: "Field") -> "Field":
        _same_mesh(self, other)
        return Field(self.mesh, self.values + other.values, _join(self.support, other.support))

    def __sub__(self, other: "Field") -> "Field":
        _same_mesh(self, other)
        return Field(self.mesh, self.values - other.values, _join(self.support, other.support))

    def __mul__(self, scalar) -> "Field":
        return Field(self.mesh, scalar * self.values, self.support)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.mesh, -self.values, self.support)

    @classmethod
    def zeros(cls, mesh: Mesh, support: Region = Region.STATE, dtype=float) -> "Field":
        return cls(mesh, np.zeros(mesh.n_vertices, dtype=dtype), support)

    @classmethod
    def interpolate(cls, mesh: Mesh, func, support: Region = Region.STATE) -> "Field":
        """Nodal interpolant of ``func(x, y)``, zeroed outside the support closure."""
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        vals = np.asarray(func(x, y)) * np.ones(mesh.n_vertices)
        vals = np.where(mesh.region_vertex_mask(support), vals, 0)
        return cls(mesh, vals, support)


def _same_mesh(f: Field, g: Field):
    if f.mesh is not g.mesh:
        raise ValueError("fields live on different meshes")


def _join(s1: Region, s2: Region) -> Region:
    return s1 if s1 == s2 else Region.STATE


def locate(mesh: Mesh, points: np.ndarray, tol: float = 1e-10):
    """Containing triangle and barycentric coordinates for each point.

    Raises :class:`MeshError` if a point lies outside every triangle by more
    than ``tol`` in barycentric coordinates.
    """
    points = np.asarray(points, float).reshape(-1, 2)
    P = mesh.vertices[mesh.triangles]
    # inverse affine maps: lambda_{1,2} = Minv @ (x - p0)
    d1 = P[:, 1] - P[:, 0]
    d2 = P[:, 2] - P[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    inv = np.stack([np.stack([d2[:, 1], -d2[:, 0]], -1),
                    np.stack([-d1[:, 1], d1[:, 0]], -1)], 1) / det[:, None, None]

    def bary(tri_idx, pts):
        rel = pts - P[tri_idx, 0]
        l12 = np.einsum("nij,nj->ni", inv[tri_idx], rel)
        return np.column_stack([1 - l12.sum(1), l12])

    n = len(points)
    found = np.full(n, -1)
    lam = np.zeros((n, 3))
    k = min(12, mesh.n_triangles)
    _, cand = cKDTree(mesh.centroids).query(points, k=k)
    cand = np.asarray(cand).reshape(n, k)
    for col in range(k):
        todo = np.flatnonzero(found < 0)
        if len(todo) == 0:
            break
        t = cand[todo, col]
        lb = bary(t, points[todo])
        ok = lb.min(axis=1) >= -tol
        found[todo[ok]] = t[ok]
        lam[todo[ok]] = lb[ok]
    for p in np.flatnonzero(found < 0):
        all_t = np.arange(mesh.n_triangles)
        lb = bary(all_t, np.broadcast_to(points[p], (len(all_t), 2)))
        best = int(np.argmax(lb.min(axis=1)))
        if lb[best].min() < -tol:
            raise MeshError(f"point {points[p]} lies outside the source mesh")
        found[p] = best
        lam[p] = lb[best]
    return found, lam


def transfer(field: Field, target: Mesh) -> Field:
    """Nodal P1 interpolation of ``field`` onto the vertices of ``target``."""
    if field.mesh is target:
        return field
    tri, lam = locate(field.mesh, target.vertices)
    vals = np.einsum("ni,ni->n", field.values[field.mesh.triangles[tri]], lam)
    vals = np.where(target.region_vertex_mask(field.support), vals, 0)
    return Field(target, vals, field.support)


# -- plain-text dumps -------------------------------------------------------

def format_mesh(mesh: Mesh) -> list[str]:
    lines = [f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k} {Region(t).name}"
              for (i, j, k), t in zip(mesh.triangles.tolist(), mesh.element_tags.tolist())]
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {BoundaryTag(t).name}"
              for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    return lines


def write_mesh(mesh: Mesh, path) -> Path:
    path = Path(path)
    path.write_text("\n".join(format_mesh(mesh)) + "\n")
    return path


def parse_mesh(lines, geometry: Optional[GeometrySpec] = None, mesh_id: int = 0):
    """Parse a mesh dump; returns ``(mesh, remaining_lines)``."""
    it = iter(lines)

    def section(name):
        head = next(it).split()
        if head[0] != name:
            raise ValueError(f"expected section {name!r}, got {head[0]!r}")
        return [next(it).split() for _ in range(int(head[1]))]

    verts = np.array([[float(a), float(b)] for a, b in section("vertices")]).reshape(-1, 2)
    tri_rows = section("triangles")
    tris = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in tri_rows]).reshape(-1, 3)
    tags = np.array([Region[r[3]] for r in tri_rows], np.int8)
    b_rows = section("boundary_edges")
    bnd = np.array([[int(r[0]), int(r[1])] for r in b_rows]).reshape(-1, 2)
    btags = np.array([BoundaryTag[r[2]] for r in b_rows], np.int8)
    mesh = Mesh(verts, tris, tags, bnd, btags, geometry=geometry, mesh_id=mesh_id)
    return mesh, list(it)


def read_mesh(path, geometry: Optional[GeometrySpec] = None, mesh_id: int = 0) -> Mesh:
    mesh, _ = parse_mesh(Path(path).read_text().splitlines(), geometry, mesh_id)
    return mesh


def write_field(field: Field, path, mesh_name: str = "") -> Path:
    """Mesh dump followed by ``values N`` and per-vertex ``index re im`` lines."""
    path = Path(path)
    vals = np.asarray(field.values, complex)
    lines = [f"mesh {mesh_name or field.mesh_id}", f"support {field.support.name}"]
    lines += format_mesh(field.mesh)
    lines.append(f"values {len(vals)}")
    lines += [f"{i} {v.real!r} {v.imag!r}" for i, v in enumerate(vals.tolist())]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_field(path) -> tuple[str, Field]:
    lines = Path(path).read_text().splitlines()
    mesh_name = lines[0].split(maxsplit=1)[1]
    support = Region[lines[1].split()[1]]
    mesh, rest = parse_mesh(lines[2:])
    n = int(rest[0].split()[1])
    vals = np.zeros(n, complex)
    for row in rest[1:n + 1]:
        i, re, im = row.split()
        vals[int(i)] = complex(float(re), float(im))
    if not np.any(vals.imag):
        vals = vals.real
    return mesh_name, Field(mesh, vals, support)

"""Source-to-observation map, its adjoint, restriction helpers and a norm estimate."""

from __future__ import annotations

import numpy as np

from . import fem
from .geometry import Region
from .mesh import Field, Mesh


def restrict(f: Field, region: Region) -> Field:
    """Zero every vertex outside the closure of ``region`` and re-annotate."""
    region = Region(region)
    mask = f.mesh.region_vertex_mask(region)
    return Field(f.mesh, np.where(mask, f.values, 0), region)


def extend_by_zero(f: Field) -> Field:
    return Field(f.mesh, f.values, Region.STATE)


class HelmholtzOperator:
    """Discrete F (source -> wave field on the measurement zone) and F* on one mesh.

    The forward system uses the outgoing impedance condition, the adjoint the
    conjugate one; both LU factorizations are built lazily, once each.
    """

    def __init__(self, mesh: Mesh, k: float):
        self.mesh = mesh
        self.k = float(k)
        self._fwd = None
        self._adj = None

    @property
    def mesh_id(self) -> int:
        return self.mesh.mesh_id

    @property
    def forward_factorization(self) -> fem.Factorization:
        if self._fwd is None:
            self._fwd = fem.Factorization(fem.assemble_helmholtz(self.mesh, self.k, +1))
        return self._fwd

    @property
    def adjoint_factorization(self) -> fem.Factorization:
        if self._adj is None:
            self._adj = fem.Factorization(fem.assemble_helmholtz(self.mesh, self.k, -1))
        return self._adj

    def factorize(self) -> "HelmholtzOperator":
        """Build both factorizations now rather than on first use."""
        self.forward_factorization
        self.adjoint_factorization
        return self

    def state(self, phi: Field) -> Field:
        """Full wave field u solving the forward problem with source ``phi``."""
        self._check(phi)
        u = self.forward_factorization.solve(fem.assemble_load(self.mesh, phi))
        return Field(self.mesh, u, Region.STATE)

    def forward(self, phi: Field) -> Field:
        if phi.support != Region.SOURCE:
            raise ValueError("forward map expects a source-supported field")
        if phi.is_complex:
            raise ValueError("source must be real")
        return restrict(self.state(phi), Region.MEASUREMENT)

    def adjoint(self, v: Field) -> Field:
        """Re(z) on the source square, with z solving the conjugate-impedance problem."""
        self._check(v)
        if v.support != Region.MEASUREMENT:
            raise ValueError("adjoint map expects a measurement-supported field")
        z = self.adjoint_factorization.solve(fem.assemble_load(self.mesh, v))
        return restrict(Field(self.mesh, z.real, Region.STATE), Region.SOURCE)

    def _check(self, f: Field):
        if f.mesh is not self.mesh:
            raise ValueError("field does not live on the operator's mesh")


def forward_apply(op: HelmholtzOperator, phi: Field) -> Field:
    return op.forward(phi)


def adjoint_apply(op: HelmholtzOperator, v: Field) -> Field:
    return op.adjoint(v)


def random_source(mesh: Mesh, rng: np.random.Generator) -> Field:
    vals = rng.standard_normal(mesh.n_vertices)
    return restrict(Field(mesh, vals, Region.SOURCE), Region.SOURCE)


def random_observation(mesh: Mesh, rng: np.random.Generator) -> Field:
    vals = rng.standard_normal(mesh.n_vertices) + 1j * rng.standard_normal(mesh.n_vertices)
    return restrict(Field(mesh, vals, Region.MEASUREMENT), Region.MEASUREMENT)


def estimate_operator_norm(op: HelmholtzOperator, iterations: int = 50, seed: int = 0,
                           rtol: float = 1e-3, history: list | None = None) -> float:
    """Power iteration on F*F from a seeded random source; returns sqrt of the top eigenvalue.

    Each sweep records ``‖F x‖`` for the current unit vector ``x`` in
    ``history`` (if given); stops once the relative change drops below ``rtol``.
    """
    if iterations < 10:
        raise ValueError("need at least 10 iterations")
    x = random_source(op.mesh, np.random.default_rng(seed))
    nx = fem.norm(x, Region.SOURCE)
    if nx == 0:
        raise ValueError("zero starting vector")
    x = x * (1.0 / nx)
    est = 0.0
    for _ in range(iterations):
        fx = op.forward(x)
        new = fem.norm(fx, Region.MEASUREMENT)
        if history is not None:
            history.append(new)
        y = op.adjoint(fx)
        ny = fem.norm(y, Region.SOURCE)
        if ny == 0:
            return 0.0
        x = y * (1.0 / ny)
        converged = est > 0 and abs(new - est) <= rtol * new
        est = new
        if converged:
            break
    return est

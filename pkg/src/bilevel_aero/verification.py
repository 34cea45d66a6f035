"""Property suites behind ``verify``: adjoint identity, FEM convergence order, Landweber monotonicity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .geometry import GeometrySpec, Region
from .mesh import Field, Mesh, generate_mesh, mesh_size, refine_uniformly, transfer
from .operators import HelmholtzOperator, estimate_operator_norm, random_observation, random_source


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def report(self) -> str:
        body = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({body})"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + " ".join(_fmt(x) for x in v) + "]"
    return str(v)


def smooth_source(x1, x2):
    """Smooth test source on the source square, vanishing on its boundary."""
    return np.cos(np.pi * np.asarray(x1)) * np.cos(np.pi * np.asarray(x2))


def adjoint_check(geom: GeometrySpec | None = None, h: float = 0.27, n_pairs: int = 20,
                  seed: int = 0, tol: float = 1e-6) -> SuiteResult:
    """Largest ``|<Fφ,v> - <φ,F*v>| / (‖φ‖‖v‖‖F‖)`` over seeded random pairs."""
    geom = geom or GeometrySpec()
    mesh = generate_mesh(geom, h)
    op = HelmholtzOperator(mesh, geom.wave_number)
    norm_f = estimate_operator_norm(op, seed=seed)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        phi, v = random_source(mesh, rng), random_observation(mesh, rng)
        lhs = fem.inner_product(op.forward(phi), v, Region.MEASUREMENT)
        rhs = fem.inner_product(phi, op.adjoint(v), Region.SOURCE)
        scale = fem.norm(phi, Region.SOURCE) * fem.norm(v, Region.MEASUREMENT) * norm_f
        worst = max(worst, abs(lhs - rhs) / scale)
    return SuiteResult("adjoint", worst <= tol, {"max_relative_gap": worst, "norm_estimate": norm_f,
                                                 "pairs": n_pairs, "h": mesh_size(mesh)})


def forward_solution(mesh: Mesh, k: float, source=smooth_source) -> Field:
    return HelmholtzOperator(mesh, k).forward(Field.interpolate(mesh, source, Region.SOURCE))


def convergence_check(geom: GeometrySpec | None = None, h0: float = 0.27, levels: int = 3,
                      oracle_refinements: int = 2, expected: float = 2.0, tol: float = 0.3) -> SuiteResult:
    """Observed order of the forward solution on Ω₁ against a nested fine-mesh oracle.

    Working meshes are ``h0`` and its uniform refinements; the oracle is the
    finest working mesh refined ``oracle_refinements`` more times, so every
    coarse nodal field is represented exactly on the oracle mesh.
    """
    geom = geom or GeometrySpec()
    k = geom.wave_number
    meshes = [generate_mesh(geom, h0)]
    for _ in range(levels - 1):
        meshes.append(refine_uniformly(meshes[-1]))
    oracle_mesh = meshes[-1]
    for _ in range(oracle_refinements):
        oracle_mesh = refine_uniformly(oracle_mesh)
    oracle = forward_solution(oracle_mesh, k)
    ref_norm = fem.norm(oracle, Region.MEASUREMENT)
    hs, errs = [], []
    for m in meshes:
        u = transfer(forward_solution(m, k), oracle_mesh)
        hs.append(mesh_size(m))
        errs.append(fem.norm(u - oracle, Region.MEASUREMENT) / ref_norm)
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in range(len(errs) - 1)]
    passed = all(b < a for a, b in zip(errs, errs[1:])) and all(abs(p - expected) <= tol for p in orders)
    return SuiteResult("convergence", passed, {"h": hs, "relative_errors": errs, "orders": orders,
                                               "oracle_h": mesh_size(oracle_mesh)})


def monotonicity_check(geom: GeometrySpec | None = None, h: float = 0.27, steps: int = 100,
                       seed: int = 0, slack: float = 1e-12) -> SuiteResult:
    """Fixed-mesh Landweber with ``mu = 0.9/‖F‖²`` on noisy smooth data; residuals must not grow."""
    from .inversion import add_noise

    geom = geom or GeometrySpec()
    mesh = generate_mesh(geom, h)
    op = HelmholtzOperator(mesh, geom.wave_number)
    mu = 0.9 / estimate_operator_norm(op, seed=seed) ** 2
    y, _ = add_noise(forward_solution(mesh, geom.wave_number), 0.01, seed)
    phi = Field.zeros(mesh, Region.SOURCE)
    residuals = []
    for _ in range(steps + 1):
        v = op.forward(phi) - y
        residuals.append(fem.norm(v, Region.MEASUREMENT))
        phi = phi - mu * op.adjoint(Field(mesh, v.values, Region.MEASUREMENT))
    worst = max(b - a for a, b in zip(residuals, residuals[1:]))
    return SuiteResult("monotonicity", worst <= slack, {"steps": steps, "mu": mu, "max_increase": worst,
                                                        "first": residuals[0], "last": residuals[-1]})


SUITES = {"adjoint": adjoint_check, "convergence": convergence_check, "monotonicity": monotonicity_check}

"""Landweber iteration on a fixed mesh and the bi-level variant with scheduled mesh refinement."""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import fem
from .geometry import Region
from .mesh import Field, Mesh, mesh_size, refine, transfer
from .operators import HelmholtzOperator, estimate_operator_norm

log = logging.getLogger(__name__)


class StopReason(str, enum.Enum):
    DISCREPANCY = "DISCREPANCY"
    ITERATION_CAP = "ITERATION_CAP"


@dataclass
class InversionConfig:
    """Parameters of both Landweber variants.

    ``mu=None`` selects ``0.9 / ‖F‖²`` estimated on the first working mesh.
    The refinement constant is ``C = c_factor / delta``.
    """

    mu: Optional[float] = None
    tau: float = 1.3
    q: float = 2.0 ** (1.0 / 60.0)
    c_factor: float = 1.4
    h0: float = 0.531
    noise_level: float = 0.01
    seed: int = 0
    j_max: int = 5000
    h_min: float = 0.0  # refinement never produces meshes finer than this
    max_vertices: int = 100_000
    refine_enabled: bool = True
    norm_iterations: int = 50
    # units of delta inside the refinement schedule: "percent" of ‖y^δ‖ or "absolute"
    schedule_units: str = "percent"

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError("tau must exceed 1")
        if not self.q > 1:
            raise ValueError("q must exceed 1")
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.j_max < 0:
            raise ValueError("j_max must be non-negative")
        if self.schedule_units not in ("percent", "absolute"):
            raise ValueError("schedule_units must be 'percent' or 'absolute'")

    def schedule_delta(self, delta: float, data_norm: float) -> float:
        """Noise level in the units the refinement schedule works in."""
        if self.schedule_units == "percent":
            return 100.0 * delta / data_norm
        return delta

    def refinement_constant(self, delta: float) -> float:
        return self.c_factor / delta


@dataclass
class IterationRecord:
    j: int
    residual: float
    error: float
    t_refine: float
    t_step: float
    t_residual: float
    mesh_id: int
    h: float

    @property
    def t_total(self) -> float:
        return self.t_refine + self.t_step + self.t_residual


@dataclass
class RefinementEvent:
    j: int
    h_old: float
    h_new: float
    n_vertices: int


@dataclass
class History:
    method: str
    delta: float
    tau: float
    mu: float
    records: list = field(default_factory=list)
    refinement_events: list = field(default_factory=list)
    stop_reason: Optional[StopReason] = None
    final_phi: Optional[Field] = None
    level_iterates: list = field(default_factory=list)  # last iterate on each mesh before refinement

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    @property
    def total_time(self) -> float:
        return self.records[-1].t_total if self.records else 0.0

    @property
    def n_refinements(self) -> int:
        return len(self.refinement_events)


@dataclass
class Problem:
    """Noisy data on the fine data mesh plus what is needed to score reconstructions."""

    k: float
    y_delta: Field
    delta: float
    true_source: Optional[Callable] = None


def add_noise(y: Field, level: float, seed) -> tuple[Field, float]:
    """Complex white noise on measurement vertices, scaled to ``level·‖y‖`` exactly."""
    if not level > 0:
        raise ValueError("noise level must be positive")
    ny = fem.norm(y, Region.MEASUREMENT)
    if ny == 0:
        raise ValueError("relative noise is undefined for zero data")
    mesh = y.mesh
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal(mesh.n_vertices) + 1j * rng.standard_normal(mesh.n_vertices)
    raw = np.where(mesh.region_vertex_mask(Region.MEASUREMENT), raw, 0)
    noise = Field(mesh, raw, Region.MEASUREMENT)
    delta = level * ny
    noise = noise * (delta / fem.norm(noise, Region.MEASUREMENT))
    return Field(mesh, y.values + noise.values, Region.MEASUREMENT), delta


def landweber_step(op: HelmholtzOperator, phi: Field, y_delta: Field, mu: float) -> tuple[Field, float]:
    """One update phi - mu F*(F phi - y); also returns the residual norm before the step."""
    v = op.forward(phi) - y_delta
    res = fem.norm(v, Region.MEASUREMENT)
    v = Field(v.mesh, v.values, Region.MEASUREMENT)
    return phi - mu * op.adjoint(v), res


def discrepancy_met(residual_norm: float, tau: float, delta: float) -> bool:
    return residual_norm <= tau * delta


def refinement_due(j: int, delta: float, C: float, h_current: float, q: float) -> bool:
    """True iff ``j >= (ln delta - ln(C·h)) / ln q``, i.e. C·h has reached the budget delta / q**j."""
    # log form avoids overflow of q**j for large j; the slack absorbs round-off at equality
    return j >= (math.log(delta) - math.log(C * h_current)) / math.log(q) - 1e-9


def _resolve_mu(config: InversionConfig, op: HelmholtzOperator) -> float:
    if config.mu is not None:
        return float(config.mu)
    est = estimate_operator_norm(op, iterations=config.norm_iterations, seed=config.seed)
    return 0.9 / est**2


def _landweber_loop(method, problem, config, mesh, mu, schedule=None) -> History:
    """Shared iteration; ``schedule(j, mesh, delta)`` returns a refined mesh or None."""
    delta = problem.delta
    hist = History(method=method, delta=delta, tau=config.tau, mu=mu)
    op = HelmholtzOperator(mesh, problem.k)
    y = transfer(problem.y_delta, mesh)
    phi = Field.zeros(mesh, Region.SOURCE)
    truth = _truth(problem, mesh)
    t_ref = t_step = t_res = 0.0
    j = 0
    while True:
        if schedule is not None:
            t0 = time.perf_counter()
            new_mesh = schedule(j, mesh, delta)
            if new_mesh is not None:
                hist.level_iterates.append(phi)
                hist.refinement_events.append(
                    RefinementEvent(j, mesh_size(mesh), mesh_size(new_mesh), new_mesh.n_vertices))
                phi = transfer(phi, new_mesh)
                y = transfer(problem.y_delta, new_mesh)
                mesh = new_mesh
                op = HelmholtzOperator(mesh, problem.k).factorize()
                log.info("%s: j=%d refined to h=%.4g (%d vertices)", method, j,
                         mesh_size(mesh), mesh.n_vertices)
            t_ref += time.perf_counter() - t0
            if new_mesh is not None:
                truth = _truth(problem, mesh)

        t0 = time.perf_counter()
        v = op.forward(phi) - y
        res = fem.norm(v, Region.MEASUREMENT)
        t_res += time.perf_counter() - t0

        err = fem.norm(phi - truth, Region.SOURCE) if truth is not None else float("nan")
        hist.records.append(IterationRecord(j, res, err, t_ref, t_step, t_res, mesh.mesh_id, mesh_size(mesh)))

        if discrepancy_met(res, config.tau, delta):
            hist.stop_reason = StopReason.DISCREPANCY
            break
        if j >= config.j_max:
            hist.stop_reason = StopReason.ITERATION_CAP
            break

        t0 = time.perf_counter()
        v = Field(mesh, v.values, Region.MEASUREMENT)
        phi = phi - mu * op.adjoint(v)
        t_step += time.perf_counter() - t0
        j += 1
    hist.level_iterates.append(phi)
    hist.final_phi = phi
    log.info("%s: stopped at j=%d (%s), residual %.4g vs tau*delta %.4g",
             method, j, hist.stop_reason.value, res, config.tau * delta)
    return hist


def _truth(problem: Problem, mesh: Mesh) -> Optional[Field]:
    if problem.true_source is None:
        return None
    return Field.interpolate(mesh, problem.true_source, Region.SOURCE)


def run_direct(problem: Problem, config: InversionConfig, mesh: Mesh) -> History:
    """Landweber from zero on a single fixed mesh until the discrepancy principle holds."""
    mu = _resolve_mu(config, HelmholtzOperator(mesh, problem.k))
    return _landweber_loop("direct", problem, config, mesh, mu)


def run_bilevel(problem: Problem, config: InversionConfig, initial_mesh: Mesh) -> History:
    """Landweber with the mesh halved whenever ``refinement_due`` fires.

    The step size is resolved once on ``initial_mesh`` and kept across levels.
    Refinement is skipped when the halved mesh would be finer than
    ``config.h_min`` or exceed ``config.max_vertices``.
    """
    mu = _resolve_mu(config, HelmholtzOperator(initial_mesh, problem.k))
    delta_s = config.schedule_delta(problem.delta, fem.norm(problem.y_delta, Region.MEASUREMENT))
    C = config.refinement_constant(delta_s) if delta_s > 0 else math.inf
    blocked = False

    def schedule(j, mesh, delta):
        nonlocal blocked
        if not config.refine_enabled or blocked or delta_s <= 0:
            return None
        h = mesh_size(mesh)
        if not refinement_due(j, delta_s, C, h, config.q):
            return None
        if h / 2 < config.h_min:
            blocked = True
            log.info("bilevel: refinement due at j=%d but h/2 < h_min; staying at h=%.4g", j, h)
            return None
        new = refine(mesh, h / 2)
        if new.n_vertices > config.max_vertices:
            blocked = True
            return None
        return new

    return _landweber_loop("bilevel", problem, config, initial_mesh, mu, schedule)

"""Room geometry: rectangles for the source square, buffer strip and scatterers."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised when a geometry violates its containment/disjointness rules."""


class Region(enum.IntEnum):
    SOURCE = 0
    BUFFER = 1
    MEASUREMENT = 2
    STATE = 3  # every non-hole element; only used as a field support


class BoundaryTag(enum.IntEnum):
    OUTER = 0
    SCATTERER = 1


@dataclass(frozen=True)
class Rect:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise GeometryError(f"degenerate rectangle {self}")

    @classmethod
    def square(cls, half_width: float, center=(0.0, 0.0)) -> "Rect":
        cx, cy = center
        return cls(cx - half_width, cx + half_width, cy - half_width, cy + half_width)

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, x, y, strict: bool = False):
        """Pointwise membership; works elementwise on arrays."""
        if strict:
            return (x > self.xmin) & (x < self.xmax) & (y > self.ymin) & (y < self.ymax)
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)

    def inside(self, other: "Rect", strict: bool = False) -> bool:
        """True if self is a subset of ``other`` (of its interior if ``strict``)."""
        if strict:
            return (self.xmin > other.xmin and self.xmax < other.xmax
                    and self.ymin > other.ymin and self.ymax < other.ymax)
        return (self.xmin >= other.xmin and self.xmax <= other.xmax
                and self.ymin >= other.ymin and self.ymax <= other.ymax)

    def intersects_closed(self, other: "Rect") -> bool:
        return not (self.xmax < other.xmin or other.xmax < self.xmin
                    or self.ymax < other.ymin or other.ymax < self.ymin)


DEFAULT_SCATTERERS = (
    Rect(0.60, 0.75, 0.60, 0.75),
    Rect(-0.75, -0.60, 0.60, 0.75),
    Rect(0.60, 0.75, -0.75, -0.60),
)


@dataclass(frozen=True)
class GeometrySpec:
    """Room, source square, buffer square, sound-hard scatterers and wave number.

    ``source_region`` and ``buffer_region`` may be ``None``, in which case every
    element of a generated mesh is tagged ``MEASUREMENT``.
    """

    room: Rect = Rect(-1.0, 1.0, -1.0, 1.0)
    source_region: Optional[Rect] = Rect.square(0.5)
    buffer_region: Optional[Rect] = Rect.square(0.55)
    scatterers: tuple = DEFAULT_SCATTERERS
    wave_number: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        self.validate()

    def validate(self) -> None:
        if self.source_region is not None and not self.source_region.inside(self.room, strict=True):
            raise GeometryError("source region must lie in the interior of the room")
        if self.buffer_region is not None:
            if self.source_region is None or not self.source_region.inside(self.buffer_region):
                raise GeometryError("buffer region must contain the source region")
            if not self.buffer_region.inside(self.room, strict=True):
                raise GeometryError("buffer region must lie in the interior of the room")
            s, b = self.source_region, self.buffer_region
            if not (b.xmin < s.xmin and b.xmax > s.xmax and b.ymin < s.ymin and b.ymax > s.ymax):
                raise GeometryError("measurement zone must be separated from the source region")
        elif self.source_region is not None:
            raise GeometryError("a source region requires a buffer region separating it from the measurement zone")
        guard = self.buffer_region or self.source_region
        for i, s in enumerate(self.scatterers):
            if not s.inside(self.room, strict=True):
                raise GeometryError(f"scatterer {i} must lie in the interior of the room")
            if guard is not None and s.intersects_closed(guard):
                raise GeometryError(f"scatterer {i} touches the buffer region")
            for j in range(i):
                if s.intersects_closed(self.scatterers[j]):
                    raise GeometryError(f"scatterers {j} and {i} overlap or touch")

    @property
    def domain_area(self) -> float:
        """Area of the room minus the scatterer holes."""
        return self.room.area - sum(s.area for s in self.scatterers)

    @property
    def measurement_area(self) -> float:
        inner = self.buffer_region.area if self.buffer_region is not None else 0.0
        return self.domain_area - inner

    def breakpoints(self) -> tuple[list[float], list[float]]:
        """Sorted x and y coordinates of every rectangle edge."""
        rects = [self.room, *self.scatterers]
        rects += [r for r in (self.source_region, self.buffer_region) if r is not None]
        xs = sorted({v for r in rects for v in (r.xmin, r.xmax)})
        ys = sorted({v for r in rects for v in (r.ymin, r.ymax)})
        return xs, ys

    def classify(self, x, y):
        """Region tag of points (element centroids) lying in the domain."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tags = np.full(x.shape, int(Region.MEASUREMENT), dtype=np.int8)
        if self.buffer_region is not None:
            tags[self.buffer_region.contains(x, y)] = Region.BUFFER
        if self.source_region is not None:
            tags[self.source_region.contains(x, y)] = Region.SOURCE
        return tags

    def in_hole(self, x, y):
        out = np.zeros(np.shape(x), dtype=bool)
        for s in self.scatterers:
            out |= s.contains(x, y, strict=True)
        return out

    def on_outer_boundary(self, x, y, tol: float = 1e-12):
        r = self.room
        return ((abs(x - r.xmin) < tol) | (abs(x - r.xmax) < tol)
                | (abs(y - r.ymin) < tol) | (abs(y - r.ymax) < tol))

    def replace(self, **changes) -> "GeometrySpec":
        return dataclasses.replace(self, **changes)


def rects_from_lists(items: Sequence[Sequence[float]]) -> tuple:
    """Build rectangles from ``[xmin, xmax, ymin, ymax]`` lists (config files)."""
    return tuple(Rect(*map(float, it)) for it in items)

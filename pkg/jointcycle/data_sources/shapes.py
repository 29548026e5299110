"""Procedural shape domains.

solids-edges: filled anti-aliased primitives vs their 1-pixel boundaries.
bright-dark:  striped primitives on a dark canvas vs the same kind of scene with the palette inverted.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from ..models import SHAPE_KINDS, ShapeSpec

SUPERSAMPLE = 4
MIN_SIZE = 16

TASK_DOMAINS = {"solids-edges": ("solid", "edge"), "bright-dark": ("bright", "dark")}


def sample_spec(rng: np.random.Generator) -> ShapeSpec:
    kind = SHAPE_KINDS[int(rng.integers(len(SHAPE_KINDS)))]
    spec = ShapeSpec(
        kind=kind,
        cx=float(rng.uniform(0.38, 0.62)),
        cy=float(rng.uniform(0.38, 0.62)),
        half_w=float(rng.uniform(0.12, 0.26)),
        half_h=float(rng.uniform(0.12, 0.26)),
        rotation=float(rng.uniform(0.0, math.pi)),
        intensity=float(rng.uniform(0.2, 1.0)),
        background=float(rng.uniform(-1.0, -0.6)),
    )
    spec.validate()
    return spec


def spec_for_seed(seed: int) -> ShapeSpec:
    return sample_spec(np.random.default_rng(seed))


def _local_vertices(spec: ShapeSpec) -> np.ndarray:
    a, b = spec.half_w, spec.half_h
    if spec.kind == "rectangle":
        return np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
    return np.array([[0.0, -b], [a, b], [-a, b]])


def extent(spec: ShapeSpec) -> tuple[float, float, float, float]:
    """(x_min, x_max, y_min, y_max) of the rotated shape in canvas fractions."""
    c, s = math.cos(spec.rotation), math.sin(spec.rotation)
    if spec.kind == "ellipse":
        ex = math.hypot(spec.half_w * c, spec.half_h * s)
        ey = math.hypot(spec.half_w * s, spec.half_h * c)
        return spec.cx - ex, spec.cx + ex, spec.cy - ey, spec.cy + ey
    v = _local_vertices(spec)
    xs = spec.cx + v[:, 0] * c - v[:, 1] * s
    ys = spec.cy + v[:, 0] * s + v[:, 1] * c
    return float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max())


def check_inside(spec: ShapeSpec) -> None:
    spec.validate()
    x0, x1, y0, y1 = extent(spec)
    if x0 < 0.0 or y0 < 0.0 or x1 > 1.0 or y1 > 1.0:
        raise ValueError(f"{spec.kind} spec extends outside the canvas ({x0:.3f}..{x1:.3f}, {y0:.3f}..{y1:.3f})")


def _local_coords(spec: ShapeSpec, size: int, ss: int) -> tuple[np.ndarray, np.ndarray]:
    u = (np.arange(size * ss) + 0.5) / (size * ss)
    X, Y = np.meshgrid(u, u)
    dx, dy = X - spec.cx, Y - spec.cy
    c, s = math.cos(spec.rotation), math.sin(spec.rotation)
    return dx * c + dy * s, -dx * s + dy * c


def _inside(spec: ShapeSpec, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
    a, b = spec.half_w, spec.half_h
    if a <= 0.0 or b <= 0.0:
        return np.zeros(lx.shape, dtype=bool)
    if spec.kind == "ellipse":
        return (lx / a) ** 2 + (ly / b) ** 2 <= 1.0
    if spec.kind == "rectangle":
        return (np.abs(lx) <= a) & (np.abs(ly) <= b)
    v = _local_vertices(spec)
    inside = np.ones(lx.shape, dtype=bool)
    for i in range(3):
        (x1, y1), (x2, y2) = v[i], v[(i + 1) % 3]
        inside &= (x2 - x1) * (ly - y1) - (y2 - y1) * (lx - x1) >= 0.0
    return inside


def coverage(spec: ShapeSpec, size: int) -> np.ndarray:
    """Per-pixel fraction of the shape's area, from SUPERSAMPLE^2 samples per pixel."""
    if size < MIN_SIZE:
        raise ValueError(f"size must be >= {MIN_SIZE}")
    check_inside(spec)
    lx, ly = _local_coords(spec, size, SUPERSAMPLE)
    mask = _inside(spec, lx, ly).astype(np.float64)
    return mask.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE).mean(axis=(1, 3))


def gen_solid(spec: ShapeSpec, size: int) -> np.ndarray:
    """Anti-aliased filled shape, (1, size, size) float32 in [-1, 1]."""
    cov = coverage(spec, size)
    img = spec.background + (spec.intensity - spec.background) * cov
    return np.clip(img, -1.0, 1.0).astype(np.float32)[None]


def gen_edge(spec: ShapeSpec, size: int) -> np.ndarray:
    """1-pixel inner boundary of the half-coverage mask: edge +1, background -1."""
    mask = coverage(spec, size) >= 0.5
    edge = mask & ~ndimage.binary_erosion(mask, structure=np.ones((3, 3), dtype=bool), border_value=0)
    return np.where(edge, 1.0, -1.0).astype(np.float32)[None]


def _stripes(spec: ShapeSpec, size: int) -> np.ndarray:
    lx, _ = _local_coords(spec, size, 1)
    period = max(spec.half_w, 1e-3) / 2.0
    return 0.15 * np.sin(2.0 * math.pi * lx / period)


def gen_textured(spec: ShapeSpec, size: int, palette: str) -> np.ndarray:
    """Striped shape; "bright" is a light shape on a dark canvas, "dark" inverts the palette."""
    if palette not in ("bright", "dark"):
        raise ValueError(f"unknown palette {palette!r}")
    cov = coverage(spec, size)
    fg = 0.75 + _stripes(spec, size)
    bg = -0.8
    img = bg + (fg - bg) * cov
    if palette == "dark":
        img = -img
    return np.clip(img, -1.0, 1.0).astype(np.float32)[None]


def render(domain: str, spec: ShapeSpec, size: int) -> np.ndarray:
    if domain == "solid":
        return gen_solid(spec, size)
    if domain == "edge":
        return gen_edge(spec, size)
    if domain in ("bright", "dark"):
        return gen_textured(spec, size, domain)
    raise ValueError(f"unknown domain {domain!r}")

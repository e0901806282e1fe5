"""Mapping between human-interpretable body attributes and shape coefficients.

Attributes (height, weight, girth measurements) are measured directly from
the shaped mesh; an :class:`AttributeMap` is an affine model fitted over a
corpus of (beta, attributes) pairs that lets an editor ask for "5 kg more"
and get back the shape coefficients that realize it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bodymodel import BodyModel, Mesh, shaped_template

#: Average human body density, kg/m^3 (bodies float just barely).
BODY_DENSITY = 985.0

#: Measurement heights as fractions of total body height above the lowest point.
CHEST_FRACTION = 0.72
WAIST_FRACTION = 0.62
HIPS_FRACTION = 0.52

ATTRIBUTE_NAMES = ("height", "weight", "chest", "waist", "hips")


class MappingError(Exception):
    pass


def mesh_volume(mesh: Mesh) -> float:
    """Enclosed volume in m^3 via signed tetrahedra against the origin.

    Exact for closed meshes with consistent outward winding; sign flips if
    the winding is inward.
    """
    v = mesh.vertices
    t = v[mesh.faces]  # (F, 3, 3)
    return float(np.einsum("fi,fi->f", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in CCW order."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def slice_circumference(mesh: Mesh, y: float) -> float:
    """Tape-measure girth of the horizontal cross-section at height ``y``.

    Intersects every triangle edge with the plane, then takes the convex
    hull perimeter of the resulting (x, z) points — which is exactly what a
    taut tape measure reads on a convex slice. Returns 0.0 when the plane
    misses the mesh.
    """
    v = mesh.vertices
    pts = []
    for face in mesh.faces:
        for a, b in ((face[0], face[1]), (face[1], face[2]), (face[2], face[0])):
            ya, yb = v[a, 1], v[b, 1]
            if (ya - y) * (yb - y) < 0.0:
                t = (y - ya) / (yb - ya)
                p = v[a] + t * (v[b] - v[a])
                pts.append((p[0], p[2]))
            elif ya == y:
                pts.append((v[a, 0], v[a, 2]))
    if not pts:
        return 0.0
    hull = _convex_hull_2d(np.asarray(pts, dtype=np.float64))
    if len(hull) < 3:
        return 0.0
    closed = np.vstack([hull, hull[:1]])
    return float(np.linalg.norm(np.diff(closed, axis=0), axis=1).sum())


def measure(model: BodyModel, beta) -> dict[str, float]:
    """Attribute dict for a shape: height (m), weight (kg), girths (m).

    Weight is enclosed volume times average body density; girths are taken
    at fixed fractions of total height (chest 0.72, waist 0.62, hips 0.52,
    measured up from the lowest vertex).
    """
    mesh = shaped_template(model, beta)
    y = mesh.vertices[:, 1]
    lo, hi = float(y.min()), float(y.max())
    height = hi - lo
    volume = mesh_volume(mesh)
    if volume < 0:
        raise MappingError("mesh winding is inward; volume is negative")
    return {
        "height": height,
        "weight": volume * BODY_DENSITY,
        "chest": slice_circumference(mesh, lo + CHEST_FRACTION * height),
        "waist": slice_circumference(mesh, lo + WAIST_FRACTION * height),
        "hips": slice_circumference(mesh, lo + HIPS_FRACTION * height),
    }


@dataclass(frozen=True)
class AttributeMap:
    """Affine map from normalized attributes to shape coefficients.

    beta = beta0 + A @ (attrs - attr_mean) / attr_scale

    ``attr_min``/``attr_max`` record the corpus range of each attribute so
    UIs can bound their sliders to values the fit has actually seen.
    """

    names: tuple[str, ...]
    beta0: np.ndarray  # (B,)
    matrix: np.ndarray  # (B, K)
    attr_mean: np.ndarray  # (K,)
    attr_scale: np.ndarray  # (K,)
    attr_min: np.ndarray  # (K,)
    attr_max: np.ndarray  # (K,)

    @property
    def num_betas(self) -> int:
        return self.beta0.shape[0]

    def normalize(self, attrs: np.ndarray) -> np.ndarray:
        return (attrs - self.attr_mean) / self.attr_scale

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "beta0": self.beta0.tolist(),
            "matrix": self.matrix.tolist(),
            "attr_mean": self.attr_mean.tolist(),
            "attr_scale": self.attr_scale.tolist(),
            "attr_min": self.attr_min.tolist(),
            "attr_max": self.attr_max.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeMap":
        try:
            return cls(
                names=tuple(d["names"]),
                beta0=np.asarray(d["beta0"], dtype=np.float64),
                matrix=np.asarray(d["matrix"], dtype=np.float64),
                attr_mean=np.asarray(d["attr_mean"], dtype=np.float64),
                attr_scale=np.asarray(d["attr_scale"], dtype=np.float64),
                attr_min=np.asarray(d["attr_min"], dtype=np.float64),
                attr_max=np.asarray(d["attr_max"], dtype=np.float64),
            )
        except KeyError as exc:
            raise MappingError(f"attribute map is missing field {exc}") from exc


def save_map(amap: AttributeMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(amap.to_dict(), indent=2))


def load_map(path: str | Path) -> AttributeMap:
    return AttributeMap.from_dict(json.loads(Path(path).read_text()))


def fit_attribute_map(
    betas: np.ndarray,
    attributes: np.ndarray,
    names=ATTRIBUTE_NAMES,
    ridge: float = 1e-4,
) -> AttributeMap:
    """Ridge least-squares fit of beta as an affine function of attributes.

    Attributes are standardized (zero mean, unit std) before fitting so the
    ridge penalty treats kilograms and meters alike; the intercept is not
    penalized. With ``ridge=0`` and an exactly affine corpus of full rank
    the fit is exact.
    """
    betas = np.asarray(betas, dtype=np.float64)
    attributes = np.asarray(attributes, dtype=np.float64)
    n, k = attributes.shape
    if betas.shape[0] != n:
        raise MappingError("betas and attributes have different corpus sizes")
    if len(names) != k:
        raise MappingError(f"{k} attribute columns but {len(names)} names")
    if n < k + 1:
        raise MappingError(f"need at least {k + 1} samples to fit, got {n}")

    mean = attributes.mean(axis=0)
    scale = attributes.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    x = (attributes - mean) / scale

    design = np.hstack([np.ones((n, 1)), x])
    penalty = ridge * np.eye(k + 1)
    penalty[0, 0] = 0.0
    coef = np.linalg.solve(design.T @ design + penalty, design.T @ betas)

    return AttributeMap(
        names=tuple(names),
        beta0=coef[0],
        matrix=coef[1:].T,
        attr_mean=mean,
        attr_scale=scale,
        attr_min=attributes.min(axis=0),
        attr_max=attributes.max(axis=0),
    )


def build_measurement_corpus(
    model: BodyModel, n: int = 200, spread: float = 1.5, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Sample shape coefficients and measure each one: (betas, attributes)."""
    rng = np.random.default_rng(seed)
    betas = rng.uniform(-spread, spread, size=(n, model.num_betas))
    attrs = np.array(
        [[measure(model, b)[name] for name in ATTRIBUTE_NAMES] for b in betas]
    )
    return betas, attrs


def solve_beta(amap: AttributeMap, attrs: dict[str, float]) -> np.ndarray:
    """Shape coefficients for a full set of target attribute values."""
    missing = [n for n in amap.names if n not in attrs]
    if missing:
        raise MappingError(f"missing attribute values: {missing}")
    vec = np.array([float(attrs[n]) for n in amap.names])
    return amap.beta0 + amap.matrix @ amap.normalize(vec)


def attributes_to_beta(
    model: BodyModel,
    amap: AttributeMap,
    beta,
    edits: dict[str, float],
) -> np.ndarray:
    """New shape coefficients realizing attribute edits on a current shape.

    ``edits`` holds absolute target values (e.g. ``{"weight": 82.0}``);
    unedited attributes are measured from the current shape and held fixed.
    """
    unknown = [n for n in edits if n not in amap.names]
    if unknown:
        raise MappingError(f"unknown attributes: {unknown}")
    current = measure(model, beta)
    target = {**current, **{k: float(v) for k, v in edits.items()}}
    return solve_beta(amap, target)

"""Depth rendering: camera projection, z-buffer rasterization, and the
inverted-depth conditioning images consumed by the generation backend.

Conventions: camera space is right-handed with x right, y down, z forward
(into the screen); only geometry with z > 0 is visible. Image row 0 is the
top of the frame. The body model is y-up, so the default camera includes
the half-turn about x that flips it into view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from ._kernels import rasterize
from .bodymodel import Mesh

DEFAULT_WIDTH = 768
DEFAULT_HEIGHT = 1024


class RenderError(Exception):
    pass


def _flip_yz() -> np.ndarray:
    # half-turn about x: world y-up becomes camera y-down
    return np.diag([1.0, -1.0, -1.0])


@dataclass(frozen=True)
class Camera:
    """Pinhole or weak-perspective camera.

    ``kind`` is "pinhole" (u = fx*x/z + cx) or "weak_perspective"
    (u = fx*x + cx, no depth division; fx/fy are then pixels per meter).
    ``rotation``/``translation`` map world points into camera space:
    p_cam = R @ p_world + t.
    """

    kind: str
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.kind not in ("pinhole", "weak_perspective"):
            raise RenderError(f"unknown camera kind {self.kind!r}")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise RenderError("rotation must be (3, 3) and translation (3,)")

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World points -> (pixel xy (N, 2), camera-space depth z (N,)).

        Pinhole projection of points at or behind the camera plane (z <= 0)
        is meaningless; callers cull on the returned z before rasterizing.
        """
        cam = self.world_to_camera(points)
        x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
        if self.kind == "pinhole":
            with np.errstate(divide="ignore", invalid="ignore"):
                u = self.fx * x / z + self.cx
                v = self.fy * y / z + self.cy
        else:
            u = self.fx * x + self.cx
            v = self.fy * y + self.cy
        return np.stack([u, v], axis=1), z

    def pixel_ray(self, u: float, v: float) -> tuple[np.ndarray, np.ndarray]:
        """Camera-space ray through an image position, as (origin, direction)."""
        if self.kind == "pinhole":
            origin = np.zeros(3)
            direction = np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])
        else:
            origin = np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 0.0])
            direction = np.array([0.0, 0.0, 1.0])
        return origin, direction

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            kind=d["kind"],
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            rotation=np.asarray(d.get("rotation", np.eye(3).tolist())),
            translation=np.asarray(d.get("translation", [0.0, 0.0, 0.0])),
        )


def frame_body_camera(
    mesh: Mesh,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    kind: str = "pinhole",
    distance: float = 2.5,
    fill: float = 0.85,
) -> Camera:
    """Camera that views a y-up mesh frontally, filling ``fill`` of the frame."""
    v = np.asarray(mesh.vertices, dtype=np.float64)
    center = (v.min(axis=0) + v.max(axis=0)) / 2.0
    extent = v.max(axis=0) - v.min(axis=0)
    extent = np.maximum(extent, 1e-6)

    rotation = _flip_yz()
    translation = -rotation @ center + np.array([0.0, 0.0, distance])

    if kind == "pinhole":
        f = distance * fill * min(width / extent[0], height / extent[1])
        return Camera("pinhole", f, f, width / 2.0, height / 2.0, rotation, translation)
    s = fill * min(width / extent[0], height / extent[1])
    return Camera("weak_perspective", s, s, width / 2.0, height / 2.0, rotation, translation)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel camera-space depth in meters; 0 marks background.

    ``owner`` is the index of the winning triangle (-1 on background),
    kept for silhouette/edge analysis.
    """

    depth: np.ndarray  # (H, W) float64
    owner: np.ndarray  # (H, W) int32

    @property
    def foreground(self) -> np.ndarray:
        return self.owner >= 0

    def __post_init__(self):
        fg = self.owner >= 0
        if np.any(self.depth[fg] <= 0.0):
            raise RenderError("foreground depth must be positive")
        if np.any(self.depth[~fg] != 0.0):
            raise RenderError("background depth must be exactly zero")


def render_depth(
    mesh: Mesh,
    camera: Camera,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    near: float = 1e-6,
) -> DepthMap:
    """Rasterize a mesh into a DepthMap.

    Triangles with any vertex at z <= near are dropped whole (no clipping);
    bodies are expected to sit entirely in front of the camera. Pinhole
    depth interpolates 1/z across triangles, so planar surfaces rasterize
    to their exact ray-cast depth under both camera kinds.
    """
    xy, z = camera.project(mesh.vertices)
    keep = np.all(z[mesh.faces] > near, axis=1)
    faces = np.ascontiguousarray(mesh.faces[keep], dtype=np.int32)

    with np.errstate(divide="ignore", invalid="ignore"):
        attr = -1.0 / z if camera.kind == "pinhole" else z
    # vertices that only belong to culled faces may project to inf/nan;
    # they are never read by the kernel, which still insists on finite input
    xy = np.where(np.isfinite(xy), xy, 0.0)
    attr = np.where(np.isfinite(attr), attr, 0.0)

    value, owner = rasterize(xy, attr, faces, width, height)

    fg = owner >= 0
    depth = np.zeros((height, width), dtype=np.float64)
    if camera.kind == "pinhole":
        depth[fg] = -1.0 / value[fg]
    else:
        depth[fg] = value[fg]
    return DepthMap(depth=depth, owner=owner)


def depth_to_conditioning(depth_map: DepthMap) -> np.ndarray:
    """8-bit inverted-depth image: nearest surface 255, farthest 1, background 0.

    This is the conditioning format the generation backend consumes —
    brightness encodes proximity, and 0 is reserved for empty pixels.
    """
    fg = depth_map.foreground
    img = np.zeros(depth_map.depth.shape, dtype=np.uint8)
    if not fg.any():
        return img
    d = depth_map.depth[fg]
    dmin, dmax = float(d.min()), float(d.max())
    if dmax == dmin:
        img[fg] = 255
        return img
    scaled = 1.0 + 254.0 * (dmax - d) / (dmax - dmin)
    img[fg] = np.round(scaled).astype(np.uint8)
    return img


def render_conditioning(
    mesh: Mesh,
    camera: Camera | None = None,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
) -> tuple[np.ndarray, DepthMap]:
    """Mesh straight to conditioning image (with its DepthMap for callers
    that also want metric depth). Frames the body automatically when no
    camera is given."""
    if camera is None:
        camera = frame_body_camera(mesh, width, height)
    dm = render_depth(mesh, camera, width, height)
    return depth_to_conditioning(dm), dm


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------


def save_depth_png(depth_map: DepthMap, path: str | Path) -> None:
    """16-bit grayscale PNG in millimeters (clipped at 65.535 m)."""
    mm = np.round(depth_map.depth * 1000.0)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    if not cv2.imwrite(str(path), mm):
        raise RenderError(f"could not write {path}")


def load_depth_png(path: str | Path) -> np.ndarray:
    """Depth in meters from a 16-bit millimeter PNG."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise RenderError(f"could not read {path}")
    if raw.dtype != np.uint16 or raw.ndim != 2:
        raise RenderError(f"{path} is not a 16-bit grayscale depth image")
    return raw.astype(np.float64) / 1000.0


def save_gray_png(image: np.ndarray, path: str | Path) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 2:
        raise RenderError("expected an 8-bit grayscale image")
    if not cv2.imwrite(str(path), image):
        raise RenderError(f"could not write {path}")


def load_gray_png(path: str | Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise RenderError(f"could not read {path}")
    return img

"""Parametric body model: shape blendshapes, pose blendshapes, joint
regression, and linear blend skinning.

The model is a fixed-topology mesh driven by low-dimensional shape
coefficients ``beta`` (one scale per shape blendshape) and per-joint
axis-angle rotations ``theta``. All geometry is in meters; the vertical
axis is +y.

Real (licensed) model assets are loaded from the container format
documented in :func:`load_model`; :func:`make_test_model` builds a small
license-free stand-in used throughout the test suite.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"BODYMDL\n"
FORMAT_VERSION = 1

# arrays every container must provide, with expected dtype codes
_ARRAY_SPECS = {
    "template_vertices": "<f4",
    "faces": "<i4",
    "shape_dirs": "<f4",
    "pose_dirs": "<f4",
    "joint_regressor": "<f4",
    "skin_weights": "<f4",
    "parents": "<i4",
}

_ROW_SUM_TOL = 1e-6


class ModelError(Exception):
    """Base error for body-model loading and validation."""


class MalformedContainerError(ModelError):
    """Container bytes do not match the documented layout."""


class InvalidModelError(ModelError):
    """Arrays are structurally present but violate a model invariant."""


class DimensionMismatchError(ModelError):
    """Parameter or array dimensions do not match the model."""


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh sharing the topology of the model that produced it."""

    vertices: np.ndarray  # (V, 3) float64, meters
    faces: np.ndarray  # (F, 3) int32 vertex indices

    def translated(self, offset) -> "Mesh":
        return Mesh(self.vertices + np.asarray(offset, dtype=np.float64), self.faces)


@dataclass(frozen=True)
class BodyModel:
    """Immutable parametric body model.

    Attributes
    ----------
    template_vertices : (V, 3) mean-shape mesh, meters
    faces : (F, 3) triangle indices
    shape_dirs : (V, 3, B) per-unit-beta vertex displacement
    pose_dirs : (V, 3, 9*(J-1)) displacement per rotation-matrix element
        of the non-root joints, flattened row-major as vec(R - I)
    joint_regressor : (J, V) rows summing to 1
    skin_weights : (V, J) non-negative rows summing to 1
    parents : (J,) kinematic tree, root entry -1
    """

    template_vertices: np.ndarray
    faces: np.ndarray
    shape_dirs: np.ndarray
    pose_dirs: np.ndarray
    joint_regressor: np.ndarray
    skin_weights: np.ndarray
    parents: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def num_joints(self) -> int:
        return self.joint_regressor.shape[0]

    @property
    def num_betas(self) -> int:
        return self.shape_dirs.shape[2]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def validate(self) -> None:
        """Check every structural invariant; raise with the failing index."""
        v, j, b = self.num_vertices, self.num_joints, self.num_betas
        if self.template_vertices.shape != (v, 3):
            raise InvalidModelError("template_vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise InvalidModelError("faces must be (F, 3)")
        if self.shape_dirs.shape != (v, 3, b):
            raise InvalidModelError(
                f"shape_dirs shape {self.shape_dirs.shape} != {(v, 3, b)}"
            )
        if self.pose_dirs.shape != (v, 3, 9 * (j - 1)):
            raise InvalidModelError(
                f"pose_dirs shape {self.pose_dirs.shape} != {(v, 3, 9 * (j - 1))}"
            )
        if self.joint_regressor.shape != (j, v):
            raise InvalidModelError("joint_regressor must be (J, V)")
        if self.skin_weights.shape != (v, j):
            raise InvalidModelError("skin_weights must be (V, J)")
        if self.parents.shape != (j,):
            raise InvalidModelError("parents must be (J,)")

        for name, arr in (
            ("template_vertices", self.template_vertices),
            ("shape_dirs", self.shape_dirs),
            ("pose_dirs", self.pose_dirs),
            ("joint_regressor", self.joint_regressor),
            ("skin_weights", self.skin_weights),
        ):
            if not np.all(np.isfinite(arr)):
                raise InvalidModelError(f"{name} contains non-finite entries")

        if self.faces.min(initial=0) < 0 or self.faces.max(initial=-1) >= v:
            bad = np.argwhere((self.faces < 0) | (self.faces >= v))
            raise InvalidModelError(f"face {bad[0][0]} references vertex out of range")

        if np.any(self.skin_weights < -1e-12):
            row = int(np.argwhere(self.skin_weights < -1e-12)[0][0])
            raise InvalidModelError(f"skin_weights row {row} has a negative weight")
        sums = self.skin_weights.sum(axis=1)
        bad = np.abs(sums - 1.0) > _ROW_SUM_TOL
        if np.any(bad):
            row = int(np.argmax(bad))
            raise InvalidModelError(
                f"skin_weights row {row} sums to {sums[row]:.6g}, expected 1"
            )
        sums = self.joint_regressor.sum(axis=1)
        bad = np.abs(sums - 1.0) > _ROW_SUM_TOL
        if np.any(bad):
            row = int(np.argmax(bad))
            raise InvalidModelError(
                f"joint_regressor row {row} sums to {sums[row]:.6g}, expected 1"
            )

        _check_tree(self.parents)


def _check_tree(parents: np.ndarray) -> None:
    """parents must encode a single-rooted acyclic tree."""
    j = len(parents)
    roots = np.flatnonzero(parents < 0)
    if len(roots) != 1:
        raise InvalidModelError(f"expected exactly one root, found {len(roots)}")
    if roots[0] != 0:
        raise InvalidModelError("root joint must be index 0")
    for i in range(1, j):
        p = int(parents[i])
        if p >= j:
            raise InvalidModelError(f"joint {i} has out-of-range parent {p}")
        # walk to root; a cycle would never terminate within j hops
        seen = 0
        k = i
        while k != 0:
            k = int(parents[k])
            seen += 1
            if k < 0 or seen > j:
                raise InvalidModelError(f"joint {i} is not connected to the root")


def _validate_beta(model: BodyModel, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != model.num_betas:
        raise DimensionMismatchError(
            f"beta has length {beta.shape[0]}, model expects {model.num_betas}"
        )
    if not np.all(np.isfinite(beta)):
        raise DimensionMismatchError("beta contains non-finite entries")
    return beta


def _validate_theta(model: BodyModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    j = model.num_joints
    if theta.size != 3 * j:
        raise DimensionMismatchError(
            f"theta has {theta.size} entries, model expects {3 * j}"
        )
    theta = theta.reshape(j, 3)
    if not np.all(np.isfinite(theta)):
        raise DimensionMismatchError("theta contains non-finite entries")
    return theta


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------

_SERIES_CUTOFF = 1e-8


def rotation_from_axis_angle(rotvec: np.ndarray) -> np.ndarray:
    """Rodrigues rotation for one axis-angle vector.

    Below angle 1e-8 the sin/angle and (1-cos)/angle^2 coefficients switch
    to their Taylor series so small rotations stay numerically exact.
    """
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = float(np.linalg.norm(rotvec))
    x, y, z = rotvec
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    if theta < _SERIES_CUTOFF:
        # sin(t)/t ~ 1 - t^2/6, (1-cos t)/t^2 ~ 1/2 - t^2/24
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def _rotations(theta: np.ndarray) -> np.ndarray:
    return np.stack([rotation_from_axis_angle(r) for r in theta])


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def shaped_template(model: BodyModel, beta) -> Mesh:
    """Template plus the beta-weighted sum of shape blendshapes."""
    beta = _validate_beta(model, beta)
    vertices = model.template_vertices + model.shape_dirs @ beta
    return Mesh(vertices, model.faces)


def regress_joints(model: BodyModel, vertices: np.ndarray) -> np.ndarray:
    """Joint positions as the regressor-weighted vertex average, (J, 3)."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.shape != (model.num_vertices, 3):
        raise DimensionMismatchError(
            f"vertices shape {vertices.shape} != {(model.num_vertices, 3)}"
        )
    return model.joint_regressor @ vertices


def pose_blend_offsets(model: BodyModel, theta) -> np.ndarray:
    """Pose-corrective vertex offsets, linear in vec(R_j - I) of non-root joints."""
    theta = _validate_theta(model, theta)
    rots = _rotations(theta[1:])
    feature = (rots - np.eye(3)).reshape(-1)  # row-major per joint
    return model.pose_dirs @ feature


def global_joint_transforms(
    model: BodyModel, joints: np.ndarray, rotations: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Forward kinematics along ``parents``.

    Returns (R_global, t_global): per-joint world rotation (J, 3, 3) and the
    posed joint position (J, 3). Joint j's local frame rotates about its own
    rest position.
    """
    j = model.num_joints
    r_glob = np.empty((j, 3, 3))
    t_glob = np.empty((j, 3))
    r_glob[0] = rotations[0]
    t_glob[0] = joints[0]
    for i in range(1, j):
        p = int(model.parents[i])
        r_glob[i] = r_glob[p] @ rotations[i]
        t_glob[i] = r_glob[p] @ (joints[i] - joints[p]) + t_glob[p]
    return r_glob, t_glob


def skin(model: BodyModel, beta, theta, translation=None) -> Mesh:
    """Full posing pipeline: shape, pose correctives, FK, blended skinning.

    With ``theta`` all zero the result equals ``shaped_template(beta)``. The
    optional ``translation`` shifts the result rigidly (used to place the
    body in front of a camera).
    """
    beta = _validate_beta(model, beta)
    theta = _validate_theta(model, theta)

    base = shaped_template(model, beta)
    joints = regress_joints(model, base.vertices)
    rots = _rotations(theta)

    feature = (rots[1:] - np.eye(3)).reshape(-1)
    v_posed = base.vertices + model.pose_dirs @ feature

    r_glob, t_glob = global_joint_transforms(model, joints, rots)

    # per-vertex blend of rigid transforms: v' = sum_j w_vj (R_j (v - j_rest) + t_j)
    # Stored weights are only approximately normalized (they may come from a
    # float32 container); renormalizing here keeps the zero-pose identity
    # exact instead of leaking |v| * (row_sum - 1) into every vertex.
    w = model.skin_weights / model.skin_weights.sum(axis=1, keepdims=True)
    rel = v_posed[:, None, :] - joints[None, :, :]  # (V, J, 3)
    rotated = np.einsum("jab,vjb->vja", r_glob, rel) + t_glob[None, :, :]
    vertices = np.einsum("vj,vja->va", w, rotated)

    if translation is not None:
        vertices = vertices + np.asarray(translation, dtype=np.float64)
    return Mesh(vertices, model.faces)


# ---------------------------------------------------------------------------
# Test model
# ---------------------------------------------------------------------------

_RING_HEIGHTS = np.array([1.70, 1.55, 1.40, 1.15, 0.95, 0.80, 0.45, 0.05])
_RING_RADII = np.array([0.055, 0.075, 0.160, 0.150, 0.130, 0.155, 0.100, 0.070])
_JOINT_RINGS = (5, 3, 2, 1)  # pelvis, chest, neck, head
_Z_SQUASH = 0.7
_N_COLS = 8


def make_test_model(seed: int = 0) -> BodyModel:
    """Small deterministic body-like model: V=64, J=4, B=4.

    Eight rings of eight vertices form a closed generalized cylinder (the
    end rings are fan-capped), with a vaguely humanoid radius profile.
    Shape blendshapes: 0 overall girth, 1 vertical stretch, 2 chest bulge,
    3 hip bulge, each with a small seeded perturbation so distinct seeds
    give distinct models. All arrays are built in float32 and therefore
    byte-identical across platforms for a given seed.
    """
    rng = np.random.default_rng(seed)
    n_rings = len(_RING_HEIGHTS)

    angles = 2.0 * np.pi * np.arange(_N_COLS) / _N_COLS
    jitter = 1.0 + 0.02 * rng.standard_normal((n_rings, _N_COLS))
    verts = np.empty((n_rings * _N_COLS, 3), dtype=np.float64)
    for r in range(n_rings):
        radius = _RING_RADII[r] * jitter[r]
        i = r * _N_COLS
        verts[i : i + _N_COLS, 0] = radius * np.cos(angles)
        verts[i : i + _N_COLS, 1] = _RING_HEIGHTS[r]
        verts[i : i + _N_COLS, 2] = radius * np.sin(angles) * _Z_SQUASH

    faces = []
    for r in range(n_rings - 1):
        a = r * _N_COLS
        b = (r + 1) * _N_COLS
        for c in range(_N_COLS):
            c2 = (c + 1) % _N_COLS
            # outward orientation: rings are ordered top to bottom
            faces.append((a + c, a + c2, b + c))
            faces.append((a + c2, b + c2, b + c))
    # fan caps over the first and last rings keep the surface closed
    for c in range(1, _N_COLS - 1):
        faces.append((0, c + 1, c))  # top cap, normal up
    bottom = (n_rings - 1) * _N_COLS
    for c in range(1, _N_COLS - 1):
        faces.append((bottom, bottom + c, bottom + c + 1))  # bottom cap, normal down
    faces = np.asarray(faces, dtype=np.int32)

    v = verts.shape[0]
    y = verts[:, 1]

    shape_dirs = np.zeros((v, 3, 4), dtype=np.float64)
    shape_dirs[:, 0, 0] = 0.10 * verts[:, 0]  # girth: radial in x/z
    shape_dirs[:, 2, 0] = 0.10 * verts[:, 2]
    shape_dirs[:, 1, 1] = 0.10 * y  # height: vertical stretch
    chest = np.exp(-(((y - 1.15) / 0.18) ** 2))
    hips = np.exp(-(((y - 0.80) / 0.18) ** 2))
    shape_dirs[:, 0, 2] = 0.08 * chest * verts[:, 0]
    shape_dirs[:, 2, 2] = 0.08 * chest * verts[:, 2]
    shape_dirs[:, 0, 3] = 0.08 * hips * verts[:, 0]
    shape_dirs[:, 2, 3] = 0.08 * hips * verts[:, 2]
    shape_dirs += 0.001 * rng.standard_normal(shape_dirs.shape)

    n_joints = len(_JOINT_RINGS)
    regressor = np.zeros((n_joints, v), dtype=np.float64)
    joint_y = np.empty(n_joints)
    for j, ring in enumerate(_JOINT_RINGS):
        regressor[j, ring * _N_COLS : (ring + 1) * _N_COLS] = 1.0 / _N_COLS
        joint_y[j] = _RING_HEIGHTS[ring]

    # smooth skinning: linear falloff between adjacent joints along y
    order = np.argsort(joint_y)  # pelvis .. head, ascending
    weights = np.zeros((v, n_joints), dtype=np.float64)
    for i, yy in enumerate(y):
        if yy <= joint_y[order[0]]:
            weights[i, order[0]] = 1.0
        elif yy >= joint_y[order[-1]]:
            weights[i, order[-1]] = 1.0
        else:
            for k in range(len(order) - 1):
                lo, hi = joint_y[order[k]], joint_y[order[k + 1]]
                if lo <= yy <= hi:
                    t = (yy - lo) / (hi - lo)
                    weights[i, order[k]] = 1.0 - t
                    weights[i, order[k + 1]] = t
                    break

    pose_dirs = 0.002 * rng.standard_normal((v, 3, 9 * (n_joints - 1)))
    parents = np.array([-1, 0, 1, 2], dtype=np.int32)

    # float32 round trip for cross-platform byte identity
    model = BodyModel(
        template_vertices=verts.astype(np.float32).astype(np.float64),
        faces=faces,
        shape_dirs=shape_dirs.astype(np.float32).astype(np.float64),
        pose_dirs=pose_dirs.astype(np.float32).astype(np.float64),
        joint_regressor=regressor.astype(np.float32).astype(np.float64),
        skin_weights=weights.astype(np.float32).astype(np.float64),
        parents=parents,
    )
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Container I/O
# ---------------------------------------------------------------------------
#
# Layout: 8-byte magic, uint32 little-endian header length, JSON header,
# then raw array blocks. The header records dims and, per array, name,
# shape, dtype and byte offset relative to the end of the header. Floats
# are little-endian float32, indices little-endian int32.


def save_model(model: BodyModel, path: str | Path) -> None:
    """Write the documented container format."""
    arrays = {}
    offset = 0
    blocks = []
    for name, code in _ARRAY_SPECS.items():
        arr = np.ascontiguousarray(getattr(model, name), dtype=np.dtype(code))
        raw = arr.tobytes()
        arrays[name] = {
            "shape": list(arr.shape),
            "dtype": code,
            "offset": offset,
        }
        blocks.append(raw)
        offset += len(raw)

    header = {
        "version": FORMAT_VERSION,
        "dims": {
            "V": model.num_vertices,
            "F": model.num_faces,
            "J": model.num_joints,
            "B": model.num_betas,
        },
        "arrays": arrays,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(header_bytes)))
    buf.write(header_bytes)
    for raw in blocks:
        buf.write(raw)

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def load_model(path: str | Path) -> BodyModel:
    """Load and validate a model container.

    Raises FileNotFoundError for a missing file, MalformedContainerError for
    structural problems, InvalidModelError (with the failing row) for
    invariant violations.
    """
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise MalformedContainerError("bad magic string")
    (header_len,) = struct.unpack_from("<I", data, len(MAGIC))
    header_start = len(MAGIC) + 4
    if header_start + header_len > len(data):
        raise MalformedContainerError("truncated header")
    try:
        header = json.loads(data[header_start : header_start + header_len])
    except json.JSONDecodeError as exc:
        raise MalformedContainerError(f"unparseable header: {exc}") from exc
    if header.get("version") != FORMAT_VERSION:
        raise MalformedContainerError(f"unsupported version {header.get('version')!r}")

    body = data[header_start + header_len :]
    fields = {}
    for name, code in _ARRAY_SPECS.items():
        meta = header.get("arrays", {}).get(name)
        if meta is None:
            raise MalformedContainerError(f"missing array {name!r}")
        if meta.get("dtype") != code:
            raise MalformedContainerError(f"array {name!r} has dtype {meta.get('dtype')!r}")
        shape = tuple(int(s) for s in meta["shape"])
        nbytes = int(np.prod(shape)) * 4
        off = int(meta["offset"])
        if off < 0 or off + nbytes > len(body):
            raise MalformedContainerError(f"array block {name!r} is truncated")
        arr = np.frombuffer(body, dtype=np.dtype(code), count=int(np.prod(shape)), offset=off)
        arr = arr.reshape(shape)
        if code == "<f4":
            fields[name] = arr.astype(np.float64)
        else:
            fields[name] = arr.astype(np.int32)

    model = BodyModel(**fields)
    model.validate()
    return model


def inspect_model(path: str | Path) -> dict:
    """Dims plus invariant-check outcome, for the CLI."""
    model = load_model(path)
    return {
        "V": model.num_vertices,
        "F": model.num_faces,
        "J": model.num_joints,
        "B": model.num_betas,
        "invariants": "ok",
    }

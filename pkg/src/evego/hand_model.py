"""Parametric hand rig: shape and pose blendshapes, joint regression, and
linear blend skinning, mapping (theta, beta, trans, rot) to joints and
vertices.

The forward pass is written against the backend dispatch functions in
:mod:`evego.autodiff`, so the same code runs on plain float64 arrays (fast
inference path) and on tape tensors (training path) without duplication.

Licensed rig assets are not bundled. The container format below carries any
compatible rig, and :func:`make_synthetic_rig` builds a procedural stand-in
with the same topology conventions (16 internal joints, 15 posed joints,
PCA pose coefficients) for tests and demos.

Rig container (little endian, extension ``.hrig``):

========  =======================================================
bytes     meaning
========  =======================================================
4         magic ``HRIG``
u32       version (1)
u32       section count
per section:
  u8        name length, then that many ASCII bytes
  u8        ndim, then ndim x u32 dims
  f64 * n   payload, C order (index sections are stored as f64
            and cast back on load)
========  =======================================================
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import BinaryIO

import numpy as np

from . import autodiff as ad
from .errors import (
    InvariantViolationError,
    NonFiniteError,
    ParseError,
    ShapeMismatchError,
)
from .events import SensorGeometry
from .masks import HandMask

RIG_MAGIC = b"HRIG"
RIG_VERSION = 1

POSE_COEFFS = 15
SHAPE_COEFFS = 10
OUTPUT_JOINTS = 20
FINGERTIP_COUNT = 5

_SMALL_ANGLE_SQ = 1e-16  # series branch below angle 1e-8

# x-reflection sign patterns used by the mirror helpers
_MIRROR_XYZ = np.array([-1.0, 1.0, 1.0])
_MIRROR_AXIS_ANGLE = np.array([1.0, -1.0, -1.0])


@dataclass(eq=False)
class HandRig:
    """Immutable-by-convention rig bundle; validated on construction."""

    template_vertices: np.ndarray  # (V, 3) meters
    shape_dirs: np.ndarray         # (V, 3, 10)
    pose_dirs: np.ndarray          # (V, 3, 9*(J-1))
    joint_regressor: np.ndarray    # (J, V)
    skinning_weights: np.ndarray   # (V, J)
    kinematic_parents: np.ndarray  # (J,) int, parents[0] == -1
    pose_basis: np.ndarray         # (15, 3*(J-1))
    fingertip_vertex_ids: np.ndarray  # (5,) int
    faces: np.ndarray | None = None   # (F, 3) int, optional

    def __post_init__(self):
        self.template_vertices = np.asarray(self.template_vertices, dtype=np.float64)
        self.shape_dirs = np.asarray(self.shape_dirs, dtype=np.float64)
        self.pose_dirs = np.asarray(self.pose_dirs, dtype=np.float64)
        self.joint_regressor = np.asarray(self.joint_regressor, dtype=np.float64)
        self.skinning_weights = np.asarray(self.skinning_weights, dtype=np.float64)
        self.kinematic_parents = np.asarray(self.kinematic_parents, dtype=np.int64)
        self.pose_basis = np.asarray(self.pose_basis, dtype=np.float64)
        self.fingertip_vertex_ids = np.asarray(self.fingertip_vertex_ids, dtype=np.int64)
        if self.faces is not None:
            self.faces = np.asarray(self.faces, dtype=np.int64)
        validate_rig(self)

    @property
    def n_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def n_joints(self) -> int:
        """Internal joint count including the wrist root."""
        return self.joint_regressor.shape[0]


@dataclass
class ManoParams:
    """Low-dimensional hand state.

    theta holds PCA pose coefficients over the rig's pose_basis, beta the
    shape coefficients, trans/rot the global placement (axis-angle). Fields
    accept plain arrays or tape tensors.
    """

    theta: object
    beta: object
    trans: object
    rot: object
    side: str = "right"

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise InvariantViolationError(f"side must be left or right, got {self.side!r}")


def zero_params(side: str = "right") -> ManoParams:
    return ManoParams(
        theta=np.zeros(POSE_COEFFS),
        beta=np.zeros(SHAPE_COEFFS),
        trans=np.zeros(3),
        rot=np.zeros(3),
        side=side,
    )


@dataclass
class HandOutput:
    """Forward-pass result: 20 output joints, the full mesh, and the wrist.

    The 20 joints are the 15 articulated finger joints followed by the 5
    fingertip vertices. The wrist (kinematic root) is excluded from the 20
    and carried separately so root-relative metrics have their reference.
    """

    joints: object    # (20, 3)
    vertices: object  # (V, 3)
    wrist: object     # (3,)

    def __post_init__(self):
        for name in ("joints", "vertices", "wrist"):
            field = getattr(self, name)
            if not ad.is_tensor(field) and not np.all(np.isfinite(field)):
                raise NonFiniteError(f"non-finite values in HandOutput.{name}")
        if ad.value(self.joints).shape != (OUTPUT_JOINTS, 3):
            raise ShapeMismatchError(
                f"joints must be ({OUTPUT_JOINTS}, 3), got {ad.value(self.joints).shape}"
            )


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float


def validate_rig(rig: HandRig) -> None:
    n_v = rig.template_vertices.shape[0]
    n_j = rig.joint_regressor.shape[0]
    pose_dim = 9 * (n_j - 1)
    checks = (
        (rig.template_vertices, (n_v, 3), "template_vertices"),
        (rig.shape_dirs, (n_v, 3, SHAPE_COEFFS), "shape_dirs"),
        (rig.pose_dirs, (n_v, 3, pose_dim), "pose_dirs"),
        (rig.joint_regressor, (n_j, n_v), "joint_regressor"),
        (rig.skinning_weights, (n_v, n_j), "skinning_weights"),
        (rig.kinematic_parents, (n_j,), "kinematic_parents"),
        (rig.pose_basis, (POSE_COEFFS, 3 * (n_j - 1)), "pose_basis"),
        (rig.fingertip_vertex_ids, (FINGERTIP_COUNT,), "fingertip_vertex_ids"),
    )
    for array, shape, name in checks:
        if array.shape != shape:
            raise InvariantViolationError(f"{name} must have shape {shape}, got {array.shape}")
        if np.issubdtype(array.dtype, np.floating) and not np.all(np.isfinite(array)):
            raise InvariantViolationError(f"{name} contains non-finite values")
    if np.any(rig.skinning_weights < 0):
        raise InvariantViolationError("skinning weights must be non-negative")
    row_sums = rig.skinning_weights.sum(axis=1)
    worst = np.abs(row_sums - 1.0).max()
    if worst > 1e-6:
        raise InvariantViolationError(f"skinning weight rows must sum to 1, worst error {worst:.3e}")
    if rig.kinematic_parents[0] != -1:
        raise InvariantViolationError("joint 0 must be the root (parent -1)")
    for j in range(1, n_j):
        parent = rig.kinematic_parents[j]
        if not 0 <= parent < j:
            raise InvariantViolationError(
                f"joint {j} has parent {parent}; parents must precede children"
            )
    if np.any(rig.fingertip_vertex_ids < 0) or np.any(rig.fingertip_vertex_ids >= n_v):
        raise InvariantViolationError("fingertip vertex ids out of range")
    if rig.faces is not None:
        if rig.faces.ndim != 2 or rig.faces.shape[1] != 3:
            raise InvariantViolationError(f"faces must be (F, 3), got {rig.faces.shape}")
        if rig.faces.size and (rig.faces.min() < 0 or rig.faces.max() >= n_v):
            raise InvariantViolationError("face vertex ids out of range")


# -- rotations -------------------------------------------------------------


def _rotation_rows(aa):
    """Rotation matrices for a batch of axis-angle rows, as (n, 9) row-major
    entries.

    Expands R = I + A K + B K^2 entrywise via K^2 = a a^T - |a|^2 I, so a
    single call covers every joint instead of building n small matrices.
    A = sin(t)/t and B = 2 sin^2(t/2) / t^2 switch to their Taylor series in
    t^2 below t = 1e-8; the trig branch runs on a mask-shifted |a|^2 so sqrt
    never sees zero, and the final select keeps each lane's gradient on its
    own branch.
    """
    sq = ad.sum_(aa * aa, axis=1)
    small = ad.value(sq) < _SMALL_ANGLE_SQ
    a_series = 1.0 - sq / 6.0 + (sq * sq) / 120.0
    b_series = 0.5 - sq / 24.0 + (sq * sq) / 720.0
    safe = sq + small.astype(np.float64)
    angle = ad.sqrt(safe)
    a_trig = ad.sin(angle) / angle
    half_sin = ad.sin(angle * 0.5)
    b_trig = (half_sin * half_sin) * 2.0 / safe
    coeff_a = ad.where(small, a_series, a_trig)
    coeff_b = ad.where(small, b_series, b_trig)

    a0, a1, a2 = aa[:, 0], aa[:, 1], aa[:, 2]
    diag = 1.0 - coeff_b * sq
    b01 = coeff_b * (a0 * a1)
    b02 = coeff_b * (a0 * a2)
    b12 = coeff_b * (a1 * a2)
    s0 = coeff_a * a0
    s1 = coeff_a * a1
    s2 = coeff_a * a2
    return ad.stack(
        [
            diag + coeff_b * (a0 * a0), b01 - s2, b02 + s1,
            b01 + s2, diag + coeff_b * (a1 * a1), b12 - s0,
            b02 - s1, b12 + s0, diag + coeff_b * (a2 * a2),
        ],
        axis=1,
    )


def rodrigues(vec):
    """Axis-angle (3,) to rotation matrix (3,3), backend generic.

    Thin wrapper over the batched form so single-matrix callers and the rig
    forward pass share one code path bit for bit.
    """
    rows = _rotation_rows(ad.reshape(vec, (1, 3)))
    return ad.reshape(rows[0], (3, 3))


# -- forward pass ----------------------------------------------------------


def forward(rig: HandRig, params: ManoParams) -> HandOutput:
    """Pose the rig.

    Pipeline: shape blend, joint regression from the shaped mesh, pose
    blend from the per-joint rotation offsets, world transform chain along
    the kinematic parents (global rot at the root), linear blend skinning,
    then the global translation. Output joints follow the 20-joint
    convention of :class:`HandOutput`.

    The world chain and the skinning sum are carried as displacements from
    the rest pose (disp_j = world position of joint j minus its rest
    position), so at identity rotations every correction term is exactly
    zero and the rest pose reproduces the shaped template bit for bit, even
    with blended skinning weights.
    """
    n_j = rig.n_joints
    n_v = rig.n_vertices

    blend = ad.matmul(rig.shape_dirs.reshape(n_v * 3, SHAPE_COEFFS), params.beta)
    v_shaped = rig.template_vertices + ad.reshape(blend, (n_v, 3))
    joints_rest = ad.matmul(rig.joint_regressor, v_shaped)

    local_aa = ad.reshape(ad.matmul(params.theta, rig.pose_basis), (n_j - 1, 3))
    all_aa = ad.concatenate([ad.reshape(params.rot, (1, 3)), local_aa], axis=0)
    rot_rows = _rotation_rows(all_aa)
    rotations = [ad.reshape(rot_rows[j], (3, 3)) for j in range(n_j)]

    pose_feature = ad.reshape(rot_rows[1:] - np.eye(3).reshape(9), (9 * (n_j - 1),))
    offsets = ad.matmul(rig.pose_dirs.reshape(n_v * 3, 9 * (n_j - 1)), pose_feature)
    v_posed = v_shaped + ad.reshape(offsets, (n_v, 3))

    world_rot = [rotations[0]]
    disp = [np.zeros(3)]
    for j in range(1, n_j):
        parent = int(rig.kinematic_parents[j])
        bone = joints_rest[j] - joints_rest[parent]
        world_rot.append(ad.matmul(world_rot[parent], rotations[j]))
        disp.append(disp[parent] + (ad.matmul(world_rot[parent], bone) - bone))

    # LBS: vertex -> x + sum_j w_vj ((R_j - I)(x - j_j^rest) + disp_j)
    delta = None
    for j in range(n_j):
        centered = v_posed - joints_rest[j]
        moved = (ad.matmul(centered, world_rot[j].T) - centered) + disp[j]
        term = rig.skinning_weights[:, j : j + 1] * moved
        delta = term if delta is None else delta + term
    vertices = v_posed + delta + params.trans

    tip_rows = [vertices[int(v)] for v in rig.fingertip_vertex_ids]
    joints = ad.stack(
        [joints_rest[j] + disp[j] + params.trans for j in range(1, n_j)] + tip_rows
    )
    wrist = joints_rest[0] + disp[0] + params.trans
    return HandOutput(joints=joints, vertices=vertices, wrist=wrist)


# -- left/right mirroring --------------------------------------------------


def mirror_rig(rig: HandRig) -> HandRig:
    """Reflect a rig across the x = 0 plane.

    The sign patterns below are chosen so that
    forward(mirror_rig(rig), mirror_params(p)) is the exact x-negation of
    forward(rig, p): axis-angle vectors map to (ax, -ay, -az) and a
    rotation entry R[r, c] picks up sign m_r * m_c with m = (-1, 1, 1).
    """
    n_j = rig.n_joints
    pose_sign = np.empty(9 * (n_j - 1))
    block = (_MIRROR_XYZ[:, None] * _MIRROR_XYZ[None, :]).reshape(9)
    pose_sign[:] = np.tile(block, n_j - 1)
    basis_sign = np.tile(_MIRROR_AXIS_ANGLE, n_j - 1)
    faces = None if rig.faces is None else rig.faces[:, [0, 2, 1]]
    return HandRig(
        template_vertices=rig.template_vertices * _MIRROR_XYZ,
        shape_dirs=rig.shape_dirs * _MIRROR_XYZ[None, :, None],
        pose_dirs=rig.pose_dirs * _MIRROR_XYZ[None, :, None] * pose_sign[None, None, :],
        joint_regressor=rig.joint_regressor.copy(),
        skinning_weights=rig.skinning_weights.copy(),
        kinematic_parents=rig.kinematic_parents.copy(),
        pose_basis=rig.pose_basis * basis_sign[None, :],
        fingertip_vertex_ids=rig.fingertip_vertex_ids.copy(),
        faces=faces,
    )


def mirror_params(params: ManoParams) -> ManoParams:
    """Mirror the global placement; theta/beta are expressed in the rig's
    own basis and stay as they are (mirror_rig flips the basis)."""
    return replace(
        params,
        trans=ad.value(params.trans) * _MIRROR_XYZ,
        rot=ad.value(params.rot) * _MIRROR_AXIS_ANGLE,
        side="left" if params.side == "right" else "right",
    )


# -- projection ------------------------------------------------------------


def project_mask(
    output: HandOutput,
    faces: np.ndarray,
    camera: CameraIntrinsics,
    geometry: SensorGeometry,
    timestamp: int = 0,
) -> HandMask:
    """Rasterize the pinhole projection of the mesh into a binary mask.

    Faces with any vertex at z <= 0 are culled. A pixel belongs to a
    triangle when its integer center passes the three half-plane tests
    (boundary inclusive, winding agnostic).
    """
    vertices = ad.value(output.vertices)
    faces = np.asarray(faces, dtype=np.int64)
    grid = np.zeros((geometry.height, geometry.width), dtype=np.uint8)
    if faces.size == 0:
        return HandMask(grid, timestamp=timestamp)

    z = vertices[:, 2]
    visible = faces[np.all(z[faces] > 0.0, axis=1)]
    if len(visible) == 0:
        return HandMask(grid, timestamp=timestamp)

    # culled vertices are never indexed; keep their division well defined
    safe_z = np.where(z > 0.0, z, 1.0)
    u = camera.fx * vertices[:, 0] / safe_z + camera.cx
    v = camera.fy * vertices[:, 1] / safe_z + camera.cy
    for face in visible:
        _fill_triangle(grid, u[face], v[face])
    return HandMask(grid, timestamp=timestamp)


def _fill_triangle(grid: np.ndarray, us: np.ndarray, vs: np.ndarray) -> None:
    h, w = grid.shape
    x0 = max(int(np.ceil(us.min())), 0)
    x1 = min(int(np.floor(us.max())), w - 1)
    y0 = max(int(np.ceil(vs.min())), 0)
    y1 = min(int(np.floor(vs.max())), h - 1)
    if x0 > x1 or y0 > y1:
        return
    px, py = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    edges = []
    for i in range(3):
        ax, ay = us[i], vs[i]
        bx, by = us[(i + 1) % 3], vs[(i + 1) % 3]
        edges.append((bx - ax) * (py - ay) - (by - ay) * (px - ax))
    inside = ((edges[0] >= 0) & (edges[1] >= 0) & (edges[2] >= 0)) | (
        (edges[0] <= 0) & (edges[1] <= 0) & (edges[2] <= 0)
    )
    grid[y0 : y1 + 1, x0 : x1 + 1] |= inside.astype(np.uint8)


def save_obj(path, vertices: np.ndarray, faces: np.ndarray | None = None) -> None:
    """Wavefront OBJ export for eyeballing a posed mesh."""
    vertices = ad.value(vertices)
    with open(path, "w", encoding="ascii") as handle:
        for vx, vy, vz in vertices:
            handle.write(f"v {vx:.9g} {vy:.9g} {vz:.9g}\n")
        if faces is not None:
            for a, b, c in np.asarray(faces, dtype=np.int64):
                handle.write(f"f {a + 1} {b + 1} {c + 1}\n")


# -- container IO ----------------------------------------------------------

_INT_SECTIONS = {"kinematic_parents", "fingertip_vertex_ids", "faces"}


def save_rig(rig: HandRig, path) -> None:
    sections = {
        "template_vertices": rig.template_vertices,
        "shape_dirs": rig.shape_dirs,
        "pose_dirs": rig.pose_dirs,
        "joint_regressor": rig.joint_regressor,
        "skinning_weights": rig.skinning_weights,
        "kinematic_parents": rig.kinematic_parents,
        "pose_basis": rig.pose_basis,
        "fingertip_vertex_ids": rig.fingertip_vertex_ids,
    }
    if rig.faces is not None:
        sections["faces"] = rig.faces
    with open(path, "wb") as handle:
        handle.write(RIG_MAGIC)
        handle.write(struct.pack("<II", RIG_VERSION, len(sections)))
        for name, array in sections.items():
            _write_section(handle, name, array)


def _write_section(handle: BinaryIO, name: str, array: np.ndarray) -> None:
    encoded = name.encode("ascii")
    payload = np.ascontiguousarray(array, dtype="<f8")
    handle.write(struct.pack("<B", len(encoded)))
    handle.write(encoded)
    handle.write(struct.pack("<B", payload.ndim))
    handle.write(struct.pack(f"<{payload.ndim}I", *payload.shape))
    handle.write(payload.tobytes())


def load_rig(path) -> HandRig:
    """Read a rig container; invariants are re-validated on construction."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != RIG_MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise ParseError(f"{path}: truncated header")
    version, n_sections = struct.unpack_from("<II", blob, 4)
    if version != RIG_VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    offset = 12
    sections: dict[str, np.ndarray] = {}
    for _ in range(n_sections):
        try:
            (name_len,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            name = blob[offset : offset + name_len].decode("ascii")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            end = offset + 8 * count
            if end > len(blob):
                raise struct.error("payload past end of file")
            payload = np.frombuffer(blob[offset:end], dtype="<f8").reshape(dims)
            offset = end
        except (struct.error, UnicodeDecodeError) as exc:
            raise ParseError(f"{path}: truncated or corrupt section: {exc}") from exc
        sections[name] = payload.astype(np.int64) if name in _INT_SECTIONS else payload
    required = (
        "template_vertices", "shape_dirs", "pose_dirs", "joint_regressor",
        "skinning_weights", "kinematic_parents", "pose_basis", "fingertip_vertex_ids",
    )
    missing = [name for name in required if name not in sections]
    if missing:
        raise ParseError(f"{path}: missing sections {missing}")
    return HandRig(
        template_vertices=sections["template_vertices"],
        shape_dirs=sections["shape_dirs"],
        pose_dirs=sections["pose_dirs"],
        joint_regressor=sections["joint_regressor"],
        skinning_weights=sections["skinning_weights"],
        kinematic_parents=sections["kinematic_parents"],
        pose_basis=sections["pose_basis"],
        fingertip_vertex_ids=sections["fingertip_vertex_ids"],
        faces=sections.get("faces"),
    )


# -- procedural fixtures ---------------------------------------------------

_PARENTS_16 = np.array([-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 0, 10, 11, 0, 13, 14])


def _skeleton() -> np.ndarray:
    """Five three-joint finger chains fanning out of the wrist, meters."""
    joints = np.zeros((16, 3))
    for finger in range(5):
        base_x = (finger - 2) * 0.022
        for seg, y in enumerate((0.045, 0.075, 0.100)):
            joints[1 + finger * 3 + seg] = (base_x + 0.004 * seg * (finger - 2) / 2, y, 0.0)
    return joints


def _tip_positions() -> np.ndarray:
    tips = np.zeros((5, 3))
    for finger in range(5):
        last = _skeleton()[3 + finger * 3]
        tips[finger] = last + (0.0, 0.020, 0.0)
    return tips


def _orthonormal_rows(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(cols, rows)))
    return q.T


def make_minimal_rig(seed: int = 0) -> HandRig:
    """Sixteen-vertex rig: one anchor vertex per joint, one-hot skinning
    and regression. Small enough for exhaustive numeric checks."""
    rng = np.random.default_rng(seed)
    joints = _skeleton()
    tips = joints[[3, 6, 9, 12, 15]] + np.array([0.0, 0.015, 0.0])
    template = joints.copy()
    template[[3, 6, 9, 12, 15]] = tips  # anchors at the far segment act as tips
    return HandRig(
        template_vertices=template,
        shape_dirs=rng.normal(scale=3e-3, size=(16, 3, SHAPE_COEFFS)),
        pose_dirs=rng.normal(scale=5e-4, size=(16, 3, 135)),
        joint_regressor=_regressor_from_anchors(np.arange(16), 16),
        skinning_weights=np.eye(16),
        kinematic_parents=_PARENTS_16,
        pose_basis=_orthonormal_rows(rng, POSE_COEFFS, 45),
        fingertip_vertex_ids=np.array([3, 6, 9, 12, 15]),
    )


def _regressor_from_anchors(anchor_ids: np.ndarray, n_vertices: int) -> np.ndarray:
    regressor = np.zeros((len(anchor_ids), n_vertices))
    regressor[np.arange(len(anchor_ids)), anchor_ids] = 1.0
    return regressor


def make_synthetic_rig(seed: int = 0, ring_size: int = 6) -> HandRig:
    """Tube-mesh hand with faces, suitable for projection tests.

    Sixteen anchor vertices sit exactly on the joints (one-hot regressor),
    each finger gets rings of vertices around its segments plus an apex
    fingertip, and skinning softmax-blends by distance to the joints.
    """
    rng = np.random.default_rng(seed)
    joints = _skeleton()
    tips = _tip_positions()

    vertices = [joints.copy()]
    faces: list[tuple[int, int, int]] = []
    fingertip_ids = np.zeros(5, dtype=np.int64)
    next_id = 16
    angles = np.linspace(0.0, 2 * np.pi, ring_size, endpoint=False)
    circle = np.stack([np.cos(angles), np.zeros(ring_size), np.sin(angles)], axis=1)

    for finger in range(5):
        chain = [joints[0], *joints[1 + finger * 3 : 4 + finger * 3], tips[finger]]
        ring_ids: list[np.ndarray] = []
        for station, center in enumerate(chain):
            radius = 0.009 if station == 0 else 0.006
            ring = center + radius * circle
            vertices.append(ring)
            ring_ids.append(np.arange(next_id, next_id + ring_size))
            next_id += ring_size
        for lower, upper in zip(ring_ids[:-1], ring_ids[1:]):
            for i in range(ring_size):
                j = (i + 1) % ring_size
                faces.append((lower[i], lower[j], upper[i]))
                faces.append((lower[j], upper[j], upper[i]))
        apex = next_id
        vertices.append(tips[finger][None, :] + (0.0, 0.004, 0.0))
        next_id += 1
        fingertip_ids[finger] = apex
        top = ring_ids[-1]
        for i in range(ring_size):
            faces.append((top[i], top[(i + 1) % ring_size], apex))

    template = np.concatenate(vertices, axis=0)
    n_v = len(template)

    dist_sq = np.sum((template[:, None, :] - joints[None, :, :]) ** 2, axis=2)
    logits = -dist_sq / 2e-4
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    weights[:16] = np.eye(16)  # anchors follow their own joint exactly

    return HandRig(
        template_vertices=template,
        shape_dirs=rng.normal(scale=3e-3, size=(n_v, 3, SHAPE_COEFFS)),
        pose_dirs=rng.normal(scale=5e-4, size=(n_v, 3, 135)),
        joint_regressor=_regressor_from_anchors(np.arange(16), n_v),
        skinning_weights=weights,
        kinematic_parents=_PARENTS_16,
        pose_basis=_orthonormal_rows(rng, POSE_COEFFS, 45),
        fingertip_vertex_ids=fingertip_ids,
        faces=np.array(faces, dtype=np.int64),
    )

"""Procedural ray-cast scenes: RGB + normalized linear depth at fixed poses.

Scenes are single analytic primitives (sphere, cube, capsule) inside the
unit sphere, colored from a fixed 8-color palette with Lambertian shading
under one world-fixed directional light plus constant ambient, on a pure
white background.

The measurable ambiguity driving the consistency experiments: each scene's
"back" region (the surface cone facing directly away from the input
camera) is painted a palette color that provably never projects into the
input view, so a generator conditioned on the input view must *choose* a
back color, and multi-view agreement on that choice is classifiable.

Region rule per surface normal n (unit input-view direction c):
  back  : n . c < -0.35      (never visible from a camera at radius 2.5)
  top   : n . z > 0.7        (otherwise)
  base  : everything else
Shading s = 0.60 + 0.35*max(0, n . l) stays above 0.5, which keeps every
shaded palette color strictly nearest to its own palette entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pose import DEFAULT_RADIUS, CameraExtrinsics, PoseAngles, look_at, novel_pose_spec
from .rng import stream

PALETTE = np.array(
    [
        [1.0, 0.0, 0.0],  # red
        [1.0, 0.5, 0.0],  # orange
        [1.0, 1.0, 0.0],  # yellow
        [0.0, 1.0, 0.0],  # green
        [0.0, 1.0, 1.0],  # cyan
        [0.0, 0.0, 1.0],  # blue
        [1.0, 0.0, 1.0],  # magenta
        [0.5, 0.0, 1.0],  # violet
    ],
    dtype=np.float32,
)

KINDS = ("sphere", "cube", "capsule")

AMBIENT = 0.60
DIFFUSE = 0.35
LIGHT_DIR = np.array([0.45, 0.2, 0.87]) / np.linalg.norm([0.45, 0.2, 0.87])
NEAR, FAR = 1.5, 3.5
FOV_DEG = 40.0
BACK_COS = -0.35
TOP_COS = 0.7

REGION_BASE, REGION_TOP, REGION_BACK = 0, 1, 2
REGION_NONE = -1  # background


@dataclass(frozen=True)
class Scene:
    seed: int
    kind: str
    size: tuple  # sphere: (radius,); cube: (half, yaw_deg); capsule: (radius, half_len)
    base_color: int
    top_color: int
    hidden_back_color: int
    input_elevation_deg: float
    input_azimuth_deg: float

    def region_colors(self) -> np.ndarray:
        return PALETTE[[self.base_color, self.top_color, self.hidden_back_color]]

    def input_pose(self) -> PoseAngles:
        return PoseAngles(self.input_elevation_deg, self.input_azimuth_deg, DEFAULT_RADIUS)

    def target_pose(self, i: int) -> PoseAngles:
        rel = novel_pose_spec(i)
        return PoseAngles(rel.elevation_deg, rel.azimuth_deg + self.input_azimuth_deg,
                          DEFAULT_RADIUS)


@dataclass(frozen=True)
class SampleRecord:
    scene: Scene
    input_rgb: np.ndarray  # H x W x 3 in [0,1]
    views: list  # six H x W x 3
    depths: list  # six H x W in [0,1]

    @property
    def hidden_back_color(self) -> int:
        return self.scene.hidden_back_color


def gen_scene(seed: int) -> Scene:
    """Deterministic scene draw; hidden color excludes the two front colors."""
    rng = stream(int(seed), "dataset")
    kind = KINDS[int(rng.integers(0, len(KINDS)))]
    if kind == "sphere":
        size = (float(rng.uniform(0.5, 0.85)),)
    elif kind == "cube":
        size = (float(rng.uniform(0.3, 0.5)), float(rng.uniform(0.0, 360.0)))
    else:
        r = float(rng.uniform(0.18, 0.3))
        size = (r, float(rng.uniform(0.25, min(0.5, 0.8 - r))))
    base = int(rng.integers(0, 8))
    top = int(rng.integers(0, 8))
    allowed = [i for i in range(8) if i not in (base, top)]
    hidden = int(allowed[int(rng.integers(0, len(allowed)))])
    elev = float(rng.uniform(-10.0, 40.0))
    azim = float(rng.uniform(0.0, 360.0))
    return Scene(int(seed), kind, size, base, top, hidden, elev, azim)


# ---------------------------------------------------------------------------
# Ray generation and intersection

def _ray_dirs(extr: CameraExtrinsics, res: int, supersample: int) -> np.ndarray:
    """World-space unit directions, shape (res*res*ss*ss, 3)."""
    tanv = np.tan(np.deg2rad(FOV_DEG / 2.0))
    ss = supersample
    offs = (np.arange(ss) + 0.5) / ss
    py, px = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    sy, sx = np.meshgrid(offs, offs, indexing="ij")
    ys = (py[:, :, None, None] + sy[None, None]) / res * 2.0 - 1.0
    xs = (px[:, :, None, None] + sx[None, None]) / res * 2.0 - 1.0
    d_cam = np.stack([xs * tanv, ys * tanv, np.ones_like(xs)], axis=-1).reshape(-1, 3)
    d_cam /= np.linalg.norm(d_cam, axis=1, keepdims=True)
    return d_cam @ extr.rotation  # row vectors times R == R^T applied to columns


def _intersect_sphere(o, d, radius):
    b = d @ o
    disc = b * b - (o @ o - radius * radius)
    hit = disc > 0
    t = np.where(hit, -b - np.sqrt(np.maximum(disc, 0.0)), np.inf)
    hit &= t > 0
    t = np.where(hit, t, np.inf)
    p = o[None, :] + t[:, None] * d
    n = np.where(hit[:, None], p / radius, 0.0)
    return t, n


def _intersect_cube(o, d, half, yaw_deg):
    from .pose import rotation_about_z

    rz = rotation_about_z(-yaw_deg)
    ol, dl = rz @ o, d @ rz.T
    with np.errstate(divide="ignore"):
        inv = 1.0 / dl
    t1 = (-half - ol[None, :]) * inv
    t2 = (half - ol[None, :]) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    t_enter = tmin.max(axis=1)
    t_exit = tmax.min(axis=1)
    hit = (t_enter <= t_exit) & (t_enter > 0)
    t = np.where(hit, t_enter, np.inf)
    axis = tmin.argmax(axis=1)
    sign = -np.sign(np.take_along_axis(dl, axis[:, None], axis=1)[:, 0])
    n_local = np.zeros((len(d), 3))
    n_local[np.arange(len(d)), axis] = sign
    n = np.where(hit[:, None], n_local @ rz, 0.0)  # rotate normals back by +yaw
    return t, n


def _intersect_capsule(o, d, radius, half_len):
    # Infinite cylinder about z, clamped, plus two sphere caps.
    oxy, dxy = o[:2], d[:, :2]
    a = (dxy * dxy).sum(axis=1)
    b = dxy @ oxy
    c = oxy @ oxy - radius * radius
    disc = b * b - a * c
    ok = (disc > 0) & (a > 1e-12)
    tcyl = np.where(ok, (-b - np.sqrt(np.maximum(disc, 0.0))) / np.where(ok, a, 1.0), np.inf)
    zhit = o[2] + tcyl * d[:, 2]
    ok &= (tcyl > 0) & (np.abs(zhit) <= half_len)
    tcyl = np.where(ok, tcyl, np.inf)

    t_best = tcyl
    n_best = np.zeros((len(d), 3))
    p = o[None, :] + tcyl[:, None] * d
    n_cyl = np.column_stack([p[:, 0], p[:, 1], np.zeros(len(d))]) / radius
    n_best[ok] = n_cyl[ok]

    for cz in (-half_len, half_len):
        oc = o - np.array([0.0, 0.0, cz])
        b2 = d @ oc
        disc2 = b2 * b2 - (oc @ oc - radius * radius)
        hit2 = disc2 > 0
        t2 = np.where(hit2, -b2 - np.sqrt(np.maximum(disc2, 0.0)), np.inf)
        hit2 &= t2 > 0
        # Cap surface only beyond the cylinder's z range.
        z2 = o[2] + t2 * d[:, 2]
        hit2 &= np.where(cz < 0, z2 <= -half_len, z2 >= half_len)
        better = hit2 & (t2 < t_best)
        p2 = o[None, :] + t2[:, None] * d
        n2 = (p2 - np.array([0.0, 0.0, cz])[None, :]) / radius
        t_best = np.where(better, t2, t_best)
        n_best[better] = n2[better]
    return t_best, n_best


def _intersect(scene: Scene, o, d):
    if scene.kind == "sphere":
        return _intersect_sphere(o, d, scene.size[0])
    if scene.kind == "cube":
        return _intersect_cube(o, d, scene.size[0], scene.size[1])
    return _intersect_capsule(o, d, scene.size[0], scene.size[1])


def _input_dir(scene: Scene) -> np.ndarray:
    from .pose import camera_center

    c = camera_center(scene.input_pose())
    return c / np.linalg.norm(c)


def _regions(scene: Scene, normals: np.ndarray) -> np.ndarray:
    cdir = _input_dir(scene)
    back = normals @ cdir < BACK_COS
    top = normals[:, 2] > TOP_COS
    return np.where(back, REGION_BACK, np.where(top, REGION_TOP, REGION_BASE))


def render_view(scene: Scene, cam: CameraExtrinsics, res: int, supersample: int = 2):
    """Ray-cast one view; returns (rgb [res,res,3], depth [res,res]) in [0,1]."""
    o = cam.center
    d = _ray_dirs(cam, res, supersample)
    t, n = _intersect(scene, o, d)
    hit = np.isfinite(t)

    rgb = np.ones((len(d), 3), dtype=np.float64)
    depth = np.ones(len(d), dtype=np.float64)
    if hit.any():
        region = _regions(scene, n[hit])
        colors = scene.region_colors()[region]
        lam = AMBIENT + DIFFUSE * np.maximum(0.0, n[hit] @ LIGHT_DIR)
        rgb[hit] = colors * lam[:, None]
        depth[hit] = np.clip((t[hit] - NEAR) / (FAR - NEAR), 0.0, 1.0)

    ss2 = supersample * supersample
    rgb = rgb.reshape(res, res, ss2, 3).mean(axis=2).astype(np.float32)
    depth = depth.reshape(res, res, ss2).mean(axis=2).astype(np.float32)
    return rgb, depth


def render_region_ids(scene: Scene, cam: CameraExtrinsics, res: int,
                      supersample: int = 1) -> np.ndarray:
    """Region id per subray, shape (res, res, ss*ss); -1 where background."""
    d = _ray_dirs(cam, res, supersample)
    t, n = _intersect(scene, cam.center, d)
    hit = np.isfinite(t)
    ids = np.full(len(d), REGION_NONE, dtype=np.int32)
    if hit.any():
        ids[hit] = _regions(scene, n[hit])
    return ids.reshape(res, res, supersample * supersample)


def build_record(scene: Scene, res: int) -> SampleRecord:
    """Input view plus the six fixed novel views (relative azimuths) and depths."""
    input_rgb, _ = render_view(scene, look_at(scene.input_pose()), res)
    views, depths = [], []
    for i in range(6):
        rgb, dep = render_view(scene, look_at(scene.target_pose(i)), res)
        views.append(rgb)
        depths.append(dep)
    return SampleRecord(scene=scene, input_rgb=input_rgb, views=views, depths=depths)

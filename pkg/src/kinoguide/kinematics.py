"""Perspective kinematics: user trajectories plus a depth map become
per-frame affine transforms, axis-aligned boxes, binary masks, and Gaussian
heatmaps.

Coordinate convention used across the package: pixel (row r, col c) has its
center at continuous coordinates (u=c, v=r), so an image spans
[-0.5, W-0.5] x [-0.5, H-0.5]. Boxes are continuous rectangles
(u_min, v_min, u_max, v_max); a pixel belongs to a rasterized box when its
center lies in the half-open rectangle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import load_kgt, load_pgm16


@dataclass(frozen=True)
class DepthMap:
    """Positive, metric-agnostic depths on the image grid."""

    values: np.ndarray
    source: str = "synthetic"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if not np.all(v > 0):
            raise ValueError("depth map must be strictly positive")
        object.__setattr__(self, "values", v)

    def sample(self, point) -> float:
        """Bilinear depth at (u, v), clamped to the image interior."""
        h, w = self.values.shape
        u = min(max(float(point[0]), 0.0), w - 1.0)
        v = min(max(float(point[1]), 0.0), h - 1.0)
        c0, r0 = int(np.floor(u)), int(np.floor(v))
        c1, r1 = min(c0 + 1, w - 1), min(r0 + 1, h - 1)
        fu, fv = u - c0, v - r0
        val = (
            (1 - fv) * ((1 - fu) * self.values[r0, c0] + fu * self.values[r0, c1])
            + fv * ((1 - fu) * self.values[r1, c0] + fu * self.values[r1, c1])
        )
        if val <= 0:
            raise ValueError(f"sampled depth {val} at {point} is not positive")
        return float(val)


def constant_depth(image_hw) -> DepthMap:
    return DepthMap(np.ones(tuple(image_hw)), source="synthetic")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box stored as center plus half extents, in pixels."""

    center: tuple[float, float]
    half_extents: tuple[float, float]

    def __post_init__(self):
        if self.half_extents[0] <= 0 or self.half_extents[1] <= 0:
            raise ValueError("box extents must be positive")

    def rect(self) -> tuple[float, float, float, float]:
        (u, v), (eu, ev) = self.center, self.half_extents
        return (u - eu, v - ev, u + eu, v + ev)


@dataclass(frozen=True)
class Trajectory:
    """Per-frame target centers p_k, k = 1..N_f, for one object."""

    points: np.ndarray
    object_id: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("trajectory must be an [N_f, 2] array of (u, v)")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


def linear_trajectory(start, end, n_frames: int, object_id: int = 0) -> Trajectory:
    ts = np.linspace(0.0, 1.0, n_frames)[:, None]
    pts = np.asarray(start, dtype=np.float64)[None] * (1 - ts) + np.asarray(
        end, dtype=np.float64
    )[None] * ts
    return Trajectory(pts, object_id=object_id)


def perspective_scale(depth: DepthMap, traj: Trajectory) -> np.ndarray:
    """Pinhole scaling sigma_k = d_0 / d_k with all depths read from the
    initial frame's map at the trajectory points."""
    d = np.array([depth.sample(p) for p in traj.points])
    sigmas = d[0] / d
    sigmas[0] = 1.0
    return sigmas


def build_affine(sigma: float, p0, pk) -> np.ndarray:
    """Scale-then-translate matrix taking the frame-1 box to frame k."""
    if sigma <= 0:
        raise ValueError(f"scale must be positive, got {sigma}")
    u0, v0 = float(p0[0]), float(p0[1])
    uk, vk = float(pk[0]), float(pk[1])
    return np.array(
        [
            [sigma, 0.0, uk - sigma * u0],
            [0.0, sigma, vk - sigma * v0],
            [0.0, 0.0, 1.0],
        ]
    )


def transform_box(affine: np.ndarray, box: BoundingBox) -> tuple[float, float, float, float]:
    """Apply a scale+translation affine to a box; stays axis-aligned."""
    u0, v0, u1, v1 = box.rect()
    lo = affine @ np.array([u0, v0, 1.0])
    hi = affine @ np.array([u1, v1, 1.0])
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def rasterize_mask(rect, image_hw) -> np.ndarray:
    """Binary mask of pixels whose centers fall inside the clamped rect."""
    h, w = image_hw
    u0, v0, u1, v1 = rect
    c_lo = max(0, int(np.ceil(u0)))
    c_hi = min(w, int(np.ceil(u1)))
    r_lo = max(0, int(np.ceil(v0)))
    r_hi = min(h, int(np.ceil(v1)))
    if c_lo >= c_hi or r_lo >= r_hi:
        raise ValueError(f"box {rect} is fully outside the {h}x{w} image")
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[r_lo:r_hi, c_lo:c_hi] = 1
    return mask


def gaussian_heatmap(crop_hw, sigma_frac: float = 0.3) -> np.ndarray:
    """Isotropic Gaussian on the crop grid, peak 1 at the crop center,
    std = sigma_frac * min(h, w)."""
    if sigma_frac <= 0:
        raise ValueError("sigma_frac must be positive")
    h, w = crop_hw
    if h < 1 or w < 1:
        raise ValueError("crop size must be at least 1x1")
    s = sigma_frac * min(h, w)
    rr = np.arange(h, dtype=np.float64) - (h - 1) / 2.0
    cc = np.arange(w, dtype=np.float64) - (w - 1) / 2.0
    return np.exp(-(rr[:, None] ** 2 + cc[None, :] ** 2) / (2.0 * s * s))


def _rescale_rect(rect, image_hw, latent_hw):
    """Map a rectangle between resolutions (pixel centers at integers)."""
    ih, iw = image_hw
    lh, lw = latent_hw
    su, sv = lw / iw, lh / ih
    u0, v0, u1, v1 = rect
    return (
        (u0 + 0.5) * su - 0.5,
        (v0 + 0.5) * sv - 0.5,
        (u1 + 0.5) * su - 0.5,
        (v1 + 0.5) * sv - 0.5,
    )


@dataclass(frozen=True)
class ObjectPrior:
    """Kinematic quantities for one tracked object across all frames."""

    object_id: int
    sigmas: np.ndarray  # [N_f]
    affines: np.ndarray  # [N_f, 3, 3], image coordinates
    boxes_image: list  # [N_f] rects in image coordinates
    boxes_latent: list  # [N_f] rects in latent coordinates
    masks: np.ndarray  # [N_f, H_lat, W_lat] binary
    heatmap: np.ndarray  # [h*, w*] on the frame-1 latent crop grid
    crop_hw: tuple[int, int]


@dataclass(frozen=True)
class KinematicPrior:
    objects: list
    image_hw: tuple[int, int]
    latent_hw: tuple[int, int]
    n_frames: int


def build_prior(
    depth: DepthMap,
    boxes: list[BoundingBox],
    trajectories: list[Trajectory],
    image_hw,
    latent_hw=None,
    sigma_frac: float = 0.3,
) -> KinematicPrior:
    """Assemble the full per-object, per-frame prior at latent resolution."""
    if latent_hw is None:
        latent_hw = tuple(image_hw)
    if len(boxes) != len(trajectories):
        raise ValueError("one trajectory per box is required")
    if not boxes:
        raise ValueError("prior needs at least one object")
    n_frames = len(trajectories[0])
    objects = []
    for b, (box, traj) in enumerate(zip(boxes, trajectories)):
        if len(traj) != n_frames:
            raise ValueError(f"object {b}: trajectory length {len(traj)} != {n_frames}")
        p0 = traj.points[0]
        if not np.allclose(p0, box.center, atol=1e-6):
            raise ValueError(
                f"object {b}: first trajectory point {tuple(p0)} must equal the "
                f"box center {box.center}"
            )
        sigmas = perspective_scale(depth, traj)
        affines = np.stack(
            [build_affine(sigmas[k], p0, traj.points[k]) for k in range(n_frames)]
        )
        rects_img = [transform_box(affines[k], box) for k in range(n_frames)]
        rects_lat = [_rescale_rect(r, image_hw, latent_hw) for r in rects_img]
        masks = []
        for k, rect in enumerate(rects_lat):
            try:
                masks.append(rasterize_mask(rect, latent_hw))
            except ValueError as exc:
                raise ValueError(f"object {b}, frame {k + 1}: {exc}") from exc
        u0, v0, u1, v1 = rects_lat[0]
        crop_hw = (max(1, int(round(v1 - v0))), max(1, int(round(u1 - u0))))
        objects.append(
            ObjectPrior(
                object_id=traj.object_id if traj.object_id else b,
                sigmas=sigmas,
                affines=affines,
                boxes_image=rects_img,
                boxes_latent=rects_lat,
                masks=np.stack(masks),
                heatmap=gaussian_heatmap(crop_hw, sigma_frac),
                crop_hw=crop_hw,
            )
        )
    return KinematicPrior(
        objects=objects,
        image_hw=tuple(image_hw),
        latent_hw=tuple(latent_hw),
        n_frames=n_frames,
    )


def load_depth_file(path: str | Path) -> DepthMap:
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        return DepthMap(load_pgm16(p), source="file")
    return DepthMap(load_kgt(p), source="file")


def parse_trajectory_spec(
    spec: dict, n_frames: int, image_hw, base_dir: Path | None = None
):
    """Parse one trajectory-spec object into (boxes, trajectories, depth).

    Schema: {"objects": [{"box": [cx, cy, w, h],
                          "points": [[u, v], ...] | "end": [u, v]}],
             "depth": "path-or-null"}
    """
    if "objects" not in spec or not isinstance(spec["objects"], list):
        raise ValueError("spec field 'objects' must be a list")
    if not spec["objects"]:
        raise ValueError("spec field 'objects' is empty")
    boxes, trajectories = [], []
    for idx, obj in enumerate(spec["objects"]):
        where = f"objects[{idx}]"
        box_vals = obj.get("box")
        if not (isinstance(box_vals, (list, tuple)) and len(box_vals) == 4):
            raise ValueError(f"spec field '{where}.box' must be [cx, cy, w, h]")
        cx, cy, bw, bh = (float(x) for x in box_vals)
        box = BoundingBox(center=(cx, cy), half_extents=(bw / 2.0, bh / 2.0))
        if "points" in obj:
            pts = np.asarray(obj["points"], dtype=np.float64)
            if pts.ndim != 2 or pts.shape != (n_frames, 2):
                raise ValueError(
                    f"spec field '{where}.points' must be [{n_frames}][2], "
                    f"got shape {pts.shape}"
                )
            traj = Trajectory(pts, object_id=idx)
        elif "end" in obj:
            end = obj["end"]
            if not (isinstance(end, (list, tuple)) and len(end) == 2):
                raise ValueError(f"spec field '{where}.end' must be [u, v]")
            traj = Trajectory(
                linear_trajectory((cx, cy), end, n_frames).points, object_id=idx
            )
        else:
            raise ValueError(f"spec field '{where}' needs 'points' or 'end'")
        boxes.append(box)
        trajectories.append(traj)
    depth_ref = spec.get("depth")
    if depth_ref:
        depth_path = Path(depth_ref)
        if base_dir is not None and not depth_path.is_absolute():
            depth_path = base_dir / depth_path
        depth = load_depth_file(depth_path)
    else:
        depth = constant_depth(image_hw)
    return boxes, trajectories, depth


def load_trajectory_spec(path: str | Path, n_frames: int, image_hw):
    with open(path) as fh:
        spec = json.load(fh)
    return parse_trajectory_spec(spec, n_frames, image_hw, base_dir=Path(path).parent)

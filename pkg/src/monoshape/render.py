"""Software rasterizer: swept-tube robot rendering and input preprocessing.

The robot body is a tube of the outer diameter swept along the centerline
using the rod's own material frames (16 radial segments, one ring per
integration node), with slightly proud darker bands at the spacer-disk
stations. Flat Lambertian shading, one directional light, z-buffered.
Everything is deterministic: identical inputs give bit-identical frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .camera import CameraModel
from .errors import DegenerateViewError, InputError
from .rod import RobotGeometry, RodState

RADIAL_SEGMENTS = 16


@dataclass
class RenderStyle:
    tube_color: tuple[float, float, float] = (0.85, 0.30, 0.25)
    disk_color: tuple[float, float, float] = (0.25, 0.25, 0.30)
    background: tuple[float, float, float] = (0.55, 0.55, 0.55)
    light_direction: tuple[float, float, float] = (0.3, -0.5, 0.8)  # base frame
    ambient: float = 0.35
    diffuse: float = 0.65
    backdrop: np.ndarray | None = None  # optional HxWx3 uint8 image
    disk_thickness: float = 3e-3


@dataclass
class RenderedFrame:
    rgb: np.ndarray    # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float32, meters, 0 where no surface


def _tube_mesh(state: RodState, geom: RobotGeometry, style: RenderStyle):
    """Triangle soup (vertices (V,3), faces (F,3), face color ids) in base frame."""
    radius = geom.outer_diameter / 2.0
    theta = 2.0 * np.pi * np.arange(RADIAL_SEGMENTS) / RADIAL_SEGMENTS
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)  # (K,2)

    def rings(centers, frames, r):
        # center + r*(cos t * e1 + sin t * e2), material frame columns e1,e2
        e1 = frames[:, :, 0]
        e2 = frames[:, :, 1]
        return (
            centers[:, None, :]
            + r * circle[None, :, 0, None] * e1[:, None, :]
            + r * circle[None, :, 1, None] * e2[:, None, :]
        )

    verts_list = []
    faces = []
    colors = []

    def add_sleeve(centers, frames, r, color_id, cap_start, cap_end):
        base_index = sum(v.shape[0] for v in verts_list)
        ring_pts = rings(centers, frames, r)
        n_rings = ring_pts.shape[0]
        verts_list.append(ring_pts.reshape(-1, 3))
        k = RADIAL_SEGMENTS
        for i in range(n_rings - 1):
            a = base_index + i * k
            b = base_index + (i + 1) * k
            for j in range(k):
                jn = (j + 1) % k
                faces.append((a + j, b + j, b + jn))
                faces.append((a + j, b + jn, a + jn))
                colors.append(color_id)
                colors.append(color_id)
        for cap, ring_start in ((cap_start, base_index), (cap_end, base_index + (n_rings - 1) * k)):
            if not cap:
                continue
            center_index = sum(v.shape[0] for v in verts_list)
            centre = centers[0] if ring_start == base_index else centers[-1]
            verts_list.append(centre[None, :])
            for j in range(k):
                jn = (j + 1) % k
                faces.append((ring_start + j, ring_start + jn, center_index))
                colors.append(color_id)

    add_sleeve(state.positions, state.rotations, radius, 0, cap_start=True, cap_end=True)

    # spacer-disk bands, slightly proud of the tube so they win the z-buffer
    spacing = geom.disk_spacing
    nodes_per_gap = round(spacing / (state.s[1] - state.s[0]))
    half = style.disk_thickness / 2.0
    for d in range(1, geom.segments * geom.disks_per_segment + 1):
        node = d * nodes_per_gap
        node = min(node, len(state.s) - 1)
        p = state.positions[node]
        r = state.rotations[node]
        tangent = r[:, 2]
        centers = np.stack([p - half * tangent, p + half * tangent], axis=0)
        frames = np.stack([r, r], axis=0)
        add_sleeve(centers, frames, radius * 1.001, 1, cap_start=False, cap_end=False)

    vertices = np.concatenate(verts_list, axis=0)
    return vertices, np.asarray(faces, dtype=np.int64), np.asarray(colors, dtype=np.int64)


@njit(cache=True)
def _raster_kernel(xy, z, shade, zbuf, cbuf):
    """Z-buffered fill of screen-space triangles with flat colors.

    xy: (F,3,2) pixel coordinates, z: (F,3) camera depths (all > 0),
    shade: (F,3) per-face RGB in [0,1]. Depth is interpolated
    perspective-correctly via 1/z.
    """
    height, width = zbuf.shape
    nf = xy.shape[0]
    for f in range(nf):
        x0, y0 = xy[f, 0, 0], xy[f, 0, 1]
        x1, y1 = xy[f, 1, 0], xy[f, 1, 1]
        x2, y2 = xy[f, 2, 0], xy[f, 2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        inv0, inv1, inv2 = 1.0 / z[f, 0], 1.0 / z[f, 1], 1.0 / z[f, 2]
        xmin = int(max(0.0, min(x0, min(x1, x2))))
        xmax = int(min(width - 1.0, max(x0, max(x1, x2)) + 1.0))
        ymin = int(max(0.0, min(y0, min(y1, y2))))
        ymax = int(min(height - 1.0, max(y0, max(y1, y2)) + 1.0))
        if xmax < xmin or ymax < ymin:
            continue
        inv_area = 1.0 / area
        for py in range(ymin, ymax + 1):
            fy = py + 0.5
            for px in range(xmin, xmax + 1):
                fx = px + 0.5
                w0 = ((x1 - fx) * (y2 - fy) - (x2 - fx) * (y1 - fy)) * inv_area
                if w0 < 0.0:
                    continue
                w1 = ((x2 - fx) * (y0 - fy) - (x0 - fx) * (y2 - fy)) * inv_area
                if w1 < 0.0:
                    continue
                w2 = 1.0 - w0 - w1
                if w2 < 0.0:
                    continue
                invz = w0 * inv0 + w1 * inv1 + w2 * inv2
                depth = 1.0 / invz
                if depth < zbuf[py, px]:
                    zbuf[py, px] = depth
                    cbuf[py, px, 0] = shade[f, 0]
                    cbuf[py, px, 1] = shade[f, 1]
                    cbuf[py, px, 2] = shade[f, 2]
    return


def render(
    state: RodState,
    geom: RobotGeometry,
    cam: CameraModel,
    style: RenderStyle | None = None,
) -> RenderedFrame:
    """Rasterize one rod state through the camera; returns RGB + depth."""
    style = style or RenderStyle()
    vertices, faces, color_ids = _tube_mesh(state, geom, style)

    vc = cam.to_camera(vertices)
    tri = vc[faces]  # (F, 3, 3) camera frame
    # drop triangles touching the near plane or beyond the far plane
    zmin = tri[:, :, 2].min(axis=1)
    zmax = tri[:, :, 2].max(axis=1)
    keep = (zmin > cam.near) & (zmax < cam.far)
    tri = tri[keep]
    kept_colors = color_ids[keep]
    if tri.shape[0] == 0:
        raise DegenerateViewError("robot is entirely outside the camera frustum")

    xy = np.empty((tri.shape[0], 3, 2))
    xy[:, :, 0] = cam.fx * tri[:, :, 0] / tri[:, :, 2] + cam.cx
    xy[:, :, 1] = cam.fy * tri[:, :, 1] / tri[:, :, 2] + cam.cy

    # flat two-sided Lambertian shading in the base frame
    world_tri = vertices[faces][keep]
    normal = np.cross(world_tri[:, 1] - world_tri[:, 0], world_tri[:, 2] - world_tri[:, 0])
    norm_len = np.linalg.norm(normal, axis=1, keepdims=True)
    norm_len[norm_len == 0] = 1.0
    normal /= norm_len
    light = np.asarray(style.light_direction, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lambert = style.ambient + style.diffuse * np.abs(normal @ light)
    palette = np.array([style.tube_color, style.disk_color], dtype=np.float64)
    shade = np.clip(palette[kept_colors] * lambert[:, None], 0.0, 1.0)

    zbuf = np.full((cam.height, cam.width), np.inf)
    cbuf = np.empty((cam.height, cam.width, 3))
    if style.backdrop is not None:
        if style.backdrop.shape[:2] != (cam.height, cam.width):
            raise InputError("backdrop image does not match the camera resolution")
        cbuf[:] = style.backdrop.astype(np.float64) / 255.0
    else:
        cbuf[:] = np.asarray(style.background, dtype=np.float64)

    _raster_kernel(xy, tri[:, :, 2].copy(), shade, zbuf, cbuf)

    hit = np.isfinite(zbuf)
    if not hit.any():
        raise DegenerateViewError("robot did not rasterize to any pixel")
    depth = np.where(hit, zbuf, 0.0).astype(np.float32)
    rgb = np.clip(np.rint(cbuf * 255.0), 0, 255).astype(np.uint8)
    return RenderedFrame(rgb=rgb, depth=depth)


@dataclass
class PreprocessSpec:
    """Region-of-interest crop followed by nearest-neighbor downsampling."""

    roi_row: int
    roi_col: int
    roi_size: int
    out_size: int

    def to_dict(self) -> dict:
        return {"roi_row": self.roi_row, "roi_col": self.roi_col,
                "roi_size": self.roi_size, "out_size": self.out_size}

    @classmethod
    def from_dict(cls, doc: dict) -> "PreprocessSpec":
        return cls(**doc)


def preprocess(rgb: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """Crop, nearest-downsample, scale to [0,1], append coordinate channels.

    Returns a float32 (5, out, out) array: RGB plus normalized row and
    column index channels (top-left pixel (0,0), bottom-right (1,1)).
    """
    h, w = rgb.shape[:2]
    r0, c0, size, out = spec.roi_row, spec.roi_col, spec.roi_size, spec.out_size
    if r0 < 0 or c0 < 0 or r0 + size > h or c0 + size > w:
        raise InputError(f"ROI {size}x{size}@({r0},{c0}) exceeds image bounds {h}x{w}")
    if size % out:
        raise InputError(f"output size {out} must divide ROI size {size}")
    crop = rgb[r0 : r0 + size, c0 : c0 + size]
    step = size // out
    # nearest-neighbor: take the top-left sample of each block
    small = crop[::step, ::step]
    chans = small.astype(np.float32).transpose(2, 0, 1) / np.float32(255.0)
    coords = np.arange(out, dtype=np.float32) / np.float32(out - 1)
    rows = np.broadcast_to(coords[:, None], (out, out))
    cols = np.broadcast_to(coords[None, :], (out, out))
    return np.concatenate([chans, rows[None], cols[None]], axis=0)

"""Synthetic urban scene generator and dual-sensor renderer.

Provides ground-truth correspondences for verifying the matching and
reconstruction pipeline: a DEM of extruded boxes on a ground plane, one
shared procedural reflectance texture, an optical renderer (per-pixel ray
casting against the DEM) and a SAR renderer (forward projection into the
slant-range grid with layover accumulation, shadow darkening and optional
multiplicative speckle).  The two renderers apply different radiometric
transfer functions on purpose, so similarity measures face a genuinely
multimodal problem while the geometry stays exact.

The SAR shadow model assumes a north-aligned track (velocity along +y,
look direction +/-x), which canonical_scene_models always produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from sarstereo.geometry import (
    GroundPoint,
    ImagePoint,
    OpticalSensorModel,
    SarSensorModel,
    opt_forward,
    sar_forward,
)
from sarstereo.raster import GroundGrid, Raster


class SceneNotVisible(Exception):
    """No ray of the requested optical frame hits the scene."""


class SceneOutsideSwath(Exception):
    """Scene projects outside the configured SAR timing/range grid."""


@dataclass(frozen=True)
class Building:
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1 (meters)
    height: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.rect
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate building footprint")
        if not self.height > 0:
            raise ValueError("building height must be > 0")


@dataclass(frozen=True)
class SceneSpec:
    extent: tuple[float, float] = (500.0, 500.0)
    gsd: float = 1.0
    ground_height: float = 0.0
    buildings: tuple[Building, ...] = ()
    texture_seed: int = 0
    texture_smoothness: float = 2.0  # gaussian sigma, in cells
    texture_contrast: float = 0.6  # peak-to-peak relative amplitude

    def __post_init__(self):
        ex, ey = self.extent
        if not (ex > 0 and ey > 0 and self.gsd > 0):
            raise ValueError("extent and gsd must be positive")
        for b in self.buildings:
            x0, y0, x1, y1 = b.rect
            if not (0 <= x0 and x1 <= ex and 0 <= y0 and y1 <= ey):
                raise ValueError(f"building {b.rect} outside extent")

    @property
    def shape(self) -> tuple[int, int]:
        ex, ey = self.extent
        return int(round(ey / self.gsd)), int(round(ex / self.gsd))


@dataclass(frozen=True)
class RenderNoise:
    optical_sigma: float = 0.0  # additive gaussian, gray levels
    speckle_looks: int | None = None  # None disables speckle
    enable_shadow_layover: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.optical_sigma < 0:
            raise ValueError("optical_sigma must be >= 0")
        if self.speckle_looks is not None and self.speckle_looks < 1:
            raise ValueError("speckle_looks must be >= 1")


def _bilinear(samples: np.ndarray, r, c, fill: float) -> np.ndarray:
    """Vectorized bilinear sampling; positions off the grid return fill."""
    rows, cols = samples.shape
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    inside = (r >= 0) & (r <= rows - 1) & (c >= 0) & (c <= cols - 1)
    rc = np.clip(r, 0, rows - 1)
    cc = np.clip(c, 0, cols - 1)
    r0 = np.minimum(rc.astype(int), rows - 2) if rows > 1 else np.zeros_like(rc, int)
    c0 = np.minimum(cc.astype(int), cols - 2) if cols > 1 else np.zeros_like(cc, int)
    fr = rc - r0
    fc = cc - c0
    r1 = np.minimum(r0 + 1, rows - 1)
    c1 = np.minimum(c0 + 1, cols - 1)
    v = (
        samples[r0, c0] * (1 - fr) * (1 - fc)
        + samples[r1, c0] * fr * (1 - fc)
        + samples[r0, c1] * (1 - fr) * fc
        + samples[r1, c1] * fr * fc
    )
    return np.where(inside, v, fill)


def make_scene(spec: SceneSpec) -> tuple[Raster, Raster]:
    """DEM (ground plane plus extruded boxes) and shared reflectance."""
    rows, cols = spec.shape
    g = spec.gsd
    dem = np.full((rows, cols), spec.ground_height, dtype=float)
    x = (np.arange(cols) + 0.5) * g
    y = (np.arange(rows) + 0.5) * g
    xg, yg = np.meshgrid(x, y)
    rng = np.random.default_rng(spec.texture_seed)
    base = gaussian_filter(rng.standard_normal((rows, cols)),
                           spec.texture_smoothness)
    base = (base - base.min()) / (base.max() - base.min() + 1e-30)
    refl = 1.0 + spec.texture_contrast * (base - 0.5)
    for b in spec.buildings:
        x0, y0, x1, y1 = b.rect
        inside = (xg >= x0) & (xg < x1) & (yg >= y0) & (yg < y1)
        dem[inside] = spec.ground_height + b.height
        # distinct roof albedo so building corners carry image structure
        gain = 0.55 + 0.9 * rng.random()
        refl[inside] = np.clip(refl[inside] * gain + 0.25 * (rng.random() - 0.5),
                               0.15, 2.5)
    geo = {"geotransform": {"x0": 0.5 * g, "y0": 0.5 * g, "step": g}}
    dem_raster = Raster(samples=dem.astype(np.float32), sidecar=dict(geo))
    refl_raster = Raster(samples=refl.astype(np.float32), sidecar=dict(geo))
    return dem_raster, refl_raster


def _grid_of(raster: Raster) -> GroundGrid:
    return GroundGrid.from_raster(raster)


def _dem_at(grid: GroundGrid, x, y, ground: float) -> np.ndarray:
    r, c = (y - grid.y0) / grid.step, (x - grid.x0) / grid.step
    return _bilinear(grid.raster.samples.astype(float), r, c, ground)


def render_optical(
    dem: Raster,
    reflectance: Raster,
    model: OpticalSensorModel,
    noise: RenderNoise,
    shape: tuple[int, int],
) -> Raster:
    """Ray-cast the scene through the central projection camera.

    For every pixel the viewing ray is intersected with the DEM surface by
    marching downward in height and bisecting the first crossing, so marked
    ground points project into the rendered image within a fraction of a
    pixel.
    """
    grid = _grid_of(dem)
    ground = float(dem.samples.min())
    h_top = float(dem.samples.max()) + 1e-3
    rows, cols = shape

    rr, cc = np.meshgrid(np.arange(rows, dtype=float),
                         np.arange(cols, dtype=float), indexing="ij")
    x_img = (cc - model.principal_col) / model.focal
    y_img = (rr - model.principal_row) / model.focal
    dirs = np.stack([-x_img.ravel(), -y_img.ravel(),
                     -np.ones(rows * cols)])
    w = model.rotation @ dirs
    if np.all(w[2] >= 0):
        raise SceneNotVisible("camera does not look downward")

    def ground_xy(h):
        s = (h - model.pc[2]) / w[2]
        return model.pc[0] + s * w[0], model.pc[1] + s * w[1]

    n_steps = max(2, min(160, int(np.ceil((h_top - ground) / (grid.step / 2)))))
    heights = np.linspace(h_top, ground, n_steps + 1)
    hit_hi = np.full(rows * cols, ground)
    hit_lo = np.full(rows * cols, ground)
    undecided = np.ones(rows * cols, dtype=bool)
    prev_h = heights[0]
    for h in heights:
        if not undecided.any():
            break
        x, y = ground_xy(h)
        surf = _dem_at(grid, x, y, ground)
        crossed = undecided & (surf >= h)
        hit_hi[crossed] = prev_h
        hit_lo[crossed] = h
        undecided &= ~crossed
        prev_h = h
    # bisect the crossing height; rays that never crossed sit on the ground
    lo, hi = hit_lo.copy(), hit_hi.copy()
    for _ in range(22):
        mid = 0.5 * (lo + hi)
        x, y = ground_xy(mid)
        below = _dem_at(grid, x, y, ground) >= mid
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    h_hit = 0.5 * (lo + hi)
    x, y = ground_xy(h_hit)
    r_idx = (y - grid.y0) / grid.step
    c_idx = (x - grid.x0) / grid.step
    img = _bilinear(reflectance.samples.astype(float), r_idx, c_idx,
                    float(reflectance.samples.mean()))
    img = img.reshape(rows, cols)
    if noise.optical_sigma > 0:
        rng = np.random.default_rng(noise.seed + 1)
        img = img + rng.normal(0.0, noise.optical_sigma, img.shape)
    return Raster(
        samples=img.astype(np.float32),
        sidecar={"optical_model": model.to_json_dict()},
    )


def _shadow_mask(
    xg: np.ndarray, hg: np.ndarray, track_x: float, z_s: float
) -> np.ndarray:
    """True where terrain is radar-shadowed, per azimuth line.

    Cells are scanned in increasing ground distance from the track; a cell
    is shadowed when some nearer cell subtends a larger off-nadir angle.
    """
    dist = np.abs(xg - track_x)
    order = np.argsort(dist[0])
    beta = np.arctan2(dist, z_s - hg)
    beta_sorted = beta[:, order]
    horizon = np.maximum.accumulate(beta_sorted, axis=1)
    shadowed_sorted = beta_sorted < horizon - 1e-12
    out = np.empty_like(shadowed_sorted)
    out[:, order] = shadowed_sorted
    return out


def render_sar(
    dem: Raster,
    reflectance: Raster,
    model: SarSensorModel,
    noise: RenderNoise,
    shape: tuple[int, int],
    supersample: int = 2,
) -> Raster:
    """Forward-project the scene into the slant-range grid.

    Every (supersampled) ground cell is mapped through the range-Doppler
    equations and splatted bilinearly into its (azimuth row, range col)
    bin; multiple surfaces binned together accumulate (layover), shadowed
    cells are darkened, and gamma-distributed speckle with the configured
    number of looks multiplies the result.
    """
    grid = _grid_of(dem)
    rows_out, cols_out = shape
    q = max(1, int(supersample))
    sub = grid.step / q
    rows_in, cols_in = dem.samples.shape
    x = grid.x0 - grid.step / 2 + (np.arange(cols_in * q) + 0.5) * sub
    y = grid.y0 - grid.step / 2 + (np.arange(rows_in * q) + 0.5) * sub
    xg, yg = np.meshgrid(x, y)
    r_idx = (yg - grid.y0) / grid.step
    c_idx = (xg - grid.x0) / grid.step
    ground = float(dem.samples.min())
    hg = _bilinear(dem.samples.astype(float), r_idx, c_idx, ground)
    refl = _bilinear(reflectance.samples.astype(float), r_idx, c_idx, 0.0)

    # local incidence weighting: surface normal (-gx, -gy, 1) against the
    # direction back toward the sensor
    gy, gx = np.gradient(hg, sub)
    s_ref = model.position(model.t0)
    look = np.stack([xg - s_ref[0], yg - s_ref[1], hg - s_ref[2]])
    look /= np.linalg.norm(look, axis=0)
    n_norm = np.sqrt(gx * gx + gy * gy + 1.0)
    cos_inc = np.clip(
        (gx * look[0] + gy * look[1] - look[2]) / n_norm, 0.0, 1.0
    )
    weight = refl * (0.25 + 0.75 * cos_inc)

    if noise.enable_shadow_layover:
        shadowed = _shadow_mask(xg, hg, float(s_ref[0]), float(s_ref[2]))
        weight = np.where(shadowed, 0.03 * weight, weight)

    # forward projection (constant velocity: closed-form zero-Doppler time)
    v = model.v
    v2 = float(np.dot(v, v))
    dt = (
        v[0] * (xg - model.s0[0])
        + v[1] * (yg - model.s0[1])
        + v[2] * (hg - model.s0[2])
    ) / v2
    sx = model.s0[0] + v[0] * dt
    sy = model.s0[1] + v[1] * dt
    sz = model.s0[2] + v[2] * dt
    slant = np.sqrt((xg - sx) ** 2 + (yg - sy) ** 2 + (hg - sz) ** 2)
    row = dt / model.az_time_per_row  # t0 cancels: dt is relative to t0
    col = (slant - model.r_near) / model.range_per_col
    if row.min() > rows_out - 1 or row.max() < 0 or col.min() > cols_out - 1 or col.max() < 0:
        raise SceneOutsideSwath("scene footprint misses the SAR grid entirely")

    # energy conservation: a ground sub-cell of size sub x sub covers
    # sub*sin(incidence) of slant range and sub of azimuth
    sin_inc = np.sqrt(np.clip(1.0 - ((sz - hg) / slant) ** 2, 1e-6, 1.0))
    vnorm = np.sqrt(v2)
    density = (sub * sin_inc / model.range_per_col) * (
        sub / (vnorm * abs(model.az_time_per_row))
    )
    value = weight * density

    img = np.zeros(rows_out * cols_out)
    r0 = np.floor(row).astype(int)
    c0 = np.floor(col).astype(int)
    fr = row - r0
    fc = col - c0
    for dr, wr in ((0, 1 - fr), (1, fr)):
        for dc, wc in ((0, 1 - fc), (1, fc)):
            rr = r0 + dr
            cc = c0 + dc
            ok = (rr >= 0) & (rr < rows_out) & (cc >= 0) & (cc < cols_out)
            img += np.bincount(
                (rr[ok] * cols_out + cc[ok]).ravel(),
                weights=(value * wr * wc)[ok].ravel(),
                minlength=rows_out * cols_out,
            )
    img = img.reshape(rows_out, cols_out)

    if noise.speckle_looks is not None:
        rng = np.random.default_rng(noise.seed + 2)
        looks = noise.speckle_looks
        img = img * rng.gamma(looks, 1.0 / looks, img.shape)
    return Raster(
        samples=img.astype(np.float32),
        sidecar={"sar_model": model.to_json_dict()},
    )


def canonical_scene_models(
    spec: SceneSpec,
    sar_theta_deg: float = 35.0,
    sar_height: float = 500e3,
    opt_height: float = 700e3,
    margin_px: int = 8,
) -> tuple[SarSensorModel, OpticalSensorModel, tuple[int, int], tuple[int, int]]:
    """North-aligned spaceborne-like sensor pair covering the scene.

    The SAR track runs along +y west of the scene looking right (east) at
    the requested incidence angle; azimuth and ground-range pixel spacings
    both equal the scene GSD.  The optical camera is nadir above the scene
    center with kappa = pi, which makes image rows/cols increase with
    ground y/x at 1 pixel per GSD.  Returned shapes are (rows, cols) for
    the SAR and optical rasters.
    """
    ex, ey = spec.extent
    g = spec.gsd
    h0 = spec.ground_height
    theta = np.deg2rad(sar_theta_deg)
    cx, cy = ex / 2, ey / 2

    track_x = cx - (sar_height - h0) * np.tan(theta)
    vs = 7500.0
    r_at = lambda xx, hh: float(np.hypot(xx - track_x, sar_height - hh))
    r_near = r_at(0.0, h0 + 60.0) - margin_px * g * np.sin(theta)
    sar_rows = int(round(ey / g))
    sar_cols = int(np.ceil((r_at(ex, h0) - r_near) / (g * np.sin(theta)))) + margin_px
    sar = SarSensorModel(
        s0=(track_x, 0.0, sar_height),
        v=(0.0, vs, 0.0),
        t0=0.0,
        az_time_per_row=g / vs,
        r_near=r_near,
        range_per_col=g * np.sin(theta),
        look_side="right",
    )

    opt_rows = int(round(ey / g))
    opt_cols = int(round(ex / g))
    opt = OpticalSensorModel(
        pc=(cx, cy, opt_height),
        phi=0.0,
        omega=0.0,
        kappa=np.pi,
        focal=(opt_height - h0) / g,
        principal_row=(opt_rows - 1) / 2.0,
        principal_col=(opt_cols - 1) / 2.0,
    )
    return sar, opt, (sar_rows, sar_cols), (opt_rows, opt_cols)


@dataclass(frozen=True)
class Correspondence:
    sar: ImagePoint
    opt: ImagePoint
    ground: GroundPoint


@dataclass(frozen=True)
class TruthSet:
    pairs: tuple[Correspondence, ...]
    excluded: tuple[tuple[GroundPoint, str], ...] = field(default_factory=tuple)


def _optical_occluded(grid: GroundGrid, ground: float, model, p: GroundPoint) -> bool:
    d = model.pc - p.as_array()
    length = np.linalg.norm(d[:2])
    n = max(4, int(length / (grid.step / 2)))
    # walk from just above the point toward the camera
    ts = np.linspace(0.0, 1.0, n, endpoint=False)[1:]
    xs = p.x + ts * d[0]
    ys = p.y + ts * d[1]
    zs = p.h + ts * d[2]
    surf = _dem_at(grid, xs, ys, ground)
    return bool(np.any(surf > zs + 1e-6))


def _sar_shadowed(grid: GroundGrid, ground: float, model, p: GroundPoint) -> bool:
    s = model.position(sar_forward(model, p).t)
    dist = np.hypot(p.x - s[0], p.y - s[1])
    n = max(4, int(dist / (grid.step / 2)))
    ts = np.linspace(0.0, 1.0, n, endpoint=False)[1:]
    xs = s[0] + ts * (p.x - s[0])
    ys = s[1] + ts * (p.y - s[1])
    surf = _dem_at(grid, xs, ys, ground)
    beta_p = np.arctan2(dist, s[2] - p.h)
    beta = np.arctan2(np.hypot(xs - s[0], ys - s[1]), s[2] - surf)
    return bool(np.any(beta > beta_p + 1e-12))


def ground_truth_correspondences(
    dem: Raster,
    sar_model: SarSensorModel,
    opt_model: OpticalSensorModel,
    points,
    sar_shape: tuple[int, int] | None = None,
    opt_shape: tuple[int, int] | None = None,
) -> TruthSet:
    """Exact image-coordinate pairs of visible ground points.

    Points occluded for the optical camera or radar-shadowed are excluded
    with a reason code; optional raster shapes additionally reject points
    projecting outside either frame.
    """
    grid = _grid_of(dem)
    ground = float(dem.samples.min())
    pairs = []
    excluded = []
    for p in points:
        if _sar_shadowed(grid, ground, sar_model, p):
            excluded.append((p, "sar_shadow"))
            continue
        if _optical_occluded(grid, ground, opt_model, p):
            excluded.append((p, "optical_occluded"))
            continue
        sar_ip = sar_model.pixel_from_obs(sar_forward(sar_model, p))
        opt_ip = opt_forward(opt_model, p)
        if sar_shape is not None and not (
            0 <= sar_ip.row <= sar_shape[0] - 1
            and 0 <= sar_ip.col <= sar_shape[1] - 1
        ):
            excluded.append((p, "outside_sar"))
            continue
        if opt_shape is not None and not (
            0 <= opt_ip.row <= opt_shape[0] - 1
            and 0 <= opt_ip.col <= opt_shape[1] - 1
        ):
            excluded.append((p, "outside_optical"))
            continue
        pairs.append(Correspondence(sar=sar_ip, opt=opt_ip, ground=p))
    return TruthSet(pairs=tuple(pairs), excluded=tuple(excluded))

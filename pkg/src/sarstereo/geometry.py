"""Sensor models and exact forward/inverse projections.

Two imaging geometries are modeled in one local, metric, east/north/up
Cartesian frame:

* SAR range-Doppler: a point is imaged at the zero-Doppler time t where the
  sensor-to-target vector is perpendicular to the (constant) velocity, at
  slant range R = |P - S(t)|.
* Optical central projection: the classical collinearity equations with
  rotation R = Rz(kappa) @ Ry(phi) @ Rx(omega) and focal length in pixels.

Image axis convention: x maps to col and y to row, both increasing with the
pixel index.  A point is in front of the optical camera when the projection
denominator is negative (aerial convention: identity rotation looks down).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GeometryError(Exception):
    """Base class for projection failures."""


class NoIntersection(GeometryError):
    """Range sphere does not reach the requested height plane."""


class AmbiguousSide(GeometryError):
    """Vertical velocity: left/right of track is undefined."""


class BehindCamera(GeometryError):
    """Point is not in front of the optical camera."""


class RayParallelToPlane(GeometryError):
    """Viewing ray does not intersect the height plane."""


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite 3-vector")
    return a


@dataclass(frozen=True)
class GroundPoint:
    """3D object coordinates in the local frame (meters)."""

    x: float
    y: float
    h: float

    def __post_init__(self):
        if not all(np.isfinite([self.x, self.y, self.h])):
            raise ValueError("GroundPoint coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.h])

    @staticmethod
    def from_array(a) -> "GroundPoint":
        return GroundPoint(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ImagePoint:
    """Sub-pixel image coordinates (row, col)."""

    row: float
    col: float

    def __post_init__(self):
        if not all(np.isfinite([self.row, self.col])):
            raise ValueError("ImagePoint coordinates must be finite")


@dataclass(frozen=True)
class SarObservation:
    """Principal SAR measurements: zero-Doppler time t and slant range r."""

    t: float
    r: float

    def __post_init__(self):
        if not (np.isfinite(self.t) and np.isfinite(self.r) and self.r > 0):
            raise ValueError("SarObservation requires finite t and r > 0")


@dataclass(frozen=True)
class SarSensorModel:
    """Linear zero-Doppler orbit with timing/range-to-pixel mapping.

    s0 is the sensor position at reference time t0, v the constant velocity.
    Row r of the image is acquired at t = t0 + r * az_time_per_row and col c
    sits at slant range r_near + c * range_per_col.
    """

    s0: np.ndarray
    v: np.ndarray
    t0: float = 0.0
    az_time_per_row: float = 1e-3
    r_near: float = 0.0
    range_per_col: float = 1.0
    look_side: str = "right"

    def __post_init__(self):
        object.__setattr__(self, "s0", _vec3(self.s0))
        object.__setattr__(self, "v", _vec3(self.v))
        if np.linalg.norm(self.v) <= 0:
            raise ValueError("SarSensorModel requires |v| > 0")
        if self.range_per_col <= 0:
            raise ValueError("SarSensorModel requires range_per_col > 0")
        if self.az_time_per_row == 0:
            raise ValueError("SarSensorModel requires az_time_per_row != 0")
        if self.look_side not in ("left", "right"):
            raise ValueError("look_side must be 'left' or 'right'")

    def position(self, t: float) -> np.ndarray:
        return self.s0 + self.v * (t - self.t0)

    def obs_from_pixel(self, ip: ImagePoint) -> SarObservation:
        return SarObservation(
            t=self.t0 + ip.row * self.az_time_per_row,
            r=self.r_near + ip.col * self.range_per_col,
        )

    def pixel_from_obs(self, obs: SarObservation) -> ImagePoint:
        return ImagePoint(
            row=(obs.t - self.t0) / self.az_time_per_row,
            col=(obs.r - self.r_near) / self.range_per_col,
        )

    def to_json_dict(self) -> dict:
        return {
            "s0": [float(c) for c in self.s0],
            "v": [float(c) for c in self.v],
            "t0": self.t0,
            "az_time_per_row": self.az_time_per_row,
            "r_near": self.r_near,
            "range_per_col": self.range_per_col,
            "look_side": self.look_side,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "SarSensorModel":
        return SarSensorModel(
            s0=d["s0"],
            v=d["v"],
            t0=float(d["t0"]),
            az_time_per_row=float(d["az_time_per_row"]),
            r_near=float(d["r_near"]),
            range_per_col=float(d["range_per_col"]),
            look_side=d["look_side"],
        )


@dataclass(frozen=True)
class OpticalSensorModel:
    """Central projection camera: projection center, angles, focal in pixels."""

    pc: np.ndarray
    phi: float = 0.0
    omega: float = 0.0
    kappa: float = 0.0
    focal: float = 1.0
    principal_row: float = 0.0
    principal_col: float = 0.0
    _rot: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pc", _vec3(self.pc))
        if not self.focal > 0:
            raise ValueError("OpticalSensorModel requires focal > 0")
        rot = rotation_from_angles(self.phi, self.omega, self.kappa)
        err = np.abs(rot @ rot.T - np.eye(3)).max()
        if err > 1e-12 or abs(np.linalg.det(rot) - 1.0) > 1e-12:
            raise ValueError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "_rot", rot)

    @property
    def rotation(self) -> np.ndarray:
        return self._rot

    def to_json_dict(self) -> dict:
        return {
            "pc": [float(c) for c in self.pc],
            "phi": self.phi,
            "omega": self.omega,
            "kappa": self.kappa,
            "focal": self.focal,
            "principal_row": self.principal_row,
            "principal_col": self.principal_col,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "OpticalSensorModel":
        return OpticalSensorModel(
            pc=d["pc"],
            phi=float(d["phi"]),
            omega=float(d["omega"]),
            kappa=float(d["kappa"]),
            focal=float(d["focal"]),
            principal_row=float(d["principal_row"]),
            principal_col=float(d["principal_col"]),
        )


def save_model_json(model, path) -> None:
    """Write a sensor-model sidecar document."""
    key = "sar_model" if isinstance(model, SarSensorModel) else "optical_model"
    Path(path).write_text(json.dumps({key: model.to_json_dict()}, indent=2) + "\n")


def load_model_json(path):
    """Read a sensor-model sidecar written by save_model_json."""
    d = json.loads(Path(path).read_text())
    if "sar_model" in d:
        return SarSensorModel.from_json_dict(d["sar_model"])
    if "optical_model" in d:
        return OpticalSensorModel.from_json_dict(d["optical_model"])
    raise ValueError(f"{path}: no sensor model found")


def rotation_from_angles(phi: float, omega: float, kappa: float) -> np.ndarray:
    """Orthonormal rotation R = Rz(kappa) @ Ry(phi) @ Rx(omega)."""
    if not all(np.isfinite([phi, omega, kappa])):
        raise ValueError("rotation angles must be finite")
    cp, sp = np.cos(phi), np.sin(phi)
    co, so = np.cos(omega), np.sin(omega)
    ck, sk = np.cos(kappa), np.sin(kappa)
    rx = np.array([[1, 0, 0], [0, co, -so], [0, so, co]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[ck, -sk, 0], [sk, ck, 0], [0, 0, 1]])
    return rz @ ry @ rx


def sar_forward(model: SarSensorModel, p: GroundPoint) -> SarObservation:
    """Project a ground point through the range-Doppler equations.

    For a constant-velocity orbit the zero-Doppler condition
    v . (p - s(t)) = 0 has the closed form t = t0 + v . (p - s0) / |v|^2.
    """
    pa = p.as_array()
    v2 = float(np.dot(model.v, model.v))
    t = model.t0 + float(np.dot(model.v, pa - model.s0)) / v2
    r = float(np.linalg.norm(pa - model.position(t)))
    return SarObservation(t=t, r=r)


def sar_inverse_at_height(
    model: SarSensorModel, obs: SarObservation, h: float
) -> GroundPoint:
    """Invert (t, r) to the ground point at height h on the look side.

    The zero-Doppler plane through s(t) intersected with z = h is a line;
    the slant range picks two candidates on it and look_side disambiguates.
    """
    s = model.position(obs.t)
    n = model.v / np.linalg.norm(model.v)
    # right-pointing line direction v-hat x z-hat: in the zero-Doppler plane
    # and horizontal, so it spans the intersection line with z = h
    right = np.array([n[1], -n[0], 0.0])
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise AmbiguousSide("velocity is vertical; look side undefined")
    right /= rn
    # closest point on the line {n.(q-s)=0, q_z=h} to the sensor
    nz = n[2]
    mu = (h - s[2]) / (1.0 - nz * nz)
    lam = -nz * mu
    q0 = s + lam * n + mu * np.array([0.0, 0.0, 1.0])
    d0sq = float(np.dot(q0 - s, q0 - s))
    disc = obs.r * obs.r - d0sq
    if disc < 0:
        raise NoIntersection(
            f"range {obs.r} below closest plane distance {np.sqrt(d0sq)}"
        )
    step = np.sqrt(disc)
    q = q0 + (step if model.look_side == "right" else -step) * right
    return GroundPoint(float(q[0]), float(q[1]), float(h))


def opt_forward(model: OpticalSensorModel, p: GroundPoint) -> ImagePoint:
    """Project a ground point through the central projection equations."""
    d = p.as_array() - model.pc
    q = model.rotation.T @ d  # camera-frame coordinates
    if q[2] >= 0:
        raise BehindCamera("projection denominator has the wrong sign")
    x_img = model.focal * q[0] / q[2]
    y_img = model.focal * q[1] / q[2]
    return ImagePoint(
        row=model.principal_row + y_img, col=model.principal_col + x_img
    )


def opt_inverse_at_height(
    model: OpticalSensorModel, ip: ImagePoint, h: float
) -> GroundPoint:
    """Intersect the viewing ray of a pixel with the plane z = h."""
    x_img = ip.col - model.principal_col
    y_img = ip.row - model.principal_row
    # camera-frame direction with the in-front sign (negative third component)
    q_dir = -np.array([x_img / model.focal, y_img / model.focal, 1.0])
    w = model.rotation @ q_dir
    if abs(w[2]) < 1e-15 * np.linalg.norm(w):
        raise RayParallelToPlane(f"ray parallel to plane z = {h}")
    s = (h - model.pc[2]) / w[2]
    p = model.pc + s * w
    return GroundPoint(float(p[0]), float(p[1]), float(h))

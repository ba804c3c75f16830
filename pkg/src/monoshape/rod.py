"""Static Cosserat-rod model of a two-segment tendon-driven continuum robot.

The rod state (position p, orientation R, internal force n, internal moment
m, all in the base frame) evolves along arclength s by

    p' = R v,   R' = R hat(u),   n' = -f_dist,   m' = -p' x n - l_dist

with linear constitutive laws v = e3 + Kse^-1 R^T n and u = Kbt^-1 R^T m.
Tendon tension enters as a point force plus point moment at each segment's
termination disk, directed along the chord to the previous routing disk.
The two-point boundary value problem (clamped base, prescribed tip wrench)
is solved by shooting on the unknown base internal wrench with a damped
Newton iteration; a load-continuation fallback handles the rare starts that
plain Newton cannot.

Sign convention: n(s), m(s) are the loads that the portion of the robot
distal to s applies across the cut, so n(s) equals the sum of all external
forces applied beyond s and point loads subtract during base-to-tip
integration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.interpolate import PchipInterpolator

from .errors import ConvergenceError, InputError

DENSE_POINTS = 251  # ground-truth centerline resolution, matching a 251-sample shape sensor


@dataclass
class RobotGeometry:
    """Geometry and material parameters, SI units throughout."""

    total_length: float = 0.250
    outer_diameter: float = 0.020
    segments: int = 2
    disks_per_segment: int = 10
    backbone_radius: float = 0.5e-3
    youngs_modulus: float = 54e9
    shear_modulus: float = 54e9 / 2.6
    second_moment: float | None = None  # default pi r^4 / 4
    tendon_count: int = 3
    tendon_pitch_radius: float = 8e-3
    tension_max: float = 2.0
    linear_density: float = 6450.0 * math.pi * (0.5e-3) ** 2  # Nitinol backbone, kg/m
    gravity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.total_length <= 0:
            raise InputError("total_length must be positive")
        if not 0 < self.tendon_pitch_radius < self.outer_diameter / 2:
            raise InputError("tendon pitch radius must lie inside the outer radius")
        if self.second_moment is None:
            self.second_moment = math.pi * self.backbone_radius**4 / 4.0

    @property
    def segment_length(self) -> float:
        return self.total_length / self.segments

    @property
    def disk_spacing(self) -> float:
        return self.segment_length / self.disks_per_segment

    @property
    def bending_stiffness(self) -> float:
        return self.youngs_modulus * self.second_moment

    @property
    def tendon_angles(self) -> np.ndarray:
        # Tendon 0 on the +x axis; the set is mirror-symmetric about the x-z plane.
        return 2.0 * math.pi * np.arange(self.tendon_count) / self.tendon_count

    @property
    def tendon_offsets(self) -> np.ndarray:
        """Attachment points in the disk frame, (tendon_count, 3)."""
        ang = self.tendon_angles
        return self.tendon_pitch_radius * np.stack(
            [np.cos(ang), np.sin(ang), np.zeros_like(ang)], axis=1
        )

    def stiffness_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonals of Kse (shear/extension) and Kbt (bending/torsion)."""
        area = math.pi * self.backbone_radius**2
        i2 = self.second_moment
        kse = np.array([self.shear_modulus * area, self.shear_modulus * area,
                        self.youngs_modulus * area])
        kbt = np.array([self.youngs_modulus * i2, self.youngs_modulus * i2,
                        self.shear_modulus * 2.0 * i2])
        return kse, kbt

    def to_json(self) -> str:
        doc = {k: getattr(self, k) for k in (
            "total_length", "outer_diameter", "segments", "disks_per_segment",
            "backbone_radius", "youngs_modulus", "shear_modulus", "second_moment",
            "tendon_count", "tendon_pitch_radius", "tension_max", "linear_density")}
        doc["gravity"] = list(self.gravity)
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RobotGeometry":
        doc = json.loads(text)
        doc["gravity"] = tuple(doc.get("gravity", (0.0, 0.0, 0.0)))
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "RobotGeometry":
        return cls.from_json(Path(path).read_text())

    def digest_fields(self) -> dict:
        return json.loads(self.to_json())


@dataclass
class RobotConfiguration:
    """Per-segment tendon tensions plus an optional external tip wrench."""

    tensions: np.ndarray  # (segments, tendon_count), N
    tip_force: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N, base frame
    tip_moment: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N*m, base frame

    def __post_init__(self):
        self.tensions = np.asarray(self.tensions, dtype=np.float64)
        self.tip_force = np.asarray(self.tip_force, dtype=np.float64).reshape(3)
        self.tip_moment = np.asarray(self.tip_moment, dtype=np.float64).reshape(3)

    def validate(self, geom: RobotGeometry) -> None:
        if self.tensions.shape != (geom.segments, geom.tendon_count):
            raise InputError(
                f"tensions shape {self.tensions.shape} does not match "
                f"({geom.segments}, {geom.tendon_count})"
            )
        if np.any(self.tensions < 0):
            raise InputError("tendon tensions must be non-negative")
        if np.any(self.tensions > geom.tension_max + 1e-12):
            raise InputError(f"tendon tension exceeds actuation limit {geom.tension_max} N")

    def to_dict(self) -> dict:
        return {
            "tensions": self.tensions.tolist(),
            "tip_force": self.tip_force.tolist(),
            "tip_moment": self.tip_moment.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RobotConfiguration":
        return cls(
            tensions=np.asarray(doc["tensions"]),
            tip_force=np.asarray(doc["tip_force"]),
            tip_moment=np.asarray(doc["tip_moment"]),
        )


@dataclass
class RodState:
    """Converged rod trajectory on the integration grid (base frame)."""

    s: np.ndarray          # (n+1,)
    positions: np.ndarray  # (n+1, 3)
    rotations: np.ndarray  # (n+1, 3, 3)
    internal_force: np.ndarray   # (n+1, 3)
    internal_moment: np.ndarray  # (n+1, 3)
    residual: float        # scaled boundary residual at convergence

    @property
    def tip(self) -> np.ndarray:
        return self.positions[-1]


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product; np.cross's axis handling dominates the hot loop."""
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def _hat(u: np.ndarray) -> np.ndarray:
    """Batched skew-symmetric matrices, (B,3) -> (B,3,3)."""
    b = u.shape[0]
    h = np.zeros((b, 3, 3), dtype=u.dtype)
    h[:, 0, 1] = -u[:, 2]
    h[:, 0, 2] = u[:, 1]
    h[:, 1, 0] = u[:, 2]
    h[:, 1, 2] = -u[:, 0]
    h[:, 2, 0] = -u[:, 1]
    h[:, 2, 1] = u[:, 0]
    return h


def _orthonormalize(r: np.ndarray) -> np.ndarray:
    """Batched Gram-Schmidt on columns, det kept at +1 via the cross product."""
    c0 = r[:, :, 0]
    c0 = c0 / np.linalg.norm(c0, axis=1, keepdims=True)
    c1 = r[:, :, 1]
    c1 = c1 - np.sum(c0 * c1, axis=1, keepdims=True) * c0
    c1 = c1 / np.linalg.norm(c1, axis=1, keepdims=True)
    c2 = _cross(c0, c1)
    return np.stack([c0, c1, c2], axis=2)


@njit(cache=True)
def _rhs_fill(y, dy, b, kse_inv, kbt_inv, fd0, fd1, fd2):
    """Write the state derivative for batch row b into dy[b]."""
    r00, r01, r02 = y[b, 3], y[b, 4], y[b, 5]
    r10, r11, r12 = y[b, 6], y[b, 7], y[b, 8]
    r20, r21, r22 = y[b, 9], y[b, 10], y[b, 11]
    nx, ny, nz = y[b, 12], y[b, 13], y[b, 14]
    mx, my, mz = y[b, 15], y[b, 16], y[b, 17]
    # local strains from the linear constitutive law
    v0 = kse_inv[0] * (r00 * nx + r10 * ny + r20 * nz)
    v1 = kse_inv[1] * (r01 * nx + r11 * ny + r21 * nz)
    v2 = 1.0 + kse_inv[2] * (r02 * nx + r12 * ny + r22 * nz)
    u0 = kbt_inv[0] * (r00 * mx + r10 * my + r20 * mz)
    u1 = kbt_inv[1] * (r01 * mx + r11 * my + r21 * mz)
    u2 = kbt_inv[2] * (r02 * mx + r12 * my + r22 * mz)
    dp0 = r00 * v0 + r01 * v1 + r02 * v2
    dp1 = r10 * v0 + r11 * v1 + r12 * v2
    dp2 = r20 * v0 + r21 * v1 + r22 * v2
    dy[b, 0] = dp0
    dy[b, 1] = dp1
    dy[b, 2] = dp2
    # dR = R hat(u), hat columns (0,u2,-u1), (-u2,0,u0), (u1,-u0,0)
    dy[b, 3] = r01 * u2 - r02 * u1
    dy[b, 4] = r02 * u0 - r00 * u2
    dy[b, 5] = r00 * u1 - r01 * u0
    dy[b, 6] = r11 * u2 - r12 * u1
    dy[b, 7] = r12 * u0 - r10 * u2
    dy[b, 8] = r10 * u1 - r11 * u0
    dy[b, 9] = r21 * u2 - r22 * u1
    dy[b, 10] = r22 * u0 - r20 * u2
    dy[b, 11] = r20 * u1 - r21 * u0
    dy[b, 12] = -fd0
    dy[b, 13] = -fd1
    dy[b, 14] = -fd2
    # dm = -p' x n
    dy[b, 15] = -(dp1 * nz - dp2 * ny)
    dy[b, 16] = -(dp2 * nx - dp0 * nz)
    dy[b, 17] = -(dp0 * ny - dp1 * nx)


@njit(cache=True)
def _shoot_kernel(base, segments, steps_per_segment, steps_per_gap, h,
                  kse_inv, kbt_inv, f_dist, offsets, tensions,
                  tip_force, tip_moment, load_scale, record):
    """Batched RK4 shoot from base wrenches; returns (residual, trajectory).

    The residual is the mismatch between the integrated internal wrench at
    the tip and the loads applied there (tendon terminations of the last
    segment plus the external tip wrench). The trajectory is recorded only
    when `record`; otherwise a 1x1x1 placeholder is returned.
    """
    nb = base.shape[0]
    total_steps = segments * steps_per_segment
    y = np.zeros((nb, 18))
    for b in range(nb):
        y[b, 3] = 1.0
        y[b, 7] = 1.0
        y[b, 11] = 1.0
        for j in range(6):
            y[b, 12 + j] = base[b, j]

    if record:
        traj = np.empty((total_steps + 1, nb, 18))
        for b in range(nb):
            for j in range(18):
                traj[0, b, j] = y[b, j]
    else:
        traj = np.empty((1, 1, 1))

    fd0 = load_scale * f_dist[0]
    fd1 = load_scale * f_dist[1]
    fd2 = load_scale * f_dist[2]
    ntend = offsets.shape[0]
    k1 = np.empty((nb, 18))
    k2 = np.empty((nb, 18))
    k3 = np.empty((nb, 18))
    k4 = np.empty((nb, 18))
    yt = np.empty((nb, 18))
    prev_disk = np.zeros((nb, 18))
    residual = np.zeros((nb, 6))

    step_global = 0
    for seg in range(segments):
        for i in range(steps_per_segment):
            if i == steps_per_segment - steps_per_gap:
                for b in range(nb):
                    for j in range(18):
                        prev_disk[b, j] = y[b, j]
            for b in range(nb):
                _rhs_fill(y, k1, b, kse_inv, kbt_inv, fd0, fd1, fd2)
            for b in range(nb):
                for j in range(18):
                    yt[b, j] = y[b, j] + 0.5 * h * k1[b, j]
                _rhs_fill(yt, k2, b, kse_inv, kbt_inv, fd0, fd1, fd2)
            for b in range(nb):
                for j in range(18):
                    yt[b, j] = y[b, j] + 0.5 * h * k2[b, j]
                _rhs_fill(yt, k3, b, kse_inv, kbt_inv, fd0, fd1, fd2)
            for b in range(nb):
                for j in range(18):
                    yt[b, j] = y[b, j] + h * k3[b, j]
                _rhs_fill(yt, k4, b, kse_inv, kbt_inv, fd0, fd1, fd2)
            for b in range(nb):
                for j in range(18):
                    y[b, j] = y[b, j] + (h / 6.0) * (
                        k1[b, j] + 2.0 * k2[b, j] + 2.0 * k3[b, j] + k4[b, j]
                    )
            step_global += 1
            if record:
                for b in range(nb):
                    for j in range(18):
                        traj[step_global, b, j] = y[b, j]

        # point loads from this segment's tendons at its termination disk
        for b in range(nb):
            fsx = fsy = fsz = 0.0
            msx = msy = msz = 0.0
            px, py, pz = y[b, 0], y[b, 1], y[b, 2]
            qx, qy, qz = prev_disk[b, 0], prev_disk[b, 1], prev_disk[b, 2]
            for t in range(ntend):
                ox, oy, oz = offsets[t, 0], offsets[t, 1], offsets[t, 2]
                # attachment on the termination disk and anchor on the disk below
                ax = px + y[b, 3] * ox + y[b, 4] * oy + y[b, 5] * oz
                ay = py + y[b, 6] * ox + y[b, 7] * oy + y[b, 8] * oz
                az = pz + y[b, 9] * ox + y[b, 10] * oy + y[b, 11] * oz
                bx = qx + prev_disk[b, 3] * ox + prev_disk[b, 4] * oy + prev_disk[b, 5] * oz
                by = qy + prev_disk[b, 6] * ox + prev_disk[b, 7] * oy + prev_disk[b, 8] * oz
                bz = qz + prev_disk[b, 9] * ox + prev_disk[b, 10] * oy + prev_disk[b, 11] * oz
                dx, dy_, dz = bx - ax, by - ay, bz - az
                norm = (dx * dx + dy_ * dy_ + dz * dz) ** 0.5
                c = load_scale * tensions[seg, t] / norm
                fx, fy, fz = c * dx, c * dy_, c * dz
                fsx += fx
                fsy += fy
                fsz += fz
                rx, ry, rz = ax - px, ay - py, az - pz
                msx += ry * fz - rz * fy
                msy += rz * fx - rx * fz
                msz += rx * fy - ry * fx
            if seg < segments - 1:
                y[b, 12] -= fsx
                y[b, 13] -= fsy
                y[b, 14] -= fsz
                y[b, 15] -= msx
                y[b, 16] -= msy
                y[b, 17] -= msz
            else:
                residual[b, 0] = y[b, 12] - (fsx + load_scale * tip_force[0])
                residual[b, 1] = y[b, 13] - (fsy + load_scale * tip_force[1])
                residual[b, 2] = y[b, 14] - (fsz + load_scale * tip_force[2])
                residual[b, 3] = y[b, 15] - (msx + load_scale * tip_moment[0])
                residual[b, 4] = y[b, 16] - (msy + load_scale * tip_moment[1])
                residual[b, 5] = y[b, 17] - (msz + load_scale * tip_moment[2])
        if seg < segments - 1 and record:
            for b in range(nb):
                for j in range(18):
                    traj[step_global, b, j] = y[b, j]
    return residual, traj


class _Integrator:
    """RK4 base-to-tip integration of a batch of candidate base wrenches."""

    def __init__(self, geom: RobotGeometry, cfg: RobotConfiguration, steps: int):
        if steps % (geom.segments * geom.disks_per_segment):
            raise InputError(
                f"steps ({steps}) must be a multiple of segments*disks_per_segment "
                f"({geom.segments * geom.disks_per_segment}) so disks fall on grid nodes"
            )
        self.geom = geom
        self.cfg = cfg
        self.steps = steps
        self.h = geom.total_length / steps
        kse, kbt = geom.stiffness_matrices()
        self.kse_inv = 1.0 / kse
        self.kbt_inv = 1.0 / kbt
        self.f_dist = geom.linear_density * np.asarray(geom.gravity, dtype=np.float64)
        self.offsets = geom.tendon_offsets  # (T, 3)
        self.steps_per_segment = steps // geom.segments
        self.steps_per_gap = self.steps_per_segment // geom.disks_per_segment

    def run(self, base_wrench: np.ndarray, load_scale: float = 1.0, record: bool = False):
        residual, traj = _shoot_kernel(
            np.ascontiguousarray(base_wrench, dtype=np.float64),
            self.geom.segments, self.steps_per_segment, self.steps_per_gap, self.h,
            self.kse_inv, self.kbt_inv, self.f_dist, self.offsets,
            np.ascontiguousarray(self.cfg.tensions),
            self.cfg.tip_force, self.cfg.tip_moment,
            float(load_scale), bool(record),
        )
        return residual, (traj if record else None)


def _residual_scale(geom: RobotGeometry) -> np.ndarray:
    """Characteristic force EI/L^2 and moment EI/L for dimensionless residuals."""
    ei = geom.bending_stiffness
    length = geom.total_length
    return np.array([ei / length**2] * 3 + [ei / length] * 3)


def solve_static(
    geom: RobotGeometry,
    cfg: RobotConfiguration,
    steps: int = 200,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> RodState:
    """Solve the static boundary value problem for one configuration.

    Shooting on the unknown base internal wrench with damped Newton and a
    finite-difference Jacobian. If the direct solve stalls, the loads are
    ramped up in stages with warm starts (load continuation). Raises
    ConvergenceError with the last scaled residual norm if both fail.
    """
    cfg.validate(geom)
    integ = _Integrator(geom, cfg, steps)
    scale = _residual_scale(geom)

    guess = np.zeros(6)
    ok, guess, res_norm = _newton(integ, guess, scale, tol, max_iter, load_scale=1.0)
    if not ok:
        ok, guess, res_norm = _continuation(integ, scale, tol, max_iter)
    if not ok:
        raise ConvergenceError(
            f"shooting did not converge (scaled residual {res_norm:.3e})", residual=res_norm
        )

    residual, traj = integ.run(guess[None, :], record=True)
    res_norm = float(np.linalg.norm(residual[0] / scale))
    traj = traj[:, 0, :]
    # RK4 drifts off SO(3) by ~1e-13 over the grid; project the stored frames.
    rotations = _orthonormalize(traj[:, 3:12].reshape(-1, 3, 3))
    return RodState(
        s=np.linspace(0.0, geom.total_length, steps + 1),
        positions=traj[:, 0:3].copy(),
        rotations=rotations,
        internal_force=traj[:, 12:15].copy(),
        internal_moment=traj[:, 15:18].copy(),
        residual=res_norm,
    )


def _newton(integ, guess, scale, tol, max_iter, load_scale):
    x = guess.copy()
    eps = 1e-6 * np.maximum(scale, np.abs(x))
    res, _ = integ.run(x[None, :], load_scale)
    norm = float(np.linalg.norm(res[0] / scale))
    for _ in range(max_iter):
        if norm < tol:
            return True, x, norm
        # Central-difference Jacobian, all 12 perturbed trajectories batched.
        pts = np.repeat(x[None, :], 12, axis=0)
        for j in range(6):
            pts[2 * j, j] += eps[j]
            pts[2 * j + 1, j] -= eps[j]
        r_all, _ = integ.run(pts, load_scale)
        jac = np.empty((6, 6))
        for j in range(6):
            jac[:, j] = (r_all[2 * j] - r_all[2 * j + 1]) / (2.0 * eps[j])
        try:
            step = np.linalg.solve(jac, res[0])
        except np.linalg.LinAlgError:
            return False, x, norm
        alpha = 1.0
        while alpha > 1e-4:
            trial = x - alpha * step
            r_t, _ = integ.run(trial[None, :], load_scale)
            n_t = float(np.linalg.norm(r_t[0] / scale))
            if n_t < (1.0 - 1e-4 * alpha) * norm or n_t < tol:
                x, res, norm = trial, r_t, n_t
                break
            alpha *= 0.5
        else:
            return False, x, norm
    return norm < tol, x, norm


def _continuation(integ, scale, tol, max_iter, stages: int = 10):
    x = np.zeros(6)
    norm = math.inf
    for lam in np.linspace(1.0 / stages, 1.0, stages):
        ok, x, norm = _newton(integ, x, scale, tol, max_iter, load_scale=float(lam))
        if not ok:
            return False, x, norm
    return True, x, norm


def sample_centerline(state: RodState, count: int) -> np.ndarray:
    """Resample positions at `count` arclength-uniform stations (monotone PCHIP)."""
    if count < 2:
        raise InputError(f"need at least 2 centerline points, got {count}")
    interp = PchipInterpolator(state.s, state.positions, axis=0)
    s_new = np.linspace(state.s[0], state.s[-1], count)
    return interp(s_new)


def resample_at(state_s: np.ndarray, points: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    """Interpolate a dense centerline at arbitrary relative arclengths."""
    interp = PchipInterpolator(state_s, points, axis=0)
    return interp(fractions * state_s[-1])


def sample_configuration(
    rng: np.random.Generator, mode: str, geom: RobotGeometry
) -> RobotConfiguration:
    """Draw a random configuration.

    Tensions are independent uniform draws in [0, tension_max] per tendon.
    In 'loaded' mode each tip force component is uniform in [-0.1, 0.1] N
    and each tip moment component uniform in [-0.01, 0.01] N*m; 'free_space'
    leaves the tip wrench at exactly zero.
    """
    if mode not in ("free_space", "loaded"):
        raise InputError(f"unknown sampling mode {mode!r}")
    tensions = rng.uniform(0.0, geom.tension_max, size=(geom.segments, geom.tendon_count))
    if mode == "loaded":
        force = rng.uniform(-0.1, 0.1, size=3)
        moment = rng.uniform(-0.01, 0.01, size=3)
    else:
        force = np.zeros(3)
        moment = np.zeros(3)
    return RobotConfiguration(tensions=tensions, tip_force=force, tip_moment=moment)

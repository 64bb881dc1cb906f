"""Time-parameterized reference trajectories for the planar benchmark.

Two closed curves through the origin: a lemniscate of Gerono (figure
eight, sin*cos parameterization) and an ellipse dropped by one amplitude
so it starts at the origin.  Positions and velocities are analytic, so
preview windows of any length are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import presets

KINDS = ("lemniscate", "ellipse")


class TrajectoryError(ValueError):
    """Invalid trajectory parameters or out-of-bounds reference."""


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Reference curve r(t) = (y, dy, z, dz) with angular frequency omega.

    Construction rejects parameter choices whose position or velocity
    envelope leaves the flight-space box; the tighter shift-admissibility
    check against the synthesized sets runs at experiment load.
    """

    kind: str
    a_y: float = 1.0
    a_z: float = 0.5
    omega: float = 0.6
    phase: float = 0.0
    duration: float = 20.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TrajectoryError(
                f"unknown trajectory kind '{self.kind}' (expected one of {KINDS})")
        if self.a_y <= 0.0 or self.a_z <= 0.0:
            raise TrajectoryError("amplitudes must be positive")
        if self.omega <= 0.0:
            raise TrajectoryError("angular frequency must be positive")
        if self.duration <= 0.0:
            raise TrajectoryError("duration must be positive")
        env = self.envelope()
        boxes = {
            "y": (presets.POS_Y_MAX, presets.VEL_MAX),
            "z": (presets.POS_Z_MAX, presets.VEL_MAX),
        }
        for axis in ("y", "z"):
            pos, vel = env[axis]
            pos_max, vel_max = boxes[axis]
            if pos >= pos_max:
                raise TrajectoryError(
                    f"{axis} position envelope {pos:g} m reaches the "
                    f"{pos_max:g} m bound")
            if vel >= vel_max:
                raise TrajectoryError(
                    f"{axis} velocity envelope {vel:g} m/s reaches the "
                    f"{vel_max:g} m/s bound")

    def envelope(self) -> dict:
        """Analytic per-axis (max |position|, max |velocity|) over all t."""
        if self.kind == "lemniscate":
            return {
                "y": (self.a_y, self.a_y * self.omega),
                "z": (0.5 * self.a_z, self.a_z * self.omega),
            }
        return {
            "y": (self.a_y, self.a_y * self.omega),
            "z": (2.0 * self.a_z, self.a_z * self.omega),
        }

    def reference_at(self, t):
        """Reference states at time(s) t; shape (..., 4) as y, dy, z, dz."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise TrajectoryError("reference time must be >= 0")
        th = self.omega * t + self.phase
        out = np.empty(t.shape + (4,))
        out[..., 0] = self.a_y * np.sin(th)
        out[..., 1] = self.a_y * self.omega * np.cos(th)
        if self.kind == "lemniscate":
            # z = a_z sin(th) cos(th) = (a_z/2) sin(2 th)
            out[..., 2] = 0.5 * self.a_z * np.sin(2.0 * th)
            out[..., 3] = self.a_z * self.omega * np.cos(2.0 * th)
        else:
            out[..., 2] = self.a_z * np.cos(th) - self.a_z
            out[..., 3] = -self.a_z * self.omega * np.sin(th)
        return out

    def preview_window(self, k: int, n: int, ts: float) -> np.ndarray:
        """References at t = k*ts ... (k+n)*ts, shape (n+1, 4).

        Row 0 is the current reference point; rows 1..n feed the preview
        feedforward.
        """
        if n < 1:
            raise TrajectoryError("preview length must be >= 1")
        if k < 0:
            raise TrajectoryError("step index must be >= 0")
        if ts <= 0.0:
            raise TrajectoryError("sample period must be positive")
        t = (k + np.arange(n + 1)) * ts
        return self.reference_at(t)

    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def sample_table(self, ts: float, duration: float | None = None) -> np.ndarray:
        """Grid samples over the run, shape (steps+1, 5): t plus reference."""
        duration = self.duration if duration is None else duration
        steps = int(round(duration / ts))
        t = np.arange(steps + 1) * ts
        return np.column_stack([t, self.reference_at(t)])

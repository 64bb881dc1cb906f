"""Nonlinear planar quadrotor simulation.

The translational controllers run at the outer rate and command per-axis
accelerations.  Those are transformed into a roll setpoint and a total
thrust, which an inner discrete PID tracks at ten times the rate while the
rigid-body dynamics integrate with RK4 at the inner period.  The z
coordinate is measured from the hover origin (1.25 m altitude), so the
state-space origin is the hover point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import presets

__all__ = [
    "PlantError",
    "UavParams",
    "AttitudePid",
    "SimTrace",
    "dynamics_deriv",
    "outer_to_inner",
    "integrate_step",
    "simulate",
]


class PlantError(RuntimeError):
    """Simulation setup or integration failure."""


@dataclass(frozen=True)
class UavParams:
    mass: float = presets.MASS
    inertia_x: float = presets.INERTIA_X
    gravity: float = presets.GRAVITY
    thrust_min: float = presets.THRUST_MIN
    thrust_max: float = presets.THRUST_MAX
    roll_limit: float = presets.ROLL_LIMIT

    def __post_init__(self):
        if min(self.mass, self.inertia_x, self.gravity, self.thrust_max,
               self.roll_limit) <= 0.0:
            raise PlantError("UAV parameters must be positive")
        if self.thrust_min < 0.0 or self.thrust_min >= self.thrust_max:
            raise PlantError("thrust range is invalid")


# State layout: [y, dy, z, dz, phi, dphi]
_IY, _IDY, _IZ, _IDZ, _IPHI, _IDPHI = range(6)


def dynamics_deriv(state, thrust, tau, params: UavParams):
    """Continuous-time derivative with inputs held constant.

    Thrust outside the actuator range is clamped here as a guard; the
    transform in outer_to_inner already saturates and flags it.
    """
    thrust = min(max(thrust, params.thrust_min), params.thrust_max)
    phi = state[_IPHI]
    acc = thrust / params.mass
    return np.array([
        state[_IDY],
        -acc * math.sin(phi),
        state[_IDZ],
        -params.gravity + acc * math.cos(phi),
        state[_IDPHI],
        tau / params.inertia_x,
    ])


def outer_to_inner(ay_cmd, az_cmd, params: UavParams):
    """Map commanded accelerations to (roll setpoint, thrust, flags).

    The roll map is the linearized small-angle relation, not an arcsin;
    both outputs saturate at the actuator limits and report doing so.
    """
    if not (math.isfinite(ay_cmd) and math.isfinite(az_cmd)):
        raise PlantError("non-finite acceleration command")
    flags = []
    phi_bar = -ay_cmd / params.gravity
    if abs(phi_bar) > params.roll_limit:
        phi_bar = math.copysign(params.roll_limit, phi_bar)
        flags.append("sat_roll")
    thrust = params.mass * (az_cmd + params.gravity)
    if thrust < params.thrust_min:
        thrust = params.thrust_min
        flags.append("sat_thrust")
    elif thrust > params.thrust_max:
        thrust = params.thrust_max
        flags.append("sat_thrust")
    return phi_bar, thrust, flags


@dataclass
class AttitudePid:
    """Discrete PID on the roll error, run at the inner period.

    The derivative acts on error differences; the first call sees a zero
    previous error.  The output torque is deliberately not saturated; the
    simulation flags large roll excursions instead.
    """

    kp: float = presets.PID_KP
    kd: float = presets.PID_KD
    ki: float = presets.PID_KI
    ts: float = presets.TS_INNER
    integral: float = field(default=0.0, init=False)
    prev_error: float = field(default=0.0, init=False)

    def __post_init__(self):
        if self.ts <= 0.0:
            raise PlantError("PID period must be positive")

    def reset(self):
        self.integral = 0.0
        self.prev_error = 0.0

    def step(self, phi_bar, phi):
        e = phi_bar - phi
        self.integral += e * self.ts
        tau = self.kp * e + self.kd * (e - self.prev_error) / self.ts \
            + self.ki * self.integral
        self.prev_error = e
        return tau


def integrate_step(state, thrust, tau, dt, params: UavParams):
    """One classic RK4 step with zero-order-hold inputs."""
    if dt <= 0.0:
        raise PlantError("integration step must be positive")
    k1 = dynamics_deriv(state, thrust, tau, params)
    k2 = dynamics_deriv(state + 0.5 * dt * k1, thrust, tau, params)
    k3 = dynamics_deriv(state + 0.5 * dt * k2, thrust, tau, params)
    k4 = dynamics_deriv(state + dt * k3, thrust, tau, params)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise PlantError("integration produced a non-finite state")
    return out


@dataclass
class SimTrace:
    """Per-outer-step record of one simulation run.

    Columns c_star_* hold NaN for controllers without an interpolation
    coefficient; region_* are empty strings then.  tau is the torque of
    the first inner tick of each outer step (NaN on the final sample,
    which is evaluated but never applied).
    """

    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    z: np.ndarray
    dz: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    ay_cmd: np.ndarray
    az_cmd: np.ndarray
    phi_bar: np.ndarray
    thrust: np.ndarray
    tau: np.ndarray
    c_star_y: np.ndarray
    c_star_z: np.ndarray
    region_y: list
    region_z: list
    solve_time_y: np.ndarray
    solve_time_z: np.ndarray
    flags: list
    aborted: bool = False
    abort_reason: str = ""

    def __len__(self):
        return self.t.shape[0]

    def axis_states(self, axis):
        if axis == "y":
            return np.column_stack([self.y, self.dy])
        if axis == "z":
            return np.column_stack([self.z, self.dz])
        raise PlantError(f"unknown axis '{axis}'")

    def axis_commands(self, axis):
        if axis == "y":
            return self.ay_cmd
        if axis == "z":
            return self.az_cmd
        raise PlantError(f"unknown axis '{axis}'")


def simulate(controller_y, controller_z, trajectory, duration,
             params: UavParams | None = None,
             pid: AttitudePid | None = None,
             ts_outer: float = presets.TS_OUTER,
             ts_inner: float = presets.TS_INNER,
             x0=None):
    """Run the closed loop and collect a SimTrace.

    Each controller is an object with a step(k, x, window) method taking
    the outer step index, the 2-state of its axis, and the (N+1, 2)
    reference window, returning an object with attributes u, c_star,
    region, and flags.  Controller evaluation is wall-clock timed per
    axis; plant integration is excluded from the timing.

    Divergence (non-finite state or |phi| beyond pi/2) stops the loop and
    returns the partial trace with the abort reason set.
    """
    if duration <= 0.0:
        raise PlantError("duration must be positive")
    ratio = ts_outer / ts_inner
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) != presets.RATE_RATIO:
        raise PlantError(
            f"outer/inner rate ratio must be {presets.RATE_RATIO}, "
            f"got {ratio:g}")
    ratio = int(round(ratio))
    params = params or UavParams()
    pid = pid or AttitudePid(ts=ts_inner)
    pid.reset()

    n_outer = int(round(duration / ts_outer))
    if abs(n_outer * ts_outer - duration) > 1e-9:
        raise PlantError("duration must be a multiple of the outer period")
    n_rows = n_outer + 1

    cols = {name: np.full(n_rows, np.nan) for name in (
        "t", "y", "dy", "z", "dz", "phi", "dphi", "ay_cmd", "az_cmd",
        "phi_bar", "thrust", "tau", "c_star_y", "c_star_z",
        "solve_time_y", "solve_time_z")}
    region_y = [""] * n_rows
    region_z = [""] * n_rows
    flags = [""] * n_rows

    n_prev = getattr(controller_y, "n_prev", presets.PREVIEW_STEPS)
    state = np.zeros(6) if x0 is None else np.asarray(x0, dtype=float).copy()
    if state.shape != (6,):
        raise PlantError("initial state must have six entries")

    aborted = False
    abort_reason = ""
    rows_written = 0
    for k in range(n_rows):
        t = k * ts_outer
        if not np.all(np.isfinite(state)) or abs(state[_IPHI]) >= 0.5 * math.pi:
            aborted = True
            abort_reason = f"divergence at t={t:.3f}s"
            break

        window = trajectory.preview_window(k, n_prev, ts_outer)
        step_flags = []

        start = time.perf_counter()
        out_y = controller_y.step(k, state[[_IY, _IDY]], window[:, :2])
        dt_y = getattr(out_y, "solve_time", 0.0) or time.perf_counter() - start
        start = time.perf_counter()
        out_z = controller_z.step(k, state[[_IZ, _IDZ]], window[:, 2:])
        dt_z = getattr(out_z, "solve_time", 0.0) or time.perf_counter() - start

        phi_bar, thrust, tf = outer_to_inner(out_y.u, out_z.u, params)
        step_flags.extend(tf)
        for tag, out in (("y", out_y), ("z", out_z)):
            step_flags.extend(f"{fl}_{tag}" for fl in out.flags)
        if abs(state[_IPHI]) >= params.roll_limit:
            step_flags.append("roll_limit")

        cols["t"][k] = t
        cols["y"][k] = state[_IY]
        cols["dy"][k] = state[_IDY]
        cols["z"][k] = state[_IZ]
        cols["dz"][k] = state[_IDZ]
        cols["phi"][k] = state[_IPHI]
        cols["dphi"][k] = state[_IDPHI]
        cols["ay_cmd"][k] = out_y.u
        cols["az_cmd"][k] = out_z.u
        cols["phi_bar"][k] = phi_bar
        cols["thrust"][k] = thrust
        cols["c_star_y"][k] = np.nan if out_y.c_star is None else out_y.c_star
        cols["c_star_z"][k] = np.nan if out_z.c_star is None else out_z.c_star
        cols["solve_time_y"][k] = dt_y
        cols["solve_time_z"][k] = dt_z
        region_y[k] = out_y.region or ""
        region_z[k] = out_z.region or ""
        rows_written = k + 1

        if k == n_outer:
            flags[k] = ";".join(step_flags)
            break
        try:
            for tick in range(ratio):
                tau = pid.step(phi_bar, state[_IPHI])
                if tick == 0:
                    cols["tau"][k] = tau
                state = integrate_step(state, thrust, tau, ts_inner, params)
        except PlantError as exc:
            aborted = True
            abort_reason = str(exc)
            step_flags.append("divergence")
        flags[k] = ";".join(step_flags)
        if aborted:
            break

    sl = slice(0, rows_written)
    return SimTrace(
        t=cols["t"][sl], y=cols["y"][sl], dy=cols["dy"][sl],
        z=cols["z"][sl], dz=cols["dz"][sl],
        phi=cols["phi"][sl], dphi=cols["dphi"][sl],
        ay_cmd=cols["ay_cmd"][sl], az_cmd=cols["az_cmd"][sl],
        phi_bar=cols["phi_bar"][sl], thrust=cols["thrust"][sl],
        tau=cols["tau"][sl],
        c_star_y=cols["c_star_y"][sl], c_star_z=cols["c_star_z"][sl],
        region_y=region_y[sl], region_z=region_z[sl],
        solve_time_y=cols["solve_time_y"][sl],
        solve_time_z=cols["solve_time_z"][sl],
        flags=flags[sl], aborted=aborted, abort_reason=abort_reason)

"""Default numeric configuration for the planar quadrotor benchmark.

Everything here is a plain constant or a tiny constructor so the values
are greppable in one place.  The harness reads its defaults from this
module; config files may override most of them.
"""

from __future__ import annotations

import math

import numpy as np

from .polytope import Polytope
from .synthesis import CostWeights

GRAVITY = 9.81  # m/s^2
MASS = 0.03  # kg
INERTIA_X = 2.3951e-5  # kg m^2
ROLL_LIMIT = math.radians(30.0)  # rad
THRUST_MIN = 0.0  # N
THRUST_MAX = 0.6  # N, four rotors at 0.15 N each

TS_OUTER = 0.01  # s, translational control period
TS_INNER = 0.001  # s, attitude PID and integrator period
RATE_RATIO = 10  # outer period / inner period

PID_KP = 0.3
PID_KD = 0.003
PID_KI = 0.0001

PREVIEW_STEPS = 800  # outer steps of lookahead (8 s)
HORIZON_S = 8.0  # s, receding horizon length
BLOCK_COARSE_S = 0.2  # s, coarse move-blocking period

ETA = 0.1  # input headroom fraction reserved for feedforward
ENVELOPE_MARGIN = 0.02  # m and m/s padding over the reference envelope

# Acceleration bounds implied by the actuator limits: the y axis is driven
# by tilting within the roll limit, the z axis by total thrust.
ACCEL_Y_MAX = GRAVITY * math.tan(ROLL_LIMIT)
ACCEL_Z_MIN = THRUST_MIN / MASS - GRAVITY
ACCEL_Z_MAX = THRUST_MAX / MASS - GRAVITY

# Flight-space box, z measured from the 1.25 m hover origin.
POS_Y_MAX = 2.0
POS_Z_MAX = 1.25
VEL_MAX = 5.0

AXIS_NAMES = ("y", "z")


def state_set(axis: str) -> Polytope:
    """Position/velocity box for one translational axis."""
    if axis == "y":
        return Polytope.from_box([-POS_Y_MAX, -VEL_MAX], [POS_Y_MAX, VEL_MAX])
    if axis == "z":
        return Polytope.from_box([-POS_Z_MAX, -VEL_MAX], [POS_Z_MAX, VEL_MAX])
    raise ValueError(f"unknown axis '{axis}'")


def input_set(axis: str) -> Polytope:
    """Commanded-acceleration interval for one axis."""
    if axis == "y":
        return Polytope.from_box([-ACCEL_Y_MAX], [ACCEL_Y_MAX])
    if axis == "z":
        return Polytope.from_box([ACCEL_Z_MIN], [ACCEL_Z_MAX])
    raise ValueError(f"unknown axis '{axis}'")


def axis_weights(axis: str) -> dict[str, CostWeights]:
    """High/mid/low cost weights per axis.

    The mid law reuses the low-gain Q with the high-gain R, giving a gain
    between the other two; on the z axis low and high share Q, so the mid
    law degenerates to the high one there.
    """
    if axis == "y":
        q_high = np.diag([0.16, 0.04])
        q_low = np.diag([0.25, 0.04])
        r_high = np.array([[5.0]])
        r_low = np.array([[50.0]])
    elif axis == "z":
        q_high = np.diag([0.64, 0.04])
        q_low = np.diag([0.64, 0.04])
        r_high = np.array([[0.04]])
        r_low = np.array([[0.4]])
    else:
        raise ValueError(f"unknown axis '{axis}'")
    return {
        "high": CostWeights(q=q_high, r=r_high),
        "mid": CostWeights(q=q_low, r=r_high),
        "low": CostWeights(q=q_low, r=r_low),
    }


def metric_weights(axis: str) -> CostWeights:
    """Weights of the common tracking-cost yardstick (high-gain set)."""
    return axis_weights(axis)["high"]

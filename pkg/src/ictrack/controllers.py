"""Online controllers for one translational axis.

Five families share an interface: step(k, x, window) takes the outer step
index, the axis state (position, velocity), and the (N+1, 2) reference
window, and returns a ControlOutput with the commanded acceleration plus
diagnostics.  The tracking LQR is the unconstrained baseline; IC and eIC
interpolate between gain laws inside the nested invariant sets; MPC
solves a condensed QP, either over the full fine horizon or over a
move-blocked decision grid.

Every controller clamps its command to the axis input bounds and flags
when the clamp actually bites, so traces never carry out-of-range inputs.
A controller that cannot honor its own domain (state outside the low-gain
set, interpolation LP infeasible, QP failure) falls back to the clamped
high-gain tracking law and says so in the flags; it never fails silently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .polytope import Polytope
from .solvers import (
    INFEASIBLE,
    OPTIMAL,
    ActiveSetQp,
    LpProblem,
    solve_lp,
)
from .synthesis import AxisDesign, preview_input

__all__ = [
    "ControllerError",
    "InterpolationInfeasible",
    "ControlOutput",
    "ic_coefficient_lp",
    "ic_decompose",
    "build_move_blocking",
    "AxisController",
    "TrackingLqrController",
    "IcController",
    "EicController",
    "MpcController",
    "check_reference_admissibility",
]

_MEMBER_TOL = 1e-9


class ControllerError(RuntimeError):
    """Controller construction or stepping failed."""


class InterpolationInfeasible(ControllerError):
    """The interpolation LP has no solution at the queried state."""


@dataclass
class ControlOutput:
    """One controller evaluation.

    c_star is None for controllers without an interpolation coefficient;
    region is one of "high", "mid", "low", "outside", or "" when the
    notion does not apply.
    """

    u: float
    c_star: float | None = None
    region: str = ""
    solve_time: float = 0.0
    solver_status: str = "ok"
    flags: list = field(default_factory=list)


def ic_coefficient_lp(x, x_bar, omega_outer: Polytope, omega_inner: Polytope,
                      tol: float = 1e-8):
    """Smallest blend weight moving x into the interpolation cone.

    Solves, over variables (c, r):

        min c   s.t.  F_out r <= c g_out
                      F_in (x - r - (1-c) x_bar) <= (1-c) g_in
                      0 <= c <= 1

    The inner set is taken origin-centered and shifted to x_bar by the
    constraint itself.  Returns (c_star, r_star); c_star = 0 means x
    already lies in the shifted inner set, c_star = 1 puts all weight on
    the outer law.  Raises InterpolationInfeasible when x is outside the
    convex hull of the outer set and the shifted inner set.
    """
    x = np.asarray(x, dtype=float).ravel()
    x_bar = np.asarray(x_bar, dtype=float).ravel()
    dim = omega_outer.dim
    if x.shape[0] != dim or x_bar.shape[0] != dim or omega_inner.dim != dim:
        raise ControllerError("dimension mismatch in interpolation LP")
    f_out, g_out = omega_outer.f, omega_outer.g
    f_in, g_in = omega_inner.f, omega_inner.g
    n_out, n_in = f_out.shape[0], f_in.shape[0]

    # Columns: [c, r_1..r_dim]
    a_ub = np.zeros((n_out + n_in, 1 + dim))
    b_ub = np.zeros(n_out + n_in)
    a_ub[:n_out, 0] = -g_out
    a_ub[:n_out, 1:] = f_out
    shifted = g_in + f_in @ x_bar
    a_ub[n_out:, 0] = shifted
    a_ub[n_out:, 1:] = -f_in
    b_ub[n_out:] = shifted - f_in @ x

    cost = np.zeros(1 + dim)
    cost[0] = 1.0
    lb = np.full(1 + dim, -np.inf)
    ub = np.full(1 + dim, np.inf)
    lb[0], ub[0] = 0.0, 1.0
    res = solve_lp(LpProblem(c=cost, A_ub=a_ub, b_ub=b_ub, lb=lb, ub=ub),
                   tol=tol)
    if res.status == INFEASIBLE:
        raise InterpolationInfeasible("state outside interpolation domain")
    if res.status != OPTIMAL:
        raise ControllerError(
            f"interpolation LP failed: {res.status} ({res.diagnostics})")
    c_star = min(max(float(res.x[0]), 0.0), 1.0)
    return c_star, res.x[1:].copy()


def ic_decompose(x, x_bar, c, r=None):
    """Split x into low/high components: x = c x_l + (1-c) x_h.

    x_l = r/c carries the outer-law share; x_h = (x-r)/(1-c) carries the
    inner-law share and lies in the inner set shifted to x_bar whenever
    (c, r) came from ic_coefficient_lp.  At the endpoints the unused
    component is returned as None.
    """
    x = np.asarray(x, dtype=float).ravel()
    if not 0.0 <= c <= 1.0:
        raise ControllerError(f"blend weight {c} outside [0, 1]")
    if c <= 1e-12:
        return None, x.copy()
    if c >= 1.0 - 1e-12:
        return x.copy(), None
    if r is None:
        raise ControllerError("interior blend weights need the LP point r")
    r = np.asarray(r, dtype=float).ravel()
    return r / c, (x - r) / (1.0 - c)


def build_move_blocking(horizon_s: float, ts_fine: float,
                        ts_coarse: float) -> list:
    """Move lengths (in fine steps): one fine move, then coarse blocks.

    The first decision stays at the fine period so the applied input is
    refreshed every step; the remainder of the horizon is covered by
    blocks of the coarse period, with a final shorter block when the
    periods do not tile exactly.
    """
    if ts_fine <= 0.0 or ts_coarse <= 0.0:
        raise ControllerError("periods must be positive")
    if horizon_s < ts_fine:
        raise ControllerError("horizon must cover at least one fine step")
    n = horizon_s / ts_fine
    if abs(n - round(n)) > 1e-9:
        raise ControllerError("horizon must be a multiple of the fine period")
    n = int(round(n))
    ratio = ts_coarse / ts_fine
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ControllerError(
            "coarse period must be a positive multiple of the fine period")
    block = int(round(ratio))
    lengths = [1]
    remaining = n - 1
    while remaining > 0:
        step = min(block, remaining)
        lengths.append(step)
        remaining -= step
    if sum(lengths) != n:
        raise ControllerError("blocking construction did not tile the horizon")
    if n == 1:
        return [1]
    return lengths


class AxisController:
    """Shared plumbing: input clamping, fallback law, step timing."""

    name = "axis"

    def __init__(self, design: AxisDesign):
        self.design = design
        lo, hi = design.u_set.bounding_box()
        self._u_lo = float(lo[0])
        self._u_hi = float(hi[0])
        self._law_high = design.laws["high"]
        self._ff_high = design.ff_weights["high"]

    @property
    def n_prev(self) -> int:
        return self.design.n_prev

    def reset(self):
        pass

    def step(self, k, x, window) -> ControlOutput:
        x = np.asarray(x, dtype=float).ravel()
        window = np.asarray(window, dtype=float)
        if x.shape[0] != self.design.model.nx:
            raise ControllerError("state dimension mismatch")
        if window.shape != (self.n_prev + 1, self.design.model.nx):
            raise ControllerError(
                f"window shape {window.shape} does not match "
                f"({self.n_prev + 1}, {self.design.model.nx})")
        start = time.perf_counter()
        out = self._step(k, x, window)
        out.solve_time = time.perf_counter() - start
        return out

    def _step(self, k, x, window) -> ControlOutput:
        raise NotImplementedError

    def _clamp(self, u: float):
        clamped = min(max(u, self._u_lo), self._u_hi)
        return clamped, abs(clamped - u) > 1e-9

    def _tracking_law(self, x, window, law_name="high") -> float:
        law = self.design.laws[law_name]
        ff = self.design.ff_weights[law_name]
        return float(-(law.gain @ x)[0] + preview_input(ff, window[1:]))

    def _fallback(self, x, window, region, status, extra_flags) -> ControlOutput:
        u, clamped = self._clamp(self._tracking_law(x, window))
        flags = list(extra_flags) + ["fallback"]
        if clamped:
            flags.append("clamp")
        return ControlOutput(u=u, c_star=None, region=region,
                             solver_status=status, flags=flags)


class TrackingLqrController(AxisController):
    """Unconstrained preview LQR, saturated at the input bounds."""

    name = "lqr"

    def __init__(self, design: AxisDesign, law: str = "high"):
        super().__init__(design)
        if law not in design.laws:
            raise ControllerError(f"unknown law '{law}'")
        self._law_name = law

    def _step(self, k, x, window) -> ControlOutput:
        u, clamped = self._clamp(self._tracking_law(x, window, self._law_name))
        return ControlOutput(u=u, flags=["clamp"] if clamped else [])


class IcController(AxisController):
    """Two-law interpolation between the low and high tracking LQRs.

    Inside the high-gain set shifted to the current reference the output
    is exactly the high-gain tracking law.  Otherwise the interpolation
    LP over (low set, shifted high set) splits the state and the two
    tracking laws are blended, each fed its share of the preview window.
    """

    name = "ic"

    def _step(self, k, x, window) -> ControlOutput:
        x_bar = window[0]
        sets = self.design.sets
        if sets["high"].contains(x - x_bar, tol=_MEMBER_TOL):
            u, clamped = self._clamp(self._tracking_law(x, window))
            return ControlOutput(u=u, c_star=0.0, region="high",
                                 flags=["clamp"] if clamped else [])
        if not sets["low"].contains(x, tol=_MEMBER_TOL):
            return self._fallback(x, window, "outside", "outside_domain", [])
        try:
            c, r = ic_coefficient_lp(x, x_bar, sets["low"], sets["high"])
        except InterpolationInfeasible:
            return self._fallback(x, window, "low", "lp_infeasible",
                                  ["lp_infeasible"])
        k_low = self.design.laws["low"].gain
        k_high = self._law_high.gain
        ff_low = preview_input(self.design.ff_weights["low"], window[1:])
        ff_high = preview_input(self._ff_high, window[1:])
        # c*u_low(r/c, c w) + (1-c)*u_high((x-r)/(1-c), (1-c) w), written
        # without the divisions so the endpoints need no special casing.
        u = float(-(k_low @ r)[0] - (k_high @ (x - r))[0]
                  + c * c * ff_low + (1.0 - c) * (1.0 - c) * ff_high)
        u, clamped = self._clamp(u)
        return ControlOutput(u=u, c_star=c, region="low",
                             flags=["clamp"] if clamped else [])


class EicController(AxisController):
    """Three-law interpolation with an intermediate setpoint controller.

    Region logic, innermost first: inside the shifted high set the pure
    high-gain tracking law applies; inside the shifted mid set the LP
    blends the mid setpoint law with the high tracking law; inside the
    low set it blends the low tracking law with the mid setpoint law.
    The mid law regulates toward the scaled current reference point, so
    it is evaluated inline rather than through the equilibrium-only
    setpoint helper (the scaled reference keeps its velocity component).
    """

    name = "eic"

    def _step(self, k, x, window) -> ControlOutput:
        x_bar = window[0]
        sets = self.design.sets
        k_mid = self.design.laws["mid"].gain
        if sets["high"].contains(x - x_bar, tol=_MEMBER_TOL):
            u, clamped = self._clamp(self._tracking_law(x, window))
            return ControlOutput(u=u, c_star=0.0, region="high",
                                 flags=["clamp"] if clamped else [])
        if sets["mid"].contains(x - x_bar, tol=_MEMBER_TOL):
            try:
                c, r = ic_coefficient_lp(x, x_bar, sets["mid"], sets["high"])
            except InterpolationInfeasible:
                return self._fallback(x, window, "mid", "lp_infeasible",
                                      ["lp_infeasible"])
            k_high = self._law_high.gain
            ff_high = preview_input(self._ff_high, window[1:])
            # c*u_mid(r/c, c x_bar) + (1-c)*u_high((x-r)/(1-c), (1-c) w)
            u = float(-(k_mid @ (r - c * c * x_bar))[0]
                      - (k_high @ (x - r))[0]
                      + (1.0 - c) * (1.0 - c) * ff_high)
            u, clamped = self._clamp(u)
            return ControlOutput(u=u, c_star=c, region="mid",
                                 flags=["clamp"] if clamped else [])
        if not sets["low"].contains(x, tol=_MEMBER_TOL):
            return self._fallback(x, window, "outside", "outside_domain", [])
        try:
            c, r = ic_coefficient_lp(x, x_bar, sets["low"], sets["mid"])
        except InterpolationInfeasible:
            return self._fallback(x, window, "low", "lp_infeasible",
                                  ["lp_infeasible"])
        k_low = self.design.laws["low"].gain
        ff_low = preview_input(self.design.ff_weights["low"], window[1:])
        # c*u_low(r/c, c w) + (1-c)*u_mid((x-r)/(1-c), (1-c) x_bar)
        one_m = 1.0 - c
        u = float(-(k_low @ r)[0] + c * c * ff_low
                  - (k_mid @ ((x - r) - one_m * one_m * x_bar))[0])
        u, clamped = self._clamp(u)
        return ControlOutput(u=u, c_star=c, region="low",
                             flags=["clamp"] if clamped else [])


class MpcController(AxisController):
    """Condensed-QP receding-horizon controller, optionally move-blocked.

    Decision variables are the inputs at the move boundaries; each move
    holds its input for a whole block, and blocks are propagated with the
    exact zero-order-hold model of their length, so the blocked
    prediction agrees with the fine model at every block boundary.  The
    tracking error is weighted at each block boundary by the length of
    the block it opens (the terminal state once) and each input by its
    own block length, so the blocked cost stays a consistent sampling of
    the fine-grid cost; with unit weights a short first move would pay
    the same input price as a whole coarse block for a fraction of its
    effect, and the optimizer would simply park it at zero.  With no
    blocking this reduces to the plain fine-grid cost.  State constraints
    are imposed at every block boundary; with no blocking that is every
    fine instant of the horizon.

    The QP Hessian and constraint matrix are fixed, so the factorization
    is done once; each step only refreshes the linear term and the
    right-hand sides and warm-starts from the previous active set.
    """

    name = "mpc"

    def __init__(self, design: AxisDesign, blocking=None):
        super().__init__(design)
        n = design.n_prev
        lengths = list(blocking) if blocking is not None else [1] * n
        if any(int(l) != l or l < 1 for l in lengths) or sum(lengths) != n:
            raise ControllerError(
                "blocking lengths must be positive integers summing to "
                f"the horizon ({n})")
        self.lengths = [int(l) for l in lengths]
        self._build(design)
        self._last_active = ()

    def _build(self, design: AxisDesign):
        ts = design.model.ts
        q = design.laws["high"].weights.q
        r = design.laws["high"].weights.r
        m = len(self.lengths)
        nx = design.model.nx

        # Exact ZOH block models and the condensed prediction maps.
        sx = np.zeros((nx * m, nx))
        su = np.zeros((nx * m, m))
        prev_rows = None
        for i, length in enumerate(self.lengths):
            t_block = length * ts
            a_i = np.array([[1.0, t_block], [0.0, 1.0]])
            b_i = np.array([[0.5 * t_block * t_block], [t_block]])
            rows = slice(nx * i, nx * (i + 1))
            if prev_rows is None:
                sx[rows] = a_i
            else:
                sx[rows] = a_i @ sx[prev_rows]
                su[rows, :i] = a_i @ su[prev_rows, :i]
            su[rows, i:i + 1] = b_i
            prev_rows = rows

        # Stage weights: boundary i opens the next block; terminal gets Q.
        state_w = np.empty(m)
        state_w[:-1] = self.lengths[1:]
        state_w[-1] = 1.0
        input_w = np.asarray(self.lengths, dtype=float)

        h_su = np.empty_like(su)
        h_sx = np.empty_like(sx)
        for i in range(m):
            rows = slice(nx * i, nx * (i + 1))
            wq = state_w[i] * q
            h_su[rows] = wq @ su[rows]
            h_sx[rows] = wq @ sx[rows]
        hess = 2.0 * (su.T @ h_su + np.diag(input_w * float(r[0, 0])))
        hess = 0.5 * (hess + hess.T)
        self._p_x0 = 2.0 * h_sx.T @ su  # transpose applied at use
        self._p_ref = 2.0 * h_su.T

        f_x, g_x = design.x_set.f, design.x_set.g
        f_u, g_u = design.u_set.f, design.u_set.g
        n_xr = f_x.shape[0]
        a_state = np.empty((n_xr * m, m))
        f_sx = np.empty((n_xr * m, nx))
        for i in range(m):
            rows = slice(nx * i, nx * (i + 1))
            a_state[n_xr * i:n_xr * (i + 1)] = f_x @ su[rows]
            f_sx[n_xr * i:n_xr * (i + 1)] = f_x @ sx[rows]
        self._g_state = np.tile(g_x, m)
        self._f_sx = f_sx
        n_ur = f_u.shape[0]
        a_input = np.zeros((n_ur * m, m))
        for j in range(m):
            a_input[n_ur * j:n_ur * (j + 1), j] = f_u[:, 0]
        self._b_input = np.tile(g_u, m)

        self._boundaries = np.cumsum(self.lengths)
        self._qp = ActiveSetQp(hess, A_ub=np.vstack([a_state, a_input]))

    @property
    def n_moves(self) -> int:
        return len(self.lengths)

    def reset(self):
        self._last_active = ()

    def _step(self, k, x, window) -> ControlOutput:
        refs = window[self._boundaries].reshape(-1)
        f = self._p_x0.T @ x - self._p_ref @ refs
        b_ub = np.concatenate([self._g_state - self._f_sx @ x, self._b_input])
        res = self._qp.solve(f, b_ub=b_ub, active0=self._last_active)
        if res.status != OPTIMAL:
            self._last_active = ()
            return self._fallback(x, window, "", res.status,
                                  [f"qp_{res.status}"])
        self._last_active = res.active_set
        u, clamped = self._clamp(float(res.x[0]))
        return ControlOutput(u=u, solver_status=res.status,
                             flags=["clamp"] if clamped else [])


def check_reference_admissibility(design: AxisDesign, ref_samples,
                                  set_names=("high", "mid"),
                                  tol: float = 1e-9) -> list:
    """Verify every translate of the inner sets stays inside the state box.

    ref_samples is an (n, 2) array of reference states for this axis.  A
    translate shift(S, x_bar) lies inside X iff F_i x_bar <= g_i - h_i for
    every row i of X, with h_i the support of S in direction F_i; the
    supports are computed once and reused across all samples.  Returns a
    list of human-readable violations, empty when admissible.
    """
    ref_samples = np.atleast_2d(np.asarray(ref_samples, dtype=float))
    if ref_samples.shape[1] != design.model.nx:
        raise ControllerError("reference samples have wrong dimension")
    problems = []
    fx, gx = design.x_set.f, design.x_set.g
    proj = ref_samples @ fx.T  # (n, rows)
    worst_idx = np.argmax(proj, axis=0)
    for name in set_names:
        omega = design.sets[name]
        for i in range(fx.shape[0]):
            h_i = omega.support(fx[i])
            j = worst_idx[i]
            slack = gx[i] - h_i - proj[j, i]
            if slack < -tol:
                problems.append(
                    f"set '{name}' shifted to reference sample {j} "
                    f"(state {ref_samples[j].tolist()}) exceeds state "
                    f"halfspace {i} by {-slack:.3e}")
    return problems

"""Offline controller synthesis: gains, invariant sets, preview weights.

Everything here runs once per configuration, ahead of any simulation.  The
per-axis model is a discrete double integrator; each axis gets three LQR
laws (aggressive "high", intermediate "mid", conservative "low"), one
constraint-admissible invariant set per law, and a stack of preview
weights that turns a window of future references into a feedforward input
in a single dot product.

The three invariant sets are built as a cascade, outermost first.  The
low-gain set lives inside the raw state constraints; the mid and high sets
are confined to the state constraints shrunk by the reference envelope and
to the next-outer set, which makes the family nested and keeps every
translate of the inner sets along the reference inside the original
constraints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .polytope import Polytope, max_invariant_set

LAW_NAMES = ("high", "mid", "low")


class SynthesisError(RuntimeError):
    """Design construction failed or produced an inconsistent result."""


@dataclass(frozen=True)
class LtiModel:
    """x+ = a x + b u, sampled every ts seconds."""

    a: np.ndarray
    b: np.ndarray
    ts: float

    @property
    def nx(self):
        return self.a.shape[0]

    @property
    def nu(self):
        return self.b.shape[1]


def integrator_model(ts):
    """Double integrator (position, velocity) under zero-order hold."""
    if ts <= 0:
        raise SynthesisError("sample time must be positive")
    a = np.array([[1.0, ts], [0.0, 1.0]])
    b = np.array([[0.5 * ts * ts], [ts]])
    return LtiModel(a=a, b=b, ts=float(ts))


@dataclass(frozen=True)
class CostWeights:
    """Quadratic stage cost x'Qx + u'Ru."""

    q: np.ndarray
    r: np.ndarray


def solve_dare(a, b, q, r, tol=1e-12, max_iter=200_000):
    """Fixed point of the discrete Riccati update, started at P = Q.

    Iterates until the update moves every entry by less than
    tol * (1 + max |P|).  The tight default matters: the gain computed from
    P inherits roughly the square root of the P error on slow modes.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    p = q.copy()
    for _ in range(max_iter):
        bpa = b.T @ p @ a
        s = r + b.T @ p @ b
        p_next = q + a.T @ p @ a - bpa.T @ np.linalg.solve(s, bpa)
        p_next = 0.5 * (p_next + p_next.T)
        if np.abs(p_next - p).max() <= tol * (1.0 + np.abs(p_next).max()):
            return p_next
        p = p_next
    raise SynthesisError(
        f"Riccati iteration did not converge within {max_iter} steps")


@dataclass
class LqrLaw:
    """Infinite-horizon LQR data for one model and one weight pair.

    gain:         u = -gain @ x stabilizes the origin
    riccati:      cost-to-go matrix P
    preview_gain: (R + B'PB)^{-1} B', maps preview costates to inputs
    closed_loop:  A - B @ gain
    """

    model: LtiModel
    weights: CostWeights
    gain: np.ndarray
    riccati: np.ndarray
    preview_gain: np.ndarray
    closed_loop: np.ndarray


def lqr_law(model, weights, tol=1e-12, max_iter=200_000):
    p = solve_dare(model.a, model.b, weights.q, weights.r,
                   tol=tol, max_iter=max_iter)
    s = weights.r + model.b.T @ p @ model.b
    k = np.linalg.solve(s, model.b.T @ p @ model.a)
    kv = np.linalg.solve(s, model.b.T)
    return LqrLaw(model=model, weights=weights, gain=k, riccati=p,
                  preview_gain=kv, closed_loop=model.a - model.b @ k)


def setpoint_control(law, x, x_bar, tol=1e-9):
    """Regulation input toward an equilibrium point: u = -K (x - x_bar).

    x_bar must actually be an equilibrium of the model (A x_bar = x_bar,
    which for the integrator model means zero velocity); anything else is
    a caller bug, not a tracking request, and is rejected.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    x_bar = np.asarray(x_bar, dtype=float).reshape(-1)
    drift = law.model.a @ x_bar - x_bar
    if np.abs(drift).max(initial=0.0) > tol * (1.0 + np.abs(x_bar).max()):
        raise SynthesisError("setpoint is not an equilibrium of the model")
    return -law.gain @ (x - x_bar)


def feedforward_weights(law, n_prev, terminal="riccati"):
    """Preview weight stack for a window of n_prev future references.

    Row j (0-based) maps the reference at j+1 steps ahead into the current
    feedforward input.  With terminal="riccati" the last row carries the
    cost-to-go matrix P, which makes a constant equilibrium reference
    reproduce the setpoint law exactly for any window length; with
    terminal="stage" the last row keeps the stage weight Q, matching a
    finite-horizon cost whose final error is weighted like any other.  The
    feedforward input for window w of shape (n_prev, nx) is
    (weights * w).sum(), and it scales linearly in w.
    """
    if n_prev < 1:
        raise SynthesisError("preview window must hold at least one sample")
    if terminal not in ("riccati", "stage"):
        raise SynthesisError(f"unknown terminal weighting '{terminal}'")
    nx = law.model.nx
    weights = np.empty((n_prev, nx))
    row = law.preview_gain.reshape(-1)
    for j in range(n_prev - 1):
        weights[j] = row @ law.weights.q
        row = row @ law.closed_loop.T
    last = law.riccati if terminal == "riccati" else law.weights.q
    weights[n_prev - 1] = row @ last
    return weights


def preview_input(weights, window):
    """Feedforward input for a (n_prev, nx) reference window."""
    window = np.asarray(window, dtype=float)
    if window.shape != weights.shape:
        raise SynthesisError(
            f"window shape {window.shape} does not match weights "
            f"{weights.shape}")
    return float((weights * window).sum())


# ---------------------------------------------------------------------------
# Per-axis design
# ---------------------------------------------------------------------------

@dataclass
class AxisDesign:
    """Synthesis products for one translational axis."""

    model: LtiModel
    laws: dict[str, LqrLaw]
    sets: dict[str, Polytope]
    x_set: Polytope
    u_set: Polytope
    u_set_tight: Polytope
    envelope: np.ndarray
    eta: float
    n_prev: int
    ff_weights: dict[str, np.ndarray] = field(default_factory=dict)
    set_iterations: dict[str, int] = field(default_factory=dict)


def build_axis_design(model, weights, x_set, u_set, envelope, eta=0.1,
                      n_prev=800, inv_max_iter=2000, inv_tol=1e-9):
    """Gains, invariant-set cascade and preview weights for one axis.

    `weights` maps law names ("high", "mid", "low") to CostWeights.
    `envelope` gives per-state halfwidths that every admissible reference
    stays within; the mid and high sets are built inside the state
    constraints shrunk by it so their translates along any such reference
    remain admissible.
    """
    missing = [k for k in LAW_NAMES if k not in weights]
    if missing:
        raise SynthesisError(f"missing cost weights for laws: {missing}")
    envelope = np.asarray(envelope, dtype=float).reshape(-1)
    if envelope.shape[0] != model.nx or np.any(envelope < 0):
        raise SynthesisError("envelope must be nonnegative, one per state")
    if not 0.0 <= eta < 1.0:
        raise SynthesisError("input tightening fraction must be in [0, 1)")

    laws = {name: lqr_law(model, weights[name]) for name in LAW_NAMES}
    u_tight = u_set.scale(1.0 - eta)
    x_shrunk = x_set.erode(envelope)
    if x_shrunk.is_empty():
        raise SynthesisError(
            "reference envelope leaves no room inside the state constraints")

    sets = {}
    iters = {}
    outer = {"low": x_set, "mid": x_shrunk, "high": x_shrunk}
    order = ("low", "mid", "high")
    prev = None
    for name in order:
        region = outer[name] if prev is None else outer[name].intersect(prev)
        res = max_invariant_set(laws[name].closed_loop, region,
                                u_set=u_tight, gain=laws[name].gain,
                                max_iter=inv_max_iter, tol=inv_tol)
        if not res.converged:
            raise SynthesisError(
                f"invariant set for law '{name}' did not converge within "
                f"{inv_max_iter} iterations")
        if res.polytope.is_empty():
            raise SynthesisError(f"invariant set for law '{name}' is empty")
        sets[name] = res.polytope
        iters[name] = res.iterations
        prev = res.polytope

    for inner, outer_name in (("mid", "low"), ("high", "mid")):
        for point in sets[inner].sample_points(1000, seed=0):
            if not sets[outer_name].contains(point, tol=1e-9):
                raise SynthesisError(
                    f"set nesting violated: sample {point.tolist()} from "
                    f"'{inner}' escapes '{outer_name}'")
        if not sets[outer_name].contains_polytope(sets[inner], tol=1e-7):
            raise SynthesisError(
                f"set nesting violated: '{inner}' is not inside "
                f"'{outer_name}'")

    ff = {name: feedforward_weights(laws[name], n_prev)
          for name in LAW_NAMES}
    return AxisDesign(model=model, laws=laws, sets=sets, x_set=x_set,
                      u_set=u_set, u_set_tight=u_tight, envelope=envelope,
                      eta=eta, n_prev=n_prev, ff_weights=ff,
                      set_iterations=iters)


def verify_design(design, tol=1e-7):
    """Sanity-check an AxisDesign; returns a list of problem descriptions."""
    problems = []
    for name in LAW_NAMES:
        law = design.laws.get(name)
        if law is None:
            problems.append(f"law '{name}' missing")
            continue
        rho = np.abs(np.linalg.eigvals(law.closed_loop)).max()
        if rho >= 1.0:
            problems.append(f"law '{name}' closed loop unstable (rho={rho})")
        poly = design.sets.get(name)
        if poly is None:
            problems.append(f"invariant set '{name}' missing")
            continue
        if not poly.contains(np.zeros(design.model.nx)):
            problems.append(f"invariant set '{name}' excludes the origin")
        if not design.x_set.contains_polytope(poly, tol=tol):
            problems.append(
                f"invariant set '{name}' leaves the state constraints")
    for inner, outer in (("mid", "low"), ("high", "mid")):
        if inner in design.sets and outer in design.sets:
            if not design.sets[outer].contains_polytope(design.sets[inner],
                                                        tol=tol):
                problems.append(
                    f"set '{inner}' is not nested inside '{outer}'")
    shrunk = design.x_set.erode(design.envelope)
    for name in ("mid", "high"):
        if name in design.sets and not shrunk.contains_polytope(
                design.sets[name], tol=tol):
            problems.append(
                f"set '{name}' violates the reference-envelope margin")
    return problems


@dataclass
class DesignBundle:
    """AxisDesigns for every controlled axis plus shared sampling info."""

    axes: dict[str, AxisDesign]
    ts: float
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def _axis_to_dict(d):
    return {
        "model": {"a": _arr(d.model.a), "b": _arr(d.model.b),
                  "ts": d.model.ts},
        "laws": {
            name: {
                "q": _arr(law.weights.q),
                "r": _arr(law.weights.r),
                "gain": _arr(law.gain),
                "riccati": _arr(law.riccati),
            }
            for name, law in d.laws.items()
        },
        "sets": {name: {"F": _arr(p.f), "g": _arr(p.g)}
                 for name, p in d.sets.items()},
        "x_set": {"F": _arr(d.x_set.f), "g": _arr(d.x_set.g)},
        "u_set": {"F": _arr(d.u_set.f), "g": _arr(d.u_set.g)},
        "envelope": _arr(d.envelope),
        "eta": d.eta,
        "n_prev": d.n_prev,
        "set_iterations": dict(d.set_iterations),
    }


def _axis_from_dict(obj):
    model = LtiModel(a=np.asarray(obj["model"]["a"], dtype=float),
                     b=np.asarray(obj["model"]["b"], dtype=float),
                     ts=float(obj["model"]["ts"]))
    laws = {}
    for name, entry in obj["laws"].items():
        weights = CostWeights(q=np.asarray(entry["q"], dtype=float),
                              r=np.asarray(entry["r"], dtype=float))
        gain = np.asarray(entry["gain"], dtype=float)
        riccati = np.asarray(entry["riccati"], dtype=float)
        s = weights.r + model.b.T @ riccati @ model.b
        laws[name] = LqrLaw(model=model, weights=weights, gain=gain,
                            riccati=riccati,
                            preview_gain=np.linalg.solve(s, model.b.T),
                            closed_loop=model.a - model.b @ gain)
    sets = {name: Polytope(np.asarray(entry["F"], dtype=float),
                           np.asarray(entry["g"], dtype=float))
            for name, entry in obj["sets"].items()}
    u_set = Polytope(np.asarray(obj["u_set"]["F"], dtype=float),
                     np.asarray(obj["u_set"]["g"], dtype=float))
    eta = float(obj["eta"])
    design = AxisDesign(
        model=model, laws=laws, sets=sets,
        x_set=Polytope(np.asarray(obj["x_set"]["F"], dtype=float),
                       np.asarray(obj["x_set"]["g"], dtype=float)),
        u_set=u_set, u_set_tight=u_set.scale(1.0 - eta),
        envelope=np.asarray(obj["envelope"], dtype=float),
        eta=eta, n_prev=int(obj["n_prev"]),
        set_iterations={k: int(v)
                        for k, v in obj.get("set_iterations", {}).items()},
    )
    design.ff_weights = {name: feedforward_weights(law, design.n_prev)
                         for name, law in laws.items()}
    return design


def save_design(bundle, path):
    """Write a DesignBundle to JSON (preview weights are recomputed on
    load rather than stored; they are cheap and fully determined)."""
    payload = {
        "ts": bundle.ts,
        "meta": bundle.meta,
        "axes": {name: _axis_to_dict(d) for name, d in bundle.axes.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_design(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    axes = {name: _axis_from_dict(obj)
            for name, obj in payload["axes"].items()}
    return DesignBundle(axes=axes, ts=float(payload["ts"]),
                        meta=payload.get("meta", {}))

"""Halfspace polytopes and invariant-set computation.

Sets are kept in H-representation {x : F x <= g} with rows normalized to
unit Euclidean norm, so tolerances are plain distances.  All membership,
containment, and redundancy questions are answered with LPs from
:mod:`ictrack.solvers`; there is no vertex enumeration here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solvers import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, solve_lp

__all__ = [
    "PolytopeError",
    "Polytope",
    "InvariantSetResult",
    "max_invariant_set",
]

_ROW_EPS = 1e-12


class PolytopeError(RuntimeError):
    """Raised for dimension mismatches, empty/unbounded sets, and LP failures."""


def _normalize_rows(f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(f, axis=1)
    keep = norms > _ROW_EPS
    dropped = np.flatnonzero(~keep)
    for i in dropped:
        # A zero row reads "0 <= g_i": contradictory g makes the set empty.
        if g[i] < -_ROW_EPS:
            raise PolytopeError(f"row {i} is identically infeasible (0 <= {g[i]:g})")
    f = f[keep]
    g = g[keep]
    norms = norms[keep]
    if f.shape[0] == 0:
        raise PolytopeError("polytope needs at least one non-trivial halfspace")
    return f / norms[:, None], g / norms


class Polytope:
    """Immutable halfspace intersection {x : F x <= g}."""

    __slots__ = ("f", "g")

    def __init__(self, f, g):
        f = np.atleast_2d(np.asarray(f, dtype=float))
        g = np.asarray(g, dtype=float).ravel()
        if f.ndim != 2:
            raise PolytopeError("F must be a matrix")
        if f.shape[0] != g.shape[0]:
            raise PolytopeError(
                f"F has {f.shape[0]} rows but g has {g.shape[0]} entries"
            )
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise PolytopeError("F and g must be finite")
        self.f, self.g = _normalize_rows(f, g)
        self.f.setflags(write=False)
        self.g.setflags(write=False)

    @classmethod
    def from_box(cls, lower, upper) -> "Polytope":
        lower = np.asarray(lower, dtype=float).ravel()
        upper = np.asarray(upper, dtype=float).ravel()
        if lower.shape != upper.shape:
            raise PolytopeError("box bounds must have equal length")
        if np.any(lower > upper):
            raise PolytopeError("box has lower > upper")
        dim = lower.size
        eye = np.eye(dim)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @property
    def dim(self) -> int:
        return self.f.shape[1]

    @property
    def nrows(self) -> int:
        return self.f.shape[0]

    def __repr__(self) -> str:
        return f"Polytope(rows={self.nrows}, dim={self.dim})"

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.dim:
            raise PolytopeError(f"point has dim {x.shape[0]}, set has dim {self.dim}")
        return x

    def contains(self, x, tol: float = 1e-9) -> bool:
        """True iff F x <= g + tol element-wise (absolute tolerance)."""
        x = self._check_point(x)
        return bool(np.all(self.f @ x <= self.g + tol))

    def violation(self, x) -> np.ndarray:
        """Signed slack F x - g per row; positive entries are violations."""
        x = self._check_point(x)
        return self.f @ x - self.g

    def support(self, d) -> float:
        """max d.x over the set; +inf when unbounded in direction d."""
        return self._support(d)[0]

    def _support(self, d, active0=(), g_override=None) -> tuple[float, tuple]:
        """Support value plus the tight rows at the optimum.

        Sweeps over many nearby directions (redundancy removal, invariant
        set iteration) pass the previous tight rows back in as `active0`,
        which usually cuts the LP to a couple of pivots.  `g_override`
        substitutes a different right-hand side without rebuilding the set.
        """
        d = self._check_point(d)
        lp = LpProblem(
            c=-d,
            A_ub=self.f,
            b_ub=self.g if g_override is None else g_override,
            lb=np.full(self.dim, -np.inf),
            ub=np.full(self.dim, np.inf),
        )
        res = solve_lp(lp, active0=active0)
        if res.status == UNBOUNDED:
            return np.inf, ()
        if res.status == INFEASIBLE:
            raise PolytopeError("support of an empty polytope")
        if res.status != OPTIMAL:
            raise PolytopeError(f"support LP failed: {res.status} ({res.diagnostics})")
        return float(-res.objective), res.active_set

    def is_empty(self, tol: float = 1e-9) -> bool:
        lp = LpProblem(
            c=np.zeros(self.dim),
            A_ub=self.f,
            b_ub=self.g,
            lb=np.full(self.dim, -np.inf),
            ub=np.full(self.dim, np.inf),
        )
        res = solve_lp(lp, tol=tol)
        if res.status == INFEASIBLE:
            return True
        if res.status in (OPTIMAL, UNBOUNDED):
            return False
        raise PolytopeError(f"emptiness LP failed: {res.status} ({res.diagnostics})")

    def chebyshev_center(self) -> tuple[np.ndarray, float]:
        """Center and radius of the largest inscribed ball.

        Radius > 0 iff the set has nonempty interior; raises on unbounded
        sets because no largest ball exists.
        """
        if self.nrows < self.dim + 1:
            raise PolytopeError(
                f"chebyshev center needs >= dim+1 rows, got {self.nrows}"
            )
        # Variables (x, r); rows are unit-norm so F x + r <= g.
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        a_ub = np.hstack([self.f, np.ones((self.nrows, 1))])
        lp = LpProblem(
            c=c,
            A_ub=a_ub,
            b_ub=self.g,
            lb=np.full(self.dim + 1, -np.inf),
            ub=np.full(self.dim + 1, np.inf),
        )
        res = solve_lp(lp)
        if res.status == UNBOUNDED:
            raise PolytopeError("unbounded polytope")
        if res.status != OPTIMAL:
            raise PolytopeError(
                f"chebyshev LP failed: {res.status} ({res.diagnostics})"
            )
        return res.x[:-1].copy(), float(res.x[-1])

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate (lower, upper) bounds via 2*dim support LPs."""
        lower = np.empty(self.dim)
        upper = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            upper[i] = self.support(e)
            lower[i] = -self.support(-e)
        return lower, upper

    def sample_points(self, n: int, seed: int) -> np.ndarray:
        """n interior points by rejection sampling from the bounding box.

        Deterministic for a fixed seed.  Raises if the set is unbounded or
        the interior is too thin to hit within the attempt budget.
        """
        if n < 0:
            raise PolytopeError("sample count must be >= 0")
        if n == 0:
            return np.zeros((0, self.dim))
        lower, upper = self.bounding_box()
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise PolytopeError("cannot sample an unbounded polytope")
        _, radius = self.chebyshev_center()
        if radius <= 0.0:
            raise PolytopeError("cannot sample a polytope with empty interior")
        rng = np.random.default_rng(seed)
        points = np.empty((n, self.dim))
        found = 0
        attempts = 0
        max_attempts = 10_000 * n + 10_000
        while found < n:
            batch = max(n - found, 64)
            attempts += batch
            if attempts > max_attempts:
                raise PolytopeError(
                    "rejection sampling exceeded attempt budget; interior too small"
                )
            cand = rng.uniform(lower, upper, size=(batch, self.dim))
            inside = np.all(cand @ self.f.T <= self.g, axis=1)
            hits = cand[inside]
            take = min(hits.shape[0], n - found)
            points[found : found + take] = hits[:take]
            found += take
        return points

    def contains_polytope(self, other: "Polytope", tol: float = 1e-9) -> bool:
        """True iff other subseteq self, by support LPs over self's rows."""
        if other.dim != self.dim:
            raise PolytopeError("dimension mismatch in containment test")
        for i in range(self.nrows):
            if other.support(self.f[i]) > self.g[i] + tol:
                return False
        return True

    def equals(self, other: "Polytope", tol: float = 1e-9) -> bool:
        return self.contains_polytope(other, tol) and other.contains_polytope(
            self, tol
        )

    def intersect(self, other: "Polytope", tol: float = 1e-9) -> "Polytope":
        if other.dim != self.dim:
            raise PolytopeError("dimension mismatch in intersection")
        raw = Polytope(np.vstack([self.f, other.f]), np.concatenate([self.g, other.g]))
        if raw.is_empty():
            return raw
        return raw.remove_redundant(tol)

    def shift(self, x0) -> "Polytope":
        """Translate the set so its former origin sits at x0."""
        x0 = self._check_point(x0)
        return Polytope(self.f, self.g + self.f @ x0)

    def scale(self, alpha: float) -> "Polytope":
        """{alpha * x : x in P} for alpha > 0."""
        if alpha <= 0.0:
            raise PolytopeError("scale factor must be positive")
        return Polytope(self.f, self.g * alpha)

    def erode(self, margins) -> "Polytope":
        """Pontryagin difference with the axis-aligned box |w_i| <= margins_i."""
        margins = np.asarray(margins, dtype=float).ravel()
        if margins.shape[0] != self.dim:
            raise PolytopeError("margin vector dimension mismatch")
        if np.any(margins < 0.0):
            raise PolytopeError("margins must be >= 0")
        return Polytope(self.f, self.g - np.abs(self.f) @ margins)

    def preimage(self, m) -> "Polytope":
        """{x : M x in P} for a square matrix M."""
        m = np.asarray(m, dtype=float)
        if m.shape != (self.dim, self.dim):
            raise PolytopeError("preimage matrix must be square of matching dim")
        return Polytope(self.f @ m, self.g)

    def remove_redundant(self, tol: float = 1e-9) -> "Polytope":
        """Drop rows implied by the rest.

        Exact duplicates go first; then row i is removed when maximizing
        F_i x over the remaining rows stays <= g_i - tol.
        """
        # Rows are unit-norm, so rounding keys catch duplicates reliably.
        keys = {}
        order = []
        for i in range(self.nrows):
            key = (tuple(np.round(self.f[i], 12)), round(self.g[i], 12))
            if key not in keys:
                keys[key] = i
                order.append(i)
        f = self.f[order]
        g = self.g[order]
        deduped = Polytope(f, g)
        n = f.shape[0]
        if n == 1:
            return deduped
        # Testing row i against "everything else" is done by relaxing its
        # own bound far out instead of deleting it: a row already judged
        # redundant changes nothing when left in place, the matrix never
        # changes shape, and the tight rows of one support LP warm-start
        # the next one around the hull.
        keep = np.ones(n, dtype=bool)
        g_work = g.copy()
        basis = ()
        for i in range(n):
            if keep.sum() == 1:
                break
            relaxed = g_work[i]
            g_work[i] = g[i] + 1e7 * (1.0 + abs(g[i]))
            try:
                s, basis = deduped._support(f[i], active0=basis, g_override=g_work)
            except PolytopeError as exc:
                raise PolytopeError(f"redundancy LP failed: {exc}") from exc
            if s <= g[i] - tol:
                keep[i] = False
            else:
                g_work[i] = relaxed
        return Polytope(f[keep], g[keep])


@dataclass
class InvariantSetResult:
    polytope: Polytope
    converged: bool
    iterations: int


def max_invariant_set(
    a_cl,
    x_set: Polytope,
    u_set: Polytope | None = None,
    gain=None,
    max_iter: int = 500,
    tol: float = 1e-9,
) -> InvariantSetResult:
    """Maximal positively invariant set of x+ = A_cl x inside the constraints.

    Starts from X0 = X intersected with {x : F_u (-K x) <= g_u} when an
    input set and gain are supplied, then adds pre-image rows until no new
    row cuts the set.  Only rows added in the previous sweep need support
    tests: once a candidate row is redundant it stays redundant, because
    the set only shrinks.
    """
    a_cl = np.asarray(a_cl, dtype=float)
    dim = x_set.dim
    if a_cl.shape != (dim, dim):
        raise PolytopeError("A_cl must be square of matching dimension")
    rho = float(np.max(np.abs(np.linalg.eigvals(a_cl))))
    if rho >= 1.0:
        raise PolytopeError(f"closed loop is not strictly stable (rho={rho:.6f})")
    if (u_set is None) != (gain is None):
        raise PolytopeError("u_set and gain must be supplied together")

    f0 = [x_set.f]
    g0 = [x_set.g]
    if u_set is not None:
        gain = np.asarray(gain, dtype=float)
        if gain.shape != (u_set.dim, dim):
            raise PolytopeError("gain shape must be (n_inputs, n_states)")
        f0.append(-u_set.f @ gain)
        g0.append(u_set.g)
    current = Polytope(np.vstack(f0), np.concatenate(g0)).remove_redundant(tol)
    if current.is_empty():
        raise PolytopeError("constraint set with input rows is empty")

    # The box around the start set never grows, so it bounds the support of
    # every later iterate; a candidate row already loose over the box needs
    # no LP at all.  Pre-images contract geometrically (rho < 1), so in the
    # tail of the iteration this screen rejects everything and each sweep
    # costs a couple of matrix products.
    box_lo, box_hi = current.bounding_box()

    frontier_f = current.f
    frontier_g = current.g
    converged = False
    iterations = 0
    last_pruned = current.nrows
    basis = ()
    for iterations in range(1, max_iter + 1):
        cand = Polytope(frontier_f, frontier_g).preimage(a_cl)
        box_sup = np.where(cand.f > 0.0, box_hi, box_lo)
        box_sup = np.einsum("ij,ij->i", cand.f, box_sup)
        new_f = []
        new_g = []
        for i in range(cand.nrows):
            margin = tol * (1.0 + abs(cand.g[i]))
            if box_sup[i] <= cand.g[i] + margin:
                continue
            sup, basis = current._support(cand.f[i], active0=basis)
            if sup > cand.g[i] + margin:
                new_f.append(cand.f[i])
                new_g.append(cand.g[i])
        if not new_f:
            converged = True
            break
        current = Polytope(
            np.vstack([current.f, np.array(new_f)]),
            np.concatenate([current.g, np.array(new_g)]),
        )
        frontier_f = np.array(new_f)
        frontier_g = np.array(new_g)
        if current.nrows > 2 * last_pruned + 64:
            current = current.remove_redundant(tol)
            last_pruned = current.nrows
            basis = ()
    final = current.remove_redundant(tol)
    return InvariantSetResult(polytope=final, converged=converged, iterations=iterations)

"""Dense linear and quadratic programming with verified optimality.

The LP solver is a two-phase primal simplex on the full tableau, fronted by
a fast path for the problems this package actually produces: few variables,
many inequality rows.  Those are solved as revised simplex on the dual,
whose basis has only as many columns as the primal has variables, so each
pivot costs one matrix-vector product.  A fast-path answer is accepted only
when an independent KKT check (or a Farkas certificate, for infeasibility)
passes; otherwise the full tableau decides.  Pivoting uses Dantzig's rule
and permanently switches to Bland's rule once a degeneracy counter trips,
so every solve is finite and deterministic (ties are always broken toward
the lowest index).  The QP solver is a primal active-set method built for
receding-horizon use: the Hessian is factorized once per problem structure
and reused across solves, and the working set of the previous solve can
seed the next one.

A result is labelled "optimal" only after an independent check against the
problem data: primal feasibility, dual feasibility and complementary
slackness are recomputed from scratch and must hold within tolerance,
otherwise the solver reports an iteration-limit status with diagnostics
instead of a silently wrong answer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

# Pivot admission threshold; tableau entries below this count as zero.
_PIVOT_EPS = 1e-11
# Consecutive non-improving pivots tolerated before Bland's rule kicks in.
_BLAND_TRIGGER = 60


class SolverInputError(ValueError):
    """Malformed problem data: bad shapes, non-finite entries, bad Hessian."""


def _as_matrix(name, a, ncols):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.shape[1] != ncols:
        raise SolverInputError(f"{name} has {a.shape[1]} columns, expected {ncols}")
    if not np.isfinite(a).all():
        raise SolverInputError(f"{name} contains non-finite entries")
    return a


def _as_vector(name, b, nrows, allow_inf=False):
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != nrows:
        raise SolverInputError(f"{name} has length {b.shape[0]}, expected {nrows}")
    if not allow_inf and not np.isfinite(b).all():
        raise SolverInputError(f"{name} contains non-finite entries")
    if allow_inf and np.isnan(b).any():
        raise SolverInputError(f"{name} contains NaN entries")
    return b


@dataclass
class LpProblem:
    """min c @ x  subject to  A_ub @ x <= b_ub  and  lb <= x <= ub.

    Bounds may be +-inf entry-wise; omitted bounds mean the variables are
    free.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if c.size == 0:
            raise SolverInputError("LP has no variables")
        if not np.isfinite(c).all():
            raise SolverInputError("c contains non-finite entries")
        self.c = c
        n = c.size
        if self.A_ub is None:
            self.A_ub = np.zeros((0, n))
            self.b_ub = np.zeros(0)
        else:
            self.A_ub = _as_matrix("A_ub", self.A_ub, n)
            self.b_ub = _as_vector("b_ub", self.b_ub, self.A_ub.shape[0])
        self.lb = (np.full(n, -np.inf) if self.lb is None
                   else _as_vector("lb", self.lb, n, allow_inf=True))
        self.ub = (np.full(n, np.inf) if self.ub is None
                   else _as_vector("ub", self.ub, n, allow_inf=True))

    @property
    def n(self):
        return self.c.size


@dataclass
class QpProblem:
    """min 0.5 x' H x + f' x  subject to  A_ub x <= b_ub,  A_eq x = b_eq.

    H is symmetrized on construction and must be positive semidefinite.
    """

    H: np.ndarray
    f: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.shape[0] != H.shape[1]:
            raise SolverInputError("H must be square")
        if not np.isfinite(H).all():
            raise SolverInputError("H contains non-finite entries")
        self.H = 0.5 * (H + H.T)
        n = H.shape[0]
        self.f = _as_vector("f", self.f, n)
        eigs = np.linalg.eigvalsh(self.H)
        scale = max(1.0, float(abs(eigs[-1])))
        if eigs[0] < -1e-10 * scale:
            raise SolverInputError(
                f"H is not positive semidefinite (min eigenvalue {eigs[0]:g})")
        if self.A_ub is None:
            self.A_ub = np.zeros((0, n))
            self.b_ub = np.zeros(0)
        else:
            self.A_ub = _as_matrix("A_ub", self.A_ub, n)
            self.b_ub = _as_vector("b_ub", self.b_ub, self.A_ub.shape[0])
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = _as_matrix("A_eq", self.A_eq, n)
            self.b_eq = _as_vector("b_eq", self.b_eq, self.A_eq.shape[0])

    @property
    def n(self):
        return self.H.shape[0]


@dataclass
class SolveResult:
    """Outcome of an LP or QP solve.

    `x` and `objective` are populated only for status "optimal".
    `active_set` holds the inequality rows active at a QP solution, usable
    to warm-start the next solve.
    """

    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    solve_time: float = 0.0
    active_set: tuple = ()
    diagnostics: str = ""


# ---------------------------------------------------------------------------
# Simplex
# ---------------------------------------------------------------------------

def _pivot_loop(T, obj, basis, max_iter, start_iter=0):
    """Run primal simplex pivots on tableau T until an optimality proof.

    T is m x (ncols+1) with the rhs in the last column, kept nonnegative
    throughout.  obj is the reduced-cost row; its last entry carries minus
    the current objective.  Returns (status, iterations) with status one of
    OPTIMAL, UNBOUNDED, ITERATION_LIMIT.
    """
    ncols = T.shape[1] - 1
    bland = False
    stall = 0
    it = start_iter
    while it < max_iter:
        red = obj[:ncols]
        if bland:
            neg = np.flatnonzero(red < -_PIVOT_EPS)
            if neg.size == 0:
                return OPTIMAL, it
            j = int(neg[0])
        else:
            j = int(np.argmin(red))
            if red[j] >= -_PIVOT_EPS:
                return OPTIMAL, it
        col = T[:, j]
        rows = np.flatnonzero(col > _PIVOT_EPS)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, ncols] / col[rows]
        rmin = ratios.min()
        tied = rows[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
        if bland and tied.size > 1:
            r = int(tied[np.argmin(basis[tied])])
        else:
            r = int(tied[0])
        before = obj[ncols]
        T[r] /= T[r, j]
        factors = T[:, j].copy()
        factors[r] = 0.0
        T -= np.outer(factors, T[r])
        np.maximum(T[:, ncols], 0.0, out=T[:, ncols])
        obj -= obj[j] * T[r]
        basis[r] = j
        it += 1
        if obj[ncols] <= before + 1e-13 * (1.0 + abs(before)):
            stall += 1
            if stall >= _BLAND_TRIGGER:
                bland = True
        else:
            stall = 0
    return ITERATION_LIMIT, it


def _reduced_obj_row(costs, T, basis):
    """Objective row in reduced form for the given basis."""
    ncols = T.shape[1] - 1
    obj = np.zeros(ncols + 1)
    obj[:ncols] = costs
    for i, bj in enumerate(basis):
        if costs[bj] != 0.0:
            obj -= costs[bj] * T[i]
    return obj


def _dual_fewvar(c, A, b, start=()):
    """Revised simplex on the dual of  min c@x  s.t.  A@x <= b,  x free.

    The dual  min b@lam, A.T@lam = -c, lam >= 0  has only n equality rows,
    so the basis stays n x n no matter how many inequality rows the primal
    carries.  Returns (status, x, lam, pivots, basis) where status is
    OPTIMAL or INFEASIBLE, or None when this path cannot give a certified
    answer (dual infeasible, singular basis, pivot limit) and the tableau
    solver must decide.  An OPTIMAL answer still needs the caller's KKT
    check; an INFEASIBLE answer has a Farkas ray verified here.

    `start` may carry the tight-row indices of a previous, similar solve;
    when they still form a dual-feasible basis, phase 1 is skipped and the
    solve usually takes a handful of pivots.
    """
    m, n = A.shape
    b = np.asarray(b, dtype=float)
    d = -np.asarray(c, dtype=float)
    art_sign = np.where(d < 0.0, -1.0, 1.0)
    art_cols = np.diag(art_sign)
    basis = list(range(m, m + n))
    cost_real = np.zeros(m)
    phase = 1
    dscale = 1.0 + np.abs(d).max(initial=0.0)
    if len(start) == n and all(0 <= j < m for j in start) and len(set(start)) == n:
        Bw = A[list(start)].T
        try:
            lam_w = np.linalg.solve(Bw, d)
        except np.linalg.LinAlgError:
            lam_w = None
        if lam_w is not None and lam_w.min(initial=0.0) >= -1e-12 * dscale:
            basis = list(start)
            phase = 2
            cost_real = b
    bland = False
    stall = 0
    last_obj = np.inf
    max_pivots = 400 + 10 * m

    for pivots in range(max_pivots):
        B = np.empty((n, n))
        cb = np.empty(n)
        for k, j in enumerate(basis):
            if j < m:
                B[:, k] = A[j]
                cb[k] = cost_real[j]
            else:
                B[:, k] = art_cols[:, j - m]
                cb[k] = 1.0 if phase == 1 else 0.0
        try:
            lam_b = np.linalg.solve(B, d)
            y = np.linalg.solve(B.T, cb)
        except np.linalg.LinAlgError:
            return None
        if lam_b.min(initial=0.0) < -1e-7 * dscale:
            return None
        rc = cost_real - A @ y
        if bland:
            neg = np.flatnonzero(rc < -_PIVOT_EPS)
            e = int(neg[0]) if neg.size else -1
        else:
            e = int(np.argmin(rc))
            if rc[e] >= -_PIVOT_EPS:
                e = -1
        if e < 0:
            art_level = sum(
                max(float(lam_b[k]), 0.0)
                for k, j in enumerate(basis) if j >= m
            )
            if phase == 1:
                if art_level > 1e-9 * dscale:
                    return None
                phase = 2
                cost_real = b
                bland = False
                stall = 0
                last_obj = np.inf
                continue
            lam = np.zeros(m)
            for k, j in enumerate(basis):
                if j < m:
                    lam[j] = max(float(lam_b[k]), 0.0)
            tight = tuple(sorted(j for j in basis if j < m))
            return OPTIMAL, y, lam, pivots, tight
        try:
            w = np.linalg.solve(B, A[e])
        except np.linalg.LinAlgError:
            return None
        pos = np.flatnonzero(w > _PIVOT_EPS)
        if pos.size == 0:
            if phase == 1:
                return None
            # Dual unbounded along this ray means the primal is infeasible.
            # Build the Farkas certificate on real columns only and verify.
            ray = np.zeros(m)
            ray[e] = 1.0
            clean = True
            for k, j in enumerate(basis):
                if j < m:
                    ray[j] -= float(w[k])
                elif abs(float(w[k])) > 1e-9:
                    clean = False
            ray = np.maximum(ray, 0.0)
            scale = 1.0 + np.abs(b).max(initial=0.0)
            if (clean
                    and np.abs(A.T @ ray).max(initial=0.0) <= 1e-7 * (1.0 + ray.max())
                    and float(b @ ray) < -1e-9 * scale):
                return INFEASIBLE, None, None, pivots, ()
            return None
        theta = lam_b[pos] / w[pos]
        tmin = theta.min()
        tied = pos[theta <= tmin + 1e-12 * (1.0 + abs(tmin))]
        if bland:
            r = int(tied[np.argmin([basis[k] for k in tied])])
        else:
            arts = [k for k in tied if basis[k] >= m]
            r = int(arts[0]) if arts else int(tied[0])
        obj = float(cb @ lam_b)
        if obj >= last_obj - 1e-13 * (1.0 + abs(last_obj)):
            stall += 1
            if stall >= _BLAND_TRIGGER:
                bland = True
        else:
            stall = 0
        last_obj = obj
        basis[r] = e
    return None


def _try_dual_fast(p, tol, t0, active0=()):
    """Run the few-variable dual fast path on an LpProblem.

    Variable bounds are folded into inequality rows first (A_ub rows keep
    their indices, bound rows follow).  Returns a finished SolveResult, or
    None when the tableau solver should run.
    """
    n = p.n
    rows = [p.A_ub]
    rhs = [p.b_ub]
    eye = np.eye(n)
    fin_ub = np.isfinite(p.ub)
    fin_lb = np.isfinite(p.lb)
    if fin_ub.any():
        rows.append(eye[fin_ub])
        rhs.append(p.ub[fin_ub])
    if fin_lb.any():
        rows.append(-eye[fin_lb])
        rhs.append(-p.lb[fin_lb])
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    if A.shape[0] == 0:
        return None

    out = _dual_fewvar(p.c, A, b, start=active0)
    if out is None:
        return None
    status, x, lam, pivots, tight = out
    if status == INFEASIBLE:
        return SolveResult(INFEASIBLE, iterations=pivots,
                           solve_time=time.perf_counter() - t0,
                           diagnostics="dual ray certificate")
    bscale = 1.0 + np.abs(b).max(initial=0.0)
    cscale = 1.0 + np.abs(p.c).max(initial=0.0)
    slack = b - A @ x
    primal = -slack.min(initial=0.0)
    station = np.abs(A.T @ lam + p.c).max(initial=0.0)
    comp = np.abs(lam * slack).max(initial=0.0)
    xscale = 1.0 + np.abs(x).max(initial=0.0)
    ok = (primal <= tol * bscale
          and station <= tol * cscale * (1.0 + np.abs(lam).max(initial=0.0))
          and comp <= tol * bscale * cscale * xscale)
    if not ok:
        return None
    return SolveResult(OPTIMAL, x=x.copy(), objective=float(p.c @ x),
                       iterations=pivots,
                       solve_time=time.perf_counter() - t0,
                       active_set=tight)


def solve_lp(problem, tol=1e-8, max_iter=None, active0=()):
    """Solve an LpProblem by two-phase dense simplex.

    Returns a SolveResult whose status is one of "optimal", "infeasible",
    "unbounded" or "iteration-limit".  An "optimal" result has passed an
    independent KKT check (primal and dual feasibility, complementary
    slackness) recomputed from the standardized problem data.

    `active0` may carry `active_set` indices from an earlier solve of a
    problem with the same constraint rows; a still-valid set warm-starts
    the solve.  It is advisory only and never changes the answer.
    """
    t0 = time.perf_counter()
    p = problem
    n = p.n
    if np.any(p.lb > p.ub):
        return SolveResult(INFEASIBLE, solve_time=time.perf_counter() - t0,
                           diagnostics="contradictory variable bounds")

    if n <= 8:
        fast = _try_dual_fast(p, tol, t0, active0=active0)
        if fast is not None:
            return fast

    # Standard form: shift finite lower bounds to zero, flip upper-bounded
    # free-below variables, split doubly-free variables.  Finite upper
    # bounds of shifted variables become extra inequality rows.
    col_var = []          # per standard column: (original index, sign)
    c_std = []
    offset = np.zeros(n)
    ub_rows = []          # (standard column, rhs)
    for j in range(n):
        lo, hi = p.lb[j], p.ub[j]
        if np.isfinite(lo):
            offset[j] = lo
            col_var.append((j, 1.0))
            c_std.append(p.c[j])
            if np.isfinite(hi):
                ub_rows.append((len(col_var) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            col_var.append((j, -1.0))
            c_std.append(-p.c[j])
        else:
            col_var.append((j, 1.0))
            c_std.append(p.c[j])
            col_var.append((j, -1.0))
            c_std.append(-p.c[j])
    nstd = len(col_var)
    c_std = np.asarray(c_std)

    m_ub = p.A_ub.shape[0]
    A = np.zeros((m_ub + len(ub_rows), nstd))
    for k, (j, s) in enumerate(col_var):
        A[:m_ub, k] = s * p.A_ub[:, j]
    b = np.concatenate([p.b_ub - p.A_ub @ offset,
                        np.array([rhs for _, rhs in ub_rows])])
    for i, (k, _) in enumerate(ub_rows):
        A[m_ub + i, k] = 1.0

    # Constant rows carry no variables: contradiction or drop.
    if A.shape[0]:
        row_span = np.abs(A).max(axis=1)
        if np.any((row_span <= 0.0) & (b < -1e-9 * (1.0 + np.abs(b).max()))):
            return SolveResult(INFEASIBLE, solve_time=time.perf_counter() - t0,
                               diagnostics="contradictory constant row")
        keep = row_span > 0.0
        A, b = A[keep], b[keep]
    m = A.shape[0]

    if m:
        row_scale = np.maximum(np.abs(A).max(axis=1), 1e-12)
        A = A / row_scale[:, None]
        b = b / row_scale

    if max_iter is None:
        max_iter = 200 + 50 * (m + nstd)

    def finish(status, z=None, iters=0, diag=""):
        x = None
        objective = None
        if status == OPTIMAL:
            x = offset.copy()
            for k, (j, s) in enumerate(col_var):
                x[j] += s * z[k]
            objective = float(p.c @ x)
        return SolveResult(status, x=x, objective=objective, iterations=iters,
                           solve_time=time.perf_counter() - t0,
                           diagnostics=diag)

    if m == 0:
        if np.any(c_std < -_PIVOT_EPS):
            return finish(UNBOUNDED)
        return finish(OPTIMAL, z=np.zeros(nstd))

    # Equality form A z + sigma s = b with slacks s >= 0; rows with b < 0
    # are negated (slack sign -1) and receive an artificial variable.
    flip = b < 0
    Af = np.where(flip[:, None], -A, A)
    bf = np.where(flip, -b, b)
    sigma = np.where(flip, -1.0, 1.0)
    art_rows = np.flatnonzero(flip)
    nart = art_rows.size
    ntot = nstd + m
    T = np.zeros((m, ntot + nart + 1))
    T[:, :nstd] = Af
    T[np.arange(m), nstd + np.arange(m)] = sigma
    T[:, -1] = bf
    basis = nstd + np.arange(m)
    for a, i in enumerate(art_rows):
        T[i, ntot + a] = 1.0
        basis[i] = ntot + a

    iters = 0
    if nart:
        costs1 = np.zeros(ntot + nart)
        costs1[ntot:] = 1.0
        obj1 = _reduced_obj_row(costs1, T, basis)
        status, iters = _pivot_loop(T, obj1, basis, max_iter)
        if status == ITERATION_LIMIT:
            return finish(ITERATION_LIMIT, iters=iters, diag="phase 1 stalled")
        if -obj1[-1] > 1e-8 * (1.0 + np.abs(bf).max()):
            return finish(INFEASIBLE, iters=iters)
        # Pivot lingering zero-level artificials out of the basis.  Every
        # row owns a slack column, so a replacement column always exists.
        for i in range(m):
            if basis[i] >= ntot:
                row = T[i, :ntot]
                cand = np.flatnonzero(np.abs(row) > 1e-9)
                if cand.size == 0:
                    return finish(ITERATION_LIMIT, iters=iters,
                                  diag="artificial stuck in basis")
                j = int(cand[np.argmax(np.abs(row[cand]))])
                T[i] /= T[i, j]
                factors = T[:, j].copy()
                factors[i] = 0.0
                T -= np.outer(factors, T[i])
                basis[i] = j
    T = np.hstack([T[:, :ntot], T[:, [-1]]])

    costs2 = np.concatenate([c_std, np.zeros(m)])
    obj2 = _reduced_obj_row(costs2, T, basis)
    status, iters = _pivot_loop(T, obj2, basis, max_iter, start_iter=iters)
    if status == UNBOUNDED:
        return finish(UNBOUNDED, iters=iters)
    if status == ITERATION_LIMIT:
        return finish(ITERATION_LIMIT, iters=iters, diag="phase 2 stalled")

    z_full = np.zeros(ntot)
    z_full[basis] = T[:, -1]

    # Independent certificate on the equality form.
    Aeq = np.zeros((m, ntot))
    Aeq[:, :nstd] = Af
    Aeq[np.arange(m), nstd + np.arange(m)] = sigma
    bscale = 1.0 + np.abs(bf).max(initial=0.0)
    cscale = 1.0 + np.abs(c_std).max(initial=0.0)
    primal = np.abs(Aeq @ z_full - bf).max(initial=0.0)
    sign = -z_full.min(initial=0.0)
    B = Aeq[:, basis]
    try:
        y = np.linalg.solve(B.T, costs2[basis])
    except np.linalg.LinAlgError:
        y, *_ = np.linalg.lstsq(B.T, costs2[basis], rcond=None)
    red = costs2 - Aeq.T @ y
    dual = -red.min(initial=0.0)
    gap = abs(float(z_full @ red))
    ok = (primal <= tol * bscale and sign <= tol * bscale
          and dual <= tol * cscale
          and gap <= tol * cscale * (1.0 + np.abs(z_full).max(initial=0.0)))
    if not ok:
        return finish(ITERATION_LIMIT, iters=iters,
                      diag=(f"optimality certificate failed: primal={primal:g}"
                            f" sign={sign:g} dual={dual:g} gap={gap:g}"))
    return finish(OPTIMAL, z=z_full[:nstd], iters=iters)


# ---------------------------------------------------------------------------
# Active-set QP
# ---------------------------------------------------------------------------

class ActiveSetQp:
    """Primal active-set solver for  min 0.5 x'Hx + f'x  over
    A_ub x <= b_ub  and  A_eq x = b_eq,  with H and the constraint matrices
    fixed at construction.

    H must be positive definite.  Right-hand sides vary per solve, which
    matches the receding-horizon pattern where only the offsets move
    between calls; the Cholesky factor of H and the back-solved constraint
    rows are computed once and reused.
    """

    def __init__(self, H, A_ub=None, A_eq=None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        if H.shape[0] != H.shape[1] or not np.isfinite(H).all():
            raise SolverInputError("H must be a finite square matrix")
        self.H = 0.5 * (H + H.T)
        self.n = H.shape[0]
        self.A_ub = (_as_matrix("A_ub", A_ub, self.n) if A_ub is not None
                     else np.zeros((0, self.n)))
        self.A_eq = (_as_matrix("A_eq", A_eq, self.n) if A_eq is not None
                     else np.zeros((0, self.n)))
        try:
            self._cf = scipy.linalg.cho_factor(self.H, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise SolverInputError(
                "H is not positive definite; the active-set method needs a "
                "strictly convex objective") from exc
        self._hinv_rows = {}
        self._hinv_eq = (scipy.linalg.cho_solve(self._cf, self.A_eq.T)
                         if self.A_eq.shape[0] else np.zeros((self.n, 0)))

    def _hinv(self, v):
        return scipy.linalg.cho_solve(self._cf, v)

    def _hinv_row(self, i):
        got = self._hinv_rows.get(i)
        if got is None:
            got = self._hinv(self.A_ub[i])
            self._hinv_rows[i] = got
        return got

    def solve(self, f, b_ub=None, b_eq=None, x0=None, active0=(),
              tol=1e-8, max_iter=None):
        """Solve for the given linear term and right-hand sides.

        `x0` is an optional starting point (checked for feasibility, not
        trusted) and `active0` an optional iterable of inequality row
        indices from a previous solve used to seed the working set.
        """
        t0 = time.perf_counter()
        f = _as_vector("f", f, self.n)
        mi = self.A_ub.shape[0]
        me = self.A_eq.shape[0]
        b_ub = _as_vector("b_ub", b_ub, mi) if mi else np.zeros(0)
        b_eq = _as_vector("b_eq", b_eq, me) if me else np.zeros(0)
        if max_iter is None:
            max_iter = 50 + 10 * (self.n + mi)
        bscale = (1.0 + (np.abs(b_ub).max() if mi else 0.0)
                  + (np.abs(b_eq).max() if me else 0.0))
        feas_tol = 10.0 * tol * bscale

        def feasible(x):
            if me and np.abs(self.A_eq @ x - b_eq).max() > feas_tol:
                return False
            if mi and (self.A_ub @ x - b_ub).max() > feas_tol:
                return False
            return True

        x = None
        if x0 is not None:
            x0 = np.asarray(x0, dtype=float).reshape(-1)
            if x0.shape[0] == self.n and np.isfinite(x0).all() and feasible(x0):
                x = x0.copy()
        if x is None:
            cand = self._equality_minimizer(f, b_eq)
            if feasible(cand):
                x = cand
        if x is None:
            x, status, diag = self._phase1(b_ub, b_eq, tol)
            if x is None:
                return SolveResult(status, iterations=0,
                                   solve_time=time.perf_counter() - t0,
                                   diagnostics=diag)

        W = []
        if mi:
            slack = b_ub - self.A_ub @ x
            for i in active0:
                i = int(i)
                if 0 <= i < mi and abs(slack[i]) <= feas_tol and i not in W:
                    W.append(i)
                    if len(W) >= self.n - me:
                        break

        it = 0
        lam = np.zeros(0)
        status = ITERATION_LIMIT
        diag = "iteration limit reached"
        while it < max_iter:
            it += 1
            g = self.H @ x + f
            hinv_g = self._hinv(g)
            if me + len(W) == 0:
                lam = np.zeros(0)
                p = -hinv_g
            else:
                cols = [self._hinv_eq[:, i] for i in range(me)]
                cols += [self._hinv_row(i) for i in W]
                hinv_at = np.column_stack(cols)
                a_act = (np.vstack([self.A_eq, self.A_ub[W]]) if me
                         else self.A_ub[W])
                S = a_act @ hinv_at
                try:
                    lam = np.linalg.solve(S, -(hinv_at.T @ g))
                except np.linalg.LinAlgError:
                    diag = "degenerate working set"
                    break
                p = -hinv_g - hinv_at @ lam
            if np.abs(p).max(initial=0.0) <= tol * (1.0 + np.abs(x).max()):
                lam_i = lam[me:]
                if lam_i.size == 0 or lam_i.min() >= -tol:
                    status = OPTIMAL
                    break
                W.pop(int(np.argmin(lam_i)))
                continue
            alpha = 1.0
            block = -1
            if mi:
                outside = np.setdiff1d(np.arange(mi), W)
                if outside.size:
                    den = self.A_ub[outside] @ p
                    pos = den > 1e-12 * (1.0 + np.abs(p).max())
                    if pos.any():
                        rows = outside[pos]
                        gaps = np.maximum(b_ub[rows] - self.A_ub[rows] @ x, 0.0)
                        ratios = gaps / den[pos]
                        jmin = int(np.argmin(ratios))
                        if ratios[jmin] < alpha:
                            alpha = float(ratios[jmin])
                            block = int(rows[jmin])
            x = x + alpha * p
            if block >= 0:
                if len(W) >= self.n - me:
                    diag = "working set full"
                    break
                W.append(block)

        if status != OPTIMAL:
            return SolveResult(status, iterations=it,
                               solve_time=time.perf_counter() - t0,
                               diagnostics=diag)

        lam_full = np.zeros(mi)
        if W:
            lam_full[W] = np.maximum(lam[me:], 0.0)
        ok, kdiag = self._kkt_ok(x, f, b_ub, b_eq, lam_full, lam[:me], tol)
        if not ok:
            return SolveResult(ITERATION_LIMIT, iterations=it,
                               solve_time=time.perf_counter() - t0,
                               diagnostics="KKT verification failed: " + kdiag)
        obj = float(0.5 * x @ (self.H @ x) + f @ x)
        return SolveResult(OPTIMAL, x=x, objective=obj, iterations=it,
                           solve_time=time.perf_counter() - t0,
                           active_set=tuple(sorted(W)))

    def _equality_minimizer(self, f, b_eq):
        hinv_f = self._hinv(f)
        me = self.A_eq.shape[0]
        if me == 0:
            return -hinv_f
        S = self.A_eq @ self._hinv_eq
        nu = np.linalg.solve(S, -(b_eq + self.A_eq @ hinv_f))
        return -hinv_f - self._hinv_eq @ nu

    def _phase1(self, b_ub, b_eq, tol):
        """Find a feasible point by LP, or classify the problem infeasible.

        Guarded by a size limit: a dense phase-1 tableau for very large
        problems would dwarf the QP itself, and in-range callers always
        provide a warm start, so hitting the guard reports an
        iteration-limit failure rather than thrashing memory.
        """
        mi, me, n = self.A_ub.shape[0], self.A_eq.shape[0], self.n
        rows = mi + 2 * me
        if rows * (2 * (n + 1) + rows) > 4_000_000:
            return None, ITERATION_LIMIT, \
                "no warm start and phase-1 LP exceeds size guard"
        c = np.zeros(n + 1)
        c[n] = 1.0
        A = np.zeros((rows, n + 1))
        b = np.concatenate([b_ub, b_eq, -b_eq])
        A[:mi, :n] = self.A_ub
        if me:
            A[mi:mi + me, :n] = self.A_eq
            A[mi + me:, :n] = -self.A_eq
        A[:, n] = -1.0
        lb = np.full(n + 1, -np.inf)
        lb[n] = 0.0
        res = solve_lp(LpProblem(c, A, b, lb=lb), tol=tol)
        if res.status != OPTIMAL:
            return None, res.status, "phase-1 LP " + res.status
        bscale = 1.0 + np.abs(b).max(initial=0.0)
        if res.x[n] > 10.0 * tol * bscale:
            return None, INFEASIBLE, f"phase-1 minimax violation {res.x[n]:g}"
        return res.x[:n], OPTIMAL, ""

    def _kkt_ok(self, x, f, b_ub, b_eq, lam, nu, tol):
        scale = 10.0 * (1.0 + max(np.abs(self.H @ x).max(initial=0.0),
                                  np.abs(f).max(initial=0.0)))
        stat = self.H @ x + f
        if lam.size:
            stat = stat + self.A_ub.T @ lam
        if nu.size:
            stat = stat + self.A_eq.T @ nu
        if np.abs(stat).max(initial=0.0) > tol * scale:
            return False, f"stationarity residual {np.abs(stat).max():g}"
        bscale = 10.0 * (1.0 + np.abs(b_ub).max(initial=0.0)
                         + np.abs(b_eq).max(initial=0.0))
        if b_ub.size:
            viol = (self.A_ub @ x - b_ub).max()
            if viol > tol * bscale:
                return False, f"primal violation {viol:g}"
            comp = np.abs(lam * (self.A_ub @ x - b_ub)).max(initial=0.0)
            if comp > tol * scale * bscale:
                return False, f"complementarity residual {comp:g}"
        if b_eq.size:
            eviol = np.abs(self.A_eq @ x - b_eq).max()
            if eviol > tol * bscale:
                return False, f"equality violation {eviol:g}"
        return True, ""


def solve_qp(problem, tol=1e-8, x0=None, active0=(), max_iter=None):
    """Solve a QpProblem by the primal active-set method.

    Thin wrapper over ActiveSetQp for one-shot use; callers solving a
    sequence of related QPs should hold an ActiveSetQp and feed the
    previous active set back in.
    """
    qp = ActiveSetQp(problem.H,
                     problem.A_ub if problem.A_ub.size else None,
                     problem.A_eq if problem.A_eq.size else None)
    return qp.solve(problem.f,
                    problem.b_ub if problem.b_ub.size else None,
                    problem.b_eq if problem.b_eq.size else None,
                    x0=x0, active0=active0, tol=tol, max_iter=max_iter)

"""Exact homotopy in tau for l1-penalized least squares under affine constraints.

Solves min ||Rw - y||^2 + tau * sum_i s_i |w_i| subject to Aw = a for every
tau at once. The path is computed in two phases:

  1. A formal small-epsilon phase on the auxiliary objective
     ||Aw - a||^2 + eps ||Rw - y||^2 + tau_eps sum s|w|, tracked as truncated
     second-order expansions in eps (jets). It runs the penalty down until
     the constraint holds exactly at zeroth order, which yields the starting
     weights, the starting penalty tau_0 of the original problem, and the
     initial Lagrange multipliers. The terminal point is then certified: a
     multiplier line lam(tau) must keep it stationary for every tau above
     the knee. When certification fails (near-degenerate instances where
     expansion orders collide), the start is rebuilt directly from the
     l1-minimal face of the constraint set and re-certified.
  2. Ordinary continuation in real arithmetic on the Lagrangian optimality
     system from tau_0 down to tau_stop, moving weights and multipliers
     jointly and recording a breakpoint at every support change. Segments
     where only the multipliers move are recorded like any other.

Penalty weights are handled by column rescaling; reported weights are in
original coordinates while multipliers are invariant under the rescaling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import jets
from .errors import (
    EpsilonPhaseStall,
    InfeasibleConstraints,
    InputError,
    SingularActiveSystem,
    SolverError,
    TauBelowStop,
)
from .jets import Jet
from .path_unconstrained import (
    ZERO_TIE_REL,
    Event,
    PenalizedProblem,
    SolutionPath,
)

__all__ = [
    "AffineConstraints",
    "FirstOrderState",
    "ConstrainedBreakpoint",
    "find_constrained_start",
    "solve_constrained_path",
    "multipliers_at",
]

_RESID_REL = 1e-9    # consistency gate for least-squares solves
_COND_LIMIT = 1e12   # constraint rows closer to dependence than this are rejected


@dataclass(frozen=True, eq=False)
class AffineConstraints:
    """The feasible set {w : matrix @ w = rhs}.

    Args:
        matrix: m x N array of constraint rows (m may be zero).
        rhs: length-m right-hand side.

    Raises:
        InfeasibleConstraints: no w satisfies matrix @ w = rhs (least-squares
            residual above 1e-10); checked before row independence so that
            contradictory duplicated rows report infeasibility.
        InputError: malformed input, or rows of the matrix (near-)dependent.
    """

    matrix: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        a = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        if A.size == 0:
            A = A.reshape(0, A.shape[1] if A.ndim == 2 and A.shape[1] else 0)
            a = a.reshape(0)
        if A.ndim != 2 or a.ndim != 1:
            raise InputError("constraint matrix must be 2-d and rhs 1-d")
        if A.shape[0] != a.shape[0]:
            raise InputError(
                f"constraint rows ({A.shape[0]}) and rhs length ({a.shape[0]}) differ"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(a))):
            raise InputError("constraints must be finite")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "rhs", a)
        m, n = A.shape
        if m == 0:
            return
        w_ls, _, _, _ = np.linalg.lstsq(A, a, rcond=None)
        resid = float(np.max(np.abs(A @ w_ls - a), initial=0.0))
        if resid > 1e-10 * max(1.0, float(np.max(np.abs(a), initial=0.0))):
            raise InfeasibleConstraints(
                f"constraint system has no solution (residual {resid:.3e})"
            )
        if m > n:
            raise InputError("more constraint rows than variables cannot be independent")
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[0] == 0.0 or sv[-1] * _COND_LIMIT < sv[0]:
            raise InputError("constraint rows are linearly dependent or nearly so")

    @property
    def n_constraints(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_assets(self) -> int:
        return self.matrix.shape[1]

    def fingerprint_bytes(self) -> bytes:
        return (
            repr(self.matrix.shape).encode()
            + self.matrix.tobytes()
            + self.rhs.tobytes()
        )


@dataclass(frozen=True)
class FirstOrderState:
    """One small-epsilon phase breakpoint, expanded to first order.

    Weights along the phase are w0 + eps*w1 + O(eps^2) and the auxiliary
    penalty is tau0 + eps*tau1 + O(eps^2). direction0/direction1 and
    step0/step1 describe the move that produced this state from its
    predecessor (all zero for the first state). Quantities refer to the
    penalty-rescaled problem; for unit penalty weights that is the original
    problem. At every state, active components balance the constraint
    gradient at zeroth order and the data gradient at first order:

        (A^T (a - A w0))_i           = tau0/2 * sgn(w_i)
        (-A^T A w1 + R^T (y - R w0))_i = tau1/2 * sgn(w_i)
    """

    w0: np.ndarray
    w1: np.ndarray
    tau0: float
    tau1: float
    direction0: np.ndarray
    direction1: np.ndarray
    step0: float
    step1: float


@dataclass(frozen=True)
class ConstrainedBreakpoint:
    """A kink of the constrained path.

    Attributes:
        tau: penalty level of the kink.
        weights: minimizer at tau (exact zeros off the active set).
        multipliers: Lagrange multipliers of Aw = a at tau.
        active_set: sorted working set; may include an index that entered at
            this tau and still has zero weight.
        generalized_residual: R^T(y - Rw) + A^T lam of the penalty-rescaled
            problem, which sits at +-tau/2 on the active set and within
            [-tau/2, tau/2] elsewhere.
        event: what happened at this kink (START / ENTER / LEAVE / STOP).
    """

    tau: float
    weights: np.ndarray
    multipliers: np.ndarray
    active_set: tuple[int, ...]
    generalized_residual: np.ndarray
    event: Event = field(default_factory=lambda: Event("START"))


def _prod(x, y):
    # truncated-expansion product rule: an exact zero annihilates an unknown
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = x * y
    return np.where((x == 0.0) | (y == 0.0), 0.0, out)


def _snap(arr: np.ndarray, tol: float) -> np.ndarray:
    out = np.array(arr, dtype=float)
    small = np.abs(out) <= tol
    out[small & ~np.isnan(out)] = 0.0
    return out


def _minnorm_solve(M: np.ndarray, rhs: np.ndarray):
    """Min-norm least-squares solution, consistency residual, condition number.

    The residual of a mathematically consistent system scales with the
    condition number of the retained spectrum, so callers compare it against
    a kappa-aware gate rather than a fixed one.
    """
    if M.shape[0] == 0 or M.shape[1] == 0:
        return np.zeros(M.shape[1]), float(np.max(np.abs(rhs), initial=0.0)), 1.0
    x, _, rank, sv = np.linalg.lstsq(M, rhs, rcond=None)
    resid = float(np.max(np.abs(M @ x - rhs), initial=0.0))
    kappa = float(sv[0] / sv[rank - 1]) if rank else 1.0
    return x, resid, kappa


def _consistency_gate(rhs_scale: float, kappa: float) -> float:
    eps = np.finfo(float).eps
    return max(1.0, rhs_scale) * max(_RESID_REL, 50.0 * eps * kappa)


def _stacked_direction(M: np.ndarray, G: np.ndarray, sigma: np.ndarray,
                       scale: float):
    """Direction jets (u0, u1, u2) of the small-epsilon phase.

    Solves the triangular hierarchy M u0 = sigma, G u0 + M u1 = 0,
    G u1 + M u2 = 0. M is typically singular (more active components than
    constraints); the kernel component of u0 (and u1) is pinned by requiring
    the next equation to stay solvable, which is unique because G is positive
    definite on the kernel of M. A genuinely unreachable hierarchy raises
    SingularActiveSystem; only the second-order block may degrade to unknown.
    """
    k = len(sigma)
    if k == 0:
        z = np.zeros(0)
        return z, z.copy(), z.copy()
    U, sv, _ = np.linalg.svd(M)
    rank = int(np.sum(sv > 1e-12 * sv[0])) if sv[0] > 0 else 0
    Ur = U[:, :rank]
    Z = U[:, rank:]
    kappa = float(sv[0] / sv[rank - 1]) if rank else 1.0

    def msolve(rhs, what):
        xm = Ur @ ((Ur.T @ rhs) / sv[:rank]) if rank else np.zeros(k)
        resid = float(np.max(np.abs(M @ xm - rhs), initial=0.0))
        rhs_scale = max(scale, float(np.max(np.abs(rhs), initial=0.0)))
        if resid > _consistency_gate(rhs_scale, kappa):
            raise SingularActiveSystem(
                f"active constraint system cannot balance the {what}"
            )
        return xm

    def kernel_fix(x):
        # shift x inside ker(M) so that G x stays in range(M)
        if Z.shape[1] == 0:
            return x
        H = Z.T @ G @ Z
        hs = np.linalg.svd(H, compute_uv=False)
        if hs[0] == 0.0 or hs[-1] <= 1e-12 * hs[0]:
            raise SingularActiveSystem(
                "active design is degenerate on the constraint kernel"
            )
        c = np.linalg.solve(H, -(Z.T @ (G @ x)))
        return x + Z @ c

    u0 = kernel_fix(msolve(sigma, "sign vector"))
    u1 = kernel_fix(msolve(-(G @ u0), "first-order balance"))
    try:
        u2 = msolve(-(G @ u1), "second-order balance")
    except SingularActiveSystem:
        u2 = np.full(k, np.nan)
    return u0, u1, u2


def _bordered_direction(GJJ: np.ndarray, AJ: np.ndarray, sigma: np.ndarray):
    """Weight and multiplier velocities of the Lagrangian continuation.

    Solves [G_JJ, -A_J^T; A_J, 0] (u_J; s) = (sigma; 0). A consistent but
    rank-deficient system takes the min-norm multipliers (the weight block is
    then still unique on the data seen by the path); an inconsistent one
    raises SingularActiveSystem.
    """
    k = len(sigma)
    m = AJ.shape[0]
    K = np.zeros((k + m, k + m))
    K[:k, :k] = GJJ
    K[:k, k:] = -AJ.T
    K[k:, :k] = AJ
    rhs = np.concatenate([sigma, np.zeros(m)])
    x, resid, kappa = _minnorm_solve(K, rhs)
    rhs_scale = max(float(np.max(np.abs(rhs), initial=0.0)),
                    float(np.max(np.abs(K), initial=0.0))
                    * float(np.max(np.abs(x), initial=0.0)))
    if resid > _consistency_gate(rhs_scale, kappa):
        raise SingularActiveSystem("bordered optimality system is inconsistent")
    return x[:k], x[k:]


def _lex_sign(c0: float, c1: float) -> float:
    if c0 != 0.0:
        return math.copysign(1.0, c0)
    if c1 != 0.0:
        return math.copysign(1.0, c1)
    return 0.0


def _start_multipliers(c: np.ndarray, A: np.ndarray):
    """Multipliers minimizing max_i |c_i + (A^T lam)_i| (zero-rhs start).

    Used when the right-hand side a is zero, where w = 0 is feasible and the
    path starts there: tau_0 is twice the minimax value. The minimum of a max
    of affine functions is attained where enough of them are active, so it is
    found exactly by enumerating small active subsets. Exact for up to two
    effective constraint directions, which is all the library needs; more
    are rejected.
    """
    m, n = A.shape
    if m == 0 or n == 0:
        return np.zeros(m), float(np.max(np.abs(c), initial=0.0))
    # restrict to the row space of A; orthogonal multiplier components are idle
    U, sv, _ = np.linalg.svd(A)
    r = int(np.sum(sv > 1e-12 * sv[0])) if sv.size and sv[0] > 0 else 0
    if r == 0:
        return np.zeros(m), float(np.max(np.abs(c), initial=0.0))
    if r > 2:
        raise InputError(
            "zero-rhs start supports at most two independent constraint rows"
        )
    Ur = U[:, :r]
    D = A.T @ Ur                      # (n, r): functions f_i(t) = c_i + D_i . t
    cands = [np.zeros(r)]
    t_ls, _, _, _ = np.linalg.lstsq(D, -c, rcond=None)
    cands.append(t_ls)
    if r == 1:
        d = D[:, 0]
        for i in range(n):
            if abs(d[i]) > 1e-14:
                cands.append(np.array([-c[i] / d[i]]))
            for j in range(i + 1, n):
                for sj in (1.0, -1.0):
                    den = d[i] - sj * d[j]
                    if abs(den) > 1e-14:
                        cands.append(np.array([(sj * c[j] - c[i]) / den]))
    else:
        # signed lines +-f_i; a vertex of the optimal level set has three active
        rows = np.vstack([D, -D])                    # (2n, 2)
        offs = np.concatenate([c, -c])
        K = rows.shape[0]
        tri = [(p, q, w_) for p in range(K) for q in range(p + 1, K)
               for w_ in range(q + 1, K)]
        mats = np.array([
            [rows[p] - rows[q], rows[p] - rows[w_]] for p, q, w_ in tri
        ])
        rhss = np.array([
            [offs[q] - offs[p], offs[w_] - offs[p]] for p, q, w_ in tri
        ])
        dets = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
        good = np.abs(dets) > 1e-12 * np.maximum(
            np.abs(mats).max(axis=(1, 2)) ** 2, 1e-300
        )
        for Mq, rq in zip(mats[good], rhss[good]):
            cands.append(np.linalg.solve(Mq, rq))
        # double zeros f_i = f_j = 0 catch flat optima the triples miss
        for p in range(n):
            for q in range(p + 1, n):
                Mq = np.array([D[p], D[q]])
                det = Mq[0, 0] * Mq[1, 1] - Mq[0, 1] * Mq[1, 0]
                if abs(det) > 1e-12 * max(np.abs(Mq).max() ** 2, 1e-300):
                    cands.append(np.linalg.solve(Mq, -np.array([c[p], c[q]])))
    pts = np.array(cands)
    best_val = np.inf
    best_t = pts[0]
    for lo in range(0, pts.shape[0], 20000):
        block = pts[lo:lo + 20000]
        vals = np.max(np.abs(c[None, :] + block @ D.T), axis=1)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_t = block[j]
    return Ur @ best_t, best_val


def multipliers_at(path: SolutionPath, tau: float) -> np.ndarray:
    """Multipliers at an arbitrary tau, linear between breakpoints."""
    bps = path.breakpoints
    if not bps:
        raise SolverError("path has no breakpoints")
    if tau >= bps[0].tau:
        return bps[0].multipliers.copy()
    slack = ZERO_TIE_REL * max(1.0, bps[0].tau)
    if tau < bps[-1].tau - slack:
        raise TauBelowStop(
            f"tau = {tau} is below the path terminus {bps[-1].tau}"
        )
    tau = max(tau, bps[-1].tau)
    for hi, lo in zip(bps, bps[1:]):
        if tau >= lo.tau:
            if hi.tau == lo.tau:
                return lo.multipliers.copy()
            t = (tau - lo.tau) / (hi.tau - lo.tau)
            return lo.multipliers + t * (hi.multipliers - lo.multipliers)
    return bps[-1].multipliers.copy()


def _fresh_b(Rh, y, Ah, a, AtA, w0, w1):
    # zeroth/first order gradient coefficients, recomputed from scratch
    b0 = Ah.T @ (a - Ah @ w0)
    b1 = -(AtA @ w1) + Rh.T @ (y - Rh @ w0)
    return b0, b1


def _epsilon_phase(Rh, y, Ah, a, max_steps, states_out):
    """Run the penalty of the eps-augmented problem down to zeroth order zero.

    Tracks weights, penalty, boundary gaps, and step candidates as truncated
    second-order expansions in eps. Returns the exact constrained starting
    weights, the matching multipliers, and the real-problem starting penalty.

    The second-order gap coefficients are maintained incrementally on
    purpose: step sizes of deflated boundary events carry an unknowable
    second-order part whose contribution to its own gap cancels exactly
    against the penalty shrinkage (the factor 1 - v vanishes there), and the
    incremental update realizes that cancellation while a recomputation from
    contaminated state would not.
    """
    T, N = Rh.shape
    m = Ah.shape[0]
    AtA = Ah.T @ Ah
    RtR = Rh.T @ Rh

    w0 = np.zeros(N)
    w1 = np.zeros(N)
    w2 = np.zeros(N)
    b0, b1 = _fresh_b(Rh, y, Ah, a, AtA, w0, w1)
    scale = max(1.0, float(np.max(np.abs(b0), initial=0.0)),
                float(np.max(np.abs(b1), initial=0.0)))
    ztol = ZERO_TIE_REL * scale

    # starting penalty: twice the lexicographic max of |b_i|
    abs_jets = [jets.jet_abs(Jet(b0[i], b1[i], 0.0), ztol) for i in range(N)]
    top = abs_jets[0]
    for aj in abs_jets[1:]:
        if jets.jcmp(aj, top, ztol) == 1:
            top = aj
    tau0 = 2.0 * top.c0
    tau1 = 2.0 * top.c1
    if tau0 <= ztol:
        raise SolverError("epsilon phase started without a zeroth-order penalty")
    J = [i for i in range(N)
         if jets.jcmp(abs_jets[i], top, ztol) in (0, None)]
    sigma = {i: _lex_sign(b0[i], b1[i]) for i in J}
    g2p = np.zeros(N)
    g2m = np.zeros(N)

    def direction(Jl):
        sig = np.array([sigma[j] for j in Jl])
        M = AtA[np.ix_(Jl, Jl)]
        G = RtR[np.ix_(Jl, Jl)]
        u0J, u1J, u2J = _stacked_direction(M, G, sig, scale)
        u0 = np.zeros(N); u0[Jl] = u0J
        u1 = np.zeros(N); u1[Jl] = u1J
        u2 = np.zeros(N); u2[Jl] = u2J
        utol = ZERO_TIE_REL * max(1.0, float(np.max(np.abs(u0), initial=0.0)),
                                  float(np.max(np.abs(u1), initial=0.0)))
        u0 = _snap(u0, utol)
        u1 = _snap(u1, utol)
        u2 = _snap(u2, utol)
        return u0, u1, u2

    def entered_violator(u0, u1, u2, entered):
        worst = None
        for j in entered:
            sgn = jets.jet_sign(Jet(u0[j], u1[j], u2[j]), ztol)
            if sgn is not None and sgn == -sigma[j]:
                mag = max(abs(u0[j]), abs(u1[j]))
                if worst is None or mag > worst[0]:
                    worst = (mag, j)
        return None if worst is None else worst[1]

    def validated(Jl, entered):
        while True:
            u0, u1, u2 = direction(Jl)
            j = entered_violator(u0, u1, u2, entered)
            if j is None:
                return u0, u1, u2, Jl
            # degenerate pivot: before rejecting the entering coordinate,
            # try swapping out another zero-weight member instead
            swapped = False
            for d in sorted(Jl):
                if d in entered or w0[d] != 0.0 or w1[d] != 0.0 or w2[d] != 0.0:
                    continue
                Jt = [x for x in Jl if x != d]
                try:
                    t0, t1, t2 = direction(Jt)
                except SingularActiveSystem:
                    continue
                if entered_violator(t0, t1, t2, entered) is None:
                    Jl = Jt
                    sigma.pop(d)
                    u0, u1, u2 = t0, t1, t2
                    swapped = True
                    break
            if swapped:
                return u0, u1, u2, Jl
            Jl = [x for x in Jl if x != j]
            entered.discard(j)
            sigma.pop(j)

    u0, u1, u2, J = validated(J, set(J))
    states_out.append(FirstOrderState(
        w0=w0.copy(), w1=w1.copy(), tau0=tau0, tau1=tau1,
        direction0=np.zeros(N), direction1=np.zeros(N), step0=0.0, step1=0.0))

    ignored = set()
    for _ in range(max_steps):
        v0 = AtA @ u0
        v1 = AtA @ u1 + RtR @ u0
        v2 = AtA @ u2 + RtR @ u1
        vtol = ZERO_TIE_REL * max(1.0, float(np.nanmax(np.abs(v0), initial=0.0)),
                                  float(np.nanmax(np.abs(v1), initial=0.0)))
        v0 = _snap(v0, vtol)
        v1 = _snap(v1, vtol)
        v2 = _snap(v2, vtol)
        dp0 = _snap(1.0 - v0, vtol)
        dm0 = _snap(1.0 + v0, vtol)

        cands = []  # (gamma jet, kind, index, boundary sign)
        for i in range(N):
            if i in sigma:
                continue
            gp = Jet(tau0 / 2.0 - b0[i], tau1 / 2.0 - b1[i], g2p[i])
            if jets.jet_sign(gp, ztol) == -1:
                # boundary already crossed: the entry is overdue, admit now
                if (i, 1.0) not in ignored:
                    cands.append((Jet(0.0, 0.0, 0.0), "enter", i, 1.0))
            else:
                g = jets.divide(gp, Jet(dp0[i], -v1[i], -v2[i]), ztol)
                if g is not None and jets.jet_sign(g, ztol) == 1:
                    cands.append((g, "enter", i, 1.0))
            gm = Jet(tau0 / 2.0 + b0[i], tau1 / 2.0 + b1[i], g2m[i])
            if jets.jet_sign(gm, ztol) == -1:
                if (i, -1.0) not in ignored:
                    cands.append((Jet(0.0, 0.0, 0.0), "enter", i, -1.0))
            else:
                g = jets.divide(gm, Jet(dm0[i], v1[i], v2[i]), ztol)
                if g is not None and jets.jet_sign(g, ztol) == 1:
                    cands.append((g, "enter", i, -1.0))
        for j in J:
            if w0[j] == 0.0 and w1[j] == 0.0 and w2[j] == 0.0:
                continue
            g = jets.divide(Jet(-w0[j], -w1[j], -w2[j]),
                            Jet(u0[j], u1[j], u2[j]), ztol)
            if g is not None and jets.jet_sign(g, ztol) == 1:
                cands.append((g, "leave", j, 0.0))

        best = None
        for cand in cands:
            if best is None or jets.jcmp(cand[0], best[0], ztol) == -1:
                best = cand

        if best is None or best[0].c0 >= tau0 / 2.0 - ztol:
            # the zeroth-order penalty empties: constraint attained exactly
            gamma0 = tau0 / 2.0
            gamma1 = tau1 / 2.0
            for g, _, _, _ in cands:
                if abs(g.c0 - gamma0) <= ztol:
                    if np.isnan(g.c1):
                        raise SingularActiveSystem(
                            "first-order step undetermined at constraint attainment")
                    gamma1 = min(gamma1, g.c1)
            w0 = w0 + gamma0 * u0
            w1 = w1 + gamma1 * u0 + gamma0 * u1
            # square away the zeroth order constraint residual exactly,
            # touching only the support so off-support zeros stay exact
            sup = np.flatnonzero(w0)
            if sup.size:
                corr, _, _, _ = np.linalg.lstsq(
                    Ah[:, sup], a - Ah @ w0, rcond=None)
                w0[sup] += corr
            tau_real = max(tau1 - 2.0 * gamma1, 0.0)
            states_out.append(FirstOrderState(
                w0=w0.copy(), w1=w1.copy(), tau0=0.0, tau1=tau_real,
                direction0=u0.copy(), direction1=u1.copy(),
                step0=gamma0, step1=gamma1))
            lam0 = -(Ah @ w1)
            return w0, lam0, tau_real

        g0, g1, g2 = best[0].c0, best[0].c1, best[0].c2
        if np.isnan(g1):
            raise SingularActiveSystem("first-order step size undetermined")
        tied = [c for c in cands if jets.jcmp(c[0], best[0], ztol) in (0, None)]
        w0 = w0 + g0 * u0
        w1 = w1 + g1 * u0 + g0 * u1
        w2 = w2 + _prod(g2, u0) + _prod(g1, u1) + _prod(g0, u2)
        tau0 -= 2.0 * g0
        tau1 -= 2.0 * g1
        g2p += -_prod(g2, dp0) + _prod(g1, v1) + _prod(g0, v2)
        g2m += -_prod(g2, dm0) - _prod(g1, v1) - _prod(g0, v2)

        J_prev = sorted(J)
        entered = set()
        for g, kind, i, bnd in tied:
            if kind == "leave":
                if i in sigma:
                    w0[i] = w1[i] = w2[i] = 0.0
                    J = [x for x in J if x != i]
                    sigma.pop(i)
            else:
                if i not in sigma:
                    J = J + [i]
                    sigma[i] = bnd
                    entered.add(i)
        b0, b1 = _fresh_b(Rh, y, Ah, a, AtA, w0, w1)
        u0, u1, u2, J = validated(J, entered)
        if g0 == 0.0 and g1 == 0.0:
            # an overdue admission that validation rejected outright cannot
            # make progress; skip it from now on rather than loop
            bounced = {(i, bnd) for g, kind, i, bnd in tied
                       if kind == "enter" and i not in sigma}
            if bounced and sorted(J) == J_prev:
                ignored |= bounced
        else:
            ignored.clear()
        states_out.append(FirstOrderState(
            w0=w0.copy(), w1=w1.copy(), tau0=tau0, tau1=tau1,
            direction0=u0.copy(), direction1=u1.copy(), step0=g0, step1=g1))

    raise EpsilonPhaseStall(
        f"epsilon phase did not finish within {max_steps} breakpoints"
    )


def _prepare(problem: PenalizedProblem, constraints: AffineConstraints):
    if constraints.n_assets != problem.n_assets:
        raise InputError(
            f"constraints cover {constraints.n_assets} assets, "
            f"problem has {problem.n_assets}"
        )
    s = problem.penalty_weights
    Rh = problem.design / s
    Ah = constraints.matrix / s
    return Rh, problem.target, Ah, constraints.rhs, s


def _l1_face(Ah, a):
    """Optimal face of ``min ||w||_1  s.t.  Ah w = a``.

    Maximizes ``a . theta`` over the bounded dual polytope
    ``max_i |(Ah^T theta)_i| <= 1`` by vertex enumeration (one or two
    constraint rows), and reads the face off complementary slackness.

    Returns:
        Tuple ``(face, signs)``: sorted array of indices whose dual bound
        is active at every optimal vertex, and the sign each face weight
        must carry.

    Raises:
        SolverError: with more than two constraint rows, where vertex
            enumeration is not implemented.
    """
    m, n = Ah.shape
    if m > 2:
        raise SolverError(
            "degenerate-start recovery supports at most two constraint rows"
        )
    rel = 1e-9
    if m == 1:
        row = Ah[0]
        mx = float(np.max(np.abs(row)))
        theta = np.array([math.copysign(1.0 / mx, a[0])])
        vertices = [theta]
    else:
        cols = Ah.T  # one dual constraint normal per asset
        vertices = []
        colscale = float(np.max(np.abs(cols)))
        det_tol = 1e-12 * colscale * colscale
        for i in range(n):
            for j in range(i + 1, n):
                M = np.array([cols[i], cols[j]])
                if abs(np.linalg.det(M)) <= det_tol:
                    continue
                for si in (1.0, -1.0):
                    for sj in (1.0, -1.0):
                        theta = np.linalg.solve(M, np.array([si, sj]))
                        if np.max(np.abs(Ah.T @ theta)) <= 1.0 + rel:
                            vertices.append(theta)
        if not vertices:
            raise SolverError("no feasible dual vertex for the start face")
    objs = [float(a @ th) for th in vertices]
    best = max(objs)
    tie = [th for th, ob in zip(vertices, objs)
           if ob >= best - rel * max(1.0, abs(best))]
    face_mask = np.ones(n, dtype=bool)
    for th in tie:
        face_mask &= np.abs(Ah.T @ th) >= 1.0 - rel
    face = np.flatnonzero(face_mask)
    if face.size == 0:
        raise SolverError("empty start face from the dual certificate")
    signs = np.sign(Ah[:, face].T @ tie[0])
    return face, signs


def _face_vertex(Ah, a, face, signs):
    """A feasible point of the l1-minimal face, from an invertible subset."""
    m = Ah.shape[0]
    E = Ah[:, face] * signs
    f = len(face)
    for k in combinations(range(f), min(m, f)):
        K = list(k)
        xk, res, _ = _minnorm_solve(E[:, K], a)
        if res > 1e-10 * max(1.0, float(np.linalg.norm(a))):
            continue
        if np.min(xk, initial=0.0) >= -1e-9 * max(1.0, float(np.max(np.abs(xk)))):
            x = np.zeros(f)
            x[K] = np.maximum(xk, 0.0)
            return x
    raise SolverError("no feasible vertex found on the start face")


def _face_lsq(Rh, y, Ah, a, face, signs):
    """Least-squares optimum over the l1-minimal face.

    Solves ``min ||Rh w - y||^2`` over ``{Ah w = a, supp(w) in face,
    sign(w_i) = signs_i}`` with a primal active-set sweep on the
    sign-flipped nonnegative variables, starting from a feasible vertex.
    """
    B = Rh[:, face] * signs
    E = Ah[:, face] * signs
    f = len(face)
    x = _face_vertex(Ah, a, face, signs)
    zero = x <= 0.0
    x[zero] = 0.0
    for _ in range(50 + 10 * f):
        P = np.flatnonzero(~zero)
        if P.size == 0:
            break
        BP = B[:, P]
        EP = E[:, P]
        K = np.zeros((P.size + EP.shape[0], P.size + EP.shape[0]))
        K[:P.size, :P.size] = 2.0 * BP.T @ BP
        K[:P.size, P.size:] = EP.T
        K[P.size:, :P.size] = EP
        rhs = np.concatenate([2.0 * BP.T @ y, a])
        sol, _, _ = _minnorm_solve(K, rhs)
        xP = sol[:P.size]
        nu = sol[P.size:]
        tol = 1e-12 * max(1.0, float(np.max(np.abs(xP), initial=0.0)))
        if np.min(xP, initial=0.0) >= -tol:
            xn = np.zeros(f)
            xn[P] = np.maximum(xP, 0.0)
            x = xn
            grad = 2.0 * B.T @ (B @ x - y) + E.T @ nu
            gtol = 1e-9 * max(1.0, float(np.max(np.abs(grad), initial=0.0)))
            release = None
            for i in np.flatnonzero(zero):
                if grad[i] < -gtol and (release is None
                                        or grad[i] < grad[release]):
                    release = i
            if release is None:
                w = np.zeros(Rh.shape[1])
                w[face] = signs * x
                return w
            zero[release] = False
        else:
            # walk toward the equality optimum until a bound blocks
            alpha = 1.0
            block = None
            for idx, i in enumerate(P):
                if xP[idx] < -tol and xP[idx] < x[i]:
                    r = x[i] / (x[i] - xP[idx])
                    if r < alpha:
                        alpha = r
                        block = i
            xn = x.copy()
            xn[P] = x[P] + alpha * (xP - x[P])
            x = np.maximum(xn, 0.0)
            if block is not None:
                x[block] = 0.0
                zero[block] = True
    else:
        raise SolverError("face least-squares active-set did not converge")
    w = np.zeros(Rh.shape[1])
    w[face] = signs * x
    return w


def _certify_knee(Rh, y, Ah, a, w):
    """Certify a candidate top-of-path point and locate its knee.

    Checks whether multipliers ``lam(tau) = lam_c + (tau/2) lam_d`` exist
    making ``w`` stationary for every penalty above some knee, and returns
    the smallest such penalty with its multipliers, or None when no such
    certificate exists (the candidate is not the top of the path).
    """
    rel = 1e-9
    if float(np.linalg.norm(Ah @ w - a)) > 1e-10 * max(1.0, float(np.linalg.norm(a))):
        return None
    c = Rh.T @ (y - Rh @ w)
    S = np.flatnonzero(w)
    if S.size == 0:
        return None
    sig = np.sign(w[S])
    AST = Ah[:, S].T
    lam_c, res_c, k1 = _minnorm_solve(AST, -c[S])
    lam_d, res_d, k2 = _minnorm_solve(AST, sig)
    scale = max(1.0, float(np.max(np.abs(c))))
    gate = _consistency_gate(scale, max(k1, k2))
    if res_c > gate or res_d > gate * max(1.0, float(np.max(np.abs(sig)))):
        return None
    alpha = c + Ah.T @ lam_c
    d = Ah.T @ lam_d
    atol = rel * scale
    tau0 = 0.0
    out = np.setdiff1d(np.arange(len(w)), S)
    for i in out:
        ai = float(alpha[i])
        di = float(d[i])
        if di > 1.0 + rel or di < -1.0 - rel:
            return None
        if ai > atol:
            if di >= 1.0 - rel:
                return None
            tau0 = max(tau0, 2.0 * ai / (1.0 - di))
        if ai < -atol:
            if di <= -1.0 + rel:
                return None
            tau0 = max(tau0, -2.0 * ai / (1.0 + di))
    return tau0, lam_c + (tau0 / 2.0) * lam_d


def _fallback_start(Rh, y, Ah, a):
    """Direct start construction used when the expansion cannot certify."""
    face, signs = _l1_face(Ah, a)
    w = _face_lsq(Rh, y, Ah, a, face, signs)
    cert = _certify_knee(Rh, y, Ah, a, w)
    if cert is None:
        raise SolverError("start point could not be certified as path top")
    tau0, lam = cert
    return w, lam, tau0


def _initial_state(problem, constraints, max_steps, states_out):
    """Common start logic: returns scaled weights, multipliers, tau_0."""
    Rh, y, Ah, a, s = _prepare(problem, constraints)
    N = Rh.shape[1]
    m = Ah.shape[0]
    if m == 0 or float(np.max(np.abs(Ah.T @ a), initial=0.0)) <= 1e-300:
        # zero (or absent) rhs: w = 0 is feasible and starts the path
        lam0, phi = _start_multipliers(Rh.T @ y, Ah)
        return np.zeros(N), lam0, 2.0 * phi
    budget = max_steps if max_steps is not None else 4 * N + 4 * m
    try:
        w, lam, tau0 = _epsilon_phase(Rh, y, Ah, a, budget, states_out)
        cert = _certify_knee(Rh, y, Ah, a, w)
    except (EpsilonPhaseStall, SingularActiveSystem):
        if max_steps is not None or m > 2:
            raise
        cert = None
        w = None
    if cert is not None:
        # the certificate pins the exact knee; its multipliers replace the
        # expansion's first-order estimate
        return w, cert[1], cert[0]
    if w is not None and (max_steps is not None or m > 2):
        # an explicit step budget asks for the raw expansion result; with
        # more than two constraint rows the certificate is incomplete
        # (multiplier freedom), so a finished expansion stands as is
        return w, lam, tau0
    return _fallback_start(Rh, y, Ah, a)


def _start_breakpoint(Rh, y, Ah, a, s, w, lam, tau0, tau_stop):
    RtR = Rh.T @ Rh
    b = Rh.T @ (y - Rh @ w) + Ah.T @ lam
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)), tau0)
    ztol = ZERO_TIE_REL * scale
    # members: every boundary index plus every index carrying weight;
    # only weightless members may be dropped by direction validation
    J = sorted(set(
        i for i in range(len(w)) if abs(b[i]) >= tau0 / 2.0 - ztol
    ) | set(np.flatnonzero(w).tolist()))
    sigma = {
        i: (math.copysign(1.0, w[i]) if w[i] != 0.0
            else (1.0 if b[i] >= 0 else -1.0))
        for i in J
    }
    if tau0 > tau_stop + ztol:
        entered = {i for i in J if w[i] == 0.0}
        uJ, svec, J = _validated_real(RtR, Ah, J, sigma, entered, ztol)
    else:
        uJ, svec = np.zeros(len(J)), np.zeros(Ah.shape[0])
    bp = ConstrainedBreakpoint(
        tau=tau0,
        weights=w / s,
        multipliers=lam.copy(),
        active_set=tuple(sorted(J)),
        generalized_residual=b,
        event=Event("START", entered=tuple(sorted(J))),
    )
    return bp, J, sigma, uJ, svec, b, ztol


def _validated_real(RtR, Ah, J, sigma, entered, ztol):
    while True:
        GJJ = RtR[np.ix_(J, J)]
        AJ = Ah[:, J]
        sig = np.array([sigma[j] for j in J])
        uJ, svec = _bordered_direction(GJJ, AJ, sig)
        worst = None
        for idx, j in enumerate(J):
            if j in entered and sigma[j] * uJ[idx] < -ztol:
                mag = abs(uJ[idx])
                if worst is None or mag > worst[0]:
                    worst = (mag, j)
        if worst is None:
            return uJ, svec, J
        j = worst[1]
        J = [x for x in J if x != j]
        entered.discard(j)
        sigma.pop(j)


def find_constrained_start(problem, constraints, max_steps=None,
                           return_states=False):
    """First breakpoint of the constrained path and its penalty level tau_0.

    The returned weights minimize the constrained objective for every
    tau >= tau_0 (the path is constant up there); multipliers come from the
    first-order part of the final small-epsilon step.

    Args:
        problem: data term and penalty weights.
        constraints: feasible affine constraints (rows independent).
        max_steps: small-epsilon breakpoint budget; default 4N + 4m.
        return_states: also return the recorded FirstOrderState list.

    Raises:
        InfeasibleConstraints: propagated from constraint construction.
        EpsilonPhaseStall: budget exhausted before the constraint was met.
    """
    states: list[FirstOrderState] = []
    w, lam, tau0 = _initial_state(problem, constraints, max_steps, states)
    Rh, y, Ah, a, s = _prepare(problem, constraints)
    bp, *_ = _start_breakpoint(Rh, y, Ah, a, s, w, lam, tau0,
                               problem.tau_stop)
    if return_states:
        return bp, tau0, states
    return bp, tau0


def solve_constrained_path(problem, constraints, max_steps=None,
                           max_active=None):
    """Every breakpoint of the constrained path from tau_0 down to tau_stop.

    Weights and multipliers are both piecewise linear in tau between the
    returned breakpoints; segments where only the multipliers move are
    recorded like any other breakpoint. Set max_active to end the path early
    once the working set reaches that size.
    """
    states: list[FirstOrderState] = []
    w, lam, tau0 = _initial_state(problem, constraints, max_steps, states)
    Rh, y, Ah, a, s = _prepare(problem, constraints)
    RtR = Rh.T @ Rh
    N = Rh.shape[1]
    tau_stop = problem.tau_stop
    bp, J, sigma, uJ, svec, b, ztol = _start_breakpoint(
        Rh, y, Ah, a, s, w, lam, tau0, tau_stop)
    bps = [bp]
    fp = problem.fingerprint(extra=constraints.fingerprint_bytes())
    tau = tau0
    if tau0 <= tau_stop + ztol:
        return SolutionPath(breakpoints=tuple(bps), problem_fingerprint=fp)

    budget = 60 * N + 120
    for _ in range(budget):
        if max_active is not None and len(J) >= max_active:
            break
        u = np.zeros(N)
        u[J] = uJ
        v = RtR @ u - Ah.T @ svec
        gamma_stop = (tau - tau_stop) / 2.0

        best = None
        tied = []
        for i in range(N):
            if i in sigma:
                continue
            den = 1.0 - v[i]
            num = tau / 2.0 - b[i]
            if den > ztol and num > ztol:
                g = num / den
                if best is None or g < best - ztol:
                    best, tied = g, [("enter", i, 1.0)]
                elif g <= best + ztol:
                    tied.append(("enter", i, 1.0))
            den = 1.0 + v[i]
            num = tau / 2.0 + b[i]
            if den > ztol and num > ztol:
                g = num / den
                if best is None or g < best - ztol:
                    best, tied = g, [("enter", i, -1.0)]
                elif g <= best + ztol:
                    tied.append(("enter", i, -1.0))
        for idx, j in enumerate(J):
            wj = w[j]
            if wj != 0.0 and uJ[idx] != 0.0:
                g = -wj / uJ[idx]
                if g > ztol:
                    if best is None or g < best - ztol:
                        best, tied = g, [("leave", j, 0.0)]
                    elif g <= best + ztol:
                        tied.append(("leave", j, 0.0))

        if best is None or best >= gamma_stop - ztol:
            w = w + gamma_stop * u
            lam = lam + gamma_stop * svec
            tau = tau_stop
            b = Rh.T @ (y - Rh @ w) + Ah.T @ lam
            bps.append(ConstrainedBreakpoint(
                tau=tau, weights=w / s, multipliers=lam.copy(),
                active_set=tuple(sorted(J)), generalized_residual=b,
                event=Event("STOP")))
            break

        w = w + best * u
        lam = lam + best * svec
        tau = tau - 2.0 * best
        entered = set()
        left = []
        for kind, i, bnd in tied:
            if kind == "leave":
                if i in sigma:
                    w[i] = 0.0
                    J = [x for x in J if x != i]
                    sigma.pop(i)
                    left.append(i)
            else:
                if i not in sigma:
                    J = J + [i]
                    sigma[i] = bnd
                    entered.add(i)
        b = Rh.T @ (y - Rh @ w) + Ah.T @ lam
        uJ, svec, J = _validated_real(RtR, Ah, J, sigma, set(entered), ztol)
        entered &= set(J)
        kind = "ENTER" if entered else "LEAVE"
        bps.append(ConstrainedBreakpoint(
            tau=tau, weights=w / s, multipliers=lam.copy(),
            active_set=tuple(sorted(J)), generalized_residual=b,
            event=Event(kind, entered=tuple(sorted(entered)),
                        left=tuple(sorted(left)))))
    else:
        raise SolverError("constrained path exceeded its breakpoint budget")

    return SolutionPath(breakpoints=tuple(bps), problem_fingerprint=fp)

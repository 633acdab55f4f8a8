"""Exact solution path for l1-penalized least squares, no constraints.

Traces the piecewise-linear minimizer path of

    min_w ||R w - y||^2 + tau * sum_i s_i |w_i|

for tau descending from the first value at which w = 0 down to ``tau_stop``,
by active-set continuation: between breakpoints the minimizer moves along a
fixed direction, and a breakpoint occurs whenever a component's residual
correlation hits the boundary (an index enters) or a weight crosses zero (an
index leaves).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, SingularActiveSystem, SolverError, TauBelowStop

__all__ = [
    "PenalizedProblem",
    "PathBreakpoint",
    "Event",
    "SolutionPath",
    "initial_tau",
    "solve_path",
    "eval_at",
]

ZERO_TIE_REL = 1e-12  # zero/tie tolerance, relative to max|R^T y|
_SV_CUTOFF = 1e-12    # singular-value ratio below which the active system is singular


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise InputError(f"{name} must be a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite entries")
    return a


def _as_vector(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class PenalizedProblem:
    """An l1-penalized least-squares instance.

    Parameters
    ----------
    design : (T, N) array
        Observation matrix R; rows are periods/observations.
    target : (T,) array
        Right-hand side y.
    penalty_weights : (N,) array, optional
        Strictly positive per-component penalty weights s_i. All ones gives
        the plain l1 penalty.
    tau_stop : float, optional
        The path is computed for tau >= tau_stop. Defaults to 0.
    """

    design: np.ndarray
    target: np.ndarray
    penalty_weights: np.ndarray = None  # type: ignore[assignment]
    tau_stop: float = 0.0

    def __post_init__(self):
        design = _as_matrix(self.design, "design")
        target = _as_vector(self.target, "target")
        T, N = design.shape
        if T < 1 or N < 1:
            raise InputError("design must have at least one row and one column")
        if target.shape[0] != T:
            raise InputError(
                f"target length {target.shape[0]} does not match design rows {T}"
            )
        if self.penalty_weights is None:
            weights = np.ones(N)
        else:
            weights = _as_vector(self.penalty_weights, "penalty_weights")
            if weights.shape[0] != N:
                raise InputError("penalty_weights length does not match design columns")
            if np.any(weights <= 0.0):
                raise InputError("penalty_weights must be strictly positive")
        col_norms = np.linalg.norm(design, axis=0)
        if np.any(col_norms == 0.0):
            dead = int(np.argmin(col_norms))
            raise InputError(f"design column {dead} is identically zero")
        tau_stop = float(self.tau_stop)
        if not np.isfinite(tau_stop) or tau_stop < 0.0:
            raise InputError("tau_stop must be a nonnegative real")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "penalty_weights", weights)
        object.__setattr__(self, "tau_stop", tau_stop)

    @property
    def n_assets(self) -> int:
        return self.design.shape[1]

    @property
    def n_periods(self) -> int:
        return self.design.shape[0]

    def scaled_design(self) -> np.ndarray:
        """Design with column i divided by s_i (reduces to the plain penalty)."""
        return self.design / self.penalty_weights[np.newaxis, :]

    def fingerprint(self, extra: bytes = b"") -> str:
        h = hashlib.sha256()
        for a in (self.design, self.target, self.penalty_weights):
            h.update(np.ascontiguousarray(a, dtype=float).tobytes())
            h.update(repr(a.shape).encode())
        h.update(repr(self.tau_stop).encode())
        h.update(extra)
        return h.hexdigest()


@dataclass(frozen=True)
class Event:
    """What happened at a breakpoint.

    kind is one of START, ENTER, LEAVE, STOP; `entered`/`left` list the
    indices that joined or dropped out of the active set there (several at
    once on tie breakpoints).
    """

    kind: str
    entered: tuple[int, ...] = ()
    left: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class PathBreakpoint:
    """One breakpoint of the piecewise-linear path.

    `active_set` is the working set J: the boundary indices, which include a
    just-entered index whose weight is still exactly zero at this tau.
    Weights off J are stored as exact zeros. `residual_corr` is
    b = R^T(y - R w) on the penalty-rescaled design.
    """

    tau: float
    weights: np.ndarray
    residual_corr: np.ndarray
    active_set: tuple[int, ...]
    event: Event


@dataclass(frozen=True, eq=False)
class SolutionPath:
    """Ordered breakpoints with strictly decreasing tau."""

    breakpoints: tuple
    problem_fingerprint: str

    def eval_at(self, tau: float) -> np.ndarray:
        return eval_at(self, tau)


def initial_tau(problem: PenalizedProblem) -> float:
    """Smallest tau at which the zero vector is optimal.

    Returns 2 * max_i |(R^T y)_i / s_i|; the path weights vanish for every
    tau at or above this value.
    """
    c = problem.scaled_design().T @ problem.target
    return 2.0 * float(np.max(np.abs(c))) if c.size else 0.0


def _solve_active(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve the active-set normal system, raising when numerically singular."""
    if G.shape[0] == 0:
        return np.zeros(0)
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[-1] <= _SV_CUTOFF * sv[0] or sv[0] == 0.0:
        raise SingularActiveSystem(
            f"active normal matrix is numerically singular (|J| = {G.shape[0]})"
        )
    return np.linalg.solve(G, rhs)


def _validated_direction(
    G: np.ndarray, b: np.ndarray, J: list[int], entered: list[int], ztol: float
) -> tuple[list[int], list[int], np.ndarray]:
    """Direction solve with tie validation.

    Solves G_JJ u_J = sgn(b_J) on the tentative working set, then drops
    just-entered indices whose direction component disagrees with their
    residual sign (worst violator first) until the direction is consistent.
    """
    J = list(J)
    entered = list(entered)
    while True:
        sigma = np.sign(b[J])
        u = _solve_active(G[np.ix_(J, J)], sigma)
        viol = [
            (float(-u[J.index(i)] * np.sign(b[i])), i)
            for i in entered
            if -u[J.index(i)] * np.sign(b[i]) > ztol
        ]
        if not viol:
            return J, entered, u
        _, worst = max(viol)
        J.remove(worst)
        entered.remove(worst)


def solve_path(problem: PenalizedProblem, max_active: int | None = None) -> SolutionPath:
    """Compute every breakpoint from the path start down to ``tau_stop``.

    Parameters
    ----------
    problem : PenalizedProblem
    max_active : int, optional
        Stop early once the working set reaches this size (the final recorded
        breakpoint is the one where it is reached).

    Returns
    -------
    SolutionPath
        First breakpoint has zero weights at tau = initial_tau(problem); the
        last sits at tau_stop (event STOP) unless max_active truncated the
        path. Raises SingularActiveSystem when the active normal matrix is
        numerically singular.
    """
    Rt = problem.scaled_design()
    y = problem.target
    s = problem.penalty_weights
    tau_stop = problem.tau_stop
    N = Rt.shape[1]
    fingerprint = problem.fingerprint()

    G = Rt.T @ Rt
    c = Rt.T @ y
    scale = float(np.max(np.abs(c))) if c.size else 0.0
    tau0 = 2.0 * scale

    def bp(tau, w_hat, b, J, event):
        # unscale the weights; off-J entries stay exact zeros
        return PathBreakpoint(
            tau=float(tau),
            weights=w_hat / s,
            residual_corr=b.copy(),
            active_set=tuple(sorted(J)),
            event=event,
        )

    if tau0 <= tau_stop or scale == 0.0:
        # zero is already optimal at tau_stop (in particular for y = 0)
        only = bp(max(tau_stop, 0.0), np.zeros(N), c.copy(), (), Event("START"))
        return SolutionPath(breakpoints=(only,), problem_fingerprint=fingerprint)

    ztol = ZERO_TIE_REL * scale
    w = np.zeros(N)
    b = c.copy()
    tau = tau0

    start_ties = [i for i in range(N) if abs(abs(b[i]) - tau / 2.0) <= ztol]
    J, _, u = _validated_direction(G, b, start_ties, start_ties, ztol)
    breakpoints = [bp(tau, w, b, J, Event("START", entered=tuple(sorted(J))))]

    budget = 60 * N + 120
    for _ in range(budget):
        if max_active is not None and len(J) >= max_active:
            break
        sigma = np.sign(b[J])
        u = _solve_active(G[np.ix_(J, J)], sigma)
        v = Rt.T @ (Rt[:, J] @ u)

        gamma_stop = (tau - tau_stop) / 2.0
        best = gamma_stop
        enter_hits: list[tuple[float, int]] = []
        leave_hits: list[tuple[float, int]] = []
        off = [i for i in range(N) if i not in J]
        for i in off:
            for num, den in ((tau / 2.0 - b[i], 1.0 - v[i]), (tau / 2.0 + b[i], 1.0 + v[i])):
                if den <= ztol:
                    continue
                g = num / den
                if g > ztol:
                    enter_hits.append((g, i))
        for idx, j in enumerate(J):
            if w[j] != 0.0 and u[idx] != 0.0:
                g = -w[j] / u[idx]
                if g > ztol:
                    leave_hits.append((g, j))
        events = enter_hits + leave_hits
        if events:
            best = min(best, min(g for g, _ in events))

        if best >= gamma_stop - ztol:
            # no boundary event before tau_stop: close the path there
            w = w.copy()
            w[J] += gamma_stop * u
            b = c - G @ w
            tau = tau_stop
            breakpoints.append(bp(tau, w, b, J, Event("STOP")))
            return SolutionPath(tuple(breakpoints), fingerprint)

        entered = sorted(i for g, i in enter_hits if g <= best + ztol)
        left = sorted(j for g, j in leave_hits if g <= best + ztol)
        w = w.copy()
        w[J] += best * u
        tau -= 2.0 * best
        for j in left:
            w[j] = 0.0  # crossings land exactly on zero
        J_new = [j for j in J if j not in left] + entered
        b = c - G @ w
        J, entered, u = _validated_direction(G, b, J_new, entered, ztol)
        kind = "ENTER" if entered else "LEAVE"
        breakpoints.append(
            bp(tau, w, b, J, Event(kind, entered=tuple(entered), left=tuple(left)))
        )
    else:
        raise SolverError(
            f"breakpoint budget exhausted after {budget} steps; instance likely degenerate"
        )
    return SolutionPath(tuple(breakpoints), fingerprint)


def eval_at(path: SolutionPath, tau: float) -> np.ndarray:
    """Minimizer weights at an arbitrary tau on (or above) the path.

    Above the first breakpoint returns the start weights; between
    breakpoints interpolates linearly; below the final breakpoint raises
    TauBelowStop.
    """
    bps = path.breakpoints
    taus = [b.tau for b in bps]
    slack = ZERO_TIE_REL * max(1.0, taus[0])
    if tau > taus[0]:
        return bps[0].weights.copy()
    if tau < taus[-1] - slack:
        raise TauBelowStop(f"tau = {tau} lies below the path end {taus[-1]}")
    tau = max(tau, taus[-1])
    for hi, lo in zip(bps, bps[1:]):
        if tau >= lo.tau:
            if tau >= hi.tau:
                return hi.weights.copy()
            if tau == lo.tau:
                return lo.weights.copy()
            t = (hi.tau - tau) / (hi.tau - lo.tau)
            return hi.weights + t * (lo.weights - hi.weights)
    return bps[-1].weights.copy()

"""Second-order solvers for one nonnegative row subproblem.

Each subproblem minimizes

    f(b) = sum_r b_r - sum_j x_j * log(sum_r b_r * pi[r, j]),   b >= 0,

where ``x`` holds the positive counts of one matricized-tensor row and
``pi`` holds the matching Khatri-Rao columns.  The function is convex, and
strictly so whenever the pi columns span R^R.  Two solvers are provided:

* ``solve_row_pdnr``: projected damped Newton.  Variables are split by a
  two-metric rule into a set fixed at zero, a set stepping along the
  negative gradient, and a free set stepping along a Levenberg-Marquardt
  damped Newton direction.
* ``solve_row_pqnr``: projected quasi-Newton.  The free-set direction comes
  from a limited-memory BFGS approximation applied over all variables.

Both use a projected backtracking line search satisfying an Armijo
condition, and fall back to one multiplicative-update step when the search
fails, so progress is always made.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import FactorizationFailureError, UndefinedAtZeroModelError

__all__ = [
    "RowProblem",
    "SolverParams",
    "RowSolveReport",
    "LbfgsStore",
    "f_row",
    "grad_row",
    "hess_row",
    "kkt_violation_row",
    "partition_variables",
    "damped_newton_direction",
    "assemble_direction",
    "armijo_projected_search",
    "update_damping",
    "multiplicative_step",
    "solve_row_pdnr",
    "solve_row_pqnr",
]

PDNR_EPSILON = 1e-3
PQNR_EPSILON = 1e-8
CURVATURE_SKIP_REL = 1e-12
FACTORIZATION_RETRIES = 5


@dataclass(frozen=True)
class RowProblem:
    """One row's data: variables b (R,), counts x (J,), columns pi (R, J)."""

    b: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    pi: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        pi = np.asarray(self.pi, dtype=np.float64)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "pi", pi)
        if pi.ndim != 2 or pi.shape != (b.shape[0], x.shape[0]):
            raise ValueError(
                f"pi must be {b.shape[0]} x {x.shape[0]}, got {pi.shape}"
            )
        if (b < 0).any():
            raise ValueError("b must be nonnegative")
        if (x <= 0).any():
            raise ValueError("all counts must be strictly positive")
        if (pi.size) and (pi < 0).any():
            raise ValueError("pi entries must be nonnegative")

    @property
    def rank(self) -> int:
        return int(self.b.shape[0])


@dataclass(frozen=True)
class SolverParams:
    """Tuning constants for the row solvers.

    ``epsilon`` is the two-metric closeness threshold; when None each solver
    substitutes its own default (1e-3 damped Newton, 1e-8 quasi-Newton).
    """

    tau: float = 1e-8
    mu0: float = 1e-5
    sigma: float = 1e-4
    beta: float = 0.5
    epsilon: Optional[float] = None
    k_max: int = 50
    lbfgs_memory: int = 3
    max_backtracks: int = 10

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.mu0 < 0:
            raise ValueError("mu0 must be nonnegative")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.k_max < 1 or self.lbfgs_memory < 1 or self.max_backtracks < 0:
            raise ValueError("iteration limits must be positive")


@dataclass
class RowSolveReport:
    """Outcome of one row solve."""

    iterations: int = 0
    final_kkt: float = 0.0
    exact_zeros: int = 0
    backtrack_failures: int = 0
    fallback_steps: int = 0


class LineSearchResult(NamedTuple):
    alpha: Optional[float]  # None when the backtrack budget was exhausted
    b_next: np.ndarray
    f_next: float
    f_unit: float  # objective at the projected unit step, for damping updates
    evals: int


def _cell_values(problem: RowProblem, b: np.ndarray) -> np.ndarray:
    return b @ problem.pi


def _f_at(problem: RowProblem, b: np.ndarray, m: Optional[np.ndarray] = None) -> float:
    if m is None:
        m = _cell_values(problem, b)
    total = float(b.sum())
    if m.size == 0:
        return total
    if (m <= 0.0).any():
        return float("inf")
    return total - float(problem.x @ np.log(m))


def f_row(problem: RowProblem, b: Optional[np.ndarray] = None) -> float:
    """Row objective sum(b) - sum(x * log(b @ pi)); +inf when a positive
    count sits on a zero model value."""
    return _f_at(problem, problem.b if b is None else np.asarray(b, dtype=np.float64))


def _check_defined(m: np.ndarray) -> None:
    if m.size and (m <= 0.0).any():
        raise UndefinedAtZeroModelError(
            "model value is zero at a positive count; derivatives undefined"
        )


def grad_row(problem: RowProblem, b: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient 1 - pi @ (x / (b @ pi))."""
    b = problem.b if b is None else np.asarray(b, dtype=np.float64)
    m = _cell_values(problem, b)
    _check_defined(m)
    if m.size == 0:
        return np.ones_like(b)
    return 1.0 - problem.pi @ (problem.x / m)


def hess_row(problem: RowProblem, b: Optional[np.ndarray] = None) -> np.ndarray:
    """Hessian pi @ diag(x / (b @ pi)^2) @ pi.T; positive semidefinite."""
    b = problem.b if b is None else np.asarray(b, dtype=np.float64)
    m = _cell_values(problem, b)
    _check_defined(m)
    if m.size == 0:
        return np.zeros((b.shape[0], b.shape[0]))
    w = problem.x / (m * m)
    return (problem.pi * w) @ problem.pi.T


def _hessian_block(problem: RowProblem, m: np.ndarray, free: np.ndarray) -> np.ndarray:
    if m.size == 0:
        k = int(free.sum())
        return np.zeros((k, k))
    w = problem.x / (m * m)
    pif = problem.pi[free]
    return (pif * w) @ pif.T


def kkt_violation_row(b: np.ndarray, g: np.ndarray) -> float:
    """First-order optimality residual max_r |min(b_r, g_r)| under b >= 0."""
    return float(np.abs(np.minimum(b, g)).max())


def partition_variables(b: np.ndarray, g: np.ndarray, epsilon: float):
    """Two-metric split of variables into (active, gradient, free) masks.

    With w = ||b - P+(b - g)||_2 and eps_k = min(w, epsilon):
    active holds variables at zero with positive gradient, gradient holds
    variables within eps_k of zero with positive gradient, and free holds
    the rest.  The three masks partition 1..R.
    """
    w = float(np.linalg.norm(b - np.maximum(b - g, 0.0)))
    eps_k = min(w, epsilon)
    positive_grad = g > 0.0
    active = (b == 0.0) & positive_grad
    gradient = (b > 0.0) & (b <= eps_k) & positive_grad
    free = ~(active | gradient)
    return active, gradient, free


def damped_newton_direction(hess_free: np.ndarray, grad_free: np.ndarray,
                            mu: float) -> np.ndarray:
    """Solve (H + mu*I) d = -g on the free block by Cholesky factorization.

    Raises FactorizationFailureError when the damped matrix cannot be
    factored, which is possible only for mu = 0 with singular H.
    """
    k = grad_free.shape[0]
    if k == 0:
        return np.zeros(0)
    damped = hess_free + mu * np.eye(k)
    try:
        cho = scipy.linalg.cho_factor(damped, lower=True, check_finite=False)
        return scipy.linalg.cho_solve(cho, -grad_free, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise FactorizationFailureError(str(exc)) from exc


def assemble_direction(d_free: np.ndarray, g: np.ndarray, sets) -> np.ndarray:
    """Expand a free-block step to all variables: zeros on the active set,
    the negative gradient on the gradient set."""
    active, gradient, free = sets
    d = np.zeros_like(g)
    d[free] = d_free
    d[gradient] = -g[gradient]
    return d


def armijo_projected_search(problem: RowProblem, b: np.ndarray, f_b: float,
                            g: np.ndarray, d: np.ndarray,
                            params: SolverParams) -> LineSearchResult:
    """Projected backtracking search for the smallest t with

        f(P+(b + beta^t d)) - f(b) <= sigma * (P+(b + beta^t d) - b)' g.

    Trial points where the predicted change is not a strict decrease, or
    where f is +inf, fail the test and trigger another backtrack.  When t
    exceeds ``max_backtracks`` the result carries ``alpha=None`` and the
    caller applies a fallback step.
    """
    f_unit = float("inf")
    evals = 0
    for t in range(params.max_backtracks + 1):
        step = params.beta ** t
        b_try = np.maximum(b + step * d, 0.0)
        predicted = float(g @ (b_try - b))
        if predicted < 0.0:
            f_try = _f_at(problem, b_try)
            evals += 1
            if t == 0:
                f_unit = f_try
            if f_try - f_b <= params.sigma * predicted:
                return LineSearchResult(step, b_try, f_try, f_unit, evals)
    return LineSearchResult(None, b, f_b, f_unit, evals)


def update_damping(mu: float, f_old: float, f_new: float,
                   model_decrease: float) -> float:
    """Levenberg-Marquardt damping update from the ratio of actual to
    predicted reduction: rho < 1/4 grows mu by 7/2, rho > 3/4 shrinks it
    by 2/7, otherwise mu is unchanged."""
    if not model_decrease < 0:
        raise ValueError(
            f"predicted model decrease must be negative, got {model_decrease}"
        )
    rho = (f_new - f_old) / model_decrease
    if rho < 0.25:
        return mu * 3.5
    if rho > 0.75:
        return mu * (2.0 / 7.0)
    return mu


def multiplicative_step(problem: RowProblem, b: np.ndarray,
                        m: Optional[np.ndarray] = None) -> np.ndarray:
    """One multiplicative update b * (pi @ (x / (b @ pi))).

    Never increases the row objective, so it serves as the rescue step when
    the line search cannot certify progress.
    """
    if m is None:
        m = _cell_values(problem, b)
    if m.size == 0:
        return np.zeros_like(b)
    _check_defined(m)
    return b * (problem.pi @ (problem.x / m))


class LbfgsStore:
    """Ring buffer of limited-memory BFGS curvature pairs.

    Pairs with s'y <= 1e-12 * ||s|| ||y|| are skipped (and counted) to keep
    the implied approximation positive definite despite roundoff.
    """

    def __init__(self, memory: int = 3):
        if memory < 1:
            raise ValueError("memory must be at least 1")
        self.memory = int(memory)
        self._s: list[np.ndarray] = []
        self._y: list[np.ndarray] = []
        self._rho: list[float] = []
        self.gamma = 1.0
        self.skipped = 0

    def __len__(self) -> int:
        return len(self._s)

    def update(self, s: np.ndarray, y: np.ndarray) -> bool:
        """Store a pair, evicting the oldest past capacity; returns whether
        the pair was kept."""
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        sy = float(s @ y)
        if sy <= CURVATURE_SKIP_REL * float(np.linalg.norm(s) * np.linalg.norm(y)):
            self.skipped += 1
            return False
        self._s.append(s.copy())
        self._y.append(y.copy())
        self._rho.append(1.0 / sy)
        if len(self._s) > self.memory:
            del self._s[0], self._y[0], self._rho[0]
        self.gamma = sy / float(y @ y)
        return True

    def direction(self, g: np.ndarray) -> np.ndarray:
        """Two-loop recursion returning the inverse-Hessian approximation
        applied to g; the bare g when the store is empty."""
        q = np.asarray(g, dtype=np.float64).copy()
        n = len(self._s)
        if n == 0:
            return q
        alphas = np.empty(n)
        for i in range(n - 1, -1, -1):
            alphas[i] = self._rho[i] * float(self._s[i] @ q)
            q -= alphas[i] * self._y[i]
        r = self.gamma * q
        for i in range(n):
            beta = self._rho[i] * float(self._y[i] @ r)
            r += (alphas[i] - beta) * self._s[i]
        return r


def _repair_start(problem: RowProblem, b: np.ndarray):
    """Make the start feasible when exact zeros in b leave a positive count
    with zero model value; returns (b, f(b)) which may still be infinite
    when no lift can help (an all-zero pi column under a positive count)."""
    f_b = _f_at(problem, b)
    if np.isfinite(f_b):
        return b, f_b
    scale = float(b.max()) if b.size and b.max() > 0 else 1.0
    lifted = np.where(b > 0.0, b, 1e-10 * scale)
    f_lifted = _f_at(problem, lifted)
    if np.isfinite(f_lifted):
        return lifted, f_lifted
    return b, f_b


def _finish(b: np.ndarray, kkt: float, iters: int, ls_failures: int,
            fallbacks: int) -> RowSolveReport:
    return RowSolveReport(
        iterations=iters,
        final_kkt=float(kkt),
        exact_zeros=int(np.count_nonzero(b == 0.0)),
        backtrack_failures=ls_failures,
        fallback_steps=fallbacks,
    )


def solve_row_pdnr(problem: RowProblem, params: Optional[SolverParams] = None):
    """Projected damped Newton solve of one row subproblem.

    Iterates gradient -> KKT check -> two-metric partition -> damped Newton
    direction on the free set -> projected Armijo search -> damping update,
    stopping when the KKT violation falls to ``params.tau`` or after
    ``params.k_max`` steps.  Returns (b_star, RowSolveReport).
    """
    params = SolverParams() if params is None else params
    epsilon = PDNR_EPSILON if params.epsilon is None else params.epsilon
    b = problem.b.copy()
    mu = params.mu0
    iters = ls_failures = fallbacks = 0
    b, f_b = _repair_start(problem, b)
    if not np.isfinite(f_b):
        report = _finish(b, float("inf"), 0, 0, 0)
        return b, report
    while True:
        m = _cell_values(problem, b)
        g = 1.0 - problem.pi @ (problem.x / m) if m.size else np.ones_like(b)
        kkt = kkt_violation_row(b, g)
        if kkt <= params.tau or iters >= params.k_max:
            break
        sets = partition_variables(b, g, epsilon)
        active, gradient, free = sets
        d_free = np.zeros(0)
        model_decrease = 0.0
        if free.any():
            g_free = g[free]
            h_free = _hessian_block(problem, m, free)
            d_free, mu, solved = _damped_direction_with_retries(h_free, g_free, mu)
            if not solved:
                b = multiplicative_step(problem, b, m)
                f_b = _f_at(problem, b)
                fallbacks += 1
                iters += 1
                continue
            model_decrease = float(
                g_free @ d_free + 0.5 * d_free @ (h_free @ d_free)
            )
        d = assemble_direction(d_free, g, sets)
        if not d.any():
            break
        result = armijo_projected_search(problem, b, f_b, g, d, params)
        if d_free.size and d_free.any():
            mu = update_damping(mu, f_b, result.f_unit, model_decrease)
        if result.alpha is None:
            ls_failures += 1
            fallbacks += 1
            b = multiplicative_step(problem, b, m)
            f_b = _f_at(problem, b)
        else:
            b, f_b = result.b_next, result.f_next
        iters += 1
    return b, _finish(b, kkt, iters, ls_failures, fallbacks)


def _damped_direction_with_retries(h_free, g_free, mu):
    """Damped Newton solve, bumping mu tenfold on factorization failure up
    to a retry cap; the final failure reports solved=False and the caller
    takes a multiplicative rescue step."""
    for _ in range(FACTORIZATION_RETRIES + 1):
        try:
            return damped_newton_direction(h_free, g_free, mu), mu, True
        except FactorizationFailureError:
            mu = max(mu, 1e-10) * 10.0
    return np.zeros_like(g_free), mu, False


def solve_row_pqnr(problem: RowProblem, params: Optional[SolverParams] = None,
                   store: Optional[LbfgsStore] = None):
    """Projected quasi-Newton solve of one row subproblem.

    Same loop shape as :func:`solve_row_pdnr` with the free-set direction
    taken from a limited-memory BFGS approximation over all variables; the
    curvature pair from each accepted step feeds the store.  Passing a
    ``store`` lets callers persist curvature between invocations.
    Returns (b_star, RowSolveReport).
    """
    params = SolverParams() if params is None else params
    epsilon = PQNR_EPSILON if params.epsilon is None else params.epsilon
    b = problem.b.copy()
    store = LbfgsStore(params.lbfgs_memory) if store is None else store
    iters = ls_failures = fallbacks = 0
    b, f_b = _repair_start(problem, b)
    if not np.isfinite(f_b):
        report = _finish(b, float("inf"), 0, 0, 0)
        return b, report
    prev_b = prev_g = None
    while True:
        m = _cell_values(problem, b)
        g = 1.0 - problem.pi @ (problem.x / m) if m.size else np.ones_like(b)
        if prev_b is not None:
            store.update(b - prev_b, g - prev_g)
        kkt = kkt_violation_row(b, g)
        if kkt <= params.tau or iters >= params.k_max:
            break
        sets = partition_variables(b, g, epsilon)
        active, gradient, free = sets
        # The free-set step is the free block of the inverse approximation
        # applied to the free gradient, i.e. the two-loop acting on the
        # gradient with non-free components zeroed.  Feeding the raw
        # gradient instead lets large bound-set components leak into the
        # free direction and ruin descent.
        p = store.direction(np.where(free, g, 0.0))
        d = assemble_direction(-p[free], g, sets)
        if not d.any():
            break
        result = armijo_projected_search(problem, b, f_b, g, d, params)
        prev_b, prev_g = b, g
        if result.alpha is None:
            ls_failures += 1
            fallbacks += 1
            b = multiplicative_step(problem, b, m)
            f_b = _f_at(problem, b)
        else:
            b, f_b = result.b_next, result.f_next
        iters += 1
    return b, _finish(b, kkt, iters, ls_failures, fallbacks)

"""Alternating-mode fitting loop for sparse Poisson CP factorization.

One sweep visits each mode in order, rebuilds that mode's row subproblems
from the nonzeros, solves them with the configured method (damped Newton,
quasi-Newton, or multiplicative updates), and redistributes column mass
into the weight vector.  After every sweep the row KKT violations of all
swept modes are recomputed against the updated model, because solving one
mode changes the Khatri-Rao columns of the others; the fit stops when the
largest violation falls below the tolerance.
"""

from __future__ import annotations

import csv
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import MuParams, mu_solve_mode
from .errors import IndexOutOfRangeError
from .evaluation import mode_kkt_violation
from .kruskal import KruskalModel, _pi_product, kl_objective, normalize
from .row_solver import (
    LbfgsStore,
    RowProblem,
    RowSolveReport,
    SolverParams,
    solve_row_pdnr,
    solve_row_pqnr,
)
from .sparse_tensor import SparseCountTensor, as_shape, mode_row_positions

__all__ = [
    "METHODS",
    "FitConfig",
    "OuterRecord",
    "FitTrace",
    "FitResult",
    "ModeSweepReport",
    "init_model",
    "solve_mode",
    "fit",
    "write_trace",
]

METHODS = ("pdnr", "pqnr", "mu")

TRACE_HEADER = (
    "outer",
    "mode_kkt_max",
    "objective",
    "exact_zeros",
    "seconds",
    "ls_failures",
    "fallbacks",
)


@dataclass
class FitConfig:
    """Configuration of one factorization run.

    ``modes`` restricts the sweep to the listed 1-based modes (used to study
    a single convex block subproblem); None sweeps every mode.  ``solver``
    defaults to row solves at the global tolerance ``tau``.
    """

    method: str
    rank: int
    outer_max: int = 200
    tau: float = 1e-4
    time_limit: Optional[float] = None
    solver: Optional[SolverParams] = None
    mu: MuParams = field(default_factory=MuParams)
    seed: int = 0
    modes: Optional[tuple[int, ...]] = None
    workers: int = 1
    persist_lbfgs: bool = False

    def __post_init__(self):
        self.method = str(self.method).lower()
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.outer_max < 1:
            raise ValueError("outer_max must be at least 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.modes is not None:
            self.modes = tuple(int(n) for n in self.modes)


@dataclass(frozen=True)
class OuterRecord:
    outer: int
    mode_kkt: tuple[float, ...]
    objective: float
    exact_zeros: int
    seconds: float
    line_search_failures: int
    fallback_steps: int

    @property
    def mode_kkt_max(self) -> float:
        return max(self.mode_kkt)


@dataclass
class FitTrace:
    """Per-outer-iteration history of a fit."""

    records: list[OuterRecord] = field(default_factory=list)

    def append(self, record: OuterRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass(frozen=True)
class FitResult:
    model: KruskalModel
    trace: FitTrace
    converged: bool
    final_kkt: float


@dataclass
class ModeSweepReport:
    """Aggregate of the row solves of one mode sweep."""

    mode: int
    rows_solved: int = 0
    inner_iterations: int = 0
    line_search_failures: int = 0
    fallback_steps: int = 0
    row_reports: list[RowSolveReport] = field(default_factory=list)
    timed_out: bool = False


def init_model(shape, rank: int, seed: int = 0) -> KruskalModel:
    """Random normalized starting model, deterministic per seed.

    Factor entries are drawn uniformly from (0, 1) (exact zeros are
    redrawn), weights start at one, and normalization absorbs the column
    sums into the weights.
    """
    shape = as_shape(shape)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    factors = []
    for dim in shape.dims:
        f = rng.random((dim, rank))
        mask = f == 0.0
        while mask.any():
            f[mask] = rng.random(int(mask.sum()))
            mask = f == 0.0
        factors.append(f)
    return normalize(KruskalModel(np.ones(rank), tuple(factors)))


def _solve_rows(b_matrix, row_positions, tensor, factors, mode0, method,
                solver, stores, workers, deadline):
    """Solve each nonempty row subproblem, writing results into b_matrix.

    Returns (report_rows, timed_out).  A wall-clock deadline is honored
    between row solves only, keeping each row's result deterministic; with
    a thread pool the whole mode is submitted at once and the deadline
    applies between modes instead.
    """
    def solve_one(row0, pos):
        x = tensor.vals[pos]
        pi = _pi_product(factors, mode0, tensor.subs0[pos]).T
        problem = RowProblem(b_matrix[row0], x, pi)
        if method == "pdnr":
            return solve_row_pdnr(problem, solver)
        store = None if stores is None else stores.setdefault(
            (mode0, row0), LbfgsStore(solver.lbfgs_memory if solver else 3)
        )
        return solve_row_pqnr(problem, solver, store)

    reports = []
    timed_out = False
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [(row0, pool.submit(solve_one, row0, pos))
                       for row0, pos in row_positions]
            for row0, fut in futures:
                b_star, report = fut.result()
                b_matrix[row0] = b_star
                reports.append(report)
        return reports, timed_out
    for row0, pos in row_positions:
        if deadline is not None and time.perf_counter() > deadline:
            timed_out = True
            break
        b_star, report = solve_one(row0, pos)
        b_matrix[row0] = b_star
        reports.append(report)
    return reports, timed_out


def solve_mode(tensor: SparseCountTensor, model: KruskalModel, mode: int,
               method: str = "pdnr", solver: Optional[SolverParams] = None,
               mu_params: Optional[MuParams] = None, groups=None,
               stores=None, workers: int = 1, deadline=None):
    """Solve the block subproblem of one mode and rescale.

    Rows of the unfolded tensor without nonzeros are set to zero directly
    (their optimum, since the objective restricted to them is sum(b)).
    Afterwards column sums move into the weights, so the returned model is
    normalized.  Returns (model, ModeSweepReport).
    """
    if not 1 <= mode <= model.ndim:
        raise IndexOutOfRangeError(f"mode {mode} out of range")
    if not model.normalized:
        model = normalize(model)
    mode0 = mode - 1
    report = ModeSweepReport(mode=mode)
    if groups is None:
        groups = mode_row_positions(tensor, mode)
    if method == "mu":
        result = mu_solve_mode(tensor, model, mode, mu_params or MuParams())
        b_matrix = result.b_matrix
        report.rows_solved = len(groups)
        report.inner_iterations = len(result.objectives) - 1
    else:
        b_matrix = np.zeros_like(model.factors[mode0])
        rows_with_data = [row0 for row0, _ in groups]
        b_start = model.factors[mode0] * model.weights
        for row0 in rows_with_data:
            b_matrix[row0] = b_start[row0]
        reports, timed_out = _solve_rows(
            b_matrix, groups, tensor, model.factors, mode0, method,
            solver, stores, workers, deadline,
        )
        report.rows_solved = len(reports)
        report.row_reports = reports
        report.inner_iterations = sum(r.iterations for r in reports)
        report.line_search_failures = sum(r.backtrack_failures for r in reports)
        report.fallback_steps = sum(r.fallback_steps for r in reports)
        report.timed_out = timed_out
    factors = list(model.factors)
    factors[mode0] = b_matrix
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # zero columns are reported via weights
        model_next = normalize(KruskalModel(np.ones(model.rank), tuple(factors)))
    return model_next, report


def fit(tensor: SparseCountTensor, config: FitConfig,
        init: Optional[KruskalModel] = None) -> FitResult:
    """Alternate mode solves until every swept mode meets the KKT tolerance.

    Stops at convergence, at ``outer_max`` sweeps, or once the time limit is
    exceeded (checked between row solves).  The objective recorded in the
    trace is nonincreasing across sweeps for every method.
    """
    if tensor.nnz == 0:
        raise ValueError("cannot fit an empty tensor")
    ndim = tensor.ndim
    modes = config.modes if config.modes is not None else tuple(range(1, ndim + 1))
    for n in modes:
        if not 1 <= n <= ndim:
            raise IndexOutOfRangeError(f"swept mode {n} out of range")
    model = init if init is not None else init_model(
        tensor.shape, config.rank, config.seed
    )
    if model.shape.dims != tensor.shape.dims:
        raise ValueError("initial model shape does not match the tensor")
    if model.rank != config.rank:
        raise ValueError("initial model rank does not match the config")
    if not model.normalized:
        model = normalize(model)
    start_objective = kl_objective(model, tensor)
    if not np.isfinite(start_objective):
        raise ValueError(
            "initial model assigns zero to a cell with a positive count"
        )
    solver = config.solver or SolverParams(tau=config.tau)
    stores = {} if (config.method == "pqnr" and config.persist_lbfgs) else None
    groups = {n: mode_row_positions(tensor, n) for n in modes}

    start = time.perf_counter()
    deadline = None if config.time_limit is None else start + config.time_limit
    trace = FitTrace()
    converged = False
    final_kkt = float("inf")
    for outer in range(1, config.outer_max + 1):
        ls_failures = 0
        fallbacks = 0
        timed_out = False
        for n in modes:
            model, sweep = solve_mode(
                tensor, model, n, method=config.method, solver=solver,
                mu_params=config.mu, groups=groups[n], stores=stores,
                workers=config.workers, deadline=deadline,
            )
            ls_failures += sweep.line_search_failures
            fallbacks += sweep.fallback_steps
            if sweep.timed_out or (
                deadline is not None and time.perf_counter() > deadline
            ):
                timed_out = True
                break
        mode_kkt = tuple(
            mode_kkt_violation(tensor, model, n, groups[n]) for n in modes
        )
        final_kkt = max(mode_kkt)
        zeros = sum(int(np.count_nonzero(f == 0.0)) for f in model.factors)
        trace.append(OuterRecord(
            outer=outer,
            mode_kkt=mode_kkt,
            objective=kl_objective(model, tensor),
            exact_zeros=zeros,
            seconds=time.perf_counter() - start,
            line_search_failures=ls_failures,
            fallback_steps=fallbacks,
        ))
        if final_kkt <= config.tau:
            converged = True
            break
        if timed_out or (deadline is not None and time.perf_counter() > deadline):
            break
    return FitResult(model=model, trace=trace, converged=converged,
                     final_kkt=final_kkt)


def write_trace(trace: FitTrace, path) -> None:
    """Write a fit trace as CSV with one row per outer iteration."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for rec in trace:
            writer.writerow([
                rec.outer,
                f"{rec.mode_kkt_max:.17g}",
                f"{rec.objective:.17g}",
                rec.exact_zeros,
                f"{rec.seconds:.6f}",
                rec.line_search_failures,
                rec.fallback_steps,
            ])

"""Multiplicative-update baseline for one mode's block subproblem.

The update is the classic scaled steepest-descent step for the KL
objective.  Because factor columns are normalized before each mode solve,
the usual denominator (the row sums of the Khatri-Rao matrix) is
identically one, so each inner iteration reduces to B <- B * Phi with

    Phi[i, r] = sum_{j in nz(i)} x_ij * pi[r, j] / (B[i, :] @ pi[:, j]),

computed over nonzero unfolding columns only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kruskal import KruskalModel, _pi_product, normalize
from .sparse_tensor import SparseCountTensor

__all__ = ["MuParams", "MuSolveResult", "mu_solve_mode"]

POSITIVITY_CLAMP = 1e-16


@dataclass(frozen=True)
class MuParams:
    """Inner iteration count for one multiplicative mode solve."""

    inner_iterations: int = 10

    def __post_init__(self):
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be at least 1")


class MuSolveResult(NamedTuple):
    b_matrix: np.ndarray  # updated B for the mode, rows without data zeroed
    objectives: np.ndarray  # mode objective before each inner iteration and after the last


def mu_solve_mode(tensor: SparseCountTensor, model: KruskalModel, mode: int,
                  params: MuParams = MuParams()) -> MuSolveResult:
    """Run multiplicative updates on mode ``mode`` of a normalized model.

    Entries of B are clamped up to 1e-16 before the first inner iteration so
    that no variable starts in the absorbing state at zero.  Rows of the
    unfolded tensor without any nonzero have objective sum(b) and are set to
    zero, their exact optimum.  The recorded objectives are nonincreasing.
    """
    if not model.normalized:
        model = normalize(model)
    mode0 = mode - 1
    b = np.maximum(model.factors[mode0] * model.weights, POSITIVITY_CLAMP)
    rows = tensor.subs0[:, mode0]
    has_data = np.zeros(b.shape[0], dtype=bool)
    has_data[rows] = True
    b[~has_data] = 0.0
    if tensor.nnz == 0:
        return MuSolveResult(b, np.zeros(params.inner_iterations + 1))

    pi = _pi_product(model.factors, mode0, tensor.subs0)  # (nnz, R)
    x = tensor.vals.astype(np.float64)
    order = np.argsort(rows, kind="stable")
    sorted_rows = rows[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(sorted_rows)) + 1))
    unique_rows = sorted_rows[starts]
    pi_sorted = pi[order]
    x_sorted = x[order]

    objectives = np.empty(params.inner_iterations + 1)
    for it in range(params.inner_iterations):
        m = np.einsum("zr,zr->z", b[sorted_rows], pi_sorted)
        objectives[it] = b.sum() - float(x_sorted @ np.log(m))
        ratio = x_sorted / m
        phi = np.add.reduceat(pi_sorted * ratio[:, None], starts, axis=0)
        b[unique_rows] *= phi
    m = np.einsum("zr,zr->z", b[sorted_rows], pi_sorted)
    objectives[-1] = b.sum() - float(x_sorted @ np.log(m))
    return MuSolveResult(b, objectives)

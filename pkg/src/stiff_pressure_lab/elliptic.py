"""Semilinear reaction profiles: solve ``-lap(w) = G(w) + f`` on a grid.

The saturated phase of the limit problem is governed by this boundary value
problem with zero Dirichlet data on the phase boundary.  With the affine
growth law the system is linear and one Newton step is exact; for general
decreasing laws Newton converges globally because the Jacobian
``-L - diag(G')`` is an M-matrix.
"""

from __future__ import annotations

import numpy as np

from .errors import ProjectionFailureError
from .model import Grid, GrowthLaw
from .operators import BoundaryCondition, TridiagOperator, diffusion_operator

__all__ = ["solve_reaction_profile", "closed_form_interval_profile"]


def solve_reaction_profile(
    grid: Grid,
    growth: GrowthLaw,
    bc_left: BoundaryCondition,
    bc_right: BoundaryCondition,
    forcing: np.ndarray | float = 0.0,
    initial_guess: np.ndarray | None = None,
    tol: float = 1e-11,
    max_iter: int = 60,
    operator: TridiagOperator | None = None,
) -> np.ndarray:
    """Newton solve of ``-(L w + c) = G(w) + forcing``.

    Returns the cell values of ``w``.  Raises
    :class:`~stiff_pressure_lab.errors.ProjectionFailureError` with the final
    residual if the iteration stalls.
    """
    L = operator if operator is not None else diffusion_operator(grid, bc_left, bc_right)
    f = np.broadcast_to(np.asarray(forcing, dtype=float), (grid.n_cells,))
    w = np.zeros(grid.n_cells) if initial_guess is None else np.array(initial_guess, dtype=float)

    def threshold(w_now):
        # round-off floor of the residual scales with |L| |w|
        scale = float(np.max(np.abs(L.diag))) * max(1.0, float(np.max(np.abs(w_now))))
        return tol + 20.0 * np.finfo(float).eps * max(1.0, scale)

    residual = np.inf
    for _ in range(max_iter):
        F = L.apply(w) + growth.evaluate(w) + f
        residual = float(np.max(np.abs(F)))
        if residual <= threshold(w):
            return w
        # (diag(-G') - L) delta = F  =>  w + delta solves the linearization
        alpha = -np.asarray(growth.derivative(w), dtype=float)
        w = w + L.solve_shifted(np.broadcast_to(alpha, w.shape), F)
    F = L.apply(w) + growth.evaluate(w) + f
    residual = float(np.max(np.abs(F)))
    if residual <= threshold(w):
        return w
    raise ProjectionFailureError(
        f"reaction-profile Newton stalled at residual {residual:.3e}", residual
    )


def closed_form_interval_profile(x, half_width: float, growth: GrowthLaw):
    """Exact profile for the affine law on ``(-a, a)`` with zero boundary data.

    ``w(x) = p_M (1 - cosh(k x)/cosh(k a))`` with ``k = sqrt(g0/p_M)``;
    the oracle used by the refinement tests.
    """
    k = np.sqrt(growth.g0 / growth.p_M)
    return growth.p_M * (1.0 - np.cosh(k * np.asarray(x)) / np.cosh(k * half_width))

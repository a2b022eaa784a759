"""Implicit solver for the elliptic-parabolic limit problem.

The limit of the stiff density model is carried by a single phase variable
``u`` solving

    d/dt [u]_+ - nu lap(u) = ([u]_+ - nu) G(u_minus),   u_minus = max(-u, 0),

which is parabolic where ``u > 0`` (unsaturated tissue, ``u = nu (1-rho)``)
and elliptic where ``u < 0`` (saturated region, ``u = -p``).  Each backward
Euler step is a piecewise-smooth root problem solved by semismooth Newton
with the generalized derivative of ``[.]_+`` taken as 1 at zero.  New
negative regions can appear spontaneously (nucleation); the implicit solve
lands on the post-jump branch without event detection, and the run records
both one-sided values across any step where cells change sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .elliptic import solve_reaction_profile
from .errors import (
    InvalidDataError,
    NumericalBlowupError,
    StepFailureError,
)
from .model import Field, ModelParams, positive_part
from .operators import BoundaryCondition, TridiagOperator, diffusion_operator
from .pme import StepControl

__all__ = [
    "LimitState",
    "FreeBoundary",
    "NucleationEvent",
    "LimitRunResult",
    "project_initial_data",
    "limit_step",
    "limit_run",
    "extract_free_boundary",
    "saturation_components",
]

_NEWTON_TOL = 1e-10
_NEWTON_MAX_ITER = 100
_FALLBACK_EPS = 1e-8


@dataclass(frozen=True)
class LimitState:
    """Phase variable at one time level, with parameters and boundary data."""

    u: Field
    params: ModelParams
    bc: BoundaryCondition

    def __post_init__(self):
        if np.any(self.u.values > self.params.nu + 1e-9):
            raise InvalidDataError("phase variable exceeds nu")

    @property
    def pressure(self) -> np.ndarray:
        """Saturated-phase pressure ``u_minus``."""
        return np.maximum(-self.u.values, 0.0)

    @property
    def saturation_deficit(self) -> np.ndarray:
        """``[u]_+ = nu (1 - rho)`` in the unsaturated phase."""
        return positive_part(self.u.values)

    def with_u(self, values: np.ndarray, time: float) -> "LimitState":
        return LimitState(self.u.with_values(values, time), self.params, self.bc)


@dataclass(frozen=True)
class FreeBoundary:
    """Sub-cell zero crossings of the phase variable at one time."""

    positions: np.ndarray
    time: float


@dataclass(frozen=True)
class NucleationEvent:
    """Sign-flip record for one implicit step (both one-sided values)."""

    time_before: float
    time_after: float
    cells_flipped: int
    u_before_max: float
    u_after_min: float


@dataclass
class LimitRunResult:
    snapshots: list[LimitState]
    boundaries: list[FreeBoundary]
    first_negative_time: np.ndarray
    nucleation_events: list[NucleationEvent] = field(default_factory=list)


def saturation_components(rho_values: np.ndarray, threshold: float = 1.0 - 1e-12):
    """Contiguous cell runs where the density sits at saturation."""
    mask = rho_values >= threshold
    runs = []
    i = 0
    n = mask.size
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def project_initial_data(
    rho0: Field,
    params: ModelParams,
    bc: BoundaryCondition | None = None,
) -> LimitState:
    """Build limit initial data from a density profile.

    Outside the saturated set the phase variable is ``nu (1 - rho0)``.  On
    each saturated component the initial pressure is the reaction profile
    ``-lap(w) = G(w)`` with zero boundary data on the component faces, and
    the phase variable is ``-w`` there.  An empty saturated set yields the
    purely parabolic initial datum.
    """
    vals = rho0.values
    if np.any(vals < 0.0) or np.any(vals > 1.0 + 1e-12):
        raise InvalidDataError("initial density must lie in [0, 1]")
    grid = rho0.grid
    nu = params.nu
    u0 = nu * (1.0 - vals)

    for i_lo, i_hi in saturation_components(vals):
        sub = grid.subgrid(i_lo, i_hi)
        left = BoundaryCondition.dirichlet(0.0)
        if grid.geometry == "radial" and i_lo == 0 and grid.x_min == 0.0:
            left = BoundaryCondition.zero_flux()  # symmetry at the origin
        w = solve_reaction_profile(sub, params.growth, left, BoundaryCondition.dirichlet(0.0))
        u0[i_lo : i_hi + 1] = -w

    if bc is None:
        bc = BoundaryCondition.dirichlet(params.boundary_phase_value)
    return LimitState(Field(grid, u0, rho0.time), params, bc)


def _semismooth_solve(
    u_old: np.ndarray,
    L: TridiagOperator,
    dt: float,
    nu: float,
    growth,
    b_eps: float = 0.0,
):
    """One backward Euler step; returns (solution, residual) or (None, residual)."""

    def b(v):
        return np.maximum(v, 0.0) + b_eps * np.minimum(v, 0.0)

    b_old = b(u_old)

    def residual(U):
        u_minus = np.maximum(-U, 0.0)
        return b(U) - b_old - dt * (nu * L.apply(U) + (b(U) - nu) * growth.evaluate(u_minus))

    U = u_old.copy()
    F = residual(U)
    norm_f = float(np.max(np.abs(F)))
    for _ in range(_NEWTON_MAX_ITER):
        if norm_f <= _NEWTON_TOL:
            return U, norm_f
        u_minus = np.maximum(-U, 0.0)
        beta = np.where(U >= 0.0, 1.0, b_eps)
        neg = U < 0.0
        g_val = growth.evaluate(u_minus)
        g_der = np.asarray(growth.derivative(u_minus), dtype=float)
        alpha = beta - dt * beta * g_val + dt * (b(U) - nu) * g_der * neg

        ab = np.zeros((3, U.size))
        ab[0, 1:] = -dt * nu * L.upper[:-1]
        ab[1, :] = alpha - dt * nu * L.diag
        ab[2, :-1] = -dt * nu * L.lower[1:]
        try:
            delta = solve_banded((1, 1), ab, -F)
        except Exception:
            return None, norm_f

        lam = 1.0
        accepted = False
        while lam >= 2.0 ** -25:
            U_try = U + lam * delta
            F_try = residual(U_try)
            norm_try = float(np.max(np.abs(F_try)))
            if norm_try <= (1.0 - 1e-4 * lam) * norm_f or norm_try <= _NEWTON_TOL:
                U, F, norm_f = U_try, F_try, norm_try
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            return None, norm_f
    return (U, norm_f) if norm_f <= _NEWTON_TOL else (None, norm_f)


def limit_step(
    state: LimitState,
    dt: float,
    operator: TridiagOperator | None = None,
) -> LimitState:
    """Advance the limit problem by one backward Euler step.

    Falls back to a slightly regularized positive-part graph when the plain
    semismooth iteration stagnates, and raises
    :class:`~stiff_pressure_lab.errors.StepFailureError` with the residual if
    both attempts fail.
    """
    grid = state.u.grid
    L = operator if operator is not None else diffusion_operator(grid, state.bc, state.bc)
    nu = state.params.nu
    growth = state.params.growth

    U, res = _semismooth_solve(state.u.values, L, dt, nu, growth)
    if U is None:
        U, res = _semismooth_solve(state.u.values, L, dt, nu, growth, b_eps=_FALLBACK_EPS)
    if U is None:
        raise StepFailureError(
            f"implicit limit step stagnated at t={state.u.time:.6g}", res
        )
    if not np.all(np.isfinite(U)):
        raise NumericalBlowupError(f"non-finite phase values at t={state.u.time:.6g}")
    if np.max(U) > nu + 1e-8:
        raise NumericalBlowupError("phase variable exceeded nu after step")
    return state.with_u(U, state.u.time + dt)


def extract_free_boundary(u: Field) -> FreeBoundary:
    """Zero set of the phase variable, located to sub-cell accuracy.

    Cells holding exactly zero are boundary points; between adjacent cells
    of opposite strict sign the crossing is placed by linear interpolation
    (exact for affine data).
    """
    vals = u.values
    x = u.grid.centers
    positions = list(x[vals == 0.0])
    prod = vals[:-1] * vals[1:]
    for i in np.nonzero(prod < 0.0)[0]:
        frac = vals[i] / (vals[i] - vals[i + 1])
        positions.append(x[i] + u.grid.dx * frac)
    return FreeBoundary(np.sort(np.asarray(positions)), u.time)


def limit_run(
    initial: LimitState,
    control: StepControl,
    step_monitor=None,
) -> LimitRunResult:
    """Run the implicit solver, collecting snapshots and boundary history.

    Snapshot landing follows the same shrink-the-last-step rule as the
    density solver.  The result also carries, per cell, the first time its
    value went strictly negative (``nan`` if it never did), plus a record of
    every step across which cells changed sign from nonnegative to negative.
    """
    grid = initial.u.grid
    L = diffusion_operator(grid, initial.bc, initial.bc)
    state = initial
    t = initial.u.time
    eps = 1e-12 * max(1.0, control.t_end)

    first_neg = np.full(grid.n_cells, np.nan)
    first_neg[initial.u.values < 0.0] = t

    snapshots: list[LimitState] = []
    boundaries: list[FreeBoundary] = []
    events: list[NucleationEvent] = []

    for target in control.resolved_snapshots():
        while t < target - eps:
            if control.dt is not None:
                dt = control.dt
            else:
                dt = 0.45 * grid.dx ** 2 / state.params.nu
            dt = min(dt, target - t)
            prev_vals = state.u.values
            prev_t = t
            state = limit_step(state, dt, operator=L)
            t = state.u.time
            flipped = (prev_vals >= 0.0) & (state.u.values < 0.0)
            if np.any(flipped):
                events.append(
                    NucleationEvent(
                        time_before=prev_t,
                        time_after=t,
                        cells_flipped=int(np.count_nonzero(flipped)),
                        u_before_max=float(np.max(prev_vals[flipped])),
                        u_after_min=float(np.min(state.u.values[flipped])),
                    )
                )
            newly = np.isnan(first_neg) & (state.u.values < 0.0)
            first_neg[newly] = t
            if step_monitor is not None:
                step_monitor(t, state.u.values)
        snapshots.append(state)
        boundaries.append(extract_free_boundary(state.u))
    return LimitRunResult(snapshots, boundaries, first_neg, events)

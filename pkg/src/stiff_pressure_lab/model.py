"""Model parameters, grids, fields and the algebraic state transforms.

The density model couples degenerate diffusion with exponent ``m`` to a
linear viscous term ``nu`` and a pressure-limited growth source.  Three
equivalent state descriptions are used throughout the package:

* density ``rho`` in ``[0, rho_cap]``,
* pressure ``p = m/(m-1) * rho**(m-1)``,
* phase variable ``u = -rho**m + nu*(1 - rho)``.

The phase variable is the workhorse of the stiff limit: it is positive in
the unsaturated region (where it equals ``nu*(1-rho)``) and negative in the
saturated region (where it equals ``-p``).  All transforms here are strictly
monotone, so each has a well-defined inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import InvalidDataError, InvalidParameterError, TransformRangeError

__all__ = [
    "GrowthLaw",
    "ModelParams",
    "Grid",
    "Field",
    "pressure_of_density",
    "density_of_pressure",
    "phase_of_density",
    "density_of_phase",
    "phase_of_pressure",
    "pressure_of_phase",
    "positive_part",
    "phase_field_of_density",
]


@dataclass(frozen=True)
class GrowthLaw:
    """Affine growth law ``G(p) = g0 * (1 - p / p_M)``.

    ``g0`` is the growth rate at zero pressure and ``p_M`` the homeostatic
    pressure where growth stops.  The affine form keeps the saturated-phase
    equation linear, which gives closed-form oracles for testing; decreasing
    nonlinear laws can be supplied by subclassing and overriding
    :meth:`evaluate` and :meth:`derivative`.

    ``g0 = 0`` is allowed and yields the zero law (used to switch growth
    off, e.g. for conservation checks).
    """

    g0: float
    p_M: float

    def __post_init__(self):
        if self.g0 < 0.0:
            raise InvalidParameterError(f"g0 must be >= 0, got {self.g0}")
        if self.p_M <= 0.0:
            raise InvalidParameterError(f"p_M must be > 0, got {self.p_M}")

    def evaluate(self, p):
        """Growth rate at pressure ``p`` (scalar or array)."""
        return self.g0 * (1.0 - np.asarray(p) / self.p_M) if np.ndim(p) else self.g0 * (1.0 - p / self.p_M)

    def derivative(self, p):
        """dG/dp at ``p``; constant ``-g0/p_M`` for the affine law."""
        d = -self.g0 / self.p_M
        return np.full_like(np.asarray(p, dtype=float), d) if np.ndim(p) else d

    @staticmethod
    def zero(p_M: float = 1.0) -> "GrowthLaw":
        return GrowthLaw(g0=0.0, p_M=p_M)


@dataclass(frozen=True)
class ModelParams:
    """Full parameterization of the density equation.

    Parameters
    ----------
    m:
        Diffusion exponent, ``m > 1``.  Larger values stiffen the pressure
        response and sharpen the saturation front.
    nu:
        Viscosity of the active motion, ``nu > 0``.  The pure ``nu = 0``
        case is out of scope and rejected.
    growth:
        Growth law ``G``.
    rho_L:
        Lateral boundary density for bounded-domain runs, ``0 <= rho_L < 1``.
    M0:
        Bound imposed on the initial pressure by
        :func:`~stiff_pressure_lab.pme.prepare_initial_density`.
    """

    m: float
    nu: float
    growth: GrowthLaw = field(default_factory=lambda: GrowthLaw(g0=1.0, p_M=1.0))
    rho_L: float = 0.0
    M0: float = 2.0

    def __post_init__(self):
        if not self.m > 1.0:
            raise InvalidParameterError(f"m must be > 1, got {self.m}")
        if not self.nu > 0.0:
            raise InvalidParameterError(
                f"nu must be > 0 (nu=0 case not treated), got {self.nu}"
            )
        if not 0.0 <= self.rho_L < 1.0:
            raise InvalidParameterError(f"rho_L must be in [0, 1), got {self.rho_L}")
        if not self.M0 > 0.0:
            raise InvalidParameterError(f"M0 must be > 0, got {self.M0}")

    def with_m(self, m: float) -> "ModelParams":
        """Copy with a different exponent; used by sweeps over ``m``."""
        return replace(self, m=m)

    @property
    def boundary_phase_value(self) -> float:
        """Phase-variable value matching the lateral density ``rho_L``."""
        return self.nu * (1.0 - self.rho_L)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered 1D mesh, Cartesian or radial.

    ``geometry`` is ``"interval"`` for a Cartesian interval and ``"radial"``
    for a radially symmetric problem in ``dimension`` space dimensions, in
    which case ``x`` is the radius and ``x_min >= 0`` is required.  Cell
    centers sit at ``x_min + (i + 1/2) dx``.
    """

    geometry: str
    x_min: float
    x_max: float
    n_cells: int
    dimension: int = 1

    def __post_init__(self):
        if self.geometry not in ("interval", "radial"):
            raise InvalidParameterError(f"unknown geometry {self.geometry!r}")
        if self.n_cells < 2:
            raise InvalidParameterError("n_cells must be >= 2")
        if not self.x_max > self.x_min:
            raise InvalidParameterError("x_max must exceed x_min")
        if self.geometry == "radial":
            if self.x_min < 0.0:
                raise InvalidParameterError("radial grids require x_min >= 0")
            if self.dimension < 1:
                raise InvalidParameterError("radial dimension must be >= 1")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @cached_property
    def faces(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_cells + 1)

    @cached_property
    def centers(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.n_cells) + 0.5)

    @cached_property
    def face_areas(self) -> np.ndarray:
        """Area of each cell interface; ``r**(n-1)`` for radial grids."""
        if self.geometry == "interval":
            return np.ones(self.n_cells + 1)
        return self.faces ** (self.dimension - 1)

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        """Exact volume of each cell (shell volume for radial grids)."""
        if self.geometry == "interval":
            return np.full(self.n_cells, self.dx)
        n = self.dimension
        return (self.faces[1:] ** n - self.faces[:-1] ** n) / n

    def subgrid(self, i_lo: int, i_hi: int) -> "Grid":
        """Grid spanning cells ``i_lo .. i_hi`` inclusive (face aligned)."""
        return Grid(
            geometry=self.geometry,
            x_min=self.faces[i_lo],
            x_max=self.faces[i_hi + 1],
            n_cells=i_hi - i_lo + 1,
            dimension=self.dimension,
        )


@dataclass(frozen=True)
class Field:
    """A scalar sample per cell at a single time level."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.n_cells,):
            raise InvalidDataError(
                f"field length {vals.shape} does not match n_cells={self.grid.n_cells}"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidDataError("field contains non-finite values")
        if self.time < 0.0:
            raise InvalidDataError("field time must be >= 0")

    def with_values(self, values, time=None) -> "Field":
        return Field(self.grid, np.asarray(values, dtype=float), self.time if time is None else time)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.time)


def _check_m(m: float):
    if not m > 1.0:
        raise InvalidParameterError(f"m must be > 1, got {m}")


def pressure_of_density(rho, m: float):
    """Pressure ``m/(m-1) * rho**(m-1)``; monotone increasing in ``rho``."""
    _check_m(m)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise InvalidParameterError("density must be >= 0")
    out = (m / (m - 1.0)) * rho ** (m - 1.0)
    return float(out) if out.ndim == 0 else out


def density_of_pressure(p, m: float):
    """Exact inverse of :func:`pressure_of_density`."""
    _check_m(m)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0):
        raise InvalidParameterError("pressure must be >= 0")
    out = ((m - 1.0) * p / m) ** (1.0 / (m - 1.0))
    return float(out) if out.ndim == 0 else out


def phase_of_density(rho, m: float, nu: float):
    """Phase variable ``-rho**m + nu*(1 - rho)``; strictly decreasing."""
    _check_m(m)
    if not nu > 0.0:
        raise InvalidParameterError("nu must be > 0")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise InvalidParameterError("density must be >= 0")
    out = -(rho ** m) + nu * (1.0 - rho)
    return float(out) if out.ndim == 0 else out


def density_of_phase(u, m: float, nu: float, tol: float = 1e-12):
    """Invert the phase transform on ``[0, 1]``.

    The transform has derivative ``-m rho**(m-1) - nu <= -nu < 0``, so the
    root is unique; safeguarded bisection brackets it, then a couple of
    Newton steps polish to ``tol``.  ``u`` must lie in ``[-1, nu]`` (the
    image of ``[0, 1]``).
    """
    _check_m(m)
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < -1.0 - 1e-12) or np.any(u_arr > nu + 1e-12):
        raise TransformRangeError(f"phase value outside [-1, {nu}]")
    u_arr = np.clip(u_arr, -1.0, nu)

    lo = np.zeros_like(u_arr)
    hi = np.ones_like(u_arr)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        too_high = (-(mid ** m) + nu * (1.0 - mid)) > u_arr  # phase(mid) > u => root right of mid
        lo = np.where(too_high, mid, lo)
        hi = np.where(too_high, hi, mid)
    rho = 0.5 * (lo + hi)
    for _ in range(2):
        f = -(rho ** m) + nu * (1.0 - rho) - u_arr
        df = -m * rho ** (m - 1.0) - nu
        rho = np.clip(rho - f / df, 0.0, 1.0)
    # exact endpoints
    rho = np.where(u_arr == nu, 0.0, rho)
    rho = np.where(u_arr == -1.0, 1.0, rho)
    return float(rho) if rho.ndim == 0 else rho


def phase_of_pressure(p, m: float, nu: float):
    """Phase variable as a function of pressure (composition of transforms)."""
    return phase_of_density(density_of_pressure(p, m), m, nu)


def pressure_of_phase(u, m: float, nu: float):
    """Inverse of :func:`phase_of_pressure` via the density route."""
    return pressure_of_density(density_of_phase(u, m, nu), m)


def positive_part(u):
    """``max(u, 0)``, the saturation-deficit graph of the limit problem."""
    u = np.asarray(u, dtype=float)
    out = np.maximum(u, 0.0)
    return float(out) if out.ndim == 0 else out


def phase_field_of_density(rho_field: Field, params: ModelParams) -> Field:
    """Pointwise phase transform of a density field (same grid and time)."""
    return rho_field.with_values(phase_of_density(rho_field.values, params.m, params.nu))

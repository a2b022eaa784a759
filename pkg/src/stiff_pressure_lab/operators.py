"""Cell-centered finite-volume operators on 1D Cartesian and radial grids.

Everything is expressed through interface fluxes so that discrete
conservation is exact: for a cell ``i`` with volume ``V_i`` and face areas
``A_i``, ``A_{i+1}``,

    (L u)_i = (A_{i+1} D_{i+1} (u_{i+1}-u_i)/dx - A_i D_i (u_i-u_{i-1})/dx) / V_i.

Boundary conditions are imposed through mirror ghost values at the outer
faces: ``u_ghost = 2 g - u_edge`` for a Dirichlet face value ``g`` and
``u_ghost = u_edge`` for a zero-flux face.  A radial grid with ``x_min = 0``
has zero face area at the origin, so the symmetry condition there is
automatic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import InvalidParameterError
from .model import Grid

__all__ = ["BoundaryCondition", "TridiagOperator", "diffusion_operator"]


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary descriptor: ``kind`` is ``"dirichlet"`` or ``"zero-flux"``."""

    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "zero-flux"):
            raise InvalidParameterError(f"unknown boundary kind {self.kind!r}")

    @staticmethod
    def dirichlet(value: float) -> "BoundaryCondition":
        return BoundaryCondition("dirichlet", value)

    @staticmethod
    def zero_flux() -> "BoundaryCondition":
        return BoundaryCondition("zero-flux")


@dataclass
class TridiagOperator:
    """Affine tridiagonal operator ``u -> L u + c``.

    ``lower[i]`` couples cell ``i`` to ``i-1`` (``lower[0]`` unused) and
    ``upper[i]`` couples cell ``i`` to ``i+1`` (``upper[-1]`` unused);
    ``const`` carries the boundary data contribution.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    const: np.ndarray

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u + self.const
        out[:-1] += self.upper[:-1] * u[1:]
        out[1:] += self.lower[1:] * u[:-1]
        return out

    def solve_shifted(self, alpha: np.ndarray | float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(diag(alpha) - L) x = rhs`` (the ``const`` part is not
        included; add it to ``rhs`` at the call site as needed)."""
        n = self.diag.size
        ab = np.zeros((3, n))
        ab[0, 1:] = -self.upper[:-1]
        ab[1, :] = np.asarray(alpha) - self.diag
        ab[2, :-1] = -self.lower[1:]
        return solve_banded((1, 1), ab, rhs)


def diffusion_operator(
    grid: Grid,
    bc_left: BoundaryCondition,
    bc_right: BoundaryCondition,
    face_diffusivity: np.ndarray | float = 1.0,
) -> TridiagOperator:
    """Assemble ``div(D grad .)`` with the given boundary conditions.

    ``face_diffusivity`` is either a scalar or one value per face
    (``n_cells + 1`` entries).  The origin face of a radial grid starting at
    zero carries zero area, which silently turns any left condition into the
    symmetry condition.
    """
    n = grid.n_cells
    dx = grid.dx
    areas = grid.face_areas
    vols = grid.cell_volumes
    D = np.broadcast_to(np.asarray(face_diffusivity, dtype=float), (n + 1,))

    # interior face transmissibilities
    trans = areas * D / dx  # per face
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    const = np.zeros(n)

    lower[1:] = trans[1:n] / vols[1:]
    upper[:-1] = trans[1:n] / vols[:-1]
    diag -= np.concatenate(([0.0], trans[1:n])) / vols  # flux to the left neighbor
    diag -= np.concatenate((trans[1:n], [0.0])) / vols  # flux to the right neighbor

    # left boundary face (mirror ghost): dirichlet doubles the half-cell flux
    if bc_left.kind == "dirichlet" and trans[0] != 0.0:
        diag[0] -= 2.0 * trans[0] / vols[0]
        const[0] += 2.0 * trans[0] * bc_left.value / vols[0]
    # zero-flux: nothing to add

    if bc_right.kind == "dirichlet":
        diag[-1] -= 2.0 * trans[n] / vols[-1]
        const[-1] += 2.0 * trans[n] * bc_right.value / vols[-1]

    return TridiagOperator(lower=lower, diag=diag, upper=upper, const=const)

"""Radial sub/supersolution families for the stiff equation, with certification.

Given a radial profile pair (an inner reaction profile ``p0`` on ``r < a(t)``
and an outer density profile ``rho0`` on ``r > a(t)`` meeting at a moving
interface), this module constructs the composite barrier used to sandwich
stiff-solver solutions at finite ``m``:

* inner piece ``-(u1)`` with ``u1 = u_tilde - shift``, where ``u_tilde``
  solves ``-lap(u_tilde) = G(p_link) + f`` on the reference configuration,
  ``p_link`` is the pressure linked through the phase transform, and
  ``f(r) = A0/nu * [p0 <= m**(-1/3)] + m**(-1/3)`` is the interface forcing;
* outer piece ``phase(rho_hat)`` where ``rho_hat`` solves the viscous growth
  equation with an ``m**(-1/2)`` tilt and boundary density pinned just below
  saturation.

The shift is ``c = phase_of_pressure(nu/m**3)``; it measures the height of
the composite at the interface and decays like ``nu log(m)/m``.

The inner profile is solved once on the reference configuration and evaluated
at other times through the rescaling ``u_tilde(r, t) = u_tilde(r a_ref/a(t))``,
which also gives its time derivative in closed form.  ``verify_barrier``
evaluates the pointwise differential inequalities of both phases on their
native grids, measures the one-sided interface gradients, and reports margins
per phase; certification requires the correct inequality sign on at least 99%
of interior cells (outside a three-cell patching annulus) and a strictly
positive interface gradient gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .elliptic import solve_reaction_profile
from .errors import ConstructionFailureError, InvalidParameterError
from .model import (
    Grid,
    GrowthLaw,
    density_of_phase,
    phase_of_density,
    phase_of_pressure,
    pressure_of_phase,
)
from .operators import BoundaryCondition, diffusion_operator

__all__ = [
    "RadialProfilePair",
    "BarrierBundle",
    "ResidualReport",
    "make_radial_pair",
    "interface_shift",
    "forcing_profile",
    "indicator_band_width",
    "build_inner_profile",
    "build_outer_profile",
    "build_barrier_bundle",
    "verify_barrier",
    "select_forcing_constant",
]


def interface_shift(m: float, nu: float) -> float:
    """Composite height at the patching radius: ``phase_of_pressure(nu/m**3)``."""
    return float(phase_of_pressure(nu / m ** 3, m, nu))


def forcing_profile(r, p0_at_r, m: float, A0: float, nu: float):
    """Interface forcing ``A0/nu`` on the band ``{p0 <= m**(-1/3)}`` plus ``m**(-1/3)``."""
    if not m > 1.0 or A0 < 0.0:
        raise InvalidParameterError("need m > 1 and A0 >= 0")
    band = np.asarray(p0_at_r, dtype=float) <= m ** (-1.0 / 3.0)
    out = (A0 / nu) * band + m ** (-1.0 / 3.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class RadialProfilePair:
    """Radial two-phase profile with a moving interface ``r = a(t)``.

    ``p_profiles[k]`` lives on ``inner_grids[k]`` (a radial grid on
    ``[0, a(t_k)]``); ``rho_profiles[k]`` lives on the fixed exterior grid in
    the shifted coordinate ``s = r - a(t)``.  ``rho_boundary`` is the density
    value pinned at the interface (1 for an exact pair).
    """

    dimension: int
    nu: float
    growth: GrowthLaw
    times: np.ndarray
    a_values: np.ndarray
    inner_grids: list[Grid]
    p_profiles: list[np.ndarray]
    s_grid: Grid
    rho_profiles: np.ndarray
    rho_far: float
    rho_boundary: float = 1.0
    rho_below_one: bool = True

    @property
    def a_ref(self) -> float:
        return float(self.a_values[0])

    def a_rate(self, k: int) -> float:
        """Interface speed at sample ``k`` (centered, one-sided at the ends)."""
        t, a = self.times, self.a_values
        if k == 0:
            return float((a[1] - a[0]) / (t[1] - t[0]))
        if k == len(t) - 1:
            return float((a[-1] - a[-2]) / (t[-1] - t[-2]))
        return float((a[k + 1] - a[k - 1]) / (t[k + 1] - t[k - 1]))

    def inner_gradient(self, k: int) -> float:
        """One-sided ``|grad p0|`` at the interface from inside."""
        p = self.p_profiles[k]
        h = self.inner_grids[k].dx
        return abs((9.0 * p[-1] - p[-2]) / (3.0 * h))

    def outer_gradient(self, k: int) -> float:
        """One-sided ``|grad rho0|`` at the interface from outside."""
        v = self.rho_profiles[k]
        h = self.s_grid.dx
        b = self.rho_boundary
        return abs((9.0 * (v[0] - b) - (v[1] - b)) / (3.0 * h))

    def phase_values(self, k: int, r: np.ndarray) -> np.ndarray:
        """The pair's own limit profile sampled at radii ``r``."""
        r = np.asarray(r, dtype=float)
        a_k = float(self.a_values[k])
        inner = np.interp(r, self.inner_grids[k].centers, self.p_profiles[k])
        outer = np.interp(r - a_k, self.s_grid.centers, self.rho_profiles[k])
        return np.where(r < a_k, -inner, self.nu * (1.0 - outer))


def _moving_exterior_run(
    s_grid: Grid,
    dimension: int,
    nu: float,
    g0: float,
    a_of_t,
    a_rate_of_t,
    v0: np.ndarray,
    boundary_value: float,
    far_value: float,
    forcing: float,
    times: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Backward Euler for ``v_t = a' v_s + nu lap_r v + g0 v + forcing``.

    The exterior problem is posed on the fixed window ``s = r - a(t)`` in
    ``[0, s_max]``; the moving interface shows up as the advection ``a' v_s``
    and in the cylindrical term ``nu (n-1)/(s + a) v_s``.  Dirichlet data are
    imposed through mirror ghosts at both window ends.  Returns the solution
    at the requested sample times (first sample must be the initial time).
    """
    s = s_grid.centers
    ds = s_grid.dx
    n = s_grid.n_cells
    out = np.empty((len(times), n))
    out[0] = v0
    v = v0.copy()
    t = float(times[0])

    for k, target in enumerate(times[1:], start=1):
        while t < target - 1e-13:
            step = min(dt, target - t)
            t_new = t + step
            a = a_of_t(t_new)
            rate = a_rate_of_t(t_new)
            c1 = rate + nu * (dimension - 1) / (s + a)

            lower = nu / ds ** 2 - c1 / (2.0 * ds)
            upper = nu / ds ** 2 + c1 / (2.0 * ds)
            diag = np.full(n, -2.0 * nu / ds ** 2 + g0)
            const = np.full(n, forcing)
            # mirror ghosts
            diag[0] -= lower[0]
            const[0] += 2.0 * boundary_value * lower[0]
            diag[-1] -= upper[-1]
            const[-1] += 2.0 * far_value * upper[-1]

            ab = np.zeros((3, n))
            ab[0, 1:] = -upper[:-1]
            ab[1, :] = 1.0 / step - diag
            ab[2, :-1] = -lower[1:]
            v = solve_banded((1, 1), ab, v / step + const)
            t = t_new
        out[k] = v
    return out


def make_radial_pair(
    dimension: int = 1,
    nu: float = 0.5,
    growth: GrowthLaw | None = None,
    a0: float = 1.0,
    a_rate: float = -0.3,
    t_end: float = 0.5,
    n_times: int = 11,
    s_max: float = 2.0,
    n_inner: int = 400,
    n_outer: int = 400,
    rho_far: float = 0.2,
    ramp_length: float = 0.25,
    dt: float = 1e-3,
) -> RadialProfilePair:
    """Construct a radial profile pair with a linearly moving interface.

    The inner reaction profile is re-solved at every sample time; the outer
    density starts from ``rho_far + (1 - rho_far) exp(-s/ramp_length)`` (so a
    short ``ramp_length`` gives the steep exterior gradient a density-side
    subsolution pair needs) and evolves under the viscous growth equation
    with the interface density pinned at one.
    """
    growth = growth or GrowthLaw(1.0, 1.0)
    times = np.linspace(0.0, t_end, n_times)
    a_values = a0 + a_rate * times
    if np.any(a_values <= 0.0):
        raise InvalidParameterError("interface radius must stay positive")

    inner_grids = []
    p_profiles = []
    for a_k in a_values:
        g = Grid("radial", 0.0, float(a_k), n_inner, dimension=dimension)
        w = solve_reaction_profile(
            g, growth, BoundaryCondition.zero_flux(), BoundaryCondition.dirichlet(0.0)
        )
        inner_grids.append(g)
        p_profiles.append(w)

    s_grid = Grid("interval", 0.0, s_max, n_outer)
    v0 = rho_far + (1.0 - rho_far) * np.exp(-s_grid.centers / ramp_length)
    rho_profiles = _moving_exterior_run(
        s_grid,
        dimension,
        nu,
        growth.g0,
        a_of_t=lambda t: a0 + a_rate * t,
        a_rate_of_t=lambda t: a_rate,
        v0=v0,
        boundary_value=1.0,
        far_value=rho_far,
        forcing=0.0,
        times=times,
        dt=dt,
    )
    return RadialProfilePair(
        dimension=dimension,
        nu=nu,
        growth=growth,
        times=times,
        a_values=a_values,
        inner_grids=inner_grids,
        p_profiles=p_profiles,
        s_grid=s_grid,
        rho_profiles=rho_profiles,
        rho_far=rho_far,
        rho_below_one=bool(np.max(rho_profiles) < 1.0),
    )


def indicator_band_width(pair: RadialProfilePair, m: float, k: int = 0) -> float:
    """Width of the forcing band ``{p0 <= m**(-1/3)}`` next to the interface."""
    level = m ** (-1.0 / 3.0)
    grid = pair.inner_grids[k]
    p = pair.p_profiles[k]
    a_k = float(pair.a_values[k])
    above = np.nonzero(p > level)[0]
    if above.size == 0:
        return a_k - grid.x_min
    i = int(above[-1])  # last cell above the level; band starts past it
    if i == grid.n_cells - 1:
        return 0.0
    x0, x1 = grid.centers[i], grid.centers[i + 1]
    frac = (p[i] - level) / (p[i] - p[i + 1])
    return a_k - (x0 + frac * (x1 - x0))


def _inner_fixed_point(
    grid: Grid,
    m: float,
    nu: float,
    growth: GrowthLaw,
    forcing: np.ndarray,
    pressure_link,
    tol: float = 1e-10,
    max_iter: int = 50,
    initial: np.ndarray | None = None,
):
    """Picard iteration for ``-lap(u) = G(pressure_link(u)) + forcing``.

    The linear solve is exact each sweep; updates are damped by half only
    when the increment grows (safeguard), since the undamped map already
    contracts for the intended parameters.
    """
    L = diffusion_operator(
        grid, BoundaryCondition.zero_flux(), BoundaryCondition.dirichlet(0.0)
    )
    u = np.zeros(grid.n_cells) if initial is None else initial.copy()
    floor = 40.0 * np.finfo(float).eps * float(np.max(np.abs(L.diag)))
    prev_incr = np.inf
    damped = False
    for _ in range(max_iter):
        rhs = np.asarray(growth.evaluate(pressure_link(u)), dtype=float) + forcing
        u_new = L.solve_shifted(0.0, rhs)
        incr = float(np.max(np.abs(u_new - u)))
        if incr > prev_incr:
            damped = True  # sticky: the undamped sweep is not contracting
        u = u + 0.5 * (u_new - u) if damped else u_new
        prev_incr = incr
        residual = float(
            np.max(np.abs(L.apply(u) + growth.evaluate(pressure_link(u)) + forcing))
        )
        if residual <= max(tol, floor * max(1.0, float(np.max(np.abs(u))))):
            return u, residual
    raise ConstructionFailureError(
        f"inner profile fixed point stalled at residual {residual:.3e}"
    )


def build_inner_profile(
    pair: RadialProfilePair,
    m: float,
    A0: float,
    sign: str = "sub",
    pressure_link=None,
) -> np.ndarray:
    """Solve the inner profile on the reference configuration.

    Returns the unshifted profile (vanishing at the reference interface); the
    composite uses ``u1 = profile - interface_shift(m, nu)``.  ``sign`` picks
    the orientation of the interface forcing (added for the density-side
    subsolution family, subtracted for the supersolution one).
    ``pressure_link`` defaults to the phase-transform link
    ``u -> pressure_of_phase(-u)`` and exists as a hook for linear oracles.
    """
    if sign not in ("sub", "super"):
        raise InvalidParameterError("sign must be 'sub' or 'super'")
    grid = pair.inner_grids[0]
    nu = pair.nu
    f = forcing_profile(grid.centers, pair.p_profiles[0], m, A0, nu)
    if sign == "super":
        f = -f
    if pressure_link is None:
        def pressure_link(u):
            arg = np.minimum(-u, nu)
            if np.any(arg < -1.0):
                raise ConstructionFailureError(
                    "inner profile left the invertible density range [0, 1]"
                )
            return pressure_of_phase(arg, m, nu)

    guess = pair.p_profiles[0]
    u, _ = _inner_fixed_point(grid, m, nu, pair.growth, f, pressure_link, initial=guess)
    return u


def build_outer_profile(pair: RadialProfilePair, m: float, sign: str = "sub"):
    """Solve the tilted exterior density on the moving window.

    The boundary density is ``density_of_phase(shift)`` (just below one), the
    initial profile is the pair's own density shifted down by the same
    deficit, and the growth source carries a ``-+ m**(-1/2)`` tilt (minus for
    the density-side subsolution).  Returns ``(trajectory, boundary_density,
    in_range)`` where ``in_range`` flags whether the profile stayed in
    ``[0, 1]``.
    """
    if sign not in ("sub", "super"):
        raise InvalidParameterError("sign must be 'sub' or 'super'")
    nu = pair.nu
    shift = interface_shift(m, nu)
    boundary_density = float(density_of_phase(shift, m, nu))
    deficit = 1.0 - boundary_density
    v0 = pair.rho_profiles[0] - deficit
    forcing = -(m ** -0.5) if sign == "sub" else m ** -0.5
    times = pair.times
    t_of = lambda t: float(np.interp(t, times, pair.a_values))

    def rate_of(t):
        # piecewise-linear interface: slope of the active segment
        k = min(np.searchsorted(times, t, side="right"), len(times) - 1)
        k = max(k, 1)
        return float((pair.a_values[k] - pair.a_values[k - 1]) / (times[k] - times[k - 1]))

    traj = _moving_exterior_run(
        pair.s_grid,
        pair.dimension,
        nu,
        pair.growth.g0,
        a_of_t=t_of,
        a_rate_of_t=rate_of,
        v0=v0,
        boundary_value=boundary_density,
        far_value=pair.rho_far - deficit,
        forcing=forcing,
        times=times,
        dt=1e-3,
    )
    in_range = bool(np.min(traj) >= 0.0 and np.max(traj) <= 1.0)
    return traj, boundary_density, in_range


@dataclass
class ResidualReport:
    """Pointwise margins of the barrier inequalities plus the interface gap.

    Margins are oriented so that a correct cell has ``margin >= -tolerance``
    regardless of the family's sign.  ``gradient_gaps`` holds the required
    one-sided gradient ordering surplus per sample time.
    """

    tolerance: float
    inner_worst_margin: float
    inner_fraction_ok: float
    outer_worst_margin: float
    outer_fraction_ok: float
    gradient_gaps: np.ndarray
    inner_cells_checked: int
    outer_cells_checked: int
    per_time: list[dict] = field(default_factory=list)

    @property
    def min_gradient_gap(self) -> float:
        return float(np.min(self.gradient_gaps))

    @property
    def passed(self) -> bool:
        return (
            self.inner_fraction_ok >= 0.99
            and self.outer_fraction_ok >= 0.99
            and self.min_gradient_gap > 0.0
        )


@dataclass
class BarrierBundle:
    """Composite barrier at one exponent, ready for certification."""

    m: float
    A0: float
    sign: str
    shift: float
    pair: RadialProfilePair
    inner_values: np.ndarray
    boundary_density: float
    rho_hat: np.ndarray
    rho_hat_in_range: bool
    residual_report: ResidualReport | None = None

    def composite_values(self, k: int, r: np.ndarray) -> np.ndarray:
        """Composite phase profile at sample ``k`` evaluated at radii ``r``."""
        pair = self.pair
        r = np.asarray(r, dtype=float)
        a_k = float(pair.a_values[k])
        xi = r * pair.a_ref / a_k
        inner = self.shift - np.interp(xi, pair.inner_grids[0].centers, self.inner_values)
        rho = np.interp(r - a_k, pair.s_grid.centers, self.rho_hat[k])
        outer = phase_of_density(np.clip(rho, 0.0, None), self.m, pair.nu)
        return np.where(r < a_k, inner, outer)

    def interface_limits(self, k: int) -> tuple[float, float]:
        """One-sided composite values at ``r = a(t_k)`` (linear extrapolation)."""
        u_in = self.shift - self.inner_values
        inner = u_in[-1] + 0.5 * (u_in[-1] - u_in[-2])
        u_out_cells = phase_of_density(self.rho_hat[k][:2], self.m, self.pair.nu)
        outer = u_out_cells[0] + 0.5 * (u_out_cells[0] - u_out_cells[1])
        return float(inner), float(outer)


def build_barrier_bundle(
    pair: RadialProfilePair, m: float, A0: float, sign: str = "sub"
) -> BarrierBundle:
    inner = build_inner_profile(pair, m, A0, sign=sign)
    rho_hat, boundary_density, in_range = build_outer_profile(pair, m, sign=sign)
    return BarrierBundle(
        m=m,
        A0=A0,
        sign=sign,
        shift=interface_shift(m, pair.nu),
        pair=pair,
        inner_values=inner,
        boundary_density=boundary_density,
        rho_hat=rho_hat,
        rho_hat_in_range=in_range,
    )


def _derivatives_1d(v: np.ndarray, h: float):
    """Centered first/second derivatives (one-sided first at the ends)."""
    d1 = np.empty_like(v)
    d1[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    d1[0] = (v[1] - v[0]) / h
    d1[-1] = (v[-1] - v[-2]) / h
    d2 = np.empty_like(v)
    d2[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h ** 2
    d2[0] = d2[1]
    d2[-1] = d2[-2]
    return d1, d2


def verify_barrier(bundle: BarrierBundle, tolerance: float = 1e-6) -> ResidualReport:
    """Evaluate the barrier inequalities cell by cell and the interface gap.

    Inner phase: the shifted profile must satisfy the stiff-equation
    inequality with diffusivity factor ``m p + nu``; its time derivative
    comes from the rescaling identity, the Laplacian from the reference
    solve scaled by ``(a_ref/a)**2``.  Outer phase: the density form of the
    inequality is evaluated with centered differences on the moving window
    (sign-equivalent to the phase form since the transform is decreasing).
    A patching annulus of three cells around ``r = a(t)`` is excluded, as is
    the artificial far-truncation cell.  The report is always produced.
    """
    pair = bundle.pair
    nu = pair.nu
    m = bundle.m
    growth = pair.growth
    orient = 1.0 if bundle.sign == "sub" else -1.0

    grid_in = pair.inner_grids[0]
    L_in = diffusion_operator(
        grid_in, BoundaryCondition.zero_flux(), BoundaryCondition.dirichlet(0.0)
    )
    xi = grid_in.centers
    u_tilde = bundle.inner_values
    lap_ref = L_in.apply(u_tilde)
    du_ref = _derivatives_1d(u_tilde, grid_in.dx)[0]
    u1 = u_tilde - bundle.shift
    p1 = pressure_of_phase(np.minimum(-u1, nu), m, nu)
    rho1 = density_of_phase(np.minimum(-u1, nu), m, nu)
    factor = m * p1 + nu
    keep_in = xi <= grid_in.x_max - 3.0 * grid_in.dx

    s = pair.s_grid.centers
    ds = pair.s_grid.dx
    keep_out = (s >= 3.0 * ds) & (s <= pair.s_grid.x_max - ds)

    inner_margins = []
    outer_margins = []
    gaps = []
    per_time = []
    n_times = len(pair.times)

    for k in range(n_times):
        a_k = float(pair.a_values[k])
        rate = pair.a_rate(k)
        scale = pair.a_ref / a_k

        # inner phase on the reference grid
        u1_t = -(rate / a_k) * xi * du_ref
        lap_r = scale ** 2 * lap_ref
        margin_in = orient * (u1_t - factor * lap_r - factor * rho1 * growth.evaluate(p1))
        inner_margins.append(margin_in[keep_in])

        # interface gradient gap (ordering carried by the pair's sign)
        grad_in = abs((9.0 * u_tilde[-1] - u_tilde[-2]) / (3.0 * grid_in.dx)) * scale
        v = bundle.rho_hat[k]
        dv0 = (9.0 * (v[0] - bundle.boundary_density) - (v[1] - bundle.boundary_density)) / (
            3.0 * ds
        )
        grad_out = abs(
            (m * bundle.boundary_density ** (m - 1.0) + nu) * dv0
        )
        gap = (grad_out - grad_in) if bundle.sign == "sub" else (grad_in - grad_out)
        gaps.append(gap)

        # outer phase (density form) at interior time samples
        if 0 < k < n_times - 1:
            dt_s = float(pair.times[k + 1] - pair.times[k - 1])
            v_t = (bundle.rho_hat[k + 1] - bundle.rho_hat[k - 1]) / dt_s
            v_s, v_ss = _derivatives_1d(v, ds)
            rho_t = v_t - rate * v_s  # fixed-radius time derivative
            lap_rho = v_ss + (pair.dimension - 1) / (s + a_k) * v_s
            w = v ** m
            w_s, w_ss = _derivatives_1d(w, ds)
            lap_w = w_ss + (pair.dimension - 1) / (s + a_k) * w_s
            residual = rho_t - lap_w - nu * lap_rho - v * growth.g0
            margin_out = -orient * residual  # sub family: residual <= 0
            outer_margins.append(margin_out[keep_out])
            per_time.append(
                {
                    "time": float(pair.times[k]),
                    "inner_min": float(np.min(margin_in[keep_in])),
                    "outer_min": float(np.min(margin_out[keep_out])),
                    "gradient_gap": float(gap),
                }
            )

    inner_all = np.concatenate(inner_margins)
    outer_all = np.concatenate(outer_margins)
    report = ResidualReport(
        tolerance=tolerance,
        inner_worst_margin=float(np.min(inner_all)),
        inner_fraction_ok=float(np.mean(inner_all >= -tolerance)),
        outer_worst_margin=float(np.min(outer_all)),
        outer_fraction_ok=float(np.mean(outer_all >= -tolerance)),
        gradient_gaps=np.asarray(gaps),
        inner_cells_checked=int(inner_all.size),
        outer_cells_checked=int(outer_all.size),
        per_time=per_time,
    )
    bundle.residual_report = report
    return report


def select_forcing_constant(
    pair: RadialProfilePair,
    m: float,
    sign: str = "sub",
    tolerance: float = 1e-6,
    exponents: range = range(-4, 9),
) -> BarrierBundle:
    """Smallest power-of-two forcing constant whose bundle certifies.

    Builds and verifies bundles for ``A0 = 2**k`` in ascending order and
    returns the first that passes; raises
    :class:`~stiff_pressure_lab.errors.ConstructionFailureError` if none do.
    """
    last = None
    for k in exponents:
        try:
            bundle = build_barrier_bundle(pair, m, 2.0 ** k, sign=sign)
        except ConstructionFailureError:
            continue
        report = verify_barrier(bundle, tolerance=tolerance)
        last = report
        if report.passed:
            return bundle
    detail = (
        f"; worst margins inner={last.inner_worst_margin:.3e} "
        f"outer={last.outer_worst_margin:.3e}" if last else ""
    )
    raise ConstructionFailureError(
        "no power-of-two forcing constant certified" + detail
    )

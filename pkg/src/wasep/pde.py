"""Deterministic solves: viscous Burgers through its linearizing transform,
the lattice mean-weight flow, derived density profiles and backward transports.

The Burgers equation is never discretized directly; its positive linearizing
transform K obeys a constant-coefficient heat equation with Robin boundary
data, and the density is recovered as (d/dx K)/(E K). The continuum space
step is tied to the lattice (nx = 4n) so lattice points j/n fall on grid
nodes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import solve_banded

from . import operators as op
from .params import DensityProfile, SystemParams

__all__ = [
    "BurgersSolution",
    "solve_burgers",
    "density_from_transform",
    "solve_mean_weights",
    "profile_log",
    "profile_ratio",
    "solve_backward_discrete",
    "solve_backward_continuum",
    "solve_gradient_ratio",
    "gradient_ratio_profile",
    "spatial_gradient",
]


@dataclass(frozen=True)
class BurgersSolution:
    """Grid solution of the viscous Burgers problem via its linear transform."""

    times: np.ndarray  # (n_t,)
    x: np.ndarray  # (nx+1,)
    transform: np.ndarray  # (n_t, nx+1), strictly positive
    density: np.ndarray  # (n_t, nx+1), values in [0,1]
    params: SystemParams

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def density_at(self, t: float) -> np.ndarray:
        """Density row at time t, linearly interpolated between stored rows."""
        return _interp_rows(self.times, self.density, t)

    def transform_at(self, t: float) -> np.ndarray:
        return _interp_rows(self.times, self.transform, t)

    def lattice_density(self, t: float, n: int) -> np.ndarray:
        """Density at lattice points j/n for j=0..n (exact nodes when nx=4n)."""
        row = self.density_at(t)
        stride = (len(self.x) - 1) // n
        if stride * n == len(self.x) - 1:
            return row[::stride]
        return np.interp(np.arange(n + 1) / n, self.x, row)

    def lattice_transform(self, t: float, n: int) -> np.ndarray:
        row = self.transform_at(t)
        stride = (len(self.x) - 1) // n
        if stride * n == len(self.x) - 1:
            return row[::stride]
        return np.interp(np.arange(n + 1) / n, self.x, row)


def _interp_rows(times: np.ndarray, rows: np.ndarray, t: float) -> np.ndarray:
    if t <= times[0]:
        return rows[0].copy()
    if t >= times[-1]:
        return rows[-1].copy()
    k = int(np.searchsorted(times, t, side="right")) - 1
    if times[k] == t:
        return rows[k].copy()
    w = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - w) * rows[k] + w * rows[k + 1]


def spatial_gradient(row: np.ndarray, h: float) -> np.ndarray:
    """Second-order gradient: central interior, one-sided at the endpoints."""
    g = np.empty_like(row)
    g[1:-1] = (row[2:] - row[:-2]) / (2.0 * h)
    g[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * h)
    g[-1] = (3.0 * row[-1] - 4.0 * row[-2] + row[-3]) / (2.0 * h)
    return g


# ---------------------------------------------------------------------------
# linearized Burgers solve
# ---------------------------------------------------------------------------

def _cn_banded_march(bands_fn, f0, times, dt_max):
    """Crank-Nicolson march emitting at each requested time.

    bands_fn(t_mid) must return (lo, di, up) of the generator at that time;
    rows are frozen (identity) wherever all three bands vanish, which is how
    Dirichlet pins are encoded.
    """
    nx = f0.shape[0]
    f = f0.copy()
    out = np.empty((len(times), nx))
    t = 0.0
    for m, t_next in enumerate(times):
        span = t_next - t
        if span > 1e-300:
            steps = max(1, int(np.ceil(span / dt_max - 1e-12)))
            dt = span / steps
            for _ in range(steps):
                lo, di, up = bands_fn(t + 0.5 * dt)
                h = 0.5 * dt
                rhs = f + h * (di * f)
                rhs[:-1] += h * up[:-1] * f[1:]
                rhs[1:] += h * lo[1:] * f[:-1]
                ab = np.zeros((3, nx))
                ab[0, 1:] = -h * up[:-1]
                ab[1, :] = 1.0 - h * di
                ab[2, :-1] = -h * lo[1:]
                f = solve_banded((1, 1), ab, rhs)
                t += dt
        out[m] = f
        t = t_next
    return out


def _transform_bands(nx: int, h: float, params: SystemParams):
    """Heat-with-drift generator rows for the transform, Robin ends via ghosts."""
    e, a, b = params.e_field, params.alpha, params.beta
    lo = np.full(nx + 1, 1.0 / h**2 + e / (2.0 * h))
    di = np.full(nx + 1, -2.0 / h**2)
    up = np.full(nx + 1, 1.0 / h**2 - e / (2.0 * h))
    lo[0] = 0.0
    di[0] = -2.0 / h**2 - 2.0 * e * a / h - e**2 * a
    up[0] = 2.0 / h**2
    lo[nx] = 2.0 / h**2
    di[nx] = -2.0 / h**2 + 2.0 * e * b / h - e**2 * b
    up[nx] = 0.0
    return lo, di, up


def solve_burgers(
    profile: DensityProfile,
    params: SystemParams,
    times: np.ndarray,
    nx: int | None = None,
    dt: float | None = None,
) -> BurgersSolution:
    """Solve the hydrodynamic equation on [0,1] through its linear transform.

    Raises if the transform loses positivity or the recovered density leaves
    [0,1] by more than 1e-6 (both signal an unstable or under-resolved run).
    """
    times = np.asarray(times, dtype=float)
    nx = 4 * params.n if nx is None else nx
    x = np.arange(nx + 1) / nx
    h = 1.0 / nx
    dt = 0.5 * h if dt is None else dt
    k0 = np.exp(params.e_field * profile.integral(x))
    bands = _transform_bands(nx, h, params)
    traj = _cn_banded_march(lambda _t: bands, k0, times, dt)
    if np.any(traj <= 0):
        raise RuntimeError("transform lost positivity; refine the grid")
    density = np.empty_like(traj)
    for m in range(len(times)):
        density[m] = density_from_transform(traj[m], h, params)
    return BurgersSolution(times=times, x=x, transform=traj, density=density, params=params)


def density_from_transform(
    row: np.ndarray, h: float, params: SystemParams, slack: float = 1e-6
) -> np.ndarray:
    """Recover the density (d/dx K)/(E K); clipped to [0,1] within `slack`."""
    rho = spatial_gradient(row, h) / (params.e_field * row)
    if np.any(rho < -slack) or np.any(rho > 1.0 + slack):
        worst = float(np.max(np.abs(rho - np.clip(rho, 0.0, 1.0))))
        raise RuntimeError(f"recovered density leaves [0,1] by {worst:.3e}")
    return np.clip(rho, 0.0, 1.0)


# ---------------------------------------------------------------------------
# lattice mean-weight flow and derived density profiles
# ---------------------------------------------------------------------------

def initial_mean_weights(profile: DensityProfile, params: SystemParams) -> np.ndarray:
    """exp of the discrete profile sums: entry j uses sum_{k<=j} rho0(k/n)."""
    n = params.n
    samples = profile(np.arange(1, n) / n)
    sums = np.concatenate([[0.0], np.cumsum(samples)])
    return np.exp(-(params.gamma / n) * sums)


def solve_mean_weights(
    profile: DensityProfile,
    params: SystemParams,
    times: np.ndarray,
    dt: float | None = None,
) -> np.ndarray:
    """Evolve the expected weight profile; rows stay positive and nondecreasing."""
    lam0 = initial_mean_weights(profile, params)
    traj = op.evolve(op.weight_operator(params), lam0, times=np.asarray(times, float), dt=dt)
    if np.any(traj <= 0):
        raise RuntimeError("mean-weight flow lost positivity")
    return traj


def profile_log(lam: np.ndarray, params: SystemParams) -> np.ndarray:
    """Density profile from log-increments of a positive weight field.

    Entry i is the value at site i+1; equals log(1+(E/n)*ratio)/log(1+E/n)
    applied to the ratio form, so it lands in [0,1] whenever the ratio does.
    """
    n, g = params.n, params.gamma
    return -(n / g) * np.log(lam[1:] / lam[:-1])


def profile_ratio(lam: np.ndarray, params: SystemParams) -> np.ndarray:
    """Density profile from weight increments relative to the left value."""
    n = params.n
    return n * (lam[1:] - lam[:-1]) / (params.e_field * lam[:-1])


# ---------------------------------------------------------------------------
# backward transports
# ---------------------------------------------------------------------------

@njit(cache=True)
def _backward_march(lam_rows, lam_t0, lam_dt, g0, t, out_taus, dt_max, n, e):
    """March dg/dtau = A(lam at time t-tau) g with Crank-Nicolson.

    lam_rows samples the weight trajectory on the uniform grid
    lam_t0 + k*lam_dt; rows 0 and n of g are pinned to their initial values.
    """
    n_out = out_taus.shape[0]
    out = np.empty((n_out, n + 1))
    g = g0.copy()
    lo = np.empty(n + 1)
    di = np.empty(n + 1)
    up = np.empty(n + 1)
    rhs = np.empty(n + 1)
    cp = np.empty(n + 1)
    den = np.empty(n + 1)
    lam = np.empty(n)
    n2 = float(n) * n
    tau = 0.0
    for m in range(n_out):
        span = out_taus[m] - tau
        if span > 1e-300:
            steps = int(np.ceil(span / dt_max - 1e-12))
            if steps < 1:
                steps = 1
            dt = span / steps
            for _ in range(steps):
                s_mid = t - (tau + 0.5 * dt)
                pos = (s_mid - lam_t0) / lam_dt
                k = int(pos)
                if k < 0:
                    k = 0
                if k > lam_rows.shape[0] - 2:
                    k = lam_rows.shape[0] - 2
                w = pos - k
                for j in range(n):
                    lam[j] = (1.0 - w) * lam_rows[k, j] + w * lam_rows[k + 1, j]
                lo[0] = 0.0
                di[0] = 0.0
                up[0] = 0.0
                lo[n] = 0.0
                di[n] = 0.0
                up[n] = 0.0
                for j in range(1, n):
                    theta = n * (lam[j] - lam[j - 1]) / (e * lam[j - 1])
                    c_plus = e * (1.0 - theta) / (1.0 + (e / n) * theta)
                    c_minus = e * theta
                    lo[j] = n2 + n * c_minus
                    di[j] = -2.0 * n2 - n * (c_plus + c_minus)
                    up[j] = n2 + n * c_plus
                h = 0.5 * dt
                rhs[0] = g[0]
                for j in range(1, n):
                    rhs[j] = g[j] + h * (lo[j] * g[j - 1] + di[j] * g[j] + up[j] * g[j + 1])
                rhs[n] = g[n]
                den[0] = 1.0 - h * di[0]
                cp[0] = -h * up[0] / den[0]
                for j in range(1, n + 1):
                    den[j] = (1.0 - h * di[j]) + h * lo[j] * cp[j - 1]
                    if j < n:
                        cp[j] = -h * up[j] / den[j]
                rhs[0] = rhs[0] / den[0]
                for j in range(1, n + 1):
                    rhs[j] = (rhs[j] + h * lo[j] * rhs[j - 1]) / den[j]
                g[n] = rhs[n]
                for j in range(n - 1, -1, -1):
                    g[j] = rhs[j] - cp[j] * g[j + 1]
                tau += dt
        out[m] = g
        tau = out_taus[m]
    return out


def solve_backward_discrete(
    final_values: np.ndarray,
    t: float,
    params: SystemParams,
    lam_rows: np.ndarray,
    lam_times: np.ndarray,
    out_times: np.ndarray,
    dt: float | None = None,
) -> np.ndarray:
    """Transport a terminal test function to earlier times on the lattice.

    `final_values` lives on {0..n} and must vanish at both ends; the result
    rows are indexed by `out_times` (ascending values of s in [0, t]) and
    keep zero boundary values. `lam_rows`/`lam_times` sample the mean-weight
    trajectory on a uniform time grid covering [0, t].
    """
    g_t = np.asarray(final_values, dtype=float)
    n = params.n
    if g_t.shape != (n + 1,):
        raise ValueError(f"terminal data must have length {n + 1}")
    if abs(g_t[0]) > 1e-12 or abs(g_t[n]) > 1e-12:
        raise ValueError("terminal data must vanish at both boundary sites")
    lam_times = np.asarray(lam_times, dtype=float)
    lam_dt = float(lam_times[1] - lam_times[0])
    if not np.allclose(np.diff(lam_times), lam_dt, rtol=1e-9, atol=1e-12):
        raise ValueError("mean-weight trajectory must be on a uniform time grid")
    out_times = np.asarray(out_times, dtype=float)
    taus = t - out_times[::-1]  # ascending in tau = t - s
    step = 0.25 / params.speed if dt is None else dt
    rows = _backward_march(
        np.ascontiguousarray(lam_rows, dtype=float),
        float(lam_times[0]),
        lam_dt,
        g_t,
        float(t),
        np.ascontiguousarray(taus, dtype=float),
        step,
        n,
        params.e_field,
    )
    return rows[::-1].copy()  # back to ascending s


def gradient_ratio_profile(g_row: np.ndarray, lam_row: np.ndarray, params: SystemParams) -> np.ndarray:
    """Forward gradient of a test function over the weight profile, on {0..n-1}."""
    return op.grad_plus(np.asarray(g_row, float), params.n) / np.asarray(lam_row, float)


def solve_backward_continuum(
    final_values: np.ndarray,
    t: float,
    burgers: BurgersSolution,
    out_times: np.ndarray,
    dt: float | None = None,
) -> np.ndarray:
    """Transport a terminal test function under the density-linearized drift.

    Solves the continuum dual equation with Dirichlet zero ends on the
    Burgers grid; rows are indexed by ascending s in [0, t].
    """
    x = burgers.x
    h = burgers.h
    e = burgers.params.e_field
    nx = len(x) - 1
    g_t = np.asarray(final_values, dtype=float)
    if g_t.shape != x.shape:
        raise ValueError("terminal data must live on the burgers grid")
    out_times = np.asarray(out_times, dtype=float)
    taus = t - out_times[::-1]
    step = 0.5 * h if dt is None else dt

    def bands(tau_mid):
        rho = burgers.density_at(t - tau_mid)
        drift = e * (1.0 - 2.0 * rho)
        lo = 1.0 / h**2 - drift / (2.0 * h)
        di = np.full(nx + 1, -2.0 / h**2)
        up = 1.0 / h**2 + drift / (2.0 * h)
        lo[0] = di[0] = up[0] = 0.0
        lo[nx] = di[nx] = up[nx] = 0.0
        return lo, di, up

    rows = _cn_banded_march(bands, g_t, taus, step)
    return rows[::-1].copy()


def solve_gradient_ratio(
    initial_values: np.ndarray,
    params: SystemParams,
    x: np.ndarray,
    out_times: np.ndarray,
    dt: float | None = None,
) -> np.ndarray:
    """Forward heat-with-drift flow with absorbing-tilt Robin ends.

    This is the continuum flow followed by the gradient of a transported test
    function divided by the transform; its Robin coefficients carry 1-alpha
    and 1-beta rather than the reservoir densities themselves.
    """
    x = np.asarray(x, dtype=float)
    nx = len(x) - 1
    h = float(x[1] - x[0])
    e, a, b = params.e_field, params.alpha, params.beta
    lo = np.full(nx + 1, 1.0 / h**2 - e / (2.0 * h))
    di = np.full(nx + 1, -2.0 / h**2)
    up = np.full(nx + 1, 1.0 / h**2 + e / (2.0 * h))
    lo[0] = 0.0
    di[0] = -2.0 / h**2 + 2.0 * (1.0 - a) * e / h - (1.0 - a) * e**2
    up[0] = 2.0 / h**2
    lo[nx] = 2.0 / h**2
    di[nx] = -2.0 / h**2 - 2.0 * (1.0 - b) * e / h - (1.0 - b) * e**2
    up[nx] = 0.0
    step = 0.5 * h if dt is None else dt
    return _cn_banded_march(
        lambda _t: (lo, di, up),
        np.asarray(initial_values, dtype=float),
        np.asarray(out_times, dtype=float),
        step,
    )

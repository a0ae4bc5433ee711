"""Semi-discrete lattice operators, their evolutions and functional inequalities.

Everything here acts on real vectors indexed by the bond lattice {0..n-1}
(weight operators) or the closed site lattice {0..n} (the weighted backward
operator, which pins both endpoints to zero).
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.linalg import expm, solve_banded

from .params import SystemParams

__all__ = [
    "grad_plus",
    "grad_minus",
    "laplacian",
    "weight_operator",
    "adjoint_weight_operator",
    "moment_operator",
    "reflected_walk_operator",
    "backward_operator",
    "transport_identity_residual",
    "geometric_weights",
    "weighted_inner",
    "dirichlet_form",
    "band_parts",
    "evolve",
    "expm_propagator",
    "heat_kernel",
    "kernel_mass",
    "log_sobolev_constant",
]


# ---------------------------------------------------------------------------
# finite-difference stencils
# ---------------------------------------------------------------------------

def grad_plus(f: np.ndarray, scale: float) -> np.ndarray:
    """Forward difference scale*(f[j+1]-f[j]); entry j covers j=0..len-2."""
    return scale * (f[1:] - f[:-1])


def grad_minus(f: np.ndarray, scale: float) -> np.ndarray:
    """Backward difference scale*(f[j]-f[j-1]); entry i is site j=i+1."""
    return scale * (f[1:] - f[:-1])


def laplacian(f: np.ndarray, scale: float) -> np.ndarray:
    """Second difference scale^2*(f[j+1]+f[j-1]-2f[j]); entry i is site j=i+1."""
    return scale * scale * (f[2:] + f[:-2] - 2.0 * f[1:-1])


# ---------------------------------------------------------------------------
# operator matrices
# ---------------------------------------------------------------------------

def _interior_rows(mat: np.ndarray, n: int, e: float) -> None:
    n2 = float(n) * n
    en = e * n
    for j in range(1, n - 1):
        mat[j, j - 1] = n2 + en
        mat[j, j] = -2.0 * n2 - en
        mat[j, j + 1] = n2


def weight_operator(params: SystemParams) -> np.ndarray:
    """Drift operator of the exponentiated-current variables on {0..n-1}."""
    return moment_operator(params, 1)


def moment_operator(params: SystemParams, order: int) -> np.ndarray:
    """Operator governing the order-th power of the weight variables.

    Interior rows are shared by all orders; only the reservoir rows change,
    through the coefficients
        r = n*(1+E/n)*(1 - exp(order*gamma/n)),
        s = n*(exp(-order*gamma/n) - 1),
    which both reduce to E at order 1.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    n, e = params.n, params.e_field
    n2 = float(n) * n
    en = e * n
    g_n = params.gamma / n
    r = n * params.bias * (1.0 - np.exp(order * g_n))
    s = n * (np.exp(-order * g_n) - 1.0)
    mat = np.zeros((n, n))
    _interior_rows(mat, n, e)
    mat[0, 0] = -params.alpha * n * r - n2
    mat[0, 1] = n2
    mat[n - 1, n - 2] = n2 + en
    mat[n - 1, n - 1] = params.beta * n * s - n2 - en
    return mat


def reflected_walk_operator(params: SystemParams) -> np.ndarray:
    """Weight operator with both reservoirs switched off (pure reflection)."""
    n, e = params.n, params.e_field
    n2 = float(n) * n
    en = e * n
    mat = np.zeros((n, n))
    _interior_rows(mat, n, e)
    mat[0, 0] = -n2
    mat[0, 1] = n2
    mat[n - 1, n - 2] = n2 + en
    mat[n - 1, n - 1] = -n2 - en
    return mat


def adjoint_weight_operator(params: SystemParams) -> np.ndarray:
    """Adjoint of the weight operator with respect to the counting measure."""
    n, e = params.n, params.e_field
    n2 = float(n) * n
    en = e * n
    mat = np.zeros((n, n))
    for j in range(1, n - 1):
        mat[j, j - 1] = n2
        mat[j, j] = -2.0 * n2 - en
        mat[j, j + 1] = n2 + en
    mat[0, 0] = (1.0 - params.alpha) * en - (en + n2)
    mat[0, 1] = en + n2
    mat[n - 1, n - 2] = n2
    mat[n - 1, n - 1] = -(1.0 - params.beta) * en - n2
    return mat


def backward_operator(weights: np.ndarray, params: SystemParams) -> np.ndarray:
    """Transport operator for test functions, tilted by a positive weight field.

    Acts on vectors over {0..n} and annihilates both endpoints, so evolved
    test functions keep zero boundary values.
    """
    n, e = params.n, params.e_field
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weight field must have length {n}")
    if np.any(w <= 0):
        raise ValueError("weight field must be strictly positive")
    n2 = float(n) * n
    theta = n * (w[1:] - w[:-1]) / (e * w[:-1])  # sites 1..n-1
    c_plus = e * (1.0 - theta) / (1.0 + (e / n) * theta)
    c_minus = e * theta
    mat = np.zeros((n + 1, n + 1))
    rows = np.arange(1, n)
    mat[rows, rows - 1] = n2 + n * c_minus
    mat[rows, rows] = -2.0 * n2 - n * (c_plus + c_minus)
    mat[rows, rows + 1] = n2 + n * c_plus
    return mat


def transport_identity_residual(
    g: np.ndarray, weights: np.ndarray, params: SystemParams
) -> np.ndarray:
    """Pointwise residual tying the adjoint operator to the tilted transport.

    Vanishes identically (up to rounding) for every g on {0..n} and every
    strictly positive weight field on {0..n-1}; the three evaluated terms are
    adjoint(grad g / w), (grad g) * (drift w)/w^2 and grad(transport g)/w.
    """
    n = params.n
    g = np.asarray(g, dtype=float)
    w = np.asarray(weights, dtype=float)
    dg = grad_plus(g, n)  # on {0..n-1}
    lhs = adjoint_weight_operator(params) @ (dg / w)
    lhs -= dg * (weight_operator(params) @ w) / w**2
    rhs = grad_plus(backward_operator(w, params) @ g, n) / w
    return lhs - rhs


# ---------------------------------------------------------------------------
# weighted geometry
# ---------------------------------------------------------------------------

def geometric_weights(params: SystemParams) -> np.ndarray:
    """Reference measure (1+E/n)^(-k) on {0..n-1}; decreasing from 1 to >= e^gamma."""
    return params.bias ** (-np.arange(params.n, dtype=float))


def weighted_inner(f: np.ndarray, g: np.ndarray, m: np.ndarray) -> float:
    return float(np.sum(f * g * m))


def dirichlet_form(f: np.ndarray, params: SystemParams) -> float:
    """n^2 * sum of squared increments against the geometric weights."""
    f = np.asarray(f, dtype=float)
    m = geometric_weights(params)
    return float(params.speed * np.sum((f[1:] - f[:-1]) ** 2 * m[:-1]))


# ---------------------------------------------------------------------------
# time evolution
# ---------------------------------------------------------------------------

def band_parts(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extract (lower, diag, upper) bands; rejects non-tridiagonal input."""
    if np.any(np.triu(mat, 2) != 0) or np.any(np.tril(mat, -2) != 0):
        raise ValueError("matrix is not tridiagonal")
    lo = np.concatenate([[0.0], np.diagonal(mat, -1)])
    up = np.concatenate([np.diagonal(mat, 1), [0.0]])
    return lo.copy(), np.diagonal(mat).copy(), up.copy()


@njit(cache=True)
def _cn_tridiag(lo, di, up, f0, times, dt_max):
    """Crank-Nicolson for df/dt = A f with constant tridiagonal A.

    Emits the solution at each requested time (nondecreasing, starting from
    t=0); steps inside each interval are uniform and no larger than dt_max.
    """
    n = f0.shape[0]
    n_out = times.shape[0]
    out = np.empty((n_out, n))
    f = f0.copy()
    rhs = np.empty(n)
    cp = np.empty(n)
    den = np.empty(n)
    t = 0.0
    for m in range(n_out):
        span = times[m] - t
        if span > 1e-300:
            steps = int(np.ceil(span / dt_max - 1e-12))
            if steps < 1:
                steps = 1
            dt = span / steps
            h = 0.5 * dt
            # factor I - h*A once per interval
            den[0] = 1.0 - h * di[0]
            cp[0] = -h * up[0] / den[0]
            for i in range(1, n):
                den[i] = (1.0 - h * di[i]) + h * lo[i] * cp[i - 1]
                if i < n - 1:
                    cp[i] = -h * up[i] / den[i]
            for _ in range(steps):
                rhs[0] = f[0] + h * (di[0] * f[0] + up[0] * f[1])
                for i in range(1, n - 1):
                    rhs[i] = f[i] + h * (lo[i] * f[i - 1] + di[i] * f[i] + up[i] * f[i + 1])
                rhs[n - 1] = f[n - 1] + h * (lo[n - 1] * f[n - 2] + di[n - 1] * f[n - 1])
                # Thomas solve in place
                rhs[0] = rhs[0] / den[0]
                for i in range(1, n):
                    rhs[i] = (rhs[i] + h * lo[i] * rhs[i - 1]) / den[i]
                f[n - 1] = rhs[n - 1]
                for i in range(n - 2, -1, -1):
                    f[i] = rhs[i] - cp[i] * f[i + 1]
        out[m] = f
        t = times[m]
    return out


def default_step(mat: np.ndarray) -> float:
    """Step tied to the stiffness scale (about 1/(4 n^2) for these operators)."""
    return 0.5 / float(np.max(np.abs(np.diagonal(mat))))


def evolve(
    mat: np.ndarray,
    f0: np.ndarray,
    t: float | None = None,
    times: np.ndarray | None = None,
    dt: float | None = None,
    rtol: float | None = None,
) -> np.ndarray:
    """Integrate df/dt = mat f from f0.

    Returns the state at time `t`, or the full trajectory when `times` is
    given. With `rtol` set, the step is halved until two successive
    refinements agree to that relative tolerance.
    """
    if (t is None) == (times is None):
        raise ValueError("pass exactly one of t, times")
    out_times = np.array([t], dtype=float) if times is None else np.asarray(times, dtype=float)
    if out_times.size and out_times[0] < 0:
        raise ValueError("times must be nonnegative")
    lo, di, up = band_parts(mat)
    f0 = np.asarray(f0, dtype=float)
    step = default_step(mat) if dt is None else float(dt)
    out = _cn_tridiag(lo, di, up, f0, out_times, step)
    if rtol is not None:
        scale = max(float(np.max(np.abs(f0))), 1e-300)
        for _ in range(40):
            step *= 0.5
            ref = _cn_tridiag(lo, di, up, f0, out_times, step)
            if np.max(np.abs(ref - out)) <= rtol * scale:
                out = ref
                break
            out = ref
        else:
            raise RuntimeError(f"step refinement did not reach rtol={rtol}")
    return out[0] if times is None else out


def expm_propagator(mat: np.ndarray, t: float) -> np.ndarray:
    """Exact matrix exponential e^(mat*t); the small-n evolution oracle."""
    return expm(np.asarray(mat, dtype=float) * t)


def _cn_matrix_steps(mat: np.ndarray, times: np.ndarray, dt_factor: float) -> np.ndarray:
    """Propagator e^(mat t) at each time, by banded Crank-Nicolson on columns.

    The step grows proportionally to elapsed time (the solution smooths), so
    reaching a fixed horizon costs O(log) intervals after the initial layer.
    """
    n = mat.shape[0]
    lo, di, up = band_parts(mat)
    dt0 = 0.25 / float(np.max(np.abs(di)))
    prop = np.eye(n)
    out = np.empty((times.shape[0], n, n))
    t = 0.0
    for m, t_next in enumerate(times):
        while t < t_next - 1e-300:
            dt = min(max(t / dt_factor, dt0), t_next - t)
            h = 0.5 * dt
            ab = np.zeros((3, n))
            ab[0, 1:] = -h * up[:-1]
            ab[1, :] = 1.0 - h * di
            ab[2, :-1] = -h * lo[1:]
            rhs = prop + h * (mat @ prop)
            prop = solve_banded((1, 1), ab, rhs)
            t += dt
        out[m] = prop
    return out


def heat_kernel(
    params: SystemParams,
    order: int,
    times: np.ndarray,
    dt_factor: float = 40.0,
) -> np.ndarray:
    """Fundamental solution q_t(j,k) of the order-n weight evolution.

    Row j of q[m] is the solution at times[m] started from a unit mass at j.
    All entries stay nonnegative.
    """
    times = np.asarray(times, dtype=float)
    mat = moment_operator(params, order)
    props = _cn_matrix_steps(mat, times, dt_factor)
    # column j of the propagator is the solution from a delta at j
    return np.transpose(props, (0, 2, 1))


def kernel_mass(params: SystemParams, order: int, times: np.ndarray) -> np.ndarray:
    """max_k sum_j q_t(j,k) at each time: the evolution of the constant 1."""
    mat = moment_operator(params, order)
    ones = np.ones(params.n)
    traj = evolve(mat, ones, times=np.asarray(times, dtype=float))
    return np.max(traj, axis=1)


# ---------------------------------------------------------------------------
# logarithmic Sobolev estimate
# ---------------------------------------------------------------------------

def _entropy(f: np.ndarray, m: np.ndarray) -> float:
    f2 = f * f
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(f2 > 0, f2 * np.log(f2), 0.0)
    return float(np.sum(term * m))


def log_sobolev_constant(
    params: SystemParams,
    n_starts: int = 20,
    n_probes: int = 1000,
    iters: int = 400,
    seed: int = 0,
) -> tuple[float, dict]:
    """Estimate the smallest constant bounding entropy by the Dirichlet form.

    Probes the unit sphere of the geometrically weighted l2 space with random
    draws plus projected-gradient ascent on entropy/energy from n_starts
    points; the estimate is the largest ratio found, so every probed function
    satisfies the inequality with it by construction.
    """
    n = params.n
    if n > 256:
        raise ValueError("estimate is restricted to n <= 256")
    m = geometric_weights(params)
    n2 = params.speed
    rng = np.random.default_rng(seed)

    def normalize(f):
        return f / np.sqrt(np.sum(f * f * m))

    def ratio(f):
        d = dirichlet_form(f, params)
        if d < 1e-13:
            return -np.inf
        return _entropy(f, m) / d

    best = -np.inf
    best_f = None
    for _ in range(n_probes):
        r = ratio(normalize(rng.standard_normal(n)))
        if r > best:
            best = r
    starts = [normalize(rng.standard_normal(n)) for _ in range(n_starts - n)]
    for k in range(min(n_starts, n)):
        spike = np.zeros(n)
        spike[-1 - k] = 1.0
        starts.append(normalize(spike))
    converged = True
    for f in starts:
        step = 0.1
        r_cur = ratio(f)
        for _ in range(iters):
            d = dirichlet_form(f, params)
            if d < 1e-13:
                break
            ent = _entropy(f, m)
            with np.errstate(divide="ignore", invalid="ignore"):
                g_ent = np.where(f != 0, m * (2.0 * f * np.log(f * f) + 2.0 * f), 0.0)
            g_dir = np.zeros(n)
            g_dir[:-1] += 2.0 * n2 * (f[:-1] - f[1:]) * m[:-1]
            g_dir[1:] += 2.0 * n2 * (f[1:] - f[:-1]) * m[:-1]
            grad = g_ent / d - ent * g_dir / d**2
            grad -= np.sum(grad * f * m) * f  # tangent to the sphere
            gn = np.linalg.norm(grad)
            if gn < 1e-14:
                break
            trial = normalize(f + step * grad / gn)
            r_new = ratio(trial)
            if r_new > r_cur:
                f, r_cur = trial, r_new
                step = min(step * 1.3, 1.0)
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        if r_cur > best:
            best = r_cur
            best_f = f
    info = {"converged": converged, "n_probes": n_probes, "n_starts": n_starts}
    if best_f is not None:
        info["argmax"] = best_f
    return best, info

"""Fluctuation fields paired with test functions, dual Sobolev norms, and the
limiting covariance quadrature.

Test functions are always sampled at lattice points and the discrete forward
gradient of the sampled values is used, so the summation-by-parts
decomposition of the modified density field holds identically, not just in
the limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import pde
from .params import SystemParams

__all__ = [
    "TestFunction",
    "eigen_function",
    "density_field",
    "modified_density_field",
    "current_field",
    "remainder_field",
    "spectral_norm_sq",
    "covariance_quadrature",
    "product_half_covariance",
]


@dataclass(frozen=True)
class TestFunction:
    fn: Callable[[np.ndarray], np.ndarray]
    name: str

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def lattice(self, n: int) -> np.ndarray:
        return self(np.arange(n + 1) / n)


def eigen_function(k: int) -> TestFunction:
    """k-th Dirichlet sine mode sqrt(2)*sin(k*pi*x); orthonormal on [0,1]."""
    if k < 1:
        raise ValueError("mode index must be >= 1")
    return TestFunction(fn=lambda x, k=k: np.sqrt(2.0) * np.sin(k * np.pi * x), name=f"e{k}")


def eigen_rate(k: int) -> float:
    """Decay rate (k*pi)^2 of the k-th sine mode under the Dirichlet heat flow."""
    return float((k * np.pi) ** 2)


# ---------------------------------------------------------------------------
# field evaluations
# ---------------------------------------------------------------------------

def density_field(occ: np.ndarray, reference: np.ndarray, g_lattice: np.ndarray) -> float:
    """Centered empirical density paired with a test function, scaled by 1/sqrt(n).

    `reference` holds the centering values at all lattice points j/n
    (endpoints are ignored; only interior sites carry particles).
    """
    n = len(occ) - 1
    dev = occ[1:n].astype(float) - reference[1:n]
    return float(np.sum(g_lattice[1:n] * dev) / np.sqrt(n))


def modified_density_field(
    occ: np.ndarray, interior_profile: np.ndarray, g_lattice: np.ndarray
) -> float:
    """Density field centered by an interior profile (values at sites 1..n-1)."""
    n = len(occ) - 1
    dev = occ[1:n].astype(float) - interior_profile
    return float(np.sum(g_lattice[1:n] * dev) / np.sqrt(n))


def current_field(
    xi: np.ndarray, lam: np.ndarray, g_lattice: np.ndarray, params: SystemParams
) -> float:
    """Linear-in-weights fluctuation field; the part carrying the Gaussian limit."""
    n = params.n
    dg = n * (g_lattice[1:] - g_lattice[:-1])  # forward gradient on bonds 0..n-1
    return float(np.sum(dg / (params.gamma * lam) * (xi - lam)) / np.sqrt(n))


def remainder_field(
    xi: np.ndarray, lam: np.ndarray, g_lattice: np.ndarray, params: SystemParams
) -> float:
    """Second-order remainder log(xi/lam)+1-xi/lam paired with the gradient."""
    n = params.n
    dg = n * (g_lattice[1:] - g_lattice[:-1])
    ratio = xi / lam
    bracket = np.log(ratio) + 1.0 - ratio
    return float(np.sum(dg / params.gamma * bracket) / np.sqrt(n))


def spectral_norm_sq(coeffs: np.ndarray, k: float) -> float:
    """Dual Sobolev norm squared: sum over modes of (m*pi)^(-2k) * coeff^2.

    `coeffs` holds pairings with the sine modes 1..M; truncation at M.
    """
    modes = np.arange(1, len(coeffs) + 1, dtype=float)
    return float(np.sum((modes * np.pi) ** (-2.0 * k) * np.asarray(coeffs) ** 2))


# ---------------------------------------------------------------------------
# limiting covariance
# ---------------------------------------------------------------------------

def covariance_quadrature(
    g: TestFunction,
    h: TestFunction,
    t: float,
    s: float,
    burgers: pde.BurgersSolution,
    n_quad: int = 257,
) -> float:
    """Martingale covariance 2*int_0^(t^s) int_0^1 mobility * grad(transported
    test functions) dx dr, with the mobility rho(1-rho) along the solved density.

    Symmetric and bilinear in (t,g) vs (s,h); both transports are solved on
    the burgers grid and differentiated there.
    """
    r_end = min(t, s)
    if r_end < 0:
        raise ValueError("times must be nonnegative")
    x = burgers.x
    hgrid = burgers.h
    g_rows = pde.solve_backward_continuum(g(x), t, burgers, np.linspace(0.0, r_end, n_quad))
    h_rows = pde.solve_backward_continuum(h(x), s, burgers, np.linspace(0.0, r_end, n_quad))
    r_grid = np.linspace(0.0, r_end, n_quad)
    integrand = np.empty(n_quad)
    for m, r in enumerate(r_grid):
        rho = burgers.density_at(r)
        mobility = rho * (1.0 - rho)
        gg = pde.spatial_gradient(g_rows[m], hgrid)
        gh = pde.spatial_gradient(h_rows[m], hgrid)
        integrand[m] = np.trapezoid(mobility * gg * gh, x)
    return float(2.0 * np.trapezoid(integrand, r_grid))


def product_half_covariance(g: TestFunction, h: TestFunction, n_grid: int = 4096) -> float:
    """Initial-field covariance int (1/4) g h for a density-1/2 product start."""
    x = np.linspace(0.0, 1.0, n_grid + 1)
    return float(np.trapezoid(0.25 * g(x) * h(x), x))

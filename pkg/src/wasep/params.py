"""System parameters and initial density profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    """Lattice size, drive strength and reservoir densities.

    The drive enters jump rates through the bias factor 1 + e_field/n and
    the per-site tilt gamma = -n*log(1 + e_field/n) <= 0, so that
    exp(-gamma/n) equals the bias factor exactly.
    """

    n: int
    e_field: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"lattice size must be >= 2, got {self.n}")
        if not self.e_field > 0:
            raise ValueError(f"drive strength must be positive, got {self.e_field}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0,1), got {v}")

    @property
    def gamma(self) -> float:
        return -self.n * math.log1p(self.e_field / self.n)

    @property
    def bias(self) -> float:
        """Rightward rate bias 1 + e_field/n = exp(-gamma/n)."""
        return 1.0 + self.e_field / self.n

    @property
    def speed(self) -> float:
        """Diffusive speed-up factor n^2 multiplying all rates."""
        return float(self.n) ** 2

    def sites(self) -> np.ndarray:
        """Interior sites 1..n-1."""
        return np.arange(1, self.n)

    def bonds(self) -> np.ndarray:
        """Bond indices 0..n-1; bond j couples sites j and j+1."""
        return np.arange(self.n)


@dataclass(frozen=True)
class DensityProfile:
    """An initial density rho0: [0,1] -> [0,1].

    `antiderivative`, when given, must be the exact map x -> int_0^x rho0;
    solvers fall back to numerical quadrature otherwise.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = field(default=None)

    def __post_init__(self):
        probe = self(np.linspace(0.0, 1.0, 257))
        if np.any(probe < -1e-12) or np.any(probe > 1.0 + 1e-12):
            raise ValueError(f"profile {self.name!r} leaves [0,1]")

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def lattice(self, n: int) -> np.ndarray:
        """Samples at j/n for j = 0..n."""
        return self(np.arange(n + 1) / n)

    def integral(self, x) -> np.ndarray:
        """Exact antiderivative when available, composite Simpson otherwise."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.antiderivative is not None:
            return np.asarray(self.antiderivative(x), dtype=float)
        from scipy.integrate import cumulative_simpson

        grid = np.linspace(0.0, 1.0, 4097)
        cum = np.concatenate([[0.0], cumulative_simpson(self(grid), x=grid)])
        return np.interp(x, grid, cum)

    def is_compatible(self, params: SystemParams, tol: float = 1e-12) -> bool:
        """Whether rho0 matches the reservoir densities at the endpoints."""
        v = self(np.array([0.0, 1.0]))
        return abs(v[0] - params.alpha) <= tol and abs(v[1] - params.beta) <= tol


def constant_profile(c: float) -> DensityProfile:
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"constant density must lie in [0,1], got {c}")
    return DensityProfile(
        fn=lambda x: np.full_like(x, c, dtype=float),
        name=f"constant:{c:g}",
        antiderivative=lambda x: c * x,
    )


def linear_profile(alpha: float, beta: float) -> DensityProfile:
    """Straight ramp from alpha at x=0 to beta at x=1."""
    return DensityProfile(
        fn=lambda x: alpha + (beta - alpha) * x,
        name="linear",
        antiderivative=lambda x: alpha * x + 0.5 * (beta - alpha) * x**2,
    )


def cosine_profile(alpha: float, beta: float) -> DensityProfile:
    """Smooth monotone ramp (alpha+beta)/2 + (alpha-beta)/2 * cos(pi x)."""
    mid = 0.5 * (alpha + beta)
    amp = 0.5 * (alpha - beta)
    return DensityProfile(
        fn=lambda x: mid + amp * np.cos(np.pi * x),
        name="cosine",
        antiderivative=lambda x: mid * x + amp * np.sin(np.pi * x) / np.pi,
    )


def make_profile(spec: str, alpha: float, beta: float) -> DensityProfile:
    """Parse a profile name: 'constant:c', 'linear' or 'cosine'."""
    if spec.startswith("constant"):
        _, _, tail = spec.partition(":")
        if not tail:
            raise ValueError("constant profile needs a level, e.g. constant:0.5")
        return constant_profile(float(tail))
    if spec == "linear":
        return linear_profile(alpha, beta)
    if spec == "cosine":
        return cosine_profile(alpha, beta)
    raise ValueError(f"unknown profile {spec!r}")

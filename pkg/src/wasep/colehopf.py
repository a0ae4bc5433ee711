"""Exponentiated-current (Cole-Hopf) weights derived from the bond ledger,
their exact lattice identities, and pathwise martingale accumulation.

The weight at bond j is exp(tilt*(W[j] - S0[j])) with integer current W,
integer initial particle count S0 and tilt = gamma/n, so weights are always
recomputed from exact integer exponents rather than updated multiplicatively.
"""

from __future__ import annotations

import numpy as np

from . import operators as op
from .params import SystemParams
from .process import EventLog, apply_event

__all__ = [
    "initial_sums",
    "weights_from_currents",
    "occupations_from_weights",
    "ordering_margin",
    "neighbor_residuals",
    "site_drive",
    "jump_intensity",
    "MartingaleAccumulator",
    "replay_states",
]


def initial_sums(occ0: np.ndarray) -> np.ndarray:
    """Cumulative initial particle counts: entry j is sum of sites 1..j."""
    n = len(occ0) - 1
    out = np.zeros(n, dtype=np.int64)
    out[1:] = np.cumsum(occ0[1:n].astype(np.int64))
    return out


def weights_from_currents(
    currents: np.ndarray, sums0: np.ndarray, params: SystemParams
) -> np.ndarray:
    """Positive weight vector over bonds 0..n-1 from exact integer exponents."""
    gn = params.gamma / params.n
    return np.exp(gn * (np.asarray(currents, dtype=np.int64) - sums0))


def occupations_from_weights(
    xi: np.ndarray, params: SystemParams, tol: float = 1e-6
) -> np.ndarray:
    """Invert weights back to interior occupancies (sites 1..n-1).

    Raises when an entry is farther than `tol` from {0,1}, which signals a
    corrupted ledger rather than rounding noise.
    """
    vals = -(params.n / params.gamma) * np.diff(np.log(xi))
    rounded = np.rint(vals)
    if np.any(np.abs(vals - rounded) > tol) or np.any((rounded != 0) & (rounded != 1)):
        worst = float(np.max(np.abs(vals - np.rint(vals))))
        raise ValueError(f"weights do not invert to occupancies (off by {worst:.3e})")
    return rounded.astype(np.int8)


def ordering_margin(xi: np.ndarray, params: SystemParams) -> float:
    """Largest violation of xi[j] <= xi[j+1] <= bias*xi[j]; 0 when exact."""
    low = np.max(xi[:-1] - xi[1:], initial=0.0)
    high = np.max(xi[1:] - params.bias * xi[:-1], initial=0.0)
    return float(max(low, high, 0.0))


def _ghost_pair(occ: np.ndarray, params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    n = params.n
    a = np.empty(n)
    b = np.empty(n)
    a[0] = params.alpha
    a[1:] = occ[1:n]
    b[: n - 1] = occ[1:n]
    b[n - 1] = params.beta
    return a, b


def neighbor_residuals(
    xi: np.ndarray, occ: np.ndarray, params: SystemParams
) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of the two exact increment identities along a configuration.

    right[j] = xi[j+1]-xi[j] - xi[j]*occ[j+1]*(bias-1)        (j=0..n-2)
    left[k]  = xi[k-1]-xi[k] - xi[k]*occ[k]*(1/bias-1)        (k=1..n-1)
    Both vanish identically on states reached by the dynamics.
    """
    n = params.n
    eta = occ[1:n].astype(float)
    right = xi[1:] - xi[:-1] - xi[:-1] * eta * (params.bias - 1.0)
    left = xi[:-1] - xi[1:] - xi[1:] * eta * (1.0 / params.bias - 1.0)
    return right, left


def site_drive(occ: np.ndarray, params: SystemParams) -> np.ndarray:
    """Drift coefficient E*n*(occ[j+1]-occ[j]) with reservoir ghosts at the ends."""
    a, b = _ghost_pair(occ, params)
    return params.e_field * params.n * (b - a)


def jump_intensity(occ: np.ndarray, params: SystemParams) -> np.ndarray:
    """Jump intensity (1/bias)*occ[j]*(1-occ[j+1]) + occ[j+1]*(1-occ[j]), ghosted."""
    a, b = _ghost_pair(occ, params)
    return a * (1.0 - b) / params.bias + b * (1.0 - a)


class MartingaleAccumulator:
    """Per-site martingale and quadratic variation, exact between events.

    Integrands are piecewise constant along the trajectory, so both the
    compensator integral and the quadratic variation accrue without
    quadrature error. With track_generator=True the time integral of the
    drift operator applied to the weights is accumulated as well, giving the
    residual of the linear evolution identity.
    """

    def __init__(self, params: SystemParams, occ0: np.ndarray, track_generator: bool = False):
        self.params = params
        self.occ = np.asarray(occ0, dtype=np.int8).copy()
        self.currents = np.zeros(params.n, dtype=np.int64)
        self.sums0 = initial_sums(occ0)
        self.xi0 = weights_from_currents(self.currents, self.sums0, params)
        self.xi = self.xi0.copy()
        self.t = 0.0
        self.martingale = np.zeros(params.n)
        self.quadratic_variation = np.zeros(params.n)
        self._omega = op.weight_operator(params) if track_generator else None
        self.generator_integral = np.zeros(params.n) if track_generator else None

    def _integrate_to(self, t: float) -> None:
        dt = t - self.t
        if dt < 0:
            raise ValueError("events must arrive in increasing time order")
        if dt > 0:
            drive = site_drive(self.occ, self.params)
            intensity = jump_intensity(self.occ, self.params)
            self.martingale -= self.xi * drive * dt
            self.quadratic_variation += (
                self.params.e_field**2 * self.xi**2 * intensity * dt
            )
            if self._omega is not None:
                self.generator_integral += (self._omega @ self.xi) * dt
            self.t = t

    def apply(self, time: float, bond: int, direction: int) -> None:
        self._integrate_to(time)
        apply_event(self.occ, self.currents, bond, direction)
        xi_new = weights_from_currents(self.currents, self.sums0, self.params)
        self.martingale += xi_new - self.xi
        self.xi = xi_new

    def finish(self, horizon: float) -> None:
        self._integrate_to(horizon)

    @property
    def evolution_residual(self) -> np.ndarray:
        """xi_t - xi_0 - int(drift operator applied to xi) - martingale."""
        if self.generator_integral is None:
            raise RuntimeError("accumulator was created without track_generator")
        return self.xi - self.xi0 - self.generator_integral - self.martingale


def replay_states(occ0: np.ndarray, log: EventLog, params: SystemParams):
    """Yield (time, occ, currents) after each event, starting with the initial state.

    The yielded arrays are live views of the replay state; copy to retain.
    """
    occ = np.asarray(occ0, dtype=np.int8).copy()
    currents = np.zeros(params.n, dtype=np.int64)
    yield 0.0, occ, currents
    for i in range(len(log)):
        apply_event(occ, currents, int(log.bond[i]), int(log.direction[i]))
        yield float(log.time[i]), occ, currents

"""Exact simulation of the boundary-driven biased exclusion process and a
small-system matrix-exponential oracle for its full state distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import kernels
from .params import DensityProfile, SystemParams

__all__ = [
    "replica_generator",
    "empty_configuration",
    "full_configuration",
    "sample_initial",
    "rate_table",
    "total_rate",
    "EventRecord",
    "EventLog",
    "gillespie_step",
    "TrajectorySummary",
    "simulate_trajectory",
    "state_index",
    "index_state",
    "generator_matrix",
    "exact_distribution",
    "stationary_distribution",
]

_MASK64 = (1 << 64) - 1
ORACLE_MAX_N = 12


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    """Counter-based stream keyed by (master seed, replica index)."""
    key = np.array([seed & _MASK64, replica & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _check_configuration(occ: np.ndarray, n: int) -> np.ndarray:
    occ = np.ascontiguousarray(occ, dtype=np.int8)
    if occ.shape != (n + 1,):
        raise ValueError(f"configuration must have length n+1={n + 1} (slots 0 and n unused)")
    if occ[0] != 0 or occ[n] != 0:
        raise ValueError("configuration slots 0 and n must stay 0; reservoirs live in the rates")
    if np.any((occ[1:n] != 0) & (occ[1:n] != 1)):
        raise ValueError("interior occupancies must be 0 or 1")
    return occ


def empty_configuration(params: SystemParams) -> np.ndarray:
    return np.zeros(params.n + 1, dtype=np.int8)


def full_configuration(params: SystemParams) -> np.ndarray:
    occ = np.zeros(params.n + 1, dtype=np.int8)
    occ[1 : params.n] = 1
    return occ


def sample_initial(
    profile: DensityProfile, params: SystemParams, gen: np.random.Generator
) -> np.ndarray:
    """Independent Bernoulli occupancies with site-j success rho0(j/n)."""
    n = params.n
    probs = profile(np.arange(1, n) / n)
    occ = np.zeros(n + 1, dtype=np.int8)
    occ[1:n] = (gen.random(n - 1) < probs).astype(np.int8)
    return occ


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

def rate_table(occ: np.ndarray, params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """Forward/backward jump rates per bond, reservoirs substituted at the ends.

    Bond j couples sites j and j+1; the forward channel moves mass rightward
    (a creation at site 1 for bond 0, a removal at site n-1 for bond n-1).
    """
    n = params.n
    occ = _check_configuration(occ, n)
    a = np.empty(n)
    b = np.empty(n)
    a[0] = params.alpha
    a[1:] = occ[1:n]
    b[: n - 1] = occ[1:n]
    b[n - 1] = params.beta
    fwd = params.speed * params.bias * a * (1.0 - b)
    bwd = params.speed * b * (1.0 - a)
    return fwd, bwd


def total_rate(occ: np.ndarray, params: SystemParams) -> float:
    fwd, bwd = rate_table(occ, params)
    return float(np.sum(fwd) + np.sum(bwd))


@dataclass(frozen=True)
class EventRecord:
    time: float
    bond: int
    direction: int  # +1 rightward (creation at the left wall), -1 leftward


@dataclass(frozen=True)
class EventLog:
    time: np.ndarray
    bond: np.ndarray
    direction: np.ndarray

    def __len__(self) -> int:
        return len(self.time)


def apply_event(occ: np.ndarray, currents: np.ndarray, bond: int, direction: int) -> None:
    """Flip/swap occupancies for one event and book it on the bond current."""
    n = len(currents)
    if bond == 0:
        occ[1] = 1 - occ[1]
    elif bond == n - 1:
        occ[n - 1] = 1 - occ[n - 1]
    else:
        occ[bond], occ[bond + 1] = occ[bond + 1], occ[bond]
    currents[bond] += direction


def gillespie_step(
    occ: np.ndarray,
    currents: np.ndarray,
    t: float,
    params: SystemParams,
    gen: np.random.Generator,
) -> EventRecord:
    """One exact jump: exponential waiting time, channel chosen by its rate.

    Mutates occ and currents in place and returns the executed event. This is
    the reference implementation; long trajectories go through the compiled
    path in simulate_trajectory, which samples the same law.
    """
    fwd, bwd = rate_table(occ, params)
    total = float(np.sum(fwd) + np.sum(bwd))
    if total <= 0:
        raise RuntimeError("no active channel; cannot advance")
    wait = gen.exponential(1.0) / total
    u = gen.random() * total
    cum = np.cumsum(np.concatenate([fwd, bwd]))
    k = int(np.searchsorted(cum, u, side="right"))
    if k >= 2 * len(fwd):
        k = 2 * len(fwd) - 1
    bond, direction = (k, 1) if k < len(fwd) else (k - len(fwd), -1)
    apply_event(occ, currents, bond, direction)
    return EventRecord(time=t + wait, bond=bond, direction=direction)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySummary:
    params: SystemParams
    times: np.ndarray  # observation grid
    eta: np.ndarray  # (n_obs, n+1) int8 snapshots
    currents: np.ndarray  # (n_obs, n) int64 snapshots
    final_eta: np.ndarray
    final_currents: np.ndarray
    events: EventLog | None


def simulate_trajectory(
    params: SystemParams,
    initial: np.ndarray,
    horizon: float,
    obs_times: np.ndarray | None = None,
    *,
    seed: int = 0,
    replica: int = 0,
    gen: np.random.Generator | None = None,
    record_events: bool = False,
) -> TrajectorySummary:
    """Simulate to the horizon, snapshotting the exact state at each grid time.

    The chain is piecewise constant, so snapshots involve no interpolation;
    grid times may include both endpoints. Identical (seed, params, horizon,
    grid) reproduce the trajectory bit for bit.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    n = params.n
    occ = _check_configuration(initial, n).copy()
    currents = np.zeros(n, dtype=np.int64)
    if obs_times is None:
        obs = np.array([horizon], dtype=float)
    else:
        obs = np.asarray(obs_times, dtype=float)
        if np.any(np.diff(obs) < 0) or (obs.size and (obs[0] < 0 or obs[-1] > horizon)):
            raise ValueError("observation times must be sorted within [0, horizon]")
    if gen is None:
        gen = replica_generator(seed, replica)

    eta_rows = np.empty((len(obs), n + 1), dtype=np.int8)
    cur_rows = np.empty((len(obs), n), dtype=np.int64)
    chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    cap = 4096 if record_events else 0
    t = 0.0
    stops = list(obs) + ([horizon] if (not len(obs) or obs[-1] < horizon) else [])
    row = 0
    for stop in stops:
        while True:
            ev_t = np.empty(cap, dtype=np.float64)
            ev_b = np.empty(cap, dtype=np.int64)
            ev_d = np.empty(cap, dtype=np.int8)
            t, count, full = kernels.run_segment(
                occ, currents, t, stop, params.e_field, params.alpha, params.beta,
                gen, record_events, ev_t, ev_b, ev_d,
            )
            if record_events and count:
                chunks.append((ev_t[:count].copy(), ev_b[:count].copy(), ev_d[:count].copy()))
            if not full:
                break
            cap *= 2
        if row < len(obs) and stop == obs[row]:
            while row < len(obs) and obs[row] == stop:
                eta_rows[row] = occ
                cur_rows[row] = currents
                row += 1
    log = None
    if record_events:
        if chunks:
            log = EventLog(
                time=np.concatenate([c[0] for c in chunks]),
                bond=np.concatenate([c[1] for c in chunks]),
                direction=np.concatenate([c[2] for c in chunks]),
            )
        else:
            log = EventLog(
                time=np.empty(0), bond=np.empty(0, dtype=np.int64), direction=np.empty(0, dtype=np.int8)
            )
    return TrajectorySummary(
        params=params,
        times=obs,
        eta=eta_rows,
        currents=cur_rows,
        final_eta=occ,
        final_currents=currents,
        events=log,
    )


# ---------------------------------------------------------------------------
# small-system oracle
# ---------------------------------------------------------------------------

def state_index(occ: np.ndarray, n: int) -> int:
    """Pack interior occupancies into an integer; site k maps to bit k-1."""
    idx = 0
    for k in range(1, n):
        if occ[k]:
            idx |= 1 << (k - 1)
    return idx


def index_state(idx: int, n: int) -> np.ndarray:
    occ = np.zeros(n + 1, dtype=np.int8)
    for k in range(1, n):
        occ[k] = (idx >> (k - 1)) & 1
    return occ


def _oracle_guard(params: SystemParams) -> None:
    if params.n > ORACLE_MAX_N:
        raise ValueError(
            f"exact distribution is limited to n <= {ORACLE_MAX_N}; got n={params.n}"
        )


def generator_matrix(params: SystemParams) -> np.ndarray:
    """Dense jump-rate matrix on the 2^(n-1) configurations; rows sum to zero."""
    _oracle_guard(params)
    n = params.n
    size = 1 << (n - 1)
    q = np.zeros((size, size))
    currents = np.zeros(n, dtype=np.int64)
    for s in range(size):
        occ = index_state(s, n)
        fwd, bwd = rate_table(occ, params)
        for bond in range(n):
            for rate, direction in ((fwd[bond], 1), (bwd[bond], -1)):
                if rate <= 0:
                    continue
                target = occ.copy()
                apply_event(target, currents, bond, direction)
                q[s, state_index(target, n)] += rate
                q[s, s] -= rate
    return q


def exact_distribution(params: SystemParams, p0: np.ndarray, t: float) -> np.ndarray:
    """Distribution at time t from p0, via the matrix exponential."""
    _oracle_guard(params)
    p0 = np.asarray(p0, dtype=float)
    size = 1 << (params.n - 1)
    if p0.shape != (size,):
        raise ValueError(f"initial distribution must have length {size}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    pt = p0 @ expm(generator_matrix(params) * t)
    if abs(pt.sum() - 1.0) > 1e-10:
        raise RuntimeError(f"probability mass drifted to {pt.sum()!r}")
    if np.any(pt < -1e-12):
        raise RuntimeError("negative probabilities beyond rounding")
    return np.clip(pt, 0.0, None)


def stationary_distribution(params: SystemParams) -> np.ndarray:
    """Left null vector of the generator, normalized to a probability vector."""
    _oracle_guard(params)
    q = generator_matrix(params)
    vals, vecs = np.linalg.eig(q.T)
    k = int(np.argmin(np.abs(vals)))
    pi = np.real(vecs[:, k])
    pi = np.abs(pi)
    return pi / pi.sum()


def product_distribution(params: SystemParams, profile: DensityProfile) -> np.ndarray:
    """Product-Bernoulli law on configurations, for seeding the oracle."""
    n = params.n
    probs = profile(np.arange(1, n) / n)
    size = 1 << (n - 1)
    p0 = np.ones(size)
    for s in range(size):
        occ = index_state(s, n)
        for k in range(1, n):
            p0[s] *= probs[k - 1] if occ[k] else 1.0 - probs[k - 1]
    return p0

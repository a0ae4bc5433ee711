"""Replica orchestration: deterministic per-replica streams, a worker pool
that assembles results in canonical replica order (so worker count and
scheduling cannot change any output bit), and mergeable moment summaries."""

from __future__ import annotations

import math
import multiprocessing
import os
from dataclasses import dataclass

import numpy as np

from . import colehopf, kernels
from .params import SystemParams
from .process import replica_generator

__all__ = [
    "worker_count",
    "map_replicas",
    "EnsembleSummary",
    "summarize",
    "InstrumentedRun",
    "run_instrumented_replica",
    "warm_kernels",
]


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("WASEP_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


_PAYLOAD = None


def _pool_init(payload):
    global _PAYLOAD
    _PAYLOAD = payload


def _pool_chunk(args):
    fn, seed, lo, hi = args
    return lo, fn(_PAYLOAD, seed, lo, hi)


def map_replicas(fn, payload, n_replicas: int, seed: int, workers: int | None = None,
                 chunk_size: int | None = None) -> np.ndarray:
    """Evaluate fn(payload, seed, lo, hi) -> (hi-lo, k) over all replicas.

    Replica idx must depend only on (seed, idx), so the assembled
    (n_replicas, k) array is identical for any worker count or schedule.
    Results are placed by index, giving canonical order for downstream
    reductions. A worker failure propagates and fails the whole run.
    """
    w = worker_count(workers)
    if chunk_size is None:
        chunk_size = max(1, min(256, math.ceil(n_replicas / (4 * w))))
    bounds = [(lo, min(lo + chunk_size, n_replicas)) for lo in range(0, n_replicas, chunk_size)]
    if w <= 1 or len(bounds) == 1:
        parts = [(lo, fn(payload, seed, lo, hi)) for lo, hi in bounds]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(w, initializer=_pool_init, initargs=(payload,)) as pool:
            jobs = [(fn, seed, lo, hi) for lo, hi in bounds]
            parts = list(pool.imap_unordered(_pool_chunk, jobs))
    parts.sort(key=lambda p: p[0])
    return np.concatenate([values for _, values in parts], axis=0)


# ---------------------------------------------------------------------------
# mergeable moment summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSummary:
    """Count and central moment sums m_k = sum (x - mean)^k, k = 2..4.

    Merging is commutative and associative up to float rounding; reductions
    that must be bit-reproducible fold per-replica values in index order.
    """

    count: int
    mean: float
    m2: float
    m3: float
    m4: float

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else 0.0

    @property
    def skewness(self) -> float:
        if self.m2 <= 0:
            return 0.0
        return math.sqrt(self.count) * self.m3 / self.m2**1.5

    @property
    def excess_kurtosis(self) -> float:
        if self.m2 <= 0:
            return 0.0
        return self.count * self.m4 / self.m2**2 - 3.0

    def mean_interval(self, z: float = 3.0) -> tuple[float, float]:
        half = z * self.std_error
        return self.mean - half, self.mean + half

    def merge(self, other: "EnsembleSummary") -> "EnsembleSummary":
        na, nb = self.count, other.count
        if na == 0:
            return other
        if nb == 0:
            return self
        n = na + nb
        d = other.mean - self.mean
        mean = self.mean + d * nb / n
        m2 = self.m2 + other.m2 + d**2 * na * nb / n
        m3 = (
            self.m3
            + other.m3
            + d**3 * na * nb * (na - nb) / n**2
            + 3.0 * d * (na * other.m2 - nb * self.m2) / n
        )
        m4 = (
            self.m4
            + other.m4
            + d**4 * na * nb * (na**2 - na * nb + nb**2) / n**3
            + 6.0 * d**2 * (na**2 * other.m2 + nb**2 * self.m2) / n**2
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n
        )
        return EnsembleSummary(count=n, mean=mean, m2=m2, m3=m3, m4=m4)


def summarize(values: np.ndarray) -> EnsembleSummary:
    """Summary of a 1-d sample, computed in canonical (given) order."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return EnsembleSummary(0, 0.0, 0.0, 0.0, 0.0)
    mean = float(values.mean())
    d = values - mean
    return EnsembleSummary(
        count=n,
        mean=mean,
        m2=float(np.sum(d**2)),
        m3=float(np.sum(d**3)),
        m4=float(np.sum(d**4)),
    )


# ---------------------------------------------------------------------------
# instrumented replica driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstrumentedRun:
    """Per-observation snapshots of one replica.

    qv and drift are the cumulative exact integrals int weight^2*intensity
    and int weight*drive per site (no field-strength factors applied);
    minexp holds the running minimum of the integer weight exponents.
    """

    times: np.ndarray
    eta: np.ndarray  # (n_obs, n+1) int8
    currents: np.ndarray  # (n_obs, n) int64
    qv: np.ndarray  # (n_obs, n)
    drift: np.ndarray  # (n_obs, n)
    minexp: np.ndarray  # (n_obs, n) int64
    sums0: np.ndarray  # (n,) int64
    events: object | None = None


def run_instrumented_replica(
    params: SystemParams,
    occ0: np.ndarray,
    obs: np.ndarray,
    gen: np.random.Generator,
    record_events: bool = False,
    event_capacity: int | None = None,
) -> InstrumentedRun:
    """One instrumented trajectory over the observation grid."""
    from .process import EventLog  # local to avoid a cycle at import time

    n = params.n
    obs = np.asarray(obs, dtype=float)
    occ = np.asarray(occ0, dtype=np.int8).copy()
    currents = np.zeros(n, dtype=np.int64)
    sums0 = colehopf.initial_sums(occ)
    n_obs = len(obs)
    out_eta = np.empty((n_obs, n + 1), dtype=np.int8)
    out_w = np.empty((n_obs, n), dtype=np.int64)
    out_qv = np.empty((n_obs, n))
    out_dr = np.empty((n_obs, n))
    out_me = np.empty((n_obs, n), dtype=np.int64)
    if not record_events:
        kernels.run_instrumented(
            occ, currents, sums0, 0.0, obs, params.e_field, params.alpha, params.beta,
            params.gamma / n, gen, out_eta, out_w, out_qv, out_dr, out_me,
        )
        log = None
    else:
        if event_capacity is None:
            # total rate is bounded by n^3*(1+bias); double that plus padding
            horizon = float(obs[-1]) if len(obs) else 0.0
            event_capacity = int(2.0 * n**3 * (1.0 + params.bias) * horizon) + 4096
        ev_t = np.empty(event_capacity, dtype=np.float64)
        ev_b = np.empty(event_capacity, dtype=np.int64)
        ev_d = np.empty(event_capacity, dtype=np.int8)
        count = kernels.run_instrumented(
            occ, currents, sums0, 0.0, obs, params.e_field, params.alpha,
            params.beta, params.gamma / n, gen, out_eta, out_w, out_qv, out_dr,
            out_me, True, ev_t, ev_b, ev_d,
        )
        if count < 0:
            raise RuntimeError("event buffer overflow; pass a larger event_capacity")
        log = EventLog(
            time=ev_t[:count].copy(), bond=ev_b[:count].copy(), direction=ev_d[:count].copy()
        )
    return InstrumentedRun(
        times=obs, eta=out_eta, currents=out_w, qv=out_qv, drift=out_dr,
        minexp=out_me, sums0=sums0, events=log,
    )


def warm_kernels() -> None:
    """Trigger jit compilation in the parent before forking workers."""
    p = SystemParams(n=4, e_field=1.0, alpha=0.5, beta=0.5)
    gen = replica_generator(0, 0)
    occ = np.zeros(5, dtype=np.int8)
    cur = np.zeros(4, dtype=np.int64)
    ev_t = np.empty(16)
    ev_b = np.empty(16, dtype=np.int64)
    ev_d = np.empty(16, dtype=np.int8)
    kernels.run_segment(occ, cur, 0.0, 1e-4, p.e_field, p.alpha, p.beta, gen, False, ev_t, ev_b, ev_d)
    run_instrumented_replica(p, np.zeros(5, dtype=np.int8), np.array([1e-4]), gen)

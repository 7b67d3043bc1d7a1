"""Coin constructions for intractable weight factors.

Three families of unbiased coins feed the race:

* conversion of any [0,1]-valued unbiased estimator into a coin,
* the probability-generating-function coin over a Brownian bridge, whose
  success probability is exp((c - lam)*dt) * E[exp(-integral of phi along
  the bridge)] — the intractable factor of one-dimensional diffusion
  transition densities,
* the thinning coin for doubly stochastic Poisson likelihood factors, with
  success probability exp(-integral of the intensity).

The Poisson weight estimator (the random-weight filter's baseline) lives here
too since it shares all of the PGF coin's sampling machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    ConfigBoundViolation,
    EstimatorRangeViolation,
    InvalidParameter,
    InvalidTime,
)

_RANGE_TOL = 1e-12


@dataclass(frozen=True)
class BrownianBridge:
    """Brownian bridge pinned to ``start`` at time 0 and ``end`` at time ``length``."""

    start: float
    end: float
    length: float

    def __post_init__(self):
        if not (self.length > 0.0) or not np.isfinite(self.length):
            raise InvalidParameter("bridge length must be positive and finite")


def _as_generator(stream_or_rng) -> np.random.Generator:
    if isinstance(stream_or_rng, np.random.Generator):
        return stream_or_rng
    return stream_or_rng.generator


def bridge_sample_at(bridge: BrownianBridge, times, stream_or_rng) -> np.ndarray:
    """Exact joint draw of the bridge at interior times, returned in input order.

    Times are sorted, each point is drawn conditional on the previous one and
    the fixed endpoint, then values are mapped back to the caller's order.
    Duplicate times receive identical values.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        return np.empty(0)
    if np.any(times <= 0.0) or np.any(times >= bridge.length):
        raise InvalidTime(
            f"times must lie strictly inside (0, {bridge.length})"
        )
    order = np.argsort(times, kind="stable")
    sorted_times = times[order]
    rng = _as_generator(stream_or_rng)
    values = _bridge_rows(
        bridge.start, bridge.end, bridge.length, sorted_times[None, :], rng
    )[0]
    out = np.empty_like(values)
    out[order] = values
    return out


def _bridge_rows(x, y, length, sorted_times, rng) -> np.ndarray:
    """Sample many independent bridges at per-row sorted times, vectorized by row.

    ``sorted_times`` has shape (rows, k); each row is one bridge realization
    evaluated by sequential conditioning left to right.
    """
    rows, k = sorted_times.shape
    values = np.empty((rows, k))
    prev_t = np.zeros(rows)
    prev_w = np.full(rows, float(x), dtype=np.float64)
    z = rng.standard_normal((rows, k))
    for j in range(k):
        t = sorted_times[:, j]
        gap = length - prev_t
        dt = t - prev_t
        frac = np.divide(dt, gap, out=np.zeros_like(dt), where=gap > 0)
        mean = prev_w + frac * (y - prev_w)
        var = np.maximum(dt * (length - t), 0.0) / np.where(gap > 0, gap, 1.0)
        values[:, j] = mean + np.sqrt(var) * z[:, j]
        prev_t = t
        prev_w = values[:, j]
    return values


@dataclass(frozen=True)
class WeightEstimate:
    """A realized non-negative unbiased weight estimate."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0.0:
            raise InvalidParameter(f"weight estimate {self.value} must be finite and >= 0")


@dataclass(frozen=True)
class EstimateCoin:
    """Coin built from a [0,1]-valued unbiased estimator: P(flip=1) = E[estimate].

    Each flip consumes one fresh estimate and one uniform.
    """

    estimator: Callable[[np.random.Generator], float]
    label: str = ""

    def flip(self, rng: np.random.Generator) -> bool:
        b = float(self.estimator(rng))
        if b < -_RANGE_TOL or b > 1.0 + _RANGE_TOL:
            raise EstimatorRangeViolation(
                f"estimate {b} outside [0, 1]; the estimator is not coin-convertible"
            )
        return rng.random() < b


def coin_from_unit_estimate(
    estimator: Callable[[np.random.Generator], float], label: str = ""
) -> EstimateCoin:
    """Convert a sampler of [0,1]-valued unbiased estimates into an unbiased coin."""
    return EstimateCoin(estimator=estimator, label=label)


@dataclass(frozen=True)
class PoissonCoinConfig:
    """Poisson/PGF sampling plan for exp(-integral of phi) along a bridge.

    ``shift`` must dominate phi and ``rate`` must be at least
    ``shift - min(phi)`` so the per-point factor (shift - phi)/rate stays in
    [0, 1]; the analytic bounds are declared (not inferred) and checked both
    here and pointwise at evaluation time.
    """

    rate: float
    shift: float
    phi: Callable[[np.ndarray], np.ndarray]
    interval_length: float
    phi_min: float | None = None
    phi_max: float | None = None

    def __post_init__(self):
        if not (self.rate > 0.0):
            raise InvalidParameter("rate must be positive")
        if not (self.interval_length > 0.0):
            raise InvalidParameter("interval_length must be positive")
        if self.phi_max is not None and self.shift < self.phi_max - _RANGE_TOL:
            raise InvalidParameter("shift must dominate the declared max of phi")
        if self.phi_min is not None and self.rate < (self.shift - self.phi_min) - _RANGE_TOL:
            raise InvalidParameter("rate must cover shift minus the declared min of phi")


def _point_factors(config: PoissonCoinConfig, values: np.ndarray) -> np.ndarray:
    """(shift - phi(w)) / rate with the [0,1] bound enforced."""
    factors = (config.shift - np.asarray(config.phi(values), dtype=np.float64)) / config.rate
    if factors.size and (
        factors.min() < -_RANGE_TOL or factors.max() > 1.0 + _RANGE_TOL
    ):
        raise ConfigBoundViolation(
            "(shift - phi)/rate left [0, 1]; declared analytic bounds are wrong"
        )
    return np.clip(factors, 0.0, 1.0)


def _check_lengths(bridge: BrownianBridge, config: PoissonCoinConfig):
    if abs(bridge.length - config.interval_length) > 1e-12 * max(1.0, bridge.length):
        raise InvalidParameter(
            f"config interval {config.interval_length} != bridge length {bridge.length}"
        )


@dataclass(frozen=True)
class PgfCoin:
    """Product-of-indicators coin over a fresh Brownian bridge per flip.

    Success probability: exp((shift - rate) * dt) * E[exp(-int_0^dt phi(W_s) ds)].
    """

    bridge: BrownianBridge
    config: PoissonCoinConfig

    def flip(self, rng: np.random.Generator) -> bool:
        cfg = self.config
        dt = self.bridge.length
        kappa = rng.poisson(cfg.rate * dt)
        if kappa == 0:
            return True
        times = np.sort(rng.uniform(0.0, dt, kappa))
        values = _bridge_rows(self.bridge.start, self.bridge.end, dt, times[None, :], rng)[0]
        factors = _point_factors(cfg, values)
        return bool(np.all(rng.random(kappa) < factors))

    def flip_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. flips, batched by Poisson count for speed; same law as flip()."""
        cfg = self.config
        dt = self.bridge.length
        kappas = rng.poisson(cfg.rate * dt, size=n)
        out = np.empty(n, dtype=bool)
        out[kappas == 0] = True
        for k in np.unique(kappas[kappas > 0]):
            rows = np.flatnonzero(kappas == k)
            times = np.sort(rng.uniform(0.0, dt, (rows.size, int(k))), axis=1)
            values = _bridge_rows(self.bridge.start, self.bridge.end, dt, times, rng)
            factors = _point_factors(cfg, values)
            out[rows] = np.all(rng.random((rows.size, int(k))) < factors, axis=1)
        return out


def pgf_coin(bridge: BrownianBridge, config: PoissonCoinConfig) -> PgfCoin:
    """Coin whose mean is exp((shift-rate)*dt) * E[exp(-int phi over the bridge)]."""
    _check_lengths(bridge, config)
    return PgfCoin(bridge=bridge, config=config)


def poisson_weight_estimate(
    bridge: BrownianBridge, config: PoissonCoinConfig, stream_or_rng
) -> WeightEstimate:
    """One non-negative unbiased estimate of E[exp(-int phi over the bridge)].

    exp((rate - shift) * dt) times the product of per-point factors at a
    Poisson number of uniform bridge times.
    """
    _check_lengths(bridge, config)
    rng = _as_generator(stream_or_rng)
    dt = bridge.length
    kappa = rng.poisson(config.rate * dt)
    base = float(np.exp((config.rate - config.shift) * dt))
    if kappa == 0:
        return WeightEstimate(base)
    times = np.sort(rng.uniform(0.0, dt, kappa))
    values = _bridge_rows(bridge.start, bridge.end, dt, times[None, :], rng)[0]
    factors = _point_factors(config, values)
    return WeightEstimate(base * float(np.prod(factors)))


def poisson_weight_estimates(
    bridge: BrownianBridge, config: PoissonCoinConfig, stream_or_rng, n: int
) -> np.ndarray:
    """n i.i.d. Poisson-estimator draws, batched like PgfCoin.flip_many."""
    _check_lengths(bridge, config)
    rng = _as_generator(stream_or_rng)
    dt = bridge.length
    base = float(np.exp((config.rate - config.shift) * dt))
    kappas = rng.poisson(config.rate * dt, size=n)
    out = np.full(n, base)
    for k in np.unique(kappas[kappas > 0]):
        rows = np.flatnonzero(kappas == k)
        times = np.sort(rng.uniform(0.0, dt, (rows.size, int(k))), axis=1)
        values = _bridge_rows(bridge.start, bridge.end, dt, times, rng)
        factors = _point_factors(config, values)
        out[rows] = base * factors.prod(axis=1)
    return out


@dataclass(frozen=True)
class SampledPath:
    """A latent path on [t0, t1], evaluable (possibly by fresh sampling) at interior times.

    ``sample_at(times, rng)`` returns the path's scalar coordinate at the
    requested times; stochastic paths must return a fresh conditional draw per
    call so that coin flips stay i.i.d. Set ``deterministic=True`` when the
    evaluation is a pure function of time, which unlocks batched flipping.
    """

    t0: float
    t1: float
    sample_at: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    deterministic: bool = False

    def __post_init__(self):
        if not (self.t1 > self.t0):
            raise InvalidTime("path interval must have positive length")


@dataclass(frozen=True)
class ThinningCoin:
    """Coin with success probability exp(-int_{t0}^{t1} lambda(s) ds).

    lambda(s) = lambda_max * sigmoid(path value at s), so lambda <= lambda_max
    holds by construction; the runtime check only guards numerics.
    """

    path: SampledPath
    lambda_max: float

    def _intensities(self, times: np.ndarray, rng) -> np.ndarray:
        x = np.asarray(self.path.sample_at(times, rng), dtype=np.float64)
        lam = self.lambda_max / (1.0 + np.exp(-x))
        if lam.size and (lam.max() > self.lambda_max * (1.0 + _RANGE_TOL) or lam.min() < 0.0):
            raise ConfigBoundViolation("intensity exceeded lambda_max; numerical guard tripped")
        return lam

    def flip(self, rng: np.random.Generator) -> bool:
        span = self.path.t1 - self.path.t0
        k = rng.poisson(self.lambda_max * span)
        if k == 0:
            return True
        times = np.sort(rng.uniform(self.path.t0, self.path.t1, k))
        lam = self._intensities(times, rng)
        return bool(np.all(rng.random(k) < (self.lambda_max - lam) / self.lambda_max))

    def flip_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Batched flips; only valid for deterministic paths (shared evaluation)."""
        if not self.path.deterministic:
            return np.array([self.flip(rng) for _ in range(n)])
        span = self.path.t1 - self.path.t0
        ks = rng.poisson(self.lambda_max * span, size=n)
        out = np.empty(n, dtype=bool)
        out[ks == 0] = True
        positive = np.flatnonzero(ks > 0)
        if positive.size:
            total = int(ks[positive].sum())
            times = rng.uniform(self.path.t0, self.path.t1, total)
            lam = self._intensities(times, rng)
            accept = rng.random(total) < (self.lambda_max - lam) / self.lambda_max
            splits = np.cumsum(ks[positive])[:-1]
            out[positive] = [bool(np.all(a)) for a in np.split(accept, splits)]
        return out


def cox_thinning_coin(path: SampledPath, lambda_max: float) -> ThinningCoin:
    """Thinning coin for a sigmoid-modulated intensity along a latent path."""
    if not (lambda_max > 0.0):
        raise InvalidParameter("lambda_max must be positive")
    return ThinningCoin(path=path, lambda_max=lambda_max)

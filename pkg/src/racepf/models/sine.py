"""Partially observed sine diffusion: dX_s = sin(X_s) ds + dB_s.

The transition density over a gap dt factorizes (Girsanov / Ito) as

    f_dt(x_t | x_prev) = N(x_t; x_prev, dt) * exp(-cos x_t + cos x_prev)
                         * E[exp(-int_0^dt phi(W_s) ds)],

with phi(x) = (sin^2 x + cos x)/2 and W a Brownian bridge from x_prev to x_t.
The bridge expectation is intractable; the PGF coin from
:mod:`racepf.coins` flips it unbiasedly, and the Poisson estimator supplies
the random-weight baseline. The proposal is one Euler step,
N(x_prev + dt sin(x_prev), dt), and the computable weight constant is the
full tractable prefactor divided by that proposal density.

phi has range [-1/2, 5/8] (extrema of (1 - u^2 + u)/2 over u = cos x in
[-1, 1]), so shift = 5/8 dominates phi and rate = 9/8 = shift - min(phi)
keeps each per-point coin factor inside [0, 1] tightly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..coins import (
    BrownianBridge,
    PgfCoin,
    PoissonCoinConfig,
    poisson_weight_estimates,
)
from ..errors import InvalidParameter
from ..filter import StateSpaceModelSpec
from ..race import WeightFactorization
from ..streams import RandomStream

PHI_MIN = -0.5
PHI_MAX = 0.625


def drift(x):
    return np.sin(x)


def phi(x):
    """(drift^2 + drift')/2 for the sine drift."""
    return 0.5 * (np.sin(x) ** 2 + np.cos(x))


@dataclass(frozen=True)
class SineDiffusionParams:
    obs_sd: float = 5.0
    horizon: float = 15.0
    num_observations: int = 15
    x_init: float = 0.0
    coin_rate: float = 9.0 / 8.0
    coin_shift: float = 5.0 / 8.0
    truth_step: float = 1e-3

    def __post_init__(self):
        if self.obs_sd <= 0:
            raise InvalidParameter("obs_sd must be positive")
        if self.horizon <= 0 or self.num_observations < 1:
            raise InvalidParameter("horizon and observation count must be positive")
        if self.truth_step <= 0:
            raise InvalidParameter("truth_step must be positive")

    @property
    def dt(self) -> float:
        """Observation spacing; also the proposal's (single) Euler step size."""
        return self.horizon / self.num_observations


def coin_config(params: SineDiffusionParams, dt: float | None = None) -> PoissonCoinConfig:
    return PoissonCoinConfig(
        rate=params.coin_rate,
        shift=params.coin_shift,
        phi=phi,
        interval_length=params.dt if dt is None else dt,
        phi_min=PHI_MIN,
        phi_max=PHI_MAX,
    )


def propose_euler(params: SineDiffusionParams, x_prev: np.ndarray, rng) -> np.ndarray:
    dt = params.dt
    x_prev = np.asarray(x_prev, dtype=np.float64)
    return x_prev + dt * np.sin(x_prev) + math.sqrt(dt) * rng.standard_normal(x_prev.shape)


def _norm_logpdf(x, mean, var):
    return -0.5 * (np.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)


def log_weight_constant(params: SineDiffusionParams, x_prev, x_prop, y) -> np.ndarray:
    """log c: observation density times tractable transition prefactor over proposal density.

    The proposal density is evaluated at the proposed state; together with the
    coin mean exp((shift-rate)dt) E[exp(-int phi)] the product c*b equals the
    exact weight g(y|x_t) f_dt(x_t|x_prev) / q(x_t|x_prev).
    """
    dt = params.dt
    x_prev = np.asarray(x_prev, dtype=np.float64)
    x_prop = np.asarray(x_prop, dtype=np.float64)
    return (
        _norm_logpdf(y, x_prop, params.obs_sd**2)
        + _norm_logpdf(x_prop, x_prev, dt)
        - _norm_logpdf(x_prop, x_prev + dt * np.sin(x_prev), dt)
        - np.cos(x_prop)
        + np.cos(x_prev)
        - (params.coin_shift - params.coin_rate) * dt
    )


def factorization(
    params: SineDiffusionParams, x_prev, x_prop, y: float
) -> tuple[np.ndarray, tuple]:
    """Per-particle (constants, PGF coins) for the race."""
    constants = np.exp(log_weight_constant(params, x_prev, x_prop, y))
    cfg = coin_config(params)
    x_prev = np.atleast_1d(np.asarray(x_prev, dtype=np.float64))
    x_prop = np.atleast_1d(np.asarray(x_prop, dtype=np.float64))
    coins = tuple(
        PgfCoin(bridge=BrownianBridge(start=float(a), end=float(b), length=params.dt), config=cfg)
        for a, b in zip(x_prev, x_prop)
    )
    return np.atleast_1d(constants), coins


def weight_estimates(
    params: SineDiffusionParams, x_prev, x_prop, y: float, rng, replicates: int = 1
) -> np.ndarray:
    """Unbiased weight estimates c * b_hat with b_hat from the Poisson estimator.

    b_hat = exp((shift-rate)dt) * P_hat lies in [0,1] almost surely, so these
    are exactly the estimates the coin conversion would flip against.
    """
    constants = np.exp(log_weight_constant(params, x_prev, x_prop, y))
    cfg = coin_config(params)
    scale = math.exp((params.coin_shift - params.coin_rate) * params.dt)
    x_prev = np.atleast_1d(np.asarray(x_prev, dtype=np.float64))
    x_prop = np.atleast_1d(np.asarray(x_prop, dtype=np.float64))
    b_hat = np.empty(x_prev.shape[0])
    for i in range(x_prev.shape[0]):
        bridge = BrownianBridge(start=float(x_prev[i]), end=float(x_prop[i]), length=params.dt)
        b_hat[i] = scale * poisson_weight_estimates(bridge, cfg, rng, replicates).mean()
    return np.atleast_1d(constants) * b_hat


def build_model(params: SineDiffusionParams, observations) -> StateSpaceModelSpec:
    ys = np.asarray(observations, dtype=np.float64)
    if ys.size != params.num_observations:
        raise InvalidParameter(
            f"{ys.size} observations but params declare {params.num_observations}"
        )

    def init(n, rng):
        return np.full(n, params.x_init)

    def propose(t, prev, rng):
        return propose_euler(params, prev, rng), None

    def estimates(t, prev, proposed, aux, rng, replicates):
        return weight_estimates(params, prev, proposed, ys[t - 1], rng, replicates)

    def factor(t, prev, proposed, aux):
        constants, coins = factorization(params, prev, proposed, ys[t - 1])
        return WeightFactorization(constants=constants, coins=coins)

    return StateSpaceModelSpec(
        name="sine_diffusion",
        num_steps=ys.size,
        init=init,
        propose=propose,
        exact_weights=None,
        weight_estimates=estimates,
        factorization=factor,
    )


@dataclass(frozen=True)
class SineDataset:
    observation_times: np.ndarray
    true_states: np.ndarray
    observations: np.ndarray


def simulate_dataset(params: SineDiffusionParams, stream: RandomStream) -> SineDataset:
    """Ground truth by fine Euler discretization, observed with Gaussian noise.

    The fine step is for dataset fidelity only; the filter never sees the
    path between observation times.
    """
    rng = stream.generator
    n_fine = int(round(params.horizon / params.truth_step))
    h = params.horizon / n_fine
    sqrt_h = math.sqrt(h)
    x = params.x_init
    obs_times = params.dt * np.arange(1, params.num_observations + 1)
    true_states = np.empty(params.num_observations)
    next_obs = 0
    z = rng.standard_normal(n_fine)
    for i in range(n_fine):
        x = x + h * math.sin(x) + sqrt_h * z[i]
        t_now = (i + 1) * h
        while next_obs < obs_times.size and t_now >= obs_times[next_obs] - 1e-12:
            true_states[next_obs] = x
            next_obs += 1
    observations = true_states + params.obs_sd * rng.standard_normal(params.num_observations)
    return SineDataset(
        observation_times=obs_times, true_states=true_states, observations=observations
    )

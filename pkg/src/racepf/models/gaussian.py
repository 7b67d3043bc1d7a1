"""Linear-Gaussian state-space model with the locally optimal proposal.

Latent AR(1) chain observed through additive Gaussian noise:

    X_t = a X_{t-1} + V_t,   V_t ~ N(0, state_var),   X_1 ~ N(0, init_var)
    Y_t = X_t + W_t,         W_t ~ N(0, obs_var)

The locally optimal proposal q*(x_t | x_{t-1}, y_t) is sampled by rejection
from the state equation, and its weight p(y_t | x_{t-1}) — a Gaussian
convolution — factorizes as c * b with a single constant

    c = 1 / sqrt(2 pi obs_var)

and b the acceptance probability of the rejection step, so one accept/reject
simulation from the model is an unbiased coin for b. Everything here is also
available in closed form, which is what makes this model the calibration
ground: the same filter can run with exact weights, estimated weights, or
race resampling, against a Kalman oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameter, StoppingBudgetExceeded
from ..filter import StateSpaceModelSpec
from ..race import WeightFactorization
from ..streams import RandomStream

PROPOSAL_ATTEMPT_BUDGET = 10**6


@dataclass(frozen=True)
class GaussianSSMParams:
    a: float = 0.8
    state_var: float = 5.0
    obs_var: float = 5.0
    init_var: float = 5.0

    def __post_init__(self):
        if min(self.state_var, self.obs_var, self.init_var) <= 0:
            raise InvalidParameter("all variances must be positive")


def weight_constant(params: GaussianSSMParams) -> float:
    """The shared weight constant c = 1/sqrt(2 pi obs_var)."""
    return 1.0 / math.sqrt(2.0 * math.pi * params.obs_var)


def source_moments(params: GaussianSSMParams, x_prev: np.ndarray | None):
    """Mean/variance of the propagation source: the prior at t=1, else the transition."""
    if x_prev is None:
        return 0.0, params.init_var
    return params.a * np.asarray(x_prev, dtype=np.float64), params.state_var


def optimal_proposal_moments(params: GaussianSSMParams, x_prev, y: float):
    """Closed-form Gaussian moments of q*(x_t | x_{t-1}, y_t) — the test oracle."""
    m, v = source_moments(params, x_prev)
    var = 1.0 / (1.0 / v + 1.0 / params.obs_var)
    mean = var * (m / v + y / params.obs_var)
    return mean, var


def exact_weight(params: GaussianSSMParams, x_prev, y: float) -> np.ndarray:
    """p(y_t | x_{t-1}) = N(y; mean of source, source var + obs var); the exact weight."""
    m, v = source_moments(params, x_prev)
    total = v + params.obs_var
    return np.exp(-0.5 * (y - m) ** 2 / total) / math.sqrt(2.0 * math.pi * total)


def _acceptance(params: GaussianSSMParams, y: float, xi) :
    return np.exp(-((y - xi) ** 2) / (2.0 * params.obs_var))


def sample_locally_optimal(
    params: GaussianSSMParams,
    x_prev: np.ndarray | None,
    y: float,
    rng: np.random.Generator,
    n: int | None = None,
    attempt_budget: int = PROPOSAL_ATTEMPT_BUDGET,
) -> np.ndarray:
    """Exact q* draws by rejection: propose from the source, accept with the likelihood kernel.

    Vectorized over particles; raises StoppingBudgetExceeded if any particle
    fails to accept within ``attempt_budget`` rounds (observation impossibly
    far from the reachable states).
    """
    m, v = source_moments(params, x_prev)
    if n is None:
        n = np.shape(m)[0] if np.ndim(m) else 1
    mean = np.broadcast_to(np.asarray(m, dtype=np.float64), (n,))
    out = np.empty(n)
    pending = np.arange(n)
    sd = math.sqrt(v)
    for _ in range(attempt_budget):
        xi = mean[pending] + sd * rng.standard_normal(pending.size)
        accept = rng.random(pending.size) < _acceptance(params, y, xi)
        out[pending[accept]] = xi[accept]
        pending = pending[~accept]
        if pending.size == 0:
            return out
    raise StoppingBudgetExceeded(
        f"locally optimal proposal rejected {attempt_budget} rounds",
        draw_index=int(pending[0]),
    )


def weight_estimates(
    params: GaussianSSMParams,
    x_prev: np.ndarray | None,
    y: float,
    rng: np.random.Generator,
    n: int,
    replicates: int = 1,
) -> np.ndarray:
    """Non-negative unbiased weight estimates c * mean of exp(-(y-xi)^2 / (2 obs_var))."""
    m, v = source_moments(params, x_prev)
    mean = np.broadcast_to(np.asarray(m, dtype=np.float64), (n,))
    sd = math.sqrt(v)
    xi = mean[:, None] + sd * rng.standard_normal((n, replicates))
    return weight_constant(params) * _acceptance(params, y, xi).mean(axis=1)


@dataclass(frozen=True)
class GaussianWeightCoin:
    """One model simulation per flip: xi from the source, accept against the likelihood kernel.

    Success probability is b = E[exp(-(y-xi)^2/(2 obs_var))], so c*b equals the
    exact weight p(y | x_prev).
    """

    source_mean: float
    source_var: float
    y: float
    obs_var: float

    def flip(self, rng: np.random.Generator) -> bool:
        xi = self.source_mean + math.sqrt(self.source_var) * rng.standard_normal()
        return rng.random() < math.exp(-((self.y - xi) ** 2) / (2.0 * self.obs_var))


def weight_coin(params: GaussianSSMParams, x_prev: float | None, y: float):
    """(c, coin) for a single particle; c * E[coin] = p(y | x_prev)."""
    m, v = source_moments(params, x_prev)
    return weight_constant(params), GaussianWeightCoin(
        source_mean=float(m), source_var=float(v), y=float(y), obs_var=params.obs_var
    )


def factorization(
    params: GaussianSSMParams, x_prev: np.ndarray | None, y: float, n: int
) -> WeightFactorization:
    m, _ = source_moments(params, x_prev)
    mean = np.broadcast_to(np.asarray(m, dtype=np.float64), (n,))
    v = params.init_var if x_prev is None else params.state_var
    coins = tuple(
        GaussianWeightCoin(source_mean=float(mu), source_var=v, y=float(y), obs_var=params.obs_var)
        for mu in mean
    )
    return WeightFactorization(
        constants=np.full(n, weight_constant(params)), coins=coins
    )


def build_model(params: GaussianSSMParams, observations) -> StateSpaceModelSpec:
    """Package the model for the filter engine; all three capabilities present."""
    ys = np.asarray(observations, dtype=np.float64)

    def init(n, rng):
        return np.zeros(n)  # placeholder: step 1 proposes from the prior, not from these

    def propose(t, prev, rng):
        x_prev = None if t == 1 else prev
        return sample_locally_optimal(params, x_prev, ys[t - 1], rng, n=prev.shape[0]), None

    def exact(t, prev, proposed, aux):
        x_prev = None if t == 1 else prev
        w = exact_weight(params, x_prev, ys[t - 1])
        return np.broadcast_to(np.asarray(w, dtype=np.float64), proposed.shape).copy()

    def estimates(t, prev, proposed, aux, rng, replicates):
        x_prev = None if t == 1 else prev
        return weight_estimates(params, x_prev, ys[t - 1], rng, proposed.shape[0], replicates)

    def factor(t, prev, proposed, aux):
        x_prev = None if t == 1 else prev
        return factorization(params, x_prev, ys[t - 1], proposed.shape[0])

    return StateSpaceModelSpec(
        name="gaussian_ssm",
        num_steps=ys.size,
        init=init,
        propose=propose,
        exact_weights=exact,
        weight_estimates=estimates,
        factorization=factor,
    )


def simulate_dataset(
    params: GaussianSSMParams, num_steps: int, stream: RandomStream, x_init: float | None = None
):
    """Latent trajectory and observations; x_init=None draws X_1 from the prior."""
    rng = stream.generator
    x = np.empty(num_steps)
    x[0] = (
        math.sqrt(params.init_var) * rng.standard_normal() if x_init is None else x_init
    )
    for t in range(1, num_steps):
        x[t] = params.a * x[t - 1] + math.sqrt(params.state_var) * rng.standard_normal()
    y = x + math.sqrt(params.obs_var) * rng.standard_normal(num_steps)
    return x, y

"""Cox process with a sigmoid-squashed integrated Ornstein-Uhlenbeck intensity.

Latent 2-D state X = (position, velocity) follows

    dX_1 = X_2 dt,      dX_2 = theta X_2 dt + sigma dB_t,   theta < 0,

i.e. A = [[0, 1], [0, theta]], h = (0, sigma). The event intensity is
lambda(t) = lambda_max * sigmoid(X_1(t)). Observations are event times; over
an interval the likelihood factor is exp(-int lambda) * prod lambda(s_i),
so the computable constant is the product of intensities at the arrivals
(states sampled exactly into the particle's skeleton) and the coin is the
thinning coin for exp(-int lambda), flipped by fresh conditional path draws
between skeleton knots.

All transition quantities are closed-form:

    exp(At) = [[1, (e^{theta t} - 1)/theta], [0, e^{theta t}]]

and the transition covariance int_0^dt exp(As) h h' exp(As)' ds is evaluated
through scalar series/expm1 forms that stay accurate for both tiny and large
theta*dt (the naive matrix-conjugation expression cancels catastrophically
once e^{-theta dt} is large).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from ..coins import SampledPath, ThinningCoin, cox_thinning_coin
from ..errors import InvalidParameter, InvalidTime
from ..filter import StateSpaceModelSpec
from ..race import WeightFactorization
from ..streams import RandomStream

_SERIES_CUTOFF = 0.05


@dataclass(frozen=True)
class OUCoxParams:
    theta: float = -1.0
    sigma: float = 1.0
    lambda_max: float = 2.1
    horizon: float = 50.0
    num_intervals: int = 10
    x_init: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.theta >= 0:
            raise InvalidParameter("theta must be negative (mean-reverting velocity)")
        if self.sigma <= 0 or self.lambda_max <= 0:
            raise InvalidParameter("sigma and lambda_max must be positive")
        if self.horizon <= 0 or self.num_intervals < 1:
            raise InvalidParameter("horizon and interval count must be positive")


def transition_matrix(theta: float, dt: float) -> np.ndarray:
    """exp(A dt) in closed form."""
    e1 = math.expm1(theta * dt)
    return np.array([[1.0, e1 / theta], [0.0, e1 + 1.0]])


def _h_poly(w: float) -> float:
    # [ (e^{2w}-1)/2 - 2(e^w-1) + w ] / w^3, series-protected near 0
    if abs(w) < _SERIES_CUTOFF:
        return (
            1.0 / 3.0
            + w / 4.0
            + 7.0 * w**2 / 60.0
            + w**3 / 24.0
            + 31.0 * w**4 / 2520.0
            + w**5 / 320.0
        )
    return (0.5 * math.expm1(2.0 * w) - 2.0 * math.expm1(w) + w) / w**3


def _g_poly(w: float) -> float:
    # [ (e^{2w}-1)/2 - (e^w-1) ] / w^2, series-protected near 0
    if abs(w) < _SERIES_CUTOFF:
        return (
            0.5
            + w / 2.0
            + 7.0 * w**2 / 24.0
            + w**3 / 8.0
            + 31.0 * w**4 / 720.0
            + w**5 / 80.0
        )
    return (0.5 * math.expm1(2.0 * w) - math.expm1(w)) / w**2


def _cov_scalars(theta: float, sigma: float, dt: float) -> tuple[float, float, float]:
    w = theta * dt
    s2 = sigma * sigma
    v11 = s2 * dt**3 * _h_poly(w)
    v12 = s2 * dt**2 * _g_poly(w)
    v22 = s2 * dt * (math.expm1(2.0 * w) / (2.0 * w) if w != 0.0 else 1.0)
    return v11, v12, v22


def transition_cov(theta: float, sigma: float, dt: float) -> np.ndarray:
    """int_0^dt exp(As) h h' exp(As)' ds, the exact transition covariance."""
    v11, v12, v22 = _cov_scalars(theta, sigma, dt)
    return np.array([[v11, v12], [v12, v22]])


def ou_transition(params: OUCoxParams, x, r: float, s: float):
    """Exact Gaussian transition law of X_s given X_r = x; returns (mean, covariance)."""
    if not (s > r):
        raise InvalidTime(f"need s > r, got r={r}, s={s}")
    dt = s - r
    mean = transition_matrix(params.theta, dt) @ np.asarray(x, dtype=np.float64)
    return mean, transition_cov(params.theta, params.sigma, dt)


def _chol2(cov: np.ndarray) -> np.ndarray:
    """Cholesky of a 2x2 covariance, tolerant of a numerically zero diagonal."""
    a = math.sqrt(max(cov[0, 0], 0.0))
    b = cov[0, 1] / a if a > 0 else 0.0
    c = math.sqrt(max(cov[1, 1] - b * b, 0.0))
    return np.array([[a, 0.0], [b, c]])


def sample_transition_many(
    params: OUCoxParams, states: np.ndarray, dt: float, rng: np.random.Generator
) -> np.ndarray:
    """Exact transition draws for a block of particles over a common gap."""
    mat = transition_matrix(params.theta, dt)
    chol = _chol2(transition_cov(params.theta, params.sigma, dt))
    return states @ mat.T + rng.standard_normal(states.shape) @ chol.T


def _inv2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def bridge_moments(
    params: OUCoxParams,
    gap_left: float,
    gap_right: float,
    x_left: np.ndarray,
    x_right: np.ndarray,
):
    """Conditional law of the state between two pinned states (Markov bridge)."""
    m1 = transition_matrix(params.theta, gap_left)
    s1 = transition_cov(params.theta, params.sigma, gap_left)
    m2 = transition_matrix(params.theta, gap_right)
    s2 = transition_cov(params.theta, params.sigma, gap_right)
    s1i = _inv2(s1)
    s2i = _inv2(s2)
    precision = s1i + m2.T @ s2i @ m2
    cov = _inv2(precision)
    mean = cov @ (s1i @ (m1 @ x_left) + m2.T @ (s2i @ x_right))
    return mean, cov


def _bridge_moments_scalar(th, sg, gl, gr, lx0, lx1, rx0, rx1):
    """bridge_moments unrolled to plain floats; the coin's hot path.

    Returns (mean0, mean1, cov00, cov01, cov11); equals bridge_moments to
    rounding on the same inputs.
    """
    e1l = math.expm1(th * gl)
    mu0 = lx0 + (e1l / th) * lx1
    mu1 = (e1l + 1.0) * lx1
    a11, a12, a22 = _cov_scalars(th, sg, gl)
    det1 = a11 * a22 - a12 * a12
    p11 = a22 / det1
    p12 = -a12 / det1
    p22 = a11 / det1
    e1r = math.expm1(th * gr)
    m01 = e1r / th
    m11 = e1r + 1.0
    b11, b12, b22 = _cov_scalars(th, sg, gr)
    det2 = b11 * b22 - b12 * b12
    q11 = b22 / det2
    q12 = -b12 / det2
    q22 = b11 / det2
    g21 = m01 * q11 + m11 * q12
    g22 = m01 * q12 + m11 * q22
    j11 = p11 + q11
    j12 = p12 + q11 * m01 + q12 * m11
    j22 = p22 + m01 * g21 + m11 * g22
    detj = j11 * j22 - j12 * j12
    c00 = j22 / detj
    c01 = -j12 / detj
    c11 = j11 / detj
    r0 = p11 * mu0 + p12 * mu1 + q11 * rx0 + q12 * rx1
    r1 = p12 * mu0 + p22 * mu1 + g21 * rx0 + g22 * rx1
    return (
        c00 * r0 + c01 * r1,
        c01 * r0 + c11 * r1,
        c00,
        c01,
        c11,
    )


@dataclass(frozen=True)
class OUSkeletonPath:
    """A particle's retained path knots over one interval, conditionally resampleable.

    ``sample_at`` draws the position coordinate at sorted interior times by
    sequential bridge conditioning: each freshly sampled point becomes the
    left pin for the next one, and original knots reset the pin when crossed.
    """

    params: OUCoxParams
    knot_times: np.ndarray
    knot_states: np.ndarray

    def sample_at(self, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64)
        k = times.size
        out = np.empty(k)
        if k == 0:
            return out
        knots_t = self.knot_times.tolist()
        knots_x = self.knot_states.tolist()
        nk = len(knots_t)
        th = self.params.theta
        sg = self.params.sigma
        z = rng.standard_normal((k, 2))
        ptr = 0
        left_t = knots_t[0]
        lx0, lx1 = knots_x[0]
        for i, u in enumerate(times.tolist()):
            if u < knots_t[0] or u > knots_t[-1]:
                raise InvalidTime(f"time {u} outside path interval")
            while ptr + 1 < nk - 1 and knots_t[ptr + 1] <= u:
                ptr += 1
                left_t = knots_t[ptr]
                lx0, lx1 = knots_x[ptr]
            right_t = knots_t[ptr + 1]
            rx0, rx1 = knots_x[ptr + 1]
            gap_l = u - left_t
            gap_r = right_t - u
            if gap_l <= 0.0:
                s0, s1 = lx0, lx1
            elif gap_r <= 0.0:
                s0, s1 = rx0, rx1
            else:
                m0, m1, c00, c01, c11 = _bridge_moments_scalar(
                    th, sg, gap_l, gap_r, lx0, lx1, rx0, rx1
                )
                l00 = math.sqrt(c00) if c00 > 0.0 else 0.0
                l10 = c01 / l00 if l00 > 0.0 else 0.0
                l11 = math.sqrt(max(c11 - l10 * l10, 0.0))
                s0 = m0 + l00 * z[i, 0]
                s1 = m1 + l10 * z[i, 0] + l11 * z[i, 1]
            out[i] = s0
            left_t = u
            lx0, lx1 = s0, s1
        return out


def intensity(params: OUCoxParams, x1) -> np.ndarray:
    """lambda = lambda_max * sigmoid(position coordinate)."""
    return params.lambda_max * expit(np.asarray(x1, dtype=np.float64))


def cox_step_factorization(
    params: OUCoxParams,
    skeleton: OUSkeletonPath,
    arrivals: np.ndarray,
) -> tuple[float, ThinningCoin]:
    """(constant, coin) for one particle over one interval.

    The constant multiplies the intensity at each arrival (states already in
    the skeleton); the coin's mean is exp(-int lambda) given the skeleton.
    """
    t0 = skeleton.knot_times[0]
    t1 = skeleton.knot_times[-1]
    arrivals = np.asarray(arrivals, dtype=np.float64)
    if arrivals.size and (arrivals.min() < t0 or arrivals.max() > t1):
        raise InvalidTime("arrival outside the step interval")
    c = 1.0
    for s in arrivals:
        k = int(np.argmin(np.abs(skeleton.knot_times - s)))
        if abs(skeleton.knot_times[k] - s) > 1e-9:
            raise InvalidTime(f"arrival {s} has no matching skeleton knot")
        c *= float(intensity(params, skeleton.knot_states[k, 0]))
    path = SampledPath(t0=float(t0), t1=float(t1), sample_at=skeleton.sample_at)
    return c, cox_thinning_coin(path, params.lambda_max)


def build_model(params: OUCoxParams, arrival_times) -> StateSpaceModelSpec:
    """Package the Cox model: prior proposal, race factorization, intensity snapshots."""
    arrivals = np.sort(np.asarray(arrival_times, dtype=np.float64))
    if arrivals.size and (arrivals.min() <= 0.0 or arrivals.max() > params.horizon):
        raise InvalidTime("arrival times must lie in (0, horizon]")
    edges = np.linspace(0.0, params.horizon, params.num_intervals + 1)

    def init(n, rng):
        return np.tile(np.asarray(params.x_init, dtype=np.float64), (n, 1))

    def propose(t, prev, rng):
        t0, t1 = edges[t - 1], edges[t]
        inside = arrivals[(arrivals > t0) & (arrivals <= t1)]
        knot_times = np.concatenate(([t0], inside, [t1]))
        n = prev.shape[0]
        knot_states = np.empty((n, knot_times.size, 2))
        knot_states[:, 0] = prev
        for j in range(1, knot_times.size):
            gap = knot_times[j] - knot_times[j - 1]
            knot_states[:, j] = sample_transition_many(params, knot_states[:, j - 1], gap, rng)
        return knot_states[:, -1], (knot_times, knot_states, inside)

    def factor(t, prev, proposed, aux):
        knot_times, knot_states, inside = aux
        n = proposed.shape[0]
        constants = np.empty(n)
        coins = []
        for i in range(n):
            skel = OUSkeletonPath(
                params=params, knot_times=knot_times, knot_states=knot_states[i]
            )
            c, coin = cox_step_factorization(params, skel, inside)
            constants[i] = c
            coins.append(coin)
        return WeightFactorization(constants=constants, coins=tuple(coins))

    def snapshot(states):
        return intensity(params, states[:, 0])

    return StateSpaceModelSpec(
        name="ou_cox",
        num_steps=params.num_intervals,
        init=init,
        propose=propose,
        exact_weights=None,
        weight_estimates=None,
        factorization=factor,
        snapshot=snapshot,
    )


def true_intensity(s) -> np.ndarray:
    """The bump-plus-decay intensity used to simulate the benchmark dataset."""
    s = np.asarray(s, dtype=np.float64)
    return 2.0 * np.exp(-s / 15.0) + np.exp(-(((s - 25.0) / 10.0) ** 2))


def simulate_poisson_process(
    intensity_fn: Callable[[np.ndarray], np.ndarray],
    bound: float,
    horizon: float,
    stream: RandomStream,
) -> np.ndarray:
    """Inhomogeneous Poisson arrivals on (0, horizon] by thinning against ``bound``."""
    rng = stream.generator
    n = rng.poisson(bound * horizon)
    times = np.sort(rng.uniform(0.0, horizon, n))
    lam = np.asarray(intensity_fn(times), dtype=np.float64)
    if lam.size and lam.max() > bound * (1.0 + 1e-12):
        raise InvalidParameter("intensity exceeds its thinning bound")
    keep = rng.random(n) < lam / bound
    return times[keep]

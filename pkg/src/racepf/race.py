"""Exact multinomial sampling from constant-times-coin weight factorizations.

Given weights w_i = c_i * b_i where only the constants c_i are computable and
each b_i is available purely as an unbiased coin, the race repeatedly proposes
an index I with probability c_I / sum(c) (alias table) and flips coin I,
returning the first accepted index. The accepted index is distributed exactly
as w_i / sum(w), and the number of (proposal, flip) rounds per accepted draw
is geometric with success probability

    rho_N = sum(c_k * b_k) / sum(c_k),

which both the run-time diagnostics and the likelihood estimator rely on.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .alias import AliasTable, TrialCounter, alias_draw_fast, alias_draw_many, build_alias_table
from .errors import InsufficientDraws, InvalidParameter, InvalidWeights, StoppingBudgetExceeded
from .streams import RandomStream, ReusableGenerator

DEFAULT_FLIP_BUDGET = 10**7


@runtime_checkable
class Coin(Protocol):
    """A flippable Bernoulli variable with fixed, possibly unknown success probability.

    Flips must be i.i.d. across calls when served independent randomness.
    """

    def flip(self, rng: np.random.Generator) -> bool: ...


@dataclass(frozen=True)
class FixedProbabilityCoin:
    """Coin with analytically known success probability; the test-double workhorse."""

    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise InvalidParameter(f"coin probability {self.p} outside [0, 1]")

    def flip(self, rng: np.random.Generator) -> bool:
        return rng.random() < self.p


@dataclass(frozen=True)
class SpinCoin:
    """Fixed-probability coin that burns a wall-clock floor per flip.

    Benchmarks use it to emulate coins whose flips cost real work (bridge
    sampling, model simulation) without dragging a model into scaling runs.
    """

    p: float
    spin_seconds: float

    def flip(self, rng: np.random.Generator) -> bool:
        deadline = time.perf_counter() + self.spin_seconds
        while time.perf_counter() < deadline:
            pass
        return rng.random() < self.p


@dataclass(frozen=True)
class WeightFactorization:
    """Per-particle weight split w_i = c_i * b_i: computable constants plus coins for b_i."""

    constants: np.ndarray
    coins: tuple

    def __post_init__(self):
        constants = np.asarray(self.constants, dtype=np.float64)
        coins = tuple(self.coins)
        if constants.ndim != 1 or constants.size == 0:
            raise InvalidWeights("constants must be a non-empty 1-D vector")
        if constants.size != len(coins):
            raise InvalidWeights(
                f"{constants.size} constants but {len(coins)} coins"
            )
        if not np.all(np.isfinite(constants)) or np.any(constants < 0):
            raise InvalidWeights("constants must be finite and non-negative")
        if not np.any(constants > 0):
            raise InvalidWeights("at least one constant must be positive")
        object.__setattr__(self, "constants", constants)
        object.__setattr__(self, "coins", coins)

    @property
    def size(self) -> int:
        return self.constants.size

    def known_probabilities(self) -> np.ndarray | None:
        """b vector when every coin is a FixedProbabilityCoin, else None."""
        if all(isinstance(c, FixedProbabilityCoin) for c in self.coins):
            return np.array([c.p for c in self.coins])
        return None


@dataclass(frozen=True)
class RaceOutcome:
    """Selected indices plus the per-draw trial counts that priced them."""

    indices: np.ndarray
    trials: TrialCounter
    total_flips: int

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", indices)
        if indices.size != len(self.trials):
            raise InvalidParameter("one trial count per draw required")
        if self.total_flips != self.trials.total:
            raise InvalidParameter("total_flips must equal the sum of trial counts")


@dataclass(frozen=True)
class RhoEstimate:
    """Stopping-probability estimates from one race's trial counts."""

    naive: float
    mvue: float
    draw_count: int


def naive_rho(counts: np.ndarray) -> float:
    """1 / mean(C): consistent but biased estimator of the stopping probability."""
    return float(counts.size / counts.sum())


def mvue_rho(counts: np.ndarray) -> float:
    """(N-1) / (sum(C) - 1): minimum-variance unbiased estimator for geometric success."""
    n = counts.size
    if n < 2:
        raise InsufficientDraws("the unbiased estimator needs at least 2 draws")
    return float((n - 1) / (counts.sum() - 1))


def _race_draw(table: AliasTable, coins, rng, flip_budget: int):
    """One accepted (index, trial_count) pair; the generic scalar race loop."""
    trials = 0
    while trials < flip_budget:
        trials += 1
        i = alias_draw_fast(table, rng)
        if coins[i].flip(rng):
            return i, trials
    raise StoppingBudgetExceeded(
        f"no coin accepted within {flip_budget} flips; "
        "all effective success probabilities may be (near) zero"
    )


def race_once(
    factorization: WeightFactorization,
    table: AliasTable,
    stream: RandomStream,
    flip_budget: int = DEFAULT_FLIP_BUDGET,
) -> tuple[int, int]:
    """Run one race: returns the accepted index and the number of rounds it took.

    The accepted index has probability exactly c_i b_i / sum(c_k b_k); the
    round count is geometric with the acceptance probability rho_N. A draw
    that exceeds ``flip_budget`` rounds raises StoppingBudgetExceeded rather
    than truncating.
    """
    return _race_draw(table, factorization.coins, stream.generator, flip_budget)


def _race_chunk(factorization, table, seed, base_id, start, stop, flip_budget):
    """Race draws [start, stop); each draw j runs on substream child(j)."""
    reuse = ReusableGenerator()
    indices = np.empty(stop - start, dtype=np.int64)
    trials = np.empty(stop - start, dtype=np.int64)
    coins = factorization.coins
    base = RandomStream(seed, base_id)
    for j in range(start, stop):
        sub = base.child(j)
        rng = reuse.rekey(sub.seed, sub.stream_id)
        try:
            idx, t = _race_draw(table, coins, rng, flip_budget)
        except StoppingBudgetExceeded as exc:
            raise StoppingBudgetExceeded(str(exc), draw_index=j) from None
        indices[j - start] = idx
        trials[j - start] = t
    return indices, trials


def _race_many_fixed_b(factorization, table, draw_count, stream, flip_budget):
    """Vectorized race for analytically known coins; identical law, batch randomness."""
    b = factorization.known_probabilities()
    rng = stream.generator
    indices = np.empty(draw_count, dtype=np.int64)
    trials = np.zeros(draw_count, dtype=np.int64)
    pending = np.arange(draw_count)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > flip_budget:
            raise StoppingBudgetExceeded(
                f"no coin accepted within {flip_budget} flips",
                draw_index=int(pending[0]),
            )
        proposed = alias_draw_many(table, rng, pending.size)
        accepted = rng.random(pending.size) < b[proposed]
        done = pending[accepted]
        indices[done] = proposed[accepted]
        trials[done] = rounds
        pending = pending[~accepted]
    return indices, trials


def race_resample(
    factorization: WeightFactorization,
    draw_count: int,
    stream: RandomStream,
    workers: int = 1,
    flip_budget: int = DEFAULT_FLIP_BUDGET,
    table: AliasTable | None = None,
    vectorize: str | bool = "auto",
) -> RaceOutcome:
    """``draw_count`` i.i.d. draws from the race distribution.

    The alias table is built once (O(N)) and reused across draws. Draw j
    consumes substream ``stream.child(j)``, so the result is bitwise
    identical for any ``workers`` value: the worker pool only partitions the
    draw index range.

    With ``vectorize="auto"`` factorizations whose coins are all
    FixedProbabilityCoin take a batched path (same distribution, different
    randomness layout) regardless of ``workers``; pass ``vectorize=False``
    to force the generic per-draw path.
    """
    if draw_count < 1:
        raise InvalidParameter("draw_count must be >= 1")
    if table is None:
        table = build_alias_table(factorization.constants)

    use_vector = vectorize is True or (
        vectorize == "auto" and factorization.known_probabilities() is not None
    )
    if use_vector:
        b = factorization.known_probabilities()
        if b is None:
            raise InvalidParameter("vectorize=True requires fixed-probability coins")
        indices, trials = _race_many_fixed_b(
            factorization, table, draw_count, stream, flip_budget
        )
    elif workers <= 1:
        indices, trials = _race_chunk(
            factorization, table, stream.seed, stream.stream_id, 0, draw_count, flip_budget
        )
    else:
        bounds = np.linspace(0, draw_count, workers + 1).astype(int)
        chunks = [
            (int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a
        ]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            futures = [
                pool.submit(
                    _race_chunk,
                    factorization,
                    table,
                    stream.seed,
                    stream.stream_id,
                    a,
                    b,
                    flip_budget,
                )
                for a, b in chunks
            ]
            parts = [f.result() for f in futures]
        indices = np.concatenate([p[0] for p in parts])
        trials = np.concatenate([p[1] for p in parts])

    counter = TrialCounter(trials)
    return RaceOutcome(indices=indices, trials=counter, total_flips=counter.total)


def estimate_rho(outcome: RaceOutcome, allow_single: bool = False) -> RhoEstimate:
    """Naive and minimum-variance unbiased stopping-probability estimates.

    The MVUE is undefined for a single draw; ``allow_single=True`` reports the
    naive estimate alone (mvue set to nan) instead of raising.
    """
    counts = outcome.trials.counts
    if counts.size < 2:
        if not allow_single:
            raise InsufficientDraws(
                "need >= 2 draws for the unbiased estimator; "
                "pass allow_single=True for the naive one"
            )
        return RhoEstimate(naive=naive_rho(counts), mvue=float("nan"), draw_count=counts.size)
    return RhoEstimate(
        naive=naive_rho(counts), mvue=mvue_rho(counts), draw_count=int(counts.size)
    )


@dataclass(frozen=True)
class CltReport:
    """Empirical vs. asymptotic variances for the trial-average and MVUE CLTs."""

    replicates: int
    draws_per_replicate: int
    rho: float
    mean_flips_variance: float
    mean_flips_target: float
    mvue_variance: float
    mvue_target: float


def clt_diagnostics(
    replicates: int, N: int, rho: float, stream: RandomStream, chunk: int = 4_000_000
) -> CltReport:
    """Simulate geometric trial counts directly and check both CLT variances.

    Targets: Var[sqrt(N)(mean(C) - 1/rho)] -> (1-rho)/rho^2 and
    Var[sqrt(N)(rho_mvue - rho)] -> (1-rho)*rho^2.
    """
    if not (0.0 < rho < 1.0):
        raise InvalidParameter("rho must lie strictly inside (0, 1)")
    if N < 2:
        raise InvalidParameter("N must be >= 2")
    rng = stream.generator
    sums = np.empty(replicates, dtype=np.float64)
    rows_per_block = max(1, chunk // N)
    done = 0
    while done < replicates:
        m = min(rows_per_block, replicates - done)
        counts = rng.geometric(rho, size=(m, N))
        sums[done : done + m] = counts.sum(axis=1)
        done += m
    mean_stat = np.sqrt(N) * (sums / N - 1.0 / rho)
    mvue_stat = np.sqrt(N) * ((N - 1) / (sums - 1.0) - rho)
    return CltReport(
        replicates=replicates,
        draws_per_replicate=N,
        rho=rho,
        mean_flips_variance=float(mean_stat.var(ddof=1)),
        mean_flips_target=(1.0 - rho) / rho**2,
        mvue_variance=float(mvue_stat.var(ddof=1)),
        mvue_target=(1.0 - rho) * rho**2,
    )

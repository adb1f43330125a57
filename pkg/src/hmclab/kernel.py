"""Metropolized HMC transition kernel, lazy variant, and chain driver.

The energy difference is recorded with the fixed sign convention

    delta_h = -H(proposal) + H(start),

so positive values mean the proposal lowered the energy and the acceptance
probability is min{1, exp(delta_h)}.  MALA is the K=1 special case.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .leapfrog import PhaseState, _check_state, _step
from .targets import TargetDensity

Array = np.ndarray


@dataclass(frozen=True)
class HmcConfig:
    eta: float
    K: int
    lazy: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("step-size must be positive")
        if self.K < 1:
            raise ValueError("need at least one leapfrog step")


def chain_rng(seed: int, chain_index: int = 0) -> np.random.Generator:
    """Stream for one chain, split from (seed, chain-index).

    Streams for distinct chain indices are statistically independent and do
    not depend on how chains are scheduled across workers.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain_index,)))


def hamiltonian(target: TargetDensity, s: PhaseState) -> Array:
    """H(q, p) = f(q) + ||p||^2 / 2."""
    return target.potential(s.q) + 0.5 * (s.p * s.p).sum(axis=-1)


def acceptance_prob(delta_h: float) -> float:
    """min{1, exp(delta_h)}; NaN is treated as certain rejection."""
    if math.isnan(delta_h):
        return 0.0
    return math.exp(min(delta_h, 0.0))


@dataclass(frozen=True)
class TransitionResult:
    position: Array
    accepted: bool
    delta_h: float
    lazy_hold: bool = False
    diverged: bool = False


def hmc_transition(
    target: TargetDensity, config: HmcConfig, q: Array, rng: np.random.Generator
) -> TransitionResult:
    """One (possibly lazy) Metropolized HMC transition from position q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (target.d,):
        raise ValueError(f"position must have shape ({target.d},)")
    if config.lazy and rng.random() < 0.5:
        return TransitionResult(q, False, math.nan, lazy_hold=True)

    p = rng.standard_normal(target.d)
    g = target.gradient(q)
    h0 = target.potential(q) + 0.5 * (p * p).sum()
    q1, p1 = q, p
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.K):
            q1, g, p1 = _step(target, q1, p1, config.eta, g)
    if not _check_state(q1, p1):
        return TransitionResult(q, False, math.nan, diverged=True)
    delta_h = float(h0 - target.potential(q1) - 0.5 * (p1 * p1).sum())
    if rng.random() < acceptance_prob(delta_h):
        return TransitionResult(q1, True, delta_h)
    return TransitionResult(q, False, delta_h)


@dataclass
class ChainTrace:
    """Per-step record of one chain; positions include the start state."""

    positions: Array  # (n_steps + 1, d)
    accepted: Array  # (n_steps,) bool
    lazy_holds: Array  # (n_steps,) bool
    diverged: Array  # (n_steps,) bool
    delta_h: Array  # (n_steps,), NaN on lazy holds
    grad_evals: int
    config: HmcConfig = field(repr=False, default=None)

    @property
    def n_steps(self) -> int:
        return self.accepted.shape[0]

    @property
    def n_attempts(self) -> int:
        return int((~self.lazy_holds).sum())

    @property
    def acceptance_rate(self) -> float:
        """Mean acceptance over proposal attempts; lazy holds excluded."""
        attempts = ~self.lazy_holds
        if not attempts.any():
            return math.nan
        return float(self.accepted[attempts].mean())


def run_chain(
    target: TargetDensity,
    config: HmcConfig,
    q0: Array,
    n_steps: int,
    rng: np.random.Generator | None = None,
) -> ChainTrace:
    """n_steps transitions from q0; rng defaults to chain_rng(config.seed)."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    q0 = np.asarray(q0, dtype=float)
    if rng is None:
        rng = chain_rng(config.seed)
    positions = np.empty((n_steps + 1, target.d))
    positions[0] = q0
    accepted = np.zeros(n_steps, dtype=bool)
    lazy_holds = np.zeros(n_steps, dtype=bool)
    diverged = np.zeros(n_steps, dtype=bool)
    delta_h = np.full(n_steps, math.nan)
    q = q0
    attempts = 0
    for i in range(n_steps):
        res = hmc_transition(target, config, q, rng)
        q = res.position
        positions[i + 1] = q
        accepted[i] = res.accepted
        lazy_holds[i] = res.lazy_hold
        diverged[i] = res.diverged
        delta_h[i] = res.delta_h
        attempts += not res.lazy_hold
    return ChainTrace(
        positions, accepted, lazy_holds, diverged, delta_h,
        grad_evals=attempts * (config.K + 1), config=config,
    )


def run_chains(
    target: TargetDensity,
    config: HmcConfig,
    q0: Array,
    n_steps: int,
    n_chains: int,
) -> list[ChainTrace]:
    """Independent chains with per-chain streams split from config.seed."""
    q0 = np.asarray(q0, dtype=float)
    starts = np.broadcast_to(q0, (n_chains, target.d))
    return [
        run_chain(target, config, starts[c], n_steps, rng=chain_rng(config.seed, c))
        for c in range(n_chains)
    ]


@dataclass(frozen=True)
class BatchTransition:
    positions: Array  # (B, d)
    accepted: Array  # (B,) bool, False on holds
    delta_h: Array  # (B,), NaN on holds and diverged proposals
    holds: Array  # (B,) bool lazy holds
    diverged: Array  # (B,) bool


def batch_transition(
    target: TargetDensity,
    q: Array,
    eta: float,
    K: int,
    rng: np.random.Generator,
    lazy: bool = False,
) -> BatchTransition:
    """One transition applied to a block of chains sharing one stream.

    Vectorized driver for experiment code: statistically equivalent to
    independent chains, with all randomness drawn from the block's stream in
    a fixed order (hold coins, momenta, acceptance uniforms), so results are
    reproducible for a fixed seed.  Diverged proposals count as rejections.
    """
    from .leapfrog import leapfrog_final

    n_chains = q.shape[0]
    holds = (
        rng.random(n_chains) < 0.5
        if lazy
        else np.zeros(n_chains, dtype=bool)
    )
    p = rng.standard_normal(q.shape)
    h0 = target.potential(q) + 0.5 * (p * p).sum(axis=-1)
    q1, p1, ok = leapfrog_final(target, q, p, K, eta)
    with np.errstate(invalid="ignore", over="ignore"):
        delta_h = h0 - target.potential(q1) - 0.5 * (p1 * p1).sum(axis=-1)
        delta_h = np.where(ok, delta_h, math.nan)
        accept_prob = np.where(np.isnan(delta_h), 0.0, np.exp(np.minimum(delta_h, 0.0)))
    accepted = ~holds & (rng.random(n_chains) < accept_prob)
    new_q = np.where(accepted[:, None], q1, q)
    delta_h = np.where(holds, math.nan, delta_h)
    return BatchTransition(new_q, accepted, delta_h, holds, ~ok & ~holds)


def traces_to_csv(traces: list[ChainTrace], path: str, thin: int = 1) -> None:
    """Columns: chain, step, accepted, delta_H, q_1..q_d."""
    if thin < 1:
        raise ValueError("thinning stride must be >= 1")
    d = traces[0].positions.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["chain", "step", "accepted", "delta_H"] + [f"q_{i + 1}" for i in range(d)]
        )
        for c, trace in enumerate(traces):
            for i in range(0, trace.n_steps, thin):
                writer.writerow(
                    [c, i + 1, int(trace.accepted[i]), repr(float(trace.delta_h[i]))]
                    + [repr(float(v)) for v in trace.positions[i + 1]]
                )

"""Leapfrog integration of Hamiltonian dynamics and its momentum Jacobian.

The discrete update with step-size eta is

    q' = q + eta p - (eta^2 / 2) grad f(q)
    p' = p - (eta / 2) (grad f(q) + grad f(q'))

so a K-step trajectory costs K+1 gradient evaluations when the gradient at
the current position is carried from step to step.  The derivative of the
j-step position map with respect to the initial momentum satisfies the
recursion

    D_j = j eta I - eta^2 sum_{l<j} (j-l) H(q_l) D_l,        D_1 = eta I,

which this module runs alongside the trajectory with dense matrices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DivergedTrajectory
from .targets import TargetDensity

Array = np.ndarray

#: trajectories whose position or momentum norm exceeds this are flagged diverged
DIVERGENCE_LIMIT = 1e8


@dataclass
class PhaseState:
    """Position/momentum pair; both arrays of shape (..., d)."""

    q: Array
    p: Array

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.shape != self.p.shape:
            raise ValueError("position and momentum must have equal shapes")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase state must be finite")


@dataclass
class Trajectory:
    """States 0..K of a leapfrog run at fixed step-size."""

    states: list[PhaseState]
    eta: float

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    @property
    def final(self) -> PhaseState:
        return self.states[-1]

    def positions(self) -> Array:
        return np.stack([s.q for s in self.states])

    def momenta(self) -> Array:
        return np.stack([s.p for s in self.states])

    def to_csv(self, path: str) -> None:
        """Debug dump with columns k, q_1..q_d, p_1..p_d (single states only)."""
        if self.states[0].q.ndim != 1:
            raise ValueError("CSV dump supports unbatched trajectories only")
        d = self.states[0].q.shape[0]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["k"] + [f"q_{i + 1}" for i in range(d)] + [f"p_{i + 1}" for i in range(d)]
            )
            for k, s in enumerate(self.states):
                writer.writerow([k] + [repr(float(v)) for v in s.q] + [repr(float(v)) for v in s.p])


def _step(target: TargetDensity, q: Array, p: Array, eta: float, g: Array):
    """One leapfrog step given the cached gradient g at q; returns q', p', g'."""
    q1 = q + eta * p - 0.5 * eta**2 * g
    g1 = target.gradient(q1)
    p1 = p - 0.5 * eta * (g + g1)
    return q1, g1, p1


def _check_state(q: Array, p: Array) -> bool:
    with np.errstate(invalid="ignore"):
        return bool(
            np.all(np.isfinite(q))
            and np.all(np.isfinite(p))
            and np.linalg.norm(q) <= DIVERGENCE_LIMIT
            and np.linalg.norm(p) <= DIVERGENCE_LIMIT
        )


def leapfrog_step(target: TargetDensity, s: PhaseState, eta: float) -> PhaseState:
    """A single leapfrog step of length eta."""
    if eta <= 0:
        raise ValueError("step-size must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        q1, _, p1 = _step(target, s.q, s.p, eta, target.gradient(s.q))
    if not _check_state(q1, p1):
        raise DivergedTrajectory("leapfrog step left the trusted region")
    return PhaseState(q1, p1)


def forward_map(
    target: TargetDensity, s0: PhaseState, K: int, eta: float
) -> Trajectory:
    """K leapfrog steps from s0; exactly K+1 gradient evaluations."""
    if K < 1:
        raise ValueError("need at least one leapfrog step")
    if eta <= 0:
        raise ValueError("step-size must be positive")
    states = [s0]
    q, p = s0.q, s0.p
    g = target.gradient(q)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(K):
            q, g, p = _step(target, q, p, eta, g)
            if not _check_state(q, p):
                raise DivergedTrajectory("leapfrog trajectory left the trusted region")
            states.append(PhaseState(q, p))
    return Trajectory(states, eta)


def leapfrog_final(target: TargetDensity, q: Array, p: Array, K: int, eta: float):
    """Batched endpoint of K leapfrog steps.

    Returns (q_K, p_K, ok) where ok flags batch entries that stayed finite
    and inside the divergence guard; diverged entries hold garbage.
    """
    g = target.gradient(q)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(K):
            q, g, p = _step(target, q, p, eta, g)
        bad = ~(np.isfinite(q).all(axis=-1) & np.isfinite(p).all(axis=-1))
        bad |= (q * q).sum(axis=-1) > DIVERGENCE_LIMIT**2
        bad |= (p * p).sum(axis=-1) > DIVERGENCE_LIMIT**2
    return q, p, ~bad


def _hessian_mat(target: TargetDensity, q: Array, m: Array) -> Array:
    """H(q) @ m for m of shape (..., d, d), batched over leading axes."""
    cols = target.hessian_vec(q[..., None, :], np.swapaxes(m, -1, -2))
    return np.swapaxes(cols, -1, -2)


def momentum_jacobian(
    target: TargetDensity,
    q0: Array,
    p0: Array,
    K: int,
    eta: float,
    max_dim: int = 64,
    return_all: bool = False,
) -> Array | list[Array]:
    """Derivative of the K-step position w.r.t. the initial momentum.

    Dense (..., d, d) output; intended for overlap analysis at small d
    (raises beyond max_dim).  With return_all, gives [D_1, ..., D_K].
    """
    if K < 1:
        raise ValueError("need at least one leapfrog step")
    if target.d > max_dim:
        raise ValueError(f"dense momentum Jacobian capped at d <= {max_dim}")
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    batch = np.broadcast_shapes(q0.shape[:-1], p0.shape[:-1])
    d = target.d
    eye = np.broadcast_to(np.eye(d), batch + (d, d))

    q, p = np.broadcast_to(q0, batch + (d,)), np.broadcast_to(p0, batch + (d,))
    g = target.gradient(q)
    jac = eta * eye
    out = [jac]
    products: list[Array] = []  # H(q_l) D_l for l = 1..j-1
    for j in range(2, K + 1):
        q, g, p = _step(target, q, p, eta, g)  # now at q_{j-1}
        products.append(_hessian_mat(target, q, out[-1]))
        acc = sum((j - l) * prod for l, prod in enumerate(products, start=1))
        jac = j * eta * eye - eta**2 * acc
        out.append(jac)
    if not np.all(np.isfinite(jac)):
        raise DivergedTrajectory("Jacobian recursion left the trusted region")
    return out if return_all else out[-1]


def _rk4(target: TargetDensity, q: Array, p: Array, t: float, n: int):
    h = t / n
    for _ in range(n):
        k1q, k1p = p, -target.gradient(q)
        k2q, k2p = p + 0.5 * h * k1p, -target.gradient(q + 0.5 * h * k1q)
        k3q, k3p = p + 0.5 * h * k2p, -target.gradient(q + 0.5 * h * k2q)
        k4q, k4p = p + h * k3p, -target.gradient(q + h * k3q)
        q = q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    return q, p


def continuous_flow(
    target: TargetDensity,
    q: Array,
    p: Array,
    t: float,
    tol: float,
    max_refinements: int = 16,
):
    """Batched continuous Hamiltonian dynamics at time t.

    Classic fourth-order Runge-Kutta, doubling the step count until two
    successive refinements agree to within tol (sup norm over the batch).
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if t == 0:
        return np.array(q, dtype=float), np.array(p, dtype=float)
    n = 8
    prev = _rk4(target, q, p, t, n)
    for _ in range(max_refinements):
        n *= 2
        cur = _rk4(target, q, p, t, n)
        err = max(np.abs(cur[0] - prev[0]).max(), np.abs(cur[1] - prev[1]).max())
        if err <= tol:
            return cur
        prev = cur
    raise ConvergenceError("step halving hit its floor before meeting tol")


def continuous_reference(
    target: TargetDensity, s0: PhaseState, t: float, tol: float
) -> PhaseState:
    """High-accuracy reference solution of the continuous dynamics."""
    q, p = continuous_flow(target, s0.q, s0.p, t, tol)
    return PhaseState(q, p)

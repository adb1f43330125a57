"""Proposal density via the inverse momentum map, and proposal-overlap KL.

For a start q0, the HMC proposal is the push-forward of p ~ N(0, I) through
the K-step position map F(q0, .).  In the regime K eta sqrt(L) <= 1/4 that
map is invertible with inverse G(q0, .), and the proposal log-density at y is

    log rho(y) = log phi(G(q0, y)) - log det D2F(q0, G(q0, y)),

using det D2G = 1 / det D2F.  The KL divergence between proposals launched
from q0 and from a nearby start is estimated by Monte Carlo over p after the
same change of variables.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError, SingularJacobian
from .leapfrog import _hessian_mat, _step
from .targets import TargetDensity

Array = np.ndarray

#: density and KL work materializes dense Jacobians; analysis tool, not a
#: production path
MAX_DIM = 64


def _check_dim(target: TargetDensity) -> None:
    if target.d > MAX_DIM:
        raise ValueError(f"overlap analysis is capped at d <= {MAX_DIM}")


def _forward_with_jacobian(
    target: TargetDensity, q0: Array, p: Array, K: int, eta: float
):
    """Final position of K leapfrog steps and D2F_K, batched over p."""
    d = target.d
    eye = np.broadcast_to(np.eye(d), p.shape[:-1] + (d, d))
    q = np.broadcast_to(q0, p.shape)
    g = target.gradient(q)
    jac = eta * eye
    products = []
    for j in range(2, K + 1):
        q, g, p = _step(target, q, p, eta, g)  # position j-1
        products.append(_hessian_mat(target, q, jac))
        acc = sum((j - l) * prod for l, prod in enumerate(products, start=1))
        jac = j * eta * eye - eta**2 * acc
    q, g, p = _step(target, q, p, eta, g)
    return q, jac


def _newton_batch(
    target: TargetDensity,
    q0: Array,
    y: Array,
    K: int,
    eta: float,
    tol: float,
    max_iter: int,
    damping: bool,
):
    """Solve F(q0, p) = y for p, row by row over the batch in y."""
    p = (y - q0) / (K * eta)
    prev_rnorm = np.full(p.shape[:-1], np.inf)
    prev_p = p
    for _ in range(max_iter):
        f, jac = _forward_with_jacobian(target, q0, p, K, eta)
        r = f - y
        rnorm = np.linalg.norm(r, axis=-1)
        if np.all(rnorm <= tol):
            return p
        if damping:
            worse = rnorm > prev_rnorm
            if np.any(worse):
                # retreat halfway toward the previous iterate and retry
                p = np.where(worse[..., None], 0.5 * (p + prev_p), p)
                prev_rnorm = np.where(worse, np.inf, rnorm)
                prev_p = np.where(worse[..., None], prev_p, p)
                continue
        try:
            delta = np.linalg.solve(jac, r[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian("Newton solve hit a singular Jacobian") from exc
        prev_p, prev_rnorm = p, rnorm
        p = p - delta
    raise ConvergenceError(
        f"inverse map did not reach tol={tol} within {max_iter} Newton steps"
    )


def inverse_map(
    target: TargetDensity,
    q0: Array,
    y: Array,
    K: int,
    eta: float,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> Array:
    """The momentum p with ||F_K(q0, p) - y|| <= tol.

    Newton iteration started at p = (y - q0) / (K eta), which is nearly exact
    because D2F is within K eta / 16 of K eta I in the invertibility regime;
    steps that increase the residual are damped by half.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    _check_dim(target)
    q0 = np.asarray(q0, dtype=float)
    y = np.asarray(y, dtype=float)
    return _newton_batch(target, q0, y, K, eta, tol, max_iter, damping=True)


def _logdet(jac: Array) -> Array:
    sign, logabs = np.linalg.slogdet(jac)
    if np.any(sign <= 0):
        raise SingularJacobian("momentum Jacobian has non-positive determinant")
    return logabs


def proposal_log_density(
    target: TargetDensity,
    q0: Array,
    y: Array,
    K: int,
    eta: float,
    tol: float = 1e-10,
) -> float:
    """log of the K-step proposal density at y for a chain at q0."""
    q0 = np.asarray(q0, dtype=float)
    y = np.asarray(y, dtype=float)
    p = inverse_map(target, q0, y, K, eta, tol=tol)
    _, jac = _forward_with_jacobian(target, q0, p, K, eta)
    log_phi = -0.5 * (p * p).sum(axis=-1) - 0.5 * target.d * math.log(2.0 * math.pi)
    return log_phi - _logdet(jac)


def kl_between_proposals(
    target: TargetDensity,
    q0: Array,
    q0_tilde: Array,
    K: int,
    eta: float,
    n_mc: int,
    rng: np.random.Generator,
    tol: float = 1e-10,
    chunk_size: int = 20_000,
) -> tuple[float, float]:
    """Monte Carlo estimate of KL(P_q0 || P_q0_tilde) with its standard error.

    Each draw p ~ N(0, I) is pushed through F(q0, .) and pulled back through
    the inverse map at the other start, so the same draws serve both starts
    (common random numbers); chunks are merged by streaming mean/variance.
    """
    if n_mc < 2:
        raise ValueError("need at least two Monte Carlo draws")
    _check_dim(target)
    q0 = np.asarray(q0, dtype=float)
    q0_tilde = np.asarray(q0_tilde, dtype=float)
    n_done, mean, m2 = 0, 0.0, 0.0
    while n_done < n_mc:
        b = min(chunk_size, n_mc - n_done)
        p = rng.standard_normal((b, target.d))
        y, jac0 = _forward_with_jacobian(target, q0, p, K, eta)
        ld0 = _logdet(jac0)
        if np.allclose(q0, q0_tilde):
            p_t, ld_t = p, ld0
        else:
            p_t = _newton_batch(
                target, q0_tilde, y, K, eta, tol, max_iter=50, damping=False
            )
            _, jac_t = _forward_with_jacobian(target, q0_tilde, p_t, K, eta)
            ld_t = _logdet(jac_t)
        vals = 0.5 * ((p_t * p_t).sum(axis=-1) - (p * p).sum(axis=-1)) - ld0 + ld_t
        # Chan et al. pairwise merge of (count, mean, M2)
        b_mean = float(vals.mean())
        b_m2 = float(((vals - b_mean) ** 2).sum())
        delta = b_mean - mean
        total = n_done + b
        mean += delta * b / total
        m2 += b_m2 + delta**2 * n_done * b / total
        n_done = total
    variance = m2 / (n_done - 1)
    return mean, math.sqrt(variance / n_done)


def kl_lemma_bound(K: int, eta: float, gamma: float, L: float) -> float:
    """Stated overlap bound 1/64 + K^6 eta^6 gamma^2 L^3 / 4.

    Valid for starts separated by at most K eta / 64.  The proof's looser
    conclusion is kl_proof_form_bound.
    """
    return 1.0 / 64.0 + 0.25 * K**6 * eta**6 * gamma**2 * L**3


def kl_proof_form_bound(K: int, eta: float, gamma: float, L: float) -> float:
    """Proof-final form 1/4 + 4 K^6 eta^6 gamma^2 L^3, for separation <= K eta / 4."""
    return 0.25 + 4.0 * K**6 * eta**6 * gamma**2 * L**3

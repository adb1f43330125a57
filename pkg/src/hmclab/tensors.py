"""Multi-index norms of order-3 tensors and derivative-tensor analysis.

Three partition norms of a dense tensor A in R^(d x d x d) are supported:

    {123}    Frobenius norm, sqrt of the sum of squared entries;
    {12}{3}  sup over unit z of ||A[., ., z]||_F, computed exactly as the
             largest singular value of the (d^2, d) unfolding;
    {1}{2}{3}  the injective norm sup A[x, y, z] over unit x, y, z, which is
             NP-hard in general and is reported as a multistart lower bound.

They are ordered: {1}{2}{3} <= {12}{3} <= {123}.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .targets import TargetDensity

Array = np.ndarray


def as_tensor3(a: Array) -> Array:
    a = np.asarray(a, dtype=float)
    if a.ndim != 3 or len(set(a.shape)) != 1:
        raise ValueError("expected a dense tensor of shape (d, d, d)")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor entries must be finite")
    return a


def symmetrize(a: Array) -> Array:
    """Average over the 6 index permutations."""
    a = as_tensor3(a)
    return sum(np.transpose(a, perm) for perm in itertools.permutations(range(3))) / 6.0


def norm_frobenius_123(a: Array) -> float:
    return float(np.sqrt((as_tensor3(a) ** 2).sum()))


def norm_12_3(a: Array) -> float:
    a = as_tensor3(a)
    d = a.shape[0]
    return float(np.linalg.svd(a.reshape(d * d, d), compute_uv=False)[0])


def norm_injective_lower(
    a: Array,
    restarts: int = 20,
    rng: np.random.Generator | None = None,
    max_iter: int = 200,
    tol: float = 1e-12,
) -> float:
    """Best value of A[x, y, z] over unit vectors found by alternating ascent.

    Each restart draws fresh unit vectors from its own substream and
    cyclically replaces x, y, z by the normalized partial contraction, which
    never decreases the value.  A certified lower bound on the injective norm.
    """
    a = as_tensor3(a)
    if restarts < 1:
        raise ValueError("need at least one restart")
    if rng is None:
        rng = np.random.default_rng(0)
    best = 0.0
    for sub in rng.spawn(restarts):
        vecs = sub.standard_normal((3, a.shape[0]))
        x, y, z = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
        value = 0.0
        for _ in range(max_iter):
            x = _normalized(np.einsum("ijk,j,k->i", a, y, z), x)
            y = _normalized(np.einsum("ijk,i,k->j", a, x, z), y)
            v = np.einsum("ijk,i,j->k", a, x, y)
            z = _normalized(v, z)
            new_value = float(abs(v @ z))
            if new_value - value <= tol * max(1.0, new_value):
                value = new_value
                break
            value = new_value
        best = max(best, value)
    return best


def _normalized(v: Array, fallback: Array) -> Array:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else fallback


@dataclass(frozen=True)
class TensorNormReport:
    norm_123: float
    norm_12_3: float
    norm_1_2_3_lower: float
    partition_ordering_ok: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "norm_123": self.norm_123,
                "norm_12_3": self.norm_12_3,
                "norm_1_2_3_lower": self.norm_1_2_3_lower,
                "partition_ordering_ok": self.partition_ordering_ok,
            },
            indent=2,
        )


def tensor_report(
    a: Array, restarts: int = 20, rng: np.random.Generator | None = None
) -> TensorNormReport:
    n123 = norm_frobenius_123(a)
    n12_3 = norm_12_3(a)
    lower = norm_injective_lower(a, restarts=restarts, rng=rng)
    ok = lower <= n12_3 * (1.0 + 1e-10) and n12_3 <= n123 * (1.0 + 1e-10)
    return TensorNormReport(n123, n12_3, lower, ok)


def third_derivative_tensor(target: TargetDensity, q: Array, max_dim: int = 64) -> Array:
    """Dense grad^3 f at q, built entrywise from contraction evaluations.

    Fills A[i, j, :] = (grad^3 f)[e_i, e_j, .] over all basis pairs in one
    batched call and symmetrizes; small-dimension analysis only.
    """
    if target.d > max_dim:
        raise ValueError(f"dense third-derivative tensors capped at d <= {max_dim}")
    q = np.asarray(q, dtype=float)
    basis = np.eye(target.d)
    u = np.broadcast_to(basis[:, None, :], (target.d, target.d, target.d))
    v = np.broadcast_to(basis[None, :, :], (target.d, target.d, target.d))
    a = target.third_contract(q[None, None, :], u, v)
    return symmetrize(a)


def estimate_gamma(target: TargetDensity, sample_points: Array) -> float:
    """Empirical lower bound on the Hessian-Lipschitz coefficient gamma.

    Maximizes ||grad^3 f||_{12}{3} / L^(3/2) over the supplied points.
    """
    if target.smoothness <= 0:
        raise ValueError("target must declare positive smoothness")
    points = np.atleast_2d(np.asarray(sample_points, dtype=float))
    scale = target.smoothness**1.5
    return max(norm_12_3(third_derivative_tensor(target, q)) / scale for q in points)

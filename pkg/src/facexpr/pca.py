"""Principal component analysis with a Jacobi eigensolver.

``pca_fit`` picks between decomposing the N x N covariance directly and the
M x M Gram matrix of the centred samples (the eigenface trick) depending on
which is smaller.  Both routes are exposed through ``method`` so they can be
checked against each other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConvergenceError",
    "PcaModel",
    "sym_eigen",
    "pca_fit",
    "pca_project",
    "pca_reconstruct",
]


class ConvergenceError(RuntimeError):
    pass


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pair schedule covering every (p, q), p < q, once per sweep.

    Each round is a set of disjoint pairs, so its rotations commute and can
    be applied together.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        if ps:
            rounds.append((np.array(ps), np.array(qs)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigen(matrix, tol: float = 1e-10, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a symmetric matrix by cyclic Jacobi rotations.

    Sweeps visit every off-diagonal pair in round-robin order; a sweep is
    made of rounds of disjoint pairs that are rotated simultaneously.
    Iteration stops once every off-diagonal entry is below
    ``tol * ||S||_F`` (or ``tol`` for a zero matrix).

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        Sorted in descending order (stable for ties).
    eigenvectors : ndarray, shape (n, n)
        Orthonormal; column ``i`` belongs to ``eigenvalues[i]``.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = float(np.linalg.norm(a))
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9 * max(scale, 1.0):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * scale if scale > 0 else tol
    schedule = _round_robin(n)
    off = ~np.eye(n, dtype=bool)

    def converged():
        return n < 2 or np.max(np.abs(a[off])) < threshold

    sweeps = 0
    while not converged():
        if sweeps >= max_sweeps:
            raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
        for p, q in schedule:
            apq = a[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            app, aqq = a[p, p] - t * apq, a[q, q] + t * apq
            # A <- J^T A J with J_pp = J_qq = c, J_pq = s, J_qp = -s
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * cp - s * cq
            a[:, q] = s * cp + c * cq
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            a[p, q] = 0.0
            a[q, p] = 0.0
            # the closed-form diagonal update is exact where the product form rounds
            a[p, p] = app
            a[q, q] = aqq
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        sweeps += 1

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]


def _sign_normalize(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its first clearly non-zero coordinate is positive."""
    out = vectors.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        big = np.abs(col) > 1e-12 * max(np.abs(col).max(initial=0.0), 1e-300)
        if big.any() and col[np.argmax(big)] < 0:
            out[:, i] = -col
    return out


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (N,)
    components: np.ndarray  # (K, N), orthonormal rows
    eigenvalues: np.ndarray  # (K,), descending, >= 0

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        mean = np.asarray(d["mean"], dtype=np.float64)
        comps = np.asarray(d["components"], dtype=np.float64).reshape(-1, mean.shape[0])
        vals = np.asarray(d["eigenvalues"], dtype=np.float64)
        if vals.shape[0] != comps.shape[0]:
            raise ValueError("eigenvalue count does not match component count")
        return cls(mean, comps, vals)


def _complete_basis(basis: np.ndarray, n_dim: int) -> np.ndarray:
    """Extend orthonormal columns ``basis`` (n_dim x r) to n_dim columns."""
    cols = [basis[:, i] for i in range(basis.shape[1])]
    for e in np.eye(n_dim):
        if len(cols) == n_dim:
            break
        w = e.copy()
        for _ in range(2):
            for c in cols:
                w -= (c @ w) * c
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            cols.append(w / norm)
    return np.column_stack(cols)


def pca_fit(samples, n_components: int, method: str = "auto") -> PcaModel:
    """Fit a PCA model on the rows of ``samples`` (M x N).

    The covariance is normalised by ``1 / M``.  With ``method="gram"`` the
    eigenvectors of ``A^T A / M`` (A holds the centred samples as columns)
    are mapped back through ``A`` and renormalised; ``"covariance"``
    decomposes ``A A^T / M`` directly; ``"auto"`` uses the Gram route when
    ``M < N``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D array (M samples x N features)")
    m, n = x.shape
    if m < 2:
        raise ValueError(f"need at least 2 samples, got {m}")
    k = int(n_components)
    if not 1 <= k <= min(n, m - 1):
        raise ValueError(f"n_components={k} must lie in [1, min(N={n}, M-1={m - 1})]")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    if method == "auto":
        method = "gram" if m < n else "covariance"

    mean = x.mean(axis=0)
    centred = (x - mean).T  # A: N x M

    if method == "covariance":
        values, vectors = sym_eigen(centred @ centred.T / m)
        values, vectors = values[:k], vectors[:, :k]
    elif method == "gram":
        g_values, g_vectors = sym_eigen(centred.T @ centred / m)
        mapped = centred @ g_vectors[:, :k]
        norms = np.linalg.norm(mapped, axis=0)
        good = norms > 1e-10 * max(norms.max(initial=0.0), 1e-300)
        # directions with no variance cannot be mapped back; take any
        # orthonormal completion
        if not good.all():
            basis = mapped[:, good] / norms[good]
            full = _complete_basis(basis, n)
            mapped = np.column_stack([basis, full[:, basis.shape[1] : basis.shape[1] + (~good).sum()]])
            g_values = np.concatenate([g_values[:k][good], np.zeros((~good).sum())])
            norms = np.ones(k)
        values, vectors = g_values[:k], mapped / norms
    else:
        raise ValueError(f"unknown method {method!r}")

    values = values.copy()
    if values.size and values[0] > 0:
        values[values < 1e-12 * values[0]] = 0.0
    values = np.maximum(values, 0.0)
    return PcaModel(mean, _sign_normalize(vectors).T.copy(), values)


def pca_project(model: PcaModel, x) -> np.ndarray:
    """Coefficients of ``x - mean`` on the components; ``x`` may be a single
    vector or a stack of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_features:
        raise ValueError(f"expected vectors of length {model.n_features}, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != model.n_components:
        raise ValueError(f"expected {model.n_components} coefficients, got {y.shape[-1]}")
    return model.mean + y @ model.components

"""Hermitian eigendecomposition: Householder tridiagonalization + implicit QL.

Sized for the small covariance matrices used by the subspace estimators
(``L <= 64``); rank-one updates are vectorized with numpy, the QL sweeps
are scalar.
"""

from __future__ import annotations

import math

import numpy as np


class NotHermitian(ValueError):
    pass


def _tridiagonalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reduce Hermitian ``a`` to real symmetric tridiagonal form.

    Returns ``(d, e, q)`` with ``a = q @ T @ q^H``, where ``T`` has diagonal
    ``d`` and sub/super-diagonal ``e`` (real, non-negative).
    """
    n = a.shape[0]
    a = a.astype(np.complex128, copy=True)
    q = np.eye(n, dtype=np.complex128)
    for k in range(n - 2):
        x = a[k + 1 :, k].copy()
        tail = np.linalg.norm(x[1:])
        if tail == 0.0:
            continue
        norm = math.hypot(abs(x[0]), tail)
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * norm
        v /= np.linalg.norm(v)
        # a <- H a H and q <- q H with H = I - 2 v v^H acting on rows/cols k+1:
        blk = a[k + 1 :, :]
        blk -= 2.0 * np.outer(v, v.conj() @ blk)
        blk = a[:, k + 1 :]
        blk -= 2.0 * np.outer(blk @ v, v.conj())
        qb = q[:, k + 1 :]
        qb -= 2.0 * np.outer(qb @ v, v.conj())
    d = a.diagonal().real.copy()
    sub = a.diagonal(-1).copy()
    # diagonal unitary scaling turns the complex off-diagonal into |e|
    phases = np.ones(n, dtype=np.complex128)
    for k in range(n - 1):
        mag = abs(sub[k])
        phases[k + 1] = phases[k] * (sub[k] / mag if mag > 0 else 1.0)
    return d, np.abs(sub), q * phases[None, :]


def _tql_implicit(d: np.ndarray, e: np.ndarray, z: np.ndarray, max_sweeps: int = 60) -> None:
    """Implicit-shift QL on a symmetric tridiagonal matrix, in place.

    ``e[i]`` couples rows ``i`` and ``i+1``.  Rotations are applied to the
    columns of ``z``.
    """
    n = len(d)
    e = np.append(e, 0.0)
    eps = np.finfo(float).eps
    for l in range(n):
        sweeps = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            sweeps += 1
            if sweeps > max_sweeps:
                raise np.linalg.LinAlgError("implicit QL failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                z[:, i] = c * zi - s * z[:, i + 1]
                z[:, i + 1] = s * zi + c * z[:, i + 1]
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


def eigh(matrix, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors (columns).

    Raises :class:`NotHermitian` if ``matrix`` deviates from its conjugate
    transpose by more than ``tol`` relative to its norm.
    """
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eigh expects a square matrix")
    scale = max(1.0, float(np.linalg.norm(a)))
    if np.linalg.norm(a - a.conj().T) > tol * scale:
        raise NotHermitian("matrix is not Hermitian")
    a = 0.5 * (a + a.conj().T)
    n = a.shape[0]
    if n == 1:
        return a.diagonal().real.copy(), np.ones((1, 1), dtype=np.complex128)
    d, e, q = _tridiagonalize(a)
    z = np.eye(n)
    _tql_implicit(d, e, z)
    order = np.argsort(-d, kind="stable")
    return d[order], (q @ z)[:, order]

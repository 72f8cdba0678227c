from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import gammaln

# func(Z) -> values; Z is (N, n+1) complex with unit rows
PointFunction = Callable[[np.ndarray], np.ndarray]


def normalize_rows(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.complex128)
    return Z / np.linalg.norm(Z, axis=-1, keepdims=True)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary (QR of a complex Ginibre matrix with phase fix)."""
    A = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    Q, R = np.linalg.qr(A)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def unitary_completion(v: np.ndarray) -> np.ndarray:
    """Unitary matrix whose first column is the unit vector v."""
    v = np.asarray(v, dtype=np.complex128)
    return adapted_frames(v[None, :])[0]


def adapted_frames(Z: np.ndarray) -> np.ndarray:
    """Batch of unitaries U with U[:, :, 0] == Z (rows of Z unit vectors)."""
    Z = np.asarray(Z, dtype=np.complex128)
    N, d1 = Z.shape
    A = np.concatenate([Z[:, :, None], np.broadcast_to(np.eye(d1, dtype=np.complex128), (N, d1, d1))], axis=2)
    Q, R = np.linalg.qr(A, mode="reduced")
    # QR fixes the first column only up to a phase
    phase = R[:, 0, 0] / np.abs(R[:, 0, 0])
    Q[:, :, 0] = Q[:, :, 0] * phase[:, None]
    return Q


def real_hessian(func: PointFunction, Z: np.ndarray, step: float, diagonal_only: bool) -> np.ndarray:
    """Central-difference Hessian in the real coordinates (Re w, Im w) of the unitary-adapted chart."""
    Z = normalize_rows(Z)
    N, d1 = Z.shape
    n = d1 - 1
    T = adapted_frames(Z)[:, :, 1:]
    dirs = np.concatenate([T, 1j * T], axis=2) * step  # (N, d1, 2n)
    R = 2 * n
    f0 = func(Z)

    def at(v: np.ndarray) -> np.ndarray:
        return func(normalize_rows(Z + v))

    hess = np.zeros((N, R, R))
    for a in range(R):
        da = dirs[:, :, a]
        hess[:, a, a] = (at(da) - 2.0 * f0 + at(-da)) / step**2
    if diagonal_only:
        return hess
    for a in range(R):
        da = dirs[:, :, a]
        for b in range(a + 1, R):
            db = dirs[:, :, b]
            val = (at(da + db) - at(da - db) - at(-da + db) + at(-da - db)) / (4.0 * step**2)
            hess[:, a, b] = val
            hess[:, b, a] = val
    return hess


def complex_hessian(func: PointFunction, Z: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """H[j, k] = d^2 u / dw_j dconj(w_k) at each point, in its adapted chart.

    In these charts the normalized Fubini-Study form has matrix I/2 at the chart
    center, so (omega_FS + dd^c u) has matrix I/2 + H.
    """
    hr = real_hessian(func, Z, step, diagonal_only=False)
    n = hr.shape[1] // 2
    X = hr[:, :n, :n]
    Y = hr[:, n:, n:]
    XY = hr[:, :n, n:]
    return 0.25 * ((X + Y) + 1j * (XY - np.transpose(XY, (0, 2, 1))))


def ddc_trace(func: PointFunction, Z: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Density of dd^c u ^ omega_FS^(n-1) against omega_FS^n, i.e. (2/n) tr H."""
    hr = real_hessian(func, Z, step, diagonal_only=True)
    n = hr.shape[1] // 2
    return np.trace(hr, axis1=1, axis2=2) / (2.0 * n)


def mixed_discriminant2(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Batched 2x2 mixed discriminant, normalized so D(A, A) = det A."""
    return 0.5 * (np.linalg.det(A + B) - np.linalg.det(A) - np.linalg.det(B))


def log_multinomial(total: int, parts: list[int]) -> float:
    return float(gammaln(total + 1) - sum(gammaln(k + 1) for k in parts))


def snap_integer(x: float, tol: float = 1e-9) -> float:
    """Round x to the nearest integer when within tol (p * lambda products)."""
    r = round(x)
    return float(r) if abs(x - r) <= tol else x

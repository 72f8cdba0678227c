# app/services/projective.py
"""Points of P^1 / P^2 and quadrature grids for the normalized Fubini-Study volume.

Grids are built in moment-map coordinates: under [z] -> (|z_i|^2 / |z|^2) the
normalized FS volume pushes forward to the uniform measure on the simplex, with
independent uniform torus angles. Each simplex coordinate is split at 1/2 into
two charts, and each chart carries Gauss-Legendre nodes graded toward its pole,
so coordinate points (n=1) and coordinate lines (n=2) sit at graded ends.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Optional, Sequence

import numpy as np
from scipy.special import roots_legendre

from app.core.cache import Arrays, cache_key
from app.core.config import MIN_RESOLUTION, SUPPORTED_DIMENSIONS, get_settings
from app.core.errors import DimensionMismatch, InvalidDimension, QuadratureDivergence, ResolutionTooSmall
from app.services.utils import unitary_completion

if TYPE_CHECKING:
    from app.services.metrics import MetricWeight

logger = logging.getLogger(__name__)

POINT_NORM_TOL = 1e-12
POINT_EQ_TOL = 1e-10


# ------------ points ------------
@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.complex128).ravel()
        nrm = np.linalg.norm(c)
        if nrm == 0.0:
            raise ValueError("the zero vector is not a point of projective space")
        c = c / nrm
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.shape[0] - 1

    @classmethod
    def of(cls, *coords: complex) -> "ProjectivePoint":
        return cls(np.array(coords, dtype=np.complex128))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjectivePoint) or other.n != self.n:
            return NotImplemented if not isinstance(other, ProjectivePoint) else False
        return abs(1.0 - abs(np.vdot(self.coords, other.coords))) <= POINT_EQ_TOL

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        body = ":".join(f"{c.real:.6g}{c.imag:+.6g}j" for c in self.coords)
        return f"ProjectivePoint([{body}])"


def fs_distance(a: ProjectivePoint, b: ProjectivePoint) -> float:
    """Chordal distance sqrt(1 - |<a,b>|^2), the sine of the FS angle."""
    if a.n != b.n:
        raise DimensionMismatch("points live in different projective spaces", left=a.n, right=b.n)
    s = abs(np.vdot(a.coords, b.coords)) ** 2
    return float(np.sqrt(max(0.0, 1.0 - min(1.0, s))))


def chordal_distances(Z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Vectorized fs_distance from unit rows of Z to the unit vector a."""
    s = np.abs(Z @ np.conj(a)) ** 2
    return np.sqrt(np.clip(1.0 - s, 0.0, 1.0))


# ------------ grids ------------
@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    points: np.ndarray          # (N, n+1) complex, unit rows
    weights: np.ndarray         # (N,), sums to 1
    n: int
    resolution: int
    grading: int = 1
    frame: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=np.complex128))
    key: str = ""

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def point(self, i: int) -> ProjectivePoint:
        return ProjectivePoint(self.points[i])

    def rotated(self, U: np.ndarray) -> "QuadratureGrid":
        """Pushforward under the unitary U (same weights)."""
        U = np.asarray(U, dtype=np.complex128)
        return QuadratureGrid(
            points=self.points @ U.T,
            weights=self.weights,
            n=self.n,
            resolution=self.resolution,
            grading=self.grading,
            frame=U @ self.frame,
            key=cache_key("grid", {"base": self.key, "rotation": np.round(U, 12).tobytes().hex()}),
        )


def _graded_halves(m: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0,1] for the uniform measure; two charts graded toward 0 and 1."""
    x, w = roots_legendre(m)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    t = 0.5 * x**q
    jac = 0.5 * q * x ** (q - 1)
    nodes = np.concatenate([t, 1.0 - t[::-1]])
    wts = np.concatenate([w * jac, (w * jac)[::-1]])
    return nodes, wts


def _angles(k: int) -> tuple[np.ndarray, np.ndarray]:
    # half-step offset keeps nodes off the real axis
    phi = 2.0 * np.pi * (np.arange(k) + 0.5) / k
    return phi, np.full(k, 1.0 / k)


def _grid_p1(resolution: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    u, wu = _graded_halves(resolution, q)        # u = |z_1|^2 / |z|^2
    phi, wphi = _angles(2 * resolution)
    U, PHI = np.meshgrid(u, phi, indexing="ij")
    pts = np.stack([np.sqrt(1.0 - U), np.sqrt(U) * np.exp(1j * PHI)], axis=-1).reshape(-1, 2)
    wts = np.outer(wu, wphi).ravel()
    return pts, wts


def _grid_p2(resolution: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    # u0 = s, u1 = (1-s) y, u2 = (1-s)(1-y); density of the simplex measure is 2(1-s)
    s, ws = _graded_halves(resolution, q)
    y, wy = _graded_halves(resolution, q)
    phi, wphi = _angles(2 * resolution)
    S, Y, P1, P2 = np.meshgrid(s, y, phi, phi, indexing="ij")
    u1 = (1.0 - S) * Y
    u2 = (1.0 - S) * (1.0 - Y)
    pts = np.stack(
        [np.sqrt(S) + 0j, np.sqrt(u1) * np.exp(1j * P1), np.sqrt(u2) * np.exp(1j * P2)],
        axis=-1,
    ).reshape(-1, 3)
    wsy = 2.0 * (1.0 - s)[:, None] * np.outer(ws, wy)
    wts = np.einsum("ab,c,d->abcd", wsy, wphi, wphi).ravel()
    return pts, wts


def adaptation_frame(n: int, metric: Optional["MetricWeight"]) -> np.ndarray:
    """Unitary moving the strongest singular locus of `metric` onto a graded chart end.

    With first column conj(c)/|c| the locus {c.z = 0} becomes {z_0 = 0}: the point
    [0:1] on P^1, the coordinate line z_0 = 0 on P^2.
    """
    if metric is None or not metric.singular_terms:
        return np.eye(n + 1, dtype=np.complex128)
    term = max(metric.singular_terms, key=lambda t: t.weight)
    c = np.conj(np.asarray(term.form, dtype=np.complex128))
    return unitary_completion(c / np.linalg.norm(c))


def build_quadrature(n: int, resolution: int, metric: Optional["MetricWeight"] = None) -> QuadratureGrid:
    if n not in SUPPORTED_DIMENSIONS:
        raise InvalidDimension(f"n must be one of {SUPPORTED_DIMENSIONS}", n=n)
    if resolution < MIN_RESOLUTION:
        raise ResolutionTooSmall(f"resolution must be >= {MIN_RESOLUTION}", resolution=resolution)

    adapt = metric is not None and bool(metric.singular_terms)
    # squared grading resolves log-singular integrands at the poles
    q = 2 if (n == 1 or adapt) else 1
    pts, wts = _grid_p1(resolution, q) if n == 1 else _grid_p2(resolution, q)

    frame = adaptation_frame(n, metric)
    pts = pts @ frame.T
    keyparams: Dict[str, object] = {"n": n, "resolution": resolution, "q": q}
    if adapt:
        keyparams["frame"] = np.round(frame, 12).tobytes().hex()
        _check_guard(pts, metric)  # type: ignore[arg-type]

    grid = QuadratureGrid(
        points=pts, weights=wts, n=n, resolution=resolution, grading=q, frame=frame,
        key=cache_key("grid", keyparams),
    )
    logger.info("built quadrature n=%d resolution=%d points=%d", n, resolution, len(grid))
    return grid


def _check_guard(pts: np.ndarray, metric: "MetricWeight") -> None:
    radius = get_settings().guard_radius
    for term in metric.singular_terms:
        dist = np.abs(pts @ np.asarray(term.form, dtype=np.complex128))
        if dist.min() < radius:
            i = int(np.argmin(dist))
            raise QuadratureDivergence(
                "grid point inside the guard radius of a singular locus",
                point=[[z.real, z.imag] for z in pts[i]],
                distance=float(dist[i]),
                guard_radius=radius,
            )


# ------------ cache codec ------------
def encode_grid(grid: QuadratureGrid) -> Arrays:
    return {
        "points": grid.points,
        "weights": grid.weights,
        "frame": grid.frame,
        "meta": np.array([grid.n, grid.resolution, grid.grading], dtype=np.int64),
        "key": np.array(grid.key),
    }


def decode_grid(arrays: Arrays) -> QuadratureGrid:
    n, resolution, grading = (int(v) for v in arrays["meta"])
    return QuadratureGrid(
        points=arrays["points"], weights=arrays["weights"], n=n, resolution=resolution,
        grading=grading, frame=arrays["frame"], key=str(arrays["key"]),
    )


def points_array(points: Sequence[ProjectivePoint]) -> np.ndarray:
    return np.stack([p.coords for p in points]) if points else np.zeros((0, 0), dtype=np.complex128)

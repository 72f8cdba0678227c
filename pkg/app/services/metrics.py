# app/services/metrics.py
"""Hermitian metrics on O(1): FS baseline times exp(-2 phi), phi = smooth part + sum lambda_i log(|l_i|/|z|).

Conventions: dd^c = (i/pi) d dbar and omega_FS = dd^c (1/2) log|z|^2, so in an
adapted chart omega_FS has matrix I/2 and the curvature c_1(O(1), h) = omega_FS + dd^c phi.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.errors import DimensionMismatch, InvalidDimension, NonPositive, QuadratureDivergence
from app.services.forms import TestForm
from app.services.projective import ProjectivePoint, QuadratureGrid
from app.services.utils import PointFunction, complex_hessian, normalize_rows

logger = logging.getLogger(__name__)


# ------------ smooth parts ------------
@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """z^H Q z / |z|^2 for a Hermitian Q; the zero matrix is the FS baseline."""

    matrix: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.matrix, dtype=np.complex128)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch("quadratic form needs a square matrix", shape=list(Q.shape))
        Q = 0.5 * (Q + Q.conj().T)
        Q.setflags(write=False)
        object.__setattr__(self, "matrix", Q)

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        Z = normalize_rows(Z)
        return np.real(np.einsum("ni,ij,nj->n", Z.conj(), self.matrix, Z))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrix)

    @property
    def key(self) -> str:
        return hashlib.sha256(np.round(self.matrix, 14).tobytes()).hexdigest()[:12]


@dataclass(frozen=True)
class SingularTerm:
    form: Tuple[complex, ...]   # unit coefficient vector c, l(z) = c . z
    weight: float               # lambda in (0, 1)

    @classmethod
    def make(cls, form: Sequence[complex], weight: float) -> "SingularTerm":
        c = np.asarray(form, dtype=np.complex128)
        c = c / np.linalg.norm(c)
        return cls(tuple(complex(v) for v in c), float(weight))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.form, dtype=np.complex128)

    def zero_point(self) -> ProjectivePoint:
        """On P^1 the single zero of the form."""
        c = self.vector
        return ProjectivePoint(np.array([c[1], -c[0]]))

    def distance(self, Z: np.ndarray) -> np.ndarray:
        """Chordal distance to {l = 0}: |l(z)| for unit z."""
        return np.abs(normalize_rows(Z) @ self.vector)


@dataclass(frozen=True)
class HoelderConstants:
    c: float = 1.0
    nu: float = 1.0
    delta: float = 1.0


@dataclass(frozen=True, eq=False)
class MetricWeight:
    n: int
    smooth_part: Optional[PointFunction] = None
    singular_terms: Tuple[SingularTerm, ...] = ()
    positivity_margin: float = 1e-3
    hoelder: HoelderConstants = field(default_factory=HoelderConstants)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise InvalidDimension("metrics are supported on P^1 and P^2", n=self.n)
        for t in self.singular_terms:
            if len(t.form) != self.n + 1:
                raise DimensionMismatch("linear form does not match the dimension", n=self.n, form=len(t.form))
            if not 0.0 < t.weight < 1.0:
                raise ValueError(f"singular coefficient must lie in (0, 1), got {t.weight}")

    @classmethod
    def fubini_study(cls, n: int) -> "MetricWeight":
        return cls(n=n)

    @property
    def total_lambda(self) -> float:
        return float(sum(t.weight for t in self.singular_terms))

    @property
    def is_smooth(self) -> bool:
        return not self.singular_terms

    @property
    def is_fs(self) -> bool:
        return self.is_smooth and (
            self.smooth_part is None or (isinstance(self.smooth_part, QuadraticForm) and self.smooth_part.is_zero)
        )

    @property
    def key(self) -> str:
        if self.smooth_part is None or (isinstance(self.smooth_part, QuadraticForm) and self.smooth_part.is_zero):
            sk = "zero"
        elif isinstance(self.smooth_part, QuadraticForm):
            sk = self.smooth_part.key
        else:
            sk = f"callable-{id(self.smooth_part)}"
        terms = ";".join(
            ",".join(f"{z.real:.12g}{z.imag:+.12g}j" for z in t.form) + f"@{t.weight:.12g}"
            for t in self.singular_terms
        )
        blob = f"n={self.n}|smooth={sk}|terms={terms}"
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def smooth_values(self, Z: np.ndarray) -> np.ndarray:
        if self.smooth_part is None:
            return np.zeros(np.asarray(Z).shape[0])
        return np.asarray(self.smooth_part(normalize_rows(Z)), dtype=float)

    def phi(self, Z: np.ndarray) -> np.ndarray:
        """phi_g at the rows of Z; -inf exactly on the singular locus."""
        Z = normalize_rows(np.atleast_2d(Z))
        out = self.smooth_values(Z)
        with np.errstate(divide="ignore"):
            for t in self.singular_terms:
                out = out + t.weight * np.log(t.distance(Z))
        return out

    def distance_to_locus(self, Z: np.ndarray) -> np.ndarray:
        if not self.singular_terms:
            return np.ones(np.asarray(Z).shape[0])
        return np.min(np.stack([t.distance(Z) for t in self.singular_terms]), axis=0)


def weight_at(h: MetricWeight, x: ProjectivePoint) -> float:
    if x.n != h.n:
        raise DimensionMismatch("point and metric dimensions differ", point=x.n, metric=h.n)
    return float(h.phi(x.coords[None, :])[0])


# ------------ curvature pairings ------------
def _guarded_phi(h: MetricWeight, grid: QuadratureGrid) -> np.ndarray:
    phi = h.phi(grid.points)
    if h.singular_terms:
        radius = get_settings().guard_radius
        d = h.distance_to_locus(grid.points)
        if not np.all(np.isfinite(phi)) or d.min() < radius:
            i = int(np.argmin(d))
            raise QuadratureDivergence(
                "singular weight evaluated inside the guard radius",
                distance=float(d[i]), guard_radius=radius,
            )
    return phi


def curvature_pair(h: MetricWeight, u: TestForm, grid: QuadratureGrid) -> float:
    """<c_1(L, h), u> = int u omega + int phi dd^c u (integration by parts)."""
    if grid.n != h.n:
        raise DimensionMismatch("grid and metric dimensions differ", grid=grid.n, metric=h.n)
    phi = _guarded_phi(h, grid)
    return grid.integrate(u.values(grid)) + grid.integrate(phi * u.ddc(grid))


def curvature_pair_closed_form(h: MetricWeight, u: TestForm, grid: QuadratureGrid) -> float:
    """P^1 only: (1 - sum lambda) int u omega + sum lambda u(a_i) + int s dd^c u."""
    if h.n != 1:
        raise InvalidDimension("the atomic closed form exists on P^1 only", n=h.n)
    vol = grid.integrate(u.values(grid))
    atoms = sum(t.weight * u.at(t.zero_point()) for t in h.singular_terms)
    smooth = grid.integrate(h.smooth_values(grid.points) * u.ddc(grid)) if h.smooth_part is not None else 0.0
    return (1.0 - h.total_lambda) * vol + atoms + smooth


def curvature_matrix(h: MetricWeight, Z: np.ndarray) -> np.ndarray:
    """Smooth part of c_1(L, h) relative to omega_FS: (1 - sum lambda) I + 2 H_s."""
    Z = normalize_rows(Z)
    n = Z.shape[1] - 1
    base = (1.0 - h.total_lambda) * np.eye(n)[None, :, :]
    if h.smooth_part is None:
        return np.broadcast_to(base, (Z.shape[0], n, n)).astype(np.complex128)
    return base + 2.0 * complex_hessian(h.smooth_values, Z, get_settings().fd_step)


# ------------ hypothesis checks ------------
@dataclass
class PositivityReport:
    margin: float
    claimed: float
    passed: bool
    witness: ProjectivePoint

    def to_dict(self) -> dict:
        return {
            "margin": self.margin,
            "claimed": self.claimed,
            "passed": self.passed,
            "witness": [[float(z.real), float(z.imag)] for z in self.witness.coords],
        }


def check_positivity(h: MetricWeight, grid: QuadratureGrid) -> PositivityReport:
    C = curvature_matrix(h, grid.points)
    eig = np.linalg.eigvalsh(C)[:, 0]
    i = int(np.argmin(eig))
    margin = float(eig[i])
    witness = grid.point(i)
    if margin <= 0.0:
        raise NonPositive(
            "curvature of the smooth part is not positive",
            margin=margin, witness=[[float(z.real), float(z.imag)] for z in witness.coords],
        )
    report = PositivityReport(margin=margin, claimed=h.positivity_margin, passed=margin >= h.positivity_margin, witness=witness)
    logger.info("positivity margin %.6f (claimed %.6f)", margin, h.positivity_margin)
    return report


@dataclass
class HoelderReport:
    passed: bool
    worst_ratio: float
    worst_pair: Optional[Tuple[ProjectivePoint, ProjectivePoint]] = None
    samples: int = 0


def _points_near_locus(h: MetricWeight, k: int, rng: np.random.Generator) -> np.ndarray:
    d1 = h.n + 1
    out = []
    for _ in range(k):
        t = h.singular_terms[rng.integers(len(h.singular_terms))]
        v = rng.standard_normal(d1) + 1j * rng.standard_normal(d1)
        cbar = np.conj(t.vector)
        base = v - cbar * np.vdot(cbar, v)  # on {l = 0}
        base /= np.linalg.norm(base)
        r = 10.0 ** rng.uniform(-6, -1)
        w = rng.standard_normal(d1) + 1j * rng.standard_normal(d1)
        out.append(base + r * w / np.linalg.norm(w))
    return normalize_rows(np.array(out))


def check_hoelder(h: MetricWeight, samples: int = 10_000, rng_seed: int = 0) -> HoelderReport:
    """Test |phi(z) - phi(w)| <= c dist(z,w)^nu / min(dist(z,A), dist(w,A))^delta on random pairs."""
    if samples < 100:
        raise ValueError("check_hoelder needs at least 100 samples")
    rng = np.random.default_rng(rng_seed)
    d1 = h.n + 1

    def fs(k: int) -> np.ndarray:
        return normalize_rows(rng.standard_normal((k, d1)) + 1j * rng.standard_normal((k, d1)))

    # far pairs, local pairs, and local pairs hugging the singular locus
    n_far = samples // 3
    n_near = samples // 3 if h.singular_terms else 0
    n_local = samples - n_far - n_near
    anchors = fs(n_local)
    if n_near:
        anchors = np.vstack([anchors, _points_near_locus(h, n_near, rng)])
    r = 10.0 ** rng.uniform(-5, -1, size=(anchors.shape[0], 1))
    jitter = normalize_rows(rng.standard_normal(anchors.shape) + 1j * rng.standard_normal(anchors.shape))
    X = np.vstack([fs(n_far), anchors])
    W = np.vstack([fs(n_far), normalize_rows(anchors + r * jitter)])

    dist = np.sqrt(np.clip(1.0 - np.abs(np.sum(X.conj() * W, axis=1)) ** 2, 0.0, 1.0))
    dA = np.minimum(h.distance_to_locus(X), h.distance_to_locus(W))
    keep = (dist > 0) & (dA > 0)
    lhs = np.abs(h.phi(X) - h.phi(W))[keep]
    hc = h.hoelder
    rhs = hc.c * dist[keep] ** hc.nu / dA[keep] ** hc.delta
    ratio = lhs / rhs
    j = int(np.argmax(ratio))
    worst = float(ratio[j])
    idx = np.nonzero(keep)[0][j]
    passed = bool(worst <= 1.0)
    if not passed:
        logger.info("hoelder bound violated: ratio %.3g", worst)
    return HoelderReport(
        passed=passed, worst_ratio=worst,
        worst_pair=None if passed else (ProjectivePoint(X[idx]), ProjectivePoint(W[idx])),
        samples=int(keep.sum()),
    )


def in_general_position(metrics: Sequence[MetricWeight]) -> List[str]:
    """Violations among declared loci of different slots (coincident points or lines)."""
    problems: List[str] = []
    for a in range(len(metrics)):
        for b in range(a + 1, len(metrics)):
            for s in metrics[a].singular_terms:
                for t in metrics[b].singular_terms:
                    if abs(abs(np.vdot(s.vector, t.vector)) - 1.0) <= 1e-9:
                        problems.append(f"slots {a + 1} and {b + 1} share the singular locus {s.form}")
    return problems


def ddc_pair(u: TestForm, v: TestForm, grid: QuadratureGrid) -> float:
    """int u dd^c v over the grid (symmetric in u, v for smooth functions)."""
    return grid.integrate(u.values(grid) * v.ddc(grid))


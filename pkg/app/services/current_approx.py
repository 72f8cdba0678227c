# app/services/current_approx.py
"""Approximating a positive closed (1,1) current of mass 1 on P^1 by normalized
zero currents (1/p)[g_p = 0], and concentrated measures on P H^0(P^1, O(p))
whose draws stay near the section g_p outside a set of mass 1/p^2.

Potentials use the chordal kernel: psi_T(x) = int log dist(x, y) d(T - omega)(y).
Under omega the kernel integrates to -1/2 for every x.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from app.core.errors import InvalidDimension, MassMismatch, SolverError
from app.services.forms import TestForm
from app.services.measures import sample_fs_many
from app.services.polynomials import HomogeneousPolynomial, ZeroSet, from_roots, roots_p1
from app.services.projective import ProjectivePoint, QuadratureGrid, chordal_distances
from app.services.utils import normalize_rows

logger = logging.getLogger(__name__)

TargetKind = Literal["fs", "atoms", "circle", "smooth", "mixture"]
Strategy = Literal["iid", "stratified"]

MASS_TOL = 1e-6
FS_KERNEL_MEAN = -0.5
CIRCLE_NODES = 512
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ------------ targets ------------
@dataclass(eq=False)
class TargetCurrent:
    """fs | atoms | circle (uniform on |z_1/z_0| = radius) | smooth (1 + a(2u_0 - 1)) omega | mixture."""

    kind: TargetKind
    atoms: List[Tuple[ProjectivePoint, float]] = field(default_factory=list)
    radius: float = 1.0
    a: float = 0.0
    components: List[Tuple["TargetCurrent", float]] = field(default_factory=list)

    def __post_init__(self):
        if self.kind == "smooth" and not -1.0 < self.a < 1.0:
            raise ValueError("smooth density needs |a| < 1")
        if self.kind == "circle" and self.radius <= 0:
            raise ValueError("circle radius must be positive")
        if any(pt.n != 1 for pt, _ in self.atoms):
            raise InvalidDimension("targets live on P^1")

    @classmethod
    def fs(cls) -> "TargetCurrent":
        return cls("fs")

    @classmethod
    def dirac(cls, point: ProjectivePoint) -> "TargetCurrent":
        return cls("atoms", atoms=[(point, 1.0)])

    @property
    def mass(self) -> float:
        if self.kind == "atoms":
            return float(sum(w for _, w in self.atoms))
        if self.kind == "mixture":
            return float(sum(w * c.mass for c, w in self.components))
        return 1.0

    def check_mass(self) -> None:
        if abs(self.mass - 1.0) > MASS_TOL:
            raise MassMismatch("target current must have mass 1", mass=self.mass, kind=self.kind)

    def circle_points(self, k: int = CIRCLE_NODES) -> np.ndarray:
        th = 2.0 * np.pi * np.arange(k) / k
        return normalize_rows(np.stack([np.ones(k), self.radius * np.exp(1j * th)], axis=1))


def target_pairing(T: TargetCurrent, u: TestForm, grid: QuadratureGrid) -> float:
    """<T, u>."""
    if T.kind == "fs":
        return grid.integrate(u.values(grid))
    if T.kind == "atoms":
        return float(sum(w * u.at(pt) for pt, w in T.atoms))
    if T.kind == "circle":
        return float(np.mean(u(T.circle_points())))
    if T.kind == "smooth":
        u0 = np.abs(grid.points[:, 0]) ** 2
        return grid.integrate(u.values(grid) * (1.0 + T.a * (2.0 * u0 - 1.0)))
    return float(sum(w * target_pairing(c, u, grid) for c, w in T.components))


# ------------ potentials ------------
def _log_kernel(T: TargetCurrent, Z: np.ndarray) -> np.ndarray:
    """int log dist(z, y) dT(y) at unit rows z."""
    if T.kind == "fs":
        return np.full(Z.shape[0], FS_KERNEL_MEAN)
    if T.kind == "atoms":
        out = np.zeros(Z.shape[0])
        with np.errstate(divide="ignore"):
            for pt, w in T.atoms:
                out += w * np.log(chordal_distances(Z, pt.coords))
        return out
    if T.kind == "circle":
        # mean of log|R e^{it} z_0 - z_1| over t is log max(R |z_0|, |z_1|)
        R = T.radius
        return np.log(np.maximum(R * np.abs(Z[:, 0]), np.abs(Z[:, 1]))) - 0.5 * math.log1p(R * R)
    if T.kind == "smooth":
        # dd^c u_0 = -2 (2 u_0 - 1) omega
        return FS_KERNEL_MEAN - 0.5 * T.a * np.abs(Z[:, 0]) ** 2
    return sum(w * _log_kernel(c, Z) for c, w in T.components)


def potential_values(T: TargetCurrent, Z: np.ndarray) -> np.ndarray:
    """Unnormalized psi with dd^c psi = T - omega."""
    return _log_kernel(T, normalize_rows(Z)) - FS_KERNEL_MEAN


def potential_from_current(T: TargetCurrent, grid: QuadratureGrid) -> np.ndarray:
    if grid.n != 1:
        raise InvalidDimension("current approximation is implemented on P^1", n=grid.n)
    T.check_mass()
    psi = potential_values(T, grid.points)
    finite = np.isfinite(psi)
    return psi - (psi[finite].max() if finite.any() else 0.0)


def potential_consistency(T: TargetCurrent, grid: QuadratureGrid, forms: Sequence[TestForm]) -> float:
    """max over forms of |int psi dd^c u - <T - omega, u>|."""
    psi = potential_from_current(T, grid)
    worst = 0.0
    for u in forms:
        vals = psi * u.ddc(grid)
        lhs = grid.integrate(np.where(np.isfinite(vals), vals, 0.0))
        rhs = target_pairing(T, u, grid) - grid.integrate(u.values(grid))
        worst = max(worst, abs(lhs - rhs))
    return worst


# ------------ root placement ------------
def _largest_remainder(weights: Sequence[float], total: int) -> List[int]:
    w = np.asarray(weights, dtype=float)
    raw = total * w / w.sum()
    counts = np.floor(raw).astype(int)
    short = total - int(counts.sum())
    for i in np.argsort(-(raw - counts), kind="stable")[:short]:
        counts[i] += 1
    return counts.tolist()


def _from_moment(u0: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.stack([np.sqrt(u0) + 0j, np.sqrt(1.0 - u0) * np.exp(1j * theta)], axis=1)


def _smooth_inverse_cdf(a: float, y: np.ndarray) -> np.ndarray:
    """u_0 with CDF u_0 + a (u_0^2 - u_0) equal to y."""
    if abs(a) < 1e-12:
        return y
    b = 1.0 - a
    return (-b + np.sqrt(b * b + 4.0 * a * y)) / (2.0 * a)


def sample_roots(T: TargetCurrent, p: int, strategy: Strategy, rng: np.random.Generator) -> np.ndarray:
    """(p, 2) unit points distributed according to T."""
    if p < 1:
        raise ValueError("p must be >= 1")
    strat = strategy == "stratified"
    if T.kind == "fs":
        if not strat:
            return sample_fs_many(1, p, rng)
        return _from_moment((np.arange(p) + 0.5) / p, 2.0 * np.pi * _GOLDEN * np.arange(p))
    if T.kind == "circle":
        th = 2.0 * np.pi * np.arange(p) / p if strat else rng.uniform(0.0, 2.0 * np.pi, p)
        return normalize_rows(np.stack([np.ones(p), T.radius * np.exp(1j * th)], axis=1))
    if T.kind == "smooth":
        y = (np.arange(p) + 0.5) / p if strat else rng.uniform(0.0, 1.0, p)
        th = 2.0 * np.pi * _GOLDEN * np.arange(p) if strat else rng.uniform(0.0, 2.0 * np.pi, p)
        return _from_moment(_smooth_inverse_cdf(T.a, y), th)
    if T.kind == "atoms":
        w = [wt for _, wt in T.atoms]
        counts = _largest_remainder(w, p) if strat else np.bincount(
            rng.choice(len(w), size=p, p=np.asarray(w) / sum(w)), minlength=len(w)).tolist()
        return np.concatenate([np.repeat(pt.coords[None, :], c, axis=0) for (pt, _), c in zip(T.atoms, counts)])
    # mixture
    w = [wt for _, wt in T.components]
    counts = _largest_remainder(w, p) if strat else np.bincount(
        rng.choice(len(w), size=p, p=np.asarray(w) / sum(w)), minlength=len(w)).tolist()
    parts = [sample_roots(c, k, strategy, rng) for (c, _), k in zip(T.components, counts) if k > 0]
    return np.concatenate(parts)


@dataclass
class ApproximationRecord:
    p: int
    kind: str
    strategy: str
    roots: np.ndarray
    polynomial: HomogeneousPolynomial
    weak_distances: dict
    potential_error: float
    support_distance: float
    delta: float

    @property
    def max_weak_distance(self) -> float:
        return float(max(self.weak_distances.values()))

    def zero_set(self) -> ZeroSet:
        return ZeroSet(points=[(ProjectivePoint(r), 1) for r in self.roots], expected_total=self.p)


def empirical_potential(roots: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """(1/p) log(|g_p(z)| / |z|^p) = mean of log dist(z, root)."""
    with np.errstate(divide="ignore"):
        return np.mean([np.log(chordal_distances(Z, r)) for r in roots], axis=0)


def _centered_l1(a: np.ndarray, b: np.ndarray, grid: QuadratureGrid) -> float:
    ok = np.isfinite(a) & np.isfinite(b)
    w = grid.weights[ok] / grid.weights[ok].sum()
    d = a[ok] - b[ok]
    return float(np.dot(w, np.abs(d - np.dot(w, d))))


def support_distance(T: TargetCurrent, roots: np.ndarray) -> float:
    """Median chordal distance of the roots to the support of T (nan for full support)."""
    if T.kind == "circle":
        # nearest circle point shares the phase of z_1 / z_0
        U = np.abs(normalize_rows(roots))
        d = np.abs(T.radius * U[:, 0] - U[:, 1]) / math.sqrt(1.0 + T.radius**2)
        return float(np.median(d))
    if T.kind == "atoms":
        d = np.min(np.stack([chordal_distances(roots, pt.coords) for pt, _ in T.atoms]), axis=0)
        return float(np.median(d))
    return math.nan


def weak_distances(roots: np.ndarray, T: TargetCurrent, dictionary: Sequence[TestForm],
                   grid: QuadratureGrid) -> dict:
    return {u.name: abs(float(np.mean(u(roots))) - target_pairing(T, u, grid)) for u in dictionary}


def roots_from_measure(T: TargetCurrent, p: int, strategy: Strategy, grid: QuadratureGrid,
                       dictionary: Sequence[TestForm], rng: Optional[np.random.Generator] = None) -> ApproximationRecord:
    if grid.n != 1:
        raise InvalidDimension("current approximation is implemented on P^1", n=grid.n)
    rng = rng or np.random.default_rng(0)
    roots = sample_roots(T, p, strategy, rng)
    g = from_roots([(ProjectivePoint(r), 1) for r in roots])
    err = _centered_l1(empirical_potential(roots, grid.points), potential_values(T, grid.points), grid)
    return ApproximationRecord(
        p=p, kind=T.kind, strategy=strategy, roots=roots, polynomial=g,
        weak_distances=weak_distances(roots, T, dictionary, grid),
        potential_error=err, support_distance=support_distance(T, roots), delta=concentration_radius(p),
    )


# ------------ concentrated measures ------------
def concentration_radius(p: int) -> float:
    return float(p) ** -2


def _fs_scale(p: int) -> np.ndarray:
    """|z_0^(p-k) z_1^k| has L^2(omega) norm sqrt(k! (p-k)! / (p+1)!)."""
    k = np.arange(p + 1)
    return np.exp(0.5 * (gammaln(p + 2) - gammaln(k + 1) - gammaln(p - k + 1)))


def section_vector(g: HomogeneousPolynomial) -> np.ndarray:
    """Unit coefficient vector of g over the FS-orthonormal monomial basis."""
    if g.n != 1:
        raise InvalidDimension("section vectors are implemented on P^1", n=g.n)
    v = np.asarray(g.coeffs, dtype=np.complex128) / _fs_scale(g.degree)
    return v / np.linalg.norm(v)


def section_from_vector(v: np.ndarray, p: int) -> HomogeneousPolynomial:
    return HomogeneousPolynomial(1, p, np.asarray(v, dtype=np.complex128) * _fs_scale(p))


@dataclass
class ConcentratedSampler:
    """With probability 1 - eps a draw within chordal distance delta of [center], otherwise an FS draw."""

    center: np.ndarray
    p: int
    delta: float
    eps: float

    @property
    def dim(self) -> int:
        return self.center.shape[0] - 1

    def draw(self, k: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """(k, d+1) unit vectors and a flag per draw for the concentrated component."""
        a = self.center
        near = rng.uniform(size=k) >= self.eps
        G = rng.standard_normal((k, a.size)) + 1j * rng.standard_normal((k, a.size))
        E = normalize_rows(G - np.outer(G @ np.conj(a), a))
        theta = self.delta * (1.0 - np.exp(-rng.exponential(size=(k, 1))))
        V = np.cos(theta) * a[None, :] + np.sin(theta) * E
        fs = sample_fs_many(self.dim, k, rng)
        return np.where(near[:, None], V, fs), near

    def in_ball(self, V: np.ndarray) -> np.ndarray:
        return chordal_distances(normalize_rows(V), self.center) < self.delta


def concentrated_sampler(record: ApproximationRecord, p: Optional[int] = None) -> ConcentratedSampler:
    p = record.p if p is None else p
    return ConcentratedSampler(center=section_vector(record.polynomial), p=p,
                               delta=concentration_radius(p), eps=float(p) ** -2)


@dataclass
class ExceptionalFrequency:
    p: int
    draws: int
    outside: int

    @property
    def frequency(self) -> float:
        return self.outside / self.draws

    @property
    def stderr(self) -> float:
        f = self.frequency
        return math.sqrt(max(f * (1.0 - f), 1.0 / self.draws) / self.draws)

    @property
    def bound(self) -> float:
        return float(self.p) ** -2

    def holds(self) -> bool:
        return self.frequency <= self.bound + 3.0 * self.stderr


def exceptional_frequency(sampler: ConcentratedSampler, draws: int, rng: np.random.Generator) -> ExceptionalFrequency:
    V, _ = sampler.draw(draws, rng)
    return ExceptionalFrequency(p=sampler.p, draws=draws, outside=int(np.sum(~sampler.in_ball(V))))


def root_continuity(record: ApproximationRecord, sampler: ConcentratedSampler, dictionary: Sequence[TestForm],
                    draws: int, rng: np.random.Generator) -> np.ndarray:
    """Dictionary weak distance between zeros of concentrated draws and [g_p = 0]."""
    V, near = sampler.draw(draws, rng)
    base = np.array([np.mean(u(record.roots)) for u in dictionary])
    out = []
    for v in V[near]:
        try:
            Z = roots_p1(section_from_vector(v, sampler.p))
        except SolverError as e:
            logger.debug("root continuity draw failed: %s", e)
            continue
        pts, mult = Z.coords()
        vals = np.array([np.dot(mult, u(pts)) / sampler.p for u in dictionary])
        out.append(float(np.max(np.abs(vals - base))))
    return np.array(out)


@dataclass
class BorelCantelliCount:
    ps: List[int]
    counts: List[int]
    draws: int

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def budget(self) -> float:
        """Expected exceptional draws: draws * sum 1/p^2."""
        return self.draws * sum(float(p) ** -2 for p in self.ps)


def borel_cantelli_count(T: TargetCurrent, ps: Sequence[int], draws: int, grid: QuadratureGrid,
                         dictionary: Sequence[TestForm], rng: np.random.Generator,
                         strategy: Strategy = "stratified") -> BorelCantelliCount:
    counts = []
    for p in ps:
        rec = roots_from_measure(T, p, strategy, grid, dictionary, rng)
        counts.append(exceptional_frequency(concentrated_sampler(rec), draws, rng).outside)
    return BorelCantelliCount(list(ps), counts, draws)


@dataclass
class Halving:
    p: int
    ratio: float
    exact: bool                  # both levels place every root on the support

    def holds(self, band: Tuple[float, float]) -> bool:
        return self.exact or band[0] <= self.ratio <= band[1]


def support_halving(distances: Sequence[Tuple[int, float]], exact_tol: float = 1e-12) -> List[Halving]:
    """Ratios d(2p) / d(p) of median support distances for consecutive doubled levels."""
    out = []
    for (p0, d0), (p1, d1) in zip(distances, distances[1:]):
        if p1 != 2 * p0 or math.isnan(d0) or math.isnan(d1):
            continue
        exact = d0 <= exact_tol and d1 <= exact_tol
        ratio = math.nan if exact else (d1 / d0 if d0 > 0 else math.inf)
        out.append(Halving(p=p1, ratio=ratio, exact=exact))
    return out


def kac_roots(p: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Zeros of sum xi_j (t / radius)^j with iid complex Gaussian xi_j.

    These random sections equidistribute toward the uniform measure on
    |t| = radius at chordal distance O(1/p) from the circle.
    """
    xi = rng.standard_normal(p + 1) + 1j * rng.standard_normal(p + 1)
    c = xi * radius ** -np.arange(p + 1, dtype=float)
    Z = roots_p1(HomogeneousPolynomial(1, p, c))
    pts, mult = Z.coords()
    return np.repeat(pts, mult.astype(int), axis=0)

# app/services/polynomials.py
"""Homogeneous polynomials (sections of O(p)) and their zero sets on P^1 and P^2."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import companion, eigvals
from scipy.signal import convolve

from app.core.config import get_settings
from app.core.errors import (
    DimensionMismatch,
    IncompleteZeroSet,
    InvalidDimension,
    NewtonDivergence,
    SharedFactor,
    ZeroPolynomial,
)
from app.schemas.common import PolynomialDoc
from app.services.projective import ProjectivePoint
from app.services.utils import adapted_frames, random_unitary

logger = logging.getLogger(__name__)

Exponent = Tuple[int, ...]


# ------------ monomial order ------------
@lru_cache(maxsize=None)
def _exponents(n: int, p: int) -> Tuple[Exponent, ...]:
    """Graded-lex exponents of degree p in n+1 variables (z_0^p first)."""
    if n == 0:
        return ((p,),)
    out: List[Exponent] = []
    for a0 in range(p, -1, -1):
        out.extend((a0,) + rest for rest in _exponents(n - 1, p - a0))
    return tuple(out)


def exponents(n: int, p: int) -> np.ndarray:
    return np.array(_exponents(n, p), dtype=np.int64)


@lru_cache(maxsize=None)
def _index(n: int, p: int) -> Dict[Exponent, int]:
    return {e: i for i, e in enumerate(_exponents(n, p))}


def monomial_matrix(Z: np.ndarray, n: int, p: int) -> np.ndarray:
    """(N, K) values of every degree-p monomial at the rows of Z."""
    E = exponents(n, p)
    Z = np.asarray(Z, dtype=np.complex128)
    return np.prod(Z[:, None, :] ** E[None, :, :], axis=2)


# ------------ polynomials ------------
@dataclass(frozen=True, eq=False)
class HomogeneousPolynomial:
    n: int
    degree: int
    coeffs: np.ndarray
    allow_zero: bool = False

    def __post_init__(self):
        if self.n not in (1, 2):
            raise InvalidDimension("polynomials are supported on P^1 and P^2", n=self.n)
        c = np.asarray(self.coeffs, dtype=np.complex128).ravel()
        want = comb(self.n + self.degree, self.n)
        if c.shape[0] != want:
            raise DimensionMismatch("coefficient vector has the wrong length", expected=want, got=int(c.shape[0]))
        if not self.allow_zero and not np.any(c):
            raise ZeroPolynomial("identically zero polynomial", n=self.n, degree=self.degree)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_terms(cls, n: int, p: int, terms: Mapping[Exponent, complex]) -> "HomogeneousPolynomial":
        idx = _index(n, p)
        c = np.zeros(len(idx), dtype=np.complex128)
        for e, v in terms.items():
            if tuple(e) not in idx:
                raise DimensionMismatch("exponent is not of the declared degree", exponent=list(e), degree=p)
            c[idx[tuple(e)]] += v
        return cls(n, p, c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def to_tensor(self) -> np.ndarray:
        T = np.zeros((self.degree + 1,) * (self.n + 1), dtype=np.complex128)
        for e, v in zip(_exponents(self.n, self.degree), self.coeffs):
            T[e] = v
        return T

    @classmethod
    def from_tensor(cls, n: int, p: int, T: np.ndarray) -> "HomogeneousPolynomial":
        c = np.array([T[e] if all(a < s for a, s in zip(e, T.shape)) else 0.0
                      for e in _exponents(n, p)], dtype=np.complex128)
        return cls(n, p, c, allow_zero=True)

    def to_json(self) -> dict:
        return PolynomialDoc(
            n=self.n, degree=self.degree, coeffs=[(float(z.real), float(z.imag)) for z in self.coeffs]
        ).model_dump()

    @classmethod
    def from_json(cls, doc: Mapping) -> "HomogeneousPolynomial":
        d = PolynomialDoc.model_validate(doc)
        return cls(d.n, d.degree, np.array([complex(a, b) for a, b in d.coeffs]))


def evaluate(f: HomogeneousPolynomial, x: ProjectivePoint) -> complex:
    if x.n != f.n:
        raise DimensionMismatch("point and polynomial dimensions differ", point=x.n, polynomial=f.n)
    return complex(evaluate_many(f, x.coords[None, :])[0])


def evaluate_many(f: HomogeneousPolynomial, Z: np.ndarray) -> np.ndarray:
    return monomial_matrix(Z, f.n, f.degree) @ f.coeffs


def gradient(f: HomogeneousPolynomial, x: np.ndarray) -> np.ndarray:
    """Holomorphic partials (df/dz_0, ..., df/dz_n) at the coordinate vector x."""
    E = exponents(f.n, f.degree)
    x = np.asarray(x, dtype=np.complex128)
    out = np.zeros(f.n + 1, dtype=np.complex128)
    for i in range(f.n + 1):
        Ei = E.copy()
        Ei[:, i] = np.maximum(Ei[:, i] - 1, 0)
        out[i] = np.sum(f.coeffs * E[:, i] * np.prod(x[None, :] ** Ei, axis=1))
    return out


def multiply(f: HomogeneousPolynomial, g: HomogeneousPolynomial) -> HomogeneousPolynomial:
    if f.n != g.n:
        raise DimensionMismatch("cannot multiply polynomials on different spaces", left=f.n, right=g.n)
    T = convolve(f.to_tensor(), g.to_tensor(), method="direct")
    return HomogeneousPolynomial.from_tensor(f.n, f.degree + g.degree, T)


def compose_linear(f: HomogeneousPolynomial, M: np.ndarray) -> HomogeneousPolynomial:
    """f(M y) as a polynomial in y."""
    M = np.asarray(M, dtype=np.complex128)
    d1 = f.n + 1
    if M.shape != (d1, d1):
        raise DimensionMismatch("matrix does not act on the coordinate space", shape=list(M.shape))
    p = f.degree
    # powers[i][k]: tensor of (sum_j M_ij y_j)^k
    linear = []
    for i in range(d1):
        L = np.zeros((2,) * d1, dtype=np.complex128)
        for j in range(d1):
            e = [0] * d1
            e[j] = 1
            L[tuple(e)] = M[i, j]
        linear.append(L)
    unit = np.ones((1,) * d1, dtype=np.complex128)
    powers: List[List[np.ndarray]] = []
    for i in range(d1):
        row = [unit]
        for _ in range(p):
            row.append(convolve(row[-1], linear[i], method="direct"))
        powers.append(row)

    total = np.zeros((p + 1,) * d1, dtype=np.complex128)
    for e, c in zip(_exponents(f.n, p), f.coeffs):
        if c == 0:
            continue
        term = unit
        for i, a in enumerate(e):
            term = convolve(term, powers[i][a], method="direct")
        total += c * term
    return HomogeneousPolynomial.from_tensor(f.n, p, total)


def linear_form_through(a: ProjectivePoint) -> HomogeneousPolynomial:
    """On P^1: the linear form a_1 z_0 - a_0 z_1 vanishing exactly at a."""
    if a.n != 1:
        raise InvalidDimension("a single point determines a linear form only on P^1", n=a.n)
    return HomogeneousPolynomial(1, 1, np.array([a.coords[1], -a.coords[0]]))


def from_roots(points: Iterable[Tuple[ProjectivePoint, int]]) -> HomogeneousPolynomial:
    """Product of linear forms through the given P^1 points, with multiplicity."""
    out: Optional[HomogeneousPolynomial] = None
    for pt, mult in points:
        lf = linear_form_through(pt)
        for _ in range(mult):
            out = lf if out is None else multiply(out, lf)
    if out is None:
        raise ZeroPolynomial("no roots given")
    return out


# ------------ zero sets ------------
@dataclass
class ZeroSet:
    points: List[Tuple[ProjectivePoint, int]]
    expected_total: int
    failures: List[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(m for _, m in self.points)

    @property
    def complete(self) -> bool:
        return self.total == self.expected_total

    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        """(points array, multiplicities) for vectorized pairings."""
        if not self.points:
            return np.zeros((0, 0), dtype=np.complex128), np.zeros(0)
        return np.stack([p.coords for p, _ in self.points]), np.array([m for _, m in self.points], dtype=float)

    def to_dict(self) -> dict:
        return {
            "expected_total": self.expected_total,
            "total": self.total,
            "points": [
                {"coords": [[float(z.real), float(z.imag)] for z in p.coords], "multiplicity": m}
                for p, m in self.points
            ],
        }


Verifier = Callable[[np.ndarray, int], bool]


def _centroid(P: np.ndarray) -> np.ndarray:
    ref = P[0]
    aligned = []
    for v in P:
        ph = np.vdot(v, ref)
        aligned.append(v * (ph / abs(ph) if abs(ph) > 0 else 1.0))
    c = np.mean(aligned, axis=0)
    return c / np.linalg.norm(c)


def cluster_points(P: np.ndarray, rtol: float, verify: Verifier) -> List[Tuple[np.ndarray, int]]:
    """Agglomerative clustering: a merge to size k needs complete-linkage chordal
    distance <= 2 rtol^(1/k) and must pass `verify(centroid, k)`."""
    m = P.shape[0]
    if m == 0:
        return []
    D = np.sqrt(np.clip(1.0 - np.abs(np.conj(P) @ P.T) ** 2, 0.0, 1.0))
    clusters: List[List[int]] = [[i] for i in range(m)]
    rejected: set = set()
    while True:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                key = (tuple(clusters[a]), tuple(clusters[b]))
                if key in rejected:
                    continue
                k = len(clusters[a]) + len(clusters[b])
                d = float(D[np.ix_(clusters[a], clusters[b])].max())
                if d <= 2.0 * rtol ** (1.0 / k) and (best is None or d < best[0]):
                    best = (d, a, b, key)
        if best is None:
            break
        _, a, b, key = best
        merged = clusters[a] + clusters[b]
        if verify(_centroid(P[merged]), len(merged)):
            clusters[a] = merged
            del clusters[b]
        else:
            rejected.add(key)
    return [(_centroid(P[c]), len(c)) for c in clusters]


# ------------ P^1 ------------
def _chart_poly(f: HomogeneousPolynomial, z: np.ndarray) -> Tuple[np.ndarray, complex, bool]:
    """Low-first coefficients of the dehomogenization in the chart where z is small."""
    c = f.coeffs  # c[j] multiplies z0^(p-j) z1^j
    if abs(z[0]) >= abs(z[1]):
        return c, z[1] / z[0], False
    return c[::-1], z[0] / z[1], True


def _to_point(t: complex, flipped: bool) -> np.ndarray:
    v = np.array([t, 1.0]) if flipped else np.array([1.0, t])
    return v / np.linalg.norm(v)


def _p1_verifier(f: HomogeneousPolynomial, rtol: float) -> Verifier:
    def verify(z: np.ndarray, k: int) -> bool:
        a, t, _ = _chart_poly(f, z)
        absa = np.abs(a)
        for j in range(k):
            num = abs(npoly.polyval(t, npoly.polyder(a, j))) / factorial(j)
            den = npoly.polyval(abs(t), npoly.polyder(absa, j)) / factorial(j)
            if num > max(rtol ** ((k - j) / k), 1e-13) * max(den, 1e-300):
                return False
        return True

    return verify


def _polish_p1(f: HomogeneousPolynomial, z: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    a, t, flipped = _chart_poly(f, z)
    da = npoly.polyder(a)
    best_t, best_r = t, abs(npoly.polyval(t, a))
    for _ in range(max_iter):
        d = npoly.polyval(t, da)
        if d == 0:
            break
        t = t - npoly.polyval(t, a) / d
        r = abs(npoly.polyval(t, a))
        if r < best_r:
            best_t, best_r = t, r
        if r <= tol * np.sum(np.abs(a)):
            break
    return _to_point(best_t, flipped)


def roots_p1(f: HomogeneousPolynomial, rtol: Optional[float] = None) -> ZeroSet:
    if f.n != 1:
        raise InvalidDimension("roots_p1 needs a polynomial on P^1", n=f.n)
    if not np.any(f.coeffs):
        raise ZeroPolynomial("identically zero polynomial")
    s = get_settings()
    rtol = s.root_cluster_rtol if rtol is None else rtol
    p = f.degree
    c = f.coeffs
    scale = np.max(np.abs(c))
    nz = np.nonzero(np.abs(c) > 1e-14 * scale)[0]
    top = int(nz.max())  # highest power of t = z1/z0 present
    deficiency = p - top

    raw: List[np.ndarray] = [np.array([0.0, 1.0], dtype=np.complex128)] * deficiency
    if top > 0:
        ts = eigvals(companion(c[top::-1]))
        raw.extend(np.array([1.0, t]) / np.sqrt(1.0 + abs(t) ** 2) for t in ts)
    P = np.array(raw, dtype=np.complex128).reshape(-1, 2)

    points: List[Tuple[ProjectivePoint, int]] = []
    for z, mult in cluster_points(P, rtol, _p1_verifier(f, rtol)):
        if mult == 1:
            z = _polish_p1(f, z, s.newton_tol, s.newton_max_iter)
        points.append((ProjectivePoint(z), mult))
    return ZeroSet(points=points, expected_total=p)


# ------------ P^2 ------------
def _dehomogenized(f: HomogeneousPolynomial) -> np.ndarray:
    """C[a, b] = coefficient of x^a y^b in f(1, x, y)."""
    p = f.degree
    C = np.zeros((p + 1, p + 1), dtype=np.complex128)
    for (_, a, b), v in zip(_exponents(2, p), f.coeffs):
        C[a, b] = v
    return C


def _y_coeffs(C: np.ndarray, x: complex) -> np.ndarray:
    """Coefficients in y (highest first) of F(x, y)."""
    low = np.array([npoly.polyval(x, C[:, k]) for k in range(C.shape[1])])
    return low[::-1]


def _sylvester(fy: np.ndarray, gy: np.ndarray) -> np.ndarray:
    p, q = len(fy) - 1, len(gy) - 1
    S = np.zeros((p + q, p + q), dtype=np.complex128)
    for i in range(q):
        S[i, i:i + p + 1] = fy
    for i in range(p):
        S[q + i, i:i + q + 1] = gy
    return S


def _newton_p2(f: HomogeneousPolynomial, g: HomogeneousPolynomial, z: np.ndarray,
               tol: float, max_iter: int) -> Tuple[np.ndarray, bool]:
    nf, ng = f.norm, g.norm
    z = z / np.linalg.norm(z)

    def resid(v: np.ndarray) -> float:
        V = v[None, :]
        return max(abs(evaluate_many(f, V)[0]) / nf, abs(evaluate_many(g, V)[0]) / ng)

    r = resid(z)
    for _ in range(max_iter):
        if r <= tol:
            return z, True
        A = np.vstack([gradient(f, z), gradient(g, z), np.conj(z)])
        rhs = -np.array([evaluate_many(f, z[None, :])[0], evaluate_many(g, z[None, :])[0], 0.0])
        step = np.linalg.lstsq(A, rhs, rcond=None)[0]
        z_new = (z + step) / np.linalg.norm(z + step)
        r_new = resid(z_new)
        if not np.isfinite(r_new):
            break
        z, r = z_new, r_new
    return z, r <= tol


def _p2_verifier(f: HomogeneousPolynomial, g: HomogeneousPolynomial, rtol: float) -> Verifier:
    def verify(z: np.ndarray, k: int) -> bool:
        T = adapted_frames(z[None, :])[0][:, 1:]
        J = np.vstack([gradient(f, z) / f.norm, gradient(g, z) / g.norm]) @ T
        sv = np.linalg.svd(J, compute_uv=False)
        return bool(sv[-1] <= rtol ** (1.0 / k) * max(sv[0], 1e-300))

    return verify


def common_zeros_p2(f: HomogeneousPolynomial, g: HomogeneousPolynomial, tol: Optional[float] = None,
                    rng: Optional[np.random.Generator] = None) -> ZeroSet:
    """Common zeros of two degree-p forms on P^2 (resultant in a rotated chart, then Newton)."""
    if f.n != 2 or g.n != 2:
        raise InvalidDimension("common_zeros_p2 needs two polynomials on P^2", n=(f.n, g.n))
    if f.degree != g.degree:
        raise DimensionMismatch("both forms must have the same degree", left=f.degree, right=g.degree)
    if not np.any(f.coeffs) or not np.any(g.coeffs):
        raise ZeroPolynomial("identically zero polynomial")
    s = get_settings()
    tol = s.newton_tol if tol is None else tol
    rng = np.random.default_rng(0) if rng is None else rng
    p = f.degree
    total = p * p

    U = random_unitary(3, rng)
    F = _dehomogenized(compose_linear(f, U))
    G = _dehomogenized(compose_linear(g, U))

    # resultant in y, sampled on the unit circle and interpolated
    M = total + 1
    xs = np.exp(2j * np.pi * np.arange(M) / M)
    vals = np.empty(M, dtype=np.complex128)
    bound = 0.0
    for j, x in enumerate(xs):
        S = _sylvester(_y_coeffs(F, x), _y_coeffs(G, x))
        vals[j] = np.linalg.det(S)
        bound = max(bound, float(np.prod(np.linalg.norm(S, axis=1))))
    if np.max(np.abs(vals)) <= 1e-10 * bound:
        raise SharedFactor("resultant vanishes identically: the forms share a factor", degree=p)
    R = np.fft.fft(vals) / M
    keep = np.nonzero(np.abs(R) > 1e-13 * np.max(np.abs(R)))[0]
    deg = int(keep.max())
    xroots = eigvals(companion(R[deg::-1])) if deg > 0 else np.zeros(0, dtype=np.complex128)

    sols: List[np.ndarray] = []
    failed: List[np.ndarray] = []
    for x in xroots:
        yr = np.roots(_y_coeffs(F, x))
        if yr.size == 0:
            failed.append(np.array([1.0, x, 0.0]))
            continue
        gvals = np.abs([npoly.polyval(y, _y_coeffs(G, x)[::-1]) for y in yr])
        y = yr[int(np.argmin(gvals))]
        z = U @ np.array([1.0, x, y], dtype=np.complex128)
        z, ok = _newton_p2(f, g, z, tol, s.newton_max_iter)
        (sols if ok else failed).append(z)

    P = np.array(sols, dtype=np.complex128).reshape(-1, 3)
    points = [(ProjectivePoint(z), k) for z, k in cluster_points(P, s.root_cluster_rtol, _p2_verifier(f, g, s.root_cluster_rtol))]
    zs = ZeroSet(points=points, expected_total=total)
    if failed:
        logger.debug("newton failed on %d of %d candidates", len(failed), len(xroots))
        raise NewtonDivergence(
            f"{len(failed)} candidate zero(s) not polishable to tol",
            partial=points, unpolished=[[[c.real, c.imag] for c in z] for z in failed], tol=tol,
        )
    if not zs.complete:
        raise IncompleteZeroSet("zero count short of the Bezout number", total=zs.total, expected=total)
    return zs


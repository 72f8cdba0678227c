# app/services/bergman.py
"""L^2-Bergman spaces of O(p) under log-singular weights.

For a weight with log poles of order lambda_i along {l_i = 0}, a section is
square integrable iff it vanishes to order k_i = floor(p lambda_i) along each
locus, so the space is D * (all forms of degree p - sum k_i) with
D = prod l_i^k_i. Sections are kept in that factored form: values near a pole
are D(z) q(z) with no cancellation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from app.core.cache import Arrays, cache_key
from app.core.config import get_settings
from app.core.errors import BaseLocusPoint, DimensionMismatch, EmptySpace, IllConditionedGram, QuadratureDivergence
from app.services.forms import TestForm
from app.services.metrics import MetricWeight, SingularTerm, curvature_pair
from app.services.polynomials import HomogeneousPolynomial, exponents, monomial_matrix, multiply
from app.services.projective import ProjectivePoint, QuadratureGrid
from app.services.utils import normalize_rows, snap_integer

logger = logging.getLogger(__name__)


def min_vanishing_orders(p: int, h: MetricWeight) -> List[Tuple[SingularTerm, int]]:
    """Smallest k with k > p lambda - 1 for every log term (k = floor(p lambda))."""
    out = []
    for t in h.singular_terms:
        x = snap_integer(p * t.weight)
        out.append((t, int(math.floor(x)) if t.weight > 0 else 0))
    return out


def _divisor(n: int, orders: Sequence[Tuple[SingularTerm, int]]) -> Optional[HomogeneousPolynomial]:
    D: Optional[HomogeneousPolynomial] = None
    for t, k in orders:
        lf = HomogeneousPolynomial(n, 1, t.vector)
        for _ in range(k):
            D = lf if D is None else multiply(D, lf)
    return D


@dataclass(frozen=True, eq=False)
class BergmanBasis:
    p: int
    metric: MetricWeight
    orders: Tuple[Tuple[SingularTerm, int], ...]
    divisor: Optional[HomogeneousPolynomial]
    quotient_degree: int
    sections: np.ndarray          # (dim, dim); column j = section j over the quotient monomials
    gram_condition: float
    grid_key: str = ""

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def dim(self) -> int:
        return int(self.sections.shape[1])

    @property
    def d_kp(self) -> int:
        return self.dim - 1

    @property
    def admissible(self) -> List[Tuple[int, ...]]:
        """Quotient monomials m; the admissible generators are D * m."""
        return [tuple(int(a) for a in e) for e in exponents(self.n, self.quotient_degree)]

    @property
    def base_locus(self) -> List[SingularTerm]:
        return [t for t, k in self.orders if k >= 1]

    @property
    def key(self) -> str:
        return cache_key("basis", {"p": self.p, "metric": self.metric.key, "grid": self.grid_key})

    # ---- pointwise data ----
    def log_weight(self, Z: np.ndarray) -> np.ndarray:
        """log(|D(z)|^2 exp(-2 p phi(z))) for unit z; -inf on the base locus."""
        Z = normalize_rows(Z)
        out = -2.0 * self.p * self.metric.smooth_values(Z)
        with np.errstate(divide="ignore", invalid="ignore"):
            for t, k in self.orders:
                e = 2.0 * k - 2.0 * self.p * t.weight
                d = t.distance(Z)
                if abs(e) > 1e-12:
                    out = out + e * np.log(d)
                # on the locus itself the section vanishes
                out = np.where(d == 0.0, -np.inf, out)
        return out

    def quotient_values(self, Z: np.ndarray) -> np.ndarray:
        """(N, dim) values q_j(z), with s_j = D q_j."""
        return monomial_matrix(normalize_rows(Z), self.n, self.quotient_degree) @ self.sections

    def divisor_values(self, Z: np.ndarray) -> np.ndarray:
        Z = normalize_rows(Z)
        out = np.ones(Z.shape[0], dtype=np.complex128)
        for t, k in self.orders:
            out = out * (Z @ t.vector) ** k
        return out

    def section_values(self, Z: np.ndarray) -> np.ndarray:
        return self.divisor_values(Z)[:, None] * self.quotient_values(Z)

    def log_kernel(self, Z: np.ndarray) -> np.ndarray:
        q = self.quotient_values(Z)
        with np.errstate(divide="ignore"):
            return self.log_weight(Z) + np.log(np.sum(np.abs(q) ** 2, axis=1))


def _gram_block(Zb: np.ndarray, wb: np.ndarray, n: int, qdeg: int) -> np.ndarray:
    V = monomial_matrix(Zb, n, qdeg)
    return (V.conj().T * wb) @ V


def _gram(grid: QuadratureGrid, n: int, qdeg: int, log_w: np.ndarray) -> np.ndarray:
    s = get_settings()
    w = grid.weights * np.exp(log_w)
    bs = s.gram_block_size
    blocks = [(grid.points[i:i + bs], w[i:i + bs]) for i in range(0, len(grid), bs)]
    parts = Parallel(n_jobs=s.n_jobs)(delayed(_gram_block)(Zb, wb, n, qdeg) for Zb, wb in blocks)
    G = np.zeros_like(parts[0])
    for part in parts:  # fixed reduction order
        G += part
    return 0.5 * (G + G.conj().T)


def build_basis(p: int, h: MetricWeight, grid: QuadratureGrid) -> BergmanBasis:
    if grid.n != h.n:
        raise DimensionMismatch("grid and metric dimensions differ", grid=grid.n, metric=h.n)
    if p < 1:
        raise ValueError("p must be >= 1")
    s = get_settings()
    orders = tuple(min_vanishing_orders(p, h))
    K = sum(k for _, k in orders)
    if K > p:
        raise EmptySpace("no section meets the required vanishing orders", p=p, required=K)
    qdeg = p - K

    proto = BergmanBasis(
        p=p, metric=h, orders=orders, divisor=_divisor(h.n, orders), quotient_degree=qdeg,
        sections=np.eye(math.comb(h.n + qdeg, h.n), dtype=np.complex128), gram_condition=1.0,
        grid_key=grid.key,
    )
    G = _gram(grid, h.n, qdeg, proto.log_weight(grid.points))

    # Jacobi scaling: conditioning then reflects dependence, not monomial norms
    diag = np.real(np.diag(G))
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise IllConditionedGram("non-positive Gram diagonal", p=p)
    S = 1.0 / np.sqrt(diag)
    Gs = (G * S[:, None]) * S[None, :]
    lam, V = np.linalg.eigh(Gs)
    lmax = float(lam[-1])
    cond = float(lmax / lam[0]) if lam[0] > 0 else math.inf
    if lam[0] < s.gram_eig_floor * lmax or cond > s.gram_max_condition:
        raise IllConditionedGram(
            "Gram matrix is numerically singular; refine the quadrature",
            p=p, condition=cond, min_eigenvalue=float(lam[0]),
        )
    C = (S[:, None] * V) / np.sqrt(lam)[None, :]
    basis = replace(proto, sections=C, gram_condition=cond)
    logger.info("bergman basis p=%d dim=%d cond=%.3g", p, basis.dim, cond)
    return basis


def rotate_basis(B: BergmanBasis, U: np.ndarray) -> BergmanBasis:
    """Same space, orthonormal basis replaced by s' = s U for a unitary U."""
    return replace(B, sections=B.sections @ np.asarray(U, dtype=np.complex128))


# ------------ kernel, currents, Kodaira map ------------
def bergman_kernel_at(B: BergmanBasis, x: ProjectivePoint) -> float:
    return float(bergman_kernel(B, x.coords[None, :])[0])


def bergman_kernel(B: BergmanBasis, Z: np.ndarray) -> np.ndarray:
    """P(z) = sum |s_j(z)|^2 exp(-2 p phi(z)); 0 on the singular locus."""
    with np.errstate(over="ignore"):
        return np.exp(B.log_kernel(Z))


def fs_current_pair(B: BergmanBasis, u: TestForm, grid: QuadratureGrid) -> float:
    """<gamma_p, u> = p <c_1(L,h), u> + (1/2) int log P dd^c u."""
    logP = B.log_kernel(grid.points)
    if not np.all(np.isfinite(logP)):
        raise QuadratureDivergence("log Bergman kernel is not finite on the grid", p=B.p)
    return B.p * curvature_pair(B.metric, u, grid) + 0.5 * grid.integrate(logP * u.ddc(grid))


def kodaira_vector(B: BergmanBasis, x: ProjectivePoint) -> np.ndarray:
    """(s_j(x) e^{-p phi(x)})_j; its squared norm is P(x)."""
    if x.n != B.n:
        raise DimensionMismatch("point and basis dimensions differ", point=x.n, basis=B.n)
    Z = x.coords[None, :]
    if np.isneginf(B.log_weight(Z)[0]):
        raise BaseLocusPoint("point lies on the base locus", coords=[[z.real, z.imag] for z in x.coords])
    q = B.quotient_values(Z)[0]
    d = B.divisor_values(Z)[0]
    return np.exp(0.5 * B.log_weight(Z)[0]) * (d / abs(d) if abs(d) > 0 else 1.0) * q


def kodaira_map(B: BergmanBasis, x: ProjectivePoint) -> ProjectivePoint:
    v = kodaira_vector(B, x)
    if not np.any(v):
        raise BaseLocusPoint("all sections vanish at the point")
    return ProjectivePoint(v)


# ------------ diagnostics ------------
def orthonormality_residual(B: BergmanBasis, grid: QuadratureGrid) -> float:
    G = _gram(grid, B.n, B.quotient_degree, B.log_weight(grid.points))
    M = B.sections.conj().T @ G @ B.sections
    return float(np.max(np.abs(M - np.eye(B.dim))))


def dimension_bounds_hold(B: BergmanBasis, C: float) -> bool:
    pn = B.p ** B.n
    return pn / C <= B.d_kp <= C * pn


def section_polynomial(B: BergmanBasis, coeffs: np.ndarray) -> HomogeneousPolynomial:
    """sum_j coeffs_j s_j as a degree-p form in graded-lex order."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.shape != (B.dim,):
        raise DimensionMismatch("coefficient vector does not match the basis", expected=B.dim, got=list(coeffs.shape))
    q = HomogeneousPolynomial(B.n, B.quotient_degree, B.sections @ coeffs, allow_zero=True)
    return q if B.divisor is None else multiply(B.divisor, q)


def basis_summary(B: BergmanBasis) -> dict:
    return {
        "p": B.p,
        "n": B.n,
        "dim": B.dim,
        "d_kp": B.d_kp,
        "gram_condition": B.gram_condition,
        "vanishing_orders": [{"form": [[z.real, z.imag] for z in t.form], "lambda": t.weight, "order": k}
                             for t, k in B.orders],
        "base_locus": [[[z.real, z.imag] for z in t.form] for t in B.base_locus],
    }


# ------------ cache codec ------------
def encode_basis(B: BergmanBasis) -> Arrays:
    return {
        "sections": B.sections,
        "meta": np.array([B.p, B.quotient_degree], dtype=np.int64),
        "orders": np.array([k for _, k in B.orders], dtype=np.int64),
        "gram_condition": np.array(B.gram_condition),
        "grid_key": np.array(B.grid_key),
    }


def decode_basis(arrays: Arrays, h: MetricWeight) -> BergmanBasis:
    p, qdeg = (int(v) for v in arrays["meta"])
    orders = tuple(zip(h.singular_terms, (int(k) for k in arrays["orders"])))
    return BergmanBasis(
        p=p, metric=h, orders=orders, divisor=_divisor(h.n, orders), quotient_degree=qdeg,
        sections=arrays["sections"], gram_condition=float(arrays["gram_condition"]),
        grid_key=str(arrays["grid_key"]),
    )

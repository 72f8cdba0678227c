# app/services/equidistribution.py
"""Discrepancy of normalized zero currents against curvature targets, the
exceptional-set experiment and the meromorphic-transform constants."""
from __future__ import annotations

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import gammaln

from app.core.config import get_settings
from app.core.errors import IncompleteZeroSet, InvalidDimension, SolverError, UnsupportedSingularWedge
from app.services.bergman import BergmanBasis, fs_current_pair, section_polynomial
from app.services.forms import TestForm, constant_form
from app.services.measures import (
    MeasureSpec,
    SectionSample,
    build_probes,
    effective_sample_size,
    estimate_capacity_constants,
    fs_capacity_bound,
    hypothesis_ratios,
    sample_sigma_p,
    sampler_for,
)
from app.services.metrics import MetricWeight, curvature_matrix, curvature_pair
from app.services.polynomials import ZeroSet, common_zeros_p2, roots_p1
from app.services.projective import QuadratureGrid, chordal_distances
from app.services.utils import PointFunction, log_multinomial, mixed_discriminant2
from app.spec.dictionary import DICTIONARY, DICTIONARY_VERSION, PROBE_VERSION

if TYPE_CHECKING:
    from app.schemas.config import ExperimentConfig

logger = logging.getLogger(__name__)


# ------------ dictionary ------------
def _center(pairs: Sequence[Sequence[float]]) -> np.ndarray:
    c = np.array([complex(re, im) for re, im in pairs], dtype=np.complex128)
    return c / np.linalg.norm(c)


def _test_function(spec: dict) -> PointFunction:
    kind = spec["kind"]
    if kind == "const":
        v = float(spec["value"])
        return lambda Z: np.full(Z.shape[0], v)
    if kind == "coord":
        k = spec["k"]
        return lambda Z: np.abs(Z[:, k]) ** 2
    if kind in ("re", "im"):
        j, k = spec["j"], spec["k"]
        part = np.real if kind == "re" else np.imag
        return lambda Z: part(Z[:, j] * np.conj(Z[:, k]))
    if kind == "power":
        k, e = spec["k"], spec["e"]
        return lambda Z: np.abs(Z[:, k]) ** (2 * e)
    if kind == "bump":
        c, w2 = _center(spec["center"]), spec["width"] ** 2
        return lambda Z: np.exp(-(1.0 - np.abs(Z @ np.conj(c)) ** 2) / w2)
    raise ValueError(f"unknown test-function kind {kind!r}")


def build_dictionary(n: int, version: str = DICTIONARY_VERSION) -> List[TestForm]:
    try:
        specs = DICTIONARY[version][n]
    except KeyError:
        raise InvalidDimension("no dictionary for this version and dimension", n=n, version=version) from None
    return [TestForm(s["name"], _test_function(s)) for s in specs]


# ------------ pairings ------------
def zero_current_pair(Z: ZeroSet, u: TestForm, p: int, m: int, strict: bool = False) -> float:
    """(1/p^m) sum of multiplicity * u(point) over the zero set."""
    if strict and not Z.complete:
        raise IncompleteZeroSet("zero count short of the Bezout number", total=Z.total, expected=Z.expected_total)
    if not Z.points:
        return 0.0
    pts, mult = Z.coords()
    return float(np.dot(mult, u(pts)) / p**m)


def _pair_vector(Z: ZeroSet, dictionary: Sequence[TestForm], p: int, m: int, strict: bool) -> np.ndarray:
    return np.array([zero_current_pair(Z, u, p, m, strict) for u in dictionary])


def curvature_target(metrics: Sequence[MetricWeight], u: TestForm, grid: QuadratureGrid) -> float:
    """<c_1(L_1, h_1) ^ ... ^ c_1(L_m, h_m), u> for m = 1, or m = 2 on P^2 with smooth weights."""
    if len(metrics) == 1:
        return curvature_pair(metrics[0], u, grid)
    if len(metrics) != 2 or grid.n != 2:
        raise InvalidDimension("wedge targets exist for m = 1 and for m = 2 on P^2", m=len(metrics), n=grid.n)
    if any(h.singular_terms for h in metrics):
        raise UnsupportedSingularWedge("m = 2 targets need smooth weights")
    A = curvature_matrix(metrics[0], grid.points)
    B = curvature_matrix(metrics[1], grid.points)
    density = np.real(mixed_discriminant2(A, B))  # against omega_FS^2
    return grid.integrate(u.values(grid) * density)


@dataclass
class DiscrepancyContext:
    """Targets and C^2 norms of a dictionary, computed once per (metrics, grid)."""

    dictionary: List[TestForm]
    targets: np.ndarray
    norms: np.ndarray

    @property
    def names(self) -> List[str]:
        return [u.name for u in self.dictionary]


def discrepancy_context(metrics: Sequence[MetricWeight], dictionary: Sequence[TestForm],
                        grid: QuadratureGrid) -> DiscrepancyContext:
    targets = np.array([curvature_target(metrics, u, grid) for u in dictionary])
    norms = np.array([u.c2_norm(grid) for u in dictionary])
    return DiscrepancyContext(list(dictionary), targets, norms)


def zero_set(sample: SectionSample, bases: Sequence[BergmanBasis], rng: Optional[np.random.Generator] = None) -> ZeroSet:
    """Common zeros of the sampled sections (raises SolverError subclasses)."""
    polys = [section_polynomial(B, v) for B, v in zip(bases, sample.tuple)]
    n = bases[0].n
    if len(polys) == 1 and n == 1:
        return roots_p1(polys[0])
    if len(polys) == 2 and n == 2:
        return common_zeros_p2(polys[0], polys[1], rng=rng)
    raise InvalidDimension("no zero solver for this (n, m)", n=n, m=len(polys))


def discrepancy(sample: SectionSample, bases: Sequence[BergmanBasis], metrics: Sequence[MetricWeight],
                dictionary: Sequence[TestForm], grid: QuadratureGrid,
                context: Optional[DiscrepancyContext] = None, rng: Optional[np.random.Generator] = None,
                strict: bool = False) -> float:
    ctx = context or discrepancy_context(metrics, dictionary, grid)
    Z = zero_set(sample, bases, rng)
    p, m = bases[0].p, len(bases)
    pairs = _pair_vector(Z, ctx.dictionary, p, m, strict)
    return float(np.max(np.abs(pairs - ctx.targets) / ctx.norms))


def expected_pairs(basis: BergmanBasis, dictionary: Sequence[TestForm], grid: QuadratureGrid) -> np.ndarray:
    """E<(1/p)[s = 0], u> under FS sampling: <gamma_p, u> / p (m = 1)."""
    return np.array([fs_current_pair(basis, u, grid) / basis.p for u in dictionary])


def fs_current_gap(basis: BergmanBasis, dictionary: Sequence[TestForm], grid: QuadratureGrid) -> float:
    """max over the dictionary of |<gamma_p / p, u> - <c_1(L, h), u>|."""
    exp = expected_pairs(basis, dictionary, grid)
    tgt = np.array([curvature_pair(basis.metric, u, grid) for u in dictionary])
    return float(np.max(np.abs(exp - tgt)))


# ------------ constants ------------
@dataclass
class ConstantsReport:
    p: int
    m: int
    d_kp: List[int]
    d_0p: int
    c_0p: float
    log_c_0p: float
    d_p: float
    delta_p: float
    r_bound: float
    R_hat: float
    R_source: str
    epsilon: float
    eta: float
    wedge_mass: float
    hypothesis: Tuple[float, float] = (math.nan, math.nan)

    def c0_residual(self) -> float:
        """| -d_0p log c_0p - log(d_0p! / prod d_kp!) |."""
        return abs(-self.d_0p * self.log_c_0p - log_multinomial(self.d_0p, self.d_kp))

    def c0_floor_holds(self, c0: float) -> bool:
        return self.c_0p >= c0

    def delta_ratio_holds(self, C: float) -> bool:
        return self.delta_p / self.d_p <= C / self.p

    def to_dict(self) -> dict:
        return {
            "p": self.p, "m": self.m, "d_kp": self.d_kp, "d_0p": self.d_0p,
            "c_0p": self.c_0p, "d_p": self.d_p, "delta_p": self.delta_p,
            "delta_p_times_p_over_d_p": self.delta_p * self.p / self.d_p,
            "r_bound": self.r_bound, "R_hat": self.R_hat, "R_source": self.R_source,
            "epsilon": self.epsilon, "eta": self.eta, "wedge_mass": self.wedge_mass,
            "hypothesis_ratios": list(self.hypothesis), "c0_residual": self.c0_residual(),
        }


def log_c0(dks: Sequence[int]) -> float:
    d0 = sum(dks)
    return -float(gammaln(d0 + 1) - sum(gammaln(d + 1) for d in dks)) / d0


def _mass(metrics: Sequence[MetricWeight], grid: QuadratureGrid) -> float:
    if not metrics:
        return 1.0
    try:
        return curvature_target(metrics, constant_form(1.0), grid)
    except UnsupportedSingularWedge:
        # intersection number of the classes; singular wedges are not integrated
        return 1.0


def dinh_sibony_constants(p: int, bases: Sequence[BergmanBasis], metrics: Sequence[MetricWeight], epsilon: float,
                          grid: QuadratureGrid, measure: Optional[MeasureSpec] = None, nsamples: int = 0,
                          rng: Optional[np.random.Generator] = None,
                          probe_version: str = PROBE_VERSION) -> ConstantsReport:
    m = len(bases)
    dks = [B.d_kp for B in bases]
    d0 = sum(dks)
    lc0 = log_c0(dks)
    c0 = math.exp(lc0)

    wedge = _mass(metrics, grid)
    if abs(wedge - round(wedge)) > 1e-3:
        logger.warning("wedge mass %.6f is far from its integer class", wedge)
    d_p = float(p**m * round(wedge))
    tail = sum((dk / d0) * round(_mass([h for j, h in enumerate(metrics) if j != k], grid))
               for k, dk in enumerate(dks))
    delta_p = p ** (m - 1) / c0 * tail
    r_bound = max(d0 / dk for dk in dks)

    if nsamples > 0:
        rng = rng or np.random.default_rng(0)
        spec = measure or MeasureSpec()
        ests = [estimate_capacity_constants(sampler_for(spec, dk), build_probes(dk, probe_version), [0.0],
                                            nsamples, rng, scale=c0) for dk in dks]
        R_hat, source = max(e.R for e in ests), "monte_carlo"
    else:
        R_hat, source = max(c0 * fs_capacity_bound(dk) for dk in dks), "fs_bound"

    eta = epsilon * d_p / delta_p - 3.0 * R_hat
    report = ConstantsReport(
        p=p, m=m, d_kp=dks, d_0p=d0, c_0p=c0, log_c_0p=lc0, d_p=d_p, delta_p=delta_p, r_bound=r_bound,
        R_hat=R_hat, R_source=source, epsilon=epsilon, eta=eta, wedge_mass=wedge,
        hypothesis=hypothesis_ratios(dks, (measure or MeasureSpec()).rho),
    )
    logger.info("constants p=%d c_0p=%.6g d_p=%g delta_p=%.6g eta=%.4g", p, c0, d_p, delta_p, eta)
    return report


# ------------ experiments ------------
def lambda_p(rule: str, coeff: float, p: int) -> float:
    if rule == "log":
        return coeff * math.log(p)
    if rule == "power":
        return float(p) ** coeff
    raise ValueError(f"unknown lambda rule {rule!r}")


def weighted_quantiles(x: np.ndarray, w: np.ndarray, qs: Sequence[float]) -> np.ndarray:
    if x.size == 0:
        return np.full(len(qs), math.nan)
    order = np.argsort(x)
    xs, ws = x[order], w[order]
    cw = np.cumsum(ws) / ws.sum()
    idx = np.searchsorted(cw, np.asarray(qs), side="left")
    return xs[np.clip(idx, 0, xs.size - 1)]


QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass
class ExperimentRecord:
    p: int
    nsamples: int
    discrepancies: np.ndarray        # successful samples, in sample order
    weights: np.ndarray
    pairs: np.ndarray                # (successes, len(dictionary))
    dictionary: List[str]
    lambda_p: float
    threshold: float
    seed: int
    wall_time: float = 0.0
    failures: Dict[str, int] = field(default_factory=dict)
    near_fraction: Optional[np.ndarray] = None

    @property
    def n_failed(self) -> int:
        return sum(self.failures.values())

    @property
    def mean(self) -> float:
        if self.discrepancies.size == 0:
            return math.nan
        return float(np.dot(self.weights, self.discrepancies) / self.weights.sum())

    @property
    def quantiles(self) -> np.ndarray:
        return weighted_quantiles(self.discrepancies, self.weights, QUANTILES)

    @property
    def median(self) -> float:
        return float(weighted_quantiles(self.discrepancies, self.weights, [0.5])[0])

    @property
    def exceptional_fraction(self) -> float:
        if self.discrepancies.size == 0:
            return math.nan
        return float(np.dot(self.weights, self.discrepancies > self.threshold) / self.weights.sum())

    @property
    def ess(self) -> float:
        return effective_sample_size(self.weights) if self.weights.size else 0.0

    def pair_means(self) -> Tuple[np.ndarray, np.ndarray]:
        """Weighted means of <(1/p^m)[S = 0], u> per dictionary member, with delta-method stderrs."""
        w = self.weights
        sw = w.sum()
        mu = (w @ self.pairs) / sw
        se = np.sqrt(np.sum((w[:, None] * (self.pairs - mu)) ** 2, axis=0)) / sw
        return mu, se

    def mean_near_fraction(self) -> float:
        if self.near_fraction is None or self.near_fraction.size == 0:
            return math.nan
        return float(np.dot(self.weights, self.near_fraction) / self.weights.sum())


@dataclass
class _Outcome:
    index: int
    disc: float = math.nan
    weight: float = 1.0
    pairs: Optional[np.ndarray] = None
    near: float = math.nan
    failure: Optional[str] = None


def _one_sample(p: int, i: int, seed: int, bases: Sequence[BergmanBasis], ctx: DiscrepancyContext,
                spec: MeasureSpec, strict: bool, atoms: np.ndarray, radius: float) -> _Outcome:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(p, i)))
    sample = sample_sigma_p(bases, spec, rng)
    try:
        Z = zero_set(sample, bases, rng)
        pairs = _pair_vector(Z, ctx.dictionary, p, len(bases), strict)
    except SolverError as e:
        logger.debug("sample %d at p=%d failed: %s", i, p, e)
        return _Outcome(index=i, failure=type(e).__name__)
    out = _Outcome(index=i, disc=float(np.max(np.abs(pairs - ctx.targets) / ctx.norms)),
                   weight=sample.importance_weight, pairs=pairs)
    if atoms.size and Z.points:
        pts, mult = Z.coords()
        close = np.zeros(pts.shape[0], dtype=bool)
        for a in atoms:
            close |= chordal_distances(pts, a) < radius
        out.near = float(np.dot(mult, close) / Z.expected_total)
    return out


def _run_chunk(p: int, indices: Sequence[int], *args) -> List[_Outcome]:
    return [_one_sample(p, i, *args) for i in indices]


def run_level(p: int, bases: Sequence[BergmanBasis], ctx: DiscrepancyContext, spec: MeasureSpec, nsamples: int,
              seed: int, lam: float = math.nan, threshold: float = math.inf, strict: bool = False,
              atoms: Optional[np.ndarray] = None, radius: float = 0.1) -> ExperimentRecord:
    """Sample nsamples section tuples at level p; order of results is the sample order."""
    t0 = time.perf_counter()
    n_jobs = get_settings().n_jobs
    atoms = np.zeros((0, bases[0].n + 1), dtype=np.complex128) if atoms is None else atoms
    nchunks = max(1, min(nsamples, 4 * max(1, n_jobs)))
    chunks = [c.tolist() for c in np.array_split(np.arange(nsamples), nchunks) if c.size]
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_run_chunk)(p, idx, seed, bases, ctx, spec, strict, atoms, radius) for idx in chunks
    )
    outcomes = [o for part in parts for o in part]
    ok = [o for o in outcomes if o.failure is None]
    failures = dict(Counter(o.failure for o in outcomes if o.failure is not None))
    if failures:
        logger.warning("p=%d: %d of %d samples failed %s", p, sum(failures.values()), nsamples, failures)
    rec = ExperimentRecord(
        p=p, nsamples=nsamples,
        discrepancies=np.array([o.disc for o in ok]),
        weights=np.array([o.weight for o in ok]),
        pairs=np.array([o.pairs for o in ok]).reshape(len(ok), len(ctx.dictionary)),
        dictionary=ctx.names, lambda_p=lam, threshold=threshold, seed=seed,
        wall_time=time.perf_counter() - t0, failures=failures,
        near_fraction=np.array([o.near for o in ok]) if atoms.size else None,
    )
    logger.info("p=%d samples=%d median=%.4g failed=%d", p, nsamples, rec.median, rec.n_failed)
    return rec


def fit_threshold(record: ExperimentRecord, quantile: float) -> float:
    """C such that C lambda_p / p is the given quantile of the baseline discrepancies."""
    q = float(weighted_quantiles(record.discrepancies, record.weights, [quantile])[0])
    return q * record.p / record.lambda_p


def _singular_atoms(metrics: Sequence[MetricWeight]) -> np.ndarray:
    pts = [t.zero_point().coords for h in metrics if h.n == 1 for t in h.singular_terms]
    return np.array(pts, dtype=np.complex128).reshape(-1, 2) if pts else np.zeros((0, 2), dtype=np.complex128)


def target_grid(cfg: "ExperimentConfig", metrics: Sequence[MetricWeight]) -> QuadratureGrid:
    from app.deps import get_grid

    return get_grid(cfg.run.n, cfg.resolution, metrics[0] if len(metrics) == 1 else None)


def run_experiment(cfg: "ExperimentConfig") -> List[ExperimentRecord]:
    from app.deps import build_measure, build_metrics, get_bases

    r = cfg.run
    metrics = build_metrics(cfg)
    grid = target_grid(cfg, metrics)
    ctx = discrepancy_context(metrics, build_dictionary(r.n, r.dictionary_version), grid)
    spec = build_measure(cfg.measure)
    atoms = _singular_atoms(metrics)

    def level(p: int, measure: MeasureSpec, C: float) -> ExperimentRecord:
        lam = lambda_p(r.lambda_rule, r.lambda_coeff, p)
        return run_level(p, get_bases(p, metrics, cfg.resolution), ctx, measure, r.nsamples, r.seed,
                         lam=lam, threshold=C * lam / p, strict=r.strict, atoms=atoms, radius=r.near_radius)

    C = r.threshold_C
    baseline: Optional[ExperimentRecord] = None
    if C is None:
        baseline = level(r.fit_p, MeasureSpec(), 1.0)
        C = fit_threshold(baseline, r.fit_quantile)
        logger.info("fitted threshold constant C=%.4g at p=%d", C, r.fit_p)

    records = []
    for p in r.p_list:
        if baseline is not None and p == baseline.p and spec.mode == "fs":
            lam = baseline.lambda_p
            baseline.threshold = C * lam / p
            records.append(baseline)
        else:
            records.append(level(p, spec, C))
    return records


def rate_ratios(records: Sequence[ExperimentRecord]) -> np.ndarray:
    """Median discrepancy divided by log p / p, per record."""
    return np.array([rec.median / (math.log(rec.p) / rec.p) for rec in records])

# app/services/measures.py
"""Sampling from FS and perturbed Monge-Ampere measures on P^d, moderate integrals
and Monte Carlo estimates of the capacity constants R, S, Delta."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Literal, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.special import factorial

from app.core.config import get_settings
from app.core.errors import NonPositiveDensity
from app.services.bergman import BergmanBasis
from app.services.utils import PointFunction, complex_hessian, normalize_rows
from app.spec.dictionary import PROBE_VERSION, PROBES

logger = logging.getLogger(__name__)

MeasureMode = Literal["fs", "perturbed"]
MAX_GROUPS = 3


# ------------ specs ------------
@dataclass(frozen=True)
class MeasureSpec:
    """Perturbation u_g(v) = (c_p / 2) |v_k_g|^2 / |v|^2 per group g.

    One group means every wedge factor shares u (determinant density); up to
    three groups split the N factors as evenly as possible (mixed density).
    c_p = None resolves to 0.1 / d on P^d.
    """

    mode: MeasureMode = "fs"
    c_p: Optional[float] = None
    rho: float = 0.5
    bump_coords: Tuple[int, ...] = (0,)

    def __post_init__(self):
        if not 1 <= len(self.bump_coords) <= MAX_GROUPS:
            raise ValueError(f"between 1 and {MAX_GROUPS} perturbation groups are supported")
        if self.c_p is not None and not 0.0 < self.c_p <= 1.0:
            raise ValueError("c_p must lie in (0, 1]")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")

    def modulus(self, d: int) -> float:
        return self.c_p if self.c_p is not None else 0.1 / d

    def perturbations(self, d: int) -> List[PointFunction]:
        c = self.modulus(d)

        def bump(k: int) -> PointFunction:
            kk = k % (d + 1)
            return lambda V: 0.5 * c * np.abs(V[:, kk]) ** 2 / np.sum(np.abs(V) ** 2, axis=1)

        return [bump(k) for k in self.bump_coords]

    def group_counts(self, d: int) -> List[int]:
        g = len(self.bump_coords)
        base, extra = divmod(d, g)
        return [base + (1 if i < extra else 0) for i in range(g)]


@dataclass
class SectionSample:
    tuple: List[np.ndarray]
    importance_weight: float = 1.0
    log_density_diag: float = 0.0


# ------------ FS draws and densities ------------
def sample_fs_section(d: int, rng: np.random.Generator) -> np.ndarray:
    if d < 1:
        raise ValueError("d must be >= 1")
    return sample_fs_many(d, 1, rng)[0]


def sample_fs_many(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.standard_normal((k, d + 1)) + 1j * rng.standard_normal((k, d + 1))
    return normalize_rows(G)


def _mixed_density(mats: List[np.ndarray], counts: List[int]) -> np.ndarray:
    """Batched mixed discriminant D(A_1^[n_1], ..., A_g^[n_g]) with D(A, ..., A) = det A."""
    N = sum(counts)
    if len(mats) == 1:
        return np.real(np.linalg.det(mats[0]))
    g = len(mats)
    M = N + 1
    roots = np.exp(2j * np.pi * np.arange(M) / M)
    grids = np.meshgrid(*([roots] * (g - 1)), indexing="ij")
    shape = grids[0].shape
    vals = np.empty((mats[0].shape[0],) + shape, dtype=np.complex128)
    for idx in np.ndindex(*shape):
        S = mats[-1].copy()
        for j in range(g - 1):
            S = S + grids[j][idx] * mats[j]
        vals[(slice(None),) + idx] = np.linalg.det(S)
    coef = np.fft.fftn(vals, axes=tuple(range(1, g))) / M ** (g - 1)
    c = coef[(slice(None),) + tuple(counts[:-1])]
    scale = float(np.prod(factorial(counts)) / factorial(N))
    return np.real(c) * scale


def perturbation_weights(spec: MeasureSpec, V: np.ndarray) -> np.ndarray:
    """Density of the perturbed measure against omega_FS^d at each row of V."""
    V = normalize_rows(np.atleast_2d(V))
    if spec.mode == "fs":
        return np.ones(V.shape[0])
    d = V.shape[1] - 1
    step = get_settings().fd_step
    eye = np.eye(d)[None, :, :]
    mats = [eye + 2.0 * complex_hessian(u, V, step) for u in spec.perturbations(d)]
    w = _mixed_density(mats, spec.group_counts(d))
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        i = int(np.argmin(w))
        raise NonPositiveDensity(
            "perturbation is not c_p-omega_FS-psh at a sampled point",
            weight=float(w[i]), modulus=spec.modulus(d),
        )
    return w


def perturbation_weight(spec: MeasureSpec, v: np.ndarray) -> float:
    return float(perturbation_weights(spec, np.asarray(v)[None, :])[0])


def check_perturbation_hoelder(spec: MeasureSpec, d: int, samples: int, rng: np.random.Generator) -> bool:
    """|u(v) - u(w)| <= c_p dist(v, w)^rho on random pairs, for every group."""
    c = spec.modulus(d)
    V = sample_fs_many(d, samples, rng)
    r = 10.0 ** rng.uniform(-4, 0, size=(samples, 1))
    W = normalize_rows(V + r * sample_fs_many(d, samples, rng))
    dist = np.sqrt(np.clip(1.0 - np.abs(np.sum(V.conj() * W, axis=1)) ** 2, 0.0, 1.0))
    ok = True
    for u in spec.perturbations(d):
        ok &= bool(np.all(np.abs(u(V) - u(W)) <= c * dist ** spec.rho + 1e-15))
    return ok


def sample_sigma_p(bases: Sequence[BergmanBasis], spec: MeasureSpec, rng: np.random.Generator) -> SectionSample:
    vecs = [sample_fs_section(B.d_kp, rng) for B in bases]
    if spec.mode == "fs":
        return SectionSample(tuple=vecs, importance_weight=1.0, log_density_diag=0.0)
    w = float(np.prod([perturbation_weight(spec, v) for v in vecs]))
    return SectionSample(tuple=vecs, importance_weight=w, log_density_diag=math.log(w))


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w**2))


# ------------ samplers ------------
class MeasureSampler(Protocol):
    dim: int

    def draw(self, k: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """k unit points of P^dim and their importance weights against FS."""
        ...


@dataclass
class FSSampler:
    dim: int

    def draw(self, k: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        return sample_fs_many(self.dim, k, rng), np.ones(k)


@dataclass
class PerturbedSampler:
    dim: int
    spec: MeasureSpec

    def draw(self, k: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        V = sample_fs_many(self.dim, k, rng)
        return V, perturbation_weights(self.spec, V)


def sampler_for(spec: MeasureSpec, dim: int) -> MeasureSampler:
    return FSSampler(dim) if spec.mode == "fs" else PerturbedSampler(dim, spec)


# ------------ probes ------------
@dataclass(frozen=True)
class Probe:
    name: str
    func: PointFunction

    def __call__(self, V: np.ndarray) -> np.ndarray:
        return self.func(normalize_rows(V))


@dataclass
class QpshProbe:
    family: List[Probe]
    version: str = PROBE_VERSION

    def __iter__(self):
        return iter(self.family)

    def __len__(self) -> int:
        return len(self.family)

    def by_name(self, name: str) -> Probe:
        for p in self.family:
            if p.name == name:
                return p
        raise KeyError(name)


def _probe_form(form: str, N: int) -> np.ndarray:
    if form == "diag":
        return np.ones(N + 1, dtype=np.complex128) / math.sqrt(N + 1)
    kind, _, k = form.partition(":")
    if kind != "coord":
        raise ValueError(f"unknown probe form {form!r}")
    e = np.zeros(N + 1, dtype=np.complex128)
    e[min(int(k), N)] = 1.0
    return e


def _q(form: np.ndarray) -> PointFunction:
    return lambda V: np.abs(V @ form) ** 2


def build_probes(N: int, version: str = PROBE_VERSION) -> QpshProbe:
    out: Dict[str, Probe] = {}
    for spec in PROBES[version]:
        kind = spec["kind"]
        if kind == "max":
            members = [out[m].func for m in spec["members"]]
            out[spec["name"]] = Probe(spec["name"], lambda V, ms=members: np.max([m(V) for m in ms], axis=0))
            continue
        q = _q(_probe_form(spec["form"], N))
        if kind == "log":
            f = lambda V, q=q: 0.5 * np.log(q(V))
        elif kind == "reglog":
            e2 = spec["eps"] ** 2
            f = lambda V, q=q, e2=e2: 0.5 * np.log(q(V) + e2) - 0.5 * math.log(1.0 + e2)
        elif kind == "bump":
            f = lambda V, q=q: 0.5 * q(V) - 0.5
        else:
            raise ValueError(f"unknown probe kind {kind!r}")
        out[spec["name"]] = Probe(spec["name"], f)
    return QpshProbe(list(out.values()), version=version)


def log_probe(form: np.ndarray, name: str = "log") -> Probe:
    f = np.asarray(form, dtype=np.complex128)
    f = f / np.linalg.norm(f)
    return Probe(name, lambda V: 0.5 * np.log(np.abs(V @ f) ** 2))


# ------------ estimators ------------
@dataclass
class ModerateEstimate:
    value: float
    stderr: float
    nsamples: int
    diverging: bool = False
    tail_index: float = math.inf
    checkpoints: List[float] = field(default_factory=list)


def _weighted_mean(f: np.ndarray, w: np.ndarray) -> Tuple[float, float]:
    sw = w.sum()
    est = float(np.dot(w, f) / sw)
    se = float(np.sqrt(np.sum(w**2 * (f - est) ** 2)) / sw)
    return est, se


def hill_tail_index(x: np.ndarray, k: Optional[int] = None) -> float:
    """Hill estimate of the Pareto tail index of positive samples."""
    x = np.sort(np.asarray(x, dtype=float))[::-1]
    k = k or max(10, int(math.sqrt(x.size)))
    k = min(k, x.size - 1)
    logs = np.log(x[:k] / x[k])
    m = float(np.mean(logs))
    return math.inf if m <= 0 else 1.0 / m


def moderate_integral(sampler: MeasureSampler, phi: Callable[[np.ndarray], np.ndarray], alpha: float,
                      nsamples: int, rng: np.random.Generator) -> ModerateEstimate:
    """Self-normalized estimate of int exp(-alpha phi) d sigma with a heavy-tail flag."""
    if alpha == 0:
        return ModerateEstimate(value=1.0, stderr=0.0, nsamples=nsamples)
    V, w = sampler.draw(nsamples, rng)
    with np.errstate(over="ignore", divide="ignore"):
        f = np.exp(-alpha * phi(V))
    est, se = _weighted_mean(f, w)
    tail = hill_tail_index(f)
    cps = []
    for frac in (8, 4, 2, 1):
        m = nsamples // frac
        cps.append(_weighted_mean(f[:m], w[:m])[0])
    growing = all(b > a for a, b in zip(cps, cps[1:])) and cps[-1] > 1.25 * cps[0]
    diverging = tail <= 1.5 or growing or not math.isfinite(est)
    if diverging:
        logger.info("moderate integral flagged divergent (alpha=%g, tail index %.3g)", alpha, tail)
    return ModerateEstimate(value=est, stderr=se, nsamples=nsamples, diverging=diverging,
                            tail_index=tail, checkpoints=cps)


@dataclass
class CapacityEstimate:
    R: float
    R_stderr: float
    S: float
    S_stderr: float
    delta: List[Tuple[float, float, float]]  # (t, value, stderr)
    argmax: str = ""

    def delta_values(self) -> np.ndarray:
        return np.array([v for _, v, _ in self.delta])


def estimate_capacity_constants(sampler: MeasureSampler, probes: QpshProbe, t_list: Sequence[float],
                                nsamples: int, rng: np.random.Generator, scale: float = 1.0) -> CapacityEstimate:
    """Lower bounds R, S and tail masses Delta(t) over the probe family.

    `scale` multiplies every probe (used for pulled-back factor probes on products).
    """
    if len(probes) == 0:
        raise ValueError("probe family is empty")
    V, w = sampler.draw(nsamples, rng)
    Vfs = sample_fs_many(sampler.dim, nsamples, rng)
    best_R = (-math.inf, 0.0, "")
    best_S = (-math.inf, 0.0)
    deltas = np.zeros(len(t_list))
    delta_se = np.zeros(len(t_list))
    sw = w.sum()
    for probe in probes:
        f = scale * probe(V)
        mean, se = _weighted_mean(f, w)
        if -mean > best_R[0]:
            best_R = (-mean, se, probe.name)
        g = scale * probe(Vfs)
        fs_mean = float(np.mean(g))
        if abs(mean - fs_mean) > best_S[0]:
            fs_se = float(np.std(g, ddof=1) / math.sqrt(g.size))
            best_S = (abs(mean - fs_mean), math.hypot(se, fs_se))
        centered = f - mean
        for i, t in enumerate(t_list):
            ind = (centered < -t).astype(float)
            val = float(np.dot(w, ind) / sw)
            if val > deltas[i]:
                deltas[i] = val
                delta_se[i] = float(np.sqrt(np.sum(w**2 * (ind - val) ** 2)) / sw)
    return CapacityEstimate(
        R=best_R[0], R_stderr=best_R[1], S=best_S[0], S_stderr=best_S[1],
        delta=[(float(t), float(v), float(s)) for t, v, s in zip(t_list, deltas, delta_se)],
        argmax=best_R[2],
    )


def fs_capacity_bound(N: int) -> float:
    """Bound 1/2 (1 + log N) on R for (P^N, omega_FS, omega_FS^N)."""
    return 0.5 * (1.0 + math.log(N))


def hypothesis_ratios(ells: Sequence[int], rho: float) -> Tuple[float, float]:
    """(r log l / min l_k, (rho/4)^(min l_k) l) with l = sum l_k and r = max l / l_k."""
    ell = sum(ells)
    lmin = min(ells)
    r = ell / lmin
    return r * math.log(ell) / lmin, (rho / 4.0) ** lmin * ell


@dataclass
class NeighborhoodMass:
    deltas: List[float]
    masses: List[float]
    slope: float


def hyperplane_neighborhood_mass(sampler: MeasureSampler, form: np.ndarray, deltas: Sequence[float],
                                 nsamples: int, rng: np.random.Generator) -> NeighborhoodMass:
    """sigma-mass of {dist(v, H) < delta} for the hyperplane H = {l = 0}, plus the log-log slope."""
    V, w = sampler.draw(nsamples, rng)
    f = np.asarray(form, dtype=np.complex128)
    dist = np.abs(V @ (f / np.linalg.norm(f)))
    masses = [float(np.dot(w, dist < d) / w.sum()) for d in deltas]
    pos = [(d, m) for d, m in zip(deltas, masses) if m > 0]
    slope = float(np.polyfit(np.log([d for d, _ in pos]), np.log([m for _, m in pos]), 1)[0]) if len(pos) >= 2 \
        else math.nan
    return NeighborhoodMass(list(map(float, deltas)), masses, slope)


@dataclass
class GrowthFit:
    """beta0 is a least-squares slope through the origin over the `fit_count` smallest N.

    The larger N are held out and must satisfy estimate <= beta0 * N.
    """

    Ns: List[int]
    alphas: List[float]
    estimates: List[ModerateEstimate]
    fit_count: int = 0

    def __post_init__(self):
        if not self.fit_count:
            self.fit_count = max(1, len(self.Ns) // 2)
        if not 1 <= self.fit_count <= len(self.Ns):
            raise ValueError("fit_count must lie between 1 and the number of levels")

    @property
    def beta0(self) -> float:
        N = np.asarray(self.Ns[: self.fit_count], dtype=float)
        e = np.array([x.value for x in self.estimates[: self.fit_count]])
        return float(np.dot(N, e) / np.dot(N, N))

    @property
    def held_out(self) -> List[Tuple[int, ModerateEstimate]]:
        return list(zip(self.Ns, self.estimates))[self.fit_count:]

    @property
    def holds(self) -> bool:
        if any(e.diverging or not math.isfinite(e.value) for e in self.estimates):
            return False
        b = self.beta0
        return all(e.value <= b * N for N, e in self.held_out)


def moderate_growth_fit(Ns: Sequence[int], spec: MeasureSpec, alpha0: float, nsamples: int,
                        rng: np.random.Generator, probe_name: str = "log_e0") -> GrowthFit:
    """int exp(-alpha0 (rho/4)^N phi) d sigma_N for each N, ascending, with beta0 fitted on the smaller half."""
    perturbed = replace(spec, mode="perturbed")
    ests, alphas = [], []
    Ns = sorted(Ns)
    for N in Ns:
        a = alpha0 * (perturbed.rho / 4.0) ** N
        probe = build_probes(N).by_name(probe_name)
        ests.append(moderate_integral(PerturbedSampler(N, perturbed), probe, a, nsamples, rng))
        alphas.append(a)
    return GrowthFit(list(Ns), alphas, ests)


def fs_log_probe_integral(N: int, alpha: float) -> float:
    """int |v_0|^-alpha d omega_FS on P^N (|v_0|^2 ~ Beta(1, N)); inf for alpha >= 2."""
    if alpha >= 2.0:
        return math.inf
    return math.exp(math.lgamma(1.0 - alpha / 2.0) + math.lgamma(N + 1) - math.lgamma(N + 1 - alpha / 2.0))

from __future__ import annotations

import math

import numpy as np

from app.commands import CommandContext, CommandResult
from app.deps import build_measure
from app.services.measures import (
    build_probes,
    check_perturbation_hoelder,
    estimate_capacity_constants,
    fs_capacity_bound,
    fs_log_probe_integral,
    hyperplane_neighborhood_mass,
    moderate_growth_fit,
    moderate_integral,
    sampler_for,
)

CLOSED_FORM_TOL = 0.05
CAPACITY_TOL = 0.02


def _log_slope(ts, values) -> float:
    pts = [(t, v) for t, v in zip(ts, values) if v > 0]
    if len(pts) < 2:
        return math.nan
    return float(np.polyfit([t for t, _ in pts], np.log([v for _, v in pts]), 1)[0])


def run(ctx: CommandContext) -> CommandResult:
    """Moderate integrals, capacity constants R, S, Delta and the perturbed growth fit on P^n."""
    cfg = ctx.cfg
    r = cfg.run
    out = CommandResult(ctx)
    spec = build_measure(cfg.measure)
    N = r.n
    sampler = sampler_for(spec, N)
    probes = build_probes(N, r.probe_version)
    phi = probes.by_name("log_e0")
    fs = spec.mode == "fs"

    if not fs:
        out.check("perturbation_hoelder", check_perturbation_hoelder(spec, N, 2000, ctx.rng(1)))

    for j, alpha in enumerate(r.alpha_list):
        est = moderate_integral(sampler, phi, alpha, r.nsamples, ctx.rng(2, j))
        out.add(f"moderate.alpha={alpha:g}", est.value, stderr=est.stderr, nsamples=r.nsamples)
        out.add(f"tail_index.alpha={alpha:g}", est.tail_index)
        out.add(f"diverging.alpha={alpha:g}", float(est.diverging))
        if fs:
            exact = fs_log_probe_integral(N, alpha)
            if math.isfinite(exact):
                out.check(f"closed_form.alpha={alpha:g}", not est.diverging and abs(est.value - exact) <= CLOSED_FORM_TOL,
                          estimate=est.value, exact=exact)
            else:
                out.check(f"divergence_flag.alpha={alpha:g}", est.diverging, tail_index=est.tail_index)

    cap = estimate_capacity_constants(sampler, probes, r.t_list, r.nsamples, ctx.rng(3))
    out.add("R", cap.R, stderr=cap.R_stderr, nsamples=r.nsamples)
    out.add("S", cap.S, stderr=cap.S_stderr, nsamples=r.nsamples)
    for t, v, s in cap.delta:
        out.add(f"Delta.t={t:g}", v, stderr=s, nsamples=r.nsamples)
    slope = _log_slope([t for t, _, _ in cap.delta], cap.delta_values())
    out.add("Delta.log_slope", slope)
    out.results["capacity"] = {"R": cap.R, "S": cap.S, "argmax": cap.argmax, "bound": fs_capacity_bound(N)}
    out.check("delta_decay", slope < 0, slope=slope)
    if fs and N == 1:
        out.check("capacity_R", abs(cap.R - 0.5) <= CAPACITY_TOL, R=cap.R, bound=fs_capacity_bound(N))

    e = np.zeros(N + 1, dtype=np.complex128)
    e[0] = 1.0
    nb = hyperplane_neighborhood_mass(sampler, e, r.deltas, r.nsamples, ctx.rng(4))
    for d, m in zip(nb.deltas, nb.masses):
        out.add(f"hyperplane_mass.delta={d:g}", m, nsamples=r.nsamples)
    out.add("hyperplane_mass.log_slope", nb.slope)

    fit = moderate_growth_fit(r.N_list, spec, r.alpha0, r.nsamples, ctx.rng(5))
    for Nk, a, est in zip(fit.Ns, fit.alphas, fit.estimates):
        out.add(f"growth.N={Nk}", est.value, stderr=est.stderr, nsamples=r.nsamples)
    out.add("growth.beta0", fit.beta0)
    out.check("growth_fit", fit.holds, beta0=fit.beta0, fitted_on=fit.Ns[: fit.fit_count],
              held_out={str(Nk): est.value for Nk, est in fit.held_out})
    return out

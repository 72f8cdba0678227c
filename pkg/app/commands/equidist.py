from __future__ import annotations

import math

import numpy as np

from app.commands import CommandContext, CommandResult, nonincreasing
from app.deps import build_metrics
from app.services.equidistribution import QUANTILES, rate_ratios, run_experiment

ATOM_TOL = 0.05
EXCEPTIONAL_MAX = 0.05


def _atom_oracle(metrics, radius: float) -> float:
    """lambda per atom plus the smooth mass of the chordal balls (omega-mass of a ball is r^2)."""
    h = metrics[0]
    return sum(t.weight for t in h.singular_terms) + (1.0 - h.total_lambda) * len(h.singular_terms) * radius**2


def run(ctx: CommandContext) -> CommandResult:
    cfg = ctx.cfg
    r = cfg.run
    out = CommandResult(ctx)
    metrics = build_metrics(cfg)
    records = run_experiment(cfg)

    for rec in records:
        ns = rec.discrepancies.size
        out.add("mean", rec.mean, p=rec.p, nsamples=ns)
        out.add("median", rec.median, p=rec.p, nsamples=ns)
        for q, v in zip(QUANTILES, rec.quantiles):
            out.add(f"q{int(round(100 * q)):02d}", v, p=rec.p, nsamples=ns)
        f = rec.exceptional_fraction
        out.add("exceptional_fraction", f, p=rec.p, stderr=math.sqrt(max(f * (1 - f), 0.0) / max(ns, 1)),
                nsamples=ns)
        out.add("lambda_p", rec.lambda_p, p=rec.p)
        out.add("threshold", rec.threshold, p=rec.p)
        out.add("failed", rec.n_failed, p=rec.p, nsamples=rec.nsamples)
        out.add("ess", rec.ess, p=rec.p, nsamples=ns)
        if rec.near_fraction is not None:
            out.add("near_fraction", rec.mean_near_fraction(), p=rec.p, nsamples=ns)
        out.results[f"p{rec.p}"] = {"failures": rec.failures, "quantiles": rec.quantiles.tolist()}
        if not r.deterministic:
            out.results[f"p{rec.p}"]["wall_time"] = rec.wall_time

    ratios = rate_ratios(records)
    for rec, v in zip(records, ratios):
        out.add("rate_ratio", v, p=rec.p)
    fs_baseline = r.m == 1 and all(h.is_fs for h in metrics) and cfg.measure.mode == "fs"
    if fs_baseline and len(records) >= 2:
        band = float(np.nanmax(ratios) / np.nanmin(ratios))
        out.check("rate_band", band <= r.rate_band, band=band, limit=r.rate_band)

    late = [rec for rec in records if rec.p >= r.fit_p]
    if len(late) >= 2:
        fr = [rec.exceptional_fraction for rec in late]
        # two binomial standard errors of Monte Carlo slack
        slack = max(2.0 * math.sqrt(f * (1 - f) / max(rec.discrepancies.size, 1)) for f, rec in zip(fr, late))
        out.check("exceptional_decay", nonincreasing(fr, slack), fractions=fr)
        if fs_baseline:
            out.check("exceptional_bound", fr[-1] <= EXCEPTIONAL_MAX, p=late[-1].p, fraction=fr[-1])

    if r.n == 1 and r.m == 1 and metrics[0].singular_terms:
        expected = _atom_oracle(metrics, r.near_radius)
        last = records[-1]
        got = last.mean_near_fraction()
        out.check("atom_mass", abs(got - expected) <= ATOM_TOL, p=last.p, fraction=got, expected=expected)
    return out

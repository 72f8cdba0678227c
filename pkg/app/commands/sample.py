from __future__ import annotations

import numpy as np

from app.commands import CommandContext, CommandResult
from app.deps import build_measure, build_metrics, get_bases
from app.services.equidistribution import (
    build_dictionary,
    discrepancy_context,
    expected_pairs,
    run_level,
    target_grid,
)

ORACLE_MAX_P = 20
BEZOUT_MIN_RATE = 0.999


def run(ctx: CommandContext) -> CommandResult:
    """Draw sigma_p samples, solve for zeros, and check the expectation identity / Bezout counts."""
    cfg = ctx.cfg
    r = cfg.run
    out = CommandResult(ctx)
    metrics = build_metrics(cfg)
    grid = target_grid(cfg, metrics)
    c = discrepancy_context(metrics, build_dictionary(r.n, r.dictionary_version), grid)
    spec = build_measure(cfg.measure)

    for p in r.p_list:
        bases = get_bases(p, metrics, cfg.resolution)
        rec = run_level(p, bases, c, spec, r.nsamples, r.seed, strict=r.strict)
        ok = r.nsamples - rec.n_failed
        out.add("complete_rate", ok / r.nsamples, p=p, nsamples=r.nsamples)
        out.add("failed", rec.n_failed, p=p, nsamples=r.nsamples)
        out.add("ess", rec.ess, p=p, nsamples=r.nsamples)
        out.results[f"p{p}"] = {"failures": rec.failures, "ess": rec.ess}

        if r.m == 2:
            out.check(f"p{p}.bezout", ok >= BEZOUT_MIN_RATE * r.nsamples, complete=ok, nsamples=r.nsamples,
                      failures=rec.failures)
            continue
        mu, se = rec.pair_means()
        for name, v, s in zip(rec.dictionary, mu, se):
            out.add(f"pair.{name}", v, p=p, stderr=s, nsamples=ok)
        if spec.mode == "fs" and p <= ORACLE_MAX_P:
            expected = expected_pairs(bases[0], c.dictionary, grid)
            gap = np.abs(mu - expected)
            within = gap <= 3.0 * se + 1e-8
            for name, e in zip(rec.dictionary, expected):
                out.add(f"expected.{name}", e, p=p)
            out.check(f"p{p}.expectation_identity", bool(np.all(within)),
                      worst=rec.dictionary[int(np.argmax(gap / (se + 1e-12)))])
    return out

from __future__ import annotations

import numpy as np

from app.commands import CommandContext, CommandResult, nonincreasing
from app.deps import build_target, get_grid
from app.services.current_approx import (
    concentrated_sampler,
    exceptional_frequency,
    kac_roots,
    potential_consistency,
    root_continuity,
    roots_from_measure,
    support_distance,
    support_halving,
)
from app.services.equidistribution import build_dictionary

CONSISTENCY_TOL = 1e-2
HALVING_BAND = (0.35, 0.65)
CONSISTENCY_FORMS = ("u0", "u1", "re01", "im01", "bump_n")


def run(ctx: CommandContext) -> CommandResult:
    """Root placement from a target current, weak convergence and the concentrated sampler."""
    cfg = ctx.cfg
    r = cfg.run
    t = cfg.target
    assert t is not None  # guaranteed by config validation
    out = CommandResult(ctx)
    T = build_target(t)
    grid = get_grid(1, cfg.resolution)
    dictionary = build_dictionary(1, r.dictionary_version)

    forms = [u for u in dictionary if u.name in CONSISTENCY_FORMS]
    gap = potential_consistency(T, grid, forms)
    out.add("potential_consistency", gap)
    out.check("potential_consistency", gap <= CONSISTENCY_TOL, gap=gap)

    medians, placed, kac = [], [], []
    for p in r.p_list:
        recs = [roots_from_measure(T, p, t.strategy, grid, dictionary, ctx.rng(p, i)) for i in range(t.trials)]
        weak = float(np.median([rec.max_weak_distance for rec in recs]))
        medians.append(weak)
        out.add("weak_distance", weak, p=p, nsamples=t.trials)
        out.add("potential_error", float(np.median([rec.potential_error for rec in recs])), p=p, nsamples=t.trials)
        sd = float(np.median([rec.support_distance for rec in recs]))
        placed.append((p, sd))
        out.add("support_distance", sd, p=p, nsamples=t.trials)

        sampler = concentrated_sampler(recs[0])
        freq = exceptional_frequency(sampler, r.nsamples, ctx.rng(p, t.trials))
        out.add("exceptional_frequency", freq.frequency, p=p, stderr=freq.stderr, nsamples=r.nsamples)
        out.check(f"p{p}.concentration", freq.holds(), frequency=freq.frequency, bound=freq.bound)
        cont = root_continuity(recs[0], sampler, dictionary, min(r.nsamples, 50), ctx.rng(p, t.trials + 1))
        out.add("root_continuity", float(np.median(cont)) if cont.size else float("nan"), p=p)

        if T.kind == "circle":
            d = float(np.median([support_distance(T, kac_roots(p, T.radius, ctx.rng(p, t.trials + 2 + i)))
                                 for i in range(t.trials)]))
            kac.append((p, d))
            out.add("random_section_support_distance", d, p=p, nsamples=t.trials)

    out.check("weak_convergence", nonincreasing(medians, slack=1e-12), medians=medians)
    for h in support_halving(placed):
        out.check(f"p{h.p}.support_halving", h.holds(HALVING_BAND), ratio=h.ratio, strategy=t.strategy,
                  exact_support=h.exact)
    for h in support_halving(kac):
        out.check(f"p{h.p}.random_section_halving", h.holds(HALVING_BAND), ratio=h.ratio)
    return out

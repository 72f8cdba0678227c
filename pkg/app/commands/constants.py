from __future__ import annotations

import math

from app.commands import CommandContext, CommandResult
from app.deps import build_measure, build_metrics, get_bases
from app.services.bergman import dimension_bounds_hold
from app.services.equidistribution import dinh_sibony_constants, log_c0, target_grid

C0_RESIDUAL_TOL = 1e-9


def run(ctx: CommandContext) -> CommandResult:
    """d_p, delta_p, c_0p, r, R and eta per level, with the c_0p / delta_p / dimension checks."""
    cfg = ctx.cfg
    r = cfg.run
    out = CommandResult(ctx)
    metrics = build_metrics(cfg)
    grid = target_grid(cfg, metrics)
    spec = build_measure(cfg.measure)

    reports = []
    for p in r.p_list:
        bases = get_bases(p, metrics, cfg.resolution)
        rep = dinh_sibony_constants(p, bases, metrics, r.epsilon, grid, measure=spec, nsamples=r.nsamples,
                                    rng=ctx.rng(p), probe_version=r.probe_version)
        reports.append(rep.to_dict())
        for name in ("c_0p", "d_p", "delta_p", "r_bound", "R_hat", "eta"):
            out.add(name, getattr(rep, name), p=p)
        out.add("delta_p_times_p_over_d_p", rep.delta_p * p / rep.d_p, p=p)
        out.check(f"p{p}.c0_relation", rep.c0_residual() <= C0_RESIDUAL_TOL, residual=rep.c0_residual())
        out.check(f"p{p}.c0_floor", rep.c0_floor_holds(r.c0), c_0p=rep.c_0p, c0=r.c0)
        out.check(f"p{p}.delta_ratio", rep.delta_ratio_holds(r.C), C=r.C)
        out.check(f"p{p}.dimension_bounds", all(dimension_bounds_hold(B, r.C) for B in bases))
        if r.m == 1 and r.n == 1:
            out.check(f"p{p}.d_p", rep.d_p == p, d_p=rep.d_p)

    # two factors of dimension 1: c_0 = 2^(-1/2)
    out.results["reference"] = {"d_kp": [1, 1], "c_0p": math.exp(log_c0([1, 1]))}
    out.results["levels"] = reports
    return out

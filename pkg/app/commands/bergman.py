from __future__ import annotations

import logging

import numpy as np

from app.commands import CommandContext, CommandResult
from app.deps import build_metrics, get_basis, get_grid
from app.services.bergman import basis_summary, bergman_kernel, dimension_bounds_hold, orthonormality_residual
from app.services.equidistribution import build_dictionary, fs_current_gap
from app.services.metrics import check_hoelder, check_positivity

logger = logging.getLogger(__name__)

KERNEL_FLATNESS_TOL = 1e-5


def run(ctx: CommandContext) -> CommandResult:
    """Bergman spaces per slot and level: dimensions, kernel flatness, base loci, FS-current gaps."""
    cfg = ctx.cfg
    r = cfg.run
    out = CommandResult(ctx)
    metrics = build_metrics(cfg)

    for k, h in enumerate(metrics, start=1):
        grid = get_grid(r.n, cfg.resolution, h)
        pos = check_positivity(h, grid)
        hol = check_hoelder(h, samples=2000, rng_seed=r.seed)
        out.add(f"slot{k}.positivity_margin", pos.margin)
        out.add(f"slot{k}.hoelder_worst_ratio", hol.worst_ratio)
        out.check(f"slot{k}.positivity", pos.passed, margin=pos.margin, claimed=pos.claimed)
        out.check(f"slot{k}.hoelder", hol.passed, worst_ratio=hol.worst_ratio)
        dictionary = build_dictionary(r.n, r.dictionary_version) if r.n == 1 else []

        summaries = []
        for p in r.p_list:
            B = get_basis(p, h, grid)
            summaries.append(basis_summary(B))
            out.add(f"slot{k}.dim", B.dim, p=p)
            out.add(f"slot{k}.gram_condition", B.gram_condition, p=p)
            out.add(f"slot{k}.orthonormality_residual", orthonormality_residual(B, grid), p=p)
            out.check(f"slot{k}.p{p}.dimension_bounds", dimension_bounds_hold(B, r.C), d_kp=B.d_kp, C=r.C)

            expected_dim = len(B.admissible)
            if h.is_fs:
                P = bergman_kernel(B, grid.points)
                flat = float(P.max() / P.min() - 1.0)
                out.add(f"slot{k}.kernel_flatness", flat, p=p)
                out.check(f"slot{k}.p{p}.kernel_flatness", flat <= KERNEL_FLATNESS_TOL, value=flat)
            if r.n == 1:
                K = sum(o for _, o in B.orders)
                out.check(f"slot{k}.p{p}.dimension_law", B.dim == p + 1 - K == expected_dim, dim=B.dim,
                          vanishing=K)
                declared = [t.zero_point() for t in h.singular_terms if p * t.weight >= 1.0 - 1e-9]
                found = [t.zero_point() for t in B.base_locus]
                vanish = all(bergman_kernel(B, pt.coords[None, :])[0] == 0.0 for pt in found)
                out.check(f"slot{k}.p{p}.base_locus", found == declared and vanish, points=len(found))
                gap = fs_current_gap(B, dictionary, grid)
                out.add(f"slot{k}.fs_current_gap", gap, p=p)
        out.results[f"slot{k}"] = {"positivity": pos.to_dict(), "bases": summaries}
        logger.info("slot %d: %d levels done", k, len(r.p_list))
    return out

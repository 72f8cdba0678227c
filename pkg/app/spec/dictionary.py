from __future__ import annotations

"""
Versioned test-function dictionary and q.p.s.h. probe family.

Exports
-------
DICTIONARY_VERSION : current dictionary version
DICTIONARY         : version -> n -> list of test-function specs (smooth functions on P^n)
PROBE_VERSION      : current probe-family version
PROBES             : version -> list of probe specs on P^N (N >= 1), each with max 0 and dd^c >= -omega
content_hash()     : digest of both tables, echoed into every report
"""

import hashlib
import json

__all__ = ["DICTIONARY_VERSION", "DICTIONARY", "PROBE_VERSION", "PROBES", "content_hash"]

# =========================
# Test functions
# =========================
# kinds:
#   const  value
#   coord  |z_k|^2 / |z|^2
#   re/im  Re / Im of z_j conj(z_k) / |z|^2
#   bump   exp(-dist(z, center)^2 / width^2), chordal distance
#   power  (|z_k|^2 / |z|^2)^e
DICTIONARY_VERSION = "d1"

_S = 0.5 ** 0.5
_T = 3 ** -0.5

DICTIONARY: dict[str, dict[int, list[dict]]] = {
    "d1": {
        1: [
            {"name": "one",     "kind": "const", "value": 1.0},
            {"name": "u0",      "kind": "coord", "k": 0},
            {"name": "u1",      "kind": "coord", "k": 1},
            {"name": "re01",    "kind": "re", "j": 0, "k": 1},
            {"name": "im01",    "kind": "im", "j": 0, "k": 1},
            {"name": "u0sq",    "kind": "power", "k": 0, "e": 2},
            {"name": "bump_n",  "kind": "bump", "center": [[0, 0], [1, 0]], "width": 0.5},
            {"name": "bump_s",  "kind": "bump", "center": [[1, 0], [0, 0]], "width": 0.5},
            {"name": "bump_e",  "kind": "bump", "center": [[_S, 0], [_S, 0]], "width": 0.5},
            {"name": "bump_w",  "kind": "bump", "center": [[_S, 0], [0, _S]], "width": 0.5},
        ],
        2: [
            {"name": "one",     "kind": "const", "value": 1.0},
            {"name": "u0",      "kind": "coord", "k": 0},
            {"name": "u1",      "kind": "coord", "k": 1},
            {"name": "u2",      "kind": "coord", "k": 2},
            {"name": "re01",    "kind": "re", "j": 0, "k": 1},
            {"name": "re12",    "kind": "re", "j": 1, "k": 2},
            {"name": "im02",    "kind": "im", "j": 0, "k": 2},
            {"name": "bump_0",  "kind": "bump", "center": [[1, 0], [0, 0], [0, 0]], "width": 0.6},
            {"name": "bump_2",  "kind": "bump", "center": [[0, 0], [0, 0], [1, 0]], "width": 0.6},
            {"name": "bump_d",  "kind": "bump", "center": [[_T, 0], [_T, 0], [_T, 0]], "width": 0.6},
        ],
    },
}

# =========================
# Probes (class F on P^N)
# =========================
# kinds (q = |l(v)|^2 / |v|^2 for the unit form l):
#   log     log(|l(v)| / |v|)
#   reglog  (1/2) log(q + eps^2) - (1/2) log(1 + eps^2)
#   bump    q/2 - 1/2
#   max     max of the listed member names
# form: "coord:<k>" (clipped to N) or "diag" (all-ones, normalized)
PROBE_VERSION = "q1"

PROBES: dict[str, list[dict]] = {
    "q1": [
        {"name": "log_e0",     "kind": "log", "form": "coord:0"},
        {"name": "log_e1",     "kind": "log", "form": "coord:1"},
        {"name": "log_diag",   "kind": "log", "form": "diag"},
        {"name": "reglog_e0",  "kind": "reglog", "form": "coord:0", "eps": 0.1},
        {"name": "reglog_diag", "kind": "reglog", "form": "diag", "eps": 0.3},
        {"name": "bump_e0",    "kind": "bump", "form": "coord:0"},
        {"name": "max_e0_e1",  "kind": "max", "members": ["log_e0", "log_e1"]},
    ],
}


def content_hash() -> str:
    blob = json.dumps(
        {"dictionary": DICTIONARY[DICTIONARY_VERSION], "probes": PROBES[PROBE_VERSION],
         "versions": [DICTIONARY_VERSION, PROBE_VERSION]},
        sort_keys=True, default=str,
    )
    return hashlib.sha256(blob.encode()).hexdigest()

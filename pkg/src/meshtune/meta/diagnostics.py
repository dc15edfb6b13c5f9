"""Crossover diagnostics: rank agreement between low- and full-resource losses."""
from __future__ import annotations

import math
import warnings
from typing import Optional

import numpy as np
from scipy import stats

from ..evaluators import LossCurveTable
from ..space import id_sort_key


def spearman(a, b) -> Optional[float]:
    """Spearman rank correlation with average ranks for ties; ``None`` when undefined."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rho = stats.spearmanr(a, b).statistic
    return None if not math.isfinite(rho) else float(rho)


def crossover_stats(table: LossCurveTable) -> list[dict]:
    """Per round: rank correlation between losses at r_i and at the last level."""
    M = table.matrix() if len(table) else np.empty((0, len(table.levels)))
    final = M[:, -1] if len(table) else M[:, :0]
    return [{"round": i, "resource": r, "spearman": spearman(M[:, i], final) if len(table) >= 2 else None}
            for i, r in enumerate(table.levels)]


def halving_trace(table: LossCurveTable, eta: float) -> list[dict]:
    """Successive-halving survival over every configuration in the table.

    Each round keeps the best ``max(1, floor(k / eta))`` of the ``k``
    survivors by observed loss (ties to the lower id). Returns one record per
    configuration with its loss series and, per round, whether it survived.
    """
    levels = table.levels
    alive = sorted(table.config_ids, key=id_sort_key)
    survived: dict[str, list[bool]] = {cid: [] for cid in table.config_ids}
    for i, r in enumerate(levels):
        keep = max(1, int(math.floor(len(alive) / eta + 1e-9))) if len(alive) > 1 else len(alive)
        ranked = sorted(alive, key=lambda c: (table.loss(c, r), id_sort_key(c)))
        kept = set(ranked[:keep])
        for cid in alive:
            survived[cid].append(cid in kept)
        alive = ranked[:keep]
    out = []
    for cid, (config, losses) in table.entries.items():
        flags = survived[cid]
        reached = len(flags)
        eliminated = next((i for i, s in enumerate(flags) if not s), None)
        out.append({"config_id": cid, "values": dict(config.values),
                    "resources": levels, "losses": [losses[r] for r in levels],
                    "evaluated_rounds": reached, "eliminated_at_round": eliminated,
                    "survived": flags})
    return out

"""Brute-force inference by dense enumeration, for small models only."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import Beliefs
from .model import FactorModel
from .regions import RegionGraph

STATE_LIMIT = 1 << 22


class OracleLimitError(ValueError):
    """Model too large to enumerate."""


@dataclass
class ExactResult:
    log_z: float
    marginals: Beliefs
    joint: np.ndarray | None = None


def exact_inference(model: FactorModel, regions=(), keep_joint=False) -> ExactResult:
    """Enumerate the joint in log space and marginalize onto the regions.

    ``regions`` is either a RegionGraph (marginals keyed by region id) or an
    iterable of variable tuples (keyed by position).  Refuses models beyond
    ``STATE_LIMIT`` joint states.
    """
    cards = model.cards
    states = 1
    for c in cards:
        states *= c
    if states > STATE_LIMIT:
        raise OracleLimitError(
            f"{states} joint states exceed the enumeration limit of 2**22"
        )
    n = len(cards)
    logj = np.zeros(tuple(cards))
    for scope, table in zip(model.scopes, model.tables):
        shape = tuple(cards[v] if v in scope else 1 for v in range(n))
        logj = logj + table.reshape(shape)
    m = float(logj.max())
    log_z = m + float(np.log(np.exp(logj - m).sum()))
    p = np.exp(logj - log_z)

    if isinstance(regions, RegionGraph):
        items = [(r.id, r.vars) for r in regions.regions]
    else:
        items = [(k, tuple(v)) for k, v in enumerate(regions)]
    tabs = {}
    for key, vars_ in items:
        axes = tuple(i for i in range(n) if i not in vars_)
        tabs[key] = p.sum(axis=axes)
    return ExactResult(log_z, Beliefs(tabs), p if keep_joint else None)

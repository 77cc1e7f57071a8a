"""Enumeration oracle: partition function and exact marginals."""
from __future__ import annotations

import math

import numpy as np
import pytest

from kikuchi import (
    FactorModel,
    OracleLimitError,
    build_bethe,
    exact_inference,
)
from conftest import chain_model


def test_two_variable_model_by_hand():
    t = np.log(np.array([[1.0, 2.0], [3.0, 4.0]]))
    m = FactorModel([2, 2], [(0, 1)], [t])
    res = exact_inference(m, regions=[(0,), (1,), (0, 1)], keep_joint=True)
    assert abs(res.log_z - math.log(10.0)) < 1e-12
    assert np.allclose(res.marginals.tables[0], [0.3, 0.7])
    assert np.allclose(res.marginals.tables[1], [0.4, 0.6])
    assert np.allclose(res.marginals.tables[2], np.array([[0.1, 0.2], [0.3, 0.4]]))
    assert abs(res.joint.sum() - 1.0) < 1e-12


def test_independent_factors_product_form():
    rng = np.random.default_rng(3)
    logits = [rng.normal(size=2) for _ in range(3)]
    m = FactorModel([2, 2, 2], [(0,), (1,), (2,)], logits)
    res = exact_inference(m, regions=[(v,) for v in range(3)])
    for v in range(3):
        p = np.exp(logits[v])
        p /= p.sum()
        assert np.allclose(res.marginals.tables[v], p)
    assert abs(res.log_z - sum(np.log(np.exp(l).sum()) for l in logits)) < 1e-12


def test_region_graph_keying():
    m = chain_model(4, seed=0)
    g = build_bethe(m.scopes, m.num_vars)
    res = exact_inference(m, g)
    assert set(res.marginals.tables) == {r.id for r in g.regions}
    for r in g.regions:
        assert res.marginals.tables[r.id].shape == tuple(
            m.cards[v] for v in r.vars
        )
        assert abs(res.marginals.tables[r.id].sum() - 1.0) < 1e-12
    assert res.joint is None


def test_oracle_refuses_large_models():
    n = 23
    m = FactorModel(
        [2] * n, [(v,) for v in range(n)], [np.zeros(2) for _ in range(n)]
    )
    with pytest.raises(OracleLimitError, match="2\\*\\*22"):
        exact_inference(m)


def test_log_z_shift_stability():
    m = FactorModel([2], [(0,)], [np.array([700.0, 710.0])])
    res = exact_inference(m, regions=[(0,)])
    assert math.isfinite(res.log_z)
    assert abs(res.log_z - (710.0 + math.log(1.0 + math.exp(-10.0)))) < 1e-9

import json
import math

import numpy as np
import pytest

from lookahead.baselines import OracleRouter
from lookahead.corpus import RoutingExample, generate_synthetic, make_plan
from lookahead.evalkit import (EvalReport, MineConfig, ResponseOracleClassifier, UndefinedMetricError, dv_bound,
                               evaluate, gaussian_mi, mi_probe, mine_estimate, normalized_score, original_score,
                               random_reference, routing_proportions, win_tie_loss)
from lookahead.framework import LookaheadConfig, MLMRouter
from lookahead.numeric import ContractError, Tensor

# (benchmark, method, mu_o, random, oracle, published mu_n), read from the main results table
TABLE_ROWS = [
    ("HumanEval", "Lookahead-CLM", 87.2, 73.2, 93.9, 67.7),
    ("HumanEval", "MLC-CLM", 85.4, 73.2, 93.9, 58.8),
    ("HumanEval", "k-means", 79.9, 73.2, 93.9, 32.4),
    ("AlpacaEval-2", "Lookahead-MLM", 40.0, 29.4, 57.6, 37.5),
    ("AlpacaEval-2", "MLC-MLM", 38.5, 29.4, 57.6, 32.4),
    ("MBPP", "Lookahead-MLM", 82.9, 71.9, 92.6, 53.0),
    ("MBPP", "MLC-CLM", 73.5, 71.9, 92.6, 7.9),
    ("Arena-Hard", "Lookahead-MLM", 44.3, 32.4, 77.1, 26.5),
    ("Arena-Hard", "RouterDC-MLM", 44.9, 32.4, 77.1, 27.9),
    ("MATH", "Lookahead-MLM", 61.9, 52.9, 77.8, 36.2),
]


class Fixed:
    """Router stub that always returns the given score rows."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=float)

    def scores(self, items, batch_size=0):
        return self.rows[: len(items)]


def rec(i, s, labels=None, tag="d"):
    s = list(map(float, s))
    return RoutingExample(id=str(i), dataset=tag, query="q", responses=["r"] * len(s), raw_scores=s,
                          normalized_scores=s, labels=labels if labels is not None else [int(v >= 0.8) for v in s])


# ----------------------------------------------------------------- metrics

@pytest.mark.parametrize("row", TABLE_ROWS, ids=[f"{r[0]}-{r[1]}" for r in TABLE_ROWS])
def test_normalized_score_table_rows(row):
    _, _, mu_o, lo, hi, published = row
    assert abs(normalized_score(mu_o, lo, hi) - published) <= 0.2


def test_normalized_score_endpoints_and_errors():
    assert normalized_score(73.2, 73.2, 93.9) == 0.0
    assert normalized_score(93.9, 73.2, 93.9) == 100.0
    assert normalized_score(50, 60, 70) < 0
    with pytest.raises(UndefinedMetricError):
        normalized_score(1, 2, 2)
    with pytest.raises(UndefinedMetricError):
        normalized_score(1, 3, 2)


def test_normalized_score_affine_invariance():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lo, mid, hi = np.sort(rng.random(3))
        a, b = rng.uniform(0.1, 10), rng.normal()
        assert math.isclose(normalized_score(mid, lo, hi), normalized_score(a * mid + b, a * lo + b, a * hi + b),
                            rel_tol=1e-9, abs_tol=1e-9)


def test_original_score_examples():
    assert original_score([1], [rec(0, [0.2, 0.8])]) == 0.8
    ex = [rec(i, s) for i, s in enumerate([[0.1, 0.9], [0.7, 0.3], [0.5, 0.5]])]
    assert math.isclose(original_score([0, 0, 0], ex), np.mean([0.1, 0.7, 0.5]))
    assert math.isclose(original_score([1, 0, 0], ex), np.mean([0.9, 0.7, 0.5]))
    with pytest.raises(ContractError):
        original_score([2, 0, 0], ex)
    with pytest.raises(ContractError):
        original_score([0, 0], ex)


def test_random_reference_examples_and_monte_carlo():
    assert random_reference([rec(0, [0.3, 0.3]), rec(1, [0.3, 0.3])]) == 0.3
    assert random_reference([rec(0, [0, 1])]) == 0.5
    rng = np.random.default_rng(1)
    ex = [rec(i, rng.random(3)) for i in range(200)]
    s = np.array([e.raw_scores for e in ex])
    draws = 100_000
    rows = rng.integers(len(ex), size=draws)
    picks = s[rows, rng.integers(3, size=draws)]
    sigma = picks.std() / math.sqrt(draws)
    assert abs(picks.mean() - random_reference(ex)) <= 3 * sigma


def test_routing_proportions():
    assert routing_proportions([0, 0, 0], 3).tolist() == [100.0, 0.0, 0.0]
    p = routing_proportions(np.random.default_rng(0).integers(4, size=999), 4)
    assert abs(p.sum() - 100) < 1e-9


def test_oracle_proportions_match_mixture():
    plan = make_plan(seed=3, mixture=[0.5, 0.3, 0.2], verifiable=(), quality=[[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    split = generate_synthetic(plan, 3000, 0, 0)
    sel = np.argmax(OracleRouter().scores(split.train), axis=1)
    p = routing_proportions(sel, 3) / 100
    n = len(sel)
    for got, want in zip(p, [0.5, 0.3, 0.2]):
        assert abs(got - want) <= 3 * math.sqrt(want * (1 - want) / n)


def test_win_tie_loss_fixture():
    ex = [rec(0, [1, 0, 0], [1, 0, 0]), rec(1, [1, 0, 1], [1, 0, 1]), rec(2, [0, 1, 1], [0, 1, 1]),
          rec(3, [1, 1, 1], [1, 1, 1])]
    a = [0, 1, 0, 2]
    b = [1, 0, 1, 0]
    table = win_tie_loss(a, b, ex)
    # 1 correct: A right, B wrong -> win; 2 correct: one loss (ex 1) and one loss (ex 2); 3 correct: tie
    assert table == {1: (100.0, 0.0, 0.0), 2: (0.0, 0.0, 100.0), 3: (0.0, 100.0, 0.0)}
    swapped = win_tie_loss(b, a, ex)
    for g in table:
        assert table[g][0] == swapped[g][2] and table[g][2] == swapped[g][0]
    assert all(v == (0.0, 100.0, 0.0) for v in win_tie_loss(a, a, ex).values())


def test_evaluate_report_and_files(tmp_path):
    rng = np.random.default_rng(2)
    ex = [rec(i, rng.random(3), tag="ab"[i % 2]) for i in range(40)]
    report = evaluate(OracleRouter("raw_scores"), ex, name="oracle", baseline_selections=np.zeros(40, int))
    assert all(b.mu_n == 100.0 for b in report.benchmarks)
    assert [b.name for b in report.benchmarks] == ["a", "b", "all"]
    assert abs(sum(report.proportions) - 100) < 0.1
    for w, t, l in report.win_tie_loss.values():
        assert abs(w + t + l - 100) < 0.1
    j, t = report.write(tmp_path / "rep")
    lines = [json.loads(x) for x in j.read_text().splitlines()]
    assert lines[-1]["n_queries"] == 40
    head, row = t.read_text().splitlines()
    assert head.split("\t")[0] == "router" and row.split("\t")[-1] == "100.00"
    const = evaluate(Fixed([[1, 0, 0]] * 40), ex)
    assert math.isclose(const.benchmark("all").mu_o, np.mean([e.raw_scores[0] for e in ex]))
    with pytest.raises(ContractError):
        evaluate(OracleRouter(), [])


# -------------------------------------------------------------------- MINE

SMALL = dict(hidden=32, n_layers=3, epochs=30, batch_size=256, lr=3e-3, tail_epochs=5)


def test_dv_bound_values():
    t = Tensor(np.array([1.0, 2.0]))
    assert math.isclose(dv_bound(t, Tensor(np.zeros(4))).item(), 1.5)
    assert abs(dv_bound(Tensor(np.zeros(3)), Tensor(np.zeros(3))).item()) < 1e-15
    assert math.isclose(gaussian_mi(0.9), 0.8303656, rel_tol=1e-6)


def test_mine_errors_and_config():
    with pytest.raises(ContractError):
        mine_estimate(np.zeros(10), np.zeros(10), MineConfig(batch_size=64))
    with pytest.raises(ContractError):
        mine_estimate(np.zeros(300), np.zeros(200), MineConfig(batch_size=64))
    with pytest.raises(ContractError):
        MineConfig(repetitions=0)
    c = MineConfig()
    assert (c.hidden, c.n_layers, c.epochs, c.batch_size, c.lr) == (1024, 4, 100, 512, 1e-4)


def test_mine_orders_dependence():
    rng = np.random.default_rng(0)
    n = 3000
    x = rng.normal(size=n)
    cfg = MineConfig(**SMALL)
    indep = mine_estimate(x, rng.normal(size=n), cfg).median
    corr = mine_estimate(x, 0.9 * x + math.sqrt(0.19) * rng.normal(size=n), cfg).median
    same = mine_estimate(x, x, cfg).median
    assert indep < 0.1
    assert corr > 0.4
    assert same > corr
    r = mine_estimate(x, x, MineConfig(**{**SMALL, "repetitions": 3, "epochs": 6}))
    assert len(r.estimates) == 3 and np.all(r.estimates >= 0) and r.iqr[0] <= r.iqr[1]


def test_mi_probe_shapes_and_self_ordering():
    plan = make_plan(seed=0)
    split = generate_synthetic(plan, 300, 0, 0, seed=0)
    cfg = dict(n_layers=1, d_model=16, n_heads=2, d_ff=32, max_len=96, m=6)
    a = MLMRouter(LookaheadConfig(**cfg), seed=1)
    b = MLMRouter(LookaheadConfig(**cfg, lam=0.0), seed=2)
    o = ResponseOracleClassifier(LookaheadConfig(**cfg), seed=3)
    assert o.config.lam == 0.0
    mcfg = MineConfig(**{**SMALL, "batch_size": 100, "epochs": 10})
    res = mi_probe(a, b, o, split.train, mcfg)
    assert set(res.summary()) == {"with_rm", "without_rm"}
    self_mi = mine_estimate(a.states(split.train), a.states(split.train), mcfg).median
    assert self_mi >= max(res.with_rm.median, res.without_rm.median)
    from lookahead.baselines import MLCRouter
    with pytest.raises(ContractError):
        mi_probe(a, MLCRouter(LookaheadConfig(**{**cfg, "d_model": 32})), o, split.train, mcfg)

import logging
import math

import numpy as np
import pytest

from lookahead.backbones import EOS, PAD, Vocabulary, causal_mask, transformer_forward
from lookahead.corpus import RoutingExample, generate_synthetic, make_plan
from lookahead.framework import (CLMRouter, CurriculumState, DivergenceError, InputError, LookaheadConfig,
                                 MLMRouter, TrainConfig, joint_loss, mask_ratio, mlm_build_input,
                                 routing_accuracy, routing_loss_bce, select_index, select_masked_positions,
                                 train)
from lookahead.numeric import ContractError, OptimizerState, Tensor, adamw_step, backward, check_gradients, no_grad

TOY = dict(n_layers=2, d_model=32, n_heads=2, d_ff=64, max_len=128)


def cfg(variant, **kw):
    base = dict(TOY, variant=variant)
    if variant == "mlm":
        base["m"] = 6
    base.update(kw)
    return LookaheadConfig(**base)


def record(i=0, t=3, query="abc #12"):
    return RoutingExample(id=str(i), dataset="d", query=query,
                          responses=[f"A{t_} resp {i}" for t_ in range(t)], raw_scores=[1.0] + [0.0] * (t - 1),
                          normalized_scores=[1.0] + [0.0] * (t - 1), labels=[1] + [0] * (t - 1))


def jitter(router, scale=0.1, seed=0):
    rng = np.random.default_rng(seed)
    for p in router.params.values():
        p.value = p.value + rng.normal(scale=scale, size=p.shape)
    return router


@pytest.fixture(scope="module")
def small_corpus():
    return generate_synthetic(make_plan(seed=0), 60, 20, 20, seed=0)


# ------------------------------------------------------------------ config

def test_config_defaults_and_validation():
    assert cfg("clm").lam == 0.5 and cfg("mlm").lam == 0.2
    assert LookaheadConfig().m == 64 and LookaheadConfig().alpha == 0.4
    for bad in (dict(lam=-1), dict(m=0), dict(alpha=0), dict(alpha=1.5), dict(n_models=1), dict(strategy="x")):
        with pytest.raises(ContractError):
            cfg("mlm", **bad)


# -------------------------------------------------------------- curriculum

def test_mask_ratio_examples():
    assert mask_ratio(0.0, 0.4) == 0.0
    assert mask_ratio(0.2, 0.4) == 0.5
    assert mask_ratio(0.4, 0.4) == 1.0 and mask_ratio(0.9, 0.4) == 1.0
    with pytest.raises(ContractError):
        mask_ratio(1.1, 0.4)


def test_select_masked_positions_examples():
    assert select_masked_positions(4, 0.5, "end").tolist() == [2, 3]
    assert select_masked_positions(4, 0.5, "start").tolist() == [0, 1]
    for s in ("end", "start"):
        assert select_masked_positions(4, 1.0, s).tolist() == [0, 1, 2, 3]
    r = select_masked_positions(4, 1.0, "random", np.random.default_rng(0))
    assert r.tolist() == [0, 1, 2, 3]
    assert select_masked_positions(10, 0.01, "end").tolist() == [9]        # ceil guarantees one
    assert select_masked_positions(5, 0.3, "none").tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(ContractError):
        select_masked_positions(0, 0.5)
    with pytest.raises(ContractError):
        select_masked_positions(4, 0.5, "random")


def test_random_strategy_seeded():
    a = CurriculumState(0.4, "random", seed=3)
    b = CurriculumState(0.4, "random", seed=3)
    a.progress = b.progress = 0.2
    assert [a.positions(10).tolist() for _ in range(5)] == [b.positions(10).tolist() for _ in range(5)]


def test_nested_masks():
    prev = {"end": set(), "start": set()}
    for u in np.linspace(0, 1, 101):
        rho = mask_ratio(u, 0.4)
        for s in prev:
            cur = set(select_masked_positions(12, rho, s).tolist())
            assert prev[s] <= cur
            prev[s] = cur


# ---------------------------------------------------------------- MLM input

def test_mlm_build_input_examples():
    v = Vocabulary(2)
    q = [258, 1, 2]
    resp = [list(range(100, 110)), [7, 8]]
    cur = CurriculumState(0.4, "end")
    cur.progress = 0.2                                       # ratio 0.5
    tok, lpos, ltgt, bids = mlm_build_input(v, q, resp, 10, cur)
    block1 = tok[3:13]
    assert block1[:5] == list(range(100, 105)) and block1[5:] == [v.mid(1)] * 5
    assert lpos[:5] == list(range(8, 13)) and ltgt[:5] == list(range(105, 110))
    block2 = tok[13:23]
    assert block2 == [7, v.mid(2)] + [PAD] * 8
    assert all(tok[p] != PAD for p in lpos)
    assert bids == [0] * 3 + [1] * 10 + [2] * 10

    cur.progress = 1.0
    tok, lpos, _, _ = mlm_build_input(v, q, resp, 10, cur)
    assert tok[3:13] == [v.mid(1)] * 10 and tok[13:15] == [v.mid(2)] * 2
    cur.progress = 0.0
    tok, lpos, _, _ = mlm_build_input(v, q, resp, 10, cur)
    assert lpos == [] and not any(v.is_mid(x) for x in tok)
    tok, lpos, _, _ = mlm_build_input(v, q, None, 4)
    assert tok[3:] == [v.mid(1)] * 4 + [v.mid(2)] * 4 and lpos == []


def test_mlm_overflow_names_length():
    r = MLMRouter(cfg("mlm", max_len=16, m=6))
    with pytest.raises(InputError, match="exceeds max length 16"):
        r.scores(["a query that is long"])


# ------------------------------------------------------------------ losses

def test_bce_examples():
    s = Tensor(np.array([0.9, 0.1, 0.8]))
    assert abs(routing_loss_bce(s, [1, 0, 1]).item() - 0.14462) < 1e-5
    assert abs(routing_loss_bce(Tensor(np.array([0.5, 0.5])), [1, 0]).item() - math.log(2)) < 1e-12
    assert routing_loss_bce(Tensor(np.array([1.0, 0.0])), [1, 0]).item() < 1e-6
    with pytest.raises(ContractError):
        routing_loss_bce(s, [1, 0])


def test_joint_loss_examples():
    assert abs(joint_loss(Tensor(0.2), Tensor(1.0), 0.5).item() - 0.7) < 1e-15
    r = Tensor(0.3)
    assert joint_loss(r, Tensor(5.0), 0.0) is r


def test_resp_only_gradient_linear_in_lambda():
    ex = [record(0), record(1, query="xyz #40")]
    grads = {}
    for lam in (0.1, 0.2):
        r = jitter(CLMRouter(cfg("clm", lam=lam), seed=1))
        parts = r.loss(ex)
        backward(parts.total)
        grads[lam] = r.params["backbone.lm_head.w"].grad.copy()
    assert np.allclose(grads[0.2], 2 * grads[0.1], rtol=1e-10, atol=1e-14)


def test_joint_gradient_check_both_variants():
    ex = [record(0), record(1, query="q #77")]
    for variant in ("clm", "mlm"):
        r = jitter(CLMRouter(cfg("clm")) if variant == "clm" else MLMRouter(cfg("mlm"), seed=2), seed=3)

        def loss():
            if variant == "mlm":
                r.curriculum = CurriculumState(0.4, "end", seed=0)
            return r.loss(ex, progress=0.1).total

        assert check_gradients(loss, r.params, max_coords=4) < 1e-4


# -------------------------------------------------------------------- CLM

def test_clm_untrained_scores_half():
    r = CLMRouter(cfg("clm", n_models=4))
    assert np.array_equal(r.scores(["hello"]), np.full((1, 4), 0.5))


def test_clm_single_pass_matches_separate_passes():
    r = jitter(CLMRouter(cfg("clm", n_models=5)), seed=4)
    q = "route me #55"
    lat, sc = r.predict_latents([q])
    for t in range(5):
        ids = r.query_ids(q, EOS) + [r.vocab.mid(t + 1)]
        with no_grad():
            h = transformer_forward(r.params, r.bcfg, np.array([ids]), causal_mask(len(ids))).hidden.value[0, -1]
            s = 1 / (1 + np.exp(-(h @ r.params["route.w"].value[:, 0] + r.params["route.b"].value[0])))
        assert np.allclose(lat[0, t], h, rtol=0, atol=1e-12)
        assert abs(sc[0, t] - s) <= 1e-12


def test_clm_t_extra_tokens():
    r = CLMRouter(cfg("clm", n_models=5))
    tokens, *_ = r._batch(["abcd"])
    assert tokens.shape[1] == len(r.query_ids("abcd", EOS)) + 5


def test_clm_uniform_logits_nll():
    r = CLMRouter(cfg("clm", lam=1.0))
    r.params["backbone.lm_head.w"].value[:] = 0
    r.params["backbone.lm_head.b"].value[:] = 0
    parts = r.loss([record(0)])
    assert abs(parts.resp - math.log(r.vocab.size)) < 0.05


def test_clm_reconstruction_is_mean_of_per_model_terms():
    r = jitter(CLMRouter(cfg("clm", lam=1.0)), seed=5)
    ex = record(0)
    ex.responses = ["short", "a longer response", "mid length"]
    whole = r.loss([ex]).resp
    per = []
    for t in range(3):
        ids = r.query_ids(ex.query, EOS) + [r.vocab.mid(t + 1)]
        y = list(ex.responses[t].encode())
        seq = ids + y[:-1]
        with no_grad():
            logits = transformer_forward(r.params, r.bcfg, np.array([seq]), causal_mask(len(seq))).logits().value[0]
        lp = logits - np.log(np.exp(logits - logits.max(-1, keepdims=True)).sum(-1, keepdims=True)) \
            - logits.max(-1, keepdims=True)
        per.append(-np.mean([lp[len(ids) - 1 + j, tok] for j, tok in enumerate(y)]))
    assert abs(whole - np.mean(per)) < 1e-10


def test_clm_empty_response_warns(caplog):
    r = CLMRouter(cfg("clm"))
    ex = record(0)
    ex.responses[1] = ""
    with caplog.at_level(logging.WARNING):
        parts = r.loss([ex])
    assert "empty response" in caplog.text and math.isfinite(parts.resp)


def test_clm_overfit_monotone():
    r = CLMRouter(cfg("clm", lam=1.0), seed=0)
    opt = OptimizerState(lr=3e-3, weight_decay=0.0)
    ex = [record(0)]
    losses = []
    for _ in range(50):
        for p in r.params.values():
            p.grad = None
        parts = r.loss(ex)
        backward(parts.total)
        adamw_step(r.params, opt)
        losses.append(parts.resp)
    assert all(b < a for a, b in zip(losses, losses[1:]))


# -------------------------------------------------------------------- MLM

def test_mlm_uniform_logits_and_empty_mask(caplog):
    r = MLMRouter(cfg("mlm", lam=1.0))
    r.params["backbone.lm_head.w"].value[:] = 0
    r.params["backbone.lm_head.b"].value[:] = 0
    parts = r.loss([record(0)], progress=1.0)
    assert abs(parts.resp - math.log(r.vocab.size)) < 0.05
    with caplog.at_level(logging.WARNING):
        parts = r.loss([record(0)], progress=0.0)
    assert parts.resp == 0.0 and "no masked positions" in caplog.text


def test_mlm_reconstruction_shape_mismatch():
    r = MLMRouter(cfg("mlm"))
    tokens, loss_mask, targets, block_ids = r._batch([record(0)], training=True)
    acts = r._forward(tokens)[0]
    with pytest.raises(ContractError):
        r.reconstruction_loss(acts, loss_mask, targets[:, :-1], block_ids)


def test_mlm_overfit_below_threshold():
    r = MLMRouter(cfg("mlm", lam=1.0, strategy="none"), seed=0)
    opt = OptimizerState(lr=1e-2, weight_decay=0.0)
    ex = [record(0)]
    for step in range(200):
        for p in r.params.values():
            p.grad = None
        parts = r.loss(ex, progress=1.0)
        backward(parts.total)
        adamw_step(r.params, opt)
        if parts.resp < 0.1:
            break
    assert parts.resp < 0.1


def test_mlm_routes_on_masked_layout_during_curriculum():
    ex = [record(0), record(1, query="xyz #40")]
    r = jitter(MLMRouter(cfg("mlm", lam=0.5, alpha=0.5, strategy="start"), seed=1))
    # ratio 0.2: some response tokens visible in the training layout
    parts = r.loss(ex, progress=0.1)
    assert np.array_equal(parts.scores, r.scores(ex))
    single = jitter(MLMRouter(cfg("mlm", lam=0.5, alpha=0.5, strategy="start", route_on_masked=False), seed=1))
    other = single.loss(ex, progress=0.1)
    assert not np.allclose(other.scores, single.scores(ex))
    assert math.isclose(other.resp, parts.resp, rel_tol=1e-12)
    # fully masked: one pass, both options agree
    assert np.array_equal(r.loss(ex, progress=1.0).scores, single.loss(ex, progress=1.0).scores)


def test_mlm_latents_shape():
    r = MLMRouter(cfg("mlm", m=5))
    assert r.latents("hello").shape == (3, 5, 32)


# ---------------------------------------------------------------- routing

def test_select_index_rules():
    assert select_index([0.9, 0.1]) == 0
    assert select_index([0.5, 0.5]) == 0
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = rng.random(4)
        assert select_index(s) == select_index(np.exp(3 * s) + 1) == select_index(np.log(s))


def test_route_decision_contract():
    r = MLMRouter(cfg("mlm"))
    d = r.route("anything")
    assert d.index == d.selected + 1 == 1
    assert np.all((d.scores > 0) & (d.scores < 1)) and d.latency_ms >= 0


# ---------------------------------------------------------------- training

def test_train_bit_reproducible(small_corpus):
    tc = TrainConfig(epochs=1, batch_size=16, lr=3e-3, eval_every=2, seed=4)
    runs = []
    for _ in range(2):
        r = MLMRouter(cfg("mlm"), seed=4)
        res = train(r, small_corpus.train, small_corpus.validation, tc)
        runs.append((r, res))
    (a, ra), (b, rb) = runs
    assert all(np.array_equal(a.params[k].value, b.params[k].value) for k in a.params)
    assert [x.tsv() for x in ra.log] == [x.tsv() for x in rb.log]


def test_train_restores_best_checkpoint(small_corpus):
    r = CLMRouter(cfg("clm"), seed=0)
    res = train(r, small_corpus.train, small_corpus.validation,
                TrainConfig(epochs=2, batch_size=16, lr=3e-3, eval_every=3, seed=0))
    assert res.total_steps == 8 and [x.step for x in res.log] == [3, 6, 8]
    assert res.best_val_acc == max(x.val_acc for x in res.log)
    first = [x.step for x in res.log if x.val_acc == res.best_val_acc][0]
    assert res.best_step == first
    assert routing_accuracy(r, small_corpus.validation) == res.best_val_acc
    assert r.metadata["best_step"] == res.best_step
    line = res.log[0].tsv().split("\t")
    assert len(line) == 6 and int(line[0]) == 3


def test_train_divergence_names_step(small_corpus):
    r = MLMRouter(cfg("mlm"))
    r.params["head.b2"].value[:] = np.nan
    with pytest.raises(DivergenceError, match="step 1"):
        train(r, small_corpus.train, small_corpus.validation, TrainConfig(epochs=1, batch_size=16))


def test_train_rejects_bad_corpus(small_corpus):
    r = MLMRouter(cfg("mlm", n_models=4))
    with pytest.raises(ContractError):
        train(r, small_corpus.train, [], TrainConfig(epochs=1))
    with pytest.raises(ContractError):
        train(r, [], [], TrainConfig(epochs=1))

import numpy as np
import pytest

from wasmrev import autodiff as ad
from wasmrev import model as M
from wasmrev.autodiff import Tensor
from wasmrev.tokenizer import EncodedInput


def tiny_config(**kw):
    base = dict(vocab_size=50, layers=2, hidden=8, heads=2, max_positions=64, dropout=0.0)
    base.update(kw)
    return M.EncoderConfig(**base)


def make_input(ids, segs=None):
    n = len(ids)
    return EncodedInput(
        token_ids=list(ids),
        segment_ids=list(segs) if segs else [0] * n,
        position_ids=list(range(n)),
        attention_mask=[True] * n,
    )


# ---------------------------------------------------------------------------
# embedding


def test_embed_zero_tables_gives_zero():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=0, dtype=np.float64)
    for name in ("emb.token", "emb.position", "emb.segment"):
        params.set_(name, np.zeros_like(params[name].value))
    enc = make_input([2, 7, 3])
    assert np.all(M.embed(enc, params).value == 0)


def test_embed_matches_table_sum():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=1, dtype=np.float64)
    enc = make_input([2, 9, 11, 3], segs=[0, 0, 2, 2])
    got = M.embed(enc, params).value
    tok = params["emb.token"].value
    pos = params["emb.position"].value
    seg = params["emb.segment"].value
    expect = np.stack(
        [tok[i] + pos[k] + seg[s] for k, (i, s) in enumerate(zip([2, 9, 11, 3], [0, 0, 2, 2]))]
    )
    assert np.array_equal(got, expect)


def test_embed_segment_delta_is_linear():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=2, dtype=np.float64)
    a = M.embed(make_input([2, 9, 3], segs=[0, 0, 0]), params).value
    b = M.embed(make_input([2, 9, 3], segs=[1, 1, 1]), params).value
    delta = params["emb.segment"].value[1] - params["emb.segment"].value[0]
    assert np.allclose(b - a, np.tile(delta, (3, 1)))


def test_embed_out_of_range_errors():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=0)
    with pytest.raises(ValueError):
        M.embed(make_input([cfg.vocab_size]), params)


# ---------------------------------------------------------------------------
# encoder vs straight-line reference


def _reference_encode(x, mask, params, cfg):
    """Independent numpy re-implementation of the post-norm Transformer stack."""

    def ln(v, g, b):
        mu = v.mean(-1, keepdims=True)
        var = ((v - mu) ** 2).mean(-1, keepdims=True)
        return (v - mu) / np.sqrt(var + 1e-12) * g + b

    def gelu(v):
        c = np.sqrt(2.0 / np.pi)
        return 0.5 * v * (1.0 + np.tanh(c * (v + 0.044715 * v**3)))

    a = params.arrays()
    L, H = x.shape
    heads = cfg.heads
    dh = H // heads
    h = ln(x, a["emb.ln.g"], a["emb.ln.b"])
    for i in range(cfg.layers):
        q = h @ a[f"layer{i}.attn.wq"] + a[f"layer{i}.attn.bq"]
        k = h @ a[f"layer{i}.attn.wk"] + a[f"layer{i}.attn.bk"]
        v = h @ a[f"layer{i}.attn.wv"] + a[f"layer{i}.attn.bv"]
        ctx = np.zeros_like(h)
        for hd in range(heads):
            sl = slice(hd * dh, (hd + 1) * dh)
            scores = q[:, sl] @ k[:, sl].T / np.sqrt(dh)
            scores = scores + (1.0 - mask)[None, :] * -1e9
            e = np.exp(scores - scores.max(-1, keepdims=True))
            p = e / e.sum(-1, keepdims=True)
            ctx[:, sl] = p @ v[:, sl]
        att = ctx @ a[f"layer{i}.attn.wo"] + a[f"layer{i}.attn.bo"]
        h = ln(h + att, a[f"layer{i}.ln1.g"], a[f"layer{i}.ln1.b"])
        f = gelu(h @ a[f"layer{i}.ffn.w1"] + a[f"layer{i}.ffn.b1"])
        f = f @ a[f"layer{i}.ffn.w2"] + a[f"layer{i}.ffn.b2"]
        h = ln(h + f, a[f"layer{i}.ln2.g"], a[f"layer{i}.ln2.b"])
    return h


def test_encode_matches_reference_double_precision():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=3, dtype=np.float64)
    enc = make_input([2, 8, 9, 10, 3], segs=[0, 0, 1, 2, 2])
    x = M.embed(enc, params)
    mask = np.ones(5)
    got = M.encode(x, mask, params, cfg).value
    ref = _reference_encode(x.value, mask, params, cfg)
    assert got.shape == (5, cfg.hidden)
    assert np.max(np.abs(got - ref)) < 1e-10


def test_encode_single_token_finite():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=0, dtype=np.float64)
    out = M.encode(M.embed(make_input([2]), params), np.ones(1), params, cfg)
    assert out.shape == (1, cfg.hidden)
    assert np.all(np.isfinite(out.value))


def test_encode_ignores_pad_content():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=4, dtype=np.float64)
    ids_a = np.array([[2, 8, 9, 0, 0]])
    ids_b = np.array([[2, 8, 9, 17, 31]])  # different content at padded slots
    segs = np.zeros((1, 5), dtype=int)
    mask = np.array([[1.0, 1.0, 1.0, 0.0, 0.0]])
    out_a = M.encode(M._embed_ids(ids_a, segs, params), mask, params, cfg).value
    out_b = M.encode(M._embed_ids(ids_b, segs, params), mask, params, cfg).value
    assert np.allclose(out_a[0, :3], out_b[0, :3], atol=1e-12)


def test_encode_deterministic_inference_and_seeded_dropout():
    cfg = tiny_config(dropout=0.3)
    params = M.init_encoder_params(cfg, seed=5)
    enc = make_input([2, 8, 9, 3])
    x = M.embed(enc, params)
    mask = np.ones(4)
    a = M.encode(x, mask, params, cfg).value
    b = M.encode(x, mask, params, cfg).value
    assert np.array_equal(a, b)
    t1 = M.encode(x, mask, params, cfg, train=True, rng=np.random.default_rng(1)).value
    t2 = M.encode(x, mask, params, cfg, train=True, rng=np.random.default_rng(1)).value
    t3 = M.encode(x, mask, params, cfg, train=True, rng=np.random.default_rng(2)).value
    assert np.array_equal(t1, t2)
    assert not np.array_equal(t1, t3)


# ---------------------------------------------------------------------------
# heads


def test_cls_pool_returns_row_zero():
    h = Tensor(np.arange(12, dtype=np.float64).reshape(3, 4))
    assert np.array_equal(M.cls_pool(h).value, h.value[0])
    batched = Tensor(np.arange(24, dtype=np.float64).reshape(2, 3, 4))
    assert np.array_equal(M.cls_pool(batched).value, batched.value[:, 0, :])


def test_mlm_head_rows_are_distributions():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=6, dtype=np.float64)
    h = Tensor(np.random.default_rng(0).standard_normal((5, cfg.hidden)))
    probs = M.mlm_head(h, [1, 3], params).value
    assert probs.shape == (2, cfg.vocab_size)
    assert np.all(probs >= 0)
    assert np.allclose(probs.sum(-1), 1.0, atol=1e-6)


def test_mlm_head_uniform_when_logits_equal():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=7, dtype=np.float64)
    params.set_("mlm.w", np.zeros_like(params["mlm.w"].value))
    params.set_("mlm.b", np.zeros_like(params["mlm.b"].value))
    h = Tensor(np.ones((3, cfg.hidden)))
    probs = M.mlm_head(h, [0], params).value
    assert np.allclose(probs, 1.0 / cfg.vocab_size)


def test_mlm_head_matches_scalar_softmax():
    cfg = tiny_config(vocab_size=8, hidden=8, heads=2)
    params = M.init_encoder_params(cfg, seed=8, dtype=np.float64)
    h = Tensor(np.random.default_rng(1).standard_normal((2, 8)))
    probs = M.mlm_head(h, [1], params).value[0]
    logits = h.value[1] @ params["mlm.w"].value + params["mlm.b"].value
    expect = np.exp(logits) / np.exp(logits).sum()
    assert np.allclose(probs, expect, atol=1e-12)


# ---------------------------------------------------------------------------
# losses


def test_m3lm_loss_uniform_is_log_vocab():
    V = 50
    dists = Tensor(np.full((1, V), 1.0 / V))
    loss = M.m3lm_loss(dists, [7])
    assert abs(float(loss.value) - np.log(V)) < 1e-6


def test_m3lm_loss_perfect_prediction_is_zero():
    row = np.zeros((1, 10))
    row[0, 4] = 1.0
    assert float(M.m3lm_loss(Tensor(row), [4]).value) == pytest.approx(0.0, abs=1e-12)


def test_m3lm_loss_matches_explicit_sum():
    rng = np.random.default_rng(2)
    probs = rng.random((6, 12))
    probs /= probs.sum(-1, keepdims=True)
    targets = rng.integers(0, 12, size=6)
    expect = -sum(np.log(probs[i, t]) for i, t in enumerate(targets))
    got = float(M.m3lm_loss(Tensor(probs), targets).value)
    assert got == pytest.approx(expect, rel=1e-12)
    mean = float(M.m3lm_loss_mean(Tensor(probs), targets).value)
    assert mean == pytest.approx(expect / 6, rel=1e-12)


def test_ssi_loss_equal_dots_is_log_1_plus_k():
    for K in (1, 4, 9):
        v = np.ones((1, 3))
        loss = M.ssi_loss(Tensor(v), Tensor(v), Tensor(np.tile(v, (K, 1))))
        assert abs(float(loss.value) - np.log(1 + K)) < 1e-6


def test_ssi_loss_saturates_with_strong_positive():
    anchor = Tensor(np.array([[10.0, 0.0]]))
    positive = Tensor(np.array([[10.0, 0.0]]))  # dot = 100
    negatives = Tensor(np.zeros((3, 2)))
    assert float(M.ssi_loss(anchor, positive, negatives).value) < 1e-3


def test_ssi_loss_matches_brute_force():
    rng = np.random.default_rng(3)
    v1 = rng.standard_normal((4, 5))
    v2 = rng.standard_normal((4, 5))
    sources = ["a", "b", "c", "a"]
    got = float(M.ssi_loss_inbatch(Tensor(v1), Tensor(v2), sources).value)

    # oracle: direct evaluation of the contrastive ratio per anchor
    all_v = np.vstack([v1, v2])
    all_pos = np.vstack([v2, v1])
    all_src = sources + sources
    expect = 0.0
    for i in range(8):
        pos = np.exp(all_v[i] @ all_pos[i])
        negs = sum(
            np.exp(all_v[i] @ all_v[j]) for j in range(8) if all_src[j] != all_src[i]
        )
        expect += -np.log(pos / (pos + negs))
    assert got == pytest.approx(expect, rel=1e-9)


def test_ssi_loss_requires_negatives():
    v = Tensor(np.ones((1, 2)))
    with pytest.raises(ValueError):
        M.ssi_loss(v, v, Tensor(np.zeros((0, 2))))
    with pytest.raises(ValueError):
        M.ssi_loss_inbatch(v, v, ["x"])
    two = Tensor(np.ones((2, 2)))
    with pytest.raises(ValueError):
        M.ssi_loss_inbatch(two, two, ["x", "x"])


def test_rii_loss_values():
    assert M.binary_cross_entropy(0.5, 1) == pytest.approx(np.log(2), abs=1e-9)
    assert M.binary_cross_entropy(0.5, 0) == pytest.approx(np.log(2), abs=1e-9)
    assert M.binary_cross_entropy(1.0, 1) == 0.0
    assert M.binary_cross_entropy(0.0, 0) == 0.0


def test_rii_head_and_loss_matches_scalar_oracle():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=9, dtype=np.float64)
    cls_vec = Tensor(np.random.default_rng(4).standard_normal((3, cfg.hidden)))
    labels = [1, 0, 1]
    p, loss = M.rii_head_and_loss(cls_vec, labels, params)
    logits = cls_vec.value @ params["rii.w"].value + params["rii.b"].value
    probs = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
    expect_p = probs[:, 1]
    expect_loss = sum(M.binary_cross_entropy(expect_p[i], y) for i, y in enumerate(labels))
    assert np.allclose(p.value, expect_p, atol=1e-12)
    assert float(loss.value) == pytest.approx(expect_loss, rel=1e-9)
    # heads agree
    assert np.allclose(M.rii_head(cls_vec, params).value, expect_p, atol=1e-12)


def test_total_pretrain_loss_lambda():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=10, dtype=np.float64)
    l1, l2, l3 = Tensor(np.float64(1.5)), Tensor(np.float64(0.25)), Tensor(np.float64(2.0))
    assert float(M.total_pretrain_loss(l1, l2, l3, params, 0.0).value) == 3.75
    expect_pen = sum(
        (t.value**2).sum() for n, t in params.items() if M.penalty_eligible(n)
    )
    got = float(M.total_pretrain_loss(l1, l2, l3, params, 0.01).value)
    assert got == pytest.approx(3.75 + 0.01 * expect_pen, rel=1e-9)


def test_penalty_excludes_embeddings_and_layernorm():
    assert not M.penalty_eligible("emb.token")
    assert not M.penalty_eligible("layer0.ln1.g")
    assert not M.penalty_eligible("layer1.ln2.b")
    assert M.penalty_eligible("layer0.attn.wq")
    assert M.penalty_eligible("mlm.w")
    assert M.penalty_eligible("layer0.ffn.b1")


def test_zero_init_penalty_weights_do_not_change_task_losses():
    # with all eligible weights at zero, lambda has no first-step effect
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=11, dtype=np.float64)
    for name in params.names():
        if M.penalty_eligible(name):
            params.set_(name, np.zeros_like(params[name].value))
    l1 = Tensor(np.float64(1.0))
    a = float(M.total_pretrain_loss(l1, l1, l1, params, 0.0).value)
    b = float(M.total_pretrain_loss(l1, l1, l1, params, 5.0).value)
    assert a == b == 3.0


def test_classify_head_uniform_and_shift_invariant():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=12, dtype=np.float64)
    M.init_classifier_head(params, cfg.hidden, 4, seed=0)
    params.set_("cls.w", np.zeros_like(params["cls.w"].value))
    probs = M.classify_head(Tensor(np.ones(cfg.hidden)), params, 4).value
    assert np.allclose(probs, 0.25)
    params.set_("cls.b", np.array([1.0, 2.0, 0.5, -1.0]))
    p1 = M.classify_head(Tensor(np.ones(cfg.hidden)), params, 4).value
    params.set_("cls.b", np.array([1.0, 2.0, 0.5, -1.0]) + 7.0)
    p2 = M.classify_head(Tensor(np.ones(cfg.hidden)), params, 4).value
    assert np.argmax(p1) == np.argmax(p2)
    assert np.allclose(p1, p2, atol=1e-12)


# ---------------------------------------------------------------------------
# gradients


def test_gradient_of_penalty_is_2_lambda_w():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=13, dtype=np.float64)
    lam = 0.03
    loss = Tensor(np.float64(0.0)) + lam * M.l2_penalty(params)
    grads = M.gradients(loss, params)
    for name, t in params.items():
        if M.penalty_eligible(name):
            assert np.allclose(grads[name], 2 * lam * t.value, atol=1e-12)
        else:
            assert np.all(grads[name] == 0)


def test_untouched_parameters_report_zero():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=14, dtype=np.float64)
    loss = (params["mlm.w"] ** 2).sum()
    grads = M.gradients(loss, params)
    assert np.allclose(grads["mlm.w"], 2 * params["mlm.w"].value)
    assert np.all(grads["layer0.attn.wq"] == 0)


def test_nonfinite_loss_raises():
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=15, dtype=np.float64)
    with pytest.raises(FloatingPointError):
        M.gradients(Tensor(np.float64("nan")), params)


# ---------------------------------------------------------------------------
# checkpoint container round-trip


def test_checkpoint_round_trip_bit_exact(tmp_path):
    cfg = tiny_config()
    params = M.init_encoder_params(cfg, seed=16)
    path = tmp_path / "model.ckpt"
    M.save_checkpoint(str(path), params, cfg, {"step": 7})
    loaded, cfg2, extra = M.load_checkpoint(str(path))
    assert cfg2 == cfg
    assert extra["step"] == "7"
    assert loaded.names() == params.names()
    for name in params.names():
        assert np.array_equal(loaded[name].value, params[name].value)
    # bit-exact re-save
    path2 = tmp_path / "model2.ckpt"
    M.save_checkpoint(str(path2), loaded, cfg2, {"step": 7})
    assert path.read_bytes() == path2.read_bytes()

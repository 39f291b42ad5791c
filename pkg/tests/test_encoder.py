"""Feedforward encoder: forward pass, gradients, init, and checkpoints."""

import numpy as np
import pytest

from hashscreen.encoder import (
    EncoderConfig,
    Model,
    backward,
    encode,
    encode_batch,
    init_model,
    init_params,
    load_checkpoint,
    save_checkpoint,
    zeros_like_params,
)
from hashscreen.errors import (
    CorruptCheckpointError,
    InvalidInputError,
    ShapeError,
)

CFG = EncoderConfig(input_dim=6, hidden_dim=5, code_length=4)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        EncoderConfig(input_dim=0, hidden_dim=5, code_length=4)
    with pytest.raises(InvalidInputError):
        EncoderConfig(input_dim=6, hidden_dim=-1, code_length=4)
    with pytest.raises(InvalidInputError):
        EncoderConfig(input_dim=6, hidden_dim=5, code_length=4, activation="relu")
    assert CFG.layer_sizes == (6, 5, 4)


def test_zero_params_encode_to_zero():
    params = zeros_like_params(init_params(CFG, 0))
    assert np.array_equal(encode(params, np.ones(6)), np.zeros(4))


def test_identity_head_passes_input_through():
    # a single linear layer [(I, 0)] is the identity map
    params = [(np.eye(6), np.zeros(6))]
    x = np.linspace(-2, 2, 6)
    assert np.array_equal(encode(params, x), x)


def test_forward_matches_manual_composition():
    rng = np.random.default_rng(0)
    params = init_params(CFG, 7)
    x = rng.normal(size=6)
    (w0, b0), (w1, b1) = params
    expected = w1 @ np.tanh(w0 @ x + b0) + b1
    assert np.allclose(encode(params, x), expected, atol=1e-15)


def test_encode_is_deterministic():
    params = init_params(CFG, 1)
    x = np.linspace(0, 1, 6)
    a = encode(params, x)
    b = encode(params, x)
    assert np.array_equal(a, b)


def test_encode_batch_matches_per_item():
    rng = np.random.default_rng(2)
    params = init_params(CFG, 3)
    xs = rng.normal(size=(12, 6))
    batch = encode_batch(params, xs)
    assert batch.shape == (12, 4)
    for i in range(12):
        assert np.array_equal(batch[i], encode(params, xs[i]))
    # permuting rows permutes outputs identically (no cross-row coupling)
    perm = rng.permutation(12)
    assert np.array_equal(encode_batch(params, xs[perm]), batch[perm])


def test_encode_batch_names_offending_item():
    params = init_params(CFG, 3)
    xs = np.ones((3, 6))
    xs[1, 2] = np.nan
    with pytest.raises(InvalidInputError, match="item 1"):
        encode_batch(params, xs)


def test_encode_input_guards():
    params = init_params(CFG, 0)
    with pytest.raises(ShapeError):
        encode(params, np.ones(7))
    with pytest.raises(InvalidInputError):
        encode(params, np.array([1.0, np.inf, 0, 0, 0, 0]))


def test_backward_finite_difference():
    rng = np.random.default_rng(11)
    h = 1e-5
    for trial in range(5):
        params = init_params(CFG, 100 + trial)
        x = rng.normal(size=6)
        upstream = rng.normal(size=4)

        grads, dx = backward(params, x, upstream)

        def objective(p, xv):
            return float(upstream @ encode(p, xv))

        worst = 0.0
        for li, (w, b) in enumerate(params):
            for arr, g in ((w, grads[li][0]), (b, grads[li][1])):
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = arr[idx]
                    arr[idx] = orig + h
                    up = objective(params, x)
                    arr[idx] = orig - h
                    down = objective(params, x)
                    arr[idx] = orig
                    fd = (up - down) / (2 * h)
                    denom = max(abs(fd), abs(g[idx]), 1e-8)
                    worst = max(worst, abs(fd - g[idx]) / denom)
        for j in range(6):
            orig = x[j]
            x[j] = orig + h
            up = objective(params, x)
            x[j] = orig - h
            down = objective(params, x)
            x[j] = orig
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), abs(dx[j]), 1e-8)
            worst = max(worst, abs(fd - dx[j]) / denom)
        assert worst < 1e-4


def test_backward_zero_upstream_gives_zero_grads():
    params = init_params(CFG, 5)
    grads, dx = backward(params, np.ones(6), np.zeros(4))
    assert all(
        np.array_equal(dw, 0 * dw) and np.array_equal(db, 0 * db)
        for dw, db in grads
    )
    assert np.array_equal(dx, np.zeros(6))


def test_backward_single_layer_closed_form():
    # linear head: dW = outer(upstream, x), db = upstream, dx = W^T upstream
    rng = np.random.default_rng(8)
    w = rng.normal(size=(4, 6))
    params = [(w, np.zeros(4))]
    x = rng.normal(size=6)
    upstream = rng.normal(size=4)
    grads, dx = backward(params, x, upstream)
    assert np.allclose(grads[0][0], np.outer(upstream, x), atol=1e-15)
    assert np.allclose(grads[0][1], upstream, atol=1e-15)
    assert np.allclose(dx, w.T @ upstream, atol=1e-15)


def test_init_params_seeded():
    a = init_params(CFG, 42)
    b = init_params(CFG, 42)
    c = init_params(CFG, 43)
    for (wa, ba), (wb, bb) in zip(a, b):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)
    assert not np.array_equal(a[0][0], c[0][0])
    # biases start at zero
    assert all(np.array_equal(bias, 0 * bias) for _, bias in a)


def test_init_params_scale():
    # uniform [-s, s] has stdev s / sqrt(3); check within 20% on a big layer
    cfg = EncoderConfig(input_dim=300, hidden_dim=200, code_length=4)
    w = init_params(cfg, 0)[0][0]
    s = np.sqrt(6.0 / (300 + 200))
    assert abs(w).max() <= s
    assert np.std(w) == pytest.approx(s / np.sqrt(3), rel=0.2)


def test_model_requires_matching_code_lengths():
    p_cfg = EncoderConfig(input_dim=6, hidden_dim=5, code_length=4)
    m_cfg = EncoderConfig(input_dim=3, hidden_dim=5, code_length=8)
    with pytest.raises(ShapeError):
        init_model(p_cfg, m_cfg, seed=0)


def test_init_model_sides_are_independent():
    p_cfg = EncoderConfig(input_dim=6, hidden_dim=5, code_length=4)
    m_cfg = EncoderConfig(input_dim=6, hidden_dim=5, code_length=4)
    model = init_model(p_cfg, m_cfg, seed=0)
    # same shapes, different draws
    assert model.protein[0][0].shape == model.molecule[0][0].shape
    assert not np.array_equal(model.protein[0][0], model.molecule[0][0])
    assert model.side("protein") == (model.protein_config, model.protein)
    assert model.side("molecule") == (model.molecule_config, model.molecule)
    with pytest.raises(InvalidInputError):
        model.side("rna")


def _small_model(seed=0):
    p_cfg = EncoderConfig(input_dim=6, hidden_dim=5, code_length=4)
    m_cfg = EncoderConfig(input_dim=3, hidden_dim=7, code_length=4)
    return init_model(p_cfg, m_cfg, seed=seed)


def test_checkpoint_roundtrip_bitwise(tmp_path):
    model = _small_model(9)
    path = str(tmp_path / "model.hsck")
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.protein_config == model.protein_config
    assert loaded.molecule_config == model.molecule_config
    for side in ("protein", "molecule"):
        for (w0, b0), (w1, b1) in zip(model.side(side)[1], loaded.side(side)[1]):
            assert np.array_equal(w0, w1)
            assert np.array_equal(b0, b1)


def test_checkpoint_bytes_deterministic(tmp_path):
    model = _small_model(9)
    p1, p2 = str(tmp_path / "a.hsck"), str(tmp_path / "b.hsck")
    save_checkpoint(model, p1)
    save_checkpoint(model, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_checkpoint_corruption_detected(tmp_path):
    model = _small_model(1)
    path = str(tmp_path / "model.hsck")
    save_checkpoint(model, path)
    blob = open(path, "rb").read()

    bad_magic = b"XXXX" + blob[4:]
    bad_version = blob[:4] + b"\x63\x00" + blob[6:]
    truncated = blob[: len(blob) - 5]
    padded = blob + b"\x00" * 8
    for variant in (bad_magic, bad_version, truncated, padded):
        with open(path, "wb") as fh:
            fh.write(variant)
        with pytest.raises(CorruptCheckpointError):
            load_checkpoint(path)


def test_checkpoint_rejects_non_finite_weights(tmp_path):
    model = _small_model(2)
    model.protein[0][0][0, 0] = np.nan
    path = str(tmp_path / "model.hsck")
    save_checkpoint(model, path)
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(path)


def test_model_modalities_do_not_share_arrays(tmp_path):
    model = _small_model(3)
    path = str(tmp_path / "model.hsck")
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    before = loaded.molecule[0][0].copy()
    loaded.protein[0][0][:] = 0.0
    assert np.array_equal(loaded.molecule[0][0], before)

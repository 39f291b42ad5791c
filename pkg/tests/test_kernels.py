"""Both scan-kernel lanes must be available and bit-identical."""

import importlib
import os

import numpy as np
import pytest

import hashscreen.kernels as kernels
from hashscreen import _kernels_py
from hashscreen.codes import tail_mask, words_for_bits
from hashscreen.errors import ShapeError


def _random_block(rng, n_rows, n_bits):
    n_words = words_for_bits(n_bits)
    words = rng.integers(0, 2**63, size=(n_rows, n_words), dtype=np.uint64)
    words[:, -1] &= tail_mask(n_bits)
    return words


def _oracle_distances(codes, query, n_bits):
    mask = tail_mask(n_bits)
    out = []
    for row in codes:
        x = row ^ query
        x[-1] &= mask
        out.append(sum(bin(int(w)).count("1") for w in x))
    return np.array(out, dtype=np.int64)


def test_backend_reports_a_known_lane():
    assert kernels.BACKEND in ("compiled", "python")


def test_hamming_distances_matches_bit_count_oracle():
    rng = np.random.default_rng(0)
    for n_bits in (1, 63, 64, 65, 100, 128, 200):
        codes = _random_block(rng, 40, n_bits)
        query = _random_block(rng, 1, n_bits)[0]
        got = kernels.hamming_distances(codes, query, n_bits)
        assert np.array_equal(got, _oracle_distances(codes, query, n_bits))


def test_topk_block_matches_full_sort_oracle():
    rng = np.random.default_rng(1)
    for trial in range(30):
        n_bits = int(rng.integers(1, 130))
        n_rows = int(rng.integers(1, 200))
        codes = _random_block(rng, n_rows, n_bits)
        query = _random_block(rng, 1, n_bits)[0]
        k = int(rng.integers(1, n_rows + 5))
        base = int(rng.integers(0, 1000))

        dist, idx = kernels.topk_block(codes, query, n_bits, k, base=base)
        full = _oracle_distances(codes, query, n_bits)
        order = np.lexsort((np.arange(n_rows), full))[: min(k, n_rows)]
        assert np.array_equal(dist, full[order])
        assert np.array_equal(idx, order + base)


def test_topk_block_tie_order_is_ascending_index():
    # all-equal rows: every distance ties, indices must come back sorted
    codes = np.zeros((10, 1), dtype=np.uint64)
    query = np.zeros(1, dtype=np.uint64)
    dist, idx = kernels.topk_block(codes, query, 64, 4)
    assert np.array_equal(dist, [0, 0, 0, 0])
    assert np.array_equal(idx, [0, 1, 2, 3])


def test_topk_block_k_larger_than_rows():
    rng = np.random.default_rng(2)
    codes = _random_block(rng, 3, 64)
    query = _random_block(rng, 1, 64)[0]
    dist, idx = kernels.topk_block(codes, query, 64, 50)
    assert len(dist) == 3
    assert len(idx) == 3


def test_kernel_shape_guards():
    codes = np.zeros((4, 2), dtype=np.uint64)
    query = np.zeros(2, dtype=np.uint64)
    with pytest.raises(ShapeError):
        kernels.hamming_distances(codes, query, 64)  # 64 bits needs 1 word
    with pytest.raises(ShapeError):
        kernels.hamming_distances(codes, np.zeros(1, dtype=np.uint64), 128)


def test_python_lane_matches_active_lane_bitwise():
    rng = np.random.default_rng(3)
    for n_bits in (1, 64, 65, 128, 192, 517):
        codes = _random_block(rng, 500, n_bits)
        query = _random_block(rng, 1, n_bits)[0]
        mask = tail_mask(n_bits)

        out_a = np.empty(500, dtype=np.int64)
        kernels._impl.hamming_distances(codes, query, mask, out_a)
        out_b = np.empty(500, dtype=np.int64)
        _kernels_py.hamming_distances(codes, query, mask, out_b)
        assert np.array_equal(out_a, out_b)

        for k in (1, 7, 500):
            da = np.empty(k, dtype=np.int64)
            ia = np.empty(k, dtype=np.int64)
            ma = kernels._impl.topk_block(codes, query, mask, k, 0, da, ia)
            db = np.empty(k, dtype=np.int64)
            ib = np.empty(k, dtype=np.int64)
            mb = _kernels_py.topk_block(codes, query, mask, k, 0, db, ib)
            assert ma == mb
            oa = np.lexsort((ia[:ma], da[:ma]))
            ob = np.lexsort((ib[:mb], db[:mb]))
            assert np.array_equal(da[:ma][oa], db[:mb][ob])
            assert np.array_equal(ia[:ma][oa], ib[:mb][ob])


def test_env_override_forces_python_lane():
    env = dict(os.environ)
    env["HASHSCREEN_PURE_PYTHON"] = "1"
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import hashscreen.kernels as k; print(k.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"


def test_reload_honors_env_toggle():
    # flip to the fallback in-process, then restore the original lane
    original = kernels.BACKEND
    os.environ["HASHSCREEN_PURE_PYTHON"] = "1"
    try:
        importlib.reload(kernels)
        assert kernels.BACKEND == "python"
    finally:
        os.environ.pop("HASHSCREEN_PURE_PYTHON", None)
        importlib.reload(kernels)
    assert kernels.BACKEND == original

"""Scan-kernel dispatch: compiled extension when available, numpy otherwise.

``BACKEND`` reports which lane is active ("compiled" or "python"). Setting
the environment variable ``HASHSCREEN_PURE_PYTHON=1`` forces the fallback,
which is how the lane-equivalence tests and the lane benchmark flip between
the two implementations. Both lanes produce bit-identical results.
"""

import os

import numpy as np

from .codes import tail_mask, words_for_bits
from .errors import ShapeError


def _want_pure_python() -> bool:
    return os.environ.get("HASHSCREEN_PURE_PYTHON", "").strip() not in ("", "0")


if _want_pure_python():
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"


def _check_block(codes: np.ndarray, query: np.ndarray, n_bits: int) -> tuple:
    n_words = words_for_bits(n_bits)
    codes = np.ascontiguousarray(codes, dtype=np.uint64)
    query = np.ascontiguousarray(query, dtype=np.uint64)
    if codes.ndim != 2 or codes.shape[1] != n_words:
        raise ShapeError(
            f"code block must be (n, {n_words}) for {n_bits} bits, "
            f"got shape {codes.shape}"
        )
    if query.shape != (n_words,):
        raise ShapeError(
            f"query must have {n_words} words for {n_bits} bits, "
            f"got shape {query.shape}"
        )
    return codes, query


def hamming_distances(codes: np.ndarray, query: np.ndarray, n_bits: int) -> np.ndarray:
    """Distances from ``query`` to every row of an (n, W) packed block."""
    codes, query = _check_block(codes, query, n_bits)
    out = np.empty(codes.shape[0], dtype=np.int64)
    _impl.hamming_distances(codes, query, tail_mask(n_bits), out)
    return out


def topk_block(
    codes: np.ndarray, query: np.ndarray, n_bits: int, k: int, base: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Top-k smallest (distance, index) over one block, sorted by (d, i).

    ``base`` offsets row indices so blocks of a larger scan report global
    record indices.
    """
    codes, query = _check_block(codes, query, n_bits)
    k = min(int(k), codes.shape[0])
    dist = np.empty(max(k, 1), dtype=np.int64)
    idx = np.empty(max(k, 1), dtype=np.int64)
    m = _impl.topk_block(codes, query, tail_mask(n_bits), k, base, dist, idx)
    order = np.lexsort((idx[:m], dist[:m]))
    return dist[:m][order], idx[:m][order]

"""Pure-numpy fallback for the compiled scan kernels.

Same contracts as ``_kernels``; selected at import time by
:mod:`hashscreen.kernels` when the extension is unavailable or disabled.
"""

import numpy as np


def hamming_distances(codes, query, mask, out):
    diff = codes ^ query
    diff[:, -1] &= mask
    np.sum(np.bitwise_count(diff), axis=1, dtype=np.int64, out=out)


def topk_block(codes, query, mask, k, base, out_dist, out_idx):
    n = codes.shape[0]
    if k <= 0 or n == 0:
        return 0
    dist = np.empty(n, dtype=np.int64)
    hamming_distances(codes, query, mask, dist)
    if k < n:
        # everything at or below the kth distance survives so tie groups
        # are never split before the index tie-break
        kth = np.partition(dist, k - 1)[k - 1]
        cand = np.flatnonzero(dist <= kth)
    else:
        cand = np.arange(n)
    order = cand[np.argsort(dist[cand], kind="stable")][:k]
    m = order.shape[0]
    out_dist[:m] = dist[order]
    out_idx[:m] = order + base
    return m

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Popcount kernels for packed-code Hamming scans.

The scan loop is the hot path of the whole package: XOR + popcount over
ceil(d/64) words per record, with an optional bounded max-heap so top-k
selection stays O(C log k) without materializing all distances.
"""

from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #define hs_popcount64(x) ((unsigned)__builtin_popcountll(x))
    #else
    static unsigned hs_popcount64(unsigned long long x) {
        x = x - ((x >> 1) & 0x5555555555555555ULL);
        x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL);
        x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0FULL;
        return (unsigned)((x * 0x0101010101010101ULL) >> 56);
    }
    #endif
    """
    unsigned hs_popcount64(uint64_t x) nogil


cdef inline int64_t _row_distance(const uint64_t* row, const uint64_t* query,
                                  Py_ssize_t n_words, uint64_t mask) nogil:
    cdef int64_t acc = 0
    cdef Py_ssize_t w
    for w in range(n_words - 1):
        acc += hs_popcount64(row[w] ^ query[w])
    acc += hs_popcount64((row[n_words - 1] ^ query[n_words - 1]) & mask)
    return acc


cdef inline bint _after(int64_t d1, int64_t i1, int64_t d2, int64_t i2) nogil:
    # lexicographic (distance, index): True if entry 1 ranks after entry 2
    return d1 > d2 or (d1 == d2 and i1 > i2)


def hamming_distances(const uint64_t[:, ::1] codes, const uint64_t[::1] query,
                      uint64_t mask, int64_t[::1] out):
    """Fill ``out`` with popcount(codes[i] XOR query) for every row."""
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t n_words = codes.shape[1]
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _row_distance(&codes[i, 0], &query[0], n_words, mask)


def topk_block(const uint64_t[:, ::1] codes, const uint64_t[::1] query,
               uint64_t mask, Py_ssize_t k, int64_t base,
               int64_t[::1] out_dist, int64_t[::1] out_idx):
    """Scan a block keeping the k smallest (distance, global index) pairs.

    Results land unsorted (heap order) in the first ``m`` slots of the out
    arrays; returns ``m = min(k, rows)``. Global index of row i is base+i.
    """
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t n_words = codes.shape[1]
    cdef Py_ssize_t size = 0, i, child, parent, pos
    cdef int64_t d, idx, td, ti
    if k <= 0 or n == 0:
        return 0
    cdef int64_t* hd = <int64_t*> malloc(k * sizeof(int64_t))
    cdef int64_t* hi = <int64_t*> malloc(k * sizeof(int64_t))
    if hd == NULL or hi == NULL:
        free(hd)
        free(hi)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                d = _row_distance(&codes[i, 0], &query[0], n_words, mask)
                idx = base + i
                if size < k:
                    # grow: sift the new entry up
                    pos = size
                    hd[pos] = d
                    hi[pos] = idx
                    size += 1
                    while pos > 0:
                        parent = (pos - 1) >> 1
                        if _after(hd[pos], hi[pos], hd[parent], hi[parent]):
                            td = hd[pos]; hd[pos] = hd[parent]; hd[parent] = td
                            ti = hi[pos]; hi[pos] = hi[parent]; hi[parent] = ti
                            pos = parent
                        else:
                            break
                elif _after(hd[0], hi[0], d, idx):
                    # replace the current worst and sift down
                    hd[0] = d
                    hi[0] = idx
                    pos = 0
                    while True:
                        child = 2 * pos + 1
                        if child >= size:
                            break
                        if child + 1 < size and _after(hd[child + 1], hi[child + 1],
                                                       hd[child], hi[child]):
                            child += 1
                        if _after(hd[child], hi[child], hd[pos], hi[pos]):
                            td = hd[pos]; hd[pos] = hd[child]; hd[child] = td
                            ti = hi[pos]; hi[pos] = hi[child]; hi[child] = ti
                            pos = child
                        else:
                            break
            for i in range(size):
                out_dist[i] = hd[i]
                out_idx[i] = hi[i]
    finally:
        free(hd)
        free(hi)
    return size

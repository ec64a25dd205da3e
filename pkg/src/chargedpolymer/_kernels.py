"""Compiled inner loops for streaming a charged walk (and an optional twin walk).

Sites are packed into one int64 key (see ``lattice_walk.pack_vectors``) and
kept in an open-addressing table with linear probing and Fibonacci hashing.
A table is a flat int64 array of 2-word records ``(key, word)``:

* integer charges: ``word = count * 2**32 + charge_sum`` so one add updates
  both (|charge_sum| <= count < 2**31);
* real charges: ``word = count`` and the charge sum lives in a float64
  array indexed by slot.

The loop keeps all running state in scalars; coordinate bounds are checked
by the caller, chunk by chunk.
"""
import numpy as np
from numba import njit

EMPTY = np.int64(-(2**63))
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_LO32 = np.int64(0xFFFFFFFF)
_SIGN32 = np.int64(0x80000000)
_ONE32 = np.int64(1 << 32)

# layout of the int64 state vector
KEY, Q, RANGE, MAXLT, J, KEY2, RANGE2, CP = range(8)
STATE_SIZE = 8


@njit(cache=True)
def find_or_insert(tab, key, shift):
    """Return (record offset, inserted) for `key`, inserting it when absent."""
    mask = (tab.shape[0] >> 1) - 1
    s = np.int64((np.uint64(key) * _GOLDEN) >> np.uint64(shift))
    while True:
        k = tab[s << 1]
        if k == key:
            return s << 1, False
        if k == EMPTY:
            tab[s << 1] = key
            tab[(s << 1) + 1] = 0
            return s << 1, True
        s = (s + 1) & mask


@njit(cache=True)
def lookup(tab, key, shift):
    mask = (tab.shape[0] >> 1) - 1
    s = np.int64((np.uint64(key) * _GOLDEN) >> np.uint64(shift))
    while True:
        k = tab[s << 1]
        if k == key:
            return s << 1
        if k == EMPTY:
            return -1
        s = (s + 1) & mask


@njit(cache=True, inline="always")
def _count(word, real):
    if real:
        return word
    return (word - (((word & _LO32) ^ _SIGN32) - _SIGN32)) >> 32


@njit(cache=True)
def walk_chunk(idx, step_keys, charges, base, tab, fcs, real, shift, st, hacc,
               pair, idx2, tab2, shift2,
               checkpoints, out_h, out_q, out_range, out_maxlt, out_j):
    """Advance the walk over ``idx`` (steps ``base+1 .. base+len(idx)``).

    ``fcs`` holds real charge sums (empty, with the dtype of H, for integer
    charges). Returns the number of steps consumed; fewer than ``len(idx)``
    means a table reached half load and must be grown before resuming.
    """
    n_steps = idx.shape[0]
    half = tab.shape[0] >> 2
    half2 = tab2.shape[0] >> 2
    ncp = checkpoints.shape[0]
    key = st[KEY]
    q = st[Q]
    rng_ = st[RANGE]
    maxlt = st[MAXLT]
    jj = st[J]
    key2 = st[KEY2]
    rng2 = st[RANGE2]
    cp = st[CP]
    h = hacc[0]
    next_cp = checkpoints[cp] - base if cp < ncp else -1
    i = 0
    while i < n_steps:
        if rng_ >= half or (pair and rng2 >= half2):
            break
        key += step_keys[idx[i]]
        s, new = find_or_insert(tab, key, shift)
        if new:
            rng_ += 1
        w = charges[i]
        word = tab[s + 1]
        if real:
            c0 = word
            tab[s + 1] = word + 1
            r = s >> 1
            if new:
                fcs[r] = 0.0
            h += w * fcs[r]
            fcs[r] += w
        else:
            lo = ((word & _LO32) ^ _SIGN32) - _SIGN32
            c0 = (word - lo) >> 32
            h += w * lo
            tab[s + 1] = word + _ONE32 + np.int64(w)
        q += c0
        if c0 >= maxlt:
            maxlt = c0 + 1
        if pair:
            # earlier points of walk two at the new site of walk one
            s2 = lookup(tab2, key, shift2)
            if s2 >= 0:
                jj += tab2[s2 + 1]
            key2 += step_keys[idx2[i]]
            # walk one up to and including the current step
            s1 = lookup(tab, key2, shift)
            if s1 >= 0:
                jj += _count(tab[s1 + 1], real)
            t, new2 = find_or_insert(tab2, key2, shift2)
            if new2:
                rng2 += 1
            tab2[t + 1] += 1
        i += 1
        if i == next_cp:
            while cp < ncp and checkpoints[cp] == base + i:
                out_h[cp] = h
                out_q[cp] = q
                out_range[cp] = rng_
                out_maxlt[cp] = maxlt
                out_j[cp] = jj
                cp += 1
            next_cp = checkpoints[cp] - base if cp < ncp else -1
    st[KEY] = key
    st[Q] = q
    st[RANGE] = rng_
    st[MAXLT] = maxlt
    st[J] = jj
    st[KEY2] = key2
    st[RANGE2] = rng2
    st[CP] = cp
    hacc[0] = h
    return i


@njit(cache=True)
def rehash(tab, fcs, real, new_cap, shift):
    """Copy all live records into a fresh table with `new_cap` slots."""
    ntab = np.empty(2 * new_cap, dtype=np.int64)
    for s in range(new_cap):
        ntab[s << 1] = EMPTY
        ntab[(s << 1) + 1] = 0
    nfcs = np.zeros(new_cap if real else 0, dtype=fcs.dtype)
    for s in range(0, tab.shape[0], 2):
        if tab[s] != EMPTY:
            t, _ = find_or_insert(ntab, tab[s], shift)
            ntab[t + 1] = tab[s + 1]
            if real:
                nfcs[t >> 1] = fcs[s >> 1]
    return ntab, nfcs


_M32 = np.uint64(0xFFFFFFFF)


@njit(cache=True)
def _splitmix(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def decode_uniform(words, k, out):
    """Exact uniform indices in ``0..k-1``, one 64-bit word per index.

    Lemire's multiply-shift on the low 32 bits, then the high 32 bits when
    the low half falls in the rejection zone, then splitmix successors.
    """
    kk = np.uint64(k)
    threshold = (np.uint64(1) << np.uint64(32)) % kk
    for i in range(words.shape[0]):
        w = words[i]
        u = w & _M32
        m = u * kk
        if (m & _M32) < threshold:
            u = w >> np.uint64(32)
            m = u * kk
            while (m & _M32) < threshold:
                w = _splitmix(w)
                u = w & _M32
                m = u * kk
        out[i] = np.int64(m >> np.uint64(32))


@njit(cache=True)
def decode_alias(words, prob, alias, out):
    """Alias-table draws; the top 53 bits of each word give one uniform."""
    k = prob.shape[0]
    scale = 1.0 / 9007199254740992.0
    for i in range(words.shape[0]):
        u = np.float64(words[i] >> np.uint64(11)) * scale * k
        col = np.int64(u)
        if col >= k:
            col = k - 1
        out[i] = col if u - col < prob[col] else alias[col]


@njit(cache=True)
def decode_signs(words, out):
    """Rademacher charges, one bit each (bit j of word i -> charge 64 i + j)."""
    n = out.shape[0]
    for i in range(n):
        bit = (words[i >> 6] >> np.uint64(i & 63)) & np.uint64(1)
        out[i] = np.int8(2 * np.int64(bit) - 1)

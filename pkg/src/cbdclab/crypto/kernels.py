"""Batched single-block SHA-256 kernels for the hash-chain hot loops.

Every WOTS chain step and secret-key derivation hashes a short, fixed-layout
message (< 56 bytes), so one SHA-256 compression per call suffices. Batching
thousands of those lanes per call is what makes Merkle key generation
tolerable in Python.

Two interchangeable implementations exist:

* ``*_numba``: scalar loops compiled with ``@njit`` (used when numba imports).
* ``*_numpy``: lane-vectorized uint32 arithmetic, no compilation.

``hash_rows`` and ``chain_rows`` dispatch on ``cbdclab._accel.BACKEND``.
Both must agree bit-for-bit with ``hashlib.sha256``; the test suite checks it.
"""

from __future__ import annotations

import numpy as np

from .._accel import BACKEND, NUMBA_OK, njit

MAX_MESSAGE = 55

_K = np.array(
    [
        0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1, 0x923F82A4, 0xAB1C5ED5,
        0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3, 0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174,
        0xE49B69C1, 0xEFBE4786, 0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
        0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147, 0x06CA6351, 0x14292967,
        0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13, 0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85,
        0xA2BFE8A1, 0xA81A664B, 0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
        0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A, 0x5B9CCA4F, 0x682E6FF3,
        0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208, 0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
    ],
    dtype=np.uint32,
)
_H0 = np.array(
    [0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A, 0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19],
    dtype=np.uint32,
)

# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------
# Every intermediate is cast back to u32 explicitly; numba otherwise widens
# unsigned scalar arithmetic to 64 bits.

_u32 = np.uint32


@njit(cache=True, inline="always")
def _rotr(x, n):
    return _u32((x >> _u32(n)) | (x << _u32(32 - n)))


@njit(cache=True)
def _digest_short(msg, length, out, w):
    """SHA-256 of ``msg[:length]`` (length <= 55) into ``out[0:32]``; ``w`` is u32 scratch."""
    for i in range(16):
        word = _u32(0)
        for j in range(4):
            idx = 4 * i + j
            if idx < length:
                b = _u32(msg[idx])
            elif idx == length:
                b = _u32(0x80)
            else:
                b = _u32(0)
            word = _u32((word << _u32(8)) | b)
        w[i] = word
    w[15] = _u32(length * 8)
    for i in range(16, 64):
        x = w[i - 15]
        y = w[i - 2]
        s0 = _rotr(x, 7) ^ _rotr(x, 18) ^ _u32(x >> _u32(3))
        s1 = _rotr(y, 17) ^ _rotr(y, 19) ^ _u32(y >> _u32(10))
        w[i] = _u32(w[i - 16] + s0 + w[i - 7] + s1)

    a = _H0[0]
    b = _H0[1]
    c = _H0[2]
    d = _H0[3]
    e = _H0[4]
    f = _H0[5]
    g = _H0[6]
    h = _H0[7]
    for i in range(64):
        s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
        ch = _u32((e & f) ^ (~e & g))
        t1 = _u32(h + s1 + ch + _K[i] + w[i])
        s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
        maj = _u32((a & b) ^ (a & c) ^ (b & c))
        t2 = _u32(s0 + maj)
        h = g
        g = f
        f = e
        e = _u32(d + t1)
        d = c
        c = b
        b = a
        a = _u32(t1 + t2)

    state = (a, b, c, d, e, f, g, h)
    for i in range(8):
        v = _u32(state[i] + _H0[i])
        out[4 * i] = (v >> 24) & 0xFF
        out[4 * i + 1] = (v >> 16) & 0xFF
        out[4 * i + 2] = (v >> 8) & 0xFF
        out[4 * i + 3] = v & 0xFF


@njit(cache=True)
def _hash_rows_jit(prefix, rows):
    n, m = rows.shape
    p = prefix.shape[0]
    out = np.empty((n, 32), dtype=np.uint8)
    msg = np.zeros(64, dtype=np.uint8)
    w = np.zeros(64, dtype=np.uint32)
    for j in range(p):
        msg[j] = prefix[j]
    for r in range(n):
        for j in range(m):
            msg[p + j] = rows[r, j]
        _digest_short(msg, p + m, out[r], w)
    return out


@njit(cache=True)
def _chain_rows_jit(prefix, headers, values, start, steps):
    n, k = headers.shape
    p = prefix.shape[0]
    length = p + k + 1 + 32
    out = values.copy()
    msg = np.zeros(64, dtype=np.uint8)
    w = np.zeros(64, dtype=np.uint32)
    for j in range(p):
        msg[j] = prefix[j]
    for r in range(n):
        for j in range(k):
            msg[p + j] = headers[r, j]
        for s in range(steps[r]):
            msg[p + k] = np.uint8(start[r] + s)
            for j in range(32):
                msg[p + k + 1 + j] = out[r, j]
            _digest_short(msg, length, out[r], w)
    return out


def hash_rows_numba(prefix: bytes, rows: np.ndarray) -> np.ndarray:
    return _hash_rows_jit(np.array(bytearray(prefix), dtype=np.uint8), np.ascontiguousarray(rows, dtype=np.uint8))


def chain_rows_numba(prefix, headers, values, start, steps):
    return _chain_rows_jit(
        np.array(bytearray(prefix), dtype=np.uint8),
        np.ascontiguousarray(headers, dtype=np.uint8),
        np.array(values, dtype=np.uint8, order="C"),
        np.ascontiguousarray(start, dtype=np.int64),
        np.ascontiguousarray(steps, dtype=np.int64),
    )


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------


def _rotr_np(x, n):
    return (x >> np.uint32(n)) | (x << np.uint32(32 - n))


def _digest_short_np(msgs: np.ndarray, length: int) -> np.ndarray:
    """Lane-wise SHA-256 of equal-length messages ``msgs[:, :length]``."""
    n = msgs.shape[0]
    block = np.zeros((n, 64), dtype=np.uint8)
    block[:, :length] = msgs[:, :length]
    block[:, length] = 0x80
    block[:, 56:64] = np.frombuffer((length * 8).to_bytes(8, "big"), dtype=np.uint8)
    words = block.reshape(n, 16, 4).astype(np.uint32)
    w = [
        (words[:, i, 0] << np.uint32(24)) | (words[:, i, 1] << np.uint32(16)) | (words[:, i, 2] << np.uint32(8)) | words[:, i, 3]
        for i in range(16)
    ]
    for i in range(16, 64):
        x, y = w[i - 15], w[i - 2]
        s0 = _rotr_np(x, 7) ^ _rotr_np(x, 18) ^ (x >> np.uint32(3))
        s1 = _rotr_np(y, 17) ^ _rotr_np(y, 19) ^ (y >> np.uint32(10))
        w.append(w[i - 16] + s0 + w[i - 7] + s1)

    a, b, c, d, e, f, g, h = (np.full(n, v, dtype=np.uint32) for v in _H0)
    for i in range(64):
        s1 = _rotr_np(e, 6) ^ _rotr_np(e, 11) ^ _rotr_np(e, 25)
        ch = (e & f) ^ (~e & g)
        t1 = h + s1 + ch + _K[i] + w[i]
        s0 = _rotr_np(a, 2) ^ _rotr_np(a, 13) ^ _rotr_np(a, 22)
        maj = (a & b) ^ (a & c) ^ (b & c)
        h, g, f, e, d, c, b, a = g, f, e, d + t1, c, b, a, t1 + s0 + maj

    state = np.stack([a, b, c, d, e, f, g, h], axis=1) + _H0
    return state.astype(">u4").view(np.uint8).reshape(n, 32)


def hash_rows_numpy(prefix: bytes, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.uint8)
    n = rows.shape[0]
    pre = np.broadcast_to(np.frombuffer(prefix, dtype=np.uint8), (n, len(prefix)))
    return _digest_short_np(np.concatenate([pre, rows], axis=1), len(prefix) + rows.shape[1])


def chain_rows_numpy(prefix, headers, values, start, steps):
    headers = np.asarray(headers, dtype=np.uint8)
    out = np.array(values, dtype=np.uint8, copy=True)
    start = np.asarray(start, dtype=np.int64)
    steps = np.asarray(steps, dtype=np.int64)
    n, k = headers.shape
    if n == 0:
        return out
    pre = np.broadcast_to(np.frombuffer(prefix, dtype=np.uint8), (n, len(prefix)))
    fixed = np.concatenate([pre, headers, np.zeros((n, 1), dtype=np.uint8)], axis=1)
    pos_col = len(prefix) + k
    for s in range(int(steps.max(initial=0))):
        live = np.nonzero(steps > s)[0]
        msgs = np.concatenate([fixed[live], out[live]], axis=1)
        msgs[:, pos_col] = (start[live] + s).astype(np.uint8)
        out[live] = _digest_short_np(msgs, msgs.shape[1])
    return out


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

if NUMBA_OK:
    hash_rows = hash_rows_numba
    chain_rows = chain_rows_numba
else:
    hash_rows = hash_rows_numpy
    chain_rows = chain_rows_numpy

__all__ = [
    "BACKEND",
    "MAX_MESSAGE",
    "hash_rows",
    "chain_rows",
    "hash_rows_numba",
    "hash_rows_numpy",
    "chain_rows_numba",
    "chain_rows_numpy",
]

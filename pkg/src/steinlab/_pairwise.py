"""Compiled O(N*M) pairwise sums for the particle vector field.

Every target accumulates its sources in index order with Kahan
compensation, so splitting the targets across threads never changes a bit
of the result.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def _fused_rows(q, x, w, gv, kind, h, extra, lo, hi, out):
    d = q.shape[1]
    m = x.shape[0]
    inv_h2 = 1.0 / (h * h)
    acc = np.empty(d)
    comp = np.empty(d)
    diff = np.empty(d)
    for i in range(lo, hi):
        for k in range(d):
            acc[k] = 0.0
            comp[k] = 0.0
        for j in range(m):
            r2 = 0.0
            for k in range(d):
                diff[k] = q[i, k] - x[j, k]
                r2 += diff[k] * diff[k]
            if kind == 0:
                kv = math.exp(-0.5 * r2 * inv_h2)
                dk = -kv * inv_h2
            else:
                u = 1.0 + r2 * inv_h2
                kv = u**extra
                dk = 2.0 * extra * inv_h2 * u ** (extra - 1.0)
            for k in range(d):
                term = w[j] * (dk * diff[k] + kv * gv[j, k])
                y = term - comp[k]
                t = acc[k] + y
                comp[k] = (t - acc[k]) - y
                acc[k] = t
        for k in range(d):
            out[i, k] = -acc[k]


@numba.njit(cache=True, nogil=True)
def _kahan_rows(terms, lo, hi, out):
    # terms: (n, m, d); sums over the middle axis
    m = terms.shape[1]
    d = terms.shape[2]
    for i in range(lo, hi):
        for k in range(d):
            acc = 0.0
            comp = 0.0
            for j in range(m):
                y = terms[i, j, k] - comp
                t = acc + y
                comp = (t - acc) - y
                acc = t
            out[i, k] = acc


def default_threads() -> int:
    env = os.environ.get("STEINLAB_THREADS")
    return max(1, int(env)) if env else 1


def _chunks(n, parts):
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run(fn, n, threads):
    spans = _chunks(n, threads)
    if len(spans) == 1:
        fn(*spans[0])
        return
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        for f in [pool.submit(fn, a, b) for a, b in spans]:
            f.result()


def weighted_field(queries, sources, weights, grad_v, kernel, threads=None) -> np.ndarray:
    """-sum_j w_j [grad K(q - x_j) + K(q - x_j) grad V(x_j)] for every query q."""
    q = np.ascontiguousarray(queries, dtype=float)
    x = np.ascontiguousarray(sources, dtype=float)
    w = np.ascontiguousarray(weights, dtype=float)
    gv = np.ascontiguousarray(grad_v, dtype=float)
    n, d = q.shape
    out = np.zeros((n, d))
    if x.shape[0] == 0 or n == 0:
        return out
    threads = default_threads() if threads is None else max(1, int(threads))
    fused = kernel.fused
    if fused is not None:
        kind, h, extra = fused

        def work(lo, hi):
            _fused_rows(q, x, w, gv, kind, h, extra, lo, hi, out)

        _run(work, n, threads)
        return out

    # generic kernels: evaluate terms with numpy in row blocks, sum compiled
    block = max(1, 2_000_000 // max(1, x.shape[0] * d))

    def work(lo, hi):
        for a in range(lo, hi, block):
            b = min(hi, a + block)
            diff = q[a:b, None, :] - x[None, :, :]
            terms = w[None, :, None] * (kernel.grad(diff) + kernel.value(diff)[..., None] * gv[None, :, :])
            part = np.empty((b - a, d))
            _kahan_rows(np.ascontiguousarray(terms), 0, b - a, part)
            out[a:b] = -part

    _run(work, n, threads)
    return out

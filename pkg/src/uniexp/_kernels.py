"""Compiled inner loops.

A measure is flattened into a *program*: ``ops``/``params`` hold the generator
sequence of every atom back to back, and atom ``k`` occupies
``ops[starts[k]:starts[k + 1]]``.  The reference implementation in
:mod:`uniexp.torus` is the oracle these loops are tested against.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

OP_ID, OP_G1, OP_G2, OP_G3, OP_G4, OP_CAT, OP_CATINV, OP_STD = range(8)

_PI = math.pi
_TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True, inline="always")
def _wrap(v):
    r = v - math.floor(v)
    if r >= 1.0:
        r = 0.0
    return r


@njit(cache=True, nogil=True)
def step(op, t, x, y, a, b, c, d):
    if op == OP_G1:
        x = _wrap(x + t)
    elif op == OP_G2:
        y = _wrap(y + t)
    elif op == OP_G3:
        # same operation order as the reference in torus.py, so results agree bitwise
        s = math.sin(_PI * y)
        k = t * (_PI * math.sin(_TWO_PI * y))
        x = _wrap(x + t * (s * s))
        a = a + k * c
        b = b + k * d
    elif op == OP_G4:
        s = math.sin(_PI * x)
        k = t * (_PI * math.sin(_TWO_PI * x))
        y = _wrap(y + t * (s * s))
        c = c + k * a
        d = d + k * b
    elif op == OP_CAT:
        x, y = _wrap(2.0 * x + y), _wrap(x + y)
        a, b, c, d = 2.0 * a + c, 2.0 * b + d, a + c, b + d
    elif op == OP_CATINV:
        x, y = _wrap(x - y), _wrap(2.0 * y - x)
        a, b, c, d = a - c, b - d, 2.0 * c - a, 2.0 * d - b
    elif op == OP_STD:
        k = t * math.cos(_TWO_PI * x)
        y1 = y + t / _TWO_PI * math.sin(_TWO_PI * x)
        x, y = _wrap(x + y1), _wrap(y1)
        a, b, c, d = (1.0 + k) * a + c, (1.0 + k) * b + d, k * a + c, k * b + d
    return x, y, a, b, c, d


@njit(cache=True, nogil=True)
def run_atom(ops, params, starts, k, x, y, a, b, c, d):
    for j in range(starts[k], starts[k + 1]):
        x, y, a, b, c, d = step(ops[j], params[j], x, y, a, b, c, d)
    return x, y, a, b, c, d


@njit(cache=True, nogil=True)
def branch_matrices(ops, params, starts, choices, x0, y0):
    """Derivative of every branch (row of ``choices``) at one base point; shape (S, 4)."""
    n_br, depth = choices.shape
    out = np.empty((n_br, 4))
    for s in range(n_br):
        x, y, a, b, c, d = x0, y0, 1.0, 0.0, 0.0, 1.0
        for j in range(depth):
            x, y, a, b, c, d = run_atom(ops, params, starts, choices[s, j], x, y, a, b, c, d)
        out[s, 0] = a
        out[s, 1] = b
        out[s, 2] = c
        out[s, 3] = d
    return out


@njit(cache=True, nogil=True)
def grid_functional(ops, params, starts, choices, weights, xs, ys, cos_t, sin_t):
    """Weighted mean and weighted second moment of log|M v(theta)| per (point, angle).

    The Jacobian of each branch is computed once per base point; each angle then
    costs one matrix-vector product and one log.
    """
    n_pts = xs.shape[0]
    n_th = cos_t.shape[0]
    n_br, depth = choices.shape
    mean = np.zeros((n_pts, n_th))
    second = np.zeros((n_pts, n_th))
    acc = np.empty(n_th)
    acc2 = np.empty(n_th)
    for p in range(n_pts):
        acc[:] = 0.0
        acc2[:] = 0.0
        for s in range(n_br):
            x, y, a, b, c, d = xs[p], ys[p], 1.0, 0.0, 0.0, 1.0
            for j in range(depth):
                x, y, a, b, c, d = run_atom(ops, params, starts, choices[s, j], x, y, a, b, c, d)
            w = weights[s]
            if a == 1.0 and b == 0.0 and c == 0.0 and d == 1.0:
                continue  # isometric branch: contributes exactly 0
            for t in range(n_th):
                # matrix-vector form: the expanded quadratic form cancels catastrophically
                v0 = a * cos_t[t] + b * sin_t[t]
                v1 = c * cos_t[t] + d * sin_t[t]
                v = 0.5 * math.log(v0 * v0 + v1 * v1)
                acc[t] += w * v
                acc2[t] += w * v * v
        mean[p, :] = acc
        second[p, :] = acc2
    return mean, second


@njit(cache=True, nogil=True)
def orbit(ops, params, starts, choices, x0, y0):
    """Points visited by the random walk; row 0 is the start, one row per draw after it."""
    n = choices.shape[0]
    pts = np.empty((n + 1, 2))
    x, y = x0, y0
    pts[0, 0] = x
    pts[0, 1] = y
    for i in range(n):
        k = choices[i]
        for j in range(starts[k], starts[k + 1]):
            x, y, _a, _b, _c, _d = step(ops[j], params[j], x, y, 1.0, 0.0, 0.0, 1.0)
        pts[i + 1, 0] = x
        pts[i + 1, 1] = y
    return pts


@njit(cache=True, nogil=True)
def tangent_walk(ops, params, starts, choices, x0, y0, u0, u1):
    """Per-step log growth of a renormalized tangent vector carried along the walk."""
    n = choices.shape[0]
    logs = np.empty(n)
    x, y = x0, y0
    for i in range(n):
        x, y, a, b, c, d = run_atom(ops, params, starts, choices[i], x, y, 1.0, 0.0, 0.0, 1.0)
        if a == 1.0 and b == 0.0 and c == 0.0 and d == 1.0:
            # isometric step: keep the exact zero instead of log(1 +- ulp)
            logs[i] = 0.0
            continue
        v0 = a * u0 + b * u1
        v1 = c * u0 + d * u1
        r = math.sqrt(v0 * v0 + v1 * v1)
        logs[i] = math.log(r)
        u0 = v0 / r
        u1 = v1 / r
    return logs


@njit(cache=True, nogil=True)
def product_along(ops, params, starts, choices, x0, y0):
    """Derivative of a long word, renormalized on the way.

    Returns ``(M, log_scale)`` with the true derivative equal to exp(log_scale) * M.
    """
    x, y, a, b, c, d = x0, y0, 1.0, 0.0, 0.0, 1.0
    log_scale = 0.0
    for i in range(choices.shape[0]):
        x, y, a, b, c, d = run_atom(ops, params, starts, choices[i], x, y, a, b, c, d)
        m = max(abs(a), abs(b), abs(c), abs(d))
        if m > 1e100:
            a /= m
            b /= m
            c /= m
            d /= m
            log_scale += math.log(m)
    out = np.empty((2, 2))
    out[0, 0] = a
    out[0, 1] = b
    out[1, 0] = c
    out[1, 1] = d
    return out, log_scale


@njit(cache=True, nogil=True)
def endpoints(ops, params, starts, choices, x0, y0):
    """Final point of every branch (row of ``choices``) started at (x0, y0)."""
    n_br, depth = choices.shape
    out = np.empty((n_br, 2))
    for s in range(n_br):
        x, y = x0, y0
        for j in range(depth):
            x, y, _a, _b, _c, _d = run_atom(ops, params, starts, choices[s, j], x, y, 1.0, 0.0, 0.0, 1.0)
        out[s, 0] = x
        out[s, 1] = y
    return out

"""Eigenvalues of a real nonsymmetric matrix by Hessenberg reduction and Francis QR.

Householder reduction to upper Hessenberg form followed by the implicit
double-shift QR iteration with deflation on small subdiagonals (the
classical EISPACK ``hqr`` scheme).  Eigenvalues only.  Row and column
updates are vectorized with numpy; the bulge-chasing loop is Python, so
this is meant for matrices up to a few hundred rows, as an independent
check on the LAPACK path.
"""

from __future__ import annotations

import math

import numpy as np

from bbz.errors import ConvergenceError


def hessenberg(a: np.ndarray) -> np.ndarray:
    """Orthogonally similar upper Hessenberg matrix (Householder reflections)."""
    h = np.array(a, dtype=float, copy=True)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(norm_x, x[0])
        v /= np.linalg.norm(v)
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def hqr_eigvals(h: np.ndarray, max_iter: int = 60) -> np.ndarray:
    """All eigenvalues of an upper Hessenberg matrix.

    ``max_iter`` bounds the QR sweeps spent on any single eigenvalue;
    exceeding it raises :class:`ConvergenceError` with the stuck index.
    """
    a = np.array(h, dtype=float, copy=True)
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = float(np.sum(np.abs(np.triu(a, -1))))
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            # locate the last negligible subdiagonal entry
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) + s == s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if its >= max_iter:
                raise ConvergenceError(
                    f"QR iteration stalled at index {nn} after {its} sweeps "
                    f"(subdiagonal {a[nn, nn - 1]:.3e})"
                )
            if its in (10, 20):
                # exceptional shift
                t += x
                a[np.arange(nn + 1), np.arange(nn + 1)] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            # look for two consecutive small subdiagonal entries
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            # double-shift QR sweep on rows l..nn, columns m..nn
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                cols = slice(k, nn + 1)
                if k != nn - 1:
                    pr = a[k, cols] + q * a[k + 1, cols] + r * a[k + 2, cols]
                    a[k + 2, cols] -= pr * z
                else:
                    pr = a[k, cols] + q * a[k + 1, cols]
                a[k + 1, cols] -= pr * y
                a[k, cols] -= pr * x
                rows = slice(l, min(nn, k + 3) + 1)
                if k != nn - 1:
                    pc = x * a[rows, k] + y * a[rows, k + 1] + z * a[rows, k + 2]
                    a[rows, k + 2] -= pc * r
                else:
                    pc = x * a[rows, k] + y * a[rows, k + 1]
                a[rows, k + 1] -= pc * q
                a[rows, k] -= pc
    return wr + 1j * wi


def eigvals(a: np.ndarray, max_iter: int = 60) -> np.ndarray:
    return hqr_eigvals(hessenberg(a), max_iter=max_iter)

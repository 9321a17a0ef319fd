"""Independent reference implementations used as test oracles.

Nothing here imports the package's spectral code: the DFT is a direct
O(N^4) summation and radii are enumerated cell by cell.
"""

import math

import numpy as np


def naive_dft2(x):
    """Unitary 2D DFT by direct summation: (1/N) sum x(a,b) exp(-2 pi i (ua+vb)/N)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.zeros((n, n), dtype=np.complex128)
    for u in range(n):
        for v in range(n):
            acc = 0j
            for a in range(n):
                for b in range(n):
                    acc += x[a, b] * np.exp(-2j * np.pi * (u * a + v * b) / n)
            out[u, v] = acc / n
    return out


def naive_dft2_vec(x):
    """Same transform as a dense matrix product; faster for bulk checks."""
    n = x.shape[-1]
    k = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return w @ np.asarray(x, dtype=np.float64) @ w / n


def enumerate_radii(n):
    """Rounded radius of every shifted cell, by explicit loop."""
    c = n // 2
    top = int(math.floor(n / math.sqrt(2)))
    r = np.zeros((n, n), dtype=int)
    for u in range(n):
        for v in range(n):
            d = math.hypot(u - c, v - c)
            k = int(math.floor(d + 0.5))
            r[u, v] = min(k, top)
    return r


def naive_profile(power_shifted, inscribed=False):
    n = power_shifted.shape[0]
    r = enumerate_radii(n)
    top = r.max()
    bands = np.array([power_shifted[r == k].sum() for k in range(1, top + 1)])
    denom = bands[: n // 2].sum() if inscribed else bands.sum()
    return bands / denom


def central_fd(f, x, step=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        hi = f(x)
        flat[i] = old - step
        lo = f(x)
        flat[i] = old
        gf[i] = (hi - lo) / (2 * step)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))

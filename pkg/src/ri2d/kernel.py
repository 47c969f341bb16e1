"""Potential kernel of two-dimensional simple random walk.

Exact values are obtained by propagating the harmonic recursion from the
seeds a(0,0)=0, a(1,0)=1 and the closed-form diagonal

    a(n, n) = (4/pi) * (1 + 1/3 + ... + 1/(2n-1)).

Every value is of the form p + q/pi with rational p, q.  The recursion is
violently unstable in floating point (errors grow roughly like 5.8^n), so it
is carried out in exact integer arithmetic over a common denominator and
only converted to floats at the end.  Outside the exact window the
asymptotic expansion (2/pi) ln|x| + gamma' is used.
"""
from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate

from .lattice import as_point

EULER_GAMMA = 0.57721566490153286061
GAMMA_PRIME = (2.0 * EULER_GAMMA + math.log(8.0)) / math.pi
TWO_OVER_PI = 2.0 / math.pi

DEFAULT_EXACT_RADIUS = 256
# bigint sizes grow linearly with the radius; beyond this the build takes minutes
MAX_EXACT_RADIUS = 1024


def potential_real(r: float) -> float:
    """a(r) = (2/pi) ln r + gamma' for a real argument r >= 1."""
    if not r >= 1.0:
        raise ValueError(f"potential_real needs r >= 1, got {r!r}")
    return TWO_OVER_PI * math.log(r) + GAMMA_PRIME


def _odd_lcm(n: int) -> int:
    d = 1
    for k in range(1, 2 * n, 2):
        d = d * k // math.gcd(d, k)
    return d


def _exact_octant(n: int):
    """Scaled exact octant of a on 0 <= y <= x <= n.

    Returns ``(P, Q, D)`` where ``P[x][y]``, ``Q[x][y]`` are Python ints with
    a(x, y) = (P + Q/pi) / D.
    """
    D = _odd_lcm(n)
    diag_q = [0] * (n + 1)
    acc = 0
    for k in range(1, n + 1):
        acc += 4 * D // (2 * k - 1)
        diag_q[k] = acc

    P = [[0], [D, 0]]
    Q = [[0], [0, diag_q[1]]]
    for x in range(1, n):
        cp, cq = P[x], Q[x]
        pp, pq = P[x - 1], Q[x - 1]
        np_, nq = [0] * (x + 2), [0] * (x + 2)
        for y in range(x):
            ym = 1 if y == 0 else y - 1
            np_[y] = 4 * cp[y] - pp[y] - cp[y + 1] - cp[ym]
            nq[y] = 4 * cq[y] - pq[y] - cq[y + 1] - cq[ym]
        # harmonicity at the diagonal point (x, x) uses the symmetric pair twice
        np_[x] = 2 * cp[x] - cp[x - 1]
        nq[x] = 2 * cq[x] - cq[x - 1]
        nq[x + 1] = diag_q[x + 1]
        P.append(np_)
        Q.append(nq)
    return P, Q, D


def _octant_to_float(P, Q, D) -> np.ndarray:
    n = len(P) - 1
    qbits = max(abs(v).bit_length() for col in Q for v in col)
    pbits = max(abs(v).bit_length() for col in P for v in col)
    shift = max(qbits, pbits) - D.bit_length() + 80
    shift = max(shift, 80)
    with mpmath.workprec(shift + qbits + 64):
        inv_pi = int(mpmath.floor(mpmath.mpf(2) ** shift / mpmath.pi))
    den = D << shift
    out = np.zeros((n + 1, n + 1))
    for x in range(n + 1):
        for y in range(x + 1):
            # Python int / int is correctly rounded
            out[x, y] = ((P[x][y] << shift) + Q[x][y] * inv_pi) / den
    return out


def potential_integral(p) -> float:
    """a(x) by one-dimensional quadrature of its Fourier representation.

    Integrating out one frequency of (1/(2 pi)^2) int (1 - cos(x.theta)) / (1 - phi(theta))
    leaves
        a(x1, x2) = (2/pi) int_0^pi (1 - cos(x1 t) tau^|x2|) / sqrt(b^2 - 1) dt
    with b = 2 - cos t and tau = b - sqrt(b^2 - 1).  Independent of the
    tabulated recursion and accurate to ~1e-12 for moderate |x|.
    """
    x1, x2 = as_point(p)
    if x1 == 0 and x2 == 0:
        return 0.0
    if abs(x1) < abs(x2):
        x1, x2 = x2, x1  # keep the oscillation in the cosine factor

    def f(t):
        b = 2.0 - math.cos(t)
        s = math.sqrt(b * b - 1.0)
        return (1.0 - math.cos(x1 * t) * (b - s) ** abs(x2)) / s

    val, _ = integrate.quad(f, 0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=2000)
    return TWO_OVER_PI * val


class PotentialKernel:
    """Tabulated potential kernel with asymptotic tail.

    ``table[x + R, y + R]`` holds the exact value of a(x, y) for
    ``max(|x|, |y|) <= R`` where ``R = exact_radius``.
    """

    def __init__(self, exact_radius: int, octant: np.ndarray):
        self.exact_radius = exact_radius
        self.gamma_prime = GAMMA_PRIME
        self.octant = octant
        n = exact_radius
        full_q = np.maximum(octant, octant.T)  # quadrant, symmetric in x <-> y
        table = np.empty((2 * n + 1, 2 * n + 1))
        table[n:, n:] = full_q
        table[:n, n:] = full_q[:0:-1, :]
        table[:, :n] = table[:, :n:-1]
        self.table = table
        self.table.flags.writeable = False

    def __repr__(self):
        return f"PotentialKernel(exact_radius={self.exact_radius})"

    def potential(self, p) -> float:
        x, y = as_point(p)
        n = self.exact_radius
        if abs(x) <= n and abs(y) <= n:
            return float(self.table[x + n, y + n])
        return TWO_OVER_PI * 0.5 * math.log(x * x + y * y) + GAMMA_PRIME

    __call__ = potential

    def potential_real(self, r: float) -> float:
        return potential_real(r)

    def values(self, xs, ys) -> np.ndarray:
        """Vectorised a(x, y) over integer arrays."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        xs, ys = np.broadcast_arrays(xs, ys)
        n = self.exact_radius
        inside = (np.abs(xs) <= n) & (np.abs(ys) <= n)
        out = np.empty(xs.shape)
        out[inside] = self.table[xs[inside] + n, ys[inside] + n]
        far = ~inside
        if far.any():
            r2 = xs[far].astype(float) ** 2 + ys[far].astype(float) ** 2
            out[far] = TWO_OVER_PI * 0.5 * np.log(r2) + GAMMA_PRIME
        return out

    def grid(self, half_width: int) -> np.ndarray:
        """a on the square [-w, w]^2, exact where tabulated, asymptotic elsewhere."""
        c = np.arange(-half_width, half_width + 1)
        return self.values(c[:, None], c[None, :])


@lru_cache(maxsize=8)
def build_kernel(exact_radius: int = DEFAULT_EXACT_RADIUS) -> PotentialKernel:
    """Tabulate a(x) exactly on the square of half-width ``exact_radius``."""
    if int(exact_radius) != exact_radius or exact_radius < 2:
        raise ValueError(f"exact_radius must be an integer >= 2, got {exact_radius!r}")
    if exact_radius > MAX_EXACT_RADIUS:
        raise MemoryError(f"exact_radius {exact_radius} exceeds cap {MAX_EXACT_RADIUS}")
    P, Q, D = _exact_octant(int(exact_radius))
    return PotentialKernel(int(exact_radius), _octant_to_float(P, Q, D))

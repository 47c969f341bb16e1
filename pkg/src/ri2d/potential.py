"""Harmonic measure, capacity and equilibrium measure of finite lattice sets.

Capacities are computed from the kernel matrix ``M_ij = a(x_i - x_j)``:
the inverse capacity is the sum of the entries of ``M^{-1}`` and the harmonic
measure is the normalised vector of its row sums.  Only points of the
internal boundary carry harmonic measure, so the linear algebra runs on the
boundary alone (capacity of a set equals that of its boundary).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .kernel import PotentialKernel, potential_real
from .lattice import ORIGIN, LatticePoint, as_point, ball, internal_boundary

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12


class DegenerateSetError(ValueError):
    """The kernel matrix of a set is singular or too ill-conditioned."""


@dataclass(frozen=True)
class LatticeSet:
    points: tuple[LatticePoint, ...]

    def __init__(self, points: Iterable):
        pts = tuple(as_point(p) for p in points)
        if not pts:
            raise ValueError("LatticeSet needs at least one point")
        if len(set(pts)) != len(pts):
            raise ValueError("LatticeSet points must be distinct")
        object.__setattr__(self, "points", pts)

    @property
    def contains_origin(self) -> bool:
        return ORIGIN in self.points

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __contains__(self, p):
        return as_point(p) in self.points

    def translate(self, z) -> "LatticeSet":
        z = as_point(z)
        return LatticeSet(p + z for p in self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=np.int64).reshape(-1, 2)

    @classmethod
    def ball(cls, radius: float, center=(0, 0)) -> "LatticeSet":
        return cls(ball(radius, center))


@dataclass(frozen=True, eq=False)
class PotentialProfile:
    set: LatticeSet
    hm: np.ndarray
    cap: float
    equilibrium: np.ndarray
    condition: float = 1.0
    # translation applied before evaluating a(x) pointwise
    shift: LatticePoint = ORIGIN
    _support: np.ndarray = field(default=None, repr=False)
    _minv: np.ndarray = field(default=None, repr=False)

    @property
    def cap_from_hm(self) -> float:
        """sum_x a(x) hm(x), with a evaluated on the translated set."""
        return float(np.sum(self.equilibrium))

    def as_dict(self) -> dict:
        return {
            "points": [list(p) for p in self.set.points],
            "cap": self.cap,
            "hm": self.hm.tolist(),
            "equilibrium": self.equilibrium.tolist(),
        }


def kernel_matrix(points: np.ndarray, kernel: PotentialKernel) -> np.ndarray:
    d = points[:, None, :] - points[None, :, :]
    return kernel.values(d[..., 0], d[..., 1])


def _invert(m: np.ndarray, label: str):
    w, v = np.linalg.eigh(m)
    absw = np.abs(w)
    cond = float(absw.max() / absw.min()) if absw.min() > 0 else np.inf
    log.debug("kernel matrix for %s: condition %.3g", label, cond)
    if not cond <= MAX_CONDITION:
        raise DegenerateSetError(f"kernel matrix of {label} is degenerate (condition {cond:.3g})")
    return (v / w) @ v.T, cond


def analyze(lattice_set: LatticeSet | Iterable, kernel: PotentialKernel) -> PotentialProfile:
    """Harmonic measure, capacity and equilibrium measure of a finite set."""
    s = lattice_set if isinstance(lattice_set, LatticeSet) else LatticeSet(lattice_set)
    n = len(s)
    shift = ORIGIN if s.contains_origin else -s.points[0]
    if n == 1:
        one = np.ones(1)
        return PotentialProfile(s, one, 0.0, np.zeros(1), 1.0, shift, np.zeros(1, dtype=np.int64), None)

    pts = s.as_array() + np.asarray(shift)
    boundary = set(internal_boundary(map(tuple, pts)))
    support = np.array([i for i, p in enumerate(map(tuple, pts)) if p in boundary], dtype=np.int64)
    label = f"set of {n} points starting {s.points[:3]}"
    minv, cond = _invert(kernel_matrix(pts[support], kernel), label)
    row = minv.sum(axis=1)
    total = row.sum()
    if not total > 0:
        raise DegenerateSetError(f"{label}: inverse kernel matrix has non-positive total {total:.3g}")
    hm_support = row / total
    if hm_support.min() < -1e-10:
        raise DegenerateSetError(f"{label}: negative harmonic measure {hm_support.min():.3g}")
    hm = np.zeros(n)
    hm[support] = np.clip(hm_support, 0.0, None)
    a_pts = kernel.values(pts[:, 0], pts[:, 1])
    return PotentialProfile(
        set=s,
        hm=hm,
        cap=float(1.0 / total),
        equilibrium=a_pts * hm,
        condition=cond,
        shift=LatticePoint(*shift),
        _support=support,
        _minv=minv,
    )


def hitting_distribution(profile: PotentialProfile, z, kernel: PotentialKernel) -> np.ndarray:
    """Law of the entrance point into the set for SRW started at ``z`` outside it.

    Uses the representation of the bounded harmonic function
    ``P_z[S_{tau_0(A)} = y] = hm(y) + sum_w c^y_w a(z - w)`` with
    ``c^y = M^{-1}(e_y - hm(y) 1)``, which is exact for a finite set.
    """
    return hitting_distributions(profile, np.array([as_point(z)]), kernel)[0]


def hitting_distributions(profile: PotentialProfile, zs: np.ndarray, kernel: PotentialKernel) -> np.ndarray:
    """Row ``i`` is the entrance law into the set from ``zs[i]`` (shape (k, |A|))."""
    zs = np.asarray(zs, dtype=np.int64).reshape(-1, 2)
    members = set(profile.set.points)
    if any(tuple(z) in members for z in zs.tolist()):
        raise ValueError("starting points must lie outside the set")
    n = len(profile.set)
    if n == 1:
        return np.ones((len(zs), 1))
    pts = profile.set.as_array()[profile._support]
    hm = profile.hm[profile._support]
    minv = profile._minv
    c = minv - np.outer(minv.sum(axis=1), hm)  # column y holds c^y
    d = zs[:, None, :] - pts[None, :, :]
    az = kernel.values(d[..., 0], d[..., 1])
    h_support = hm[None, :] + az @ c
    out = np.zeros((len(zs), n))
    out[:, profile._support] = np.clip(h_support, 0.0, None)
    out /= out.sum(axis=1, keepdims=True)
    return out


def capacity_three_point(x1, x2, x3, kernel: PotentialKernel) -> float:
    x1, x2, x3 = as_point(x1), as_point(x2), as_point(x3)
    if len({x1, x2, x3}) != 3:
        raise ValueError("capacity_three_point needs three distinct points")
    a1, a2, a3 = kernel(x2 - x1), kernel(x3 - x2), kernel(x1 - x3)
    den = a1 * a2 + a1 * a3 + a2 * a3 - 0.5 * (a1 * a1 + a2 * a2 + a3 * a3)
    return a1 * a2 * a3 / den


def capacity_ball(r: float, kernel: PotentialKernel | None = None) -> float:
    """Leading-order capacity of B(r); the error is O(1/r)."""
    if not r >= 1:
        raise ValueError(f"capacity_ball needs r >= 1, got {r!r}")
    return potential_real(r)


def capacity_distant_union(y, r: float, kernel: PotentialKernel) -> float:
    """Leading term of cap({0} U B(y, r)) for |y| > 2r >= 1."""
    y = as_point(y)
    if not (y.norm() > 2 * r and 2 * r >= 1):
        raise ValueError(f"capacity_distant_union needs |y| > 2r >= 1, got y={y}, r={r}")
    ay = kernel(y)
    if r < 1:
        # B(y, r) is the single point y
        return 0.5 * ay
    return ay * ay / (2.0 * ay - potential_real(r))

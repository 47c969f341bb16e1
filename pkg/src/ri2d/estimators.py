"""Monte Carlo estimates, confidence intervals and comparison reports.

Binomial estimates use the normal interval unless fewer than
``EXACT_CI_THRESHOLD`` successes or failures were observed, in which case
the Clopper-Pearson interval is reported instead.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, is_dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .rng import RngSeed

EXACT_CI_THRESHOLD = 30
MC_CHUNK = 1000
MIN_SAMPLES = 100
SCHEMA_VERSION = 1


def z_value(ci_level: float) -> float:
    if not 0.0 < ci_level < 1.0:
        raise ValueError(f"ci_level must lie in (0, 1), got {ci_level!r}")
    return float(stats.norm.ppf(0.5 + ci_level / 2.0))


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_samples: int
    ci_level: float = 0.99
    bias_bound: float = 0.0
    successes: int | None = None  # set for binomial estimates

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr!r}")
        if not self.bias_bound >= 0:
            raise ValueError(f"bias_bound must be >= 0, got {self.bias_bound!r}")
        if self.n_samples < 1:
            raise ValueError("an estimate needs at least one sample")

    @classmethod
    def from_bernoulli(cls, outcomes, ci_level: float = 0.99, bias_bound: float = 0.0) -> "Estimate":
        x = np.asarray(outcomes, dtype=bool).ravel()
        n, k = x.size, int(x.sum())
        p = k / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), n, ci_level, bias_bound, k)

    @classmethod
    def from_samples(cls, values, ci_level: float = 0.99, bias_bound: float = 0.0) -> "Estimate":
        x = np.asarray(values, dtype=float).ravel()
        n = x.size
        sd = float(x.std(ddof=1)) if n > 1 else 0.0
        return cls(float(x.mean()), sd / math.sqrt(n), n, ci_level, bias_bound)

    @property
    def z(self) -> float:
        return z_value(self.ci_level)

    @property
    def half_width(self) -> float:
        return self.z * self.stderr

    @property
    def exact_interval(self) -> bool:
        if self.successes is None:
            return False
        return min(self.successes, self.n_samples - self.successes) < EXACT_CI_THRESHOLD

    def ci(self) -> tuple[float, float]:
        if self.exact_interval:
            k, n = self.successes, self.n_samples
            ci = stats.binomtest(k, n).proportion_ci(confidence_level=self.ci_level, method="exact")
            return float(ci.low), float(ci.high)
        return self.mean - self.half_width, self.mean + self.half_width

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = list(self.ci())
        return d


@dataclass(frozen=True)
class ComparisonReport:
    name: str
    predicted: float
    estimate: Estimate
    verdict: str
    tolerance_policy: str
    tolerance: float
    deviation: float

    @property
    def passed(self) -> bool:
        return self.verdict != "fail"

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "predicted": self.predicted,
            "estimate": self.estimate.as_dict(),
            "verdict": self.verdict,
            "tolerance_policy": self.tolerance_policy,
            "tolerance": self.tolerance,
            "deviation": self.deviation,
        }


def compare(name: str, predicted: float, estimate: Estimate, slack: float = 0.0,
            n_sigma: float | None = None) -> ComparisonReport:
    """Compare an estimate with a predicted value.

    The tolerance is ``k * stderr + bias_bound + slack`` with ``k = n_sigma``
    or, if omitted, the normal quantile of ``estimate.ci_level``.  A deviation
    within tolerance is reported as ``inconclusive`` rather than ``pass`` when
    the slack dominates, i.e. when the CI is narrower than 10% of the slack.
    """
    if slack < 0:
        raise ValueError("slack must be >= 0")
    k = estimate.z if n_sigma is None else float(n_sigma)
    tol = k * estimate.stderr + estimate.bias_bound + slack
    dev = abs(estimate.mean - predicted)
    lo, hi = estimate.ci()
    if dev > tol:
        verdict = "fail"
    elif slack > 0 and (hi - lo) < 0.1 * slack:
        verdict = "inconclusive"
    else:
        verdict = "pass"
    policy = f"|mean - predicted| <= {k:g} * stderr + bias_bound ({estimate.bias_bound:g}) + slack ({slack:g})"
    return ComparisonReport(name, float(predicted), estimate, verdict, policy, float(tol), float(dev))


def mc_estimate(event: Callable[[np.random.Generator], bool], n_samples: int, seed: RngSeed = RngSeed(),
                threads: int = 1, ci_level: float = 0.99) -> Estimate:
    """Binomial estimate of P[event] from ``n_samples`` independent calls.

    Samples are grouped into chunks of ``MC_CHUNK``; chunk c draws from
    ``seed.generator(c)`` so the result does not depend on ``threads``.
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"mc_estimate needs n_samples >= {MIN_SAMPLES}, got {n_samples}")

    def run(c: int) -> int:
        rng = seed.generator(c)
        m = min(MC_CHUNK, n_samples - c * MC_CHUNK)
        return sum(bool(event(rng)) for _ in range(m))

    n_chunks = -(-n_samples // MC_CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = list(pool.map(run, range(n_chunks)))
    else:
        hits = [run(c) for c in range(n_chunks)]
    k = int(sum(hits))
    p = k / n_samples
    return Estimate(p, math.sqrt(p * (1.0 - p) / n_samples), n_samples, ci_level, 0.0, k)


def loglog_slope(pairs: Iterable[Sequence[float]]) -> float:
    """Least-squares slope of log(value) against log(r)."""
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise ValueError("loglog_slope needs at least three (r, value) pairs")
    if (arr <= 0).any():
        raise ValueError("loglog_slope needs positive radii and values")
    slope, _ = np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 1]), 1)
    return float(slope)


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(obj.as_dict() if hasattr(obj, "as_dict") else asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def report_json(payload: dict, config: dict) -> str:
    """Serialise a report with schema tag, package version and full config."""
    from . import __version__

    doc = {"schema": SCHEMA_VERSION, "version": __version__, "config": _plain(config)}
    doc.update(_plain(payload))
    return json.dumps(doc, sort_keys=True, indent=2)

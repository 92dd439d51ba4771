"""Sampleable distributions pinned to a declared mean and SCV.

The simulator consumes two-moment process descriptions, so every spec here
carries its exact analytical mean and SCV, verified at construction from
the family parameters. Fitting picks the conventional family for each SCV
range: deterministic at 0, a mixture of two adjacent-order Erlangs below 1,
exponential at 1, and a balanced-means two-phase hyperexponential above 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MOMENT_TOL = 1e-9

DETERMINISTIC = "deterministic"
EXPONENTIAL = "exponential"
ERLANG = "erlang"
HYPEREXP2 = "hyperexp2"
EMPIRICAL_MIXTURE = "empirical_mixture"


@dataclass(frozen=True)
class DistributionSpec:
    """A positive random variable with declared first two moments.

    ``params`` holds the family parameters:

    - deterministic: ``value``
    - exponential: ``rate``
    - erlang: ``shape`` k, ``rate``, and ``p_lower`` = probability of
      drawing k-1 stages instead of k (0 for a pure Erlang)
    - hyperexp2: ``p``, ``rate1``, ``rate2``
    - empirical_mixture: ``values``, ``probs`` (tuples)

    Construction fails if the analytically computed mean/SCV of the family
    disagree with the declared ``mean``/``scv``.
    """

    family: str
    mean: float
    scv: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        m, c2 = self.moments()
        if abs(m - self.mean) > MOMENT_TOL * max(1.0, abs(self.mean)) or abs(
            c2 - self.scv
        ) > MOMENT_TOL * max(1.0, abs(self.scv)):
            raise ValueError(
                f"declared moments (mean={self.mean!r}, scv={self.scv!r}) do "
                f"not match {self.family} parameters (mean={m!r}, scv={c2!r})"
            )
        if self.family == EMPIRICAL_MIXTURE:
            probs = self.params["probs"]
            values = self.params["values"]
            if abs(sum(probs) - 1.0) > 1e-12:
                raise ValueError(f"mixture probs sum to {sum(probs)!r}, not 1")
            if any(v <= 0.0 for v in values):
                raise ValueError("mixture values must be positive")

    def moments(self) -> tuple[float, float]:
        """(mean, scv) computed symbolically from the family parameters."""
        p = self.params
        if self.family == DETERMINISTIC:
            return float(p["value"]), 0.0
        if self.family == EXPONENTIAL:
            return 1.0 / p["rate"], 1.0
        if self.family == ERLANG:
            k, rate, pl = p["shape"], p["rate"], p["p_lower"]
            mean = (k - pl) / rate
            second = k * (k + 1.0 - 2.0 * pl) / rate**2
            return mean, second / mean**2 - 1.0
        if self.family == HYPEREXP2:
            pr, r1, r2 = p["p"], p["rate1"], p["rate2"]
            mean = pr / r1 + (1.0 - pr) / r2
            second = 2.0 * pr / r1**2 + 2.0 * (1.0 - pr) / r2**2
            return mean, second / mean**2 - 1.0
        if self.family == EMPIRICAL_MIXTURE:
            values = np.asarray(p["values"], dtype=float)
            probs = np.asarray(p["probs"], dtype=float)
            mean = float(np.dot(probs, values))
            second = float(np.dot(probs, values**2))
            return mean, second / mean**2 - 1.0
        raise ValueError(f"unknown distribution family {self.family!r}")


def deterministic(value: float) -> DistributionSpec:
    return DistributionSpec(DETERMINISTIC, value, 0.0, {"value": float(value)})


def exponential(mean: float) -> DistributionSpec:
    return DistributionSpec(EXPONENTIAL, mean, 1.0, {"rate": 1.0 / mean})


def empirical_mixture(values, probs) -> DistributionSpec:
    values = tuple(float(v) for v in values)
    probs = tuple(float(p) for p in probs)
    mean = sum(p * v for p, v in zip(probs, values))
    second = sum(p * v * v for p, v in zip(probs, values))
    return DistributionSpec(
        EMPIRICAL_MIXTURE,
        mean,
        second / mean**2 - 1.0,
        {"values": values, "probs": probs},
    )


def fit_distribution(mean: float, scv: float) -> DistributionSpec:
    """Pick a sampleable family matching the given mean and SCV exactly.

    scv = 0 gives a constant, scv = 1 an exponential. For scv in (0, 1) a
    mixture of Erlang(k-1) and Erlang(k) with common rate and k = ceil(1/scv)
    hits both moments. For scv > 1 a balanced-means two-phase
    hyperexponential does.
    """
    if mean <= 0.0:
        raise ValueError(f"mean must be > 0, got {mean!r}")
    if scv < 0.0:
        raise ValueError(f"scv must be >= 0, got {scv!r}")

    if scv < 1e-12:
        return deterministic(mean)
    if abs(scv - 1.0) <= 1e-12:
        return exponential(mean)

    if scv < 1.0:
        k = math.ceil(1.0 / scv)
        disc = max(k * (1.0 + scv) - k * k * scv, 0.0)
        p_lower = (k * scv - math.sqrt(disc)) / (1.0 + scv)
        p_lower = min(max(p_lower, 0.0), 1.0)
        rate = (k - p_lower) / mean
        return DistributionSpec(
            ERLANG, mean, scv, {"shape": k, "rate": rate, "p_lower": p_lower}
        )

    p = 0.5 * (1.0 + math.sqrt((scv - 1.0) / (scv + 1.0)))
    return DistributionSpec(
        HYPEREXP2,
        mean,
        scv,
        {"p": p, "rate1": 2.0 * p / mean, "rate2": 2.0 * (1.0 - p) / mean},
    )


_BLOCK = 4096


def make_sampler(
    spec: DistributionSpec, rng: np.random.Generator, block: int = _BLOCK
) -> Callable[[], float]:
    """Zero-argument sampler drawing from ``spec`` using ``rng``.

    Draws are generated in vectorized blocks and handed out one at a time,
    which keeps per-event cost low inside the simulator loop. Deterministic
    specs never touch the generator.
    """
    p = spec.params

    if spec.family == DETERMINISTIC:
        value = p["value"]
        return lambda: value

    if spec.family == EXPONENTIAL:
        scale = 1.0 / p["rate"]

        def refill_exp():
            return rng.exponential(scale, block)

        return _blocked(refill_exp)

    if spec.family == ERLANG:
        k, rate, pl = p["shape"], p["rate"], p["p_lower"]
        if pl == 0.0:

            def refill_erl():
                return rng.gamma(k, 1.0 / rate, block)

            return _blocked(refill_erl)

        def refill_erl_mix():
            shapes = np.where(rng.random(block) < pl, k - 1, k)
            return rng.standard_gamma(shapes) / rate

        return _blocked(refill_erl_mix)

    if spec.family == HYPEREXP2:
        pr, r1, r2 = p["p"], p["rate1"], p["rate2"]

        def refill_h2():
            rates = np.where(rng.random(block) < pr, r1, r2)
            return rng.standard_exponential(block) / rates

        return _blocked(refill_h2)

    if spec.family == EMPIRICAL_MIXTURE:
        values = np.asarray(p["values"], dtype=float)
        cum = np.cumsum(np.asarray(p["probs"], dtype=float))
        cum[-1] = 1.0

        def refill_mix():
            return values[np.searchsorted(cum, rng.random(block), side="right")]

        return _blocked(refill_mix)

    raise ValueError(f"unknown distribution family {spec.family!r}")


def _blocked(refill: Callable[[], np.ndarray]) -> Callable[[], float]:
    buf = refill().tolist()

    def draw() -> float:
        nonlocal buf
        if not buf:
            buf = refill().tolist()
        return buf.pop()

    return draw

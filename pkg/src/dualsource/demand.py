"""Demand models, deterministic sampling, and empirical-data ingestion.

Three demand models are supported: a discrete uniform distribution, an
arbitrary discrete pmf, and a time-varying truncated normal process fit
from per-period moments of empirical series.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri


@dataclass(frozen=True)
class DiscreteUniform:
    """Uniform demand on the integers {lo, ..., hi}."""

    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi):
            raise ValueError("require 0 <= lo <= hi")

    @property
    def values(self):
        return np.arange(self.lo, self.hi + 1)

    @property
    def probs(self):
        n = self.hi - self.lo + 1
        return np.full(n, 1.0 / n)

    def mean(self, t=0):
        return 0.5 * (self.lo + self.hi)

    def std(self, t=0):
        p = self.probs
        v = self.values
        m = self.mean()
        return float(np.sqrt(np.sum(p * (v - m) ** 2)))


@dataclass(frozen=True)
class Empirical:
    """Discrete demand with an explicit pmf over integer support.

    pmf entries are (value, prob) pairs with support sorted ascending.
    """

    pmf: tuple

    def __post_init__(self):
        vals = [v for v, _ in self.pmf]
        probs = [p for _, p in self.pmf]
        if any(v != int(v) for v in vals):
            raise ValueError("support must be integer-valued")
        if any(vals[i] >= vals[i + 1] for i in range(len(vals) - 1)):
            raise ValueError("support must be sorted ascending without duplicates")
        if min(vals) < 0:
            raise ValueError("demand support must be non-negative")
        if any(p < 0 for p in probs):
            raise ValueError("probabilities must be non-negative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")

    @property
    def values(self):
        return np.array([v for v, _ in self.pmf], dtype=np.int64)

    @property
    def probs(self):
        return np.array([p for _, p in self.pmf], dtype=np.float64)

    def mean(self, t=0):
        return float(np.sum(self.values * self.probs))

    def std(self, t=0):
        m = self.mean()
        return float(np.sqrt(np.sum(self.probs * (self.values - m) ** 2)))


@dataclass(frozen=True)
class TruncatedNormalProcess:
    """Per-period normal demand N(mu_t, sigma_t) truncated to (trunc_lo, trunc_hi)."""

    mu: tuple
    sigma: tuple
    trunc_lo: float
    trunc_hi: float

    def __post_init__(self):
        if len(self.mu) != len(self.sigma):
            raise ValueError("mu and sigma must have the same length")
        if any(s < 0 for s in self.sigma):
            raise ValueError("sigma entries must be >= 0")
        if not self.trunc_lo < self.trunc_hi:
            raise ValueError("require trunc_lo < trunc_hi")

    @property
    def horizon(self):
        return len(self.mu)

    def mean(self, t):
        return self.mu[t]

    def std(self, t):
        return self.sigma[t]


class Rng:
    """Deterministic PCG64 stream with spawnable substreams.

    Substreams are derived from (seed, spawn key) so that per-realization
    and per-minibatch-element streams are independent and reproducible on
    any platform.
    """

    def __init__(self, seed, spawn_key=()):
        self.seed = int(seed)
        self.spawn_key = tuple(spawn_key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, k):
        return Rng(self.seed, self.spawn_key + (int(k),))


def _sample_truncnorm(mu, sigma, lo, hi, gen, size):
    """Vectorized draws from N(mu, sigma) restricted to the open interval (lo, hi).

    Rejection sampling when the retained mass is large enough to make it
    cheap; inverse-CDF otherwise so tiny retained mass cannot stall the loop.
    """
    if sigma == 0.0:
        if not (lo < mu < hi):
            raise ValueError("degenerate (sigma=0) demand outside truncation interval")
        return np.full(size, float(mu))
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    cdf_a = ndtr(a)
    cdf_b = ndtr(b)
    retained = cdf_b - cdf_a
    if retained <= 0.0:
        raise ValueError("truncation interval carries no probability mass")
    if retained > 0.05:
        out = np.empty(size, dtype=np.float64)
        filled = 0
        while filled < size:
            want = size - filled
            draw = mu + sigma * gen.standard_normal(max(want * 2, 16))
            keep = draw[(draw > lo) & (draw < hi)][:want]
            out[filled : filled + keep.size] = keep
            filled += keep.size
        return out
    u = gen.random(size)
    x = mu + sigma * ndtri(cdf_a + u * retained)
    eps = np.finfo(np.float64).tiny
    return np.clip(x, np.nextafter(lo, hi) + eps * 0, np.nextafter(hi, lo))


def sample(model, t, rng, size=None):
    """Draw demand(s) for period t. Returns a scalar if size is None, else an array."""
    n = 1 if size is None else int(size)
    gen = rng.generator
    if isinstance(model, DiscreteUniform):
        out = gen.integers(model.lo, model.hi + 1, size=n).astype(np.float64)
    elif isinstance(model, Empirical):
        cum = np.cumsum(model.probs)
        idx = np.searchsorted(cum, gen.random(n), side="right")
        idx = np.minimum(idx, len(cum) - 1)
        out = model.values[idx].astype(np.float64)
    elif isinstance(model, TruncatedNormalProcess):
        if not 0 <= t < model.horizon:
            raise IndexError(f"period {t} outside process horizon {model.horizon}")
        out = _sample_truncnorm(
            model.mu[t], model.sigma[t], model.trunc_lo, model.trunc_hi, gen, n
        )
    else:
        raise TypeError(f"unknown demand model {type(model).__name__}")
    return float(out[0]) if size is None else out


def sample_path(model, rng, horizon):
    """Draw a length-`horizon` demand path; one value per period."""
    if isinstance(model, TruncatedNormalProcess):
        if horizon > model.horizon:
            raise IndexError("horizon exceeds process length")
        gen = rng.generator
        return np.array(
            [
                _sample_truncnorm(
                    model.mu[t], model.sigma[t], model.trunc_lo, model.trunc_hi, gen, 1
                )[0]
                for t in range(horizon)
            ]
        )
    return sample(model, 0, rng, size=horizon)


def pmf_vector(model):
    """Dense pmf of a discrete model as (offset, probs) with probs[i] = P(D = offset+i)."""
    if isinstance(model, (DiscreteUniform, Empirical)):
        vals = model.values
        probs = model.probs
        offset = int(vals[0])
        dense = np.zeros(int(vals[-1]) - offset + 1)
        dense[vals - offset] = probs
        return offset, dense
    raise TypeError("exact pmf only defined for discrete demand models")


def convolve_pmf(offset_a, probs_a, offset_b, probs_b):
    """Exact pmf of the sum of two independent discrete variables."""
    return offset_a + offset_b, np.convolve(probs_a, probs_b)


def quantile_from_pmf(offset, probs, p):
    """Smallest x with P(X <= x) >= p for a dense pmf starting at `offset`."""
    if not 0.0 < p < 1.0:
        raise ValueError("require 0 < p < 1")
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, p - 1e-9, side="left"))
    return offset + min(idx, len(probs) - 1)


def quantile(model, p, k=1):
    """Smallest x with P(D_1 + ... + D_k <= x) >= p, by exact k-fold convolution.

    Only discrete models support exact quantiles; continuous models raise.
    """
    if isinstance(model, TruncatedNormalProcess):
        raise TypeError("exact convolution quantile unsupported for continuous demand")
    if k < 1:
        raise ValueError("require k >= 1")
    offset, probs = pmf_vector(model)
    total_off, total = offset, probs
    for _ in range(k - 1):
        total_off, total = convolve_pmf(total_off, total, offset, probs)
    return quantile_from_pmf(total_off, total, p)


def demand_max(model):
    """Largest support value of a discrete model."""
    if isinstance(model, (DiscreteUniform, Empirical)):
        return int(model.values[-1])
    raise TypeError("demand_max only defined for discrete demand models")


def ingest_empirical(rows):
    """Fit a TruncatedNormalProcess from rows of (period, series_id, demand).

    Every series must cover the same 0-based consecutive period range and
    at least two series are required (the sample standard deviation uses
    the n-1 denominator). Truncation is fixed at (0, 1e8).
    """
    series = {}
    for period, series_id, value in rows:
        period = int(period)
        value = float(value)
        if value < 0:
            raise ValueError("demands must be non-negative")
        series.setdefault(series_id, {})[period] = value
    if len(series) < 2:
        raise ValueError("need at least 2 series to estimate per-period spread")
    period_sets = [frozenset(s.keys()) for s in series.values()]
    if len(set(period_sets)) != 1:
        raise ValueError("ragged series: all series must cover the same periods")
    periods = sorted(period_sets[0])
    if periods != list(range(len(periods))):
        raise ValueError("periods must be 0-based consecutive integers")
    data = np.array([[series[name][t] for t in periods] for name in sorted(series)])
    mu = data.mean(axis=0)
    sigma = data.std(axis=0, ddof=1)
    return TruncatedNormalProcess(
        mu=tuple(mu.tolist()), sigma=tuple(sigma.tolist()), trunc_lo=0.0, trunc_hi=1e8
    )


def read_demand_csv(path):
    """Parse a demand CSV with header period,series_id,demand into row tuples."""
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["period", "series_id", "demand"]:
            raise ValueError("expected CSV header: period,series_id,demand")
        return [(int(r[0]), r[1], float(r[2])) for r in reader if r]


def synthetic_lifecycle(horizon=115, peak=3e5, peak_week=70, sigma_frac=0.25):
    """Bundled hump-shaped demand process: ramp to a peak, then decline.

    Mean demand follows a gamma-like pulse that is ~0 in the first weeks
    and reaches `peak` at `peak_week`; spread scales with the mean.
    """
    t = np.arange(1, horizon + 1, dtype=np.float64)
    x = t / peak_week
    mu = peak * x**6 * np.exp(6.0 * (1.0 - x))
    sigma = sigma_frac * mu
    return TruncatedNormalProcess(
        mu=tuple(mu.tolist()), sigma=tuple(sigma.tolist()), trunc_lo=0.0, trunc_hi=1e8
    )

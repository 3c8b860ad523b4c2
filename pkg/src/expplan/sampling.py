"""Local samplers over critical configurations and the composite global sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SIGMA = 0.2
DEFAULT_LAMBDA = 0.5


@dataclass(frozen=True, eq=False)
class LocalSampler:
    """Equal-weight Gaussian mixture, one isotropic component per critical configuration.

    ``sigma`` is the per-joint standard deviation.
    """

    configs: np.ndarray
    sigma: float = DEFAULT_SIGMA
    source: int | None = None  # id of the database entry this sampler came from

    @property
    def size(self) -> int:
        return len(self.configs)

    @property
    def dof(self) -> int:
        return self.configs.shape[1]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        j = rng.integers(len(self.configs))
        return self.configs[j] + self.sigma * rng.standard_normal(self.dof)


def build_local_sampler(configs, sigma: float = DEFAULT_SIGMA, source: int | None = None) -> LocalSampler:
    configs = np.array(configs, dtype=float)
    if configs.ndim != 2 or len(configs) == 0:
        raise ValueError("a local sampler needs at least one configuration")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    configs.setflags(write=False)
    return LocalSampler(configs, float(sigma), source)


@dataclass(frozen=True, eq=False)
class GlobalSampler:
    """Uniform draw with probability ``lam``, otherwise a draw from a random local sampler.

    Gaussian draws falling outside the joint bounds are clamped. With no
    local samplers ``lam`` is forced to 1.
    """

    samplers: tuple[LocalSampler, ...]
    lam: float
    lower: np.ndarray
    upper: np.ndarray

    @property
    def K(self) -> int:
        return len(self.samplers)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.lam >= 1.0:
            return rng.uniform(self.lower, self.upper)
        if rng.random() < self.lam:
            return rng.uniform(self.lower, self.upper)
        local = self.samplers[rng.integers(len(self.samplers))]
        return np.clip(local.sample(rng), self.lower, self.upper)


def make_global_sampler(samplers, lam: float, lower, upper) -> GlobalSampler:
    """Deduplicate ``samplers`` by source entry (or identity) and build the composite."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("invalid joint bounds")
    seen = set()
    unique = []
    for s in samplers:
        key = ("entry", s.source) if s.source is not None else ("obj", id(s))
        if key in seen:
            continue
        if s.dof != len(lower):
            raise ValueError(f"sampler has {s.dof} joints, bounds have {len(lower)}")
        seen.add(key)
        unique.append(s)
    if not unique:
        lam = 1.0
    return GlobalSampler(tuple(unique), float(lam), lower, upper)


def uniform_sampler(lower, upper) -> GlobalSampler:
    return make_global_sampler((), 1.0, lower, upper)


def sample_global(gs: GlobalSampler, rng: np.random.Generator) -> np.ndarray:
    return gs.sample(rng)

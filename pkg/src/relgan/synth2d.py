"""2-D target distributions and nearest-mode coverage metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DATASETS = ("ring8", "grid25", "swissroll")


@dataclass(frozen=True)
class GaussianMixtureSpec:
    modes: np.ndarray
    sigma: float
    name: str = "mixture"

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=np.float64).reshape(-1, 2)
        if len(modes) < 1:
            raise ConfigError("mixture needs at least one mode")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if len(np.unique(modes, axis=0)) != len(modes):
            raise ConfigError("mixture modes must be pairwise distinct")
        modes.flags.writeable = False
        object.__setattr__(self, "modes", modes)

    @property
    def n_modes(self):
        return len(self.modes)


def ring8(radius=2.0, sigma=0.02):
    angles = 2.0 * np.pi * np.arange(8) / 8
    return GaussianMixtureSpec(radius * np.stack([np.cos(angles), np.sin(angles)], axis=1), sigma, "ring8")


def grid25(sigma=0.05):
    ticks = np.arange(-2.0, 3.0)
    modes = np.array([(x, y) for x in ticks for y in ticks])
    return GaussianMixtureSpec(modes, sigma, "grid25")


def dataset_spec(name):
    """Mixture spec for a dataset name; None for swissroll (no discrete modes)."""
    if name == "ring8":
        return ring8()
    if name == "grid25":
        return grid25()
    if name == "swissroll":
        return None
    raise ConfigError(f"unknown dataset {name!r}; expected one of {', '.join(DATASETS)}")


def sample_mixture(spec, n, rng):
    """Uniform mode index, then isotropic Gaussian noise of std ``sigma``."""
    if n < 1:
        raise ConfigError("sample_mixture: n must be >= 1")
    idx = rng.integers(spec.n_modes, size=n)
    return spec.modes[idx] + spec.sigma * rng.standard_normal((n, 2))


def swissroll_curve(t):
    """Noise-free spiral point(s) t(cos t, sin t) scaled so t = 4.5pi lands at radius 2."""
    t = np.asarray(t, dtype=np.float64)
    return np.stack([t * np.cos(t), t * np.sin(t)], axis=-1) * (2.0 / (4.5 * np.pi))


def sample_swissroll(n, rng, noise=0.05):
    """Spiral with t uniform in [1.5pi, 4.5pi], plus isotropic noise."""
    if n < 1:
        raise ConfigError("sample_swissroll: n must be >= 1")
    t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, size=n)
    return swissroll_curve(t) + noise * rng.standard_normal((n, 2))


def sample_dataset(name, n, rng):
    spec = dataset_spec(name)
    if spec is None:
        return sample_swissroll(n, rng)
    return sample_mixture(spec, n, rng)


@dataclass
class ModeCoverageReport:
    covered_modes: int
    total_modes: int
    hq_fraction: float
    per_mode_counts: list
    per_mode_hq: list = field(default_factory=list)
    k_sigma: float = 3.0
    floor: float = 1.0

    def rows(self):
        return [
            {"mode_id": i, "count": c, "hq_count": h}
            for i, (c, h) in enumerate(zip(self.per_mode_counts, self.per_mode_hq))
        ]


def mode_coverage(points, spec, k_sigma=3.0):
    """Assign each point to its nearest mode and count high-quality hits.

    A point is high quality when it lies within ``k_sigma * sigma`` of its
    mode. A mode is covered when it receives at least
    ``max(1, n / (100 * n_modes))`` high-quality points.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n < 1:
        raise ConfigError("mode_coverage: need at least one point")
    if not k_sigma > 0:
        raise ConfigError("mode_coverage: k_sigma must be positive")
    k = spec.n_modes
    d2 = np.sum((pts[:, None, :] - spec.modes[None, :, :]) ** 2, axis=2)
    nearest = np.argmin(d2, axis=1)
    dist = np.sqrt(d2[np.arange(n), nearest])
    hq = dist <= k_sigma * spec.sigma
    counts = np.bincount(nearest, minlength=k)
    hq_counts = np.bincount(nearest[hq], minlength=k)
    floor = max(1.0, n / (100.0 * k))
    return ModeCoverageReport(
        covered_modes=int(np.sum(hq_counts >= floor)),
        total_modes=k,
        hq_fraction=float(hq.mean()),
        per_mode_counts=[int(c) for c in counts],
        per_mode_hq=[int(c) for c in hq_counts],
        k_sigma=float(k_sigma),
        floor=floor,
    )

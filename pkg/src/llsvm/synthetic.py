"""Synthetic classification tasks with known conditional class probability.

All randomness comes from a Philox counter-based generator seeded with the
SyntheticSpec's 64-bit seed, so a SyntheticSpec always maps to the same arrays on a given
platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .dataset import LabeledDataset
from .errors import InvalidSpecError

GENERATORS = ("two_spirals", "uniform_1d_smooth", "xor_gaussians")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2 ** 64 - 1)))


@dataclass(frozen=True)
class GroundTruth:
    """``eta(x) = P[y = 1 | x]`` together with the marginal sampler."""

    eta: Callable[[np.ndarray], np.ndarray]
    bayes_risk: float | None
    sample_x: Callable[[np.random.Generator, int], np.ndarray]
    params: dict = field(default_factory=dict)

    def bayes_label(self, x) -> np.ndarray:
        e = self.eta(np.atleast_2d(np.asarray(x, dtype=float)))
        return np.where(2.0 * e - 1.0 >= 0.0, 1, -1)

    def margin(self, x) -> np.ndarray:
        return np.abs(2.0 * self.eta(np.atleast_2d(np.asarray(x, dtype=float))) - 1.0)


@dataclass(frozen=True)
class SyntheticSpec:
    generator: str
    n: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise InvalidSpecError(f"unknown generator {self.generator!r}")
        if self.n < 1:
            raise InvalidSpecError("n must be at least 1")

    def replace(self, **kw) -> "SyntheticSpec":
        d = dict(generator=self.generator, n=self.n, params=self.params, seed=self.seed)
        d.update(kw)
        return SyntheticSpec(**d)


def _spiral_arm(theta: np.ndarray) -> np.ndarray:
    r = theta / (2.0 * math.pi)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def gen_two_spirals(n: int, noise_sd: float = 0.02, turns: float = 1.5, seed: int = 0) -> LabeledDataset:
    """Two interleaved Archimedean arms ``r = theta / (2 pi)``.

    Arm ``+1`` is sampled at angles ``2 pi turns sqrt(u)`` (roughly uniform
    in arc length); arm ``-1`` is its point reflection through the origin.
    Rows come out shuffled.
    """
    if n < 2 or n % 2:
        raise InvalidSpecError(f"two_spirals needs an even n >= 2, got {n}")
    if noise_sd < 0 or turns <= 0:
        raise InvalidSpecError("noise_sd must be >= 0 and turns > 0")
    rng = make_rng(seed)
    half = n // 2
    theta = 2.0 * math.pi * turns * np.sqrt(rng.random(n))
    pts = _spiral_arm(theta)
    pts[half:] *= -1.0
    labels = np.concatenate([np.ones(half), -np.ones(half)])
    if noise_sd > 0:
        pts = pts + noise_sd * rng.standard_normal(pts.shape)
    perm = rng.permutation(n)
    return LabeledDataset(pts[perm], labels[perm])


def _uniform_truth(slope: float) -> GroundTruth:
    def eta(x):
        x = np.asarray(x, dtype=float)
        return 0.5 + 0.5 * np.tanh(slope * x[..., 0])

    risk, _ = integrate.quad(
        lambda t: 0.5 * min(0.5 + 0.5 * math.tanh(slope * t), 0.5 - 0.5 * math.tanh(slope * t)),
        -1.0, 1.0, points=[0.0],
    )

    def sample_x(rng, size):
        return rng.uniform(-1.0, 1.0, size=(size, 1))

    return GroundTruth(eta, risk, sample_x, {"slope": slope, "density": 0.5, "low": -1.0, "high": 1.0})


def gen_uniform_1d_smooth(n: int, slope: float = 2.0, seed: int = 0) -> tuple[LabeledDataset, GroundTruth]:
    """``x ~ U[-1, 1]`` with ``eta(x) = 1/2 + tanh(slope x)/2``."""
    if not (0 < slope <= 5):
        raise InvalidSpecError(f"slope must lie in (0, 5], got {slope}")
    truth = _uniform_truth(float(slope))
    rng = make_rng(seed)
    x = truth.sample_x(rng, n)
    y = np.where(rng.random(n) < truth.eta(x), 1.0, -1.0)
    return LabeledDataset(x, y), truth


def _norm_pdf(z, sd):
    return np.exp(-0.5 * (z / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))


def _xor_truth(sep: float, sd: float) -> GroundTruth:
    centres = np.array([[sep, sep], [-sep, -sep], [sep, -sep], [-sep, sep]])

    def densities(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack(
            [_norm_pdf(x[:, 0] - c[0], sd) * _norm_pdf(x[:, 1] - c[1], sd) for c in centres], axis=1
        )

    def eta(x):
        dens = densities(x)
        return (dens[:, 0] + dens[:, 1]) / dens.sum(axis=1)

    # tensor trapezoid rule; the mixture is negligible beyond 8 sd of the centres
    lim = sep + 8.0 * sd
    g = np.linspace(-lim, lim, 801)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    dens = densities(grid)
    tot = dens.sum(axis=1)
    e = (dens[:, 0] + dens[:, 1]) / np.where(tot > 0, tot, 1.0)
    f = (0.25 * tot * np.minimum(e, 1.0 - e)).reshape(gx.shape)
    risk = float(integrate.trapezoid(integrate.trapezoid(f, g, axis=1), g))

    def sample_x(rng, size):
        comp = rng.integers(0, 4, size=size)
        return centres[comp] + sd * rng.standard_normal((size, 2))

    return GroundTruth(eta, risk, sample_x, {"separation": sep, "sd": sd})


def gen_xor_gaussians(
    n: int, separation: float = 1.0, sd: float = 0.5, seed: int = 0
) -> tuple[LabeledDataset, GroundTruth]:
    """Four equal-weight isotropic Gaussians at ``(+-sep, +-sep)``.

    Blobs in the first and third quadrants carry label ``+1``.
    """
    if separation <= 0 or sd <= 0:
        raise InvalidSpecError("separation and sd must be positive")
    truth = _xor_truth(float(separation), float(sd))
    rng = make_rng(seed)
    comp = rng.integers(0, 4, size=n)
    centres = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float) * separation
    x = centres[comp] + sd * rng.standard_normal((n, 2))
    y = np.where(comp < 2, 1.0, -1.0)
    return LabeledDataset(x, y), truth


def generate(spec: SyntheticSpec) -> tuple[LabeledDataset, GroundTruth | None]:
    p = dict(spec.params)
    if spec.generator == "two_spirals":
        ds = gen_two_spirals(spec.n, p.get("noise_sd", 0.02), p.get("turns", 1.5), spec.seed)
        return ds, None
    if spec.generator == "uniform_1d_smooth":
        return gen_uniform_1d_smooth(spec.n, p.get("slope", 2.0), spec.seed)
    return gen_xor_gaussians(spec.n, p.get("separation", 1.0), p.get("sd", 0.5), spec.seed)

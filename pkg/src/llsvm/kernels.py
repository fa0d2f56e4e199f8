"""Finite-support radial smoothing kernels.

Every kernel has the form ``K(x, x0, sigma) = c(family, d) / sigma**d * profile(u)``
with ``u = ||x - x0|| / sigma`` and ``profile(u) = 0`` for ``u > 1``.  The
normalising constant makes the kernel integrate to one over R^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import DimensionMismatchError, InvalidSpecError

POSITIVE_FAMILIES = ("epanechnikov", "triangle", "biweight", "rectangular")
FAMILIES = POSITIVE_FAMILIES + ("negative_order2",)

# command-line / config spelling -> internal family tag
FAMILY_ALIASES = {
    "epanechnikov": "epanechnikov",
    "triangle": "triangle",
    "biweight": "biweight",
    "rectangular": "rectangular",
    "negative": "negative_order2",
    "negative_order2": "negative_order2",
}


def _profile(family: str, u: np.ndarray) -> np.ndarray:
    inside = u <= 1.0
    if family == "epanechnikov":
        val = 1.0 - u * u
    elif family == "triangle":
        val = 1.0 - u
    elif family == "biweight":
        val = (1.0 - u * u) ** 2
    elif family == "rectangular":
        val = np.ones_like(u)
    elif family == "negative_order2":
        val = 3.0 - 5.0 * u * u
    else:
        raise InvalidSpecError(f"unknown kernel family {family!r}")
    return np.where(inside, val, 0.0)


def _ball_moment(d: int, p: int) -> float:
    """Integral of (1 - ||z||^2)**p over the unit ball of R^d."""
    return math.exp(0.5 * d * math.log(math.pi) + gammaln(p + 1) - gammaln(0.5 * d + p + 1))


def normalization_constant(family: str, d: int) -> float:
    """Return c such that ``c * profile(||z||)`` integrates to one over R^d."""
    family = FAMILY_ALIASES.get(family, family)
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise InvalidSpecError(f"dimension must be a positive integer, got {d!r}")
    if family == "epanechnikov":
        return 1.0 / _ball_moment(d, 1)
    if family == "biweight":
        return 1.0 / _ball_moment(d, 2)
    if family == "rectangular":
        return 1.0 / _ball_moment(d, 0)
    if family == "triangle":
        # integral of (1 - r) over the ball is V_d / (d + 1)
        return (d + 1) / _ball_moment(d, 0)
    if family == "negative_order2":
        if d != 1:
            raise InvalidSpecError("negative_order2 kernel is only defined for d = 1")
        return 3.0 / 8.0
    raise InvalidSpecError(f"unknown kernel family {family!r}")


@dataclass(frozen=True)
class KernelSpec:
    """Smoothing kernel family, bandwidth and ambient dimension.

    ``allow_negative`` must be set to build the ``negative_order2`` kernel,
    which takes negative values and only exists for ablation runs.
    """

    family: str
    bandwidth: float
    dim: int
    allow_negative: bool = False

    def __post_init__(self):
        family = FAMILY_ALIASES.get(self.family)
        if family is None:
            raise InvalidSpecError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", family)
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InvalidSpecError(f"bandwidth must be positive, got {self.bandwidth!r}")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise InvalidSpecError(f"dimension must be a positive integer, got {self.dim!r}")
        if family == "negative_order2" and not self.allow_negative:
            raise InvalidSpecError("negative_order2 requires allow_negative=True")
        # validates the (family, dim) combination
        normalization_constant(family, int(self.dim))

    @property
    def is_positive(self) -> bool:
        return self.family in POSITIVE_FAMILIES

    @property
    def constant(self) -> float:
        return normalization_constant(self.family, int(self.dim))

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return KernelSpec(self.family, bandwidth, self.dim, self.allow_negative)

    def radial(self, r):
        """Kernel value as a function of the distance ``r`` to the centre."""
        r = np.asarray(r, dtype=float)
        u = r / self.bandwidth
        return self.constant / self.bandwidth ** self.dim * _profile(self.family, u)

    def evaluate(self, x, x0):
        """Evaluate K(x, x0, sigma).

        ``x`` may be a single point of shape ``(d,)`` or a stack ``(m, d)``;
        the result is a float or an ``(m,)`` array accordingly.
        """
        x = np.asarray(x, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.dim,) or x.shape[-1:] != (self.dim,) or x.ndim > 2:
            raise DimensionMismatchError(
                f"expected points of dimension {self.dim}, got {x.shape} and {x0.shape}"
            )
        r = np.sqrt(np.sum((x - x0) ** 2, axis=-1))
        out = self.radial(r)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def sup_value(self) -> float:
        """K_m: the maximum of the kernel, attained at the centre."""
        return float(self.radial(0.0))


def evaluate(spec: KernelSpec, x, x0):
    return spec.evaluate(x, x0)


def sup_value(spec: KernelSpec) -> float:
    return spec.sup_value()


def min_halfball_mass_1d(
    spec: KernelSpec,
    density: Callable[[float], float],
    x0: float,
    n_cuts: int = 201,
) -> float:
    """Infimum over half-interval cuts of E[K(x, x0, sigma) 1_H(x)] in one dimension.

    ``H`` ranges over the intervals ``[x0 - sigma, x0 + t]`` and
    ``[x0 - t, x0 + sigma]`` for ``t`` in ``[0, sigma]``, i.e. the intersections
    of a half-line with the support that keep at least half its length.
    """
    if spec.dim != 1:
        raise InvalidSpecError("min_halfball_mass_1d needs a one-dimensional kernel")
    s = spec.bandwidth

    def integrand(x):
        return spec.radial(abs(x - x0)) * density(x)

    best = math.inf
    for t in np.linspace(0.0, s, n_cuts):
        left, _ = integrate.quad(integrand, x0 - s, x0 + t, limit=200)
        right, _ = integrate.quad(integrand, x0 - t, x0 + s, limit=200)
        best = min(best, left, right)
    return best


def expected_distance_weight_1d(
    spec: KernelSpec, density: Callable[[float], float], x0: float
) -> float:
    """E[|x - x0| K(x, x0, sigma)] for a one-dimensional marginal density."""
    s = spec.bandwidth
    val, _ = integrate.quad(
        lambda x: abs(x - x0) * spec.radial(abs(x - x0)) * density(x),
        x0 - s,
        x0 + s,
        points=[x0],
        limit=200,
    )
    return val

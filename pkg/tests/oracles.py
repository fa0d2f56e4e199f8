"""Independent reference computations shared by the tests."""

import math

from scipy import integrate


def ball_integral(f, d):
    """Integrate f(r) over the unit ball of R^d with cartesian limits."""
    opts = dict(epsabs=1e-9, epsrel=1e-9)
    if d == 1:
        return integrate.quad(lambda x: f(abs(x)), -1, 1, points=[0.0], **opts)[0]
    if d == 2:
        return integrate.dblquad(
            lambda y, x: f(math.hypot(x, y)), -1, 1,
            lambda x: -math.sqrt(max(0.0, 1 - x * x)), lambda x: math.sqrt(max(0.0, 1 - x * x)),
            **opts,
        )[0]
    return integrate.tplquad(
        lambda z, y, x: f(math.sqrt(x * x + y * y + z * z)), -1, 1,
        lambda x: -math.sqrt(max(0.0, 1 - x * x)), lambda x: math.sqrt(max(0.0, 1 - x * x)),
        lambda x, y: -math.sqrt(max(0.0, 1 - x * x - y * y)),
        lambda x, y: math.sqrt(max(0.0, 1 - x * x - y * y)),
        epsabs=1e-6, epsrel=1e-6,
    )[0]

"""Smooth building blocks shared by the weight constructions.

Everything here is a plain polynomial smoothstep or a combination of
smoothsteps, so all derivatives are available in closed form and cost
nothing.  The three public families are

* ``smoothstep`` / ``smoothstep_d``: the generalized C^N step on [0, 1],
* ``cutoff_chi``: radial cutoff, identically 1 on [-3/2, 3/2] and
  supported in [-2, 2] (used at the scale |y| / sqrt(tau)),
* ``pou_eta``: a partition of unity on unit intervals,
  sum_i eta(s - i) = 1, with eta identically 1 on [1/4, 3/4].
"""

from __future__ import annotations

import math

import numpy as np

# C^5 step: degree-11 polynomial, odd-symmetric about 1/2.
_STEP_ORDER = 5


def _step_coeffs(order: int) -> np.ndarray:
    """Coefficients of the generalized smoothstep S_N on [0, 1].

    S_N(x) = x^{N+1} * sum_k binom(N+k, k) binom(2N+1, N-k) (-x)^k,
    which is the unique degree 2N+1 polynomial with S(0)=0, S(1)=1 and
    N vanishing derivatives at both ends.
    """
    n = order
    coeffs = np.zeros(2 * n + 2)
    for k in range(n + 1):
        c = math.comb(n + k, k) * math.comb(2 * n + 1, n - k) * (-1) ** k
        coeffs[n + 1 + k] = c
    return coeffs


_S = _step_coeffs(_STEP_ORDER)
# Derivative coefficient tables, up to 4th derivative.
_SD = [_S]
for _ in range(4):
    _SD.append(np.polynomial.polynomial.polyder(_SD[-1]))


def smoothstep(x):
    """C^5 step: 0 for x <= 0, 1 for x >= 1, monotone in between."""
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, 0.0, 1.0)
    return np.polynomial.polynomial.polyval(xc, _S)


def smoothstep_d(x, order: int):
    """order-th derivative of ``smoothstep`` (0 outside [0, 1])."""
    if order == 0:
        return smoothstep(x)
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    out = np.zeros_like(x)
    if np.any(inside):
        out[inside] = np.polynomial.polynomial.polyval(x[inside], _SD[order])
    return out


def cutoff_chi(u, order: int = 0):
    """Radial cutoff chi(u): 1 on |u| <= 3/2, 0 on |u| >= 2, C^5.

    ``order`` selects a derivative in u; odd derivatives are odd in u.
    """
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    # chi = 1 - S(2(|u| - 3/2))
    if order == 0:
        return 1.0 - smoothstep(2.0 * (a - 1.5))
    d = -smoothstep_d(2.0 * (a - 1.5), order) * 2.0 ** order
    if order % 2:
        d = d * np.sign(u)
    return d


def pou_eta(u, order: int = 0):
    """Bump eta with sum_i eta(s - i) = 1 and eta = 1 on [0, 3/4].

    Support is (-1/4, 1): eta rises on (-1/4, 0) via S(4u + 1) and
    falls on (3/4, 1) via 1 - S(4(u - 3/4)).  The telescoping of the
    two edges makes the unit-translate sum exactly 1, and the plateau
    contains the integer lattice point itself.
    """
    u = np.asarray(u, dtype=float)
    if order == 0:
        return smoothstep(4.0 * u + 1.0) - smoothstep(4.0 * (u - 0.75))
    scale = 4.0 ** order
    return scale * (smoothstep_d(4.0 * u + 1.0, order)
                    - smoothstep_d(4.0 * (u - 0.75), order))


class GaussianBump:
    """exp(-(s - c)^2 / (2 w^2)) with analytic derivatives.

    Used as the temporal profile of verifier ensemble members; carrying
    the closed form keeps d/ds exact, so identity checks are limited by
    quadrature only.
    """

    def __init__(self, center: float, width: float, amplitude: float = 1.0):
        self.center = float(center)
        self.width = float(width)
        self.amplitude = float(amplitude)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        z = (s - self.center) / self.width
        return self.amplitude * np.exp(-0.5 * z * z)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        z = (s - self.center) / self.width
        return -self.amplitude * z / self.width * np.exp(-0.5 * z * z)

    def deriv2(self, s):
        s = np.asarray(s, dtype=float)
        z = (s - self.center) / self.width
        return self.amplitude * (z * z - 1.0) / self.width ** 2 * np.exp(-0.5 * z * z)


def gauss_legendre_panels(a: float, b: float, knots, points_per_panel: int = 12):
    """Composite Gauss-Legendre nodes/weights on [a, b], split at knots.

    Splitting at the piecewise boundaries of h keeps the quadrature
    spectrally accurate even though h'' jumps there.
    """
    edges = sorted({float(a), float(b), *(float(k) for k in knots if a < k < b)})
    x0, w0 = np.polynomial.legendre.leggauss(points_per_panel)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes.append(mid + half * x0)
        weights.append(half * w0)
    return np.concatenate(nodes), np.concatenate(weights)

"""Exponential integral E1 for complex argument (principal branch).

The Green-tensor closed forms only ever need the product exp(z) E1(z), which
stays O(1/|z|) even where E1 alone overflows, so that scaled product is the
primary routine here.
"""

from __future__ import annotations

import cmath
import math

EULER_GAMMA = 0.57721566490153286061

_SERIES_RADIUS = 4.0
_ASYMPTOTIC_RADIUS = 40.0
_MAX_TERMS = 2000


class ExpintDomainError(ValueError):
    """Argument is zero or lies on the branch cut (negative real axis)."""


def _check(z: complex) -> complex:
    z = complex(z)
    if z == 0:
        raise ExpintDomainError("E1 is singular at z = 0")
    if z.imag == 0.0 and z.real < 0.0:
        raise ExpintDomainError(
            f"z = {z.real!r} lies on the branch cut of E1; perturb the imaginary "
            "part (e.g. +/-1e-300j) to select a side"
        )
    return z


def _series(z: complex) -> complex:
    # E1(z) = -gamma - log z - sum_{k>=1} (-z)^k / (k k!)
    term = 1.0 + 0j
    total = 0j
    for k in range(1, _MAX_TERMS):
        term *= -z / k
        contrib = term / k
        total += contrib
        if abs(contrib) <= 1e-17 * abs(total):
            break
    return -EULER_GAMMA - cmath.log(z) - total


def _continued_fraction_scaled(z: complex) -> complex:
    # exp(z) E1(z) = 1/(z+1- 1/(z+3- 4/(z+5- ...))), modified Lentz
    tiny = 1e-300
    b = z + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for n in range(1, _MAX_TERMS):
        a = -float(n * n)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError(f"E1 continued fraction did not converge at z={z!r}")


def _asymptotic_scaled(z: complex) -> complex:
    # exp(z) E1(z) ~ (1/z) sum (-1)^k k! / z^k, truncated at the smallest term
    total = 1.0 + 0j
    term = 1.0 + 0j
    last = 1.0
    for k in range(1, int(abs(z)) + 1):
        term *= -k / z
        size = abs(term)
        if size > last or size < 1e-18:
            break
        total += term
        last = size
    # Stokes correction across the negative real axis
    if z.real < 0:
        total += (-1j * math.pi if z.imag > 0 else 1j * math.pi) * z * cmath.exp(z)
    return total / z


def scaled_expint_e1(z: complex) -> complex:
    """exp(z) * E1(z), principal branch, without intermediate overflow."""
    z = _check(z)
    r = abs(z)
    if r <= _SERIES_RADIUS:
        return cmath.exp(z) * _series(z)
    if z.real >= 0 or abs(z.imag) > -z.real:
        return _continued_fraction_scaled(z)
    if r < _ASYMPTOTIC_RADIUS:
        return cmath.exp(z) * _series(z)
    return _asymptotic_scaled(z)


def expint_e1(z: complex) -> complex:
    """Principal-branch exponential integral E1(z) = int_z^inf exp(-t)/t dt."""
    z = _check(z)
    if abs(z) <= _SERIES_RADIUS:
        return _series(z)
    return scaled_expint_e1(z) * cmath.exp(-z)

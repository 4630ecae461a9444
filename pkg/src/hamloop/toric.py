"""Exact rational integrals over the moment trapezoid of a Hirzebruch surface.

The trapezoid is {(x, y) : 0 <= y <= mu, 0 <= x <= tau - k*y}.  On the
surface, integrals of functions of the moment coordinates against omega^2
are MANIFOLD_POLYTOPE_FACTOR times the plane integrals over the trapezoid.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

from .errors import InvalidParameters

MANIFOLD_POLYTOPE_FACTOR = 2  # n! for n = 2


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise InvalidParameters("use exact rationals (int, Fraction or 'p/q'), not floats")
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidParameters(f"not a rational number: {value!r}") from exc


@dataclass(frozen=True)
class DelzantTrapezoid:
    k: int
    tau: Fraction
    mu: Fraction

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise InvalidParameters(f"k must be a positive integer, got {self.k!r}")
        tau, mu = as_fraction(self.tau), as_fraction(self.mu)
        if tau <= 0 or mu <= 0:
            raise InvalidParameters("tau and mu must be positive")
        if not self.k * mu < tau:
            raise InvalidParameters(f"need k*mu < tau, got k={self.k}, tau={tau}, mu={mu}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "mu", mu)

    @property
    def lam(self) -> Fraction:
        return self.tau - self.k * self.mu

    def contains(self, x, y) -> bool:
        return 0 <= y <= self.mu and 0 <= x <= self.tau - self.k * y


def integrate_monomial(trap: DelzantTrapezoid, a: int, b: int) -> Fraction:
    """Exact integral of x^a y^b over the trapezoid."""
    if a < 0 or b < 0:
        raise InvalidParameters("exponents must be non-negative")
    # inner x-integral gives (tau - k y)^(a+1) / (a+1); expand in y
    total = Fraction(0)
    for j in range(a + 2):
        coeff = comb(a + 1, j) * trap.tau ** (a + 1 - j) * (-trap.k) ** j
        total += coeff * trap.mu ** (b + j + 1) / (b + j + 1)
    return total / (a + 1)


def area(trap: DelzantTrapezoid) -> Fraction:
    return integrate_monomial(trap, 0, 0)


def kappa(trap: DelzantTrapezoid) -> Fraction:
    """Constant making pi*rho_1^2 - kappa (= y - kappa) mean-zero."""
    lam, k, mu = trap.lam, trap.k, trap.mu
    return mu * (3 * lam + k * mu) / (3 * (2 * lam + k * mu))


def kappa_tilde(trap: DelzantTrapezoid) -> Fraction:
    """Constant making pi*rho_2^2 - kappa_tilde (= x - kappa_tilde) mean-zero."""
    lam, k, mu = trap.lam, trap.k, trap.mu
    return (3 * lam**2 + 3 * k * lam * mu + k**2 * mu**2) / (3 * (2 * lam + k * mu))


def kappa_from_moments(trap: DelzantTrapezoid) -> Fraction:
    return integrate_monomial(trap, 0, 1) / area(trap)


def kappa_tilde_from_moments(trap: DelzantTrapezoid) -> Fraction:
    return integrate_monomial(trap, 1, 0) / area(trap)


def closed_form_invariants(trap: DelzantTrapezoid) -> tuple:
    """(I_psi, I_psi_tilde) for the rotations of the first and second circle factor."""
    lam, k, mu = trap.lam, trap.k, trap.mu
    shape = 1 - mu / (2 * lam + k * mu)
    return Fraction(2 * k) * mu**2 / 3 * shape, Fraction(-(k**2)) * mu**2 / 3 * shape


def boundary_terms(trap: DelzantTrapezoid) -> tuple:
    """The four chain contributions for the loop psi, in chart order 1..4."""
    lam, mu, tau = trap.lam, trap.mu, trap.tau
    kap = kappa(trap)
    return (2 * tau * kap, 2 * mu * kap - mu**2, 2 * lam * (kap - mu), mu * (2 * kap - mu))


def boundary_terms_tilde(trap: DelzantTrapezoid) -> tuple:
    """The four chain contributions for the loop psi_tilde, in chart order 1..4."""
    lam, mu, tau, k = trap.lam, trap.mu, trap.tau, trap.k
    kt = kappa_tilde(trap)
    return (
        tau * (2 * kt - tau),
        2 * mu * kt,
        lam * (2 * kt - lam),
        mu * (2 * kt - k * mu - 2 * lam),
    )


def chern_number(trap: DelzantTrapezoid) -> Fraction:
    """Pairing of c_1 with [omega]: the boundary length 2*lam + (k+2)*mu."""
    return 2 * trap.lam + (trap.k + 2) * trap.mu

"""Scalar functionals of a field: conserved energies, bad terms, the
``I_k`` good-term family, the (alpha, beta) modified energy and the
small-data trapping function.

Integrands are formed pointwise on the oversampled physical grid and
integrated with :func:`gdnls.spectral.integrate`.  Factors carrying a
negative power of ``|u|^2`` are regularised as ``(|u|^2 + delta_reg)^p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import (
    TWO_PI,
    CutoffSpec,
    SpectralField,
    apply_cutoff,
    derivative,
    homogeneous_seminorm,
    integrate,
    physical_spectrum,
    sobolev_norm,
    to_physical,
)

__all__ = [
    "ModifiedEnergyParams",
    "FunctionalValue",
    "energy_E",
    "energy_E_eps",
    "momentum_term",
    "bad_B1",
    "bad_B1_forms",
    "bad_B2",
    "bad_B2_forms",
    "bad_B3",
    "good_Ik",
    "good_Ik_bound",
    "correction_terms",
    "modified_energy",
    "modified_energy_reference",
    "h2_seminorm_sq",
    "small_data_h",
    "threshold_m",
    "trap_delta",
    "estimate_embedding_constant",
    "functional_dump",
]


def _check_sigma(sigma: float) -> None:
    if not sigma > 1.0:
        raise ValueError(f"sigma must exceed 1, got {sigma!r}")


@dataclass(frozen=True)
class ModifiedEnergyParams:
    alpha: float
    beta: float
    sigma: float
    delta_reg: float = 1e-14

    def __post_init__(self):
        _check_sigma(self.sigma)

    @classmethod
    def canonical(cls, sigma: float, delta_reg: float = 1e-14) -> ModifiedEnergyParams:
        """The cancelling choice ``alpha = 2, beta = 2 / (sigma + 1)``."""
        return cls(2.0, 2.0 / (sigma + 1.0), sigma, delta_reg)


@dataclass(frozen=True)
class FunctionalValue:
    name: str
    value: float
    field_time: float = 0.0
    regularization_used: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise FloatingPointError(f"functional {self.name} is not finite")


class _Samples:
    """u, du, d2u and |u|^2 on the physical grid of ``f``."""

    __slots__ = ("u", "du", "d2u", "rho")

    def __init__(self, f: SpectralField):
        self.u = to_physical(f)
        self.du = to_physical(derivative(f, 1))
        self.d2u = to_physical(derivative(f, 2))
        self.rho = np.abs(self.u) ** 2

    def rho_pow(self, p: float, delta_reg: float) -> np.ndarray:
        if p < 0:
            return (self.rho + delta_reg) ** p
        if p == 0:
            return np.ones_like(self.rho)
        return self.rho**p


def h2_seminorm_sq(f: SpectralField) -> float:
    """``||d^2 f||_{L^2}^2`` including the (2 pi)^4 of the derivative symbol."""
    return TWO_PI**4 * homogeneous_seminorm(f, 2) ** 2


def momentum_term(f: SpectralField, sigma: float) -> float:
    """``Im int |u|^(2 sigma) du conj(u)``, the nonlinear part of the energy."""
    s = _Samples(f)
    return integrate(s.rho**sigma * s.du * np.conj(s.u)).imag


def energy_E(f: SpectralField, sigma: float) -> float:
    _check_sigma(sigma)
    kinetic = 0.5 * TWO_PI**2 * homogeneous_seminorm(f, 1) ** 2
    return kinetic + momentum_term(f, sigma) / (2 * sigma + 2)


def energy_E_eps(f: SpectralField, sigma: float, cutoff: CutoffSpec | None) -> float:
    """Energy conserved by the cutoff equation.

    The kinetic part uses ``u`` itself, the nonlinear part ``v = J_eps u``.
    The nonlinear pairing is the imaginary part: its real part integrates
    ``d(|v|^(2 sigma + 2)) / (2 sigma + 2)`` and vanishes identically.
    """
    _check_sigma(sigma)
    kinetic = 0.5 * TWO_PI**2 * homogeneous_seminorm(f, 1) ** 2
    return kinetic + momentum_term(apply_cutoff(f, cutoff), sigma) / (2 * sigma + 2)


def bad_B1_forms(f: SpectralField, sigma: float) -> tuple[float, float]:
    """``int |d2u|^2 d(|u|^(2 sigma))`` evaluated two ways.

    The first differentiates the sampled ``|u|^(2 sigma)`` spectrally on the
    full physical grid, the second uses the chain rule
    ``sigma |u|^(2(sigma-1)) d(|u|^2)`` pointwise.
    """
    _check_sigma(sigma)
    s = _Samples(f)
    modes, spec = physical_spectrum(s.rho**sigma)
    symbol = 2j * np.pi * modes
    if modes.size % 2 == 0:
        symbol[modes.size // 2] = 0.0  # Nyquist mode has no odd derivative
    d_rho_sigma = np.fft.ifft(spec * symbol, norm="forward").real
    w = np.abs(s.d2u) ** 2
    first = integrate(w * d_rho_sigma).real
    d_rho = 2.0 * (s.du * np.conj(s.u)).real
    second = sigma * integrate(w * s.rho ** (sigma - 1) * d_rho).real
    return first, second


def bad_B1(f: SpectralField, sigma: float) -> float:
    return bad_B1_forms(f, sigma)[1]


def bad_B2_forms(f: SpectralField, sigma: float) -> tuple[float, float]:
    _check_sigma(sigma)
    s = _Samples(f)
    weight = s.rho ** (sigma - 1)
    first = sigma * integrate(np.conj(s.d2u) ** 2 * s.du * s.u * weight).real
    second = sigma * integrate(s.d2u**2 * np.conj(s.du) * np.conj(s.u) * weight).real
    return first, second


def bad_B2(f: SpectralField, sigma: float) -> float:
    return bad_B2_forms(f, sigma)[0]


def bad_B3(f: SpectralField, sigma: float, delta_reg: float = 1e-14) -> float:
    _check_sigma(sigma)
    s = _Samples(f)
    weight = s.rho_pow(sigma - 2, delta_reg)
    integrand = s.d2u**2 * s.du * np.conj(s.u) ** 3 * weight
    return sigma * (sigma - 1) * integrate(integrand).real


def good_Ik(f: SpectralField, sigma: float, k: int, delta_reg: float = 1e-14) -> float:
    """``I_k = Re int conj(d2u) du^(3-k) conj(du)^k |u|^(2(sigma-2)) u^k conj(u)^(2-k)``."""
    if k not in (0, 1, 2):
        raise ValueError(f"k must be 0, 1 or 2, got {k!r}")
    _check_sigma(sigma)
    s = _Samples(f)
    integrand = (
        np.conj(s.d2u)
        * s.du ** (3 - k)
        * np.conj(s.du) ** k
        * s.rho_pow(sigma - 2, delta_reg)
        * s.u**k
        * np.conj(s.u) ** (2 - k)
    )
    return integrate(integrand).real


def good_Ik_bound(f: SpectralField, sigma: float) -> float:
    """``int |d2u| |du|^3 |u|^(2(sigma-1))``, which dominates every ``|I_k|``."""
    s = _Samples(f)
    return integrate(np.abs(s.d2u) * np.abs(s.du) ** 3 * s.rho ** (sigma - 1)).real


def correction_terms(v: SpectralField, sigma: float, delta_reg: float = 1e-14):
    """The three lower-order integrals of the modified energy, at ``v``:

    ``P1 = Im int conj(d2v) dv |v|^(2 sigma)``,
    ``P2 = sigma Im int d2v dv conj(v)^2 |v|^(2(sigma-1))``,
    ``P3 = sigma (sigma-1) Im int dv^3 conj(v)^3 |v|^(2(sigma-2))``.
    """
    s = _Samples(v)
    cv = np.conj(s.u)
    p1 = integrate(np.conj(s.d2u) * s.du * s.rho**sigma).imag
    p2 = sigma * integrate(s.d2u * s.du * cv**2 * s.rho ** (sigma - 1)).imag
    p3 = sigma * (sigma - 1) * integrate(
        s.du**3 * cv**3 * s.rho_pow(sigma - 2, delta_reg)
    ).imag
    return p1, p2, p3


def modified_energy(
    f: SpectralField, params: ModifiedEnergyParams, cutoff: CutoffSpec | None = None
) -> float:
    """``||d2u||^2 - alpha P1 - beta P2 - (beta/2) P3`` with ``P_i`` at ``v = J_eps u``.

    Along the flow, ``dP2/dt`` carries ``3 B3`` and ``dP3/dt`` carries
    ``-6 B3``, so the P3 weight must be ``-beta/2`` for B3 to cancel.
    With ``alpha = 2, beta = 2/(sigma+1)`` the B1 and B2 parts cancel too.
    """
    v = apply_cutoff(f, cutoff)
    p1, p2, p3 = correction_terms(v, params.sigma, params.delta_reg)
    return h2_seminorm_sq(f) - params.alpha * p1 - params.beta * p2 - 0.5 * params.beta * p3


def modified_energy_reference(
    f: SpectralField, sigma: float, cutoff: CutoffSpec | None = None, delta_reg: float = 1e-14
) -> float:
    """Reference energy with fixed weights ``1, -2, -2 sigma/(sigma+1)`` and
    ``+sigma(sigma-1)/(2(sigma+1))`` on the raw integrals.

    Coded from the integrands, independently of :func:`correction_terms`,
    so the two evaluators can be compared.  The first three weights agree
    with :func:`modified_energy` at the canonical parameters; the last does
    not cancel B3 (the cancelling weight is ``-sigma(sigma-1)/(sigma+1)``).
    """
    _check_sigma(sigma)
    v = apply_cutoff(f, cutoff)
    s = _Samples(v)
    cv = np.conj(s.u)
    t1 = integrate(np.conj(s.d2u) * s.du * s.rho**sigma).imag
    t2 = integrate(s.d2u * s.du * cv * cv * s.rho ** (sigma - 1)).imag
    t3 = integrate(s.du * s.du * s.du * cv * cv * cv * s.rho_pow(sigma - 2, delta_reg)).imag
    return (
        h2_seminorm_sq(f)
        - 2.0 * t1
        - 2.0 * sigma / (sigma + 1.0) * t2
        + sigma * (sigma - 1.0) / (2.0 * (sigma + 1.0)) * t3
    )


# --- small-data trapping -------------------------------------------------

def small_data_h(s_val: float, sigma: float, c: float) -> float:
    """``h(s) = s^2/2 - c s^(2 sigma + 2) / (2 sigma + 2)``."""
    if c <= 0:
        raise ValueError(f"c must be positive, got {c!r}")
    return 0.5 * s_val**2 - c / (2 * sigma + 2) * s_val ** (2 * sigma + 2)


def threshold_m(sigma: float, c: float) -> float:
    """Maximiser ``(1/c)^(1/(2 sigma))`` of :func:`small_data_h`."""
    if c <= 0:
        raise ValueError(f"c must be positive, got {c!r}")
    _check_sigma(sigma)
    return (1.0 / c) ** (1.0 / (2.0 * sigma))


def trap_delta(sigma: float, c: float) -> float:
    """Largest ``delta`` with ``s^2/2 + c s^(2 sigma+2)/(2 sigma+2) < h(m)`` for ``s < delta``."""
    m = threshold_m(sigma, c)
    target = small_data_h(m, sigma, c)
    lo, hi = 0.0, m
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * mid**2 + c / (2 * sigma + 2) * mid ** (2 * sigma + 2) < target:
            lo = mid
        else:
            hi = mid
    return lo


def estimate_embedding_constant(
    grid, sigma: float, n_samples: int = 200, seed: int = 0, max_freq: int = 8
) -> float:
    """Empirical ``c`` with ``|Im int |u|^(2 sigma) du conj(u)| <= c ||u||_{H^1}^(2 sigma + 2)``.

    Maximises the ratio over random smooth fields of unit H^1 norm (the
    ratio is scale invariant) and returns the largest observed value.
    """
    from .initial_data import random_band

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_samples):
        f = random_band(grid, rng, max_freq=max_freq, h1_target=1.0)
        ratio = abs(momentum_term(f, sigma)) / sobolev_norm(f, 1) ** (2 * sigma + 2)
        best = max(best, ratio)
    return best


def functional_dump(
    f: SpectralField,
    sigma: float,
    cutoff: CutoffSpec | None = None,
    alpha: float = 2.0,
    beta: float | None = None,
    delta_reg: float = 1e-14,
) -> dict[str, float]:
    """All scalar functionals of one field, keyed by name."""
    if beta is None:
        beta = 2.0 / (sigma + 1.0)
    v = apply_cutoff(f, cutoff)
    params = ModifiedEnergyParams(alpha, beta, sigma, delta_reg)
    out = {
        "l2": sobolev_norm(f, 0),
        "h1": sobolev_norm(f, 1),
        "h2": sobolev_norm(f, 2),
        "E": energy_E(f, sigma),
        "E_eps": energy_E_eps(f, sigma, cutoff),
        "mod_energy": modified_energy(f, params, cutoff),
        "B1": bad_B1(v, sigma),
        "B2": bad_B2(v, sigma),
        "B3": bad_B3(v, sigma, delta_reg),
    }
    for k in (0, 1, 2):
        out[f"I{k}"] = good_Ik(v, sigma, k, delta_reg)
    return out

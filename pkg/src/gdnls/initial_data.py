"""Initial-data families used by runs, probes and tests."""

from __future__ import annotations

import numpy as np

from .spectral import GridSpec, SpectralField, sobolev_norm, to_spectral

__all__ = [
    "plane_wave",
    "gaussian_bump",
    "random_band",
    "multi_packet",
    "scaling_family",
    "cancellation_family",
]


def plane_wave(grid: GridSpec, amplitude: float, n: int) -> SpectralField:
    """``A exp(2 pi i n x)``."""
    return SpectralField.from_modes(grid, {n: amplitude})


def gaussian_bump(
    grid: GridSpec, amplitude: float, width: float, center: float = 0.5, kick: int = 0
) -> SpectralField:
    """Periodised Gaussian ``A exp(-d^2 / (2 w^2)) exp(2 pi i kick x)``, truncated to the grid."""
    x = grid.x
    d = (x - center + 0.5) % 1.0 - 0.5
    samples = amplitude * np.exp(-0.5 * (d / width) ** 2) * np.exp(2j * np.pi * kick * x)
    return to_spectral(samples, grid)


def random_band(
    grid: GridSpec,
    rng: np.random.Generator,
    max_freq: int,
    h1_target: float | None = None,
    decay: float = 3.0,
) -> SpectralField:
    """Complex Gaussian coefficients on ``|n| <= max_freq`` with envelope ``(1+|n|)^-decay``.

    When ``h1_target`` is given the field is rescaled to that H^1 norm.
    """
    if max_freq > grid.max_mode:
        raise ValueError(f"max_freq {max_freq} exceeds grid max_mode {grid.max_mode}")
    n = grid.modes
    band = np.abs(n) <= max_freq
    z = rng.standard_normal(grid.n_modes) + 1j * rng.standard_normal(grid.n_modes)
    coeffs = np.where(band, z * (1.0 + np.abs(n)) ** (-decay), 0.0)
    f = SpectralField(grid, coeffs)
    if h1_target is not None:
        norm = sobolev_norm(f, 1)
        if norm > 0:
            f = f * (h1_target / norm)
    return f


def multi_packet(
    grid: GridSpec,
    packets: dict[int, complex],
    background_amp: float = 0.5,
    modulation: float = 0.3,
    background_phase: float = 0.0,
) -> SpectralField:
    """Smooth background ``a0 (1 + mod e^{i theta} e^{2 pi i x})`` plus single-mode packets.

    ``packets`` maps a (possibly negative) frequency to its complex
    amplitude.  The background has non-constant modulus and stays away
    from zero as long as ``modulation < 1`` and the packets are small.
    """
    modes = {0: complex(background_amp), 1: background_amp * modulation * np.exp(1j * background_phase)}
    for n, z in packets.items():
        modes[n] = modes.get(n, 0.0) + z
    return SpectralField.from_modes(grid, modes)


def scaling_family(
    grid: GridSpec,
    base_k: int = 16,
    levels: int = 3,
    packet_amp: float = 3e-4,
    background_amp: float = 0.5,
    modulation: float = 0.3,
    draws: int = 4,
    seed: int = 0,
) -> list[list[SpectralField]]:
    """Frequency-doubling family ``k = base_k, 2 base_k, ...`` with fixed packet amplitude.

    Each member carries packets at ``k/2, k, 3k/2`` and ``-3k/2``, so every
    resonance behind B1, B2 and B3 is present.  The H^1 norm is dominated
    by the background and barely moves, while the packets' ``||d^2 .||^2``
    grows by exactly 16 per level.  A modulated background (non-constant
    ``|u|``) is the generic case; with ``modulation = 0`` many good terms
    vanish identically.  Level ``j`` holds ``draws`` members with random
    phases; the same phase sets are reused at every level.
    """
    if base_k % 2:
        raise ValueError("base_k must be even")
    top = 3 * base_k * 2 ** (levels - 1) // 2
    if top > grid.max_mode:
        raise ValueError(f"top packet frequency {top} exceeds grid max_mode {grid.max_mode}")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, (draws, 5))
    weights = (1.0, 0.8, 0.6, 0.6)
    out = []
    for level in range(levels):
        k = base_k * 2**level
        freqs = (k // 2, k, 3 * k // 2, -3 * k // 2)
        members = []
        for ph in phases:
            packets = {n: packet_amp * w * np.exp(1j * p) for n, w, p in zip(freqs, weights, ph)}
            members.append(multi_packet(grid, packets, background_amp, modulation, ph[4]))
        out.append(members)
    return out


def cancellation_family(
    grid: GridSpec,
    sigma: float,
    size: int = 24,
    k_min: int = 24,
    h1_scale: float = 0.05,
    seed: int = 0,
) -> list[SpectralField]:
    """Randomised high-frequency family on which B1 and B2 dominate the good terms.

    Member ``j`` has packets at ``k1, k2, k1+k2`` and ``-(k1+k2)`` with
    ``k1`` drawn from ``[k_min, 4 k_min]`` (two octaves), ``k2/k1`` from
    ``[0.15, 1]`` and amplitudes ``h1_scale/|k|`` so the H^1 norm stays put.
    The varying ratio ``k2/k1`` is what separates B1 from B2 (for a plain
    ``k, k, 2k`` triad the two are proportional).  The background level
    ``(h1_scale/100)^(1/(2 sigma+1))`` keeps the quartic-in-k good terms a
    small fraction of the bad ones.
    """
    if not sigma > 1.0:
        raise ValueError(f"sigma must exceed 1, got {sigma!r}")
    if grid.max_mode < 2 * k_min:
        raise ValueError(f"grid max_mode {grid.max_mode} too small for k_min={k_min}")
    rng = np.random.default_rng(seed)
    a0 = (h1_scale / 100.0) ** (1.0 / (2.0 * sigma + 1.0))
    out = []
    for _ in range(size):
        k1 = int(rng.integers(k_min, 4 * k_min + 1))
        k2 = max(2, int(round(rng.uniform(0.15, 1.0) * k1)))
        if k1 + k2 > grid.max_mode:
            k1 = grid.max_mode - k2
        k3 = k1 + k2
        ph = rng.uniform(0.0, 2.0 * np.pi, 5)
        freqs = (k1, k2, k3, -k3)
        packets = {}
        for n, p in zip(freqs, ph):
            packets[n] = packets.get(n, 0.0) + h1_scale / abs(n) * np.exp(1j * p)
        out.append(multi_packet(grid, packets, a0, 0.3, ph[4]))
    return out

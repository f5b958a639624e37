"""Fourier representation of band-limited functions on the unit torus.

Coefficients follow the integral convention

    f_hat(n) = int_0^1 f(x) exp(-2 pi i n x) dx,

so ``f(x) = sum_n f_hat(n) exp(2 pi i n x)`` and derivatives carry the
symbol ``(2 pi i n)^k`` while fractional derivatives and Sobolev weights
use the bare integer frequency ``|n|``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft

__all__ = [
    "GridSpec",
    "SpectralField",
    "CutoffSpec",
    "to_physical",
    "to_spectral",
    "derivative",
    "fractional_derivative",
    "apply_cutoff",
    "integrate",
    "sobolev_norm",
    "homogeneous_seminorm",
    "l2_inner",
    "gagliardo_seminorm",
    "physical_spectrum",
    "save_field",
    "load_field",
    "field_to_json",
    "field_from_json",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Mode range ``[-max_mode, max_mode]`` and the physical sampling grid.

    ``physical_points`` is ``oversample * (2N + 1)`` rounded up to a size
    that scipy's FFT handles efficiently.
    """

    max_mode: int
    oversample: int = 4

    def __post_init__(self):
        if int(self.max_mode) != self.max_mode or self.max_mode < 1:
            raise ValueError(f"max_mode must be an integer >= 1, got {self.max_mode!r}")
        if int(self.oversample) != self.oversample or self.oversample < 1:
            raise ValueError(f"oversample must be an integer >= 1, got {self.oversample!r}")

    @property
    def n_modes(self) -> int:
        return 2 * self.max_mode + 1

    @property
    def physical_points(self) -> int:
        return scipy.fft.next_fast_len(self.oversample * self.n_modes)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.max_mode, self.max_mode + 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.physical_points) / self.physical_points


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A band-limited complex function, stored as ``coeffs[n + N] = f_hat(n)``."""

    grid: GridSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.shape[0] != self.grid.n_modes:
            raise ValueError(
                f"expected {self.grid.n_modes} coefficients for max_mode="
                f"{self.grid.max_mode}, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise FloatingPointError("spectral field has non-finite coefficients")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: GridSpec) -> SpectralField:
        return cls(grid, np.zeros(grid.n_modes, dtype=complex))

    @classmethod
    def from_modes(cls, grid: GridSpec, modes: dict[int, complex]) -> SpectralField:
        c = np.zeros(grid.n_modes, dtype=complex)
        for n, value in modes.items():
            if abs(n) > grid.max_mode:
                raise ValueError(f"mode {n} outside [-{grid.max_mode}, {grid.max_mode}]")
            c[n + grid.max_mode] = value
        return cls(grid, c)

    def mode(self, n: int) -> complex:
        return complex(self.coeffs[n + self.grid.max_mode])

    def with_coeffs(self, coeffs: np.ndarray) -> SpectralField:
        return SpectralField(self.grid, coeffs)

    def __add__(self, other: SpectralField) -> SpectralField:
        _check_same_grid(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        _check_same_grid(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> SpectralField:
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return self.with_coeffs(-self.coeffs)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def resample(self, grid: GridSpec) -> SpectralField:
        """Zero-pad or truncate to another mode range."""
        out = np.zeros(grid.n_modes, dtype=complex)
        m = min(grid.max_mode, self.grid.max_mode)
        out[grid.max_mode - m : grid.max_mode + m + 1] = self.coeffs[
            self.grid.max_mode - m : self.grid.max_mode + m + 1
        ]
        return SpectralField(grid, out)


def _check_same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid.max_mode != b.grid.max_mode:
        raise ValueError(
            f"fields live on different mode ranges ({a.grid.max_mode} vs {b.grid.max_mode})"
        )


@dataclass(frozen=True)
class CutoffSpec:
    """Projection onto modes ``|n| <= floor(1/epsilon)``."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")

    @property
    def K(self) -> int:
        # Guard against 1/eps landing a hair below an integer (e.g. eps = 0.1).
        return int(math.floor(1.0 / self.epsilon + 1e-9))


# Index helpers between the centred [-N, N] layout and FFT ordering.

def _fft_index(grid: GridSpec) -> np.ndarray:
    return np.mod(grid.modes, grid.physical_points)


def coeffs_to_physical(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Array-level :func:`to_physical` (no validation), used in hot loops."""
    buf = np.zeros(grid.physical_points, dtype=complex)
    buf[_fft_index(grid)] = coeffs
    return scipy.fft.ifft(buf, norm="forward")


def physical_to_coeffs(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Array-level :func:`to_spectral`, truncating to the grid's mode range."""
    spec = scipy.fft.fft(samples, norm="forward")
    return spec[_fft_index(grid)]


def to_physical(f: SpectralField) -> np.ndarray:
    """Samples ``sum_n f_hat(n) exp(2 pi i n x_j)`` on ``x_j = j / M``."""
    return coeffs_to_physical(f.coeffs, f.grid)


def to_spectral(samples, grid: GridSpec) -> SpectralField:
    samples = np.asarray(samples, dtype=complex)
    if samples.shape != (grid.physical_points,):
        raise ValueError(
            f"expected {grid.physical_points} samples, got shape {samples.shape}"
        )
    return SpectralField(grid, physical_to_coeffs(samples, grid))


def physical_spectrum(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full (untruncated) spectrum of grid samples: ``(modes, coeffs)``.

    Used for non-band-limited integrands such as ``|u|^(2 sigma)`` whose
    content above the field's mode range still matters.
    """
    m = samples.shape[0]
    return np.fft.fftfreq(m, d=1.0 / m).round().astype(int), scipy.fft.fft(
        samples, norm="forward"
    )


def derivative(f: SpectralField, order: int = 1) -> SpectralField:
    if int(order) != order or order < 0:
        raise ValueError(f"derivative order must be a non-negative integer, got {order!r}")
    return f.with_coeffs(f.coeffs * (2j * np.pi * f.grid.modes) ** order)


def fractional_derivative(f: SpectralField, s: float) -> SpectralField:
    """Fourier multiplier ``|n|^s``; kills the mean for ``s > 0``."""
    if s < 0:
        raise ValueError(f"fractional order must be >= 0, got {s!r}")
    n = np.abs(f.grid.modes).astype(float)
    if s == 0:
        return f.with_coeffs(f.coeffs.copy())
    return f.with_coeffs(f.coeffs * n**s)


def cutoff_mask(grid: GridSpec, cutoff: CutoffSpec | None) -> np.ndarray:
    if cutoff is None:
        return np.ones(grid.n_modes, dtype=bool)
    return np.abs(grid.modes) <= cutoff.K


def apply_cutoff(f: SpectralField, cutoff: CutoffSpec | None) -> SpectralField:
    if cutoff is None:
        return f
    return f.with_coeffs(np.where(cutoff_mask(f.grid, cutoff), f.coeffs, 0.0))


def integrate(samples) -> complex:
    """Integral over the unit torus of uniformly sampled values."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("cannot integrate an empty sample array")
    return complex(np.mean(samples))


def l2_inner(f: SpectralField, g: SpectralField) -> complex:
    """``(f, g) = int f conj(g)``, evaluated exactly through Parseval."""
    _check_same_grid(f, g)
    return complex(np.vdot(g.coeffs, f.coeffs))


def sobolev_norm(f: SpectralField, s: float) -> float:
    n2 = f.grid.modes.astype(float) ** 2
    return float(np.sqrt(np.sum((1.0 + n2) ** s * np.abs(f.coeffs) ** 2)))


def homogeneous_seminorm(f: SpectralField, s: float) -> float:
    n = np.abs(f.grid.modes).astype(float)
    if s == 0:
        weight = np.ones_like(n)
    else:
        weight = n ** (2 * s)
    return float(np.sqrt(np.sum(weight * np.abs(f.coeffs) ** 2)))


def gagliardo_seminorm(f: SpectralField, gamma: float, y_min: float | None = None) -> float:
    """Square root of the truncated double integral

        int_T int_{y_min <= |y| <= 1/2} |f(x+y) - f(x)|^2 / |y|^(1+2 gamma) dy dx

    on the uniform tensor grid ``x_j = j/M``, ``y = k/M``.  The singular
    strip ``|y| < y_min`` is dropped (default: one grid spacing).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")
    m = f.grid.physical_points
    if y_min is None:
        y_min = 1.0 / m
    if not 0.0 < y_min < 0.25:
        raise ValueError(f"y_min must lie in (0, 1/4), got {y_min!r}")
    shifts = np.arange(-(m // 2), m - m // 2)
    y = shifts / m
    keep = np.abs(y) >= y_min * (1.0 - 1e-12)
    y = y[keep]
    # For band-limited f (2N < M) the x-average over the grid of
    # |f(x + y_k) - f(x)|^2 equals sum_n |f_hat(n)|^2 4 sin^2(pi n y_k)
    # exactly, so the tensor quadrature needs no loop over x.
    kernel = 4.0 * np.sin(np.pi * np.outer(f.grid.modes, y)) ** 2
    mean_sq = (np.abs(f.coeffs) ** 2) @ kernel
    total = float(np.sum(mean_sq / np.abs(y) ** (1.0 + 2.0 * gamma)))
    return float(np.sqrt(total / m))


# --- checkpoint files ----------------------------------------------------

def field_to_json(f: SpectralField, **extra) -> dict:
    doc = {
        "schema_version": 1,
        "max_mode": f.grid.max_mode,
        "coeffs": [[float(c.real), float(c.imag)] for c in f.coeffs],
    }
    doc.update(extra)
    return doc


def field_from_json(doc: dict, oversample: int | None = None) -> SpectralField:
    n = int(doc["max_mode"])
    pairs = doc["coeffs"]
    if len(pairs) != 2 * n + 1:
        raise ValueError(f"checkpoint lists {len(pairs)} coefficients, expected {2 * n + 1}")
    coeffs = np.array([complex(re, im) for re, im in pairs])
    grid = GridSpec(n, oversample if oversample is not None else doc.get("oversample", 4))
    return SpectralField(grid, coeffs)


def save_field(f: SpectralField, path, **extra) -> None:
    # json emits repr() floats, which round-trip exactly.
    Path(path).write_text(json.dumps(field_to_json(f, **extra), indent=1) + "\n")


def load_field(path, oversample: int | None = None) -> SpectralField:
    return field_from_json(json.loads(Path(path).read_text()), oversample=oversample)

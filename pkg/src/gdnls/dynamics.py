"""Right-hand sides, time integration and run monitoring for the gDNLS

    u_t = i u_xx - J_eps( |J_eps u|^(2 sigma) d_x J_eps u ),    u(0) = J_eps phi,

on the unit torus.  With ``cutoff=None`` the projections are dropped and
the equation is the full gDNLS, still Galerkin-truncated to the grid.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import functionals as fn
from .spectral import (
    CutoffSpec,
    GridSpec,
    SpectralField,
    apply_cutoff,
    coeffs_to_physical,
    cutoff_mask,
    derivative,
    physical_to_coeffs,
    sobolev_norm,
    to_physical,
    to_spectral,
)

__all__ = [
    "SolverParams",
    "Termination",
    "DiagnosticsRecord",
    "Trajectory",
    "ConfigurationError",
    "NumericalOverflow",
    "nonlinearity_g",
    "rhs_approx",
    "Stepper",
    "step",
    "evolve",
    "detect_blowup",
    "diagnostics",
    "refinement_study",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "l2", "h1", "h2", "hs", "E", "E_eps", "mod_energy", "B1", "B2", "B3")


class ConfigurationError(ValueError):
    """Parameters inconsistent with the grid or with each other."""


class NumericalOverflow(FloatingPointError):
    """A step produced non-finite values."""


class Termination(str, enum.Enum):
    completed = "completed"
    h1_blowup_indicator = "h1_blowup_indicator"
    h2_growth_with_bounded_h1 = "h2_growth_with_bounded_h1"
    numerical_overflow = "numerical_overflow"


@dataclass(frozen=True)
class SolverParams:
    """Settings for one simulation.

    Monitor thresholds left as ``None`` resolve at run start to
    ``1e3 * ||phi||_{H^1}`` and ``1e6 * ||phi||_{H^2}``.  ``alpha``,
    ``beta`` and ``hs_order`` only affect the recorded diagnostics.
    """

    sigma: float
    cutoff: CutoffSpec | None = None
    dt: float = 1e-4
    t_end: float = 1.0
    delta_reg: float = 1e-14
    h1_blowup_threshold: float | None = None
    h2_alarm_threshold: float | None = None
    record_every: int = 100
    alpha: float = 2.0
    beta: float | None = None
    hs_order: float = 1.75

    def __post_init__(self):
        if not self.sigma > 1.0:
            raise ConfigurationError(f"sigma must exceed 1, got {self.sigma!r}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt!r}")
        if not self.t_end > 0 or not self.dt < self.t_end:
            raise ConfigurationError(f"need 0 < dt < t_end, got dt={self.dt}, t_end={self.t_end}")
        if self.delta_reg < 0:
            raise ConfigurationError("delta_reg must be >= 0")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigurationError("record_every must be an integer >= 1")
        for name in ("h1_blowup_threshold", "h2_alarm_threshold"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigurationError(f"{name} must be positive")

    @property
    def beta_value(self) -> float:
        return 2.0 / (self.sigma + 1.0) if self.beta is None else self.beta

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_grid(self, grid: GridSpec) -> None:
        if self.cutoff is not None and self.cutoff.K > grid.max_mode:
            raise ConfigurationError(
                f"cutoff K = {self.cutoff.K} exceeds grid max_mode = {grid.max_mode}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cutoff"] = None if self.cutoff is None else self.cutoff.epsilon
        return d


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    l2: float
    h1: float
    h2: float
    hs: float
    E: float
    E_eps: float
    mod_energy: float
    B1: float
    B2: float
    B3: float

    def as_row(self) -> list[str]:
        return [repr(float(getattr(self, name))) for name in CSV_HEADER]


@dataclass
class Trajectory:
    times: list[float]
    states: list[SpectralField]
    params: SolverParams
    termination: Termination = Termination.completed
    diagnostics: list[DiagnosticsRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> SpectralField:
        return self.states[-1]


# --- right-hand sides ----------------------------------------------------

def nonlinearity_g(f: SpectralField, sigma: float, delta_reg: float = 0.0) -> SpectralField:
    """``g(u) = i |u|^(2 sigma) d_x u`` on the oversampled grid, truncated to the mode range.

    ``delta_reg`` is accepted for signature symmetry; every power here is positive.
    """
    if not sigma > 1.0:
        raise ValueError(f"sigma must exceed 1, got {sigma!r}")
    u = to_physical(f)
    du = to_physical(derivative(f, 1))
    return to_spectral(1j * np.abs(u) ** (2 * sigma) * du, f.grid)


class _Nonlinear:
    """Array-level ``-J(|Ju|^(2 sigma) d Ju)`` for a fixed grid and cutoff."""

    def __init__(self, grid: GridSpec, sigma: float, cutoff: CutoffSpec | None):
        self.grid = grid
        self.sigma = sigma
        self.mask = cutoff_mask(grid, cutoff)
        self.full = bool(self.mask.all())
        self.ik = 2j * np.pi * grid.modes

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        v = coeffs if self.full else np.where(self.mask, coeffs, 0.0)
        vx = coeffs_to_physical(v, self.grid)
        dvx = coeffs_to_physical(self.ik * v, self.grid)
        rho = vx.real**2 + vx.imag**2
        nl = physical_to_coeffs(rho**self.sigma * dvx, self.grid)
        if not self.full:
            nl = np.where(self.mask, nl, 0.0)
        return -nl


def rhs_approx(f: SpectralField, params: SolverParams) -> SpectralField:
    """``i d^2 f - J(|J f|^(2 sigma) d J f)``."""
    params.check_grid(f.grid)
    nonlinear = _Nonlinear(f.grid, params.sigma, params.cutoff)
    linear = 1j * (2j * np.pi * f.grid.modes) ** 2 * f.coeffs
    return f.with_coeffs(linear + nonlinear(f.coeffs))


class Stepper:
    """Integrating-factor RK4 (Lawson) with the dispersion applied exactly.

    Caches the half- and full-step propagators ``exp(-4 pi^2 n^2 i h)``.
    """

    def __init__(self, grid: GridSpec, params: SolverParams):
        params.check_grid(grid)
        self.grid = grid
        self.params = params
        self.nonlinear = _Nonlinear(grid, params.sigma, params.cutoff)
        self.symbol = -1j * (2.0 * np.pi * grid.modes) ** 2
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def _propagators(self, dt: float):
        if dt not in self._cache:
            half = np.exp(0.5 * dt * self.symbol)
            self._cache[dt] = (half, half * half)
        return self._cache[dt]

    def advance(self, coeffs: np.ndarray, dt: float) -> np.ndarray:
        e_half, e_full = self._propagators(dt)
        N = self.nonlinear
        k1 = N(coeffs)
        k2 = N(e_half * (coeffs + 0.5 * dt * k1))
        k3 = N(e_half * coeffs + 0.5 * dt * k2)
        k4 = N(e_full * coeffs + dt * e_half * k3)
        return e_full * coeffs + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)


def step(state: SpectralField, params: SolverParams, dt: float) -> SpectralField:
    """One integrating-factor RK4 step of size ``dt`` (negative ``dt`` runs backwards)."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = Stepper(state.grid, params).advance(state.coeffs, dt)
    if not np.all(np.isfinite(out)):
        raise NumericalOverflow("non-finite state after step")
    return state.with_coeffs(out)


# --- diagnostics and monitors --------------------------------------------

def diagnostics(f: SpectralField, t: float, params: SolverParams) -> DiagnosticsRecord:
    v = apply_cutoff(f, params.cutoff)
    energy_params = fn.ModifiedEnergyParams(
        params.alpha, params.beta_value, params.sigma, params.delta_reg
    )
    # Huge states give inf/nan entries, which the monitors then act on.
    with np.errstate(over="ignore", invalid="ignore"):
        return _record(f, v, t, params, energy_params)


def _record(f, v, t, params, energy_params) -> DiagnosticsRecord:
    return DiagnosticsRecord(
        t=t,
        l2=sobolev_norm(f, 0),
        h1=sobolev_norm(f, 1),
        h2=sobolev_norm(f, 2),
        hs=sobolev_norm(f, params.hs_order),
        E=fn.energy_E(f, params.sigma),
        E_eps=fn.energy_E_eps(f, params.sigma, params.cutoff),
        mod_energy=fn.modified_energy(f, energy_params, params.cutoff),
        B1=fn.bad_B1(v, params.sigma),
        B2=fn.bad_B2(v, params.sigma),
        B3=fn.bad_B3(v, params.sigma, params.delta_reg),
    )


def _thresholds(params: SolverParams, h1_0: float, h2_0: float) -> tuple[float, float]:
    h1 = params.h1_blowup_threshold
    h2 = params.h2_alarm_threshold
    if h1 is None:
        h1 = 1e3 * h1_0 if h1_0 > 0 else math.inf
    if h2 is None:
        h2 = 1e6 * h2_0 if h2_0 > 0 else math.inf
    return h1, h2


def detect_blowup(history: list[DiagnosticsRecord], params: SolverParams) -> Termination:
    """Classify a diagnostics history against the H^1 / H^2 monitor thresholds.

    An H^2 alarm while H^1 stays below its threshold is reported separately:
    on a resolved run it would contradict the blowup alternative.
    """
    if not history:
        raise ValueError("detect_blowup needs a non-empty history")
    h1_limit, h2_limit = _thresholds(params, history[0].h1, history[0].h2)
    for rec in history:
        values = (rec.h1, rec.h2, rec.l2)
        if not all(math.isfinite(v) for v in values):
            return Termination.numerical_overflow
        if rec.h1 > h1_limit:
            return Termination.h1_blowup_indicator
        if rec.h2 > h2_limit:
            return Termination.h2_growth_with_bounded_h1
    return Termination.completed


def evolve(
    phi: SpectralField,
    params: SolverParams,
    record_diagnostics: bool = True,
) -> Trajectory:
    """Integrate from ``J_eps phi`` to ``t_end``, recording every ``record_every`` steps.

    Stops early when a monitor trips or a step overflows; the returned
    trajectory then ends at the last finite recorded state.
    """
    params.check_grid(phi.grid)
    grid = phi.grid
    stepper = Stepper(grid, params)
    u0 = apply_cutoff(phi, params.cutoff)
    traj = Trajectory(times=[0.0], states=[u0], params=params)
    if record_diagnostics:
        traj.diagnostics.append(diagnostics(u0, 0.0, params))
    h1_limit, h2_limit = _thresholds(params, sobolev_norm(u0, 1), sobolev_norm(u0, 2))

    coeffs = u0.coeffs
    n_steps = params.n_steps
    for i in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            coeffs = stepper.advance(coeffs, params.dt)
        if i % params.record_every and i != n_steps:
            continue
        t = i * params.dt
        if not np.all(np.isfinite(coeffs)):
            traj.termination = Termination.numerical_overflow
            log.warning("non-finite state at t=%g; stopping", t)
            break
        state = SpectralField(grid, coeffs)
        traj.times.append(t)
        traj.states.append(state)
        if record_diagnostics:
            traj.diagnostics.append(diagnostics(state, t, params))
        h1 = sobolev_norm(state, 1)
        h2 = sobolev_norm(state, 2)
        if h1 > h1_limit:
            traj.termination = Termination.h1_blowup_indicator
            break
        if h2 > h2_limit:
            traj.termination = Termination.h2_growth_with_bounded_h1
            break
    return traj


# --- epsilon refinement ----------------------------------------------------

@dataclass
class ConvergenceReport:
    epsilons: list[float]
    times: list[float]
    distances_l2: list[float]
    distances_h1: list[float]
    cauchy: bool
    terminations: list[str]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "epsilons": self.epsilons,
            "times": self.times,
            "pairs": [
                {"eps_a": a, "eps_b": b, "d_l2": d0, "d_h1": d1}
                for a, b, d0, d1 in zip(
                    self.epsilons, self.epsilons[1:], self.distances_l2, self.distances_h1
                )
            ],
            "cauchy": self.cauchy,
            "terminations": self.terminations,
        }


def refinement_study(
    phi: SpectralField,
    params: SolverParams,
    epsilons: list[float],
    threads: int = 1,
) -> ConvergenceReport:
    """Run the cutoff equation for each epsilon and compare consecutive runs.

    ``d_j = max_t ||u_{eps_j}(t) - u_{eps_{j+1}}(t)||`` in L^2 and H^1; the
    family is reported Cauchy when the L^2 distances strictly decrease.
    """
    if len(epsilons) < 2:
        raise ConfigurationError("refinement_study needs at least two epsilons")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ConfigurationError("epsilons must be strictly decreasing")
    runs_params = [replace(params, cutoff=CutoffSpec(e)) for e in epsilons]
    for p in runs_params:
        p.check_grid(phi.grid)

    def run(p):
        return evolve(phi, p, record_diagnostics=False)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(run, runs_params))
    else:
        trajs = [run(p) for p in runs_params]

    d_l2, d_h1 = [], []
    for a, b in zip(trajs, trajs[1:]):
        n = min(len(a), len(b))
        diffs = [a.states[i] - b.states[i] for i in range(n)]
        d_l2.append(max(sobolev_norm(d, 0) for d in diffs))
        d_h1.append(max(sobolev_norm(d, 1) for d in diffs))
    cauchy = all(y < x for x, y in zip(d_l2, d_l2[1:]))
    return ConvergenceReport(
        epsilons=list(epsilons),
        times=list(trajs[0].times),
        distances_l2=d_l2,
        distances_h1=d_h1,
        cauchy=cauchy,
        terminations=[t.termination.value for t in trajs],
    )


# --- CSV stream ------------------------------------------------------------

def write_diagnostics_csv(records: list[DiagnosticsRecord], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(rec.as_row())


def read_diagnostics_csv(stream) -> list[DiagnosticsRecord]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    header = tuple(next(reader))
    if header != CSV_HEADER:
        raise ValueError(f"unexpected diagnostics header {header}")
    return [DiagnosticsRecord(*(float(x) for x in row)) for row in reader]


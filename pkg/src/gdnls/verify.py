"""Numerical probes for the identities and inequalities behind the H^2 theory.

Identity probes differentiate functionals along simulated trajectories
with fourth-order finite differences and compare against the claimed
bad-term combinations.  Since good terms are only bounded by
``C(M)(1 + ||u||_{H^2}^2)``, a residual is accepted when, normalised by
that quantity, it does not grow along a frequency-doubling family.
Inequality probes only check boundedness and resolution stability of
sampled ratios; no universal constant is asserted.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import functionals as fn
from .dynamics import (
    ConfigurationError,
    DiagnosticsRecord,
    SolverParams,
    Termination,
    Trajectory,
    evolve,
)
from .spectral import (
    TWO_PI,
    CutoffSpec,
    GridSpec,
    SpectralField,
    apply_cutoff,
    derivative,
    fractional_derivative,
    gagliardo_seminorm,
    homogeneous_seminorm,
    l2_inner,
    physical_spectrum,
    sobolev_norm,
    to_physical,
    to_spectral,
)

__all__ = [
    "ProbeReport",
    "residual_stats",
    "fd_derivative",
    "named_functional",
    "timederiv_probe",
    "LEMMAS",
    "lemma_residuals",
    "lemma_identity_probe",
    "h2_weight",
    "cancellation_scan",
    "gronwall_fit",
    "commutator_probe",
    "chain_rule_probe",
    "gagliardo_probe",
    "hs_growth_probe",
    "small_data_trap_probe",
    "cutoff_props_probe",
    "goodterm_Ik_probe",
    "standard_lemma_setup",
    "standard_cancellation_family",
    "random_fields",
]

SCHEMA_VERSION = 1
VERDICTS = ("pass", "fail", "inconclusive")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class ProbeReport:
    probe_id: str
    sample_count: int
    residual_stats: dict
    estimated_constants: dict[str, float]
    verdict: str
    config: dict = field(default_factory=dict)
    seed: int | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")

    @property
    def exit_code(self) -> int:
        return VERDICTS.index(self.verdict)

    def to_dict(self) -> dict:
        return _json_safe(
            {
                "schema_version": SCHEMA_VERSION,
                "probe_id": self.probe_id,
                "seed": self.seed,
                "samples": self.sample_count,
                "residual_stats": self.residual_stats,
                "estimated_constants": self.estimated_constants,
                "verdict": self.verdict,
                "config": self.config,
                "notes": self.notes,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def residual_stats(values) -> dict:
    """Max, mean and quantiles of ``|values|``; non-finite entries are counted, not averaged."""
    v = np.abs(np.asarray(values, dtype=float).ravel())
    bad = int(np.count_nonzero(~np.isfinite(v)))
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"max": None, "mean": None, "quantiles": {}, "nonfinite": bad}
    q = np.quantile(v, [0.5, 0.9, 0.99])
    return {
        "max": math.inf if bad else float(v.max()),
        "mean": float(v.mean()),
        "quantiles": {"0.5": float(q[0]), "0.9": float(q[1]), "0.99": float(q[2])},
        "nonfinite": bad,
    }


def _pmap(func, items, threads: int):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(x) for x in items]


# --- time derivatives along trajectories -----------------------------------

_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FORWARD0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_FORWARD1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def fd_derivative(values, h: float) -> np.ndarray:
    """Fourth-order derivative of equally spaced samples; one-sided stencils at the ends."""
    y = np.asarray(values, dtype=float)
    n = y.size
    if n < 5:
        raise ValueError(f"need at least 5 samples for a 4th-order stencil, got {n}")
    if not h > 0:
        raise ValueError("sample spacing must be positive")
    out = np.empty(n)
    for i in range(2, n - 2):
        out[i] = _CENTRAL @ y[i - 2 : i + 3]
    out[0] = _FORWARD0 @ y[:5]
    out[1] = _FORWARD1 @ y[:5]
    out[-1] = -(_FORWARD0 @ y[::-1][:5])
    out[-2] = -(_FORWARD1 @ y[::-1][:5])
    return out / h


def _record_spacing(times: Sequence[float]) -> float:
    t = np.asarray(times, dtype=float)
    if t.size < 5:
        raise ValueError(f"trajectory has {t.size} records; at least 5 are needed")
    steps = np.diff(t)
    h = float(steps.mean())
    if not np.allclose(steps, h, rtol=1e-9, atol=0.0):
        raise ValueError("trajectory records are not uniformly spaced")
    return h


def named_functional(
    name: str,
    sigma: float,
    cutoff: CutoffSpec | None = None,
    delta_reg: float = 1e-14,
    alpha: float = 2.0,
    beta: float | None = None,
) -> Callable[[SpectralField], float]:
    """Scalar functional by name.

    ``mass``, ``E``, ``E_eps``, ``h2sq``, ``hs_sq:<s>``, ``P1``, ``P2``,
    ``P3``, ``mod_energy`` and ``mod_energy_ref``.  The ``P_i`` are
    evaluated at ``v = J_eps u``.
    """
    if beta is None:
        beta = 2.0 / (sigma + 1.0)

    def corr(i):
        return lambda f: fn.correction_terms(apply_cutoff(f, cutoff), sigma, delta_reg)[i]

    table = {
        "mass": lambda f: sobolev_norm(f, 0) ** 2,
        "E": lambda f: fn.energy_E(f, sigma),
        "E_eps": lambda f: fn.energy_E_eps(f, sigma, cutoff),
        "h2sq": fn.h2_seminorm_sq,
        "P1": corr(0),
        "P2": corr(1),
        "P3": corr(2),
        "mod_energy": lambda f: fn.modified_energy(
            f, fn.ModifiedEnergyParams(alpha, beta, sigma, delta_reg), cutoff
        ),
        "mod_energy_ref": lambda f: fn.modified_energy_reference(f, sigma, cutoff, delta_reg),
    }
    if name.startswith("hs_sq:"):
        s = float(name.split(":", 1)[1])
        return lambda f: sobolev_norm(f, s) ** 2
    if name not in table:
        raise ValueError(f"unknown functional {name!r}; choose from {sorted(table)} or hs_sq:<s>")
    return table[name]


def timederiv_probe(traj: Trajectory, functional) -> np.ndarray:
    """``dF/dt`` at every record of ``traj``.

    ``functional`` is a name understood by :func:`named_functional` (built
    with the trajectory's own parameters) or any callable on fields.
    """
    h = _record_spacing(traj.times)
    if isinstance(functional, str):
        p = traj.params
        functional = named_functional(
            functional, p.sigma, p.cutoff, p.delta_reg, p.alpha, p.beta_value
        )
    return fd_derivative([functional(f) for f in traj.states], h)


# --- lemma identities --------------------------------------------------------

# LHS functional and the claimed bad-term combination in (B1, B2, B3).
# "energy" is the modified energy itself, whose derivative has no bad part.
LEMMAS: dict[str, tuple[str, Callable[[float], tuple[float, float, float]]]] = {
    "h2": ("h2sq", lambda s: (-4.0, -2.0, 0.0)),
    "P1": ("P1", lambda s: (-2.0, -2.0, 0.0)),
    "P2": ("P2", lambda s: (0.0, s + 1.0, 3.0)),
    "P3": ("P3", lambda s: (0.0, 0.0, -6.0)),
    "energy": ("mod_energy", lambda s: (0.0, 0.0, 0.0)),
    "energy_ref": ("mod_energy_ref", lambda s: (0.0, 0.0, 0.0)),
}


def h2_weight(f: SpectralField) -> float:
    """``1 + ||u||_{L^2}^2 + ||d^2 u||_{L^2}^2`` with true derivatives on the unit torus.

    This is the ``1 + ||u||_{H^2}^2`` against which good terms are measured;
    using the derivative (not the bare-frequency) scale keeps the ``1`` from
    swamping the H^2 part on fields with ``|n| >> 1``.
    """
    return 1.0 + sobolev_norm(f, 0) ** 2 + fn.h2_seminorm_sq(f)


def _bad_terms(v: SpectralField, sigma: float, delta_reg: float) -> np.ndarray:
    return np.array(
        [fn.bad_B1(v, sigma), fn.bad_B2(v, sigma), fn.bad_B3(v, sigma, delta_reg)]
    )


def lemma_residuals(traj: Trajectory, lemma: str, delta_reg: float | None = None):
    """Residual ``R(t) = dF/dt - claimed`` along ``traj``.

    Returns ``(R, h2_weight(u), dF/dt)`` as arrays over the records.
    """
    if lemma not in LEMMAS:
        raise ValueError(f"unknown lemma {lemma!r}; choose from {sorted(LEMMAS)}")
    p = traj.params
    delta = p.delta_reg if delta_reg is None else delta_reg
    name, coeffs = LEMMAS[lemma]
    F = named_functional(name, p.sigma, p.cutoff, delta, p.alpha, p.beta_value)
    h = _record_spacing(traj.times)
    dF = fd_derivative([F(f) for f in traj.states], h)
    c = np.array(coeffs(p.sigma))
    claimed = np.array(
        [c @ _bad_terms(apply_cutoff(f, p.cutoff), p.sigma, delta) for f in traj.states]
    )
    norm = np.array([h2_weight(f) for f in traj.states])
    return dF - claimed, norm, dF


def _short_run(phi: SpectralField, params: SolverParams, dt: float) -> Trajectory:
    every = max(1, int(round(params.dt / dt)))
    p = replace(params, dt=dt, record_every=every)
    traj = evolve(phi, p, record_diagnostics=False)
    if traj.termination is not Termination.completed:
        raise ConfigurationError(f"probe trajectory stopped early: {traj.termination.value}")
    # Report spacing and parameters of the coarse run so both resolutions line up.
    traj.params = replace(params, record_every=1)
    return traj


def lemma_identity_probe(
    family: Sequence[SpectralField | Sequence[SpectralField]],
    lemma: str,
    params: SolverParams,
    growth_limit: float = 2.0,
    stability_tol: float = 0.10,
    atol: float = 1e-9,
    delta_values: Sequence[float] = (),
    threads: int = 1,
    seed: int | None = None,
) -> ProbeReport:
    """Scaling test of one identity along a frequency-doubling family.

    ``family`` lists the levels in order of increasing frequency; a level
    is one field or several (e.g. different phases).  Each field is
    integrated over ``params.t_end`` with every step recorded and scored
    by ``max_t |R(t)| / h2_weight(u(t))``; a level's score is the largest
    of its fields.  The identity passes when consecutive level scores grow
    by less than ``growth_limit``.  The whole computation is repeated at ``dt/2``; a
    score change above ``stability_tol`` (relative, plus ``atol``) makes
    the verdict inconclusive.  ``delta_values`` re-evaluates the residual
    with other regularisation levels and reports the largest relative
    change of the scores.
    """
    if len(family) < 2:
        raise ValueError("the scaling test needs at least two family members")
    if lemma not in LEMMAS:
        raise ValueError(f"unknown lemma {lemma!r}; choose from {sorted(LEMMAS)}")

    def member(phi):
        out = {}
        for tag, dt in (("full", params.dt), ("half", 0.5 * params.dt)):
            traj = _short_run(phi, params, dt)
            R, norm, dF = lemma_residuals(traj, lemma)
            out[tag] = (float(np.max(np.abs(R) / norm)), float(np.max(np.abs(dF))))
            if tag == "full":
                out["h1"] = max(sobolev_norm(f, 1) for f in traj.states)
                out["h2sq"] = float(norm[0] - 1.0)
                out["delta"] = [
                    float(np.max(np.abs(lemma_residuals(traj, lemma, d)[0]) / norm))
                    for d in delta_values
                ]
                out["series"] = (np.abs(R) / norm).tolist()
        return out

    levels = [[x] if isinstance(x, SpectralField) else list(x) for x in family]
    flat = [f for level in levels for f in level]
    bounds = np.cumsum([0] + [len(level) for level in levels])
    per_field = _pmap(member, flat, threads)
    results = []
    for lo, hi in zip(bounds, bounds[1:]):
        group = per_field[lo:hi]
        results.append(
            {
                "full": tuple(max(r["full"][i] for r in group) for i in range(2)),
                "half": tuple(max(r["half"][i] for r in group) for i in range(2)),
                "h1": max(r["h1"] for r in group),
                "h2sq": min(r["h2sq"] for r in group),
                "delta": [max(r["delta"][j] for r in group) for j in range(len(delta_values))],
                "series": [x for r in group for x in r["series"]],
            }
        )
    scores = np.array([r["full"][0] for r in results])
    scores_half = np.array([r["half"][0] for r in results])
    raw = np.array([r["full"][1] for r in results])
    change = np.abs(scores_half - scores) / np.maximum(scores, atol)
    stable = bool(np.all(np.abs(scores_half - scores) <= stability_tol * scores + atol))

    growth = []
    for a, b in zip(scores, scores[1:]):
        growth.append(1.0 if max(a, b) <= atol else b / max(a, atol))
    raw_growth = [b / a if a > 0 else math.inf for a, b in zip(raw, raw[1:])]
    h2_growth = [
        b["h2sq"] / a["h2sq"] if a["h2sq"] > 0 else math.inf for a, b in zip(results, results[1:])
    ]

    consts = {
        "C_M": float(scores.max()),
        "growth_max": float(max(growth)),
        "raw_growth_min": float(min(raw_growth)),
        "h2sq_growth_min": float(min(h2_growth)),
        "h1_ceiling": float(max(r["h1"] for r in results)),
        "dt_halving_change": float(change.max()),
    }
    notes = []
    if delta_values:
        sens = 0.0
        for r in results:
            base = r["full"][0]
            for d in r["delta"]:
                sens = max(sens, abs(d - base) / max(base, atol))
        consts["delta_sensitivity"] = sens
        notes.append(
            "delta_sensitivity: max relative score change over delta_reg in "
            f"{list(delta_values)} vs {params.delta_reg}"
        )

    if not stable:
        verdict = "inconclusive"
        notes.append("residual changed by more than the tolerance under dt halving")
    elif max(growth) < growth_limit:
        verdict = "pass"
    else:
        verdict = "fail"
    series = np.concatenate([r["series"] for r in results])
    return ProbeReport(
        probe_id=_lemma_probe_id(lemma),
        sample_count=len(flat),
        residual_stats=residual_stats(series),
        estimated_constants=consts,
        verdict=verdict,
        config={
            "lemma": lemma,
            "params": params.to_dict(),
            "growth_limit": growth_limit,
            "stability_tol": stability_tol,
            "scores": scores.tolist(),
            "growth": growth,
        },
        seed=seed,
        notes=notes,
    )


# Public probe identifiers of the identities.
PROBE_IDS = {
    "h2": "lemma26",
    "P1": "lemma27",
    "P2": "lemma28",
    "P3": "lemma29",
    "energy": "modified_energy",
    "energy_ref": "modified_energy_ref",
}


def _lemma_probe_id(lemma: str) -> str:
    return PROBE_IDS[lemma]


# --- cancellation scan ---------------------------------------------------------

def _top_mode(f: SpectralField) -> int:
    nz = np.nonzero(np.abs(f.coeffs) > 0)[0]
    return int(np.max(np.abs(f.grid.modes[nz]))) if nz.size else 1


def _derivative_sample(phi: SpectralField, params: SolverParams, step_scale: float):
    """Central derivatives of ``||d2u||^2, P1, P2, P3`` at the middle of a 5-record run."""
    h = step_scale / max(_top_mode(phi), 1) ** 2
    p = replace(params, dt=h, t_end=4.0 * h, record_every=1)
    traj = evolve(phi, p, record_diagnostics=False)
    if len(traj) != 5:
        raise ConfigurationError("derivative sample run stopped early")
    names = ("h2sq", "P1", "P2", "P3")
    values = [
        [named_functional(n, p.sigma, p.cutoff, p.delta_reg)(f) for f in traj.states]
        for n in names
    ]
    d = np.array([_CENTRAL @ np.asarray(v) / h for v in values])
    mid = traj.states[2]
    v = apply_cutoff(mid, p.cutoff)
    regress = np.array(
        [fn.bad_B1(v, p.sigma), fn.bad_B2(v, p.sigma), h2_weight(mid)]
    )
    return d, regress


def cancellation_scan(
    family: Sequence[SpectralField],
    sigma: float,
    alphas: Sequence[float] | None = None,
    betas: Sequence[float] | None = None,
    params: SolverParams | None = None,
    tol: float = 0.2,
    cond_limit: float = 1e3,
    step_scale: float = 1e-5,
    threads: int = 1,
    seed: int | None = None,
) -> ProbeReport:
    """Least-squares identification of the bad-term content of ``d/dt E_{alpha,beta}``.

    For every member the derivatives of ``||d2u||^2`` and the three
    correction integrals are taken by a central stencil over a short run
    with step ``step_scale / k_top^2``.  ``dE/dt`` for each ``(alpha, beta)``
    in the grid is regressed on ``(B1, B2, h2_weight(u))``; the theory
    predicts coefficients ``(2 alpha - 4, 2 alpha - beta (sigma+1) - 2)``.

    Verdict: pass iff both fitted bad-term coefficients are within ``tol``
    of zero at every grid point.  ``canonical_unique`` records whether
    they vanish at the canonical point and nowhere else in the grid
    (the canonical point and ``(0, 0)`` are always added to the fit list).
    """
    if params is None:
        params = SolverParams(sigma=sigma, dt=1e-6, t_end=1e-5)
    elif params.sigma != sigma:
        params = replace(params, sigma=sigma)
    canonical = (2.0, 2.0 / (sigma + 1.0))
    if alphas is None:
        alphas = [canonical[0]]
    if betas is None:
        betas = [canonical[1]]
    requested = [(float(a), float(b)) for a in alphas for b in betas]
    points = list(dict.fromkeys(requested + [canonical, (0.0, 0.0)]))

    samples = _pmap(lambda f: _derivative_sample(f, params, step_scale), family, threads)
    D = np.array([s[0] for s in samples])
    X = np.array([s[1] for s in samples])
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    cond = float(np.linalg.cond(X / scale))

    fits = {}
    rel_res = []
    for a, b in points:
        y = D[:, 0] - a * D[:, 1] - b * D[:, 2] - 0.5 * b * D[:, 3]
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        ny = np.linalg.norm(y)
        rel = float(np.linalg.norm(y - X @ coef) / ny) if ny > 0 else 0.0
        rel_res.append(rel)
        fits[(a, b)] = (float(coef[0]), float(coef[1]), rel)

    def vanishes(pt):
        c1, c2, _ = fits[pt]
        return abs(c1) <= tol and abs(c2) <= tol

    def is_canonical(pt):
        return abs(pt[0] - canonical[0]) < 1e-12 and abs(pt[1] - canonical[1]) < 1e-12

    unique = all(vanishes(pt) == is_canonical(pt) for pt in points)
    consts = {"condition_number": cond, "canonical_unique": float(unique)}
    for a, b in points:
        c1, c2, rel = fits[(a, b)]
        tag = f"a={a:.6g},b={b:.6g}"
        consts[f"B1_coef[{tag}]"] = c1
        consts[f"B2_coef[{tag}]"] = c2
        consts[f"B1_theory[{tag}]"] = 2 * a - 4
        consts[f"B2_theory[{tag}]"] = 2 * a - b * (sigma + 1) - 2
        consts[f"rel_residual[{tag}]"] = rel

    notes = []
    if cond > cond_limit or not np.all(np.isfinite(X)):
        verdict = "inconclusive"
        notes.append(f"regression ill-conditioned (condition number {cond:.3g})")
    else:
        verdict = "pass" if all(vanishes(pt) for pt in requested) else "fail"
    return ProbeReport(
        probe_id="cancellation",
        sample_count=len(family),
        residual_stats=residual_stats(rel_res),
        estimated_constants=consts,
        verdict=verdict,
        config={
            "sigma": sigma,
            "grid_points": requested,
            "tol": tol,
            "cond_limit": cond_limit,
            "step_scale": step_scale,
        },
        seed=seed,
        notes=notes,
    )


# --- Gronwall envelope ---------------------------------------------------------

def _growth_rate(t: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of ``log max_{s<=t} y(s)``, floored at zero."""
    env = np.maximum.accumulate(y)
    if t[-1] <= t[0] or np.allclose(env, env[0], rtol=1e-12, atol=0.0):
        return 0.0
    slope = np.polyfit(t, np.log(env), 1)[0]
    return max(float(slope), 0.0)


def gronwall_fit(
    diag: Sequence[DiagnosticsRecord],
    sigma: float,
    stability_tol: float = 0.25,
    h1_growth_limit: float = 10.0,
    seed: int | None = None,
) -> ProbeReport:
    """Exponential envelope ``||u||_{H^2}^2 <= C1 (1 + ||phi||_{H^2}^2) e^{C2 t}``.

    ``C2`` is the growth rate of the running maximum of ``||u||_{H^2}^2``
    (log-linear least squares, floored at 0) and ``C1`` the smallest
    prefactor making the envelope dominate every record.  The fit is
    repeated on the first half of the records; the verdict passes when the
    two ``C2`` agree to ``stability_tol`` relative, or differ by less than
    ``0.05 / t_end`` (an ``e^0.05`` factor over the run, i.e. no resolvable
    growth).  A run whose H^1 norm grows by more than ``h1_growth_limit``
    violates the bounded-H^1 hypothesis and is inconclusive.
    """
    if len(diag) < 4:
        raise ValueError("gronwall_fit needs at least 4 diagnostics records")
    t = np.array([r.t for r in diag], dtype=float)
    y = np.array([r.h2 for r in diag], dtype=float) ** 2
    h1 = np.array([r.h1 for r in diag], dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(h1))):
        return ProbeReport("gronwall", len(diag), residual_stats([]), {}, "inconclusive",
                           {"sigma": sigma}, seed, ["non-finite diagnostics"])
    y0 = y[0]
    c2 = _growth_rate(t, y)
    half = max(4, len(t) // 2)
    c2_half = _growth_rate(t[:half], y[:half])
    c1 = float(np.max(y * np.exp(-c2 * (t - t[0]))) / (1.0 + y0))
    envelope = c1 * (1.0 + y0) * np.exp(c2 * (t - t[0]))
    span = t[-1] - t[0]
    atol = 0.05 / span if span > 0 else math.inf
    stable = abs(c2 - c2_half) <= stability_tol * max(c2, c2_half) or abs(c2 - c2_half) < atol
    h1_ratio = float(h1.max() / h1[0]) if h1[0] > 0 else (1.0 if h1.max() == 0 else math.inf)
    consts = {"C1": c1, "C2": c2, "C2_half_window": c2_half, "h1_ratio": h1_ratio}
    notes = []
    if h1_ratio > h1_growth_limit:
        verdict = "inconclusive"
        notes.append("H^1 norm not bounded along the run")
    else:
        verdict = "pass" if stable and np.all(y <= envelope * (1 + 1e-12)) else "fail"
    margin = (envelope - y) / np.maximum(envelope, 1e-300)
    return ProbeReport(
        probe_id="gronwall",
        sample_count=len(diag),
        residual_stats=residual_stats(margin),
        estimated_constants=consts,
        verdict=verdict,
        config={"sigma": sigma, "stability_tol": stability_tol, "t_end": float(t[-1])},
        seed=seed,
        notes=notes,
    )


# --- Appendix-type inequalities ----------------------------------------------

def _doubled(f: SpectralField) -> SpectralField:
    """Same function on a mode range twice as large, so products stay exact."""
    return f.resample(GridSpec(2 * f.grid.max_mode, f.grid.oversample))


def _product(f: SpectralField, g: SpectralField) -> SpectralField:
    return to_spectral(to_physical(f) * to_physical(g), f.grid)


def commutator_ratio(u: SpectralField, v: SpectralField, s: float, gamma: float) -> float:
    """``||D^s(uv) - u D^s v|| / (||u||_{H^s}||v||_{H^gamma} + ||u||_{H^{gamma+1}}||v||_{H^{s-1}})``."""
    U, V = _doubled(u), _doubled(v)
    lhs = fractional_derivative(_product(U, V), s) - _product(U, fractional_derivative(V, s))
    rhs = sobolev_norm(u, s) * sobolev_norm(v, gamma) + sobolev_norm(
        u, gamma + 1.0
    ) * sobolev_norm(v, s - 1.0)
    return lhs.l2_norm() / rhs if rhs > 0 else 0.0


def chain_rule_ratio(u: SpectralField, s: float, sigma: float) -> float:
    """``||D^s |u|^(2 sigma)||`` over the two-term bound, L^inf norms from grid samples."""
    samples = to_physical(u)
    modes, spec = physical_spectrum(np.abs(samples) ** (2 * sigma))
    lhs = math.sqrt(float(np.sum(np.abs(modes).astype(float) ** (2 * s) * np.abs(spec) ** 2)))
    u_inf = float(np.max(np.abs(samples)))
    du_inf = float(np.max(np.abs(to_physical(derivative(u)))))
    rhs = u_inf ** (2 * (sigma - 1)) * du_inf * homogeneous_seminorm(
        u, s - 1.0
    ) + u_inf ** (2 * sigma - 1) * homogeneous_seminorm(u, s)
    return lhs / rhs if rhs > 0 else 0.0


def _truncate(f: SpectralField, max_mode: int) -> SpectralField:
    return f.resample(GridSpec(max_mode, f.grid.oversample))


def _n_stability_report(
    probe_id: str,
    fine: np.ndarray,
    coarse: np.ndarray,
    growth_tol: float,
    config: dict,
    seed: int | None,
    lower: bool = False,
) -> ProbeReport:
    """Boundedness plus resolution stability of sampled ratios.

    Passes when all ratios are finite and the maximum (and, with ``lower``,
    the reciprocal of the minimum) grows by less than ``growth_tol`` from
    the coarse to the fine resolution.
    """
    finite = bool(np.all(np.isfinite(fine)) and np.all(np.isfinite(coarse)))
    growth = float(fine.max() / coarse.max() - 1.0) if coarse.max() > 0 else math.inf
    consts = {
        "max_ratio_fine": float(fine.max()),
        "max_ratio_coarse": float(coarse.max()),
        "growth_under_doubling": growth,
    }
    ok = finite and growth < growth_tol
    if lower:
        low = float(coarse.min() / fine.min() - 1.0) if fine.min() > 0 else math.inf
        consts.update(
            min_ratio_fine=float(fine.min()),
            min_ratio_coarse=float(coarse.min()),
            lower_growth_under_doubling=low,
        )
        ok = ok and low < growth_tol
    return ProbeReport(
        probe_id=probe_id,
        sample_count=int(fine.size),
        residual_stats=residual_stats(fine),
        estimated_constants=consts,
        verdict="pass" if ok else "fail",
        config=dict(config, growth_tol=growth_tol),
        seed=seed,
    )


def commutator_probe(
    pairs: Sequence[tuple[SpectralField, SpectralField]],
    s: float = 1.75,
    gamma: float = 0.75,
    growth_tol: float = 0.10,
    threads: int = 1,
    seed: int | None = None,
) -> ProbeReport:
    """Commutator ratios on the given pairs and on their truncations to half the modes."""
    if not s > 1.0:
        raise ValueError(f"s must exceed 1, got {s!r}")
    if not gamma > 0.5:
        raise ValueError(f"gamma must exceed 1/2, got {gamma!r}")
    if not pairs:
        raise ValueError("commutator_probe needs at least one pair")
    half = pairs[0][0].grid.max_mode // 2

    def ratios(pair):
        u, v = pair
        return (
            commutator_ratio(u, v, s, gamma),
            commutator_ratio(_truncate(u, half), _truncate(v, half), s, gamma),
        )

    r = np.array(_pmap(ratios, pairs, threads))
    return _n_stability_report(
        "commutator", r[:, 0], r[:, 1], growth_tol, {"s": s, "gamma": gamma}, seed
    )


def chain_rule_probe(
    fields: Sequence[SpectralField],
    s: float = 1.6,
    sigma: float = 1.5,
    growth_tol: float = 0.10,
    threads: int = 1,
    seed: int | None = None,
) -> ProbeReport:
    """Fractional chain-rule ratios, N-stability checked by truncation to half the modes."""
    if not 1.5 < s < 2.0:
        raise ValueError(f"s must lie in (3/2, 2), got {s!r}")
    if not sigma > 1.0:
        raise ValueError(f"sigma must exceed 1, got {sigma!r}")
    if not fields:
        raise ValueError("chain_rule_probe needs at least one field")
    half = fields[0].grid.max_mode // 2

    def ratios(f):
        return chain_rule_ratio(f, s, sigma), chain_rule_ratio(_truncate(f, half), s, sigma)

    r = np.array(_pmap(ratios, fields, threads))
    return _n_stability_report(
        "chainrule", r[:, 0], r[:, 1], growth_tol, {"s": s, "sigma": sigma}, seed
    )


def gagliardo_probe(
    fields: Sequence[SpectralField],
    gamma: float = 0.6,
    growth_tol: float = 0.10,
    threads: int = 1,
    seed: int | None = None,
) -> ProbeReport:
    """Two-sided equivalence of the Gagliardo seminorm and ``||D^gamma f||``.

    Ratios are formed for mean-free fields (both sides vanish on constants)
    and checked for boundedness above and below, with both extremes stable
    under halving the mode range.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")
    if not fields:
        raise ValueError("gagliardo_probe needs at least one field")
    half = fields[0].grid.max_mode // 2

    def ratio(f):
        c = f.coeffs.copy()
        c[f.grid.max_mode] = 0.0
        f = f.with_coeffs(c)
        d = homogeneous_seminorm(f, gamma)
        return gagliardo_seminorm(f, gamma) / d if d > 0 else math.nan

    def both(f):
        return ratio(f), ratio(_truncate(f, half))

    r = np.array(_pmap(both, fields, threads))
    r = r[np.all(np.isfinite(r), axis=1)]
    return _n_stability_report("gagliardo", r[:, 0], r[:, 1], growth_tol, {"gamma": gamma}, seed,
                               lower=True)


# --- H^s growth envelope -------------------------------------------------------

def hs_growth_probe(
    family: Sequence[SpectralField],
    params: SolverParams,
    s: float = 1.75,
    epsilons: Sequence[float] = (1 / 16, 1 / 32, 1 / 64),
    spread_tol: float = 0.25,
    threads: int = 1,
    seed: int | None = None,
) -> ProbeReport:
    """Differential inequality ``d/dt ||u||_{H^s}^2 <= K ||u||_{H^s}^(2 sigma + 2)``.

    For each epsilon, ``K_eps`` is the largest observed ratio over the
    family and ``c_eps = sigma K_eps``; the envelope
    ``||u||_{H^s}^2 <= (||u(0)||_{H^s}^(-2 sigma) - c t)^(-1/sigma)`` is then
    checked on every record.  Passes when all ratios are finite, every
    envelope holds and ``(max c - min c) / max c < spread_tol``.
    """
    if not 1.5 < s < 2.0:
        raise ValueError(f"s must lie in (3/2, 2), got {s!r}")
    sigma = params.sigma

    def run(job):
        eps, phi = job
        p = replace(params, cutoff=CutoffSpec(eps))
        traj = evolve(phi, p, record_diagnostics=False)
        y = np.array([sobolev_norm(f, s) ** 2 for f in traj.states])
        t = np.array(traj.times)
        dy = fd_derivative(y, t[1] - t[0])
        ratio = dy / np.maximum(y, 1e-300) ** (sigma + 1)
        return eps, t, y, ratio, traj.termination

    jobs = [(e, f) for e in epsilons for f in family]
    out = _pmap(run, jobs, threads)
    if any(o[4] is not Termination.completed for o in out):
        return ProbeReport("hsgrowth", len(jobs), residual_stats([]), {}, "inconclusive",
                           {"s": s, "sigma": sigma}, seed, ["a run stopped before t_end"])
    consts = {}
    cs = []
    envelope_ok = True
    all_ratios = []
    for eps in epsilons:
        rows = [o for o in out if o[0] == eps]
        K = max(0.0, max(float(np.max(o[3])) for o in rows))
        c = sigma * K
        cs.append(c)
        consts[f"c[eps={eps:.6g}]"] = c
        for _, t, y, ratio, _ in rows:
            all_ratios.append(ratio)
            base = y[0] ** (-sigma) - c * t
            bound = np.where(base > 0, np.abs(base) ** (-1.0 / sigma), np.inf)
            envelope_ok &= bool(np.all(y <= bound * (1 + 1e-9)))
    cs = np.array(cs)
    spread = float((cs.max() - cs.min()) / cs.max()) if cs.max() > 0 else 0.0
    consts["c_spread"] = spread
    finite = all(np.all(np.isfinite(r)) for r in all_ratios)
    verdict = "pass" if finite and envelope_ok and spread < spread_tol else "fail"
    return ProbeReport(
        probe_id="hsgrowth",
        sample_count=len(jobs),
        residual_stats=residual_stats(np.concatenate(all_ratios)),
        estimated_constants=consts,
        verdict=verdict,
        config={"s": s, "sigma": sigma, "epsilons": list(epsilons), "spread_tol": spread_tol,
                "params": params.to_dict()},
        seed=seed,
    )


# --- small-data trapping -------------------------------------------------------

def small_data_trap_probe(
    family: Sequence[SpectralField],
    params: SolverParams,
    c_est: float,
    threads: int = 1,
    seed: int | None = None,
) -> ProbeReport:
    """Long runs from data below the trapping radius stay below ``m = threshold_m``.

    Raises :class:`ConfigurationError` when some initial datum is not
    below ``trap_delta(sigma, c_est)``: such data lie outside the
    hypothesis rather than falsify it.
    """
    sigma = params.sigma
    m = fn.threshold_m(sigma, c_est)
    delta = fn.trap_delta(sigma, c_est)
    for phi in family:
        if sobolev_norm(apply_cutoff(phi, params.cutoff), 1) >= delta:
            raise ConfigurationError(
                f"initial H^1 norm {sobolev_norm(phi, 1):.3g} is not below the trap radius {delta:.3g}"
            )

    def run(phi):
        traj = evolve(phi, params, record_diagnostics=False)
        h1 = np.array([sobolev_norm(f, 1) for f in traj.states])
        return h1, traj.termination

    out = _pmap(run, family, threads)
    sup = np.array([h1.max() for h1, _ in out])
    init = np.array([h1[0] for h1, _ in out])
    ratio = np.where(init > 0, sup / np.where(init > 0, init, 1.0), 1.0)
    completed = all(t is Termination.completed for _, t in out)
    trapped = bool(np.all(sup < m)) and completed
    return ProbeReport(
        probe_id="smalldata",
        sample_count=len(family),
        residual_stats=residual_stats(sup / m),
        estimated_constants={
            "c_est": c_est,
            "m": m,
            "trap_delta": delta,
            "max_sup_h1": float(sup.max()),
            "max_h1_ratio": float(ratio.max()),
        },
        verdict="pass" if trapped else "fail",
        config={"params": params.to_dict()},
        seed=seed,
    )


# --- cutoff operator ---------------------------------------------------------------

def cutoff_props_probe(
    fields: Sequence[SpectralField],
    epsilons: Sequence[float] = (0.5, 0.3, 0.1, 1 / 16),
    s: float = 1.5,
    rtol: float = 1e-12,
    seed: int | None = None,
) -> ProbeReport:
    """The five projection properties on every field and cutoff level.

    Idempotence is checked exactly; self-adjointness and contraction to
    ``rtol``; ``||J f||_{H^s} <= 2^(s/2) eps^-s ||f||`` (the constant from
    ``1 + K^2 <= 2 eps^-2``); and ``||J f - f||_{H^s}`` non-increasing as
    eps decreases through dyadic levels, reaching zero once ``K >= N``.
    """
    if not fields:
        raise ValueError("cutoff_props_probe needs at least one field")
    rng = np.random.default_rng(seed)
    failures = {k: 0 for k in ("idempotent", "self_adjoint", "contraction", "hs_bound", "convergence")}
    worst_bound = 0.0
    worst_adj = 0.0
    for f in fields:
        g = f.with_coeffs(rng.standard_normal(f.grid.n_modes) + 1j * rng.standard_normal(f.grid.n_modes))
        nf = f.l2_norm()
        for eps in epsilons:
            c = CutoffSpec(eps)
            jf = apply_cutoff(f, c)
            if not np.array_equal(apply_cutoff(jf, c).coeffs, jf.coeffs):
                failures["idempotent"] += 1
            adj = abs(l2_inner(jf, g) - l2_inner(f, apply_cutoff(g, c)))
            rel = adj / max(nf * g.l2_norm(), 1e-300)
            worst_adj = max(worst_adj, rel)
            if rel > rtol:
                failures["self_adjoint"] += 1
            if jf.l2_norm() > nf * (1 + rtol):
                failures["contraction"] += 1
            if nf > 0:
                b = sobolev_norm(jf, s) / (eps ** (-s) * nf)
                worst_bound = max(worst_bound, b)
                if b > 2 ** (s / 2) * (1 + rtol):
                    failures["hs_bound"] += 1
        levels = [2.0 ** -j for j in range(1, int(math.log2(f.grid.max_mode)) + 2)]
        tails = [sobolev_norm(f - apply_cutoff(f, CutoffSpec(e)), s) for e in levels]
        monotone = all(b <= a * (1 + rtol) + 1e-300 for a, b in zip(tails, tails[1:]))
        if not monotone or tails[-1] > rtol * max(sobolev_norm(f, s), 1e-300):
            failures["convergence"] += 1
    consts = {f"failures_{k}": float(v) for k, v in failures.items()}
    consts.update(max_hs_bound_ratio=worst_bound, max_adjoint_defect=worst_adj)
    return ProbeReport(
        probe_id="cutoff_props",
        sample_count=len(fields),
        residual_stats=residual_stats([worst_adj]),
        estimated_constants=consts,
        verdict="pass" if not any(failures.values()) else "fail",
        config={"epsilons": list(epsilons), "s": s, "rtol": rtol},
        seed=seed,
    )


# --- I_k good terms ------------------------------------------------------------

def goodterm_Ik_probe(
    fields: Sequence[SpectralField],
    sigma: float,
    delta_reg: float = 1e-14,
    growth_tol: float = 1.0,
    seed: int | None = None,
) -> ProbeReport:
    """``|I_k| <= int |d2u||du|^3|u|^(2(sigma-1))`` pointwise in the family, and the
    ratio ``|I_k| / (||u||_{H^2}^2 ||u||_{H^1}^(2 sigma))`` bounded.

    The family is split in two halves by its H^2 norm; the verdict passes
    when the pointwise bound always holds and the largest ratio in the
    rougher half exceeds that of the smoother half by less than
    ``growth_tol`` (relative).
    """
    if not fields:
        raise ValueError("goodterm_Ik_probe needs at least one field")
    bound_ok = True
    ratios = []
    h2 = []
    for f in fields:
        b = fn.good_Ik_bound(f, sigma)
        denom = fn.h2_seminorm_sq(f) * (TWO_PI * sobolev_norm(f, 1)) ** (2 * sigma)
        worst = 0.0
        for k in (0, 1, 2):
            ik = abs(fn.good_Ik(f, sigma, k, delta_reg))
            if ik > b * (1 + 1e-9) + 1e-300:
                bound_ok = False
            worst = max(worst, ik / denom if denom > 0 else 0.0)
        ratios.append(worst)
        h2.append(sobolev_norm(f, 2))
    ratios = np.array(ratios)
    order = np.argsort(h2)
    lo, hi = ratios[order[: len(order) // 2]], ratios[order[len(order) // 2 :]]
    growth = float(hi.max() / lo.max() - 1.0) if lo.size and lo.max() > 0 else 0.0
    finite = bool(np.all(np.isfinite(ratios)))
    verdict = "pass" if bound_ok and finite and growth < growth_tol else "fail"
    return ProbeReport(
        probe_id="goodterm_Ik",
        sample_count=len(fields),
        residual_stats=residual_stats(ratios),
        estimated_constants={"max_ratio": float(ratios.max()), "rough_vs_smooth_growth": growth,
                             "pointwise_bound_holds": float(bound_ok)},
        verdict=verdict,
        config={"sigma": sigma, "delta_reg": delta_reg, "growth_tol": growth_tol},
        seed=seed,
    )


# --- standard families ---------------------------------------------------------

def standard_lemma_setup(sigma: float, seed: int = 0) -> tuple[list, SolverParams]:
    """Three-level frequency-doubling family (packets near 16, 32, 64) on a
    192-mode grid, four phase draws per level, plus matching short-run params."""
    from .initial_data import scaling_family

    family = scaling_family(GridSpec(192), base_k=16, levels=3, seed=seed)
    dt = 0.01 / (TWO_PI * 96) ** 2
    return family, SolverParams(sigma=sigma, dt=dt, t_end=8 * dt, record_every=1)


def standard_cancellation_family(sigma: float, size: int = 24, seed: int = 0) -> list[SpectralField]:
    """Two-octave, fixed-H^1 three-packet family on a 160-mode grid."""
    from .initial_data import cancellation_family

    return cancellation_family(GridSpec(160), sigma, size=size, k_min=24, seed=seed)


def random_fields(
    n: int, seed: int, max_mode: int = 128, h1_target: float = 1.0
) -> list[SpectralField]:
    """Random band-limited fields with varied bandwidth and smoothness."""
    from .initial_data import random_band

    rng = np.random.default_rng(seed)
    grid = GridSpec(max_mode)
    out = []
    for _ in range(n):
        band = int(rng.integers(4, max_mode + 1))
        decay = float(rng.uniform(1.5, 3.5))
        out.append(random_band(grid, rng, max_freq=band, h1_target=h1_target, decay=decay))
    return out

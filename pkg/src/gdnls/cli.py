"""Command-line entry point: ``gdnls run | probe | converge | sweep``.

Configuration is a flat YAML mapping whose keys are the fields of
:class:`RunConfig`.  Values resolve with precedence ``--set`` > ``--config``
file > defaults; ``--seed`` and ``--out`` override ``seed`` and ``out_dir``,
and ``GDNLS_OUT`` supplies the output directory when neither is given.

Exit codes: 0 ok/pass, 1 probe fail, 2 usage/config error or inconclusive
probe, 3 numerical overflow.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import functionals as fn
from . import verify
from .dynamics import (
    ConfigurationError,
    SolverParams,
    Termination,
    evolve,
    refinement_study,
    write_diagnostics_csv,
)
from .initial_data import gaussian_bump, plane_wave, random_band
from .spectral import CutoffSpec, GridSpec, load_field, save_field

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_OVERFLOW = 0, 1, 2, 3
OUT_ENV = "GDNLS_OUT"
INIT_KINDS = ("plane_wave", "gaussian_bump", "random_band", "file")
SWEEP_COLUMNS = (
    "sigma", "amplitude", "frequency", "termination", "t_final",
    "max_h1", "max_h2", "mass_drift", "energy_drift",
)


@dataclass
class RunConfig:
    """Flat run description.

    ``init_amplitude`` is the plane-wave amplitude, the bump height, or the
    H^1 norm of random data; ``init_n`` is the plane-wave mode, the bump
    kick, or the random band limit.  ``epsilon: null`` runs without cutoff.
    Keys prefixed ``sweep_`` list the axis values for ``sweep``.
    """

    sigma: float = 2.0
    epsilon: float | None = 1 / 32
    dt: float = 1e-4
    t_end: float = 1.0
    delta_reg: float = 1e-14
    h1_blowup_threshold: float | None = None
    h2_alarm_threshold: float | None = None
    record_every: int = 100
    alpha: float = 2.0
    beta: float | None = None
    hs_order: float = 1.75
    max_mode: int = 64
    oversample: int = 4
    init_kind: str = "random_band"
    init_amplitude: float = 0.5
    init_n: int = 8
    init_width: float = 0.1
    init_path: str | None = None
    seed: int = 0
    out_dir: str | None = None
    epsilons: list = field(default_factory=lambda: [1 / 8, 1 / 16, 1 / 32])
    samples: int | None = None
    c_est: float | None = None
    sweep_sigma: list = field(default_factory=list)
    sweep_amplitude: list = field(default_factory=list)
    sweep_frequency: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        _expect(self.init_kind in INIT_KINDS, "init_kind", f"must be one of {INIT_KINDS}")
        _expect(self.max_mode >= 1, "max_mode", "must be >= 1")
        _expect(self.oversample >= 1, "oversample", "must be >= 1")
        _expect(self.seed >= 0, "seed", "must be a non-negative integer")
        if self.epsilon is not None:
            _expect(0 < self.epsilon <= 1, "epsilon", "must lie in (0, 1]")
            _expect(
                CutoffSpec(self.epsilon).K <= self.max_mode,
                "epsilon",
                f"cutoff frequency exceeds max_mode={self.max_mode}",
            )
        if self.init_kind == "file":
            _expect(self.init_path is not None, "init_path", "required when init_kind is file")
        if self.init_kind in ("plane_wave", "random_band"):
            _expect(abs(self.init_n) <= self.max_mode, "init_n", "exceeds max_mode")
        _expect(self.init_width > 0, "init_width", "must be positive")
        try:
            self.solver_params()
        except ConfigurationError as exc:
            raise ConfigurationError(f"config: {exc}") from None

    def grid(self) -> GridSpec:
        return GridSpec(self.max_mode, self.oversample)

    def solver_params(self) -> SolverParams:
        return SolverParams(
            sigma=self.sigma,
            cutoff=None if self.epsilon is None else CutoffSpec(self.epsilon),
            dt=self.dt,
            t_end=self.t_end,
            delta_reg=self.delta_reg,
            h1_blowup_threshold=self.h1_blowup_threshold,
            h2_alarm_threshold=self.h2_alarm_threshold,
            record_every=self.record_every,
            alpha=self.alpha,
            beta=self.beta,
            hs_order=self.hs_order,
        )

    def initial_field(self):
        grid = self.grid()
        if self.init_kind == "plane_wave":
            return plane_wave(grid, self.init_amplitude, self.init_n)
        if self.init_kind == "gaussian_bump":
            return gaussian_bump(grid, self.init_amplitude, self.init_width, kick=self.init_n)
        if self.init_kind == "random_band":
            rng = np.random.default_rng(self.seed)
            return random_band(grid, rng, max_freq=abs(self.init_n), h1_target=self.init_amplitude)
        f = load_field(self.init_path, oversample=self.oversample)
        return f.resample(grid)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)


def _expect(ok: bool, key: str, message: str) -> None:
    if not ok:
        raise ConfigurationError(f"config.{key}: {message}")


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def _number(value):
    # YAML 1.1 reads exponent literals without a dot (1e-4) as strings.
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _coerce(key: str, value):
    """Type-check one value against the dataclass default."""
    default = getattr(RunConfig(), key)
    if not isinstance(default, str) and key not in ("init_path", "out_dir"):
        value = [_number(v) for v in value] if isinstance(value, list) else _number(value)
    if value is None:
        return None
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigurationError(f"config.{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or key in (
        "epsilon", "beta", "h1_blowup_threshold", "h2_alarm_threshold", "c_est"
    ):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"config.{key}: expected a number, got {value!r}")
        return float(value)
    if key == "samples":
        if not isinstance(value, int) or value < 1:
            raise ConfigurationError(f"config.{key}: expected a positive integer, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            value = [value]
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigurationError(f"config.{key}: expected numbers, got {v!r}")
        return list(value)
    if not isinstance(value, str):
        raise ConfigurationError(f"config.{key}: expected a string, got {value!r}")
    return value


def config_from_mapping(mapping: dict) -> RunConfig:
    if not isinstance(mapping, dict):
        raise ConfigurationError("config: top level must be a mapping")
    unknown = sorted(set(mapping) - _FIELD_NAMES)
    if unknown:
        raise ConfigurationError(f"config.{unknown[0]}: unknown key")
    return RunConfig(**{k: _coerce(k, v) for k, v in mapping.items()})


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config: invalid YAML ({exc})") from None
    return config_from_mapping(data or {})


def parse_overrides(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set {item!r}: expected key=value")
        try:
            out[key.strip()] = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigurationError(f"config.{key}: cannot parse {raw!r}") from None
    return out


def resolve_config(args) -> RunConfig:
    base = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigurationError(f"--config: no such file {path}")
        base = parse_config(path.read_text()).to_dict()
    base.update(parse_overrides(args.set or []))
    if args.seed is not None:
        base["seed"] = args.seed
    if args.out is not None:
        base["out_dir"] = args.out
    return config_from_mapping(base)


def output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir or os.environ.get(OUT_ENV) or "gdnls_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- run ---------------------------------------------------------------------

def _drift(first: float, values) -> float:
    values = np.asarray(values, dtype=float)
    scale = abs(first) if first != 0 else 1.0
    return float(np.max(np.abs(values - first)) / scale)


def _run_cell(cfg: RunConfig):
    params = cfg.solver_params()
    traj = evolve(cfg.initial_field(), params)
    d = traj.diagnostics
    summary = {
        "termination": traj.termination.value,
        "t_final": traj.times[-1],
        "max_h1": max(r.h1 for r in d),
        "max_h2": max(r.h2 for r in d),
        "mass_drift": _drift(d[0].l2 ** 2, [r.l2**2 for r in d]),
        "energy_drift": _drift(d[0].E_eps, [r.E_eps for r in d]),
    }
    return traj, summary


def cmd_run(cfg: RunConfig, threads: int = 1) -> int:
    out = output_dir(cfg)
    traj, summary = _run_cell(cfg)
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        write_diagnostics_csv(traj.diagnostics, fh)
    save_field(
        traj.final, out / "final.json", t=traj.times[-1], termination=traj.termination.value
    )
    (out / "config.yaml").write_text(cfg.to_yaml())
    print(
        f"termination={summary['termination']} t={summary['t_final']:.6g} "
        f"mass_drift={summary['mass_drift']:.3e} energy_drift={summary['energy_drift']:.3e}"
    )
    return EXIT_OVERFLOW if traj.termination is Termination.numerical_overflow else EXIT_OK


# --- probe ---------------------------------------------------------------------

def _lemma_probe(lemma):
    def run(cfg, threads):
        family, params = verify.standard_lemma_setup(cfg.sigma, seed=cfg.seed)
        deltas = (1e-10,) if lemma == "P3" else ()
        return verify.lemma_identity_probe(
            family, lemma, params, delta_values=deltas, threads=threads, seed=cfg.seed
        )

    return run


def _probe_cancellation(cfg, threads):
    family = verify.standard_cancellation_family(cfg.sigma, size=cfg.samples or 24, seed=cfg.seed)
    alpha = cfg.alpha
    beta = cfg.beta if cfg.beta is not None else 2.0 / (cfg.sigma + 1.0)
    return verify.cancellation_scan(
        family, cfg.sigma, alphas=[alpha], betas=[beta], threads=threads, seed=cfg.seed
    )


def _probe_gronwall(cfg, threads):
    traj = evolve(cfg.initial_field(), cfg.solver_params())
    return verify.gronwall_fit(traj.diagnostics, cfg.sigma, seed=cfg.seed)


def _probe_commutator(cfg, threads):
    f = verify.random_fields(2 * (cfg.samples or 200), cfg.seed)
    pairs = list(zip(f[0::2], f[1::2]))
    return verify.commutator_probe(pairs, threads=threads, seed=cfg.seed)


def _probe_chainrule(cfg, threads):
    f = verify.random_fields(cfg.samples or 200, cfg.seed)
    return verify.chain_rule_probe(f, sigma=cfg.sigma, threads=threads, seed=cfg.seed)


def _probe_gagliardo(cfg, threads):
    f = verify.random_fields(cfg.samples or 200, cfg.seed)
    return verify.gagliardo_probe(f, threads=threads, seed=cfg.seed)


def _probe_cutoff(cfg, threads):
    f = verify.random_fields(cfg.samples or 1000, cfg.seed, max_mode=64)
    return verify.cutoff_props_probe(f, seed=cfg.seed)


def _probe_goodterm(cfg, threads):
    f = verify.random_fields(cfg.samples or 200, cfg.seed)
    return verify.goodterm_Ik_probe(f, cfg.sigma, delta_reg=cfg.delta_reg, seed=cfg.seed)


def _probe_hsgrowth(cfg, threads):
    rng = np.random.default_rng(cfg.seed)
    grid = GridSpec(64, cfg.oversample)
    family = [
        random_band(grid, rng, max_freq=64, h1_target=cfg.init_amplitude)
        for _ in range(cfg.samples or 4)
    ]
    params = replace(cfg.solver_params(), cutoff=None)
    return verify.hs_growth_probe(family, params, s=cfg.hs_order, threads=threads, seed=cfg.seed)


def _probe_smalldata(cfg, threads):
    c = cfg.c_est
    if c is None:
        c = fn.estimate_embedding_constant(cfg.grid(), cfg.sigma, seed=cfg.seed)
    family = [cfg.initial_field()]
    return verify.small_data_trap_probe(family, cfg.solver_params(), c, threads, seed=cfg.seed)


PROBES = {
    "lemma26": _lemma_probe("h2"),
    "lemma27": _lemma_probe("P1"),
    "lemma28": _lemma_probe("P2"),
    "lemma29": _lemma_probe("P3"),
    "cancellation": _probe_cancellation,
    "gronwall": _probe_gronwall,
    "commutator": _probe_commutator,
    "chainrule": _probe_chainrule,
    "hsgrowth": _probe_hsgrowth,
    "smalldata": _probe_smalldata,
    "gagliardo": _probe_gagliardo,
    "goodterm_Ik": _probe_goodterm,
    "cutoff_props": _probe_cutoff,
}


def cmd_probe(probe_id: str, cfg: RunConfig, threads: int = 1) -> int:
    if probe_id not in PROBES:
        print(f"unknown probe {probe_id!r}; choose from {', '.join(PROBES)}", file=sys.stderr)
        return EXIT_USAGE
    report = PROBES[probe_id](cfg, threads)
    out = output_dir(cfg)
    (out / f"probe_{probe_id}.json").write_text(report.to_json() + "\n")
    print(f"{probe_id}: {report.verdict}")
    return report.exit_code


# --- converge / sweep ------------------------------------------------------------

def cmd_converge(cfg: RunConfig, threads: int = 1) -> int:
    eps = [float(e) for e in cfg.epsilons]
    grid = cfg.grid()
    for e in eps:
        _expect(CutoffSpec(e).K <= grid.max_mode, "epsilons", f"{e} needs more than max_mode modes")
    report = refinement_study(cfg.initial_field(), cfg.solver_params(), eps, threads=threads)
    doc = report.to_dict()
    doc["config"] = cfg.to_dict()
    _write_json(output_dir(cfg) / "convergence.json", doc)
    print(f"cauchy={report.cauchy} d_l2=" + ",".join(f"{d:.3e}" for d in report.distances_l2))
    return EXIT_OK


def sweep_cells(cfg: RunConfig) -> list[tuple[float, float, int]]:
    sigmas = cfg.sweep_sigma or [cfg.sigma]
    amps = cfg.sweep_amplitude or [cfg.init_amplitude]
    freqs = [int(f) for f in cfg.sweep_frequency] or [cfg.init_n]
    return list(itertools.product(sigmas, amps, freqs))


def cmd_sweep(cfg: RunConfig, threads: int = 1) -> int:
    cells = sweep_cells(cfg)
    cell_cfgs = [
        replace(cfg, sigma=float(s), init_amplitude=float(a), init_n=int(n))
        for s, a, n in cells
    ]

    def run(c):
        try:
            return _run_cell(c)[1]
        except FloatingPointError as exc:
            log.warning("cell sigma=%g failed: %s", c.sigma, exc)
            nan = float("nan")
            return {"termination": Termination.numerical_overflow.value, "t_final": nan,
                    "max_h1": nan, "max_h2": nan, "mass_drift": nan, "energy_drift": nan}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, cell_cfgs))
    else:
        rows = [run(c) for c in cell_cfgs]
    out = output_dir(cfg)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for (s, a, n), row in zip(cells, rows):
            writer.writerow([repr(float(s)), repr(float(a)), n] + [
                row[k] if isinstance(row[k], str) else repr(float(row[k]))
                for k in SWEEP_COLUMNS[3:]
            ])
    (out / "config.yaml").write_text(cfg.to_yaml())
    done = sum(r["termination"] == "completed" for r in rows)
    print(f"{len(rows)} cells, {done} completed")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV})")
    common.add_argument("--seed", type=int, help="seed for random data and sampling")
    common.add_argument("--threads", type=int, default=1, help="worker threads")

    parser = argparse.ArgumentParser(prog="gdnls", description="gDNLS simulator and probes")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="integrate one configuration")
    probe = sub.add_parser("probe", parents=[common], help="run a verification probe")
    probe.add_argument("probe_id", help="one of: " + ", ".join(PROBES))
    sub.add_parser("converge", parents=[common], help="epsilon refinement study")
    sub.add_parser("sweep", parents=[common], help="grid over sigma, amplitude, frequency")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        cfg = resolve_config(args)
        if args.command == "run":
            return cmd_run(cfg, args.threads)
        if args.command == "probe":
            return cmd_probe(args.probe_id, cfg, args.threads)
        if args.command == "converge":
            return cmd_converge(cfg, args.threads)
        return cmd_sweep(cfg, args.threads)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"error: numerical overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW


if __name__ == "__main__":
    sys.exit(main())

"""Batch front-end: ``jjlq <verb> [--config PATH] [--out DIR] [--seed N] ...``

Exit codes: 0 all checks pass, 1 a verification check failed, 2 invalid
configuration or input, 3 numerical non-convergence.

Reports are JSON (default), text or CSV.  Everything except the
``timestamp`` block is a deterministic function of the effective
configuration, so two runs with the same config and seed produce
byte-identical reports once that block is removed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import mpmath
import numpy as np

from . import __version__
from .characters import (ALL_IDS, IDENTITY_ANCHORS, ISING_WEIGHTS, REGISTRY,
                         all_anchors, charged_char, registry_from_json)
from .flux import (DEFAULT_TAUS, EXPECTED_MONODROMY, flux_insert_charged, ising_monodromy,
                   monodromy_transport, sample_w_c, stability_report)
from .ladder import (LadderHamiltonian, LadderSpec, NonConvergence, ParityObstruction,
                     adiabatic_ramp, alternation_ok, classical_minimize, double_kink,
                     double_ramp, ground_spectrum)
from .ladder.dynamics import find_flux_gauge
from .modular import DOUBLE, EXTENDED, ModularError, TruncationError, working_precision
from .qubit import (EffectiveParams, QubitState, RegisterSpec, TwoLevelRejected, entanglement_entropy,
                    evolve, fit_effective, product_state, register_evolve, register_hamiltonian,
                    trajectory, write_trajectory_csv)

log = logging.getLogger("jjlq")

SCHEMA = "jjlq-config/1"
VERBS = ("verify-identities", "monodromy", "flux-table", "ladder", "classical-min",
         "adiabatic", "qubit")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# frozen first validated run of the N = 3 Mobius reference ladder
REFERENCE_SPLITTING = 0.0035580757269659813
REFERENCE_LADDER = {"N_plaquettes": 3, "seam": "mobius_impurity", "E_x": 1.0, "E_y": 1.0,
                    "E_C": 0.1, "n_max": 2, "n_tot": 0}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def _tau_list(v):
    if v is None:
        return None
    out = []
    for t in v:
        if not (isinstance(t, (list, tuple)) and len(t) == 2):
            raise ConfigError(f"tau must be [re, im], got {t!r}")
        tau = complex(float(t[0]), float(t[1]))
        if tau.imag <= 0:
            raise ConfigError(f"tau must lie in the upper half plane, got {t!r}")
        out.append(tau)
    return out


@dataclass
class IdentitiesConfig:
    n_samples: int = 20            # w_c samples per tau for the table, and random (w_c, tau) pairs
    taus: list | None = None       # modulus samples for the flux table, [[re, im], ...]
    delta: float = 1e-3
    registry_path: str | None = None
    variants: bool = True
    relative_threshold: float = 1e-9
    phase_threshold: float = 1e-6


@dataclass
class MonodromyConfig:
    taus: list | None = None
    n_samples: int = 5
    deltas: list = field(default_factory=lambda: [1e-3, 1e-2])
    phase_threshold: float = 1e-6


@dataclass
class LadderRun:
    spec: dict = field(default_factory=dict)
    ed: bool = True
    n_levels: int = 4
    golden_splitting: float | None = None
    golden_rtol: float = 1e-8
    gap_ratio_max: float = 0.2
    convergence_n_max: int | None = None   # compare against a run with this cutoff
    convergence_rtol: float = 0.2
    flux_tol: float = 1e-10


@dataclass
class LadderConfig:
    runs: list = field(default_factory=lambda: [
        {"spec": {"N_plaquettes": 4, "seam": "periodic"}, "ed": False},
        {"spec": {"N_plaquettes": 3, "seam": "periodic"}, "ed": False},
        {"spec": dict(REFERENCE_LADDER), "ed": True, "golden_splitting": REFERENCE_SPLITTING},
    ])
    n_starts: int = 32


@dataclass
class ClassicalConfig:
    specs: list = field(default_factory=lambda: [
        {"N_plaquettes": 4, "seam": "periodic"},
        {"N_plaquettes": 3, "seam": "mobius_impurity"},
        {"N_plaquettes": 3, "seam": "periodic"},
    ])
    n_starts: int = 32
    double_kink: bool = True


@dataclass
class AdiabaticConfig:
    spec: dict = field(default_factory=lambda: dict(REFERENCE_LADDER))
    times: list = field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    flip_threshold: float = 0.9
    sudden_threshold: float = 0.99
    monotone_noise: float = 0.02
    gap_floor: float = 0.05
    halving_tol: float = 1e-4
    double_ramp_time: float | None = None
    double_ramp_protocol: str = "flip"
    double_ramp_threshold: float = 0.8


@dataclass
class QubitConfig:
    params: dict | None = field(default_factory=lambda: {"epsilon": 0.0, "delta": 1.0})
    from_ladder: dict | None = None   # ladder spec; overrides params by fitting the doublet
    initial: list = field(default_factory=lambda: [1.0, 0.0])
    t_max: float | None = None        # default: one Rabi period 2 pi / splitting
    n_points: int = 101
    register: dict | None = None      # {"K", "epsilon", "delta", "couplings", "initial", "t_max", "n_points"}
    unitarity_tol: float = 1e-12
    fit_tol: float = 1e-10


@dataclass
class RunConfig:
    schema: str = SCHEMA
    seed: int = 0
    precision: str = "double"
    format: str = "json"
    out: str | None = None
    identities: IdentitiesConfig = field(default_factory=IdentitiesConfig)
    monodromy: MonodromyConfig = field(default_factory=MonodromyConfig)
    ladder: LadderConfig = field(default_factory=LadderConfig)
    classical: ClassicalConfig = field(default_factory=ClassicalConfig)
    adiabatic: AdiabaticConfig = field(default_factory=AdiabaticConfig)
    qubit: QubitConfig = field(default_factory=QubitConfig)


_BLOCKS = {"identities": IdentitiesConfig, "monodromy": MonodromyConfig, "ladder": LadderConfig,
           "classical": ClassicalConfig, "adiabatic": AdiabaticConfig, "qubit": QubitConfig}


def _strict(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    return cls(**data)


def load_config(data: dict | None) -> RunConfig:
    """Validate a config document (fail-closed on unknown keys)."""
    data = dict(data or {})
    if data.get("schema", SCHEMA) != SCHEMA:
        raise ConfigError(f"unsupported schema {data.get('schema')!r}; expected {SCHEMA!r}")
    blocks = {k: _strict(c, data.pop(k), k) for k, c in _BLOCKS.items() if k in data}
    cfg = _strict(RunConfig, data, "config")
    for k, v in blocks.items():
        setattr(cfg, k, v)
    cfg.ladder.runs = [r if isinstance(r, LadderRun) else _strict(LadderRun, r, "ladder.runs[]")
                       for r in cfg.ladder.runs]
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.precision not in ("double", "extended"):
        raise ConfigError("precision must be 'double' or 'extended'")
    if cfg.format not in ("json", "text", "csv"):
        raise ConfigError("format must be json, text or csv")
    if not isinstance(cfg.seed, int) or cfg.seed < 0 or cfg.seed >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    _tau_list(cfg.identities.taus)
    _tau_list(cfg.monodromy.taus)
    if cfg.identities.n_samples < 1 or cfg.monodromy.n_samples < 1:
        raise ConfigError("n_samples must be positive")
    if len(cfg.adiabatic.times) < 1 or any(t <= 0 for t in cfg.adiabatic.times):
        raise ConfigError("adiabatic.times must be positive ramp times")
    if cfg.adiabatic.double_ramp_protocol not in ("flip", "same"):
        raise ConfigError("adiabatic.double_ramp_protocol must be 'flip' or 'same'")
    if cfg.qubit.params is None and cfg.qubit.from_ladder is None:
        raise ConfigError("qubit needs params or from_ladder")


def config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d.pop("out")   # the output location does not change results
    d.pop("format")
    return d


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def make_spec(d: dict) -> LadderSpec:
    names = {f.name for f in dataclasses.fields(LadderSpec)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"ladder spec: unknown key(s) {unknown}")
    return LadderSpec(**d)


# --------------------------------------------------------------------------
# reports


@dataclass
class Check:
    name: str
    anchor: str
    passed: bool
    residual: float
    samples: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "anchor": self.anchor,
                "status": "pass" if self.passed else "fail",
                "residual": _num(self.residual), "samples": self.samples,
                "detail": self.detail}


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


@dataclass
class VerificationReport:
    command: str
    config_hash: str
    seed: int
    precision: str
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    files: list = field(default_factory=list)
    wall_time: float = 0.0
    started: str = ""
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    @property
    def status(self) -> str:
        return "error" if self.error else ("pass" if self.passed else "fail")

    def to_dict(self) -> dict:
        return {
            "artifact": "jjlqubit", "version": __version__, "command": self.command,
            "config_hash": self.config_hash, "seed": self.seed, "precision": self.precision,
            "status": self.status, "error": self.error,
            "checks": [c.to_dict() for c in self.checks],
            "data": self.data, "warnings": self.warnings, "files": sorted(self.files),
            "timestamp": {"started_utc": self.started, "wall_time_s": self.wall_time},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"jjlq {self.command}  (config {self.config_hash[:12]}, seed {self.seed}, "
                 f"{self.precision})"]
        for c in self.checks:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name:48} "
                         f"residual={_fmt(c.residual)}  n={c.samples}  <{c.anchor}>")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        if self.error:
            lines.append(f"  error: {self.error}")
        lines.append(f"overall: {self.status.upper()}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "anchor", "status", "residual", "samples"])
        for c in self.checks:
            w.writerow([c.name, c.anchor, "pass" if c.passed else "fail",
                        repr(float(c.residual)), c.samples])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        return {"json": self.to_json, "text": self.to_text, "csv": self.to_csv}[fmt]()


def _fmt(x) -> str:
    return f"{x:.3e}" if isinstance(x, (int, float)) else str(x)


def _rel(a, b) -> float:
    d = max(abs(a), abs(b))
    return float(abs(a - b) / d) if d else 0.0


def _ctrl(cfg: RunConfig):
    return EXTENDED if cfg.precision == "extended" else DOUBLE


def _registry(cfg: RunConfig):
    path = cfg.identities.registry_path
    if path is None:
        return REGISTRY
    try:
        with open(path) as fh:
            return registry_from_json(fh.read())
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"cannot load registry {path!r}: {e}") from e


class Context:
    def __init__(self, cfg: RunConfig, report: VerificationReport):
        self.cfg = cfg
        self.report = report
        self.out = cfg.out

    def write(self, name: str, text: str):
        if self.out is None:
            return
        os.makedirs(self.out, exist_ok=True)
        with open(os.path.join(self.out, name), "w", newline="") as fh:
            fh.write(text)
        self.report.files.append(name)

    def path(self, name: str) -> str | None:
        if self.out is None:
            return None
        os.makedirs(self.out, exist_ok=True)
        self.report.files.append(name)
        return os.path.join(self.out, name)


# --------------------------------------------------------------------------
# verbs: characters


def _random_pairs(n: int, seed: int):
    """n random (w_c, tau) samples: Re tau in [-1/2, 1/2], Im tau in [0.8, 2]."""
    rng = np.random.default_rng([seed, 11])
    out = []
    for _ in range(n):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.8, 2.0))
        out.append((sample_w_c(tau, 1, rng)[0], tau))
    return out


def _charged_checks(ctx: Context):
    cfg, ctrl = ctx.cfg, _ctrl(ctx.cfg)
    ic = cfg.identities
    pairs = _random_pairs(ic.n_samples, cfg.seed)
    checks = []
    with working_precision(ctrl):
        return checks + _charged_rows(ic, pairs, ctrl)


def _shift(w, d, ctrl):
    # in extended precision the shifted argument must not be rounded to double first
    return mpmath.mpc(w) + d if ctrl.extended else w + d


def _charged_rows(ic, pairs, ctrl):
    checks = []
    for l in range(4):
        res = [_rel(charged_char(l, _shift(wc, 2, ctrl), tau, ctrl), charged_char(l, wc, tau, ctrl))
               for wc, tau in pairs]
        checks.append(Check(f"K_{l}(w_c + 2) = K_{l}(w_c)", IDENTITY_ANCHORS["k_periodicity"],
                            max(res) < ic.relative_threshold, max(res), len(res)))
    for l in range(4):
        res = []
        for wc, tau in pairs:
            v, e = flux_insert_charged(l, wc, tau, ctrl)
            res.append(_rel(v, e))
        checks.append(Check(f"T_1/2 K_{l} = K_{(l + 1) % 4}", IDENTITY_ANCHORS["charged_flux"],
                            max(res) < ic.relative_threshold, max(res), len(res)))
    return checks


def _ising_checks(ctx: Context):
    cfg, ctrl = ctx.cfg, _ctrl(ctx.cfg)
    pairs = _random_pairs(cfg.identities.n_samples, cfg.seed)
    checks = []
    for h in ISING_WEIGHTS:
        expected = -1 if h == Fraction(1, 16) else 1
        devs = []
        for delta in cfg.monodromy.deltas:
            for _, tau in pairs:
                r = ising_monodromy(h, tau, ctrl, delta)
                devs.append(r.deviation if r.snapped == expected else abs(r.phase - expected))
        checks.append(Check(f"chi_{h}(w + 2) = {expected:+d} chi_{h}(w)",
                            IDENTITY_ANCHORS["ising_monodromy"],
                            max(devs) < cfg.identities.phase_threshold, max(devs), len(devs),
                            {"expected": expected, "weight": str(h)}))
    return checks


def _sector_monodromy_checks(ctx: Context, registry):
    cfg, ctrl = ctx.cfg, _ctrl(ctx.cfg)
    mc = cfg.monodromy
    taus = _tau_list(mc.taus) or list(DEFAULT_TAUS)
    checks, table = [], []
    for cid in ALL_IDS:
        expected = EXPECTED_MONODROMY[cid]
        devs, snapped = [], set()
        for delta in mc.deltas:
            for k, tau in enumerate(taus):
                r = monodromy_transport(cid, tau, None, ctrl, registry=registry, delta=delta,
                                        seed=cfg.seed + k, n_samples=mc.n_samples)
                snapped.add(r.snapped)
                devs.append(r.deviation if r.snapped == expected else
                            max(r.deviation, abs(r.phase - expected)))
        ok = snapped == {expected} and max(devs) < mc.phase_threshold
        table.append({"id": cid.name, "expected": expected,
                      "snapped": sorted(s for s in snapped if s is not None) or None,
                      "max_deviation": max(devs)})
        checks.append(Check(f"monodromy {cid.name} -> {expected:+d}", registry[cid].anchor, ok,
                            max(devs), len(taus) * len(mc.deltas) * mc.n_samples,
                            {"expected": expected, "deltas": list(mc.deltas)}))
    return checks, table


def _flux_table(ctx: Context, registry):
    cfg, ctrl = ctx.cfg, _ctrl(ctx.cfg)
    ic = cfg.identities
    taus = _tau_list(ic.taus) or list(DEFAULT_TAUS)
    rep = stability_report(taus, ctrl, registry=registry, n_samples=ic.n_samples, seed=cfg.seed,
                           delta=ic.delta, variants=ic.variants)
    checks = []
    for r in rep.rows:
        kind, tgt = r.classification
        # the reported residual is measured against the expected table entry,
        # so a wrong classification shows up as a large number
        checks.append(Check(f"T_1/2 {r.id.name}: {kind}" + (f" {tgt.name}" if tgt else ""),
                            r.anchor, r.passed, r.max_expected_residual, len(taus) * ic.n_samples,
                            {"classification": kind, "target": tgt.name if tgt else None,
                             "fit_residual": r.max_residual,
                             "constant_flagged": r.constant_flagged}))
    return rep, checks


def cmd_verify_identities(ctx: Context):
    registry = _registry(ctx.cfg)
    rep = ctx.report
    rep.checks += _charged_checks(ctx)
    rep.checks += _ising_checks(ctx)
    table, checks = _flux_table(ctx, registry)
    rep.checks += checks
    mchecks, mtable = _sector_monodromy_checks(ctx, registry)
    rep.checks += mchecks
    rep.data["flux_table"] = table.to_dict()
    rep.data["monodromy"] = mtable
    ctx.write("flux_table.csv", table.to_csv())
    return registry


def cmd_monodromy(ctx: Context):
    registry = _registry(ctx.cfg)
    ctx.report.checks += _ising_checks(ctx)
    checks, table = _sector_monodromy_checks(ctx, registry)
    ctx.report.checks += checks
    ctx.report.data["monodromy"] = table
    return registry


def cmd_flux_table(ctx: Context):
    registry = _registry(ctx.cfg)
    table, checks = _flux_table(ctx, registry)
    ctx.report.checks += checks
    ctx.report.data["flux_table"] = table.to_dict()
    ctx.write("flux_table.txt", table.to_text() + "\n")
    ctx.write("flux_table.csv", table.to_csv())
    return registry


# --------------------------------------------------------------------------
# verbs: lattice


def _spec_label(spec: LadderSpec) -> str:
    return f"N={spec.N_plaquettes} {spec.seam}"


def _dichotomy_check(spec: LadderSpec, minima) -> Check | None:
    pats = [tuple(m.pattern) for m in minima]
    sums = sorted(m.chirality_sum for m in minima)
    alt = [alternation_ok(p, spec.seam) for p in pats]
    detail = {"patterns": [list(p) for p in pats], "sums": sums,
              "energies": [m.energy for m in minima]}
    label = _spec_label(spec)
    if spec.f != 0.5 or spec.seam not in ("periodic", "mobius_impurity"):
        return None
    n = spec.N_plaquettes
    if spec.seam == "periodic" and n % 2 == 0:
        ok = len(minima) == 2 and all(alt) and sums == [0, 0]
        return Check(f"{label}: two alternating minima, sum 0", IDENTITY_ANCHORS["classical_dichotomy"],
                     ok, 0.0, len(minima), detail)
    if spec.seam == "mobius_impurity" and n % 2 == 1:
        ok = len(minima) == 2 and all(alt) and sums == [-1, 1]
        return Check(f"{label}: two alternating minima, sums -1/+1",
                     IDENTITY_ANCHORS["classical_dichotomy"], ok, 0.0, len(minima), detail)
    if spec.seam == "periodic":
        ok = len(minima) > 0 and not any(alt)
        return Check(f"{label}: no perfectly alternating minimum",
                     IDENTITY_ANCHORS["parity_obstruction"], ok, 0.0, len(minima), detail)
    return None


def _classical(ctx: Context, spec: LadderSpec, n_starts: int):
    minima, stats = classical_minimize(spec, n_starts=n_starts, seed=ctx.cfg.seed, return_stats=True)
    c = _dichotomy_check(spec, minima)
    if c is not None:
        ctx.report.checks.append(c)
    return minima, stats


def _patterns_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ladder", "index", "energy", "chirality_sum", "pattern"])
    for label, k, m in rows:
        w.writerow([label, k, repr(float(m.energy)), m.chirality_sum,
                    " ".join(f"{x:+d}" for x in m.pattern)])
    return buf.getvalue()


def _spectrum(lh, n_levels, seed, hole_flux=None):
    return ground_spectrum(lh.operator(hole_flux), n_levels, seed=seed)


def cmd_ladder(ctx: Context):
    cfg = ctx.cfg
    rep = ctx.report
    runs = []
    pat_rows, spec_rows = [], []
    for run in cfg.ladder.runs:
        spec = make_spec(run.spec)
        label = _spec_label(spec)
        entry = {"ladder": label, "spec": spec.to_dict()}
        minima, stats = _classical(ctx, spec, cfg.ladder.n_starts)
        entry["classical"] = {"minima": [m.to_dict() for m in minima],
                              "stats": dataclasses.asdict(stats)}
        pat_rows += [(label, k, m) for k, m in enumerate(minima)]
        if run.ed:
            try:
                _ed_run(ctx, spec, run, entry, spec_rows)
            except NonConvergence as e:
                entry["failure"] = str(e)
                runs.append(entry)
                rep.data["runs"] = runs
                raise
        runs.append(entry)
    rep.data["runs"] = runs
    ctx.write("patterns.csv", _patterns_csv(pat_rows))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ladder", "n_max", "hole_flux", "level", "energy"])
    w.writerows(spec_rows)
    ctx.write("spectra.csv", buf.getvalue())


def _ed_run(ctx: Context, spec: LadderSpec, run: LadderRun, entry: dict, spec_rows: list):
    rep = ctx.report
    label = _spec_label(spec)
    seed = ctx.cfg.seed
    lh = LadderHamiltonian(spec)
    pairs = _spectrum(lh, run.n_levels, seed)
    E = [p.value for p in pairs]
    spec_rows += [(label, spec.n_max, spec.hole_flux, k, repr(e)) for k, e in enumerate(E)]
    ratio = (E[1] - E[0]) / (E[2] - E[0])
    entry["ed"] = {"dim": lh.dim, "energies": E, "splitting": E[1] - E[0], "gap": E[2] - E[0],
                   "ratio": ratio, "residuals": [p.residual for p in pairs]}
    rep.checks.append(Check(f"{label}: doublet ratio < {run.gap_ratio_max}",
                            IDENTITY_ANCHORS["quantum_doublet"], ratio < run.gap_ratio_max, ratio,
                            lh.dim))
    if spec.closed:
        E1 = [p.value for p in _spectrum(lh, run.n_levels, seed, spec.hole_flux + 1)]
        d = max(abs(a - b) for a, b in zip(E, E1))
        spec_rows += [(label, spec.n_max, spec.hole_flux + 1, k, repr(e)) for k, e in enumerate(E1)]
        g = find_flux_gauge(lh, spec.hole_flux)
        entry["ed"]["gauge_exchanges_legs"] = g.exchanges_legs
        rep.checks.append(Check(f"{label}: spectrum(h + 1) = spectrum(h)",
                                IDENTITY_ANCHORS["flux_gauge"], d < run.flux_tol, d, len(E)))
    if run.golden_splitting is not None:
        r = _rel(E[1] - E[0], run.golden_splitting)
        rep.checks.append(Check(f"{label}: doublet splitting matches golden",
                                IDENTITY_ANCHORS["quantum_doublet"], r < run.golden_rtol, r, 1,
                                {"golden": run.golden_splitting, "value": E[1] - E[0]}))
    if run.convergence_n_max is not None:
        spec2 = spec.with_(n_max=run.convergence_n_max)
        lh2 = LadderHamiltonian(spec2)
        E2 = [p.value for p in _spectrum(lh2, 3, seed)]
        spec_rows += [(label, spec2.n_max, spec.hole_flux, k, repr(e)) for k, e in enumerate(E2)]
        ratio2 = (E2[1] - E2[0]) / (E2[2] - E2[0])
        change = abs(ratio2 - ratio) / ratio
        gap_change = abs((E2[2] - E2[0]) - (E[2] - E[0])) / (E[2] - E[0])
        entry["ed"]["convergence"] = {"n_max": spec2.n_max, "dim": lh2.dim, "ratio": ratio2,
                                      "ratio_change": change, "gap_change": gap_change}
        rep.checks.append(Check(
            f"{label}: doublet ratio stable within {run.convergence_rtol:.0%} (n_max "
            f"{spec.n_max} -> {spec2.n_max})", IDENTITY_ANCHORS["quantum_doublet"],
            change < run.convergence_rtol, change, 2,
            {"ratio": ratio, "ratio_next": ratio2, "gap_change": gap_change}))


def cmd_classical_min(ctx: Context):
    cfg = ctx.cfg
    rows, out = [], []
    for d in cfg.classical.specs:
        spec = make_spec(d)
        label = _spec_label(spec)
        minima, stats = _classical(ctx, spec, cfg.classical.n_starts)
        rows += [(label, k, m) for k, m in enumerate(minima)]
        item = {"ladder": label, "minima": [m.to_dict() for m in minima],
                "stats": dataclasses.asdict(stats), "double_kinks": []}
        if cfg.classical.double_kink and minima and alternation_ok(minima[0].pattern, spec.seam):
            for base in minima:
                dk = double_kink(spec, base, 0, seed=cfg.seed)
                ok = dk.excess_energy > 0 and dk.config.chirality_sum == base.chirality_sum
                item["double_kinks"].append({"base_pattern": list(base.pattern),
                                             "kink_pattern": list(dk.config.pattern),
                                             "excess_energy": dk.excess_energy,
                                             "stable": dk.stable})
                ctx.report.checks.append(Check(
                    f"{label}: double kink on {list(base.pattern)} keeps sum, costs energy",
                    IDENTITY_ANCHORS["double_kink"], ok, dk.excess_energy, 1,
                    {"sum": dk.config.chirality_sum, "stable_on_its_own": dk.stable}))
        out.append(item)
    ctx.report.data["ladders"] = out
    ctx.write("patterns.csv", _patterns_csv(rows))


def cmd_adiabatic(ctx: Context):
    ac = ctx.cfg.adiabatic
    rep = ctx.report
    spec = make_spec(ac.spec)
    lh = LadderHamiltonian(spec)
    rows = []
    sudden = adiabatic_ramp(spec, 0.0, lh=lh, check_gap=False)
    rows.append(sudden)
    for T in sorted(ac.times):
        r = adiabatic_ramp(spec, float(T), lh=lh, gap_floor=ac.gap_floor, halving_tol=ac.halving_tol)
        rows.append(r)
        rep.warnings += [f"T={T}: {w}" for w in r.warnings]
    ramps = rows[1:]
    fl = [r.flip_fidelity for r in ramps]
    rep.checks.append(Check(f"slow ramp (T={ramps[-1].total_time}) flips the logical state",
                            IDENTITY_ANCHORS["adiabatic_flip"], fl[-1] > ac.flip_threshold,
                            1 - fl[-1], 1))
    drops = [max(0.0, a - b) for a, b in zip(fl, fl[1:])]
    rep.checks.append(Check("flip fidelity non-decreasing in ramp time",
                            IDENTITY_ANCHORS["adiabatic_flip"],
                            all(d <= ac.monotone_noise for d in drops),
                            max(drops) if drops else 0.0, len(fl)))
    rep.checks.append(Check("sudden ramp retains the initial state", IDENTITY_ANCHORS["adiabatic_flip"],
                            sudden.initial_overlap > ac.sudden_threshold,
                            abs(1 - sudden.initial_overlap), 1))
    data = {"ladder": _spec_label(spec), "ramps": [r.to_dict() for r in rows]}
    if ac.double_ramp_time is not None:
        d = double_ramp(spec, float(ac.double_ramp_time), protocol=ac.double_ramp_protocol, lh=lh,
                        gap_floor=ac.gap_floor, halving_tol=ac.halving_tol)
        data["double_ramp"] = d.to_dict()
        rep.checks.append(Check(f"two ramps ({ac.double_ramp_protocol}) return the initial state",
                                IDENTITY_ANCHORS["adiabatic_flip"],
                                d.return_fidelity > ac.double_ramp_threshold,
                                1 - d.return_fidelity, 1))
    rep.data.update(data)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["total_time", "steps", "flip_fidelity", "stay_fidelity", "initial_overlap",
                "min_gap"])
    for r in rows:
        w.writerow([repr(r.total_time), r.steps, repr(r.flip_fidelity), repr(r.stay_fidelity),
                    repr(r.initial_overlap), repr(r.min_gap)])
    ctx.write("ramp_fidelity.csv", buf.getvalue())


def _state(v) -> QubitState:
    amps = [complex(*a) if isinstance(a, (list, tuple)) else complex(a) for a in v]
    if len(amps) != 2:
        raise ConfigError("qubit initial state needs two amplitudes")
    try:
        return QubitState(*amps)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def cmd_qubit(ctx: Context):
    qc = ctx.cfg.qubit
    rep = ctx.report
    if qc.from_ladder is not None:
        spec = make_spec(qc.from_ladder)
        lh = LadderHamiltonian(spec)
        pairs = ground_spectrum(lh.operator(), 3, seed=ctx.cfg.seed)
        rep.data["doublet"] = [p.value for p in pairs]
        fit = fit_effective(pairs, lh.chirality_sum_operator())
        params = fit.params
        split = pairs[1].value - pairs[0].value
        r = abs(params.splitting - split)
        rep.data["fit"] = fit.to_dict()
        rep.checks.append(Check("sqrt(eps^2 + Delta^2) = E_2 - E_1", IDENTITY_ANCHORS["qubit_fit"],
                                r < qc.fit_tol, r, 1))
    else:
        try:
            params = EffectiveParams.from_dict(qc.params)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"qubit.params: {e}") from e
    rep.data["params"] = params.to_dict()
    psi0 = _state(qc.initial)
    om = params.splitting
    t_max = qc.t_max if qc.t_max is not None else (2 * math.pi / om if om > 0 else 1.0)
    times = np.linspace(0.0, t_max, qc.n_points)
    traj = trajectory(params, psi0, times)
    norm_dev = float(np.max(np.abs(traj[:, 1] + traj[:, 2] - 1)))
    rep.checks.append(Check("single-qubit evolution preserves the norm",
                            IDENTITY_ANCHORS["qubit_dynamics"], norm_dev < qc.unitarity_tol,
                            norm_dev, len(times)))
    final = evolve(params, psi0, t_max)
    rep.data["final"] = {"populations": list(final.populations), "t": t_max}
    path = ctx.path("qubit_trajectory.csv")
    if path:
        write_trajectory_csv(path, traj)
    ctx.write("params.json", json.dumps(params.to_dict(), indent=2, sort_keys=True) + "\n")
    if qc.register is not None:
        _register(ctx, dict(qc.register))


def _register(ctx: Context, d: dict):
    rep = ctx.report
    extra = {k: d.pop(k) for k in ("initial", "t_max", "n_points") if k in d}
    try:
        spec = RegisterSpec.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"qubit.register: {e}") from e
    H = register_hamiltonian(spec)
    herm = float(np.max(np.abs(H - H.conj().T)))
    rep.checks.append(Check(f"register Hamiltonian (K={spec.K}) is Hermitian",
                            IDENTITY_ANCHORS["qubit_dynamics"], herm == 0.0, herm, H.size))
    init = extra.get("initial") or [[1.0, 0.0]] * spec.K
    psi0 = product_state([_state(v) for v in init])
    t_max = float(extra.get("t_max", 2 * math.pi))
    n = int(extra.get("n_points", 101))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"p_{k:0{spec.K}b}" for k in range(2 ** spec.K)] +
               (["entropy_q0"] if spec.K > 1 else []))
    worst = 0.0
    for t in np.linspace(0.0, t_max, n):
        psi = register_evolve(spec, psi0, t, H)
        worst = max(worst, abs(np.vdot(psi, psi).real - 1))
        row = [repr(float(t))] + [repr(float(abs(a) ** 2)) for a in psi]
        if spec.K > 1:
            row.append(repr(entanglement_entropy(psi, spec.K, [0])))
        w.writerow(row)
    rep.checks.append(Check("register evolution preserves the norm",
                            IDENTITY_ANCHORS["qubit_dynamics"], worst < 1e-12, worst, n))
    rep.data["register"] = {"spec": spec.to_dict(), "spectrum": list(np.linalg.eigvalsh(H))}
    ctx.write("register_trajectory.csv", buf.getvalue())


_COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "monodromy": cmd_monodromy,
    "flux-table": cmd_flux_table,
    "ladder": cmd_ladder,
    "classical-min": cmd_classical_min,
    "adiabatic": cmd_adiabatic,
    "qubit": cmd_qubit,
}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jjlq", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", help="JSON config file (schema %s)" % SCHEMA)
    p.add_argument("--out", help="output directory for the report and data files")
    p.add_argument("--seed", type=int, help="base seed (u64), overrides the config")
    p.add_argument("--precision", choices=("double", "extended"))
    p.add_argument("--format", choices=("json", "text", "csv"))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(verb: str, cfg: RunConfig) -> tuple[VerificationReport, int]:
    """Run one verb; returns the report and the exit code."""
    report = VerificationReport(verb, config_hash(cfg), cfg.seed, cfg.precision)
    report.started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    ctx = Context(cfg, report)
    code = EXIT_OK
    registry = REGISTRY
    try:
        registry = _COMMANDS[verb](ctx) or REGISTRY
    except (ConfigError, ParityObstruction) as e:
        report.error = f"configuration error: {e}"
        code = EXIT_CONFIG
    except TwoLevelRejected as e:
        report.error = f"two-level approximation rejected: {e}"
        report.data["ratio"] = e.ratio
        code = EXIT_FAIL
    except (NonConvergence, TruncationError) as e:
        report.error = f"numerical non-convergence: {e}"
        code = EXIT_NUMERIC
    except (ValueError, TypeError) as e:
        # invalid physical parameters surface from the dataclass validators
        report.error = f"invalid input: {e}"
        code = EXIT_CONFIG
    except (ModularError, RuntimeError) as e:
        report.error = f"numerical failure: {e}"
        code = EXIT_NUMERIC
    known = all_anchors(registry)
    orphans = sorted({c.anchor for c in report.checks} - known)
    if orphans:
        raise AssertionError(f"report rows without a registered anchor: {orphans}")
    if code == EXIT_OK and not report.passed:
        code = EXIT_FAIL
    report.wall_time = round(time.perf_counter() - t0, 3)
    return report, code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        data = {}
        if args.config:
            with open(args.config) as fh:
                data = json.load(fh)
        cfg = load_config(data)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.precision:
            cfg.precision = args.precision
        if args.format:
            cfg.format = args.format
        if args.out:
            cfg.out = args.out
        _validate(cfg)
    except (OSError, json.JSONDecodeError, ConfigError, TypeError) as e:
        print(f"jjlq: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    report, code = run(args.verb, cfg)
    text = report.render(cfg.format)
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        ext = {"json": "json", "text": "txt", "csv": "csv"}[cfg.format]
        with open(os.path.join(cfg.out, f"report.{ext}"), "w", newline="") as fh:
            fh.write(text)
    sys.stdout.write(text)
    for w in report.warnings:
        print(f"jjlq: warning: {w}", file=sys.stderr)
    if report.error:
        print(f"jjlq: {report.error}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

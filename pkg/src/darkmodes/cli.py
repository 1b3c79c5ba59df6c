"""Command-line front end.

::

    darkmodes run fig2|fig3|figS1|figS2|custom [--key value ...] [--out PATH] [--format csv|json]
    darkmodes run planck --temperature 5770
    darkmodes sweep --manifest runs.json --workers 4
    darkmodes count --n 5 --m 3

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 partial sweep failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import _backend
from .analysis import CONSTANTS, planck_report
from .combinatorics import (
    count_all,
    count_dark,
    final_excitations,
    initial_excitations,
    nested_survival_ratio,
    oracle_report,
    survival_ratio,
)
from .dynamics import (
    CouplingSchedule,
    EvolutionConfig,
    TrajectoryRecord,
    effective_nbar,
    evolve,
    kappa,
    stability_limit,
    standard_observables,
)
from .errors import ConfigurationError, DarkModesError, IntegrationError
from .hilbert import ModeSpec, SystemSpec
from .thermal import product_thermal

log = logging.getLogger("darkmodes")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SWEEP = 0, 1, 2, 3

SCENARIOS = ("fig2", "fig3", "figS1", "figS2", "custom", "planck")
FORMATS = ("csv", "json")
LEAD_COLUMNS = ("gamma_t", "nbar_norm", "pe_norm")

# None means "derived from the other parameters" (see _resolve)
PRESETS = {
    "fig2": {"modes": None, "nbar": 0.1, "cutoffs": 5, "gamma_over_g": 10.0, "dt": None,
             "t_end": None, "break_time": None, "detuning_step": 0.0, "signs": None,
             "resonant_mode": 0, "sample_every": 100},
    "fig3": {"modes": 2, "nbar": 0.1, "cutoffs": 5, "gamma_over_g": 4.0, "dt": 0.01,
             "t_end": 100.0, "break_time": 50.0, "detuning_step": 0.0, "signs": [-1.0, 1.0],
             "resonant_mode": 0, "sample_every": 100},
    "figS2": {"modes": 5, "nbar": 0.05, "cutoffs": 3, "gamma_over_g": 3.0, "dt": 0.006,
              "t_end": 1200.0, "break_time": None, "detuning_step": 1.0 / 15.0, "signs": None,
              "resonant_mode": 2, "sample_every": 1000},
    "custom": {"modes": 2, "nbar": 0.1, "cutoffs": 5, "gamma_over_g": 10.0, "dt": None,
               "t_end": 50.0, "break_time": None, "detuning_step": 0.0, "signs": None,
               "resonant_mode": 0, "sample_every": 100},
    "figS1": {"max_n": 10, "max_m": 8},
    "planck": {"temperature": None},
}
FIG2_MODES = (1, 2, 3)


# --- configuration ------------------------------------------------------------------

def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _one_or_many(conv):
    def parse(v):
        vals = [conv(x) for x in _floats(v)]
        return vals[0] if len(vals) == 1 else vals
    return parse


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _optional_float(v):
    if v is None or str(v).lower() in ("none", ""):
        return None
    return float(v)


def _signs(v):
    vals = _floats(v)
    if any(x not in (1.0, -1.0) for x in vals):
        raise ValueError(f"signs must be +1 or -1, got {vals}")
    return vals


PARSERS = {
    "modes": _int,
    "nbar": _one_or_many(float),
    "cutoffs": _one_or_many(_int),
    "gamma_over_g": float,
    "dt": float,
    "t_end": float,
    "break_time": _optional_float,
    "detuning_step": float,
    "signs": _signs,
    "resonant_mode": _int,
    "sample_every": _int,
    "max_n": _int,
    "max_m": _int,
    "temperature": float,
}


@dataclass
class ScenarioConfig:
    scenario: str
    overrides: dict = field(default_factory=dict)
    output_path: str | None = None
    format: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.format is not None and self.format not in FORMATS:
            raise ConfigurationError(f"format must be csv or json, got {self.format!r}")
        allowed = PRESETS[self.scenario]
        parsed = {}
        for key, raw in self.overrides.items():
            key = key.replace("-", "_")
            if key not in allowed:
                raise ConfigurationError(f"unknown key {key!r} for scenario {self.scenario}")
            try:
                parsed[key] = PARSERS[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"bad value for {key}: {exc}") from None
        self.overrides = parsed

    @property
    def fmt(self) -> str:
        return self.format or ("json" if self.scenario == "planck" else "csv")

    def outputs(self) -> list[Path]:
        """Data files this config will write."""
        base = Path(self.output_path or f"{self.scenario}.{self.fmt}")
        if self.scenario == "fig2" and self.overrides.get("modes") is None:
            return [base.with_name(f"{base.stem}_M{m}{base.suffix}") for m in FIG2_MODES]
        return [base]

    def echo(self) -> dict:
        return {"scenario": self.scenario, "overrides": self.overrides,
                "output_path": self.output_path, "format": self.fmt}


def _per_mode(value, m, name):
    vals = value if isinstance(value, list) else [value] * m
    if len(vals) != m:
        raise ConfigurationError(f"{name} has {len(vals)} entries, expected {m}")
    return vals


@dataclass(frozen=True)
class DynamicRun:
    """Fully resolved parameters of one master-equation run."""

    scenario: str
    m: int
    g: float
    nbar: tuple
    cutoffs: tuple
    detunings: tuple
    dt: float
    t_end: float
    break_time: float | None
    post_signs: tuple | None
    sample_every: int

    @property
    def spec(self) -> SystemSpec:
        modes = tuple(ModeSpec(d, delta, n) for d, delta, n in zip(self.cutoffs, self.detunings, self.nbar))
        return SystemSpec(modes, gamma=1.0)

    @property
    def schedule(self) -> CouplingSchedule:
        first = tuple([self.g] * self.m)
        if self.break_time is None:
            return CouplingSchedule((), (first,))
        second = tuple(s * self.g for s in self.post_signs)
        return CouplingSchedule((self.break_time,), (first, second))

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _resolve(scenario: str, params: dict, m: int) -> DynamicRun:
    if m < 1:
        raise ConfigurationError(f"modes must be >= 1, got {m}")
    if not params["gamma_over_g"] > 0:
        raise ConfigurationError("gamma_over_g must be positive")
    g = 1.0 / params["gamma_over_g"]
    nbar = tuple(_per_mode(params["nbar"], m, "nbar"))
    cutoffs = tuple(_per_mode(params["cutoffs"], m, "cutoffs"))
    r = params["resonant_mode"]
    if not 0 <= r < m:
        raise ConfigurationError(f"resonant_mode {r} outside 0..{m - 1}")
    detunings = tuple((j - r) * params["detuning_step"] for j in range(m))
    rate = max(1.0, m * g, max(abs(x) for x in detunings))
    dt = params["dt"] if params["dt"] is not None else 0.01 / rate
    t_end = params["t_end"]
    if t_end is None:
        # eight bright-mode lifetimes, rounded up to the step grid
        t_end = math.ceil(round(8.0 / kappa(m, g, 1.0) / dt, 9)) * dt
    brk = params["break_time"]
    signs = None
    if brk is not None:
        signs = params["signs"] if params["signs"] is not None else [-1.0] + [1.0] * (m - 1)
        if len(signs) != m:
            raise ConfigurationError(f"signs has {len(signs)} entries, expected {m}")
        if not 0 < brk < t_end:
            raise ConfigurationError(f"break_time {brk} must lie inside (0, t_end={t_end})")
        signs = tuple(signs)
    elif params["signs"] is not None:
        raise ConfigurationError("signs only apply after a break; set break_time")
    run = DynamicRun(scenario, m, g, nbar, cutoffs, detunings, float(dt), float(t_end),
                     brk, signs, params["sample_every"])
    # re-validate against the library invariants before any work is done
    spec = run.spec
    EvolutionConfig(run.t_end, run.dt, run.sample_every)
    limit = stability_limit(spec, run.schedule)
    if run.dt > limit * (1 + 1e-9):
        raise ConfigurationError(f"dt={run.dt} exceeds the stability guard {limit:.6g}")
    return run


def resolve_runs(cfg: ScenarioConfig) -> list[DynamicRun]:
    params = {**PRESETS[cfg.scenario], **cfg.overrides}
    if params["modes"] is None:
        return [_resolve(cfg.scenario, params, m) for m in FIG2_MODES]
    return [_resolve(cfg.scenario, params, params["modes"])]


# --- serialization ------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def dumps_csv(columns: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def manifest_path(data_path: Path) -> Path:
    return data_path.with_name(data_path.name + ".manifest.json")


def _manifest(cfg, data_path, started, bindings, status="ok", **extra) -> dict:
    from . import __version__
    return {
        "artifact_version": __version__,
        "backend": _backend.BACKEND,
        "config": cfg.echo(),
        "constants": {**CONSTANTS, "gamma": 1.0, "units": "time in 1/gamma, rates and couplings in gamma"},
        "data_file": data_path.name,
        "preset": bindings,
        "status": status,
        "wall_seconds": time.perf_counter() - started,
        **extra,
    }


# --- scenarios ------------------------------------------------------------------------

def trajectory_columns(run: DynamicRun, rec: TrajectoryRecord) -> dict[str, np.ndarray]:
    """Ordered output columns for a master-equation run."""
    n_tot = rec["nbar_total"]
    n0 = n_tot[0]
    norm = n0 if n0 > 0 else 1.0
    cols = {
        "gamma_t": rec.times,
        "nbar_norm": n_tot / norm,
        "pe_norm": rec["pe"] / norm,
        "nbar_total": n_tot,
        "pe": rec["pe"],
    }
    for name in rec.values:
        if name.startswith("n_mode_"):
            cols[name] = rec[name]
    for name in rec.values:
        if name.startswith("n_coll_"):
            cols[name] = rec[name]
    cols["g1_intensity"] = rec["g1_intensity"]
    if "g1_intensity_broken" in rec.values:
        cols["g1_intensity_broken"] = rec["g1_intensity_broken"]
    if run.scenario == "fig2":
        k = kappa(run.m, run.g, 1.0)
        cols["nbar_effective"] = np.array([effective_nbar(t, run.m, n0, k) for t in rec.times]) / norm
    return cols


def simulate(run: DynamicRun) -> TrajectoryRecord:
    spec = run.spec
    obs = standard_observables(spec)
    if run.post_signs is not None:
        obs["g1_intensity_broken"] = standard_observables(spec, signs=run.post_signs)["g1_intensity"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rho0 = product_thermal(spec)
        rec = evolve(spec, run.schedule, rho0,
                     EvolutionConfig(run.t_end, run.dt, run.sample_every, obs))
    rec.metadata["warnings"] = sorted({str(w.message) for w in caught})
    return rec


def _invariants(rec: TrajectoryRecord) -> dict:
    d = rec.diagnostics
    if not len(rec.times):
        return {}
    return {
        "max_trace_error": float(np.max(d["trace_error"])),
        "max_hermiticity_error": float(np.max(d["hermiticity_error"])),
        "min_eigenvalue": float(np.min(d["min_eigenvalue"])),
        "samples": len(rec.times),
    }


def _emit_trajectory(cfg, run, rec, path, fmt, started, status="ok", failure=None):
    cols = trajectory_columns(run, rec) if len(rec.times) else {c: [] for c in LEAD_COLUMNS}
    names = list(cols)
    if fmt == "csv":
        text = dumps_csv(names, zip(*[cols[c] for c in names]))
    else:
        meta = {k: v for k, v in rec.metadata.items() if k not in ("wall_seconds", "backend")}
        text = dumps_json({"columns": names, "data": cols, "metadata": meta,
                           "parameters": run.as_dict(), "scenario": run.scenario})
    _write(path, text)
    extra = {"invariants": _invariants(rec), "warnings": rec.metadata.get("warnings", []),
             "schedule_digest": rec.metadata.get("schedule_digest")}
    if failure is not None:
        extra["failure"] = failure
    _write(manifest_path(path), dumps_json(_manifest(cfg, path, started, run.as_dict(), status, **extra)))


def _run_dynamic(cfg: ScenarioConfig) -> int:
    runs = resolve_runs(cfg)
    paths = cfg.outputs()
    for run, path in zip(runs, paths):
        started = time.perf_counter()
        log.info("%s M=%d: %d steps of dt=%g", run.scenario, run.m, round(run.t_end / run.dt), run.dt)
        try:
            rec = simulate(run)
        except IntegrationError as err:
            log.error("integration failed: %s", err)
            partial = err.partial or TrajectoryRecord(np.array([]), {}, {})
            _emit_trajectory(cfg, run, partial, path, cfg.fmt, started, "failed",
                             {"message": str(err), "gamma_t": err.time})
            return EXIT_NUMERIC
        _emit_trajectory(cfg, run, rec, path, cfg.fmt, started)
        log.info("wrote %s", path)
    return EXIT_OK


def survival_table(max_n: int = 10, max_m: int = 8) -> list[dict]:
    rows = []
    for m in range(2, max_m + 1):
        for n in range(1, max_n + 1):
            closed = survival_ratio(n, m)
            nested = nested_survival_ratio(n, m)
            rows.append({
                "n": n, "m": m,
                "survival_ratio": str(closed),
                "oracle_ratio": str(nested),
                "expected_ratio": str(Fraction(m - 1, m)),
                "initial_excitations": initial_excitations(n, m),
                "final_excitations": final_excitations(n, m),
                "count_dark": count_dark(n, m),
                "count_all": count_all(n, m),
                "match": closed == nested == Fraction(m - 1, m),
            })
    return rows


def _run_table(cfg: ScenarioConfig) -> int:
    started = time.perf_counter()
    params = {**PRESETS["figS1"], **cfg.overrides}
    if params["max_n"] < 1 or params["max_m"] < 2:
        raise ConfigurationError("figS1 needs max_n >= 1 and max_m >= 2")
    rows = survival_table(params["max_n"], params["max_m"])
    path = cfg.outputs()[0]
    if cfg.fmt == "csv":
        names = list(rows[0])
        text = dumps_csv(names, ([r[c] for c in names] for r in rows))
    else:
        text = dumps_json({"rows": rows, "scenario": "figS1"})
    _write(path, text)
    ok = all(r["match"] for r in rows)
    _write(manifest_path(path), dumps_json(_manifest(
        cfg, path, started, params, "ok" if ok else "failed",
        invariants={"all_ratios_match": ok, "rows": len(rows)})))
    return EXIT_OK if ok else EXIT_NUMERIC


def _run_planck(cfg: ScenarioConfig) -> int:
    started = time.perf_counter()
    temp = cfg.overrides.get("temperature")
    if temp is None:
        raise ConfigurationError("run planck needs --temperature")
    report = planck_report(temp).as_dict()
    path = cfg.outputs()[0]
    if cfg.fmt == "csv":
        names = sorted(report)
        text = dumps_csv(names, [[report[k] for k in names]])
    else:
        text = dumps_json(report)
    _write(path, text)
    ok = max(report["u_total_rel_err"], report["u_one_rel_err"]) < 1e-6
    _write(manifest_path(path), dumps_json(_manifest(
        cfg, path, started, {"temperature": temp}, "ok" if ok else "failed",
        invariants={"quadrature_matches": ok})))
    return EXIT_OK if ok else EXIT_NUMERIC


def run_scenario(cfg: ScenarioConfig) -> int:
    """Run one scenario, write its data file(s) and manifest(s), return an exit code."""
    try:
        if cfg.scenario == "figS1":
            return _run_table(cfg)
        if cfg.scenario == "planck":
            return _run_planck(cfg)
        return _run_dynamic(cfg)
    except IntegrationError as err:
        log.error("%s", err)
        return EXIT_NUMERIC
    except (DarkModesError, ValueError) as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG


# --- sweeps ---------------------------------------------------------------------------

def _config_from_entry(entry: dict, base: Path) -> ScenarioConfig:
    entry = dict(entry)
    try:
        scenario = entry.pop("scenario")
    except KeyError:
        raise ConfigurationError(f"sweep entry without a scenario: {entry}") from None
    out = entry.pop("out", None)
    fmt = entry.pop("format", None)
    overrides = entry.pop("overrides", {})
    overrides = {**overrides, **entry}
    if out is not None and not Path(out).is_absolute():
        out = str(base / out)
    return ScenarioConfig(scenario, overrides, out, fmt)


def load_manifest(path: str | Path) -> list[ScenarioConfig]:
    """Read a sweep manifest.

    JSON: a list of objects, or ``{"runs": [...]}``, each with ``scenario``,
    optional ``out``/``format`` and override keys (flat or under
    ``overrides``).  Plain text: one run per line as ``key=value`` tokens;
    ``#`` starts a comment.  Relative output paths resolve against the
    manifest's directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read manifest: {exc}") from None
    base = path.parent
    if text.lstrip().startswith(("[", "{")):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"bad JSON manifest: {exc}") from None
        entries = data.get("runs", []) if isinstance(data, dict) else data
    else:
        entries = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            entry = {}
            for tok in line.split():
                if "=" not in tok:
                    raise ConfigurationError(f"expected key=value, got {tok!r}")
                k, v = tok.split("=", 1)
                entry[k] = v
            entries.append(entry)
    return [_config_from_entry(e, base) for e in entries]


def run_sweep(configs: list[ScenarioConfig], workers: int = 1) -> int:
    """Run independent scenarios in up to ``workers`` processes."""
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")
    seen = {}
    for i, cfg in enumerate(configs):
        for p in cfg.outputs():
            key = os.path.abspath(p)
            if key in seen:
                raise ConfigurationError(f"runs {seen[key]} and {i} both write {p}")
            seen[key] = i
    if not configs:
        return EXIT_OK
    if workers == 1:
        codes = [run_scenario(c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(run_scenario, configs))
    failed = [(i, c) for i, c in enumerate(codes) if c != EXIT_OK]
    for i, code in failed:
        log.error("run %d (%s) failed with exit code %d", i, configs[i].scenario, code)
    return EXIT_SWEEP if failed else EXIT_OK


# --- argument parsing -----------------------------------------------------------------

def _pairs(extra: list[str]) -> dict:
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigurationError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise ConfigurationError(f"--{key} needs a value")
        out[key.replace("-", "_")] = val
    return out


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; here 2 means a numerical failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="darkmodes", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario preset; extra --key value pairs override it")
    r.add_argument("scenario", choices=SCENARIOS)
    r.add_argument("--out", default=None)
    r.add_argument("--format", choices=FORMATS, default=None)

    s = sub.add_parser("sweep", help="run the scenarios listed in a manifest file")
    s.add_argument("--manifest", required=True)
    s.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("count", help="state counts and excitation ratios with oracle checks")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--m", type=int, required=True)
    c.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = ScenarioConfig(args.scenario, _pairs(extra), args.out, args.format)
            return run_scenario(cfg)
        if extra:
            raise ConfigurationError(f"unrecognized arguments: {' '.join(extra)}")
        if args.command == "sweep":
            return run_sweep(load_manifest(args.manifest), args.workers)
        report = oracle_report(args.n, args.m)
        text = dumps_json({"n": args.n, "m": args.m, **report})
        if args.out:
            _write(Path(args.out), text)
        else:
            sys.stdout.write(text)
        ok = all(v["match"] for k, v in report.items() if isinstance(v, dict))
        ok = ok and all(r["match"] for r in report["count_fixed_n0"])
        return EXIT_OK if ok else EXIT_NUMERIC
    except (DarkModesError, ValueError) as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

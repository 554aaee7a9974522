"""Scenario suites, invariant-set checks and report files.

Suites are INI files: an optional ``[suite]`` section holds defaults and each
``[scenario:<name>]`` section describes one run.  Keys are ScenarioConfig
field names plus ``terrain`` (segment string, see :func:`parse_terrain`),
``noise`` (m), ``noise_seed``, ``smoothing_window`` and ``class`` (the
terrain class used to pool disturbance samples).
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import hlip
from .sim import STATUS_CODES, ScenarioConfig, TrajectoryLog, run, step_extractor
from .terrain import TerrainProfile, parse_terrain

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_SUITE",
    "BURN_IN_STEPS",
    "W_INFLATION",
    "Scenario",
    "ScenarioResult",
    "ClassSet",
    "SuiteReport",
    "parse_suite",
    "load_suite",
    "run_suite",
    "summarize",
    "check_invariant_set",
    "write_report",
    "analyze_dir",
    "SUMMARY_COLUMNS",
]

# error states before this step still remember the static start
BURN_IN_STEPS = 2
W_INFLATION = 0.05
TRANSIENT_TIME = 3.0
STEADY_STEPS = 10

DEFAULT_SUITE = """\
[suite]
v_star = 0.5
duration = 8.0

[scenario:flat_v0.2]
class = flat
terrain = flat()
v_star = 0.2
duration = 20.0

[scenario:flat_v0.5]
class = flat
terrain = flat()
v_star = 0.5
duration = 20.0

[scenario:flat_v0.8]
class = flat
terrain = flat()
v_star = 0.8
duration = 20.0

[scenario:slope_up10]
class = slope
terrain = flat(length=2.5); slope(angle_deg=10)
duration = 6.0

[scenario:slope_down10]
class = slope
terrain = flat(length=2.5); slope(angle_deg=-10)
duration = 6.0

[scenario:slope_up20]
class = slope
terrain = flat(length=2.5); slope(angle_deg=20)
duration = 6.0

[scenario:slope_down20]
class = slope
terrain = flat(length=2.5); slope(angle_deg=-20)
duration = 6.0

[scenario:slope_up30]
class = slope
terrain = flat(length=2.5); slope(angle_deg=30)
duration = 6.0

[scenario:slope_down30]
class = slope
terrain = flat(length=2.5); slope(angle_deg=-30)
duration = 6.0

[scenario:sine]
class = sine
terrain = flat(length=2.5); sine(amplitude=0.05, wavelength=1.5)
zd_source = noise_free
swing_terrain = noise_free
duration = 10.0

[scenario:stairs]
class = stairs
terrain = flat(length=2.5); stairs(rise=0.05, run=0.4)
duration = 10.0

[scenario:rough_dz0]
class = rough
terrain = flat(length=2.5); slope(angle_deg=10, length=1.0); sine(amplitude=0.04, wavelength=1.2, length=1.2); stairs(rise=0.05, run=0.4, length=1.2); slope(angle_deg=-10, length=1.0); flat()
noise = 0.0
noise_seed = 1
duration = 12.0

[scenario:rough_dz5]
class = rough
terrain = flat(length=2.5); slope(angle_deg=10, length=1.0); sine(amplitude=0.04, wavelength=1.2, length=1.2); stairs(rise=0.05, run=0.4, length=1.2); slope(angle_deg=-10, length=1.0); flat()
noise = 0.05
noise_seed = 1
duration = 12.0

[scenario:rough_dz10]
class = rough
terrain = flat(length=2.5); slope(angle_deg=10, length=1.0); sine(amplitude=0.04, wavelength=1.2, length=1.2); stairs(rise=0.05, run=0.4, length=1.2); slope(angle_deg=-10, length=1.0); flat()
noise = 0.10
noise_seed = 1
duration = 12.0
"""



@dataclass(frozen=True)
class Scenario:
    name: str
    klass: str
    config: ScenarioConfig


def _coerce(ftype, raw: str):
    raw = raw.strip()
    t = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    if "bool" in t:
        return raw.lower() in ("1", "true", "yes", "on")
    if "tuple" in t:
        if raw.lower() in ("none", ""):
            return None
        vals = [float(v) for v in raw.replace(";", ",").split(",")]
        if len(vals) != 4:
            raise ValueError("Q needs four comma-separated entries")
        return ((vals[0], vals[1]), (vals[2], vals[3]))
    if "int" in t and "float" not in t:
        return None if raw.lower() == "none" else int(raw)
    if "float" in t:
        return float(raw)
    return raw


def _scenario(name: str, values: dict, overrides: dict) -> Scenario:
    values = {**values, **{k: v for k, v in overrides.items() if v is not None}}
    klass = str(values.pop("class", name.split("_")[0]))
    tkw = {}
    segs = parse_terrain(str(values.pop("terrain", "flat()")))
    if "noise" in values:
        tkw["noise_magnitude"] = float(values.pop("noise"))
    if "noise_seed" in values:
        tkw["noise_seed"] = int(values.pop("noise_seed"))
    for k in ("smoothing_window", "x_start", "x_end"):
        if k in values:
            tkw[k] = float(values.pop(k))
    terrain = TerrainProfile(tuple(segs), **tkw)
    ftypes = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
    kwargs = {}
    for k, v in values.items():
        if k not in ftypes or k == "terrain":
            raise ValueError(f"scenario {name!r}: unknown key {k!r}")
        kwargs[k] = _coerce(ftypes[k], v) if isinstance(v, str) else v
    return Scenario(name, klass, ScenarioConfig(name=name, terrain=terrain, **kwargs))


def parse_suite(text: str, **overrides) -> list[Scenario]:
    """Scenarios from INI text; keyword overrides (e.g. ``duration``) apply to all."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    defaults = dict(cp["suite"]) if cp.has_section("suite") else {}
    out = []
    for sec in cp.sections():
        if not sec.startswith("scenario:"):
            if sec != "suite":
                raise ValueError(f"unknown section [{sec}]")
            continue
        name = sec.split(":", 1)[1].strip()
        out.append(_scenario(name, {**defaults, **dict(cp[sec])}, overrides))
    if not out:
        raise ValueError("suite has no [scenario:<name>] sections")
    return out


def load_suite(path: str | os.PathLike | None, **overrides) -> list[Scenario]:
    text = DEFAULT_SUITE if path in (None, "default") else Path(path).read_text()
    return parse_suite(text, **overrides)


@dataclass
class ScenarioResult:
    name: str
    klass: str
    status: str
    message: str
    v_star: float
    n_steps: int
    v_converged: float
    v_oscillation: float
    max_eta1: float
    min_F_ssp: float
    min_F_s2: float
    tube_violations: int
    saturations: int
    wall_time: float
    w: np.ndarray  # (n, 2)
    e: np.ndarray  # (n, 2) from step 0
    eps: np.ndarray  # (n,) step error left unexplained by the stepping law
    log: TrajectoryLog | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def summarize(name: str, klass: str, tlog: TrajectoryLog, wall: float = math.nan, keep_log: bool = True) -> ScenarioResult:
    """Per-run figures of merit, computed from the log alone."""
    meta = tlog.meta
    v_star = float(meta["v_star"])
    pd = tlog.steps("pd") if tlog.step_rows else np.zeros(0)
    steady = pd[-STEADY_STEPS:] if len(pd) > STEADY_STEPS + BURN_IN_STEPS else pd[BURN_IN_STEPS:]
    nan = math.nan
    if tlog.tick_rows:
        t = tlog.ticks("t")
        e1 = np.abs(tlog.ticks("eta1"))
        post = t > TRANSIENT_TIME
        max_eta1 = float(e1[post].max()) if post.any() else nan
        F_st = tlog.ticks("F_st")
        F_s1, F_s2 = tlog.ticks("F_s1"), tlog.ticks("F_s2")
        lo, hi = tlog.ticks("tube_lo"), tlog.ticks("tube_hi")
        dsp = tlog.ticks("phase") == 1
        min_F = float(np.nanmin(F_st)) if np.isfinite(F_st).any() else nan
        min_F2 = float(np.nanmin(F_s2)) if np.isfinite(F_s2).any() else nan
        tube_bad = int(np.sum(dsp & ((F_s1 < lo - 1e-6) | (F_s1 > hi + 1e-6))))
    else:
        max_eta1 = min_F = min_F2 = nan
        tube_bad = 0
    w = e = np.zeros((0, 2))
    eps = np.zeros(0)
    if len(tlog.step_rows) >= 2:
        model = hlip.s2s_matrices(float(meta["T_S"]), float(meta["T_D"]), float(meta["z0"]), float(meta["g"]))
        gait = hlip.make_gait(model, v_star, str(meta.get("velocity_convention", "pre_impact")))
        samples = step_extractor(tlog, model, gait)
        w = np.array([s.w for s in samples])
        e = np.array([s.e for s in samples])
        eps = np.array([s.eps for s in samples])
    return ScenarioResult(
        name=name,
        klass=klass,
        status=tlog.status,
        message=tlog.message,
        v_star=v_star,
        n_steps=len(tlog.step_rows),
        v_converged=float(pd[-5:].mean()) if len(pd) else nan,
        v_oscillation=float(np.ptp(steady)) if len(steady) else nan,
        max_eta1=max_eta1,
        min_F_ssp=min_F,
        min_F_s2=min_F2,
        tube_violations=tube_bad,
        saturations=int(float(meta.get("saturations", 0))),
        wall_time=wall,
        w=w,
        e=e,
        eps=eps,
        log=tlog if keep_log else None,
    )


@dataclass(frozen=True)
class ClassSet:
    """Disturbance box and error invariant set for one terrain class."""

    klass: str
    W: hlip.Box
    E: hlip.ConvexPolygon
    n_samples: int


def class_set(klass: str, results: Sequence[ScenarioResult], model: hlip.S2SModel, inflation: float = W_INFLATION) -> ClassSet:
    pts = [w for r in results if r.klass == klass for w in r.w]
    if not pts:
        raise ValueError(f"no disturbance samples for class {klass!r}")
    W = hlip.bounding_box(pts, inflation)
    gait = hlip.make_gait(model, 0.0)
    E = hlip.error_invariant_set(hlip.closed_loop_matrix(model, gait.K_db), W)
    return ClassSet(klass, W, E, len(pts))


def membership(E: hlip.ConvexPolygon, e: np.ndarray, burn_in: int = BURN_IN_STEPS, tol: float = 1e-9) -> float:
    pts = e[burn_in:]
    if len(pts) == 0:
        return math.nan
    return float(np.mean([E.contains(p, tol) for p in pts]))


@dataclass
class SuiteReport:
    results: list
    sets: dict  # class -> ClassSet, pooled per terrain class
    flat_set: ClassSet | None
    membership_own: dict  # scenario -> fraction inside its class E
    membership_flat: dict  # scenario -> fraction inside the flat-derived E
    wall_time: float

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.results)

    def result(self, name: str) -> ScenarioResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def check_invariant_set(results: Sequence[ScenarioResult], model: hlip.S2SModel) -> tuple[dict, ClassSet | None, dict, dict]:
    """Pool ``w`` per terrain class, build ``E`` and test every ``e_k`` against it.

    Returns ``(class sets, flat set, own-class membership, flat-E membership)``.
    """
    usable = [r for r in results if len(r.w)]
    if not usable:
        raise ValueError("no run produced step samples")
    sets = {k: class_set(k, usable, model) for k in sorted({r.klass for r in usable})}
    flat = sets.get("flat")
    own = {r.name: membership(sets[r.klass].E, r.e) for r in usable}
    vs_flat = {r.name: membership(flat.E, r.e) for r in usable} if flat else {}
    return sets, flat, own, vs_flat


def _run_one(sc: Scenario) -> tuple[TrajectoryLog, float]:
    t1 = time.perf_counter()
    tlog = run(sc.config)
    return tlog, time.perf_counter() - t1


def run_suite(
    scenarios: Iterable[Scenario],
    out_dir: str | os.PathLike | None = None,
    keep_logs: bool = True,
    jobs: int = 1,
) -> SuiteReport:
    """Run every scenario; failures are recorded and the suite goes on.

    With ``jobs > 1`` scenarios run in worker processes; results are still
    reduced in suite order, so the report does not depend on scheduling.
    """
    t0 = time.perf_counter()
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("empty suite")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_one, scenarios))
    else:
        outcomes = map(_run_one, scenarios)
    results = []
    for sc, (tlog, wall) in zip(scenarios, outcomes):
        tlog.meta["class"] = sc.klass
        log.info("%s: %s (%.1f s)", sc.name, tlog.status, wall)
        if out_dir is not None:
            tlog.write_csv(Path(out_dir) / "runs" / sc.name)
        results.append(summarize(sc.name, sc.klass, tlog, wall, keep_logs))
    c = scenarios[0].config
    model = hlip.s2s_matrices(c.T_S, c.T_D, c.z0, c.g)
    sets, flat, own, vs_flat = check_invariant_set(results, model)
    report = SuiteReport(results, sets, flat, own, vs_flat, time.perf_counter() - t0)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


SUMMARY_COLUMNS = (
    "name", "class", "status", "exit_code", "v_star", "n_steps", "v_converged",
    "v_oscillation", "max_eta1", "min_F_ssp", "min_F_s2", "tube_violations",
    "saturations", "W_lo_p", "W_lo_pd", "W_hi_p", "W_hi_pd", "E_in_class", "E_in_flat",
    "wall_time",
)  # fmt: skip


def _f(v) -> str:
    return format(v, ".17g") if isinstance(v, float) else str(v)


def write_report(report: SuiteReport, out_dir: str | os.PathLike) -> Path:
    """Suite summary plus plot-ready data; every number traces back to the run CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(SUMMARY_COLUMNS)
        for r in report.results:
            cs = report.sets.get(r.klass)
            lo = cs.W.lo if cs else (math.nan, math.nan)
            hi = cs.W.hi if cs else (math.nan, math.nan)
            row = (
                r.name, r.klass, r.status, STATUS_CODES[r.status], r.v_star, r.n_steps,
                r.v_converged, r.v_oscillation, r.max_eta1, r.min_F_ssp, r.min_F_s2,
                r.tube_violations, r.saturations, float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]),
                report.membership_own.get(r.name, math.nan), report.membership_flat.get(r.name, math.nan),
                r.wall_time,
            )  # fmt: skip
            wr.writerow([_f(v) for v in row])
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    with open(plots / "invariant_sets.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("class", "kind", "index", "e_p", "e_pd"))
        for k, cs in report.sets.items():
            for i, v in enumerate(cs.W.vertices()):
                wr.writerow((k, "W", i, _f(float(v[0])), _f(float(v[1]))))
            for i, v in enumerate(cs.E.vertices):
                wr.writerow((k, "E", i, _f(v[0]), _f(v[1])))
    with open(plots / "error_states.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("name", "class", "k", "e_p", "e_pd", "w_p", "w_pd", "eps"))
        for r in report.results:
            for k, (e, w, ep) in enumerate(zip(r.e, r.w, r.eps)):
                vals = (float(e[0]), float(e[1]), float(w[0]), float(w[1]), float(ep))
                wr.writerow((r.name, r.klass, k, *map(_f, vals)))
    with open(plots / "velocity_traces.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("name", "t", "x", "xd", "z", "zd_ref"))
        for r in report.results:
            if r.log is None or not r.log.tick_rows:
                continue
            t, x, xd = r.log.ticks("t"), r.log.ticks("x"), r.log.ticks("xd")
            z, zr = r.log.ticks("z"), r.log.ticks("zd_ref")
            for i in range(0, len(t), 10):
                wr.writerow((r.name, _f(float(t[i])), _f(float(x[i])), _f(float(xd[i])), _f(float(z[i])), _f(float(zr[i]))))
    with open(plots / "phase_portrait.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("name", "k", "p", "pd"))
        for r in report.results:
            if r.log is None:
                continue
            for k, (p, pd) in enumerate(zip(r.log.steps("p"), r.log.steps("pd"))):
                wr.writerow((r.name, k, _f(float(p)), _f(float(pd))))
    (plots / "LEGEND.txt").write_text(
        "invariant_sets.csv: vertices of the disturbance box W and error set E per terrain class, "
        "in pre-impact error coordinates (e_p m, e_pd m/s).\n"
        "error_states.csv: per-step error e_k = x_k - x* and disturbance w_k (same units), "
        "plus eps = u_k - u* - K e_k (m), the part of the realized step not explained by the stepping law.\n"
        "velocity_traces.csv: mass position x (m), velocity xd (m/s), height z (m) and "
        "filtered height reference zd_ref (m), every 10th control tick.\n"
        "phase_portrait.csv: pre-impact p = x - stance foot (m) and pd (m/s) at each touchdown.\n"
    )
    return out / "summary.csv"


def _run_dirs(path: Path) -> list[Path]:
    if (path / "steps.csv").exists():
        return [path]
    base = path / "runs" if (path / "runs").is_dir() else path
    dirs = sorted(d for d in base.iterdir() if (d / "steps.csv").exists())
    if not dirs:
        raise FileNotFoundError(f"no run logs under {path}")
    return dirs


def analyze_dir(path: str | os.PathLike) -> SuiteReport:
    """Rebuild a suite report from run CSVs on disk."""
    results = []
    model = None
    for d in _run_dirs(Path(path)):
        tlog = TrajectoryLog.read_csv(d)
        klass = str(tlog.meta.get("class", tlog.name.split("_")[0]))
        results.append(summarize(tlog.name, klass, tlog))
        if model is None:
            m = tlog.meta
            model = hlip.s2s_matrices(float(m["T_S"]), float(m["T_D"]), float(m["z0"]), float(m["g"]))
    sets, flat, own, vs_flat = check_invariant_set(results, model)
    return SuiteReport(results, sets, flat, own, vs_flat, math.nan)

# Simulation harness: experiment configuration with presets, the seeded
# replication engine, and CSV persistence for result and trace records.
#
# Determinism contract: (config, base_seed) fully determines every numeric
# column except wall_time_ms. Replication k of a channel draws its data from
# child_seed = mix64(base_seed, k, channel_tag); the same child seed is used
# across grid cells, which gives common random numbers along the n-grid and
# keeps outputs independent of the parallelism degree and completion order
# (records are sorted by cell and rep_index before writing). Each
# replication's numeric work runs under a single BLAS thread so parallel
# and serial execution produce bit-identical records.

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from threadpoolctl import threadpool_limits

from .datagen import CorruptionSpec, gen_dataset, gen_ground_truth_exact, \
    gen_ground_truth_lq, mix64
from .solver import SolverConfig, lambda_rule_sqrt, omega_rule_truth, \
    relative_error, solve, step_constant_from_sigma_x
from .surrogate import build_for_instance
from .diagnostics import deviation_statistic

RESULT_COLUMNS = [
    "preset", "channel", "d1", "d2", "n", "rep_index", "seed", "lambda",
    "omega", "v", "iterations", "converged", "rel_error", "final_objective",
    "deviation_statistic", "wall_time_ms", "status",
]
TRACE_COLUMNS = [
    "preset", "channel", "d1", "d2", "n", "rep_index", "seed", "t",
    "objective", "dist_to_final", "nuclear_norm",
]
SUMMARY_COLUMNS = ["preset", "channel", "d1", "d2", "n", "reps_ok",
                   "mean_rel_error"]


class ConfigError(Exception):
    """Invalid experiment configuration; message names the offending key."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: grid, model parameters, tuning rules, output paths.

    sample_grid holds sample sizes when grid_kind is "n" and n/d ratios when
    it is "ratio" (n = ceil(ratio * max(d1, d2))). lambda_value, omega_value
    and v_value override the default rules sqrt(max(d1, d2) / n),
    1.1 * ||Theta*||_* and 2 * lambda_max(Sigma_x) when set.
    """

    preset: str = "custom"
    channel: str = "additive"
    dims: tuple = ()
    sample_grid: tuple = ()
    grid_kind: str = "ratio"
    rank: int | None = None
    q: float | None = None
    rq: float | None = None
    sigma_eps: float = 0.1
    sigma_w: float = 0.2
    rho: float = 0.2
    reps: int = 1
    base_seed: int = 20230915
    lambda_value: float | None = None
    omega_value: float | None = None
    v_value: float | None = None
    max_iters: int = 2000
    stop_tol: float = 1e-9
    trace_every: int = 1
    parallelism: int = 1
    out: str | None = None
    trace_out: str | None = None

    def __post_init__(self):
        if self.channel not in ("clean", "additive", "missing"):
            raise ConfigError(f"channel must be clean|additive|missing, got {self.channel!r}")
        if not self.dims:
            raise ConfigError("d: dimension grid must be nonempty")
        if not self.sample_grid:
            raise ConfigError("n-grid/alpha-grid: sample grid must be nonempty")
        if self.grid_kind not in ("n", "ratio"):
            raise ConfigError(f"grid_kind must be n|ratio, got {self.grid_kind!r}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.rank is None and (self.q is None or self.rq is None):
            raise ConfigError("rank: either rank or both q and rq must be set")
        if not 0 <= self.rho < 1:
            raise ConfigError(f"rho must be in [0, 1), got {self.rho}")
        if self.sigma_w < 0:
            raise ConfigError(f"sigma-w must be >= 0, got {self.sigma_w}")
        if self.sigma_eps < 0:
            raise ConfigError(f"sigma-eps must be >= 0, got {self.sigma_eps}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")

    def corruption_spec(self) -> CorruptionSpec:
        if self.channel == "clean":
            return CorruptionSpec.clean()
        if self.channel == "additive":
            return CorruptionSpec.additive(self.sigma_w)
        return CorruptionSpec.missing(self.rho)

    def sample_sizes(self, d1: int, d2: int) -> list:
        d = max(d1, d2)
        if self.grid_kind == "ratio":
            return [int(math.ceil(g * d)) for g in self.sample_grid]
        return [int(g) for g in self.sample_grid]


# Desk-scale presets keep the acceptance suite in minutes; the full-scale
# protocol grids stay available behind the -full presets.
PRESETS = {
    "consistency": dict(
        channel="additive", dims=((32, 32), (64, 64)),
        sample_grid=(5.0, 10.0, 20.0, 40.0), grid_kind="ratio", rank=5,
        sigma_eps=0.1, sigma_w=0.2, rho=0.2, reps=20, trace_every=10),
    "rescaled": dict(
        channel="additive", dims=((32, 32), (64, 64)),
        sample_grid=(5.0, 10.0, 20.0, 40.0), grid_kind="ratio", rank=5,
        sigma_eps=0.1, sigma_w=0.2, rho=0.2, reps=20, trace_every=10),
    "convergence": dict(
        channel="additive", dims=((64, 64),), sample_grid=(15.0, 30.0, 50.0),
        grid_kind="ratio", rank=5, sigma_eps=0.1, sigma_w=0.2, rho=0.2,
        reps=1, trace_every=1),
    "convergence-small": dict(
        channel="additive", dims=((32, 32),), sample_grid=(10.0, 20.0, 30.0),
        grid_kind="ratio", rank=3, sigma_eps=0.1, sigma_w=0.2, rho=0.2,
        reps=1, trace_every=1),
    "consistency-full": dict(
        channel="additive", dims=((64, 64), (128, 128), (256, 256)),
        sample_grid=(3.0, 5.0, 8.0, 13.0, 21.0, 34.0), grid_kind="ratio",
        rank=10, sigma_eps=0.1, sigma_w=0.2, rho=0.2, reps=100,
        trace_every=25),
    "convergence-full": dict(
        channel="additive", dims=((128, 128),), sample_grid=(15.0, 30.0, 50.0),
        grid_kind="ratio", rank=10, sigma_eps=0.1, sigma_w=0.2, rho=0.2,
        reps=1, trace_every=1),
    "custom": dict(),
}


@dataclass(frozen=True)
class ResultRecord:
    preset: str
    channel: str
    d1: int
    d2: int
    n: int
    rep_index: int
    seed: int
    lam: float
    omega: float
    v: float
    iterations: int
    converged: bool
    rel_error: float
    final_objective: float
    deviation_statistic: float
    wall_time_ms: int
    status: str = "ok"

    def to_row(self) -> list:
        return [self.preset, self.channel, self.d1, self.d2, self.n,
                self.rep_index, self.seed, self.lam, self.omega, self.v,
                self.iterations, self.converged, self.rel_error,
                self.final_objective, self.deviation_statistic,
                self.wall_time_ms, self.status]


@dataclass(frozen=True)
class TraceRecord:
    preset: str
    channel: str
    d1: int
    d2: int
    n: int
    rep_index: int
    seed: int
    t: int
    objective: float
    dist_to_final: float
    nuclear_norm: float

    def to_row(self) -> list:
        return [self.preset, self.channel, self.d1, self.d2, self.n,
                self.rep_index, self.seed, self.t, self.objective,
                self.dist_to_final, self.nuclear_norm]


@dataclass
class RunDetail:
    """In-memory leftovers of one replication, for diagnostics and tests."""

    d1: int
    d2: int
    n: int
    rep_index: int
    seed: int
    channel: str
    lam: float
    omega: float
    v: float
    q: float
    rq: float
    theta_star: np.ndarray
    theta_hat: np.ndarray
    converged: bool
    rel_error: float
    trace_iterations: list
    trace_objectives: list
    trace_nuclear_norms: list
    trace_ref_distances: list


@dataclass
class CellSummary:
    preset: str
    channel: str
    d1: int
    d2: int
    n: int
    reps_ok: int
    mean_rel_error: float

    def to_row(self) -> list:
        return [self.preset, self.channel, self.d1, self.d2, self.n,
                self.reps_ok, self.mean_rel_error]


@dataclass
class HarnessRun:
    records: list
    summaries: list
    trace_records: list
    details: list

    @property
    def any_dead_cell(self) -> bool:
        return any(s.reps_ok == 0 for s in self.summaries)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_results(records, path) -> None:
    """Result CSV: fixed column order, 17-significant-digit reals, LF ends."""
    _write_csv(path, RESULT_COLUMNS, (r.to_row() for r in records))


def write_traces(records, path) -> None:
    _write_csv(path, TRACE_COLUMNS, (r.to_row() for r in records))


def write_summary(summaries, path) -> None:
    _write_csv(path, SUMMARY_COLUMNS, (s.to_row() for s in summaries))


def read_csv_rows(path):
    """Read back a harness CSV as (columns, list of dict rows of strings)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [dict(zip(header, row)) for row in reader]


def summary_path_for(out_path: str) -> str:
    stem, dot, ext = out_path.rpartition(".")
    if dot:
        return f"{stem}_summary.{ext}"
    return f"{out_path}_summary"


# ---------------------------------------------------------------------------
# replication engine
# ---------------------------------------------------------------------------

def _guarded(task, rep_index, child_seed):
    # single-thread BLAS per record so results do not depend on how many
    # workers share the machine; failures are isolated to the record
    with threadpool_limits(limits=1):
        try:
            return rep_index, "ok", task(rep_index, child_seed)
        except Exception as exc:
            return rep_index, "error", f"{type(exc).__name__}: {exc}"


def run_replications(task, reps, base_seed, parallelism=1, channel_tag=0):
    """Run task(rep_index, child_seed) for rep_index in range(reps).

    child_seed = mix64(base_seed, rep_index, channel_tag). Output order is
    by rep_index regardless of parallelism or completion order; an exception
    in one replication becomes that replication's ("error", message) outcome.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    seeds = [mix64(base_seed, k, channel_tag) for k in range(reps)]
    if parallelism <= 1:
        outcomes = [_guarded(task, k, seeds[k]) for k in range(reps)]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(_guarded, task, k, seeds[k])
                       for k in range(reps)]
            outcomes = [f.result() for f in futures]
    outcomes.sort(key=lambda item: item[0])
    return [(status, payload) for _, status, payload in outcomes]


def _tuning(config: ExperimentConfig, d1, d2, n, theta_star):
    lam = config.lambda_value if config.lambda_value is not None \
        else lambda_rule_sqrt(d1, d2, n)
    omega = config.omega_value if config.omega_value is not None \
        else omega_rule_truth(theta_star)
    v = config.v_value if config.v_value is not None \
        else step_constant_from_sigma_x(1.0, d1)
    return lam, omega, v


def _ground_truth(config: ExperimentConfig, d1, d2, seed):
    if config.rank is not None:
        return gen_ground_truth_exact(d1, d2, config.rank, 1.0, seed)
    return gen_ground_truth_lq(d1, d2, config.q, config.rq, seed=seed)


def _run_rep(config: ExperimentConfig, d1, d2, n, want_detail, need_trace,
             rep_index, child_seed):
    t0 = time.perf_counter()
    gt = _ground_truth(config, d1, d2, child_seed)
    inst = gen_dataset(gt, n, 1.0, config.sigma_eps,
                       config.corruption_spec(), child_seed)
    pair = build_for_instance(inst)
    lam, omega, v = _tuning(config, d1, d2, n, gt.theta_star)
    solver_cfg = SolverConfig(lam=lam, omega=omega, v=v,
                              max_iters=config.max_iters,
                              stop_tol=config.stop_tol,
                              trace_every=config.trace_every)
    reference = None if need_trace else gt.theta_star
    result = solve(pair, solver_cfg, None, reference=reference)
    rel = relative_error(result.theta_hat, gt.theta_star)
    dev = deviation_statistic(pair, gt.theta_star)
    wall_ms = int(round((time.perf_counter() - t0) * 1000))
    record = ResultRecord(
        preset=config.preset, channel=config.channel, d1=d1, d2=d2, n=n,
        rep_index=rep_index, seed=child_seed, lam=lam, omega=omega, v=v,
        iterations=result.iterations_run, converged=result.converged,
        rel_error=rel, final_objective=result.final_objective,
        deviation_statistic=dev, wall_time_ms=wall_ms)
    detail = None
    if want_detail:
        detail = RunDetail(
            d1=d1, d2=d2, n=n, rep_index=rep_index, seed=child_seed,
            channel=config.channel, lam=lam, omega=omega, v=v, q=gt.q,
            rq=gt.radius, theta_star=gt.theta_star, theta_hat=result.theta_hat,
            converged=result.converged, rel_error=rel,
            trace_iterations=list(result.trace.iterations),
            trace_objectives=list(result.trace.objectives),
            trace_nuclear_norms=list(result.trace.nuclear_norms),
            trace_ref_distances=list(result.trace.ref_distances))
    traces = None
    if need_trace:
        traces = [
            TraceRecord(preset=config.preset, channel=config.channel, d1=d1,
                        d2=d2, n=n, rep_index=rep_index, seed=child_seed,
                        t=t, objective=obj, dist_to_final=dist,
                        nuclear_norm=nuc)
            for t, obj, dist, nuc in zip(result.trace.iterations,
                                         result.trace.objectives,
                                         result.trace.ref_distances,
                                         result.trace.nuclear_norms)
        ]
    return record, detail, traces


def _error_record(config, d1, d2, n, rep_index, seed, message) -> ResultRecord:
    return ResultRecord(
        preset=config.preset, channel=config.channel, d1=d1, d2=d2, n=n,
        rep_index=rep_index, seed=seed, lam=math.nan, omega=math.nan,
        v=math.nan, iterations=0, converged=False, rel_error=math.nan,
        final_objective=math.nan, deviation_statistic=math.nan,
        wall_time_ms=0, status=f"error: {message}")


def _run_grid(config: ExperimentConfig, collect_details, need_trace) -> HarnessRun:
    tag = config.corruption_spec().tag
    records, summaries, trace_records, details = [], [], [], []
    for d1, d2 in config.dims:
        for n in config.sample_sizes(d1, d2):
            task = partial(_run_rep, config, d1, d2, n, collect_details,
                           need_trace)
            outcomes = run_replications(task, config.reps, config.base_seed,
                                        config.parallelism, tag)
            ok_errors = []
            for k, (status, payload) in enumerate(outcomes):
                seed = mix64(config.base_seed, k, tag)
                if status == "ok":
                    record, detail, traces = payload
                    records.append(record)
                    if detail is not None:
                        details.append(detail)
                    if traces is not None:
                        trace_records.extend(traces)
                    ok_errors.append(record.rel_error)
                else:
                    records.append(_error_record(config, d1, d2, n, k, seed,
                                                 payload))
            mean_err = float(np.mean(ok_errors)) if ok_errors else math.nan
            summaries.append(CellSummary(
                preset=config.preset, channel=config.channel, d1=d1, d2=d2,
                n=n, reps_ok=len(ok_errors), mean_rel_error=mean_err))
    return HarnessRun(records=records, summaries=summaries,
                      trace_records=trace_records, details=details)


def run_consistency(config: ExperimentConfig,
                    collect_details: bool = False) -> HarnessRun:
    """Replication sweep over the (d, n) grid; one record per replication.

    Writes the result CSV to config.out (plus a *_summary.csv with the mean
    relative error per cell) when the path is set.
    """
    run = _run_grid(config, collect_details, need_trace=False)
    if config.out:
        write_results(run.records, config.out)
        write_summary(run.summaries, summary_path_for(config.out))
    return run


def run_convergence(config: ExperimentConfig,
                    collect_details: bool = False) -> HarnessRun:
    """Fully traced solves over the ratio grid, for convergence plots.

    Trace rows log the distance to the final iterate; they go to
    config.trace_out when set (result records additionally go to config.out).
    """
    run = _run_grid(config, collect_details, need_trace=True)
    if config.trace_out:
        write_traces(run.trace_records, config.trace_out)
    if config.out:
        write_results(run.records, config.out)
        write_summary(run.summaries, summary_path_for(config.out))
    return run


def check_monotone_consistency(summaries, allowed_violations: int = 1):
    """Check mean rel_error is decreasing in n per (d1, d2) curve.

    Returns a list of (d1, d2, violations) triples whose violation count
    exceeds the allowance; empty means the consistency property holds.
    """
    curves = {}
    for s in summaries:
        curves.setdefault((s.d1, s.d2), []).append((s.n, s.mean_rel_error))
    failures = []
    for (d1, d2), points in curves.items():
        points.sort()
        errs = [e for _, e in points]
        violations = sum(1 for a, b in zip(errs, errs[1:]) if not b < a)
        if violations > allowed_violations:
            failures.append((d1, d2, violations))
    return failures


# ---------------------------------------------------------------------------
# configuration parsing: flags override file values override preset defaults
# ---------------------------------------------------------------------------

def _parse_dims(text):
    dims = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "x" in part:
            a, _, b = part.partition("x")
            dims.append((int(a), int(b)))
        else:
            dims.append((int(part), int(part)))
    if not dims:
        raise ValueError("empty")
    return tuple(dims)


def _parse_float_list(text):
    values = tuple(float(p) for p in str(text).split(",") if p.strip())
    if not values:
        raise ValueError("empty")
    return values


def _parse_bounded(caster, low=None, high=None, low_open=False, high_open=False):
    def parse(text):
        value = caster(text)
        if low is not None and (value <= low if low_open else value < low):
            raise ValueError("range")
        if high is not None and (value >= high if high_open else value > high):
            raise ValueError("range")
        return value
    return parse


# key -> (config field, parser, legal-range description)
_KEY_SPECS = {
    "preset": ("preset", str, "a preset name"),
    "channel": ("channel", str, "clean|additive|missing"),
    "d": ("dims", _parse_dims, "comma list of sizes, e.g. 32,64 or 32x48"),
    "n-grid": ("sample_grid", _parse_float_list, "comma list of sample sizes"),
    "alpha-grid": ("sample_grid", _parse_float_list, "comma list of n/d ratios"),
    "rank": ("rank", _parse_bounded(int, low=1), "integer >= 1"),
    "q": ("q", _parse_bounded(float, low=0.0, high=1.0, low_open=True),
          "float in (0, 1]"),
    "rq": ("rq", _parse_bounded(float, low=0.0, low_open=True), "float > 0"),
    "sigma-w": ("sigma_w", _parse_bounded(float, low=0.0), "float >= 0"),
    "sigma-eps": ("sigma_eps", _parse_bounded(float, low=0.0), "float >= 0"),
    "rho": ("rho", _parse_bounded(float, low=0.0, high=1.0, high_open=True),
            "float in [0, 1)"),
    "reps": ("reps", _parse_bounded(int, low=1), "integer >= 1"),
    "seed": ("base_seed", int, "integer"),
    "lambda": ("lambda_value", _parse_bounded(float, low=0.0, low_open=True),
               "float > 0"),
    "omega": ("omega_value", _parse_bounded(float, low=0.0, low_open=True),
              "float > 0"),
    "v": ("v_value", _parse_bounded(float, low=0.0, low_open=True), "float > 0"),
    "max-iters": ("max_iters", _parse_bounded(int, low=1), "integer >= 1"),
    "tol": ("stop_tol", _parse_bounded(float, low=0.0, low_open=True),
            "float > 0"),
    "trace-every": ("trace_every", _parse_bounded(int, low=1), "integer >= 1"),
    "parallelism": ("parallelism", _parse_bounded(int, low=1), "integer >= 1"),
    "out": ("out", str, "path"),
    "trace-out": ("trace_out", str, "path"),
}


def _coerce_layer(raw: dict, source: str) -> dict:
    fields = {}
    grid_keys = [k for k in ("n-grid", "alpha-grid") if k in raw]
    if len(grid_keys) == 2:
        raise ConfigError(f"{source}: n-grid and alpha-grid are exclusive")
    for key, value in raw.items():
        if key not in _KEY_SPECS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        target, parser, legal = _KEY_SPECS[key]
        try:
            fields[target] = parser(value)
        except (ValueError, TypeError):
            raise ConfigError(
                f"{source}: invalid value {value!r} for {key}; expected {legal}"
            ) from None
    if grid_keys:
        fields["grid_kind"] = "n" if grid_keys[0] == "n-grid" else "ratio"
    return fields


def read_config_file(path) -> dict:
    """Flat key=value file mirroring the flag names; # starts a comment."""
    raw = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                raw[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return raw


def parse_config(config_file=None, flag_values=None) -> ExperimentConfig:
    """Build the effective configuration.

    Precedence: command-line flags override file values override preset
    defaults. The preset may itself come from either source (flag wins).
    """
    file_raw = read_config_file(config_file) if config_file else {}
    flag_raw = dict(flag_values or {})

    preset = flag_raw.get("preset", file_raw.get("preset", "custom"))
    if preset not in PRESETS:
        raise ConfigError(
            f"preset: unknown preset {preset!r}; available: "
            + ", ".join(sorted(PRESETS)))

    merged = {"preset": preset}
    merged.update(PRESETS[preset])
    for layer, source in ((file_raw, "config file"), (flag_raw, "flags")):
        coerced = _coerce_layer(layer, source)
        coerced.pop("preset", None)
        # an lq certificate in a layer replaces a preset's exact-rank truth
        if ("q" in coerced or "rq" in coerced) and "rank" not in coerced:
            merged["rank"] = None
        merged.update(coerced)

    try:
        return ExperimentConfig(**merged)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

"""Scenario configuration, seeded execution and regression comparison.

Configs are YAML mappings with hyphenated keys, e.g.::

    scenario: fig2-sweep
    seed: 1
    alpha: 1000
    eta: 0.54

Every stochastic section draws from ``stream(seed, scenario, section)``;
Monte Carlo shards inside a section get their own streams (see
:mod:`micromacro.streams`). Result files depend only on the config, while
wall-clock time and the version live in ``report.json``.
"""
import argparse
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, fock
from .channels import ImperfectionParams
from .detection import DEFAULT_SHARD, METRIC_MIN_COUNT, default_windows, point_discrimination, run_conditional
from .errors import ConfigError, ReportSchemaError
from .frame import (ASYMPTOTIC_MIN_ABS_ALPHA, EXACT_MAX_ABS_ALPHA, DisplacedState, photon_pmf_exact,
                    photon_sample_asymptotic)
from .streams import stream
from .tomography import (concurrence, concurrence_vs_loss, default_phase_pairs, inject_residual_offset,
                         mle_reconstruct, residual_filter, sample_quadratures, verification_state)

SCENARIOS = ("fig2-sweep", "discrimination", "tomography", "loss-sweep", "engine-xval")
CLI_ENGINES = ("exact", "asymptotic")
# amplitude matching the experiment's 1.6e8 photons, for reference configs
EXPERIMENT_ALPHA = 1.265e4

_DEFAULT_SHOTS = {
    "fig2-sweep": 1_000_000,
    "discrimination": 1_000_000,
    "tomography": 20_000,  # per phase pair
    "loss-sweep": 20_000,  # per phase pair, monte-carlo pipeline only
    "engine-xval": 1_000_000,
}
_DEFAULT_ALPHA = {"engine-xval": 6.0}

# micro test states for engine cross-validation
XVAL_STATES = {
    "vacuum": (1.0, 0.0),
    "one": (0.0, 1.0),
    "cat_plus": (1 / math.sqrt(2), 1 / math.sqrt(2)),
    "cat_i": (1 / math.sqrt(2), 1j / math.sqrt(2)),
}


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int = 0
    alpha: float = None
    eta: float = 0.54
    epsilon2: float = 0.015
    sigma_phi: float = 0.0
    t: float = 1.0
    shots: int = None
    engine: str = "asymptotic"
    out: str = "results"
    theta_a: float = 0.0
    orthogonal: bool = True
    bins: dict = field(default_factory=lambda: {"lo": -3.15, "hi": 3.15, "n": 21})
    windows: list = None
    threshold: float = 0.0
    reference: bool = True
    conditioning: str = "point"
    x_condition: float = 1 / math.sqrt(2)
    phase_pairs: list = None
    residual_offset: float = 10.0
    dim: int = 3
    max_iter: int = 2000
    tolerance: float = 1e-9
    bootstrap: int = 8
    pipeline: str = "analytic"
    t_grid: list = None
    shard_size: int = DEFAULT_SHARD
    metric_min_count: int = METRIC_MIN_COUNT

    @property
    def params(self):
        return ImperfectionParams(self.eta, self.epsilon2, self.sigma_phi, self.t)

    def to_dict(self):
        return {k.replace("_", "-"): v for k, v in dataclasses.asdict(self).items()}


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _fail(name, msg):
    raise ConfigError(f"{name.replace('_', '-')}: {msg}")


def _validate(cfg):
    if cfg.scenario not in SCENARIOS:
        _fail("scenario", f"must be one of {SCENARIOS}, got {cfg.scenario!r}")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        _fail("seed", "must be a 64-bit unsigned integer")
    for name in ("eta", "epsilon2", "t"):
        v = getattr(cfg, name)
        if not 0.0 <= v <= 1.0:
            _fail(name, f"must lie in [0, 1], got {v}")
    if cfg.sigma_phi < 0:
        _fail("sigma_phi", "must be >= 0")
    if cfg.alpha < 0:
        _fail("alpha", "must be >= 0")
    if not isinstance(cfg.shots, int) or cfg.shots < 1:
        _fail("shots", "must be an integer >= 1")
    if cfg.engine not in CLI_ENGINES:
        _fail("engine", f"must be one of {CLI_ENGINES}")
    if cfg.scenario != "engine-xval":
        if cfg.engine == "exact" and cfg.alpha > EXACT_MAX_ABS_ALPHA:
            _fail("engine", f"exact engine is limited to alpha <= {EXACT_MAX_ABS_ALPHA} "
                            f"(alpha-squared {cfg.alpha ** 2:.4g}); use engine: asymptotic")
        if cfg.engine == "asymptotic" and cfg.scenario in ("fig2-sweep", "discrimination") \
                and cfg.alpha < ASYMPTOTIC_MIN_ABS_ALPHA:
            _fail("alpha", f"asymptotic engine needs alpha >= {ASYMPTOTIC_MIN_ABS_ALPHA}; use engine: exact")
    elif cfg.alpha > EXACT_MAX_ABS_ALPHA:
        _fail("alpha", f"engine-xval needs the exact engine, alpha <= {EXACT_MAX_ABS_ALPHA}")
    b = cfg.bins
    if set(b) != {"lo", "hi", "n"} or not b["lo"] < b["hi"] or int(b["n"]) < 1:
        _fail("bins", "needs lo < hi and n >= 1")
    for w in cfg.windows:
        if len(w) != 2 or not w[0] < w[1]:
            _fail("windows", f"each window must be [lo, hi] with lo < hi, got {w}")
    if cfg.conditioning not in ("point", "window"):
        _fail("conditioning", "must be 'point' or 'window'")
    if cfg.pipeline not in ("analytic", "monte-carlo"):
        _fail("pipeline", "must be 'analytic' or 'monte-carlo'")
    if any(not 0.0 <= x <= 1.0 for x in cfg.t_grid):
        _fail("t_grid", "values must lie in [0, 1]")
    if cfg.dim < 2:
        _fail("dim", "must be >= 2")
    if cfg.bootstrap < 0:
        _fail("bootstrap", "must be >= 0")
    if cfg.shard_size < 1:
        _fail("shard_size", "must be >= 1")
    if cfg.metric_min_count < 2:
        _fail("metric_min_count", "must be >= 2")
    return cfg


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    kw = {}
    alpha2 = None
    for key, value in data.items():
        name = str(key).replace("-", "_")
        if name == "alpha_squared":
            alpha2 = float(value)
            continue
        if name not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        kw[name] = value
    if "scenario" not in kw:
        raise ConfigError("scenario: required")
    if alpha2 is not None:
        if "alpha" in kw:
            raise ConfigError("alpha-squared: give either alpha or alpha-squared")
        if alpha2 < 0:
            _fail("alpha_squared", "must be >= 0")
        kw["alpha"] = math.sqrt(alpha2)
    try:
        cfg = ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    scen = cfg.scenario
    if cfg.alpha is None:
        cfg.alpha = _DEFAULT_ALPHA.get(scen, 1000.0)
    if cfg.shots is None:
        cfg.shots = _DEFAULT_SHOTS.get(scen, 1_000_000)
    if cfg.windows is None:
        cfg.windows = [list(w) for w in default_windows()]
    if cfg.phase_pairs is None:
        cfg.phase_pairs = [list(p) for p in default_phase_pairs()]
    if cfg.t_grid is None:
        cfg.t_grid = [float(x) for x in np.linspace(0.0, 1.0, 11)]
    for name in ("alpha", "eta", "epsilon2", "sigma_phi", "t", "theta_a", "threshold", "x_condition",
                 "residual_offset", "tolerance"):
        try:
            setattr(cfg, name, float(getattr(cfg, name)))
        except (TypeError, ValueError):
            _fail(name, "must be a number")
    return _validate(cfg)


def load_config(source):
    """Config from a path, inline YAML text, or a mapping."""
    if isinstance(source, dict):
        return config_from_dict(source)
    text = str(source)
    path = Path(text)
    if "\n" not in text and ":" not in text:
        if not path.is_file():
            raise ConfigError(f"config file {text} not found")
        text = path.read_text()
    elif "\n" not in text and path.is_file():
        text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


@dataclass
class RunReport:
    config: dict
    metrics: dict
    files: list
    duration_s: float
    version: str
    seed: int

    def to_dict(self):
        return dataclasses.asdict(self)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def _metric(value, stderr=0.0):
    return {"value": float(value), "stderr": float(stderr)}


def save_table(path, columns, header):
    np.savetxt(path, np.column_stack(columns), fmt="%.17g", header=header)


def save_density_matrix(path, rho):
    """Density matrix as JSON with explicit real and imaginary parts."""
    rho = np.asarray(rho)
    Path(path).write_text(json.dumps({"dim": rho.shape[0], "real": rho.real.tolist(),
                                      "imag": rho.imag.tolist()}, indent=1))


def load_density_matrix(path):
    data = json.loads(Path(path).read_text())
    return np.array(data["real"]) + 1j * np.array(data["imag"])


def _run_fig2(cfg, out):
    edges = np.linspace(cfg.bins["lo"], cfg.bins["hi"], int(cfg.bins["n"]) + 1)
    metrics, files = {}, []
    sections = [("same", cfg.theta_a)]
    if cfg.orthogonal:
        sections.append(("orthogonal", cfg.theta_a + math.pi / 2))
    for name, theta in sections:
        rng = stream(cfg.seed, cfg.scenario, name)
        sweep, hist = run_conditional(cfg.params, cfg.alpha, theta, cfg.shots, rng, bins=edges,
                                      windows=[tuple(w) for w in cfg.windows], engine=cfg.engine,
                                      shard_size=cfg.shard_size)
        f = out / f"sweep_{name}.tsv"
        np.savetxt(f, sweep.table(), fmt="%.17g", header=sweep.TABLE_HEADER)
        files.append(f.name)
        if name == "same":
            metrics["variance_ratio"] = _metric(*sweep.variance_ratio(cfg.metric_min_count))
            for i, s in enumerate(hist.samples):
                vals, probs = hist.pmf(i)
                f = out / f"histogram_{i + 1}.tsv"
                save_table(f, [vals, probs], "diff probability")
                files.append(f.name)
                se = s.std(ddof=1) / math.sqrt(s.size) / cfg.alpha
                metrics[f"window_{i + 1}_mean_over_alpha"] = _metric(s.mean() / cfg.alpha, se)
            if len(hist.samples) >= 2:
                e_p, e_m, avg, se = hist.discrimination(cfg.threshold)
                metrics["window_avg_error"] = _metric(avg, se)
                metrics["window_certainty"] = _metric(1 - avg, se)
        else:
            metrics["orthogonal_max_abs_mean_over_alpha"] = _metric(*sweep.max_abs_mean_over_alpha(cfg.metric_min_count))
    return metrics, files


def _run_discrimination(cfg, out):
    rng = stream(cfg.seed, cfg.scenario, "main")
    if cfg.conditioning == "point":
        e_p, e_m, avg, se = point_discrimination(cfg.params, cfg.alpha, cfg.x_condition, cfg.shots, rng,
                                                 cfg.reference, cfg.theta_a, cfg.threshold, cfg.engine)
    else:
        _, hist = run_conditional(cfg.params, cfg.alpha, cfg.theta_a, cfg.shots, rng,
                                  windows=[tuple(w) for w in cfg.windows], reference=cfg.reference,
                                  engine=cfg.engine, shard_size=cfg.shard_size)
        e_p, e_m, avg, se = hist.discrimination(cfg.threshold)
    sp = math.sqrt(e_p * (1 - e_p) / cfg.shots)
    sm = math.sqrt(e_m * (1 - e_m) / cfg.shots)
    metrics = {"avg_error": _metric(avg, se), "certainty": _metric(1 - avg, se),
               "error_plus": _metric(e_p, sp), "error_minus": _metric(e_m, sm)}
    f = out / "discrimination.tsv"
    save_table(f, [[e_p], [e_m], [avg], [se]], "error_plus error_minus avg_error stderr")
    return metrics, [f.name]


def _bootstrap(batch, res, cfg, rng):
    """Concurrence and fidelity spread from resampled reconstructions (warm-started)."""
    vals = []
    n = len(batch)
    uniq, inv = batch.pairs()
    for _ in range(cfg.bootstrap):
        idx = np.concatenate([rng.choice(np.flatnonzero(inv == k), size=np.sum(inv == k))
                              for k in range(len(uniq))])
        sub = type(batch)(batch.x_a[idx], batch.theta_a[idx], batch.x_b[idx], batch.theta_b[idx])
        r = mle_reconstruct(sub, cfg.dim, cfg.max_iter, cfg.tolerance, rho0=res.rho)
        vals.append((r.concurrence(), r.leakage, r.rho))
    return vals, n


def _run_tomography(cfg, out):
    rng = stream(cfg.seed, cfg.scenario, "sample")
    truth = verification_state(cfg.params, cfg.alpha, cfg.t, stream(cfg.seed, cfg.scenario, "noise"))
    pairs = [tuple(p) for p in cfg.phase_pairs]
    batch = sample_quadratures(truth, pairs, cfg.shots, rng, common_phase_jitter=True)
    if cfg.residual_offset:
        batch = inject_residual_offset(batch, cfg.residual_offset)
    raw_file = out / "quadratures.tsv"
    batch.save(raw_file)
    batch = residual_filter(batch)
    res = mle_reconstruct(batch, cfg.dim, cfg.max_iter, cfg.tolerance)
    save_density_matrix(out / "rho.json", res.rho)
    save_table(out / "loglik.tsv", [np.arange(res.ll_trace.size), res.ll_trace], "iteration log_likelihood")
    fid = fock.fidelity(res.rho, truth)
    c, leak = res.concurrence(), res.leakage
    se_c = se_l = se_f = 0.0
    if cfg.bootstrap > 1:
        boots, _ = _bootstrap(batch, res, cfg, stream(cfg.seed, cfg.scenario, "bootstrap"))
        se_c = float(np.std([b[0] for b in boots], ddof=1))
        se_l = float(np.std([b[1] for b in boots], ddof=1))
        se_f = float(np.std([fock.fidelity(b[2], truth) for b in boots], ddof=1))
    metrics = {
        "concurrence": _metric(c, se_c),
        "concurrence_true": _metric(concurrence(truth)),
        "fidelity": _metric(fid, se_f),
        "leakage": _metric(leak, se_l),
        "converged": _metric(float(res.converged)),
    }
    return metrics, [raw_file.name, "rho.json", "loglik.tsv"]


def _run_loss_sweep(cfg, out):
    t = np.asarray(cfg.t_grid, dtype=float)
    model = cfg.eta * np.sqrt(t)
    metrics = {}
    if cfg.pipeline == "analytic":
        c = concurrence_vs_loss(cfg.params, cfg.alpha, t, "analytic")
        se = np.zeros_like(c)
    else:
        rng = stream(cfg.seed, cfg.scenario, "mc")
        c, results = concurrence_vs_loss(cfg.params, cfg.alpha, t, "monte-carlo", rng, cfg.shots,
                                         [tuple(p) for p in cfg.phase_pairs], cfg.residual_offset, cfg.dim)
        se = np.full_like(c, np.nan)
    for ti, ci, si in zip(t, c, se):
        metrics[f"concurrence_t{ti:.3f}"] = _metric(ci, 0.0 if np.isnan(si) else si)
    metrics["max_abs_deviation_from_eta_sqrt_t"] = _metric(np.max(np.abs(c - model)))
    f = out / "concurrence_vs_loss.tsv"
    save_table(f, [t, c, model], "t concurrence eta_sqrt_t")
    return metrics, [f.name]


def tv_stderr(shots):
    """Approximate spread of an empirical TV distance: ``sqrt((1 - 2/pi) / (4 N))``."""
    return math.sqrt((1 - 2 / math.pi) / (4 * shots))


def _run_engine_xval(cfg, out):
    metrics, rows = {}, []
    se = tv_stderr(cfg.shots)
    for k, (name, (c0, c1)) in enumerate(XVAL_STATES.items()):
        psi = np.array([c0, c1], dtype=complex)
        state = DisplacedState(np.outer(psi, psi.conj()), cfg.alpha)
        pmf = photon_pmf_exact(state)
        rng = stream(cfg.seed, cfg.scenario, name)
        tv = pmf.tv_distance(photon_sample_asymptotic(state, rng, cfg.shots, min_abs_alpha=0.0))
        tv_lin = pmf.tv_distance(photon_sample_asymptotic(state, rng, cfg.shots, method="linear",
                                                          min_abs_alpha=0.0))
        metrics[f"tv_{name}"] = _metric(tv, se)
        metrics[f"tv_linear_{name}"] = _metric(tv_lin, se)
        rows.append((k, tv, tv_lin))
    f = out / "engine_xval.tsv"
    save_table(f, np.array(rows).T, "state_index tv_charlier tv_linear")
    return metrics, [f.name]


_RUNNERS = {
    "fig2-sweep": _run_fig2,
    "discrimination": _run_discrimination,
    "tomography": _run_tomography,
    "loss-sweep": _run_loss_sweep,
    "engine-xval": _run_engine_xval,
}


def run(cfg, out=None):
    """Execute a scenario, write its result files and ``report.json``."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        metrics, files = _RUNNERS[cfg.scenario](cfg, out)
    except ConfigError:
        raise
    except Exception as exc:
        raise RuntimeError(f"scenario {cfg.scenario} failed: {type(exc).__name__}: {exc}") from exc
    (out / "config.yaml").write_text(dump_config(cfg))
    report = RunReport(cfg.to_dict(), metrics, sorted(files + ["config.yaml"]),
                       time.perf_counter() - start, __version__, cfg.seed)
    report.save(out / "report.json")
    return report


@dataclass
class Comparison:
    passed: bool
    deltas: dict

    def lines(self):
        for name, d in sorted(self.deltas.items()):
            flag = "ok" if d["ok"] else "FAIL"
            yield f"{flag:4s} {name}: delta={d['delta']:+.6g} tol={d['tol']:.3g}"


def _as_report(obj):
    if isinstance(obj, RunReport):
        return obj.to_dict()
    if isinstance(obj, dict):
        return obj
    return json.loads(Path(obj).read_text())


def compare_report(report, baseline, n_sigma=5.0, rel_floor=1e-9):
    """Compare metrics within ``n_sigma`` combined standard errors.

    Deterministic metrics (zero stderr) must agree to ``rel_floor``
    relative precision. Different scenarios or metric sets raise
    :class:`ReportSchemaError`.
    """
    a, b = _as_report(report), _as_report(baseline)
    for r in (a, b):
        if "metrics" not in r or "config" not in r:
            raise ReportSchemaError("report lacks 'metrics' or 'config'")
    if a["config"].get("scenario") != b["config"].get("scenario"):
        raise ReportSchemaError("reports are for different scenarios")
    if set(a["metrics"]) != set(b["metrics"]):
        missing = sorted(set(a["metrics"]) ^ set(b["metrics"]))
        raise ReportSchemaError(f"metric sets differ: {missing}")
    deltas = {}
    for name, ma in a["metrics"].items():
        mb = b["metrics"][name]
        if set(ma) != {"value", "stderr"} or set(mb) != {"value", "stderr"}:
            raise ReportSchemaError(f"metric {name} must have value and stderr")
        delta = ma["value"] - mb["value"]
        tol = n_sigma * math.hypot(ma["stderr"], mb["stderr"]) + rel_floor * max(1.0, abs(mb["value"]))
        deltas[name] = {"delta": delta, "tol": tol, "ok": abs(delta) <= tol}
    return Comparison(all(d["ok"] for d in deltas.values()), deltas)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="micromacro", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--shots", type=int)
    p_run.add_argument("--engine", choices=CLI_ENGINES)
    p_cmp = sub.add_parser("compare", help="compare a report against a baseline")
    p_cmp.add_argument("report")
    p_cmp.add_argument("baseline")
    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            path = Path(args.config)
            if not path.is_file():
                raise ConfigError(f"config file {args.config} not found")
            data = yaml.safe_load(path.read_text())
            if not isinstance(data, dict):
                raise ConfigError("config must be a mapping")
            for key in ("seed", "shots", "engine", "out"):
                val = getattr(args, key)
                if val is not None:
                    data = {k: v for k, v in data.items() if k != key}
                    data[key] = val
            cfg = load_config(data)
        except (ConfigError, yaml.YAMLError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        try:
            report = run(cfg)
        except RuntimeError as exc:
            print(f"run failed: {exc}", file=sys.stderr)
            return 3
        for name, m in sorted(report.metrics.items()):
            print(f"{name}: {m['value']:.6g} +- {m['stderr']:.2g}")
        print(f"wrote {Path(cfg.out) / 'report.json'}")
        return 0

    try:
        result = compare_report(args.report, args.baseline)
    except (ReportSchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"compare error: {exc}", file=sys.stderr)
        return 2
    for line in result.lines():
        print(line)
    print("PASS" if result.passed else "FAIL")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())

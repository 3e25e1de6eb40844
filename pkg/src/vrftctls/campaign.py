"""Monte Carlo campaigns: configuration, orchestration and persisted reports."""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .estimators import (
    CTLS,
    IV,
    METHODS,
    OLS,
    CtlsProblem,
    build_filter_bank,
    ctls_estimate,
    iv_estimate,
    ols_estimate,
)
from .metrics import (
    RunRecord,
    closed_loop_cost,
    fmt,
    is_closed_loop_stable,
    method_stats,
    read_stats_csv,
    summarize_distribution,
    write_hist_csv,
    write_jhat_csv,
    write_stats_csv,
)
from .optim import OptimOptions
from .sig_sim import (
    LFSR_TAPS,
    LoopMode,
    NoiseSpec,
    prbs,
    save_experiment_csv,
    simulate_closed_loop,
    simulate_open_loop,
)
from .tf_algebra import Poly, RationalTF, closed_loop_poles, roots_stable
from .vrft_core import (
    ControllerStructure,
    assemble_controller,
    build_lf,
    build_regressors,
    ideal_parameters,
    virtual_error_input,
)

log = logging.getLogger(__name__)

IV_SEED_OFFSET = 10**6
PRESETS = ("open_loop", "closed_loop")


class ConfigError(ValueError):
    """All violations found in a campaign configuration."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid campaign config:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class Rho0Policy:
    kind: str = "scaled_ideal"
    factor: float = 0.8
    vector: tuple = ()


@dataclass(frozen=True)
class CampaignConfig:
    plant: RationalTF
    noise: NoiseSpec
    reference_model: RationalTF
    fixed_part: RationalTF
    n_b: int
    n_a: int
    loop_mode: LoopMode
    n_samples: int
    n_runs: int
    master_seed: int
    methods: tuple
    c0: RationalTF | None = None
    rho0: Rho0Policy = field(default_factory=Rho0Policy)
    optimizer: OptimOptions = field(default_factory=OptimOptions)
    eval_reference: str = "step"
    eval_length: int = 100
    hist_bins: int = 20
    prbs_order: int = 10
    prbs_amplitude: float = 1.0
    drop_boundary: bool = True
    save_datasets: str = "first"

    @property
    def sigma2(self):
        return self.noise.sigma2

    @property
    def structure(self):
        return ControllerStructure(self.fixed_part, self.n_b, self.n_a)

    def with_overrides(self, seed=None, runs=None, methods=None):
        kw = {}
        if seed is not None:
            kw["master_seed"] = int(seed)
        if runs is not None:
            if runs < 1:
                raise ConfigError(["experiment.n_runs: must be >= 1"])
            kw["n_runs"] = int(runs)
        if methods is not None:
            bad = [m for m in methods if m not in METHODS]
            if bad or not methods:
                raise ConfigError([f"estimation.methods: unknown or empty {list(methods)}"])
            kw["methods"] = tuple(methods)
        return replace(self, **kw)


def _parse_tf(raw, path, errors):
    if not isinstance(raw, dict):
        errors.append(f"{path}: expected a table")
        return None
    unknown = set(raw) - {"num", "num_roots", "den", "den_roots", "gain"}
    if unknown:
        errors.append(f"{path}: unknown keys {sorted(unknown)}")
    polys = {}
    for side, default in (("num", [1.0]), ("den", [1.0])):
        coeffs, roots = raw.get(side), raw.get(f"{side}_roots")
        if coeffs is not None and roots is not None:
            errors.append(f"{path}.{side}: give either {side} or {side}_roots, not both")
            return None
        try:
            if roots is not None:
                polys[side] = Poly.from_roots([complex(z) for z in roots])
            else:
                polys[side] = Poly([float(c) for c in (coeffs if coeffs is not None else default)])
        except (TypeError, ValueError):
            errors.append(f"{path}.{side}: must be a list of numbers")
            return None
    try:
        gain = float(raw.get("gain", 1.0))
    except (TypeError, ValueError):
        errors.append(f"{path}.gain: must be a number")
        return None
    try:
        return RationalTF(polys["num"] * gain, polys["den"])
    except ZeroDivisionError:
        errors.append(f"{path}.den: denominator is identically zero")
        return None


def _get(raw, dotted, default=None):
    node = raw
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key]
    return node


def _int(raw, dotted, errors, default=None, minimum=None):
    val = _get(raw, dotted, default)
    if val is None:
        errors.append(f"{dotted}: required")
        return None
    if isinstance(val, bool) or not isinstance(val, int):
        errors.append(f"{dotted}: must be an integer")
        return None
    if minimum is not None and val < minimum:
        errors.append(f"{dotted}: must be >= {minimum}")
        return None
    return val


def _float(raw, dotted, errors, default=None, positive=False, nonneg=False):
    val = _get(raw, dotted, default)
    if val is None:
        errors.append(f"{dotted}: required")
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errors.append(f"{dotted}: must be a number")
        return None
    if positive and not val > 0:
        errors.append(f"{dotted}: must be > 0")
        return None
    if nonneg and val < 0:
        errors.append(f"{dotted}: must be >= 0")
        return None
    return float(val)


def validate_config(raw):
    """Turn a parsed TOML document into a :class:`CampaignConfig`.

    Every violation is collected before raising :class:`ConfigError`.
    """
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a table"])

    plant = _parse_tf(_get(raw, "plant", {}), "plant", errors) if "plant" in raw else None
    if "plant" not in raw:
        errors.append("plant: required")
    ref = None
    if "reference_model" not in raw:
        errors.append("reference_model: required")
    else:
        ref = _parse_tf(raw["reference_model"], "reference_model", errors)
    fixed = _parse_tf(raw.get("fixed_part", {}), "fixed_part", errors)

    noise = None
    noise_raw = dict(raw.get("noise", {}))
    sigma2 = _float(raw, "noise.sigma2", errors, nonneg=True)
    noise_raw.pop("sigma2", None)
    H = _parse_tf(noise_raw, "noise", errors)
    if H is not None and not H.is_proper:
        errors.append("noise: noise model H must be proper")
    elif H is not None and sigma2 is not None:
        noise = NoiseSpec(H, sigma2)

    n_b = _int(raw, "controller.n_b", errors, minimum=1)
    n_a = _int(raw, "controller.n_a", errors, minimum=0)

    mode = None
    mode_raw = _get(raw, "experiment.loop_mode")
    try:
        mode = LoopMode(mode_raw)
    except ValueError:
        errors.append(f"experiment.loop_mode: must be 'open_loop' or 'closed_loop', got {mode_raw!r}")

    c0 = None
    if "c0" in raw:
        c0 = _parse_tf(raw["c0"], "c0", errors)
    if mode == LoopMode.CLOSED:
        if "c0" not in raw:
            errors.append("c0: required for closed_loop experiments")
        elif c0 is not None and plant is not None and not roots_stable(closed_loop_poles(plant, c0)):
            errors.append("c0: does not stabilize the plant")

    if plant is not None and not plant.is_proper:
        errors.append("plant: must be proper")

    n_samples = _int(raw, "experiment.n_samples", errors, minimum=1)
    n_runs = _int(raw, "experiment.n_runs", errors, minimum=1)
    seed = _int(raw, "experiment.master_seed", errors, default=0, minimum=0)
    order = _int(raw, "experiment.prbs_order", errors, default=10)
    if order is not None and order not in LFSR_TAPS:
        errors.append(f"experiment.prbs_order: must be one of {sorted(LFSR_TAPS)}")
    amp = _float(raw, "experiment.prbs_amplitude", errors, default=1.0, positive=True)
    drop = _get(raw, "experiment.drop_boundary", True)
    if not isinstance(drop, bool):
        errors.append("experiment.drop_boundary: must be true or false")
    save = _get(raw, "experiment.save_datasets", "first")
    if save not in ("none", "first", "all"):
        errors.append("experiment.save_datasets: must be 'none', 'first' or 'all'")

    methods = _get(raw, "estimation.methods", list(METHODS))
    if not isinstance(methods, list) or not methods:
        errors.append("estimation.methods: must be a non-empty list")
        methods = []
    else:
        methods = [str(m).lower() for m in methods]
        bad = [m for m in methods if m not in METHODS]
        if bad:
            errors.append(f"estimation.methods: unknown methods {bad}")

    kind = _get(raw, "estimation.rho0", "scaled_ideal")
    rho0 = None
    if kind == "scaled_ideal":
        factor = _float(raw, "estimation.rho0_factor", errors, default=0.8)
        rho0 = Rho0Policy(kind, factor if factor is not None else 0.8)
    elif kind == "ols_start":
        rho0 = Rho0Policy(kind)
    elif kind == "explicit":
        vec = _get(raw, "estimation.rho0_vector")
        if not isinstance(vec, list) or (n_b and n_a is not None and len(vec) != n_b + n_a):
            errors.append("estimation.rho0_vector: must list n_b + n_a numbers")
        else:
            rho0 = Rho0Policy(kind, vector=tuple(float(x) for x in vec))
    else:
        errors.append("estimation.rho0: must be 'scaled_ideal', 'ols_start' or 'explicit'")

    opt = None
    try:
        opt_raw = dict(raw.get("optimizer", {}))
        unknown = set(opt_raw) - {"x_tol", "f_tol", "max_iter", "max_fun", "init_step"}
        if unknown:
            errors.append(f"optimizer: unknown keys {sorted(unknown)}")
        else:
            opt = OptimOptions(**opt_raw)
    except (TypeError, ValueError) as exc:
        errors.append(f"optimizer: {exc}")

    ev = _get(raw, "evaluation.reference", "step")
    if ev not in ("step", "prbs"):
        errors.append("evaluation.reference: must be 'step' or 'prbs'")
    ev_len = _int(raw, "evaluation.length", errors, default=100, minimum=1)
    bins = _int(raw, "evaluation.hist_bins", errors, default=20, minimum=1)

    if fixed is not None and fixed.is_zero:
        errors.append("fixed_part: must not be zero")
    if ref is not None and fixed is not None:
        if ref.is_zero or (ref.den - ref.num).is_zero:
            errors.append("reference_model: must be neither 0 nor 1")
    if (n_samples is not None and n_b is not None and n_a is not None
            and n_samples < n_b + n_a + 1):
        errors.append("experiment.n_samples: too few samples for the controller order")

    if errors:
        raise ConfigError(errors)
    return CampaignConfig(
        plant=plant, noise=noise, reference_model=ref, fixed_part=fixed, n_b=n_b, n_a=n_a,
        loop_mode=mode, n_samples=n_samples, n_runs=n_runs, master_seed=seed,
        methods=tuple(methods), c0=c0, rho0=rho0, optimizer=opt, eval_reference=ev,
        eval_length=ev_len, hist_bins=bins, prbs_order=order, prbs_amplitude=amp,
        drop_boundary=drop, save_datasets=save,
    )


def preset_path(name):
    return resources.files("vrftctls") / "presets" / f"{name}.toml"


def load_config(path_or_preset):
    """Read a TOML file, or one of the shipped presets by name."""
    p = Path(path_or_preset)
    if not p.exists() and str(path_or_preset) in PRESETS:
        text = preset_path(str(path_or_preset)).read_text()
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError([f"<file>: cannot read {path_or_preset}: {exc}"]) from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"<file>: TOML syntax error: {exc}"]) from exc
    return validate_config(raw)


@dataclass
class CampaignReport:
    config: CampaignConfig
    rho_d: np.ndarray
    records: list
    stats: list
    out_dir: Path | None = None

    def stats_for(self, method):
        return next(s for s in self.stats if s.method == method)

    def records_for(self, method):
        return [r for r in self.records if r.method == method]


class _Context:
    """Per-campaign quantities shared by every run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.structure = cfg.structure
        self.L_F = build_lf(cfg.reference_model, cfg.fixed_part)
        self.n_drop = self.L_F.advance if cfg.drop_boundary else 0
        self.rho_d = ideal_parameters(cfg.plant, cfg.reference_model, self.structure)
        self.excitation = excitation(cfg)
        self.eval_reference = evaluation_reference(cfg)
        self.bank = None
        if CTLS in cfg.methods:
            self.bank = build_filter_bank(cfg.loop_mode, self.L_F, cfg.c0, self.structure,
                                          cfg.n_samples, self.n_drop)

    def simulate(self, seed):
        cfg = self.cfg
        if cfg.loop_mode == LoopMode.OPEN:
            return simulate_open_loop(cfg.plant, cfg.noise, self.excitation, seed)
        return simulate_closed_loop(cfg.plant, cfg.c0, cfg.noise, self.excitation, seed)

    def regressors(self, data):
        ef = virtual_error_input(data.y, self.L_F)
        return build_regressors(ef, data.u, self.structure, self.n_drop)


def excitation(cfg):
    """The PRBS shared by every run of a campaign (u in open loop, r in closed loop)."""
    return prbs(cfg.n_samples, cfg.master_seed, cfg.prbs_amplitude, cfg.prbs_order)


def evaluation_reference(cfg):
    if cfg.eval_reference == "step":
        return np.ones(cfg.eval_length)
    return prbs(cfg.eval_length, cfg.master_seed + 1, 1.0, cfg.prbs_order)


def run_seed(cfg, index):
    return cfg.master_seed + index


def _evaluate(ctx, index, seed, method, rho, converged=True):
    cfg = ctx.cfg
    C = assemble_controller(rho, ctx.structure)
    stable = is_closed_loop_stable(C, cfg.plant)
    J = closed_loop_cost(C, cfg.plant, cfg.reference_model, ctx.eval_reference) if stable else float("nan")
    return RunRecord(index, method, np.asarray(rho, dtype=float), stable, J, seed, converged)


def _failed(ctx, index, seed, method, exc):
    nan = np.full(ctx.structure.m, np.nan)
    msg = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    log.warning("run %d %s failed: %s", index, method, msg)
    return RunRecord(index, method, nan, False, float("nan"), seed, False, msg)


def _single_run(ctx, index):
    cfg = ctx.cfg
    seed = run_seed(cfg, index)
    data = ctx.simulate(seed)
    reg = ctx.regressors(data)
    out = {}
    ols = None
    if OLS in cfg.methods or (CTLS in cfg.methods and cfg.rho0.kind == "ols_start"):
        try:
            ols = ols_estimate(reg)
            if OLS in cfg.methods:
                out[OLS] = _evaluate(ctx, index, seed, OLS, ols.rho_hat)
        except Exception as exc:  # noqa: BLE001 - per-run failures are recorded
            if OLS in cfg.methods:
                out[OLS] = _failed(ctx, index, seed, OLS, exc)
    if IV in cfg.methods:
        try:
            reg2 = ctx.regressors(ctx.simulate(seed + IV_SEED_OFFSET))
            out[IV] = _evaluate(ctx, index, seed, IV, iv_estimate(reg, reg2).rho_hat)
        except Exception as exc:  # noqa: BLE001
            out[IV] = _failed(ctx, index, seed, IV, exc)
    if CTLS in cfg.methods:
        try:
            if cfg.rho0.kind == "scaled_ideal":
                rho0 = cfg.rho0.factor * ctx.rho_d
            elif cfg.rho0.kind == "ols_start":
                if ols is None:
                    raise RuntimeError("OLS start unavailable")
                rho0 = ols.rho_hat
            else:
                rho0 = np.asarray(cfg.rho0.vector)
            est = ctls_estimate(CtlsProblem.from_regressors(reg, ctx.bank), rho0, cfg.optimizer)
            out[CTLS] = _evaluate(ctx, index, seed, CTLS, est.rho_hat, est.converged)
        except Exception as exc:  # noqa: BLE001
            out[CTLS] = _failed(ctx, index, seed, CTLS, exc)
    log.info("run %d/%d done", index + 1, cfg.n_runs)
    return [out[m] for m in cfg.methods]


_WORKER_CTX = None


def _init_worker(cfg):
    global _WORKER_CTX
    _WORKER_CTX = _Context(cfg)


def _worker_run(index):
    return _single_run(_WORKER_CTX, index)


def run_campaign(config, out_dir=None, jobs=1):
    """Run every Monte Carlo repetition and persist the results.

    Run ``i`` uses noise seed ``master_seed + i`` with the same excitation;
    the IV's second experiment adds a fixed seed offset.  Output files are a
    deterministic function of the configuration.
    """
    ctx = _Context(config)
    indices = range(config.n_runs)
    if jobs > 1 and config.n_runs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(config,)) as pool:
            per_run = list(pool.map(_worker_run, indices))
    else:
        per_run = [_single_run(ctx, i) for i in indices]
    records = [rec for run in per_run for rec in run]
    records.sort(key=lambda r: (config.methods.index(r.method), r.run_index))
    stats = [method_stats([r for r in records if r.method == m], ctx.rho_d) for m in config.methods]
    report = CampaignReport(config, ctx.rho_d, records, stats)
    if out_dir is not None:
        report.out_dir = Path(out_dir)
        _persist(report, ctx)
    return report


def _persist(report, ctx):
    cfg = report.config
    out = report.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_stats_csv(report.stats, out / "stats.csv")
    write_jhat_csv(report.records, out / "jhat.csv")
    write_estimates_csv(report.records, ctx.structure.m, out / "estimates.csv")
    for s in report.stats:
        if s.J_hat:
            write_hist_csv(summarize_distribution(s.J_hat, cfg.hist_bins), out / f"hist_{s.method}.csv")
    meta = {
        "loop_mode": cfg.loop_mode.value,
        "n_samples": cfg.n_samples,
        "n_runs": cfg.n_runs,
        "master_seed": cfg.master_seed,
        "sigma2": cfg.sigma2,
        "methods": list(cfg.methods),
        "rho_d": [fmt(x) for x in report.rho_d],
        "drop_boundary": cfg.drop_boundary,
        "rho0_policy": cfg.rho0.kind,
        "iv_seed_offset": IV_SEED_OFFSET,
        "eval_reference": cfg.eval_reference,
        "eval_length": cfg.eval_length,
        "hist_bins": cfg.hist_bins,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (out / "summary.txt").write_text(format_table(report.stats, cfg.loop_mode.value))
    if cfg.save_datasets != "none":
        ddir = out / "datasets"
        ddir.mkdir(exist_ok=True)
        n = 1 if cfg.save_datasets == "first" else cfg.n_runs
        for i in range(n):
            save_experiment_csv(ctx.simulate(run_seed(cfg, i)), ddir / f"run_{i:04d}.csv")


def write_estimates_csv(records, m, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "run_index", "seed", "converged", "stable", "error"]
                   + [f"rho_{j + 1}" for j in range(m)])
        for r in records:
            w.writerow([r.method, r.run_index, r.seed, int(r.converged), int(r.stable), r.error]
                       + [fmt(x) for x in r.rho_hat])


def read_estimates_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rho_cols = [c for c in reader.fieldnames if c.startswith("rho_")]
        for row in reader:
            records.append(RunRecord(
                run_index=int(row["run_index"]), method=row["method"],
                rho_hat=np.array([float(row[c]) for c in rho_cols]),
                stable=bool(int(row["stable"])), J_hat=float("nan"), seed=int(row["seed"]),
                converged=bool(int(row["converged"])), error=row["error"],
            ))
    return records


def format_table(stats, title=""):
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'method':<8}{'bias':>12}{'variance':>12}{'MSE':>12}{'stable':>9}{'median log10 J':>17}")
    for s in stats:
        med = f"{np.median(np.log10(s.J_hat)):17.3f}" if s.J_hat else f"{'-':>17}"
        lines.append(f"{s.method.upper():<8}{s.bias:12.4f}{s.variance:12.4f}{s.mse:12.4f}"
                     f"{s.stable_fraction:9.2f}{med}")
    return "\n".join(lines) + "\n"


def load_report(in_dir):
    """Recompute the statistics of a finished campaign from its CSV files."""
    d = Path(in_dir)
    meta = json.loads((d / "meta.json").read_text())
    rho_d = np.array([float(x) for x in meta["rho_d"]])
    records = read_estimates_csv(d / "estimates.csv")
    jhat = {}
    with open(d / "jhat.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["J_hat"]:
                jhat[(row["method"], int(row["run_index"]))] = float(row["J_hat"])
    records = [replace(r, J_hat=jhat.get((r.method, r.run_index), float("nan"))) for r in records]
    stats = [method_stats([r for r in records if r.method == m], rho_d) for m in meta["methods"]]
    return meta, stats, read_stats_csv(d / "stats.csv")


def configure_logging():
    level = os.environ.get("TUNE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")

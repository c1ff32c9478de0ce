"""Experiment orchestration: realization loops, sweeps, ablations, outputs.

An experiment runs ``realizations`` independent trainings with seeds
``base_seed + index``; every random draw inside one realization derives from
its seed, so records are reproducible bit-for-bit and independent of how
realizations are scheduled.  Failed realizations are recorded and excluded
from aggregates but never hidden.

Outputs per experiment directory:

* ``run_<seed>.json``  - full config echo, seeds, final parameters, metrics
* ``loss_<seed>.jsonl`` - per-iteration loss breakdown
* ``aggregate.csv``    - mean/SD/min/max/count per metric over realizations
* ``figdata_metrics.dat`` - whitespace-delimited mean/SD table for plotting
* ``figures/``         - rendered loss curves and error-bar figures
"""

from __future__ import annotations

import concurrent.futures
import configparser
import csv
import itertools
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import loss as loss_mod
from . import metrics, network, optim, problems, sampling

POLICIES = {
    "dtype": "float64",
    "init_scheme": "glorot_uniform_zero_bias",
    "theta_init": 0.5,
    "split_policy": "uniform_without_replacement_half_half_validation_extra",
    "boundary_allocation": "measure_proportional_randomized_rounding",
    "collocation": "latin_hypercube_uniform_jitter",
    "noise_model": "additive_gaussian_per_component_population_sd",
    "mse_accumulation": "numpy_pairwise_sum",
}


@dataclass
class ExperimentConfig:
    problem: str = "diffusivity"
    mode: str = "forward"
    n_hidden_layers: int = 6
    neurons: int = 5
    n_b: int = 96
    n_pi: int = 160
    n_tr: int = 250
    noise: float = 0.0
    realizations: int = 3
    base_seed: int = 1000
    workers: int = 1
    out_dir: str = "runs"
    method: str = ""  # empty -> mode/problem default
    lbfgs_memory: int = 50
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    adam_step: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    adam_iterations: int = 10000
    stop_tolerance: float = 1e-16
    max_iterations: int = 50000
    spatial_intervals: tuple = ()
    temporal_intervals: int = 0

    def __post_init__(self):
        if self.problem not in ("diffusivity", "biot"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.mode not in ("forward", "inverse"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if not self.method:
            self.method = default_method(self.problem, self.mode)
        if not self.spatial_intervals or not self.temporal_intervals:
            grid = sampling.default_grid(problems.get_problem(self.problem, self.mode))
            if not self.spatial_intervals:
                self.spatial_intervals = grid.spatial_intervals
            if not self.temporal_intervals:
                self.temporal_intervals = grid.temporal_intervals
        self.spatial_intervals = tuple(self.spatial_intervals)

    def as_dict(self):
        d = asdict(self)
        d["spatial_intervals"] = list(self.spatial_intervals)
        d["policies"] = dict(POLICIES)
        return d

    def optim_config(self):
        return optim.OptimConfig(
            method=self.method,
            lbfgs_memory=self.lbfgs_memory,
            wolfe_c1=self.wolfe_c1,
            wolfe_c2=self.wolfe_c2,
            adam_step=self.adam_step,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            adam_iterations=self.adam_iterations,
            stop_tolerance=self.stop_tolerance,
            max_iterations=self.max_iterations,
        )

    def grid_spec(self):
        return sampling.GridSpec(self.spatial_intervals, self.temporal_intervals)

    def layout(self):
        prob = problems.get_problem(self.problem, self.mode)
        return network.NetLayout(
            prob.n_inputs, prob.n_outputs, self.n_hidden_layers, self.neurons
        )


def default_method(problem, mode):
    """The combined first-order/quasi-Newton schedule is used for the
    poroelastic inverse runs; everything else trains with L-BFGS alone."""
    if problem == "biot" and mode == "inverse":
        return "adam_then_lbfgs"
    return "lbfgs"


_CONFIG_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name, value):
    if name == "spatial_intervals":
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        return tuple(int(v) for v in value)
    kind = _CONFIG_TYPES.get(name)
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return value


def load_config(path=None, overrides=None):
    """Build a config from an INI or JSON file plus explicit overrides."""
    values = {}
    if path:
        if str(path).endswith(".json"):
            with open(path) as fh:
                raw = json.load(fh)
            values.update(raw)
        else:
            parser = configparser.ConfigParser()
            with open(path) as fh:
                parser.read_file(fh)
            for section in parser.sections():
                for key, value in parser.items(section):
                    values[key] = value
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    values.pop("policies", None)
    known = {k: _coerce(k, v) for k, v in values.items() if k in _CONFIG_TYPES}
    unknown = set(values) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**known)


def child_seeds(seed):
    """Deterministic per-role seeds for one realization."""
    rng = np.random.default_rng(seed)
    roles = ("split", "boundary", "collocation", "noise")
    return {role: int(rng.integers(2 ** 62)) for role in roles}


def _prepare_data(cfg, prob, grid, seeds):
    """Sample sets for one realization plus the evaluation splits."""
    n_train = cfg.n_b if cfg.mode == "forward" else cfg.n_tr
    train, validation, test = sampling.split(grid, n_train, seeds["split"])
    if cfg.mode == "forward":
        data = {
            "boundary": sampling.boundary_initial_points(
                prob, cfg.n_b, seeds["boundary"]
            ),
            "collocation": sampling.lhs_collocation(
                cfg.n_pi, prob.bounds, seeds["collocation"]
            ),
        }
    else:
        values = train.values
        if cfg.noise > 0:
            values = sampling.add_noise(values, cfg.noise, seeds["noise"])
        data = {
            "measurements": sampling.SampleSet(train.points, values, "measurement")
        }
    return data, validation, test


def _evaluate(prob, params, sample):
    pred = network.forward_values(params, sample.points)
    per_component = metrics.relative_l2_columns(pred, sample.values)
    return pred, per_component


_FIELD_NAMES = {"diffusivity": ["p"], "biot": ["u", "v", "p"]}


def run_realization(cfg, seed, include_pi=True):
    """Train once and measure; returns a plain-dict record."""
    prob = problems.get_problem(cfg.problem, cfg.mode)
    layout = cfg.layout()
    grid = sampling.build_grid(cfg.grid_spec(), prob)
    seeds = child_seeds(seed)
    data, validation, test = _prepare_data(cfg, prob, grid, seeds)

    record = {
        "config": cfg.as_dict(),
        "seed": seed,
        "child_seeds": seeds,
        "include_pi": include_pi,
        "failed": False,
        "error": None,
    }
    started = time.perf_counter()
    try:
        result = optim.train(
            prob, data, layout, cfg.optim_config(), seed, include_pi=include_pi
        )
    except optim.DivergenceError as err:
        record["failed"] = True
        record["error"] = str(err)
        record["wall_time"] = time.perf_counter() - started
        return record
    record["wall_time"] = time.perf_counter() - started

    params = network.MlpParams.from_flat(layout, result.x[: layout.n_params])
    names = _FIELD_NAMES[cfg.problem]
    values = {}
    for label, sample in (("val", validation), ("test", test)):
        _, errors = _evaluate(prob, params, sample)
        for name, err in zip(names, errors):
            values[f"{label}_rel_l2_{name}"] = err
        if len(names) > 1:
            values[f"{label}_sum_rel_l2"] = float(sum(errors))

    theta_est = None
    if prob.mode == "inverse":
        theta_est = result.x[layout.n_params :].tolist()
        pct = metrics.percent_error(theta_est, prob.theta_true())
        for i, e in enumerate(pct, start=1):
            values[f"theta_pct_err_{i}"] = float(e)

    record.update(
        {
            "stop_reason": result.stop_reason,
            "iterations": result.iterations,
            "n_evals": result.n_evals,
            "final_loss": result.f,
            "theta_est": theta_est,
            "metrics": values,
            "final_params": result.x[: layout.n_params].tolist(),
            "loss_history": result.breakdown_history,
        }
    )
    return record


def _realization_task(cfg_dict, seed, include_pi):
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in cfg_dict.items()
                              if k in _CONFIG_TYPES})
    return run_realization(cfg, seed, include_pi=include_pi)


def run_experiment(cfg, include_pi=True):
    """All realizations of one configuration, persisted to cfg.out_dir."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    _preflight(cfg.out_dir)
    seeds = [cfg.base_seed + i for i in range(cfg.realizations)]
    if cfg.workers > 1 and len(seeds) > 1:
        cfg_dict = cfg.as_dict()
        cfg_dict.pop("policies")
        with concurrent.futures.ProcessPoolExecutor(cfg.workers) as pool:
            records = list(
                pool.map(
                    _realization_task,
                    itertools.repeat(cfg_dict),
                    seeds,
                    itertools.repeat(include_pi),
                )
            )
    else:
        records = [
            run_realization(cfg, s, include_pi=include_pi) for s in seeds
        ]
    emit_outputs(records, cfg.out_dir)
    return records


def _preflight(out_dir):
    probe = os.path.join(out_dir, ".write_probe")
    try:
        with open(probe, "w") as fh:
            fh.write("ok")
        os.remove(probe)
    except OSError as err:
        raise OSError(f"output directory {out_dir!r} is not writable: {err}")


def aggregate_records(records):
    """Per-metric statistics over the successful realizations."""
    ok = [r for r in records if not r["failed"]]
    stats = {}
    if ok:
        for key in sorted(ok[0]["metrics"]):
            stats[key] = metrics.aggregate([r["metrics"][key] for r in ok])
    return stats, len(ok), len(records) - len(ok)


def emit_outputs(records, out_dir):
    """Write per-run records, aggregate table, plot data and figures."""
    os.makedirs(out_dir, exist_ok=True)
    records = sorted(records, key=lambda r: r["seed"])
    for record in records:
        seed = record["seed"]
        history = record.get("loss_history")
        slim = {k: v for k, v in record.items() if k != "loss_history"}
        with open(os.path.join(out_dir, f"run_{seed}.json"), "w") as fh:
            json.dump(slim, fh)
        if history is not None:
            with open(os.path.join(out_dir, f"loss_{seed}.jsonl"), "w") as fh:
                for entry in history:
                    fh.write(json.dumps(entry) + "\n")

    stats, n_ok, n_failed = aggregate_records(records)
    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "mean", "sd", "min", "max", "count", "failed"])
        for key, s in stats.items():
            writer.writerow(
                [key, repr(s.mean), repr(s.sd), repr(s.minimum), repr(s.maximum),
                 s.count, n_failed]
            )

    if stats:
        cfg = records[0]["config"]
        x_name = "n_tr" if cfg["mode"] == "inverse" else "n_b"
        path = os.path.join(out_dir, "figdata_metrics.dat")
        keys = sorted(stats)
        with open(path, "w") as fh:
            fh.write("# " + x_name + " " +
                     " ".join(f"{k}_mean {k}_sd" for k in keys) + "\n")
            row = [str(cfg[x_name])]
            for k in keys:
                row += [repr(stats[k].mean), repr(stats[k].sd)]
            fh.write(" ".join(row) + "\n")

    _render_figures(records, out_dir)
    return stats


def _render_figures(records, out_dir):
    from . import plots

    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    for record in records:
        history = record.get("loss_history")
        if history:
            plots.save_loss_figure(
                history, os.path.join(fig_dir, f"loss_{record['seed']}.png")
            )


def replay_metrics(record):
    """Recompute every reported metric from the persisted record."""
    cfg = load_config(overrides={
        k: v for k, v in record["config"].items() if k in _CONFIG_TYPES
    })
    prob = problems.get_problem(cfg.problem, cfg.mode)
    layout = cfg.layout()
    grid = sampling.build_grid(cfg.grid_spec(), prob)
    seeds = record["child_seeds"]
    n_train = cfg.n_b if cfg.mode == "forward" else cfg.n_tr
    _, validation, test = sampling.split(grid, n_train, seeds["split"])
    params = network.MlpParams.from_flat(
        layout, np.array(record["final_params"])
    )
    names = _FIELD_NAMES[cfg.problem]
    values = {}
    for label, sample in (("val", validation), ("test", test)):
        _, errors = _evaluate(prob, params, sample)
        for name, err in zip(names, errors):
            values[f"{label}_rel_l2_{name}"] = err
        if len(names) > 1:
            values[f"{label}_sum_rel_l2"] = float(sum(errors))
    if record.get("theta_est") is not None:
        pct = metrics.percent_error(record["theta_est"], prob.theta_true())
        for i, e in enumerate(pct, start=1):
            values[f"theta_pct_err_{i}"] = float(e)
    return values


# ---------------------------------------------------------------------------
# sweeps and ablation
# ---------------------------------------------------------------------------


def run_sweep(axes, base_cfg):
    """Cartesian product over config axes; one experiment per cell.

    Returns the list of (cell-values dict, stats) in execution order and
    writes a long-format CSV plus, for two axes, one matrix CSV per metric
    in the row/column orientation of the swept axes.
    """
    if not axes:
        raise ValueError("sweep needs at least one axis")
    os.makedirs(base_cfg.out_dir, exist_ok=True)
    names = list(axes)
    results = []
    for combo in itertools.product(*(axes[n] for n in names)):
        cell = dict(zip(names, combo))
        label = "_".join(f"{k}={v}" for k, v in cell.items())
        overrides = dict(cell)
        overrides["out_dir"] = os.path.join(base_cfg.out_dir, label)
        cfg = _with_overrides(base_cfg, overrides)
        records = run_experiment(cfg)
        stats, n_ok, n_failed = aggregate_records(records)
        results.append({"cell": cell, "stats": stats, "n_ok": n_ok,
                        "n_failed": n_failed})

    _write_sweep_tables(names, axes, results, base_cfg.out_dir)
    _render_sweep_figures(names, results, base_cfg.out_dir)
    return results


def _with_overrides(cfg, overrides):
    d = cfg.as_dict()
    d.pop("policies")
    d.update(overrides)
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in d.items()})


def _write_sweep_tables(names, axes, results, out_dir):
    metric_keys = sorted(
        {k for r in results for k in r["stats"]}
    )
    long_path = os.path.join(out_dir, "sweep_long.csv")
    with open(long_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["metric", "mean", "sd", "min", "max", "count",
                                 "failed"])
        for r in results:
            for key in metric_keys:
                s = r["stats"].get(key)
                if s is None:
                    continue
                writer.writerow(
                    [r["cell"][n] for n in names]
                    + [key, repr(s.mean), repr(s.sd), repr(s.minimum),
                       repr(s.maximum), s.count, r["n_failed"]]
                )

    if len(names) == 2:
        rows, cols = axes[names[0]], axes[names[1]]
        lookup = {tuple(r["cell"][n] for n in names): r["stats"] for r in results}
        path = os.path.join(out_dir, "sweep_matrix.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for key in metric_keys:
                writer.writerow([key])
                writer.writerow([f"{names[0]}\\{names[1]}"] + list(cols))
                for rv in rows:
                    row = [rv]
                    for cv in cols:
                        s = lookup.get((rv, cv), {}).get(key)
                        row.append(repr(s.mean) if s else "")
                    writer.writerow(row)
                writer.writerow([])


def _render_sweep_figures(names, results, out_dir):
    from . import plots

    if len(names) != 1:
        return
    axis = names[0]
    metric_keys = sorted({k for r in results for k in r["stats"]})
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    xs = [r["cell"][axis] for r in results]
    path = os.path.join(out_dir, f"figdata_sweep_{axis}.dat")
    with open(path, "w") as fh:
        fh.write("# " + axis + " " +
                 " ".join(f"{k}_mean {k}_sd" for k in metric_keys) + "\n")
        for r in results:
            row = [str(r["cell"][axis])]
            for k in metric_keys:
                s = r["stats"].get(k)
                row += [repr(s.mean), repr(s.sd)] if s else ["nan", "nan"]
            fh.write(" ".join(row) + "\n")
    series = {
        k: (
            xs,
            [r["stats"][k].mean for r in results if k in r["stats"]],
            [r["stats"][k].sd for r in results if k in r["stats"]],
        )
        for k in metric_keys
    }
    theta_series = {k: v for k, v in series.items() if k.startswith("theta")}
    field_series = {
        k: v for k, v in series.items()
        if k.startswith("val_rel") or k.startswith("val_sum")
    }
    if theta_series:
        plots.save_errorbar_figure(
            theta_series, axis, "percent error",
            os.path.join(fig_dir, f"errorbars_theta_{axis}.png"),
        )
    if field_series:
        plots.save_errorbar_figure(
            field_series, axis, "relative L2 error",
            os.path.join(fig_dir, f"errorbars_fields_{axis}.png"),
        )


def ablate_regularization(cfg):
    """Paired forward runs from identical seeds: full loss vs data term only.

    Both arms train on the same boundary/initial examples; the second arm
    zeroes the residual terms, leaving a plain fit of the known solution
    points with nothing constraining the interior.
    """
    if cfg.mode != "forward":
        raise ValueError("ablation is defined for forward-mode configs")
    cfg_with = _with_overrides(cfg, {"out_dir": os.path.join(cfg.out_dir, "with_pi")})
    cfg_without = _with_overrides(
        cfg, {"out_dir": os.path.join(cfg.out_dir, "without_pi")}
    )
    with_records = run_experiment(cfg_with, include_pi=True)
    without_records = run_experiment(cfg_without, include_pi=False)
    return {"with_pi": with_records, "without_pi": without_records}

"""Batch command-line front end.

Subcommands: simulate, decompose, bias, select, sweep. Every run writes
CSV artifacts with a fixed column order and full-precision floats (17
significant digits) plus a JSON manifest, so identical configs and seeds
reproduce byte-identical numeric content at any thread count.

Exit codes: 0 completed, 2 config error, 3 numerical failure,
4 reliability trip wire (> 1% failed replications).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._backend import backend_name
from ._seeding import NS_REP, derive_seed
from .config import RunConfig, config_hash, load_config
from .cv import decompose_cv_mse
from .dgp import DgpSpec, MeanSpec, simulate
from .exceptions import ConfigError, NumericalError, ReliabilityError
from .mc import McReport, run_mc

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_RELIABILITY = 4

# z-bands: asymmetric so a false "bias confirmed" is harder than a false "no bias"
ZERO_BAND = 4.0
NONZERO_BAND = 5.0


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


@dataclass
class RunManifest:
    """Provenance record written beside every command's outputs."""

    command: str
    config_hash: str
    master_seed: int
    tool_version: str
    backend: str
    threads: int
    started_at: str
    finished_at: str
    outputs: list
    resolved_config: dict


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _manifest(command, config, threads, started_at, outputs) -> RunManifest:
    return RunManifest(
        command=command,
        config_hash=config_hash(config),
        master_seed=config.experiment.seed,
        tool_version=__version__,
        backend=backend_name(),
        threads=threads,
        started_at=started_at,
        finished_at=_now(),
        outputs=[str(o) for o in outputs],
        resolved_config=config.to_dict(),
    )


def _write_summary(out_dir: Path, manifest: RunManifest, extra: dict | None = None) -> Path:
    doc = {"manifest": asdict(manifest)}
    if extra:
        doc.update(extra)
    path = out_dir / "summary.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_simulate(config: RunConfig, out_path: Path, threads: int) -> None:
    """Write one simulated path as CSV, with its manifest beside it."""
    started = _now()
    T = config.first_T()
    max_lag = config.simulate_max_lag()
    path = simulate(config.dgp, T, max_lag, config.experiment.seed)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    k = path.n_series
    if k == 1:
        header = ["index", "y", "mu_true", "eps_true", *path.regressor_names]
        cols = [path.y, path.mu_true, path.eps_true]
    else:
        header = (
            ["index"]
            + [f"y_{s + 1}" for s in range(k)]
            + [f"mu_true_{s + 1}" for s in range(k)]
            + [f"eps_true_{s + 1}" for s in range(k)]
            + list(path.regressor_names)
        )
        cols = (
            [path.y[:, s] for s in range(k)]
            + [path.mu_true[:, s] for s in range(k)]
            + [path.eps_true[:, s] for s in range(k)]
        )
    cols += [path.x_full[:, j] for j in range(path.x_full.shape[1])]
    rows = [[i + 1] + [_fmt(c[i]) for c in cols] for i in range(T)]
    _write_csv(out_path, header, rows)
    manifest = _manifest("simulate", config, threads, started, [out_path.name])
    side = out_path.with_name(out_path.name + ".manifest.json")
    with open(side, "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_decompose(config: RunConfig, out_dir: Path, threads: int) -> None:
    """Per-path CV-MSE decompositions, one row per (seed, model, scheme)."""
    started = _now()
    if not config.models:
        raise ConfigError("decompose requires at least one entry in 'models'")
    T = config.first_T()
    max_lag = config.simulate_max_lag()
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in range(config.experiment.reps):
        rep_seed = derive_seed(config.experiment.seed, NS_REP, T, r)
        path = simulate(config.dgp, T, max_lag, rep_seed)
        for model in config.models:
            for scheme in config.schemes:
                dec = decompose_cv_mse(
                    path, model, scheme, crosscheck=config.experiment.crosscheck
                )
                rows.append(
                    [r, rep_seed, model.id, scheme.label, T, dec.n_evaluated,
                     _fmt(dec.term_eps2), _fmt(dec.term_mu_eps), _fmt(dec.term_muhat_eps),
                     _fmt(dec.term_ase), _fmt(dec.cv_mse), _fmt(dec.identity_gap)]
                )
    out_csv = out_dir / "decompose.csv"
    _write_csv(
        out_csv,
        ["rep", "seed", "model", "scheme", "T", "n_evaluated",
         "term_eps2", "term_mu_eps", "term_muhat_eps", "term_ase", "cv_mse",
         "identity_rel_gap"],
        rows,
    )
    manifest = _manifest("decompose", config, threads, started, [out_csv.name])
    _write_summary(out_dir, manifest)


def _bias_rows(report: McReport):
    by_index, pooled, mase, bias_var, long = [], [], [], [], []
    for (model_id, scheme_label, T), cell in report.cells.items():
        key = [model_id, scheme_label, T]
        for i in range(T):
            if not cell.mask[i]:
                continue
            n_i = int(cell.index_n[i])
            by_index.append(
                key + [i + 1, n_i, _fmt(cell.bias_by_index[i]), _fmt(cell.bias_by_index_se[i])]
            )
            bias_var.append(
                key + [i + 1, n_i,
                       _fmt(cell.err_mse[i]), _fmt(cell.err_variance[i]), _fmt(cell.err_sq_bias[i])]
            )
            long.append(key + [i + 1, "bias", _fmt(cell.bias_by_index[i]),
                               _fmt(cell.bias_by_index_se[i]), n_i])
            for stat, arr in (("err_mse", cell.err_mse), ("err_variance", cell.err_variance),
                              ("err_sq_bias", cell.err_sq_bias)):
                long.append(key + [i + 1, stat, _fmt(arr[i]), "", n_i])
        for subset, est in (("all", cell.bias_pooled), ("excl_last", cell.bias_pooled_excl_last)):
            z = abs(est.value / est.se) if est.se and est.se > 0 else float("nan")
            pooled.append(key + [subset, est.n, _fmt(est.value), _fmt(est.se), _fmt(z)])
            label = "pooled" if subset == "all" else "pooled_excl_last"
            long.append(key + [label, "bias", _fmt(est.value), _fmt(est.se), est.n])
        for stat, est in (("mase_loo", cell.mase_loo), ("mase_full", cell.mase_full),
                          ("cv_mse", cell.cv_mse_mean)):
            if stat != "cv_mse":
                mase.append(key + [stat, est.n, _fmt(est.value), _fmt(est.se)])
            long.append(key + ["pooled", stat, _fmt(est.value), _fmt(est.se), est.n])
    return by_index, pooled, mase, bias_var, long


def _band_lines(report: McReport):
    lines = []
    for (model_id, scheme_label, T), cell in report.cells.items():
        head = f"model={model_id} scheme={scheme_label} T={T}"
        for subset, est in (("pooled", cell.bias_pooled), ("pooled i<T", cell.bias_pooled_excl_last)):
            if est.n and est.se and est.se > 0:
                z = abs(est.value / est.se)
                zero = "met" if z <= ZERO_BAND else "NOT met"
                nonzero = "met" if z > NONZERO_BAND else "NOT met"
                lines.append(
                    f"{head} {subset}: bias={est.value:+.6e} se={est.se:.3e} |z|={z:.2f} "
                    f"zero-band(|z|<={ZERO_BAND:g}): {zero}; "
                    f"nonzero-band(|z|>{NONZERO_BAND:g}): {nonzero}"
                )
        last = cell.T - 1
        if cell.mask[last] and cell.bias_by_index_se[last] > 0:
            z = abs(cell.bias_by_index[last] / cell.bias_by_index_se[last])
            zero = "met" if z <= ZERO_BAND else "NOT met"
            lines.append(
                f"{head} index i=T: bias={cell.bias_by_index[last]:+.6e} "
                f"se={cell.bias_by_index_se[last]:.3e} |z|={z:.2f} "
                f"zero-band(|z|<={ZERO_BAND:g}): {zero}"
            )
        if cell.n_failed:
            lines.append(f"{head}: {cell.n_failed}/{cell.n_reps} replications failed")
    return lines


def cmd_bias(config: RunConfig, out_dir: Path, threads: int) -> None:
    """Bias experiment artifacts: per-index and pooled bias, MASE, components."""
    started = _now()
    report = run_mc(config.mc_config(), threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_index, pooled, mase, bias_var, long = _bias_rows(report)
    _write_csv(out_dir / "bias_by_index.csv",
               ["model", "scheme", "T", "i", "n", "estimate", "se"], by_index)
    _write_csv(out_dir / "bias_pooled.csv",
               ["model", "scheme", "T", "subset", "n", "estimate", "se", "abs_z"], pooled)
    _write_csv(out_dir / "mase.csv",
               ["model", "scheme", "T", "statistic", "n", "estimate", "se"], mase)
    _write_csv(out_dir / "bias_variance.csv",
               ["model", "scheme", "T", "i", "n", "err_mse", "err_variance", "err_sq_bias"],
               bias_var)
    _write_csv(out_dir / "report.csv",
               ["model", "scheme", "T", "index", "statistic", "estimate", "se", "n"], long)
    lines = _band_lines(report)
    with open(out_dir / "summary.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    manifest = _manifest("bias", config, threads, started,
                         ["bias_by_index.csv", "bias_pooled.csv", "mase.csv",
                          "bias_variance.csv", "report.csv", "summary.txt"])
    _write_summary(out_dir, manifest, {
        "wall_time_s": report.wall_time,
        "failures": {f"{k[0]}|{k[1]}|{k[2]}": c.n_failed for k, c in report.cells.items()},
    })


def cmd_select(config: RunConfig, out_dir: Path, threads: int) -> None:
    """Selection-frequency artifacts across schemes.

    CV failing to pick the minimum-ASE model is a finding, not an error:
    the exit code stays 0.
    """
    started = _now()
    if len(config.models) < 2:
        raise ConfigError("select requires at least 2 entries in 'models'")
    report = run_mc(config.mc_config(), threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    freq_rows, agree_rows = [], []
    for (scheme_label, T), sel in report.selection.items():
        for model_id, freq in sel.selection_freq.items():
            freq_rows.append(
                [scheme_label, T, model_id, sel.n_effective, _fmt(freq),
                 sel.excluded_counts[model_id]]
            )
        agree_rows.append([scheme_label, T, sel.n_effective, _fmt(sel.min_ase_agreement)])
    _write_csv(out_dir / "selection_freq.csv",
               ["scheme", "T", "model", "n_effective", "frequency", "n_excluded"], freq_rows)
    _write_csv(out_dir / "agreement.csv",
               ["scheme", "T", "n_effective", "min_ase_agreement"], agree_rows)
    manifest = _manifest("select", config, threads, started,
                         ["selection_freq.csv", "agreement.csv"])
    _write_summary(out_dir, manifest, {"wall_time_s": report.wall_time})


def cmd_sweep(config: RunConfig, out_dir: Path, threads: int) -> None:
    """Bias-vs-T and bias-vs-rho grids as one long-format CSV."""
    started = _now()
    t_grid = config.experiment.T_grid or ()
    rho_grid = config.experiment.rho_grid or ()
    if not t_grid and not rho_grid:
        raise ConfigError("sweep requires a non-empty 'T_grid' or 'rho_grid' in 'experiment'")
    rows = []

    def add_rows(sweep: str, value, report: McReport) -> None:
        for (model_id, scheme_label, T), cell in report.cells.items():
            for stat, est in (
                ("bias_pooled", cell.bias_pooled),
                ("bias_pooled_excl_last", cell.bias_pooled_excl_last),
            ):
                rows.append(
                    [sweep, _fmt(value), model_id, scheme_label, T, stat,
                     _fmt(est.value), _fmt(abs(est.value)), _fmt(est.se), est.n]
                )

    if t_grid:
        report = run_mc(config.mc_config(T_grid=t_grid), threads=threads)
        for T in t_grid:
            sub = McReport(
                cells={k: v for k, v in report.cells.items() if k[2] == T},
                selection={}, seed=report.seed, reps=report.reps,
                backend=report.backend, threads=report.threads, wall_time=0.0,
            )
            add_rows("T", T, sub)
    if rho_grid:
        if config.dgp.mean_kind.kind != "ar1":
            raise ConfigError("rho_grid sweeps require an ar1 DGP")
        T_fixed = config.first_T()
        for rho in rho_grid:
            dgp = DgpSpec(
                mean_kind=MeanSpec.ar1(rho),
                errors=config.dgp.errors,
                burn_in=config.dgp.burn_in,
            )
            swept = RunConfig(
                dgp=dgp, models=config.models, schemes=config.schemes,
                experiment=config.experiment,
            )
            report = run_mc(swept.mc_config(T_grid=(T_fixed,)), threads=threads)
            add_rows("rho", rho, report)

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "sweep.csv",
               ["sweep", "value", "model", "scheme", "T", "statistic",
                "estimate", "abs_estimate", "se", "n"], rows)
    manifest = _manifest("sweep", config, threads, started, ["sweep.csv"])
    _write_summary(out_dir, manifest)


_COMMANDS = {
    "simulate": (cmd_simulate, "write one simulated path as CSV"),
    "decompose": (cmd_decompose, "per-path CV-MSE decompositions"),
    "bias": (cmd_bias, "Monte Carlo bias experiment"),
    "select": (cmd_select, "model-selection frequencies across schemes"),
    "sweep": (cmd_sweep, "bias-vs-T and bias-vs-rho grids"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvbias",
        description="Measure the finite-sample bias of cross-validation on simulated time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the JSON config")
        sp.add_argument("--out", required=True,
                        help="output CSV path (simulate) or output directory")
        sp.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        sp.add_argument("--reps", type=int, default=None, help="override experiment.reps")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: env CVBIAS_THREADS or 1)")
        sp.add_argument("--crosscheck", action="store_true",
                        help="verify every downdate against a brute-force refit")
        sp.add_argument("--allow-unreliable", action="store_true",
                        help="keep cells with > 1%% failed replications instead of erroring")
    return parser


def _resolve_threads(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        return args.threads
    raw = os.environ.get("CVBIAS_THREADS", "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"CVBIAS_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"CVBIAS_THREADS must be >= 1, got {value}")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.reps is not None:
            changes["reps"] = args.reps
        if args.crosscheck:
            changes["crosscheck"] = True
        if args.allow_unreliable:
            changes["allow_unreliable"] = True
        if changes:
            config = config.with_experiment(**changes)
        threads = _resolve_threads(args)
        runner = _COMMANDS[args.command][0]
        runner(config, Path(args.out), threads)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ReliabilityError as exc:
        print(f"reliability trip wire: {exc}", file=sys.stderr)
        return EXIT_RELIABILITY


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: preset experiments, validation, noise dumps and plot-data export."""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from coherence_protection import ensemble, noise_gen, o_operator, presets, utils
from coherence_protection.utils import ConfigError, Constants, ShapeError

log = logging.getLogger(__name__)

EXPORT_KINDS = ("surface", "lines")


def _table_hash(config, preset):
    document = presets.emit_document(config, preset)
    document["sim"].pop("workers")
    return utils.config_digest(document)


def write_table(frame, path, config, preset):
    """CSV with a provenance header plus a JSON sidecar holding the full configuration."""
    config_hash = _table_hash(config, preset)
    utils.write_csv(frame, path, config_hash)
    sidecar = {"tool": Constants.TOOL_NAME, "config_hash": config_hash, "config": presets.emit_document(config, preset)}
    Path(path).with_suffix(".json").write_text(json.dumps(sidecar, indent=2, default=str))
    log.info("wrote %s (%d rows)", path, len(frame))
    return Path(path)


def _sweep(config, preset, progress):
    output = preset.output
    return [
        (value, ensemble.run_ensemble(presets.override(config, output["sweep_key"], value), progress))
        for value in output["sweep_values"]
    ]


def _frozen_offsets(config, preset, baseline, progress):
    results = _sweep(config, preset, progress)
    average = ensemble.combine_results([result for _, result in results])
    curves = [(f"{value:+g}", result) for value, result in results]
    curves += [("0", baseline), ("average", average)]
    return pd.concat(
        [
            pd.DataFrame(
                {
                    "curve": name,
                    "t": result.times,
                    "coherence_mean": result.mean.coherence,
                    "coherence_stderr": result.stderr["coherence"],
                    "delta_vs_baseline": result.mean.coherence - baseline.mean.coherence,
                }
            )
            for name, result in curves
        ],
        ignore_index=True,
    )


def _thresholds(config, preset, progress):
    output = preset.output
    rows = []
    for factor, factor_values in output["factors"].items():
        for x in factor_values:
            factor_config = presets.override(config, factor, x)
            baseline = ensemble.run_ensemble(presets.without_noise(factor_config), progress)
            for gamma2 in output["sweep_values"]:
                result = ensemble.run_ensemble(presets.override(factor_config, output["sweep_key"], gamma2), progress)
                rows.append(
                    {
                        "factor": factor,
                        "sweep_x": x,
                        "gamma2": gamma2,
                        "metric": ensemble.protection_metric(result, baseline),
                        "metric_stderr": ensemble.protection_metric_stderr(result),
                    }
                )
            log.info("%s=%g done", factor, x)
    return pd.DataFrame(rows)


def _coherence_vs_negativity(config, preset, progress):
    frames, rows = [], []
    for value, result in _sweep(config, preset, progress):
        frames.append(
            pd.DataFrame(
                {
                    "sweep_value": value,
                    "t": result.times,
                    "coherence": result.mean.coherence,
                    "minus_negativity": -result.mean.negativity,
                }
            )
        )
        rows.append({"sweep_value": value, "pearson": ensemble.coherence_negativity_correlation(result)})
    return pd.concat(frames, ignore_index=True), pd.DataFrame(rows)


def run_preset(preset, out_dir, config=None, progress=False):
    """Runs the baseline and sweep ensembles of a preset and writes its CSV files; returns their paths."""
    config = preset.config() if config is None else config
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out_dir}: {e}") from e
    stem = out_dir / preset.name
    output = preset.output
    log.info("running preset %s into %s", preset.name, out_dir)

    match preset.name:
        case "figFi_fcoefficients":
            table = o_operator.f_coefficient_table(config.params, config.alpha1, config.T, preset.dt_f)
            return {write_table(table, stem.with_suffix(".csv"), config, preset)}
        case "fig4_thresholds":
            return {write_table(_thresholds(config, preset, progress), Path(f"{stem}_metric.csv"), config, preset)}
        case "fig6_coherence_vs_negativity":
            series, correlation = _coherence_vs_negativity(config, preset, progress)
            return {
                write_table(series, stem.with_suffix(".csv"), config, preset),
                write_table(correlation, Path(f"{stem}_pearson.csv"), config, preset),
            }

    baseline = ensemble.run_ensemble(presets.without_noise(config), progress)
    match preset.name, output["sweep_key"]:
        case "fig3_frozen_offsets", _:
            table = _frozen_offsets(config, preset, baseline, progress)
        case _, None:
            result = ensemble.run_ensemble(config, progress)
            return {
                ensemble.write_result_csv(result, stem.with_suffix(".csv"), output["full_stderr"]),
                ensemble.write_result_csv(baseline, Path(f"{stem}_baseline.csv"), output["full_stderr"]),
            }
        case _:
            table = ensemble.difference_surface(_sweep(config, preset, progress), baseline)
    return {write_table(table, stem.with_suffix(".csv"), config, preset)}


def export_plotdata(csv, kind="surface", value="delta_vs_baseline", row="sweep_value"):
    """Reshapes a long table into a (row value x t) matrix for surface plots; lines pass through."""
    frame = pd.read_csv(csv, comment="#")
    if kind not in EXPORT_KINDS:
        raise ValueError(f"Unknown export kind {kind!r}, expected one of {EXPORT_KINDS}")
    if kind == "lines":
        return frame
    for column in (row, "t", value):
        if column not in frame:
            raise ShapeError(f"{csv}: missing column {column!r}")
    groups = frame.groupby(row, sort=False)["t"]
    if groups.ngroups < 2:
        raise ShapeError(f"{csv}: a surface needs at least two values of {row!r}, got {groups.ngroups}")
    first = groups.get_group(next(iter(groups.groups))).to_numpy()
    for key, times in groups:
        if len(times) != len(first) or not np.allclose(times.to_numpy(), first):
            raise ShapeError(f"{csv}: ragged grid, {row}={key} has {len(times)} times, expected {len(first)}")
    return frame.pivot(index=row, columns="t", values=value)


def write_plotdata(matrix, path):
    """gnuplot nonuniform matrix: the first row holds the column axis, the first column the row axis."""
    header = np.concatenate([[matrix.shape[1]], matrix.columns.to_numpy(dtype=float)])
    body = np.column_stack([matrix.index.to_numpy(dtype=float), matrix.to_numpy(dtype=float)])
    np.savetxt(path, np.vstack([header, body]), fmt="%.12g")
    return Path(path)


def _load(args):
    document = presets.load_document(args.config) or {}
    if not isinstance(document, dict):
        raise ConfigError([(str(args.config), "expected a mapping of sections")])
    flags = {
        ("output", "preset"): getattr(args, "preset", None),
        ("output", "dir"): getattr(args, "out", None),
        ("sim", "base_seed"): getattr(args, "seed", None),
        ("sim", "n_traj"): getattr(args, "n_traj", None),
        ("sim", "workers"): getattr(args, "threads", None),
    }
    for (section, key), value in flags.items():
        if value is not None:
            if not isinstance(document.setdefault(section, {}), dict):
                raise ConfigError([(section, "expected a mapping of keys")])
            document[section][key] = value
    return presets.parse_document(document)


def cmd_run(args):
    config, preset = _load(args)
    paths = run_preset(preset, preset.output["dir"], config, progress=args.progress)
    for path in sorted(paths):
        print(path)


def cmd_validate(args):
    config, preset = _load(args)
    print(f"{args.config}: ok (preset={preset.name}, config_hash={config.config_hash})")


def cmd_noise_dump(args):
    config, preset = _load(args)
    if config.classical.channel == Constants.CHANNEL_NONE:
        raise ConfigError([("classical_noise.channel", "noise-dump needs a classical noise channel")])
    grid = noise_gen.TimeGrid(0.0, config.dt, config.n_steps).halved()
    paths = [
        noise_gen.sample_path(
            config.classical,
            grid,
            noise_gen.split_seed(config.base_seed, i, config.classical.seed_stream),
            default_flip_interval=config.dt,
        )
        for i in range(args.n_paths)
    ]
    out_dir = Path(preset.output["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{preset.name}_noise.csv"
    noise_gen.write_paths_csv(paths, path, _table_hash(config, preset))
    log.info("wrote %d noise paths to %s", len(paths), path)
    print(path)


def cmd_export(args):
    table = export_plotdata(args.csv, args.kind, args.value, args.row)
    out = Path(args.out) if args.out else Path(args.csv).with_suffix(".dat")
    if args.kind == "lines":
        table.to_csv(out, sep=" ", index=False)
    else:
        write_plotdata(table, out)
    print(out)


def build_parser():
    parser = argparse.ArgumentParser(
        prog=Constants.TOOL_NAME,
        description="Noise-assisted coherence protection of an atom in a leaky cavity.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a preset experiment and write its CSV files")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--preset", choices=tuple(presets.PRESETS))
    run.add_argument("--out", type=str, help="output directory")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--n-traj", type=int, dest="n_traj")
    run.add_argument("--threads", type=int, help="worker processes")
    run.add_argument("--progress", action="store_true", help="show a progress bar")
    run.set_defaults(func=cmd_run)

    validate = commands.add_parser("validate", help="check a configuration file")
    validate.add_argument("--config", required=True, type=Path)
    validate.set_defaults(func=cmd_validate)

    dump = commands.add_parser("noise-dump", help="write sampled classical noise paths")
    dump.add_argument("--config", required=True, type=Path)
    dump.add_argument("--n-paths", type=int, default=10, dest="n_paths")
    dump.add_argument("--out", type=str, help="output directory")
    dump.set_defaults(func=cmd_noise_dump)

    export = commands.add_parser("export", help="reshape a long CSV for plotting")
    export.add_argument("csv", type=Path)
    export.add_argument("--kind", choices=EXPORT_KINDS, default="surface")
    export.add_argument("--value", default="delta_vs_baseline", help="column holding the surface values")
    export.add_argument("--row", default="sweep_value", help="column holding the row axis")
    export.add_argument("--out", type=str)
    export.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        log.error("%s", e)
        return 1
    except Exception as e:
        log.error("%s: %s", type(e).__name__, e)
        log.debug("traceback", exc_info=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""
Q_Bridge - Command Line
run, validate and action subcommands with exit-code error reporting
"""

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from config import load_config
from src.action.engine import path_action
from src.cli.figures import emit_figure_data, write_action, write_meta, write_snapshots, write_summary
from src.cli.scenario import ScenarioConfig, load_scenario
from src.domain.errors import ConfigError, QBridgeError, StructuralError, UnsupportedModelError
from src.domain.models import PathField, PathGrid, Scheme
from src.phase_model.coupling import CouplingTensor, validate_couplings
from src.phase_model.liouvillian import expand_liouvillian
from src.phase_model.quadrature import to_quadrature_model
from src.sampling.ensemble import run_ensemble
from src.sampling.oracles import preset_references
from src.sampling.stats import compare, equilibration_diagnostic
from src.utils.logging import setup_logging


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting"""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="q_bridge", description="Time-symmetric Q-function path sampling")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="evolve a trajectory ensemble and write figure data")
    run.add_argument("--preset", choices=["wiener", "squeeze", "freefield", "custom"])
    run.add_argument("--config", dest="config_file", help="scenario JSON/YAML (or a previous meta.json)")
    run.add_argument("--out", dest="output_dir", help="output directory")
    run.add_argument("--tensor", help="coupling tensor JSON for the custom preset")
    run.add_argument("--trajectories", type=int)
    run.add_argument("--tau-max", dest="tau_max", type=float)
    run.add_argument("--dtau", type=float)
    run.add_argument("--dt", type=float)
    run.add_argument("--checkpoints", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--iterations", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--emit-snapshots", dest="emit_snapshots", action="store_true", default=None)

    validate = sub.add_parser("validate", help="check a coupling tensor")
    validate.add_argument("tensor", help="coupling tensor JSON")

    action = sub.add_parser("action", help="discrete action of a path CSV")
    action.add_argument("path", help="CSV with a header of component labels, optionally led by a 't' column")
    action.add_argument("--preset", choices=["wiener", "squeeze", "custom"],
                        help="model preset (default: squeeze)")
    action.add_argument("--tensor", help="coupling tensor JSON for the custom preset")
    action.add_argument("--config", dest="config_file")
    action.add_argument("--scheme", choices=[s.value for s in Scheme], default="I")
    action.add_argument("--out", dest="output", help="write per-step terms to this CSV")
    return parser


def _run(args, app_config: Dict[str, Any]) -> int:
    overrides = {
        key: getattr(args, key)
        for key in ("preset", "output_dir", "tensor", "trajectories", "tau_max", "dtau", "dt",
                    "checkpoints", "seed", "iterations", "workers", "emit_snapshots")
    }
    scenario = load_scenario(app_config, config_file=args.config_file, overrides=overrides)
    started = time.perf_counter()
    model = scenario.build_model()
    config = scenario.ensemble_config(model)
    summary = run_ensemble(config)
    elapsed = time.perf_counter() - started

    out_dir = Path(scenario.output_dir)
    name = scenario.name
    references = preset_references(scenario.preset, model, config.spec.sampler, config.grid.path,
                                   scenario.model_params())
    extra = _diagnostics(summary, references)

    written = [write_summary(summary, out_dir / f"{name}_summary.csv")]
    written += emit_figure_data(summary, name, out_dir, references, scenario.line_time)
    if scenario.emit_snapshots:
        written.append(write_snapshots(summary, out_dir / f"{name}_snapshots.csv"))
    written.append(write_meta(out_dir / f"{name}_meta.json", scenario.echo(),
                              {"ensemble_seconds": elapsed}, extra))
    for path in written:
        print(path)
    return 0


def _diagnostics(summary, references) -> Dict[str, Any]:
    extra: Dict[str, Any] = {"n_traj": summary.n_traj}
    if references:
        score = compare(summary, references)
        extra["max_stderr_deviation"] = score
        logger.info(f"[{summary.label}] worst deviation from reference: {score:.2f} stderr")
    if len(summary.taus) >= 3 and summary.n_traj >= 3:
        extra["tau_star"] = {
            comp: equilibration_diagnostic(summary, comp).tau_star for comp in summary.components
        }
    return extra


def _validate(args) -> int:
    tensor = CouplingTensor.from_json(args.tensor)
    report = validate_couplings(tensor)
    for line in report.lines():
        print(line)
    if not report.valid:
        print(f"error: {len(report.violations)} coupling constraint violation(s) in {args.tensor}", file=sys.stderr)
        return ConfigError.exit_code
    try:
        model = to_quadrature_model(expand_liouvillian(tensor), name=Path(args.tensor).stem)
    except UnsupportedModelError as e:
        logger.debug(f"No quadrature model for {args.tensor}: {e}")
        print("non-constant diffusion; use log_transform")
        return 0
    print(f"partition: x={model.n_x} y={model.n_y} deterministic={len(model.det_idx)} d={model.d:.6g}")
    return 0


def read_path_csv(path: Path, labels: Sequence[str], t0: float, tf: float) -> PathField:
    """Path values from a CSV whose header names the model components"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"path file not found: {path}")
    with open(path, "r") as f:
        header = [h.strip() for h in f.readline().strip().split(",")]
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as e:
        raise ConfigError(f"cannot parse path file {path}: {e}")
    if data.shape[1] != len(header):
        raise StructuralError(f"{path} has {data.shape[1]} columns for {len(header)} header names")
    if header and header[0] == "t":
        times, data, header = data[:, 0], data[:, 1:], header[1:]
        if times.size > 2 and np.ptp(np.diff(times)) > 1e-9:
            raise StructuralError(f"{path} has non-uniform t spacing; the action needs a uniform lattice")
        t0, tf = float(times[0]), float(times[-1])
    missing = [label for label in labels if label not in header]
    if missing:
        raise StructuralError(f"{path} lacks columns {missing}; header is {header}")
    values = data[:, [header.index(label) for label in labels]]
    return PathField(grid=PathGrid(t0=t0, tf=tf, n=values.shape[0] - 1), values=values)


def _action(args, app_config: Dict[str, Any]) -> int:
    overrides = {"preset": args.preset, "tensor": args.tensor}
    scenario: ScenarioConfig = load_scenario(app_config, preset="squeeze", config_file=args.config_file,
                                             overrides=overrides)
    model = scenario.build_model()
    path = read_path_csv(Path(args.path), model.labels, scenario.t0, scenario.tf)
    value = path_action(path, args.scheme, model)
    if args.output:
        print(write_action(Path(args.output), value.steps, value.total, value.physical))
    else:
        for k, step in enumerate(value.steps, start=1):
            print(f"{k},{step:.12g}")
    print(f"S={value.total:.12g} physical={value.physical:.12g} log_norm_per_step={value.log_normalization:.12g}")
    return 0


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, dispatch a subcommand and return its exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        app_config = load_config()
        args = build_parser().parse_args(argv)
        level = "DEBUG" if args.verbose else app_config["app"]["log_level"]
        setup_logging(level, app_config["app"].get("log_dir"))
        if args.command == "run":
            return _run(args, app_config)
        if args.command == "validate":
            return _validate(args)
        if args.command == "action":
            return _action(args, app_config)
        build_parser().print_usage(sys.stderr)
        return ConfigError.exit_code
    except QBridgeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 1
    except Exception as e:
        logger.exception(e)
        print(f"error: unexpected {type(e).__name__}: {e}", file=sys.stderr)
        return 1


__all__ = ["build_parser", "read_path_csv", "run"]

#!/usr/bin/env python3
"""
Full-scale Wiener and squeezing bridge runs
Runs the configured presets and checks them against the closed-form curves.
Takes minutes; pass --workers to spread batches over processes.
"""

import argparse
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from config import load_config
from src.cli.figures import emit_figure_data, write_summary
from src.cli.scenario import load_scenario
from src.sampling.ensemble import run_ensemble
from src.sampling.oracles import direct_tssde_oracle, preset_references
from src.sampling.stats import compare, equilibration_diagnostic, moments
from src.utils.logging import setup_logging

# Colors for terminal output
GREEN = '\033[92m'
RED = '\033[91m'
BLUE = '\033[94m'
RESET = '\033[0m'

MAX_STDERR = 3.0


def print_header(text):
    print(f"\n{BLUE}{'=' * 70}{RESET}")
    print(f"{BLUE}{text.center(70)}{RESET}")
    print(f"{BLUE}{'=' * 70}{RESET}\n")


def report(ok: bool, text: str) -> bool:
    mark = f"{GREEN}PASS{RESET}" if ok else f"{RED}FAIL{RESET}"
    print(f"  [{mark}] {text}")
    return ok


def _run(preset: str, app_config, overrides):
    scenario = load_scenario(app_config, preset=preset, overrides=overrides)
    model = scenario.build_model()
    config = scenario.ensemble_config(model)
    summary = run_ensemble(config)
    refs = preset_references(preset, model, config.spec.sampler, config.grid.path, scenario.model_params())
    out_dir = Path(scenario.output_dir)
    write_summary(summary, out_dir / f"{scenario.name}_summary.csv")
    emit_figure_data(summary, scenario.name, out_dir, refs, scenario.line_time)
    return scenario, config, summary, refs


def check_wiener(app_config, overrides) -> bool:
    print_header("Wiener bridge")
    _, _, summary, refs = _run("wiener", app_config, overrides)
    score = compare(summary, refs)
    ok = report(score <= MAX_STDERR, f"<x^2> vs 1 + t: {score:.2f} stderr")
    _, end_var, end_se = moments(summary, float(summary.taus[-1]), 1.0, "x")
    ok &= report(1.90 <= end_var <= 2.00, f"<x^2(1)> = {end_var:.3f} +- {end_se:.3f}")
    result = equilibration_diagnostic(summary, "x")
    # informational: the settle time depends on the checkpoint spacing and N
    print(f"  tau* = {result.tau_star}  (changes: {np.round(result.changes, 2).tolist()})")
    return ok


def check_squeeze(app_config, overrides) -> bool:
    print_header("Squeezed vacuum")
    scenario, config, summary, refs = _run("squeeze", app_config, overrides)
    ok = True
    for ref in refs:
        score = compare(summary, ref)
        ok &= report(score <= MAX_STDERR, f"<{ref.component}^2> vs {ref.label}: {score:.2f} stderr")

    direct = direct_tssde_oracle(config.model, config.grid.path, config.spec.sampler,
                                 n_traj=scenario.trajectories, seed=scenario.seed + 1)
    score = compare(summary, direct)
    ok &= report(score <= MAX_STDERR, f"SPDE vs direct integration: {score:.2f} combined stderr")

    x = equilibration_diagnostic(summary, "x")
    ok &= report(x.equilibrated and x.tau_star <= 1.5, f"x settles by tau* = {x.tau_star}")
    return ok


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args()

    app_config = load_config()
    setup_logging(app_config["app"]["log_level"], app_config["app"].get("log_dir"))
    overrides = {"workers": args.workers, "output_dir": args.out}

    results = [check_wiener(app_config, overrides), check_squeeze(app_config, overrides)]
    print()
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())

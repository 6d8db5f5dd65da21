"""Command-line front end: subcommand per experiment, INI configs, overrides.

Precedence for every config field: built-in defaults, then the [common]
section of the config file, then the section named after the experiment,
then command-line flags.  Flag names mirror config keys verbatim.

Exit codes: 0 all hard checks passed, 1 some check failed, 2 configuration
or runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys

from .harness import (
    EXPERIMENTS,
    ConfigInvalid,
    ExperimentConfig,
    default_config,
    resolve_jobs,
    run,
)


def _parse_n_grid(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part.strip()) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigInvalid(f"n_grid must be comma-separated integers, got {text!r}") from exc


def _parse_prior_w(text: str):
    text = text.strip()
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigInvalid(f"prior_w must be a number or 'auto', got {text!r}") from exc


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigInvalid(f"expected a boolean, got {text!r}")


def _parse_int(key: str):
    def parse(text: str) -> int:
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigInvalid(f"{key} must be an integer, got {text!r}") from exc

    return parse


def _parse_float(key: str):
    def parse(text: str) -> float:
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigInvalid(f"{key} must be a number, got {text!r}") from exc

    return parse


_FIELD_PARSERS = {
    "model": str,
    "n_grid": _parse_n_grid,
    "p_max": _parse_int("p_max"),
    "prior_kind": str,
    "prior_m": _parse_int("prior_m"),
    "prior_s": _parse_float("prior_s"),
    "prior_w": _parse_prior_w,
    "truth_s": _parse_float("truth_s"),
    "truth_scale": _parse_float("truth_scale"),
    "alpha": _parse_float("alpha"),
    "replications": _parse_int("replications"),
    "seed": _parse_int("seed"),
    "n_kept": _parse_int("n_kept"),
    "burn_in": _parse_int("burn_in"),
    "thinning": _parse_int("thinning"),
    "n_gauss": _parse_int("n_gauss"),
    "save_chains": _parse_bool,
    "out_dir": str,
}


def load_config_file(path: str) -> dict[str, dict]:
    """Parse an INI config into {section: {field: parsed value}}."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config file: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigInvalid(f"malformed config file: {exc}") from exc
    sections: dict[str, dict] = {}
    for section in parser.sections():
        if section != "common" and section not in EXPERIMENTS:
            raise ConfigInvalid(f"unknown config section [{section}]")
        parsed = {}
        for key, raw in parser.items(section):
            if key == "experiment":
                raise ConfigInvalid("the experiment is set by the subcommand, not the file")
            if key not in _FIELD_PARSERS:
                raise ConfigInvalid(f"unknown config key {key!r} in [{section}]")
            parsed[key] = _FIELD_PARSERS[key](raw)
        sections[section] = parsed
    return sections


def build_config(
    experiment: str, file_sections: dict[str, dict], overrides: dict
) -> ExperimentConfig:
    fields = dataclasses.asdict(default_config(experiment))
    fields.update(file_sections.get("common", {}))
    fields.update(file_sections.get(experiment, {}))
    fields.update(overrides)
    fields["experiment"] = experiment
    return ExperimentConfig(**fields)


def _add_experiment_parser(subparsers, name: str) -> None:
    sub = subparsers.add_parser(name, help=EXPERIMENTS[name])
    sub.add_argument("--config", help="INI config file ([common] plus per-experiment sections)")
    sub.add_argument("--jobs", type=int, help="worker pool size (fallback: BVM_LAB_JOBS, then CPU count)")
    sub.add_argument("--out", dest="out_dir", help="output directory (same as --out_dir)")
    sub.add_argument("--model", help="model kind")
    sub.add_argument("--n_grid", help="comma-separated sample sizes")
    sub.add_argument("--p_max", type=int, help="ambient parameter dimension")
    sub.add_argument("--prior_kind", help="truncation or smooth")
    sub.add_argument("--prior_m", type=int, help="prior support dimension")
    sub.add_argument("--prior_s", type=float, help="prior smoothness exponent")
    sub.add_argument("--prior_w", help="prior scale, or 'auto' to balance at each n")
    sub.add_argument("--truth_s", type=float, help="truth smoothness exponent")
    sub.add_argument("--truth_scale", type=float, help="truth amplitude multiplier")
    sub.add_argument("--alpha", type=float, help="credible level complement")
    sub.add_argument("--replications", type=int, help="replication count")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--n_kept", type=int, help="kept draws per chain")
    sub.add_argument("--burn_in", type=int, help="discarded initial steps")
    sub.add_argument("--thinning", type=int, help="keep every k-th step")
    sub.add_argument("--n_gauss", type=int, help="Monte Carlo draws for Gaussian references")
    sub.add_argument("--save_chains", help="persist kept draws as flat text (true/false)")
    sub.add_argument("--out_dir", help="output directory")


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    for key, parse in _FIELD_PARSERS.items():
        raw = getattr(args, key, None)
        if raw is None:
            continue
        overrides[key] = parse(raw) if isinstance(raw, str) else raw
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bvm-lab",
        description="replicated experiments for penalized estimators and their "
        "Gaussian posterior approximations",
    )
    parser.add_argument(
        "--list", action="store_true", help="list the experiments and exit"
    )
    subparsers = parser.add_subparsers(dest="experiment")
    for name in EXPERIMENTS:
        _add_experiment_parser(subparsers, name)
    args = parser.parse_args(argv)

    if args.list:
        for name, description in EXPERIMENTS.items():
            print(f"{name}: {description}")
        return 0
    if args.experiment is None:
        parser.print_usage(sys.stderr)
        print("bvm-lab: error: choose an experiment or pass --list", file=sys.stderr)
        return 2

    try:
        sections = load_config_file(args.config) if args.config else {}
        config = build_config(args.experiment, sections, _collect_overrides(args))
        result = run(config, jobs=resolve_jobs(args.jobs))
    except ConfigInvalid as exc:
        print(f"bvm-lab: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures also map to exit code 2
        print(f"bvm-lab: error: {exc}", file=sys.stderr)
        return 2

    checked = sum(1 for row in result.rows if row.passed is not None)
    failed = sum(1 for row in result.rows if row.passed is False)
    status = "pass" if result.ok else "FAIL"
    print(f"{args.experiment}: {status} ({checked - failed}/{checked} checks)")
    print(f"report: {result.csv_path}")
    print(f"manifest: {result.manifest_path}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())

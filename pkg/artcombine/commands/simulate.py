import argparse
from typing import Any, Dict, List
import logging

from pydantic import ValidationError

from artcombine.commands import add_output_arguments, echo_manifest, write_report
from artcombine.config import settings
from artcombine.exceptions import UsageError
from artcombine.schemas import STUDY_METHODS, RunManifest, SimStudyConfig
from artcombine.simharness import PRESETS, preset_configs, run_study
from artcombine.utils.performance_monitor import performance_monitor

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "simulate",
        help="Type I error and power studies",
        description="Monte-Carlo rejection rates for a preset study table or an explicit configuration",
    )
    parser.add_argument("--preset", choices=sorted(PRESETS), default=None, help="Study table to reproduce")
    parser.add_argument("--all-cells", action="store_true", help="Run every cell of the preset, not only its default")
    parser.add_argument("--full-scale", action="store_true", help="Use B = ARTCOMBINE_FULL_SCALE_B replicates")
    parser.add_argument("--B", type=int, default=None, help="Replicates per cell (default: ARTCOMBINE_DEFAULT_B)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--fixed-effects", action="store_true", help="Draw effects once per study instead of per replicate")

    explicit = parser.add_argument_group("explicit configuration (without --preset)")
    explicit.add_argument("--k", type=int, default=None)
    explicit.add_argument("--L", type=int, default=None)
    explicit.add_argument("--mu", type=float, default=None, help="Constant effect, or the sparse effect size with --fraction")
    explicit.add_argument("--mu-lo", type=float, default=None, help="Lower end of uniform effects")
    explicit.add_argument("--mu-hi", type=float, default=None, help="Upper end of uniform effects")
    explicit.add_argument("--fraction", type=float, default=None, help="Fraction of tests carrying the sparse effect")
    explicit.add_argument("--rho", type=float, default=None, help="Random correlation: equicorrelation level")
    explicit.add_argument("--delta", type=float, default=1.0, help="Random correlation: perturbation range")
    explicit.add_argument("--redraw-corr", action="store_true", help="Random correlation: draw a new matrix for every replicate")
    explicit.add_argument("--methods", default=None, help=f"Comma-separated subset of {','.join(STUDY_METHODS)}")
    explicit.add_argument("--decorrelate", action="store_true", help="Also report decorrelated variants")
    parser.add_argument("--corr", default=None, help="Correlation matrix CSV (required by muopioid-power)")

    add_output_arguments(parser)
    parser.set_defaults(handler=run)


def _replicates(args: argparse.Namespace):
    if args.full_scale and args.B is not None:
        raise UsageError("--full-scale and --B are mutually exclusive")
    if args.full_scale:
        return settings.full_scale_B
    if args.B is not None and args.B < 1:
        raise UsageError(f"--B must be at least 1, got {args.B}")
    return args.B


def _effect_law(args: argparse.Namespace) -> Dict[str, Any]:
    if args.mu_lo is not None or args.mu_hi is not None:
        if args.mu_lo is None or args.mu_hi is None or args.fraction is not None:
            raise UsageError("Uniform effects need both --mu-lo and --mu-hi, and no --fraction")
        return {"kind": "uniform", "mu_lo": args.mu_lo, "mu_hi": args.mu_hi}
    if args.fraction is not None:
        if args.mu is None:
            raise UsageError("Sparse effects need --mu together with --fraction")
        return {"kind": "sparse", "fraction": args.fraction, "mu": args.mu}
    return {"kind": "constant", "mu": args.mu or 0.0}


def _correlation_source(args: argparse.Namespace) -> Dict[str, Any]:
    if args.corr is not None and args.rho is not None:
        raise UsageError("Give either --corr or --rho, not both")
    if args.corr is not None:
        return {"kind": "file", "path": args.corr}
    if args.rho is not None:
        return {"kind": "random", "rho": args.rho, "delta": args.delta}
    return {"kind": "independent"}


def _explicit_config(args: argparse.Namespace, B) -> SimStudyConfig:
    if args.k is None or args.L is None:
        raise UsageError("Without --preset, both --k and --L are required")
    fields: Dict[str, Any] = {
        "k": args.k,
        "L": args.L,
        "alpha": args.alpha,
        "seed": args.seed,
        "effect_law": _effect_law(args),
        "correlation_source": _correlation_source(args),
        "decorrelate_flag": args.decorrelate,
        "redraw_correlation": args.redraw_corr,
        "resample_effects": not args.fixed_effects,
    }
    if args.methods:
        fields["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if B is not None:
        fields["B"] = B
    return SimStudyConfig(**fields)


def build_configs(args: argparse.Namespace) -> List[SimStudyConfig]:
    """Study configurations from the flags; every check runs before any simulation"""
    B = _replicates(args)
    try:
        if args.preset is None:
            if args.all_cells:
                raise UsageError("--all-cells needs --preset")
            return [_explicit_config(args, B)]

        overrides = [flag for flag in ("k", "L", "mu", "mu_lo", "mu_hi", "fraction", "rho", "methods") if getattr(args, flag) is not None]
        flags = [flag for flag in ("decorrelate", "redraw_corr") if getattr(args, flag)]
        if overrides or flags:
            dropped = ", ".join("--" + f.replace("_", "-") for f in overrides + flags)
            raise UsageError(f"--preset fixes the study design; drop {dropped}")
        if PRESETS[args.preset].needs_corr and args.corr is None:
            raise UsageError(f"Preset {args.preset} needs a correlation matrix (--corr)")
        if not PRESETS[args.preset].needs_corr and args.corr is not None:
            raise UsageError(f"Preset {args.preset} does not use a correlation file; drop --corr")
        return preset_configs(
            args.preset,
            B=B,
            seed=args.seed,
            all_cells=args.all_cells,
            corr_path=args.corr,
            alpha=args.alpha,
            resample_effects=not args.fixed_effects,
        )
    except ValidationError as e:
        detail = e.errors()[0].get("msg", str(e)).replace("Value error, ", "")
        raise UsageError(f"invalid study configuration: {detail}")


def run(args: argparse.Namespace) -> int:
    """Execute the simulate sub-command"""
    configs = build_configs(args)
    manifest = echo_manifest(
        RunManifest(
            subcommand="simulate",
            input_paths={"corr": args.corr},
            k=configs[0].k if len(configs) == 1 else None,
            L=configs[0].L if len(configs) == 1 else None,
            alpha=args.alpha,
            seed=args.seed,
            B=configs[0].B,
            output=args.out,
            options={
                "preset": args.preset,
                "cells": [c.model_dump(include={"k", "L", "effect_law", "correlation_source", "redraw_correlation"}) for c in configs],
                "methods": configs[0].methods,
                "resample_effects": not args.fixed_effects,
                "format": args.fmt,
            },
        )
    )

    workers = settings.resolved_threads()
    records = []
    for i, cfg in enumerate(configs, start=1):
        logger.info(f"Cell {i}/{len(configs)}: k={cfg.k}, L={cfg.L}, B={cfg.B}")
        with performance_monitor.stage(f"cell k={cfg.k} L={cfg.L}", cfg.B):
            report = run_study(cfg, workers=workers)
        records.extend(report.as_records())

    summary = performance_monitor.get_performance_summary()
    logger.info(f"Simulation finished in {summary.get('total_seconds', 0)}s over {len(configs)} cell(s)")
    write_report(records, args, manifest)
    return 0

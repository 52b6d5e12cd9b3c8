import argparse
import math
from typing import Any, Dict, List, Optional, Tuple
import logging

from pydantic import ValidationError

from artcombine import combine_adaptive, combine_fixed, decorrelate
from artcombine.commands import add_output_arguments, echo_manifest, write_report
from artcombine.config import settings
from artcombine.correlation import CorrelationMatrix
from artcombine.exceptions import UsageError
from artcombine.schemas import AdaptiveSpec, CombinedResult, Method, PValueVector, RunManifest, TruncationSpec
from artcombine.utils.input_validator import input_validator

logger = logging.getLogger(__name__)

TRUNCATED_METHODS = {Method.RTP.value, Method.ART.value, Method.ARTP.value, Method.ARTA.value}
SWEEP_COLUMNS = ("rtp", "art", "artp", "arta")


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "combine",
        help="Combine one set of p-values",
        description="Combined p-value for the smallest k of L p-values, optionally after decorrelation",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", help="p-value file: one value per line, or name,value[,sign] CSV")
    source.add_argument("--zscores", help="Signed z-score file in the same layouts")
    parser.add_argument("--method", choices=[m.value for m in Method], help="Combination method")
    parser.add_argument("--k", type=int, default=None, help="Truncation point (largest candidate for artp/arta)")
    parser.add_argument("--L", type=int, default=None, help="Total number of tests; mandatory for truncated input")
    parser.add_argument("--candidates", default=None, help="Comma-separated candidate truncation points for artp/arta")
    parser.add_argument("--weights", choices=("equal", "sparse"), default="equal", help="ART-A partial-sum weights")
    parser.add_argument("--corr", default=None, help="Correlation matrix CSV (LD matrix) of the statistics")
    parser.add_argument("--signs", default=None, help="File of +1/-1 statistic directions")
    parser.add_argument("--decorrelate", action="store_true", help="Decorrelate before combining")
    parser.add_argument("--sided", choices=decorrelate.SIDES, default="one", help="Sidedness of the input p-values")
    parser.add_argument("--ridge", type=float, default=None, help="Add eps*I to the correlation matrix and renormalize")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--B", type=int, default=None, help="Resamples for artp (default: ARTCOMBINE_DEFAULT_B)")
    parser.add_argument("--all-k", action="store_true", help="Sweep k = 2..K for rtp, art, artp and arta")
    add_output_arguments(parser)
    parser.set_defaults(handler=run)


def _check_flags(args: argparse.Namespace) -> None:
    if not args.all_k and args.method is None:
        raise UsageError("--method is required unless --all-k is given")
    if args.decorrelate and args.corr is None:
        raise UsageError("--decorrelate requires --corr")
    if args.signs is not None and args.zscores is not None:
        raise UsageError("--signs cannot be combined with --zscores; z-scores carry their own signs")
    if args.k is not None and args.k < 1:
        raise UsageError(f"--k must be at least 1, got {args.k}")
    if args.L is not None and args.L < 1:
        raise UsageError(f"--L must be at least 1, got {args.L}")
    if args.B is not None and args.B < 1:
        raise UsageError(f"--B must be at least 1, got {args.B}")
    if args.ridge is not None and args.ridge < 0:
        raise UsageError(f"--ridge must be non-negative, got {args.ridge}")
    if args.method in TRUNCATED_METHODS and args.k is None and args.candidates is None and not args.all_k:
        raise UsageError(f"--method {args.method} needs --k")
    if args.method in (Method.SIDAK.value, Method.BONFERRONI.value) and args.k not in (None, 1):
        raise UsageError(f"--method {args.method} uses the smallest p-value only (k = 1)")
    if args.candidates is not None:
        _parse_candidates(args.candidates)


def _parse_candidates(text: str) -> List[int]:
    try:
        ks = sorted({int(tok) for tok in text.split(",") if tok.strip()})
    except ValueError:
        raise UsageError(f"--candidates must be comma-separated integers, got '{text}'")
    if not ks:
        raise UsageError("--candidates is empty")
    return ks


def _load(args: argparse.Namespace) -> Tuple[PValueVector, Optional[List[float]], Optional[List[float]]]:
    """p-values, the statistics they came from (z-score input) and signs"""
    if args.zscores is not None:
        loaded = input_validator.load_numbers(args.zscores)
        statistics = loaded.values
        values = decorrelate.pvalues_from_statistics(statistics, args.sided).tolist()
        path, signs = args.zscores, None
    else:
        loaded = input_validator.load_pvalues(args.input)
        statistics, values, path = None, loaded.values, args.input
        signs = input_validator.load_signs(args.signs) if args.signs else loaded.signs

    count = len(values)
    if args.L is not None and args.L < count:
        raise UsageError(f"--L = {args.L} is smaller than the {count} values in {path}")
    L = args.L if args.L is not None else count
    if count < L:
        logger.info(f"Treating the {count} values of {path} as the smallest of L = {L}")
        values = sorted(values)
    return input_validator.pvalue_vector(values, L, path), statistics, signs


def _correlation(args: argparse.Namespace) -> Optional[CorrelationMatrix]:
    if args.corr is None:
        return None
    sigma = input_validator.load_correlation(args.corr)
    if args.ridge:
        sigma = sigma.with_ridge(args.ridge)
    return sigma


def _decorrelated(args, p: PValueVector, statistics, signs, sigma: CorrelationMatrix) -> PValueVector:
    if p.is_head:
        raise UsageError(f"Decorrelation needs all {p.L} values, got {p.count}")
    if statistics is not None:
        values = decorrelate.decorrelate_statistics(statistics, sigma, args.sided)
        return input_validator.pvalue_vector(values.tolist(), p.L, args.zscores)
    return decorrelate.decorrelate_pvalues(p, sigma, signs, args.sided)


def _adaptive_spec(args: argparse.Namespace, k: Optional[int], L: int) -> AdaptiveSpec:
    try:
        if args.candidates is None:
            return AdaptiveSpec.default(k, L, args.weights)
        ks = _parse_candidates(args.candidates)
        if k is not None and k != ks[-1]:
            raise UsageError(f"--k = {k} differs from the largest candidate {ks[-1]}")
        top = ks[-1]
        weights = [1.0] * top if args.weights == "equal" else [math.sqrt(top / j) for j in range(1, top + 1)]
        return AdaptiveSpec(candidate_ks=ks, weights=weights, L=L)
    except ValidationError as e:
        raise UsageError(f"invalid candidates: {e.errors()[0]['msg'].replace('Value error, ', '')}")


def _truncation(k: int, L: int) -> TruncationSpec:
    try:
        return TruncationSpec(k=k, L=L)
    except ValidationError:
        raise UsageError(f"k = {k} exceeds L = {L}")


def combine_one(method: str, p: PValueVector, args: argparse.Namespace, k: Optional[int]) -> CombinedResult:
    """Dispatch one method on one p-value vector"""
    logger.info(f"Combining {p.count} of L = {p.L} p-values with {method}" + (f", k = {k}" if k else ""))
    if method == Method.FISHER.value:
        return combine_fixed.fisher(p)
    if method == Method.SIMES.value:
        return combine_fixed.simes(p)
    if method in (Method.SIDAK.value, Method.BONFERRONI.value):
        p1 = p.sorted_values()[0]
        combined = combine_fixed.sidak_min(p1, p.L) if method == Method.SIDAK.value else combine_fixed.bonferroni_min(p1, p.L)
        return CombinedResult(method=method, statistic=p1, p_combined=combined)
    if method == Method.RTP.value:
        return combine_fixed.rtp_exact(p, _truncation(k, p.L))
    if method == Method.ART.value:
        return combine_fixed.art(p, _truncation(k, p.L))

    spec = _adaptive_spec(args, k, p.L)
    if spec.max_k > p.count:
        raise UsageError(f"Largest candidate k = {spec.max_k} exceeds the {p.count} supplied p-values")
    if method == Method.ARTA.value:
        return combine_adaptive.arta_pvalue(p, spec, seed=args.seed)
    return combine_adaptive.artp_empirical(p, spec, args.B or settings.default_B, seed=args.seed)


def _result_record(result: CombinedResult, variant: str, k: Optional[int], L: int) -> Dict[str, Any]:
    return {
        "method": result.method.value,
        "variant": variant,
        "k": k,
        "L": L,
        "statistic": result.statistic,
        "p_combined": result.p_combined,
        "diagnostics": result.diagnostics,
    }


def sweep_all_k(args: argparse.Namespace, p: PValueVector, p_decorr: Optional[PValueVector]) -> List[Dict[str, Any]]:
    """One row per k = 2..K with plain and (when available) decorrelated columns"""
    top = args.k if args.k is not None else p.count
    if top < 2:
        raise UsageError("--all-k needs K >= 2")
    if top > p.count:
        raise UsageError(f"--k = {top} exceeds the {p.count} supplied p-values")

    variants = [("", p)] + ([("_decorr", p_decorr)] if p_decorr is not None else [])
    rows = []
    for k in range(2, top + 1):
        row: Dict[str, Any] = {"k": k, "L": p.L}
        for method in SWEEP_COLUMNS:
            for suffix, vector in variants:
                sweep_args = argparse.Namespace(**{**vars(args), "candidates": None})
                row[f"{method}{suffix}"] = combine_one(method, vector, sweep_args, k).p_combined
        rows.append(row)
    return rows


def run(args: argparse.Namespace) -> int:
    """Execute the combine sub-command"""
    _check_flags(args)
    manifest = echo_manifest(
        RunManifest(
            subcommand="combine",
            input_paths={"input": args.input, "zscores": args.zscores, "corr": args.corr, "signs": args.signs},
            method=args.method,
            k=args.k,
            L=args.L,
            seed=args.seed,
            B=args.B or settings.default_B,
            output=args.out,
            options={
                "decorrelate": args.decorrelate,
                "sided": args.sided,
                "ridge": args.ridge,
                "candidates": args.candidates,
                "weights": args.weights,
                "all_k": args.all_k,
                "format": args.fmt,
            },
        )
    )

    p, statistics, signs = _load(args)
    sigma = _correlation(args)
    if sigma is not None and sigma.order != p.L:
        raise UsageError(f"--corr has order {sigma.order} but L = {p.L}")
    if sigma is not None and not args.decorrelate and not args.all_k:
        logger.warning("--corr given without --decorrelate; the matrix is not used")

    p_decorr = None
    if sigma is not None and (args.decorrelate or args.all_k):
        p_decorr = _decorrelated(args, p, statistics, signs, sigma)

    if args.all_k:
        records = sweep_all_k(args, p, p_decorr)
    else:
        vector, variant = (p_decorr, "decorr") if args.decorrelate else (p, "plain")
        result = combine_one(args.method, vector, args, args.k)
        records = [_result_record(result, variant, args.k, p.L)]

    write_report(records, args, manifest)
    return 0

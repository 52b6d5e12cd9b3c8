import argparse
import logging

from artcombine.commands import echo_manifest
from artcombine.decorrelate import ld_matrix_from_haplotypes
from artcombine.exceptions import DataError
from artcombine.schemas import RunManifest
from artcombine.utils.exporters import ReportExporter
from artcombine.utils.input_validator import input_validator

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "ld-matrix",
        help="LD correlation matrix from haplotype frequencies",
        description="Pairwise allelic correlation between SNPs from a haplotype frequency table",
    )
    parser.add_argument("--haplotypes", required=True, help="CSV with columns pattern,freq (pattern is a 0/1 string)")
    parser.add_argument("--out", default=None, help="Output CSV (stdout when omitted)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    echo_manifest(RunManifest(subcommand="ld-matrix", input_paths={"haplotypes": args.haplotypes}, output=args.out))

    table = input_validator.load_haplotypes(args.haplotypes)
    sigma = ld_matrix_from_haplotypes(table)
    try:
        ReportExporter.export_matrix(sigma.entries, args.out)
    except OSError as e:
        raise DataError(f"Cannot write matrix to {args.out}: {e}")
    if args.out:
        logger.info(f"Wrote {sigma.order}x{sigma.order} LD matrix to {args.out}")
    return 0

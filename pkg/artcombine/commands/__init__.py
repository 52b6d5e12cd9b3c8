# CLI sub-commands
import argparse
import json
import sys
from typing import Any, Dict, List, Optional

from artcombine.config import settings
from artcombine.schemas import RunManifest
from artcombine.utils.exporters import export_report, get_export_format_info


def add_output_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="Report file (stdout when omitted)")
    parser.add_argument(
        "--format",
        dest="fmt",
        default="csv",
        choices=sorted(get_export_format_info()),
        help="Report format (default: csv)",
    )


def echo_manifest(manifest: RunManifest) -> Dict[str, Any]:
    """Print the resolved invocation to stderr as one ``manifest:`` JSON line"""
    manifest.settings = settings.describe()
    payload = manifest.model_dump()
    print(f"manifest: {json.dumps(payload, sort_keys=True, default=str)}", file=sys.stderr)
    return payload


def write_report(records: List[Dict[str, Any]], args: argparse.Namespace, manifest: Optional[Dict[str, Any]] = None) -> None:
    export_report(records, fmt=args.fmt, path=args.out, metadata={"manifest": manifest} if manifest else None)
    sys.stdout.flush()

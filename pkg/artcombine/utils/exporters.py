import json
import sys
from typing import List, Dict, Any, Optional
import pandas as pd
import numpy as np
from datetime import datetime
import logging

from artcombine.exceptions import DataError, UsageError

logger = logging.getLogger(__name__)


def _frame(data: List[Dict[str, Any]]) -> pd.DataFrame:
    if not data:
        return pd.DataFrame({"Message": ["No data available"]})
    df = pd.DataFrame(data)
    for col in df.columns:
        df[col] = df[col].apply(lambda x: json.dumps(x, default=str) if isinstance(x, (dict, list)) else x)
    return df


class ReportExporter:
    """Writes study tables and combine sweeps to files or stdout"""

    @staticmethod
    def export_to_csv(data: List[Dict[str, Any]], path: Optional[str] = None) -> None:
        """CSV to ``path``, or to stdout when no path is given"""
        df = _frame(data)
        if path is None:
            df.to_csv(sys.stdout, index=False, float_format="%.6g")
        else:
            df.to_csv(path, index=False, float_format="%.10g")

    @staticmethod
    def export_to_excel(data: List[Dict[str, Any]], path: str, metadata: Optional[Dict[str, Any]] = None) -> None:
        """Excel workbook with a results sheet and a metadata sheet"""
        df = _frame(data)
        properties = {"Export Date": datetime.utcnow().isoformat(), "Total Rows": len(data), **(metadata or {})}
        metadata_df = pd.DataFrame({
            "Property": list(properties.keys()),
            "Value": [json.dumps(v, default=str) if isinstance(v, (dict, list)) else str(v) for v in properties.values()],
        })

        with pd.ExcelWriter(path, engine="openpyxl") as writer:
            df.to_excel(writer, sheet_name="Results", index=False)
            metadata_df.to_excel(writer, sheet_name="Metadata", index=False)

    @staticmethod
    def export_to_json(
        data: List[Dict[str, Any]], path: Optional[str] = None, metadata: Optional[Dict[str, Any]] = None, pretty: bool = True
    ) -> None:
        export_data = {
            "metadata": {
                "export_date": datetime.utcnow().isoformat(),
                "total_rows": len(data),
                "columns": list(data[0].keys()) if data else [],
                **(metadata or {}),
            },
            "data": data,
        }
        content = json.dumps(export_data, indent=2 if pretty else None, default=str)
        if path is None:
            sys.stdout.write(content + "\n")
        else:
            with open(path, "w") as f:
                f.write(content)

    @staticmethod
    def export_to_parquet(data: List[Dict[str, Any]], path: str) -> None:
        """Parquet file (snappy-compressed, pyarrow engine)"""
        _frame(data).to_parquet(path, engine="pyarrow", compression="snappy", index=False)

    @staticmethod
    def export_matrix(matrix: np.ndarray, path: Optional[str] = None) -> None:
        """Square numeric matrix as headerless CSV"""
        df = pd.DataFrame(np.asarray(matrix, dtype=float))
        target = sys.stdout if path is None else path
        df.to_csv(target, header=False, index=False, float_format="%.10g")


def export_report(
    data: List[Dict[str, Any]], fmt: str = "csv", path: Optional[str] = None, metadata: Optional[Dict[str, Any]] = None
) -> None:
    """Dispatch to the exporter for ``fmt``"""
    formats = get_export_format_info()
    if fmt not in formats:
        raise UsageError(f"Unknown export format '{fmt}'; choose from {sorted(formats)}")
    if formats[fmt]["binary"] and path is None:
        raise UsageError(f"Format '{fmt}' needs an output file (--out)")

    try:
        if fmt == "csv":
            ReportExporter.export_to_csv(data, path)
        elif fmt == "json":
            ReportExporter.export_to_json(data, path, metadata)
        elif fmt == "xlsx":
            ReportExporter.export_to_excel(data, path, metadata)
        else:
            ReportExporter.export_to_parquet(data, path)
    except OSError as e:
        raise DataError(f"Cannot write report to {path}: {e}")

    if path is not None:
        logger.info(f"Wrote {len(data)} rows to {path} ({fmt})")


def get_export_format_info() -> Dict[str, Dict[str, Any]]:
    """Available report formats"""
    return {
        "csv": {
            "name": "Comma Separated Values",
            "extension": ".csv",
            "binary": False,
            "best_for": "Default report format, spreadsheet import",
        },
        "json": {
            "name": "JavaScript Object Notation",
            "extension": ".json",
            "binary": False,
            "best_for": "Reports with the run manifest attached",
        },
        "xlsx": {
            "name": "Microsoft Excel",
            "extension": ".xlsx",
            "binary": True,
            "best_for": "Tables with a metadata sheet",
        },
        "parquet": {
            "name": "Apache Parquet",
            "extension": ".parquet",
            "binary": True,
            "best_for": "Large sweeps, downstream analysis",
        },
    }

import math
import os
from typing import List, Optional, Tuple
import logging

import pandas as pd
from pydantic import BaseModel, ValidationError

from artcombine.correlation import CorrelationMatrix
from artcombine.exceptions import ArtCombineError, DataError
from artcombine.schemas import HaplotypeTable, PValueVector

logger = logging.getLogger(__name__)

SIGN_TOKENS = {"+": 1.0, "+1": 1.0, "1": 1.0, "-": -1.0, "-1": -1.0}


class NumberFile(BaseModel):
    """Values read from a p-value or z-score file, with optional names and signs"""

    path: str
    names: List[str]
    values: List[float]
    signs: Optional[List[float]] = None


def _first_error(e: ValidationError) -> str:
    error = e.errors()[0]
    return str(error.get("msg", e)).replace("Value error, ", "")


class InputValidator:
    """Reads and validates every file the CLI accepts; failures raise DataError naming file and line"""

    def _lines(self, path: str) -> List[Tuple[int, str]]:
        if not os.path.isfile(path):
            raise DataError(f"Cannot read {path}: no such file")
        try:
            with open(path) as f:
                raw = f.readlines()
        except (OSError, UnicodeDecodeError) as e:
            raise DataError(f"Cannot read {path}: {e}")

        lines = []
        for number, line in enumerate(raw, start=1):
            content = line.split("#", 1)[0].strip()
            if content:
                lines.append((number, content))
        if not lines:
            raise DataError(f"{path} contains no values")
        return lines

    def _number(self, token: str, path: str, line: int) -> float:
        try:
            value = float(token)
        except ValueError:
            raise DataError(f"{path}, line {line}: '{token}' is not a number")
        if not math.isfinite(value):
            raise DataError(f"{path}, line {line}: value '{token}' is not finite")
        return value

    def _sign(self, token: str, path: str, line: int) -> float:
        sign = SIGN_TOKENS.get(token.strip())
        if sign is None:
            raise DataError(f"{path}, line {line}: sign '{token}' must be +1 or -1")
        return sign

    def load_numbers(self, path: str) -> NumberFile:
        """Whitespace-separated values, or ``name,value[,sign]`` CSV rows with an optional header"""
        lines = self._lines(path)
        if not any("," in content for _, content in lines):
            values = [self._number(tok, path, n) for n, content in lines for tok in content.split()]
            return NumberFile(path=path, names=[f"test{i + 1}" for i in range(len(values))], values=values)

        rows = [(n, [field.strip() for field in content.split(",")]) for n, content in lines]
        first_line, first = rows[0]
        if len(first) >= 2:
            try:
                float(first[1])
            except ValueError:
                logger.debug(f"Treating line {first_line} of {path} as a header")
                rows = rows[1:]
        if not rows:
            raise DataError(f"{path} contains a header but no values")

        names, values, signs = [], [], []
        for n, fields in rows:
            if len(fields) not in (2, 3):
                raise DataError(f"{path}, line {n}: expected name,value[,sign], got {len(fields)} fields")
            names.append(fields[0])
            values.append(self._number(fields[1], path, n))
            if len(fields) == 3:
                signs.append(self._sign(fields[2], path, n))
        if signs and len(signs) != len(values):
            raise DataError(f"{path}: sign column is present on some rows only")
        return NumberFile(path=path, names=names, values=values, signs=signs or None)

    def load_pvalues(self, path: str) -> NumberFile:
        loaded = self.load_numbers(path)
        for i, value in enumerate(loaded.values):
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{path}: p-value {value} for {loaded.names[i]} is outside [0, 1]")
        logger.info(f"Read {len(loaded.values)} p-values from {path}")
        return loaded

    def load_signs(self, path: str) -> List[float]:
        return [self._sign(tok, path, n) for n, content in self._lines(path) for tok in content.replace(",", " ").split()]

    def pvalue_vector(self, values: List[float], L: Optional[int] = None, path: str = "input") -> PValueVector:
        """PValueVector with validation failures reported as DataError"""
        try:
            return PValueVector(values=values, L=L if L is not None else len(values))
        except ValidationError as e:
            raise DataError(f"{path}: {_first_error(e)}")

    def load_correlation(self, path: str) -> CorrelationMatrix:
        """Square numeric CSV without header"""
        if not os.path.isfile(path):
            raise DataError(f"Cannot read {path}: no such file")
        try:
            df = pd.read_csv(path, header=None, comment="#", skipinitialspace=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise DataError(f"Cannot parse correlation file {path}: {e}")

        numeric = df.apply(pd.to_numeric, errors="coerce")
        if numeric.isna().to_numpy().any():
            row, col = [int(i[0]) for i in numeric.isna().to_numpy().nonzero()]
            raise DataError(f"{path}: entry at row {row + 1}, column {col + 1} is not a number")
        try:
            sigma = CorrelationMatrix(numeric.to_numpy(dtype=float))
        except ArtCombineError as e:
            raise type(e)(f"{path}: {e.detail}")
        logger.info(f"Read {sigma.order}x{sigma.order} correlation matrix from {path}")
        return sigma

    def load_haplotypes(self, path: str) -> HaplotypeTable:
        """CSV with header columns ``pattern`` and ``freq``"""
        if not os.path.isfile(path):
            raise DataError(f"Cannot read {path}: no such file")
        try:
            df = pd.read_csv(path, dtype={"pattern": str}, comment="#", skipinitialspace=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise DataError(f"Cannot parse haplotype file {path}: {e}")

        missing = {"pattern", "freq"} - set(df.columns)
        if missing:
            raise DataError(f"{path}: missing column(s) {sorted(missing)}")
        freq = pd.to_numeric(df["freq"], errors="coerce")
        if freq.isna().any():
            raise DataError(f"{path}: frequency on data row {int(freq.isna().to_numpy().argmax()) + 1} is not a number")

        patterns = df["pattern"].astype(str).str.strip()
        try:
            table = HaplotypeTable(
                n_snps=len(patterns.iloc[0]),
                rows=[{"pattern": p, "frequency": f} for p, f in zip(patterns, freq)],
            )
        except (ValidationError, IndexError) as e:
            detail = _first_error(e) if isinstance(e, ValidationError) else "no haplotype rows"
            raise DataError(f"{path}: invalid haplotype table: {detail}")
        logger.info(f"Read {len(table.rows)} haplotypes over {table.n_snps} SNPs from {path}")
        return table


# Global validator instance
input_validator = InputValidator()

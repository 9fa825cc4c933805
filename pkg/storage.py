# storage.py
"""
Persistence for quadlab.
Family lists, resumable sweep caches, sample batches and report artifacts.
All writers format floats with repr so identical runs give identical bytes.
"""

import csv
import json
import logging
import math
import struct
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from errors import StorageError
from models import (
    CharFnCurve,
    DensityCurve,
    FamilySlice,
    LogDerivValue,
    ModelConfig,
    ModelSampleBatch,
    TruncationParams,
)

logger = logging.getLogger(__name__)

SWEEP_VERSION = 1
# epsilon, prime cutoff, seed, count
_BATCH_HEADER = struct.Struct("<dQQQ")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_family(family: FamilySlice, path: Path) -> Path:
    """
    Write a family as `N=<N> count=<count>` followed by one discriminant per line.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="ascii", newline="\n") as fh:
            fh.write(f"N={family.bound} count={family.count}\n")
            for d in family.members.tolist():
                fh.write(f"{d}\n")
    except OSError as e:
        raise StorageError(f"cannot write family file {path}: {e}") from e
    logger.info(f"Family F({family.bound}) written to {path}")
    return path


def read_family(path: Path, include_d1: bool = True) -> FamilySlice:
    """Read a family file written by write_family."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="ascii").splitlines()
    except OSError as e:
        raise StorageError(f"cannot read family file {path}: {e}") from e
    try:
        fields = dict(item.split("=") for item in lines[0].split())
        bound, count = int(fields["N"]), int(fields["count"])
        members = np.array([int(x) for x in lines[1:] if x.strip()], dtype=np.int64)
    except (IndexError, KeyError, ValueError) as e:
        raise StorageError(f"malformed family file {path}: {e}") from e
    if members.shape[0] != count:
        raise StorageError(f"family file {path} declares {count} members, holds {members.shape[0]}")
    return FamilySlice(bound=bound, members=members, include_d1=include_d1)


class SweepStorage(ABC):
    """Abstract base class for sweep cache backends."""

    @abstractmethod
    def load(self, bound: int, params: TruncationParams) -> Dict[int, LogDerivValue]:
        """Return the cached values of a sweep, keyed by discriminant."""
        pass

    @abstractmethod
    def append(self, bound: int, params: TruncationParams, values: Sequence[LogDerivValue]) -> None:
        """Add freshly computed values to the cache."""
        pass

    @abstractmethod
    def save(self, bound: int, params: TruncationParams, values: Sequence[LogDerivValue]) -> None:
        """Replace the cache with a complete sweep in family order."""
        pass


class TextSweepStorage(SweepStorage):
    """
    Plain-text sweep cache.

    Header `N=<N> eps=<eps> lambda=<lambda> version=1` followed by the flag
    settings `tol=<tol|auto> audit=<fraction> factor=<factor>`, then one line
    `D value consistencyGap flagged` per discriminant.
    """

    def __init__(self, path: Path):
        """
        Args:
            path: Cache file location
        """
        self.path = Path(path)

    @staticmethod
    def header(bound: int, params: TruncationParams) -> str:
        """Cache header naming every setting that changes values or flags."""
        tol = "auto" if params.consistency_tol is None else _fmt(params.consistency_tol)
        return (
            f"N={bound} eps={_fmt(params.epsilon)} lambda={_fmt(params.lambda_value)} version={SWEEP_VERSION}"
            f" tol={tol} audit={_fmt(params.audit_fraction)} factor={_fmt(params.large_value_factor)}"
        )

    @staticmethod
    def format_line(v: LogDerivValue) -> str:
        gap = "nan" if v.consistency_gap is None else _fmt(v.consistency_gap)
        return f"{v.discriminant} {_fmt(v.value)} {gap} {int(v.flagged)}"

    @staticmethod
    def parse_line(line: str, lambda_value: float) -> LogDerivValue:
        d, value, gap, flagged = line.split()
        gap_value = float(gap)
        return LogDerivValue(
            discriminant=int(d),
            value=float(value),
            lambda_used=lambda_value,
            consistency_gap=None if math.isnan(gap_value) else gap_value,
            flagged=flagged == "1",
        )

    def _write(self, lines: Iterable[str], mode: str) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open(mode, encoding="ascii", newline="\n") as fh:
                for line in lines:
                    fh.write(line + "\n")
                fh.flush()
        except OSError as e:
            raise StorageError(f"cannot write sweep cache {self.path}: {e}") from e

    def load(self, bound: int, params: TruncationParams) -> Dict[int, LogDerivValue]:
        """
        Read the cache, dropping it if the header does not match.

        Malformed trailing lines (an interrupted write) are discarded and the
        file is rewritten cleanly so later appends start on a fresh line.
        """
        if not self.path.exists():
            return {}
        try:
            lines = self.path.read_text(encoding="ascii").splitlines()
        except OSError as e:
            raise StorageError(f"cannot read sweep cache {self.path}: {e}") from e

        expected = self.header(bound, params)
        if not lines or lines[0] != expected:
            logger.warning(f"Sweep cache {self.path} belongs to another run, starting over")
            self._write([expected], "w")
            return {}

        cached: Dict[int, LogDerivValue] = {}
        clean = [expected]
        for line in lines[1:]:
            try:
                value = self.parse_line(line, params.lambda_value)
            except ValueError:
                logger.warning(f"Discarding malformed cache line: {line[:40]!r}")
                continue
            cached[value.discriminant] = value
            clean.append(line)
        if len(clean) != len(lines):
            self._write(clean, "w")
        return cached

    def append(self, bound: int, params: TruncationParams, values: Sequence[LogDerivValue]) -> None:
        if not self.path.exists():
            self._write([self.header(bound, params)], "w")
        self._write((self.format_line(v) for v in values), "a")
        logger.debug(f"{len(values)} values appended to {self.path}")

    def save(self, bound: int, params: TruncationParams, values: Sequence[LogDerivValue]) -> None:
        lines = [self.header(bound, params)]
        lines.extend(self.format_line(v) for v in values)
        self._write(lines, "w")
        logger.info(f"Sweep cache saved to {self.path}")


class MemorySweepStorage(SweepStorage):
    """In-memory cache for tests and one-off runs."""

    def __init__(self):
        self._key: Optional[tuple] = None
        self._values: Dict[int, LogDerivValue] = {}
        self.appended = 0

    def load(self, bound: int, params: TruncationParams) -> Dict[int, LogDerivValue]:
        if self._key != (bound, params):
            return {}
        return dict(self._values)

    def append(self, bound: int, params: TruncationParams, values: Sequence[LogDerivValue]) -> None:
        if self._key != (bound, params):
            self._key = (bound, params)
            self._values = {}
        for v in values:
            self._values[v.discriminant] = v
        self.appended += len(values)

    def save(self, bound: int, params: TruncationParams, values: Sequence[LogDerivValue]) -> None:
        self._key = (bound, params)
        self._values = {v.discriminant: v for v in values}


def write_batch(batch: ModelSampleBatch, path: Path) -> Path:
    """Binary sample batch: fixed-width header, then little-endian float64 samples."""
    path = Path(path)
    cfg = batch.config
    header = _BATCH_HEADER.pack(cfg.epsilon, cfg.prime_cutoff, cfg.seed, batch.count)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            fh.write(header)
            fh.write(np.asarray(batch.samples, dtype="<f8").tobytes())
    except OSError as e:
        raise StorageError(f"cannot write sample batch {path}: {e}") from e
    return path


def read_batch(path: Path) -> ModelSampleBatch:
    """Read a sample batch written by write_batch; the tail estimate is recomputed."""
    from random_model import tail_second_moment

    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read sample batch {path}: {e}") from e
    if len(raw) < _BATCH_HEADER.size:
        raise StorageError(f"sample batch {path} is truncated")
    epsilon, prime_cutoff, seed, count = _BATCH_HEADER.unpack_from(raw)
    payload = len(raw) - _BATCH_HEADER.size
    if payload != 8 * count:
        raise StorageError(f"sample batch {path} declares {count} samples, holds {payload} bytes")
    samples = np.frombuffer(raw, dtype="<f8", offset=_BATCH_HEADER.size)
    config = ModelConfig(epsilon=epsilon, prime_cutoff=prime_cutoff, seed=seed)
    return ModelSampleBatch(config, samples.astype(np.float64), tail_second_moment(epsilon, prime_cutoff))


class ArtifactWriter:
    """
    Writes CSV and JSON artifacts under one output directory.
    """

    def __init__(self, out_dir: Path):
        """
        Args:
            out_dir: Directory receiving every artifact
        """
        self.out_dir = Path(out_dir)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """Write rows with repr-formatted floats."""
        path = self.path(name)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            with path.open("w", encoding="ascii", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow(_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row)
        except OSError as e:
            raise StorageError(f"cannot write {path}: {e}") from e
        logger.info(f"Artifact written: {path}")
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.path(name)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="ascii")
        except OSError as e:
            raise StorageError(f"cannot write {path}: {e}") from e
        logger.info(f"Artifact written: {path}")
        return path

    def write_sweep_csv(self, name: str, values: Sequence[LogDerivValue]) -> Path:
        rows = (
            (v.discriminant, v.value, "nan" if v.consistency_gap is None else v.consistency_gap, int(v.flagged))
            for v in values
        )
        return self.write_csv(name, ["D", "value", "consistencyGap", "flagged"], rows)

    def write_batch_csv(self, name: str, batch: ModelSampleBatch) -> Path:
        return self.write_csv(name, ["index", "value"], enumerate(batch.samples.tolist()))

    def write_charfn_csv(self, name: str, curve: CharFnCurve) -> Path:
        rows = zip(
            curve.taus.tolist(),
            curve.values.real.tolist(),
            curve.values.imag.tolist(),
            curve.tail_estimates.tolist(),
        )
        return self.write_csv(name, ["tau", "re", "im", "tailEstimate"], rows)

    def write_density_csv(self, name: str, curve: DensityCurve) -> Path:
        return self.write_csv(name, ["x", "density"], zip(curve.grid.tolist(), curve.values.tolist()))

    def write_rows(self, name: str, rows: List) -> Path:
        """Write report dataclass rows, one column per field."""
        if not rows:
            return self.write_csv(name, [], [])
        dicts = [row.to_dict() for row in rows]
        header = list(dicts[0].keys())
        return self.write_csv(name, header, ([d[h] for h in header] for d in dicts))

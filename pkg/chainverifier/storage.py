"""Report sinks: a local output directory or stdout."""

import csv
import io
import json
import logging
import os
import sys
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO

from pydantic import BaseModel

logger = logging.getLogger(__name__)


class StorageError(Exception):
    """Exception raised for report I/O errors."""
    pass


class ReportStorage(ABC):
    """Abstract base class for report sinks."""

    @abstractmethod
    def write_report(self, name: str, report: BaseModel) -> Optional[Path]:
        """Write a JSON report.

        Args:
            name: File name, e.g. 'analyze_report.json'
            report: Pydantic model to serialize

        Raises:
            StorageError: If writing fails
        """
        pass

    @abstractmethod
    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Optional[Path]:
        """Write a plot-ready CSV table.

        Raises:
            StorageError: If writing fails
        """
        pass

    @abstractmethod
    def health_check(self) -> bool:
        """Check if the sink is writable."""
        pass


class LocalReportStorage(ReportStorage):
    """Reports as files in an output directory."""

    def __init__(self, out_dir: str = "reports"):
        """Initialize the output directory.

        Args:
            out_dir: Directory receiving the report files
        """
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageError(f"Cannot create output directory {self.out_dir}: {e}")
        logger.info(f"Initialized LocalReportStorage: {self.out_dir}")

    def _write_atomic(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        try:
            # Atomic write: write to temp file, then rename
            temp_path = path.with_suffix(path.suffix + ".tmp")
            with open(temp_path, "w", newline="") as f:
                f.write(text)
            temp_path.replace(path)
            logger.info(f"Wrote {path}")
            return path
        except OSError as e:
            logger.error(f"Failed to write {path}: {e}")
            raise StorageError(f"Failed to write {path}: {e}")

    def write_report(self, name: str, report: BaseModel) -> Path:
        return self._write_atomic(name, report.model_dump_json(indent=2) + "\n")

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        return self._write_atomic(name, _csv_text(header, rows))

    def load_json(self, name: str) -> Dict[str, Any]:
        """Load a previously written JSON report."""
        path = self.out_dir / name
        try:
            with open(path, "r") as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in {path}: {e}")
            raise StorageError(f"Corrupted report file: {e}")
        except OSError as e:
            logger.error(f"Failed to load {path}: {e}")
            raise StorageError(f"Failed to load report: {e}")

    def load_csv(self, name: str) -> List[List[str]]:
        path = self.out_dir / name
        try:
            with open(path, "r", newline="") as f:
                return list(csv.reader(f))
        except OSError as e:
            raise StorageError(f"Failed to load {path}: {e}")

    def health_check(self) -> bool:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            return os.access(self.out_dir, os.W_OK)
        except Exception as e:
            logger.error(f"Health check failed: {e}")
            return False


class StreamReportStorage(ReportStorage):
    """JSON reports to a text stream (stdout by default); CSV tables are skipped."""

    def __init__(self, stream: Optional[TextIO] = None):
        self.stream = stream

    def write_report(self, name: str, report: BaseModel) -> None:
        stream = self.stream or sys.stdout
        stream.write(report.model_dump_json(indent=2) + "\n")
        stream.flush()

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        logger.info(f"Skipping {name}: CSV tables need an output directory")

    def health_check(self) -> bool:
        return True


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def create_report_storage(out_dir: Optional[str] = None, stream: Optional[TextIO] = None) -> ReportStorage:
    """Factory function returning a directory sink when out_dir is given, else a stream sink."""
    if out_dir:
        return LocalReportStorage(out_dir)
    return StreamReportStorage(stream)

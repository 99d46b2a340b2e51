"""Deterministic logging and seed derivation shared by both controller stages.

Run logs are JSON-lines files whose first line is a header record carrying
the normalized run configuration.  Serialization is canonical (sorted keys,
no whitespace) so that replaying a run reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

SCHEMA_VERSION = 1


def derive_seed(*parts: object) -> int:
    """Derive a stable 64-bit seed from an arbitrary sequence of labels.

    The same parts give the same seed on every platform and build: the parts
    are joined with ``:``, hashed with sha256, and the first eight bytes of
    the digest are read as a little-endian unsigned integer.

    Parameters
    ----------
    *parts : object
        Labels identifying the consumer (seeds, stage names, round indices).
        Each is converted with ``str``.

    Returns
    -------
    int
        Seed in ``[0, 2**64)`` suitable for ``numpy.random.default_rng``.
    """
    if not parts:
        raise ValueError("derive_seed requires at least one part")
    data = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


def jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars and arrays to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_dumps(record: dict) -> str:
    """Serialize ``record`` to the canonical JSON form used in run logs.

    Keys are sorted and separators carry no whitespace, so equal records
    always serialize to equal byte strings.
    """
    return json.dumps(jsonable(record), sort_keys=True, separators=(",", ":"))


class RunAborted(RuntimeError):
    """Raised when an environment fails mid-run.

    Carries whatever was logged up to the failure so callers can persist a
    partial log before propagating the error.  The pipeline additionally
    fills ``stage_logs`` with every per-stage log it holds at failure time.
    """

    def __init__(
        self,
        message: str,
        *,
        log: "RunLog",
        records: list | None = None,
        stage_logs: dict | None = None,
    ):
        super().__init__(message)
        self.log = log
        self.records = list(records) if records is not None else []
        self.stage_logs = dict(stage_logs) if stage_logs is not None else {}


@dataclass
class RunLog:
    """Ordered collection of per-round records for one controller stage."""

    records: list[dict] = field(default_factory=list)

    def append(self, **fields: Any) -> dict:
        record = jsonable(fields)
        self.records.append(record)
        return record

    def __len__(self) -> int:
        return len(self.records)

    def lines(self, header: dict | None = None) -> list[str]:
        """Canonical serialization, one JSON document per line.

        When ``header`` is given it becomes the first line; replay relies on
        the header to reconstruct the run configuration.
        """
        out = []
        if header is not None:
            out.append(canonical_dumps(header))
        out.extend(canonical_dumps(r) for r in self.records)
        return out

    def write_jsonl(self, path: str | Path, header: dict | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        text = "\n".join(self.lines(header))
        if text:
            text += "\n"
        path.write_text(text, encoding="utf-8")
        return path


def make_header(kind: str, config: dict, **extra: Any) -> dict:
    """Build the first-line header record for a run log."""
    header = {"schema_version": SCHEMA_VERSION, "kind": kind, "config": config}
    header.update(extra)
    return jsonable(header)


def read_jsonl(path: str | Path) -> tuple[dict, list[dict]]:
    """Read a run log, returning ``(header, records)``.

    Raises
    ------
    ValueError
        If the file is empty, a line is not valid JSON, or the first line is
        not a header record.
    """
    raw = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in raw.split("\n") if ln.strip()]
    if not lines:
        raise ValueError(f"empty run log: {path}")
    docs = []
    for i, ln in enumerate(lines):
        try:
            docs.append(json.loads(ln))
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed JSON on line {i + 1} of {path}: {exc}") from exc
    header = docs[0]
    if not isinstance(header, dict) or "schema_version" not in header or "kind" not in header:
        raise ValueError(f"missing log header on line 1 of {path}")
    return header, docs[1:]

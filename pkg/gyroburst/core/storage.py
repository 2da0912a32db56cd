"""SQLite registry of simulate/align/demo runs."""
from __future__ import annotations

import json
import sqlite3
import uuid
from contextlib import closing
from dataclasses import dataclass, field
from typing import List, Optional

from .data_formats import to_plain
from .errors import PreconditionError
from .settings import Settings

RUN_KINDS = ("simulate", "align", "demo")

DDL = """
CREATE TABLE IF NOT EXISTS runs (
    id TEXT PRIMARY KEY,
    kind TEXT NOT NULL,
    input TEXT,
    output TEXT,
    meta TEXT,
    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
)
"""

_COLUMNS = "id, kind, input, output, meta, created_at"


@dataclass
class RunRecord:
    id: str
    kind: str
    input: str
    output: str
    meta: dict = field(default_factory=dict)
    created_at: Optional[str] = None

    @classmethod
    def new(cls, kind: str, input: str, output: str, meta: Optional[dict] = None) -> "RunRecord":
        if kind not in RUN_KINDS:
            raise PreconditionError(f"unknown run kind {kind!r}; expected one of {', '.join(RUN_KINDS)}")
        return cls(id=str(uuid.uuid4()), kind=kind, input=input, output=output, meta=meta or {})

    @classmethod
    def from_row(cls, row: tuple) -> "RunRecord":
        return cls(id=row[0], kind=row[1], input=row[2], output=row[3], meta=json.loads(row[4] or "{}"),
                   created_at=row[5])


def db_path() -> str:
    return Settings.from_env().db_path


def _connect() -> sqlite3.Connection:
    conn = sqlite3.connect(db_path())
    conn.execute(DDL)
    return conn


def save_run(record: RunRecord) -> None:
    # meta may hold numpy scalars and inf steady errors
    meta = json.dumps(to_plain(record.meta), ensure_ascii=False)
    with closing(_connect()) as conn, conn:
        conn.execute(
            "INSERT OR REPLACE INTO runs (id, kind, input, output, meta) VALUES (?, ?, ?, ?, ?)",
            (record.id, record.kind, record.input, record.output, meta),
        )


def load_run(run_id: str) -> Optional[RunRecord]:
    with closing(_connect()) as conn:
        row = conn.execute(f"SELECT {_COLUMNS} FROM runs WHERE id = ?", (run_id,)).fetchone()
    return RunRecord.from_row(row) if row else None


def list_runs(kind: Optional[str] = None, limit: int = 10) -> List[RunRecord]:
    """Most recent first; ties within one second keep insertion order reversed."""
    where, params = ("WHERE kind = ?", (kind, limit)) if kind else ("", (limit,))
    query = f"SELECT {_COLUMNS} FROM runs {where} ORDER BY created_at DESC, rowid DESC LIMIT ?"
    with closing(_connect()) as conn:
        rows = conn.execute(query, params).fetchall()
    return [RunRecord.from_row(r) for r in rows]

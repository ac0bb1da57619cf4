"""Append-only JSONL run ledger.

Data rows hold only reproducible content (run id, config hash, payload,
gate verdicts, status); wall-clock stamps live in a sidecar meta file so
that identical config + seed produces bit-identical ledgers.  Run ids
are the config-hash prefix plus a per-run index, which is what makes
idempotent restarts possible: a completed (hash, index) pair is skipped
on the next invocation unless force is set.
"""

import json
import os
import threading
from datetime import datetime, timezone

from .errors import EmptyLedger, ValidationError


def run_id_for(config_hash: str, index: int) -> str:
    return f"{config_hash[:12]}-{index:04d}"


def _meta_path(path: str) -> str:
    return str(path) + ".meta.json"


class RunLedger:
    """One JSONL file of report rows with a serialized writer."""

    def __init__(self, path):
        self.path = str(path)
        self._lock = threading.Lock()

    def append(self, row: dict) -> None:
        for key in ("run_id", "config_hash", "kind", "status"):
            if key not in row:
                raise ValidationError(f"ledger row is missing {key!r}")
        line = json.dumps(row, sort_keys=True, allow_nan=False)
        with self._lock:
            new = not os.path.exists(self.path)
            os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
            with open(self.path, "a") as fh:
                fh.write(line + "\n")
            if new:
                with open(_meta_path(self.path), "w") as fh:
                    json.dump(
                        {"created_at": datetime.now(timezone.utc).isoformat()},
                        fh,
                    )

    def rows(self) -> list:
        if not os.path.exists(self.path):
            return []
        out = []
        with open(self.path) as fh:
            for k, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"ledger line {k + 1} is not valid JSON: {exc}")
                if not isinstance(row, dict):
                    raise ValidationError(f"ledger line {k + 1} is not a JSON object")
                out.append(row)
        return out

    def completed_ids(self, config_hash: str) -> set:
        return {
            row["run_id"]
            for row in self.rows()
            if row.get("config_hash") == config_hash and row.get("status") == "ok"
        }

    def require_rows(self) -> list:
        rows = self.rows()
        if not rows:
            raise EmptyLedger(f"ledger {self.path!r} has no rows")
        return rows

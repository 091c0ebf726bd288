"""
Run directory persistence.

Layout of one run directory (named by the first 16 hex chars of the
config digest):

    config.json            validated RunConfig
    manifest.json          config digest, code version, fixture digests, file sha256s
    outcomes/<id>.json     StrategyOutcome per example
    trees/<id>.json        reasoning tree (stoctot only)
    traces/<id>.json       baseline traces
    records.jsonl          EvalRecords, corpus order
    records.csv
    report.json
    report.txt
    fixtures.json          recorded replies (recording mode only)

Nothing here carries a timestamp, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from pydantic import BaseModel, Field

from packages import __version__
from packages.core.errors import PreconditionError, RunDigestMismatchError
from packages.core.models import EvalRecord, StrategyOutcome
from packages.core.run_config import RunConfig, build_config
from packages.core.storage.fixtures import write_text_atomic

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
MANIFEST_FILE = "manifest.json"
OUTCOMES_DIR = "outcomes"
TREES_DIR = "trees"
TRACES_DIR = "traces"
RECORDS_JSONL = "records.jsonl"
RECORDS_CSV = "records.csv"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"
FIXTURES_FILE = "fixtures.json"


class RunManifest(BaseModel):
    config_digest: str
    code_version: str = __version__
    fixture_digests: dict[str, str] = Field(default_factory=dict)
    files: dict[str, str] = Field(default_factory=dict)


def _safe_name(example_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in example_id)


class RunStore:
    """Reads and writes one run directory."""

    def __init__(self, run_dir: Union[str, Path]) -> None:
        self.run_dir = Path(run_dir)

    # --- paths -----------------------------------------------------------------

    def path(self, relative: str) -> Path:
        return self.run_dir / relative

    def outcome_path(self, example_id: str) -> Path:
        return self.run_dir / OUTCOMES_DIR / f"{_safe_name(example_id)}.json"

    def tree_path(self, example_id: str) -> Path:
        return self.run_dir / TREES_DIR / f"{_safe_name(example_id)}.json"

    def trace_path(self, example_id: str) -> Path:
        return self.run_dir / TRACES_DIR / f"{_safe_name(example_id)}.json"

    # --- config & manifest -----------------------------------------------------

    def initialize(self, config: RunConfig) -> None:
        """Create the directory and write config + a first manifest."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        write_text_atomic(self.path(CONFIG_FILE), json.dumps(config.canonical(), indent=2, sort_keys=True) + "\n")
        if not self.path(MANIFEST_FILE).exists():
            self.write_manifest(RunManifest(config_digest=config.digest()))

    def load_config(self, output_dir: Optional[str] = None) -> RunConfig:
        path = self.path(CONFIG_FILE)
        if not path.exists():
            raise PreconditionError(f"no {CONFIG_FILE} in {self.run_dir}")
        values = json.loads(path.read_text(encoding="utf-8"))
        values["output_dir"] = output_dir or str(self.run_dir.parent)
        return build_config(values)

    def load_manifest(self) -> RunManifest:
        path = self.path(MANIFEST_FILE)
        if not path.exists():
            raise PreconditionError(f"no {MANIFEST_FILE} in {self.run_dir}")
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))

    def write_manifest(self, manifest: RunManifest) -> None:
        write_text_atomic(self.path(MANIFEST_FILE), manifest.model_dump_json(indent=2) + "\n")

    def verify(self, config: RunConfig) -> RunManifest:
        """Refuse to continue when the manifest digest does not match ``config``."""
        manifest = self.load_manifest()
        actual = config.digest()
        if manifest.config_digest != actual:
            raise RunDigestMismatchError(manifest.config_digest, actual)
        return manifest

    def finalize_manifest(self, config: RunConfig, fixture_digests: Optional[dict[str, str]] = None) -> RunManifest:
        manifest = RunManifest(
            config_digest=config.digest(),
            fixture_digests=dict(sorted((fixture_digests or {}).items())),
            files=self.file_digests(),
        )
        self.write_manifest(manifest)
        return manifest

    def list_files(self) -> list[str]:
        """Relative paths of every file in the run, manifest excluded."""
        if not self.run_dir.exists():
            return []
        return sorted(
            p.relative_to(self.run_dir).as_posix()
            for p in self.run_dir.rglob("*")
            if p.is_file() and p.name != MANIFEST_FILE and not p.name.startswith(".")
        )

    def file_digests(self) -> dict[str, str]:
        """sha256 of every listed file, keyed by relative path."""
        return {name: hashlib.sha256(self.path(name).read_bytes()).hexdigest() for name in self.list_files()}

    # --- per-example artifacts -------------------------------------------------

    def write_json(self, path: Path, payload: Any) -> None:
        if not path.resolve().is_relative_to(self.run_dir.resolve()):
            raise PreconditionError(f"refusing to write outside the run directory: {path}")
        text = payload if isinstance(payload, str) else json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True)
        write_text_atomic(path, text if text.endswith("\n") else text + "\n")

    def write_outcome(self, outcome: StrategyOutcome) -> None:
        self.write_json(self.outcome_path(outcome.example_id), outcome.model_dump(mode="json", exclude={"trace"}))

    def has_outcome(self, example_id: str) -> bool:
        return self.outcome_path(example_id).exists()

    def load_outcome(self, example_id: str) -> StrategyOutcome:
        return StrategyOutcome.model_validate_json(self.outcome_path(example_id).read_text(encoding="utf-8"))

    def completed_ids(self) -> set[str]:
        directory = self.run_dir / OUTCOMES_DIR
        if not directory.exists():
            return set()
        ids = set()
        for path in directory.glob("*.json"):
            ids.add(StrategyOutcome.model_validate_json(path.read_text(encoding="utf-8")).example_id)
        return ids

    def read_tree(self, example_id: str) -> str:
        path = self.tree_path(example_id)
        if not path.exists():
            raise PreconditionError(f"no stored tree for {example_id!r} in {self.run_dir}")
        return path.read_text(encoding="utf-8")

    # --- records ---------------------------------------------------------------

    def write_records(self, records: Iterable[EvalRecord]) -> None:
        lines = [r.model_dump_json() for r in records]
        write_text_atomic(self.path(RECORDS_JSONL), "\n".join(lines) + ("\n" if lines else ""))

    def load_records(self) -> list[EvalRecord]:
        path = self.path(RECORDS_JSONL)
        if not path.exists():
            raise PreconditionError(f"run {self.run_dir} has no {RECORDS_JSONL}; is it complete?")
        return [
            EvalRecord.model_validate_json(line)
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

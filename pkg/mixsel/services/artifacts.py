"""
mixsel.services.artifacts

Run-directory persistence: CSV tables, summary.csv, records.csv and manifest.json.

Everything that must be byte-identical across thread counts (summary.csv and the
study tables) is written with fixed float formatting and "\n" line endings.
records.csv carries wall times and is excluded from that contract.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

logger = logging.getLogger(__name__)

SUMMARY_HEADER = ("study", "n", "penalty_id", "frac_under", "frac_correct", "frac_over", "replicates")
METRIC_HEADER = ("study", "metric", "value")
RECORD_HEADER = ("replicate", "seed", "n", "penalty_id", "q_hat", "scores", "wall_time")


def fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.10g" % value
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(
    out_dir: Union[str, Path],
    spec_echo: Dict[str, Any],
    seeds: Dict[str, Any],
    files: Sequence[Path],
) -> Path:
    """manifest.json: the config echo, seeds and a sha256 for every output file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: List[Dict[str, str]] = []
    for path in sorted({Path(p) for p in files}, key=lambda p: p.name):
        entries.append({"file": path.name, "sha256": sha256_file(path)})
    manifest = {"spec": spec_echo, "seeds": seeds, "files": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("manifest written: %s (%d files)", path, len(entries))
    return path


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def verify_manifest(out_dir: Union[str, Path]) -> Dict[str, bool]:
    """File name -> whether its current hash matches the manifest."""
    out_dir = Path(out_dir)
    manifest = read_manifest(out_dir / "manifest.json")
    return {e["file"]: (out_dir / e["file"]).exists() and sha256_file(out_dir / e["file"]) == e["sha256"] for e in manifest["files"]}

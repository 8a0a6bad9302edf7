"""Run manifests: config snapshot plus content digests of inputs and outputs,
so any post-hoc file mutation is detectable."""
from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

MANIFEST_FILE = "manifest.json"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _digest_map(base: Path, paths: list[Path]) -> dict[str, str]:
    out = {}
    for p in paths:
        if p.is_file():
            try:
                key = str(p.relative_to(base))
            except ValueError:
                key = str(p)
            out[key] = sha256_file(p)
    return out


def write_manifest(
    out_dir: str | Path,
    command: str,
    config: dict,
    seed: int | None,
    inputs: list[Path],
    outputs: list[Path],
    started_at: str,
    token_usage: dict | None = None,
    version: str = "",
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": version,
        "seed": seed,
        "config": config,
        "inputs": _digest_map(out, inputs),
        "outputs": _digest_map(out, outputs),
        "started_at": started_at,
        "finished_at": now_iso(),
        "token_usage": token_usage or {},
    }
    path = out / MANIFEST_FILE
    path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return path


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def verify_manifest(out_dir: str | Path) -> list[str]:
    """Recompute output digests; returns a list of problems (empty = clean)."""
    out = Path(out_dir)
    path = out / MANIFEST_FILE
    if not path.exists():
        return [f"missing {MANIFEST_FILE} in {out}"]
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        return [f"unreadable manifest: {exc}"]
    problems = []
    for rel, digest in manifest.get("outputs", {}).items():
        p = out / rel
        if not p.exists():
            problems.append(f"missing output file: {rel}")
        elif sha256_file(p) != digest:
            problems.append(f"digest mismatch: {rel}")
    return problems

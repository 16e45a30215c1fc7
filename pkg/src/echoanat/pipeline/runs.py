"""Run-directory discipline: append-only artifacts unless forced."""
from __future__ import annotations

from pathlib import Path

from ..errors import ArtifactExistsError


def write_guarded(path, data: bytes | str, force: bool = False) -> bool:
    """Write an artifact unless an identical one already exists.

    Rewriting identical bytes is a no-op (idempotent reruns); differing
    content requires ``force``. Returns True when the file was written.
    """
    path = Path(path)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    if path.exists():
        if path.read_bytes() == payload:
            return False
        if not force:
            raise ArtifactExistsError(
                f"{path} already exists with different content; pass --force to overwrite"
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    return True


def guard_artifact(path, force: bool = False) -> None:
    """Fail when a completed artifact would be regenerated without force."""
    path = Path(path)
    if path.exists() and not force:
        raise ArtifactExistsError(
            f"{path} already exists; pass --force to overwrite"
        )

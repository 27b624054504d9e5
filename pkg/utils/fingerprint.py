"""
Content fingerprints

SHA-256 digests of artifact files and of split membership. Fitted artifacts
record the fingerprint of the split they were fitted on, which is how the
evaluation stage proves that nothing was fitted on test data.
"""
import hashlib
import json
from pathlib import Path
from typing import Iterable, Tuple


def fingerprint_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fingerprint_file(path) -> str:
    """Hash a file's contents in chunks."""
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def fingerprint_json(payload) -> str:
    """Hash a JSON-serializable value in canonical form."""
    text = json.dumps(payload, sort_keys=True, separators=(',', ':'), default=str)
    return fingerprint_bytes(text.encode('utf-8'))


def fingerprint_split(partition: str, rows: Iterable[Tuple[str, bool]]) -> str:
    """Fingerprint one partition's (nct_id, label) membership.

    Args:
        partition: Partition tag, part of the digest so VAL and TEST never collide
        rows: (nct_id, label) pairs, in any order

    Returns:
        str: hex digest
    """
    ordered = sorted((nct_id, bool(label)) for nct_id, label in rows)
    return fingerprint_json({'partition': partition, 'rows': ordered})


def fingerprint_paths(paths: Iterable[Path]) -> str:
    """Hash a set of files by name and content."""
    entries = sorted((str(path), fingerprint_file(path)) for path in paths)
    return fingerprint_json(entries)

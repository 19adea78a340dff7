"""Parameter checkpointing on top of ``np.savez``.

A checkpoint holds a format version, every parameter under ``param.<name>``,
optional auxiliary arrays under ``extra.<name>`` (optimizer moments, counters),
and a JSON metadata string.  Loading restores in place and refuses files whose
parameter names or shapes do not match the nets being restored.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised for unreadable, mismatched, or wrong-version checkpoint files."""


def save_checkpoint(path: str | Path, params: dict[str, Tensor],
                    extra: dict[str, np.ndarray] | None = None,
                    meta: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {
        "format_version": np.array(FORMAT_VERSION),
        "meta_json": np.array(json.dumps(meta or {}, sort_keys=True)),
    }
    for name, p in params.items():
        arrays[f"param.{name}"] = p.data
    for name, arr in (extra or {}).items():
        arrays[f"extra.{name}"] = np.asarray(arr)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path, params: dict[str, Tensor]
                    ) -> tuple[dict[str, np.ndarray], dict]:
    """Restore ``params`` in place; returns (extra arrays, metadata dict)."""
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with archive:
        names = set(archive.files)
        if "format_version" not in names:
            raise CheckpointError(f"{path} is not a checkpoint (no format_version)")
        version = int(archive["format_version"])
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path} has format version {version}, expected {FORMAT_VERSION}")
        stored = {n[len("param."):] for n in names if n.startswith("param.")}
        missing = sorted(set(params) - stored)
        unexpected = sorted(stored - set(params))
        if missing or unexpected:
            raise CheckpointError(
                f"{path} parameter names do not match: missing {missing}, unexpected {unexpected}")
        for name, p in params.items():
            arr = archive[f"param.{name}"]
            if arr.shape != p.data.shape:
                raise CheckpointError(
                    f"{path}: parameter {name} has shape {arr.shape}, expected {p.data.shape}")
        # all validated; only now mutate
        for name, p in params.items():
            p.data = archive[f"param.{name}"].astype(np.float64)
        extra = {n[len("extra."):]: archive[n] for n in names if n.startswith("extra.")}
        meta = json.loads(str(archive["meta_json"]))
    return extra, meta

"""CSV / JSON import-export shared by every module.

CSV dialect: comma separated, ``.`` decimal, floats with 17 significant
digits, one header row, metadata on ``#``-prefixed lines before the header.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .profile import VarianceProfile, from_triplets


def fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(value)


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    meta: Mapping[str, Any] | None = None,
    append: bool = False,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not (append and path.exists())
    with open(path, "a" if not fresh else "w", newline="") as fh:
        if fresh:
            for key, val in (meta or {}).items():
                fh.write(f"# {key}: {val}\n")
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Return (header, rows), skipping ``#`` metadata lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]


def csv_body(path: str | Path) -> bytes:
    """File content with ``#`` lines removed; what reproducibility checks compare."""
    with open(path, "rb") as fh:
        return b"".join(ln for ln in fh if not ln.startswith(b"#"))


def write_json(path: str | Path, obj: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_triplets(path: str | Path, n: int, entries: np.ndarray, name: str = "s_ij") -> None:
    """Upper-triangle triplets (i, j, value), i < j, lexicographic, zeros skipped."""
    iu, ju = np.triu_indices(n, k=1)
    vals = np.asarray(entries)[iu, ju]
    keep = vals != 0
    write_csv(path, ["i", "j", name], zip(iu[keep], ju[keep], vals[keep]))


def write_profile(path: str | Path, profile: VarianceProfile) -> None:
    write_triplets(path, profile.n, profile.dense(), "s_ij")


def read_triplets(path: str | Path) -> list[tuple[int, int, float]]:
    _, rows = read_csv(path)
    return [(int(i), int(j), float(v)) for i, j, v in rows]


def read_profile(path: str | Path, n: int, k_scale: int) -> VarianceProfile:
    return from_triplets(n, read_triplets(path), k_scale)


def read_coupling_matrix(path: str | Path, n: int) -> np.ndarray:
    w = np.zeros((n, n))
    for i, j, v in read_triplets(path):
        w[i, j] = w[j, i] = v
    return w


def write_iterates(path: str | Path, iterates: Sequence[np.ndarray], name: str) -> None:
    """Long-format history (l, i, <name>_l_i): state-evolution q^l or AMP x^l traces."""
    rows = ((l, i, v) for l, vec in enumerate(iterates) for i, v in enumerate(np.asarray(vec)))
    write_csv(path, ["l", "i", f"{name}_l_i"], rows)


def write_vector(path: str | Path, values: np.ndarray, name: str) -> None:
    """Two-column export (i, <name>_i), e.g. magnetizations."""
    write_csv(path, ["i", f"{name}_i"], enumerate(np.asarray(values)))

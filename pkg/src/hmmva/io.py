"""Model, barrier and observation files.

Model and barrier files are JSON documents whose array indices are 0-based,
like everywhere in the library.  Plain-text alignment output (one state per
line) is 1-based.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .alignment_stream import BarrierSpec
from .errors import ModelFormatError
from .model import HmmParams, validate_params


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON ({exc})") from exc


def load_model(path) -> HmmParams:
    return validate_params(_read_json(path))


def model_to_json(params: HmmParams) -> str:
    return json.dumps(params.to_dict(), indent=2) + "\n"


def save_model(params: HmmParams, path) -> None:
    Path(path).write_text(model_to_json(params), encoding="utf-8")


def barrier_from_dict(doc) -> BarrierSpec:
    if not isinstance(doc, dict):
        raise ModelFormatError("barrier document must be an object")
    extra = set(doc) - {"sets", "order", "state", "witness"}
    if extra:
        raise ModelFormatError(f"unknown barrier fields: {sorted(extra)}")
    if "sets" not in doc or "order" not in doc:
        raise ModelFormatError("barrier needs 'sets' and 'order'")
    sets = []
    for s in doc["sets"]:
        if not isinstance(s, list) or not s:
            raise ModelFormatError("each acceptance set must be a nonempty list")
        if all(isinstance(v, int) and not isinstance(v, bool) for v in s):
            sets.append(frozenset(s))
        elif all(isinstance(v, list) and len(v) == 2 for v in s):
            sets.append(tuple((float(a), float(b)) for a, b in s))
        else:
            raise ModelFormatError("acceptance sets are symbol lists or lists of [lo, hi] intervals")
    try:
        return BarrierSpec(tuple(sets), int(doc["order"]), doc.get("state"), doc.get("witness"))
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid barrier: {exc}") from exc


def load_barrier(path) -> BarrierSpec:
    return barrier_from_dict(_read_json(path))


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------


def _symbol_table(params: HmmParams):
    symbols = params.emissions[0].symbols
    return {s: i for i, s in enumerate(symbols)} if symbols is not None else None


def parse_observation(token: str, params: HmmParams, table=None, where: str = ""):
    """One observation token: a decimal for Gaussian models, a symbol name or index for categorical ones."""
    token = token.strip()
    if params.discrete:
        if table is None:
            table = _symbol_table(params)
        if table is not None:
            if token in table:
                return table[token]
            raise ModelFormatError(f"{where}unknown symbol {token!r}")
        try:
            value = int(token)
        except ValueError as exc:
            raise ModelFormatError(f"{where}expected an integer symbol, got {token!r}") from exc
        if not 0 <= value < params.emissions[0].n_symbols:
            raise ModelFormatError(f"{where}symbol {value} outside 0..{params.emissions[0].n_symbols - 1}")
        return value
    try:
        value = float(token)
    except ValueError as exc:
        raise ModelFormatError(f"{where}expected a decimal number, got {token!r}") from exc
    if not math.isfinite(value):
        raise ModelFormatError(f"{where}observation must be finite, got {token!r}")
    return value


def iter_observations(lines: Iterable[str], params: HmmParams, name: str = "<input>"):
    table = _symbol_table(params) if params.discrete else None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        yield parse_observation(line, params, table, f"{name}:{lineno}: ")


def read_observations(path, params: HmmParams) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        values = list(iter_observations(fh, params, str(path)))
    if not values:
        raise ModelFormatError(f"{path}: no observations")
    return np.array(values, dtype=np.int64 if params.discrete else float)


def format_observation(value, params: HmmParams) -> str:
    if params.discrete:
        symbols = params.emissions[0].symbols
        return symbols[int(value)] if symbols is not None else str(int(value))
    return repr(float(value))


def write_observations(fh: TextIO, x, params: HmmParams) -> None:
    for value in np.asarray(x).tolist():
        fh.write(format_observation(value, params) + "\n")


def write_states(fh: TextIO, path) -> None:
    """One 1-based state index per line."""
    for s in np.asarray(path).tolist():
        fh.write(f"{s + 1}\n")


def read_states(path) -> np.ndarray:
    """Inverse of :func:`write_states` (returns 0-based states)."""
    with open(path, encoding="utf-8") as fh:
        return np.array([int(line) - 1 for line in fh if line.strip()], dtype=np.int64)

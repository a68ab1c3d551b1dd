"""
Deterministic rendering of run artifacts.

CSV files start with a provenance comment, `# config_hash=<hex> seed=<n>`,
so artifacts from different experiments cannot be mixed up silently.
"""

import io
import json
import re
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from ..core import Bounds, StateLattice, TimeGrid
from ..cox import GammaFamily

FLOAT_FORMAT = "%.12g"
_PROVENANCE = re.compile(r"^# config_hash=([0-9a-f]+) seed=(\d+)\s*$")


def provenance_line(config_hash: str, seed: int) -> str:
    return f"# config_hash={config_hash} seed={seed}\n"


def frame_to_csv(frame: pd.DataFrame, config_hash: str, seed: int) -> str:
    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return provenance_line(config_hash, seed) + body


def records_to_jsonl(
    records: Iterable[Dict[str, Any]], config_hash: str, seed: int
) -> str:
    """One sorted-key JSON object per line, each stamped with the provenance."""
    lines = []
    for record in records:
        stamped = {**record, "config_hash": config_hash, "seed": seed}
        lines.append(json.dumps(stamped, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def read_provenance(text: str) -> Tuple[Optional[str], Optional[int]]:
    """(config_hash, seed) from the first line, or (None, None) when absent."""
    first = text.split("\n", 1)[0]
    match = _PROVENANCE.match(first)
    if match is None:
        return None, None
    return match.group(1), int(match.group(2))


def csv_to_frame(text: str) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(text), comment="#")


def gamma_to_frame(gamma: GammaFamily) -> pd.DataFrame:
    """Rows (state, t, gamma) with t the left node of each cell."""
    lattice, grid = gamma.lattice, gamma.grid
    order = lattice.value_order()
    return pd.DataFrame(
        {
            "state": np.repeat(lattice.states[order], grid.n_steps),
            "t": np.tile(grid.left_nodes, lattice.size),
            "gamma": np.asarray(gamma.table)[order].ravel(),
        }
    )


def table_from_frame(
    frame: pd.DataFrame, column: str, lattice: StateLattice, grid: TimeGrid
) -> np.ndarray:
    """(states x cells) array from long-format rows (state, t, <column>)."""
    missing = {"state", "t", column} - set(frame.columns)
    if missing:
        raise ValueError(f"missing columns: {sorted(missing)}")
    table = np.full((lattice.size, grid.n_steps), np.nan)
    for state, t, value in frame[["state", "t", column]].itertuples(index=False):
        try:
            ordinal = lattice.locate(float(state))
        except KeyError:
            continue
        table[ordinal, grid.cell_of(float(t))] = float(value)
    if np.isnan(table).any():
        gaps = np.unique(np.argwhere(np.isnan(table))[:, 0])
        rows = sorted(float(lattice.states[i]) for i in gaps)
        raise ValueError(f"{column} table does not cover states {rows} on every cell")
    return table


def read_gamma_csv(
    text: str, lattice: StateLattice, grid: TimeGrid, bounds: Bounds
) -> GammaFamily:
    table = table_from_frame(csv_to_frame(text), "gamma", lattice, grid)
    return GammaFamily(lattice, grid, bounds, table)

"""CSV outputs and run manifests.

Floats are written with 17 significant digits so that every 64-bit value
reads back exactly.
"""
from __future__ import annotations
from typing import Any, Dict, List, Sequence
from dataclasses import dataclass, field
import json
import os.path as op
import pandas as pd
from dataclasses_json import dataclass_json

from . import diagnostics as dg, utils as u
from ._version import get_versions

logger = u.init_logger(__name__)

FLOAT_FORMAT = "%.17g"

def write_table(df: pd.DataFrame, path: str):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

def read_table(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip')

def write_timeseries(ledgers: Sequence[dg.EnergyLedger], path: str):
    """one row per ledger under the fixed header ``dg.CSV_COLUMNS``"""
    if len(ledgers) == 0:
        raise ValueError("cannot write an empty time series")
    write_table(dg.ledger_frame(ledgers), path)
    logger.debug(f"wrote {len(ledgers)} ledger rows to {path}")

def read_timeseries(path: str) -> pd.DataFrame:
    df = read_table(path)
    if list(df.columns) != dg.CSV_COLUMNS:
        raise ValueError(f"{path} does not have the time-series header {dg.CSV_COLUMNS}")
    return df

def write_sweep(table: pd.DataFrame, path: str):
    write_table(table, path)

@dataclass_json
@dataclass
class RunManifest:
    """provenance of one command: what ran, with which config, producing what"""
    command: str
    config: Dict[str, Any]
    seed: int = None
    start: str = None
    end: str = None
    outputs: List[str] = field(default_factory=list)
    version: str = field(default_factory=lambda: get_versions()['version'])

def now() -> str:
    return pd.Timestamp.now(tz='UTC').isoformat()

def read_manifests(path: str) -> List[RunManifest]:
    if not op.isfile(path):
        return []
    with open(path) as f:
        return [RunManifest.from_json(line) for line in f if line.strip()]

def append_manifest(manifest: RunManifest, path: str):
    """append one JSON line; an output may belong to one manifest only"""
    outputs = {op.abspath(p) for p in manifest.outputs}
    for old in read_manifests(path):
        clash = outputs & {op.abspath(p) for p in old.outputs}
        if clash:
            raise ValueError(f"output(s) {sorted(clash)} already referenced by a '{old.command}' "
                             f"manifest started {old.start}")
    with open(path, 'a') as f:
        f.write(json.dumps(manifest.to_dict(), sort_keys=True) + "\n")

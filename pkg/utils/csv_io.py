import json
import os
from typing import Any, Dict, Sequence

import numpy as np

# 17 significant digits round-trip every float64
CSV_FORMAT = "%.17g"


def write_csv(path: str, columns: Sequence[str], data) -> str:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data.reshape(-1, len(columns))
    if data.shape[1] != len(columns):
        raise ValueError(f"{path}: {data.shape[1]} data columns for header {list(columns)}")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="\n") as handle:
        np.savetxt(handle, data, fmt=CSV_FORMAT, delimiter=",", header=",".join(columns), comments="", newline="\n")
    return path


def read_csv(path: str):
    """Header and float64 rows of a file written by `write_csv`."""
    with open(path) as handle:
        header = handle.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_metadata(path: str, metadata: Dict[str, Any]) -> str:
    with open(path, "w", newline="\n") as handle:
        json.dump(metadata, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path

"""File formats: detection CSV, truth sidecar, ternary strings, flat config.

All CSV outputs carry a header row and a fixed column order so runs can
be diffed mechanically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid
from .simulate import OUTCOME_CODES, OUTCOME_LABELS, SimOutput

DETECTIONS_HEADER = ["t_seconds", "outcome"]
TRUTH_HEADER = ["t_seconds", "emitted_index", "is_background"]


@dataclass
class Detections:
    """Timestamps plus decoded outcomes loaded from a detection CSV."""

    times: np.ndarray = field(repr=False)
    outcomes: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.times)


def save_detections(path, detections) -> None:
    """Write `t_seconds,outcome` rows; outcome is one of Z0, Z1, X0, X1."""
    times = np.asarray(detections.times, dtype=np.float64)
    codes = np.asarray(detections.outcomes, dtype=np.int8)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DETECTIONS_HEADER)
        for t, c in zip(times, codes):
            w.writerow([f"{t:.15g}", OUTCOME_LABELS[c]])


def load_detections(path) -> Detections:
    times, codes = [], []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if [h.strip() for h in header] != DETECTIONS_HEADER:
            raise ConfigInvalid(f"unexpected detection CSV header: {header}")
        for row in r:
            if not row:
                continue
            times.append(float(row[0]))
            codes.append(OUTCOME_CODES[row[1].strip()])
    return Detections(
        times=np.asarray(times, dtype=np.float64),
        outcomes=np.asarray(codes, dtype=np.int8),
    )


def save_truth(path, sim: SimOutput) -> None:
    """Write the hidden-truth sidecar `t_seconds,emitted_index,is_background`."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRUTH_HEADER)
        for t, n, bg in zip(sim.times, sim.truth_index, sim.is_background):
            w.writerow([f"{t:.15g}", int(n), int(bg)])


def load_truth(path):
    """Return (times, emitted_index, is_background) arrays."""
    times, index, is_bg = [], [], []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if [h.strip() for h in header] != TRUTH_HEADER:
            raise ConfigInvalid(f"unexpected truth CSV header: {header}")
        for row in r:
            if not row:
                continue
            times.append(float(row[0]))
            index.append(int(row[1]))
            is_bg.append(bool(int(row[2])))
    return (
        np.asarray(times, dtype=np.float64),
        np.asarray(index, dtype=np.int64),
        np.asarray(is_bg, dtype=bool),
    )


def save_ternary(path, values) -> None:
    """Single-column CSV of {-1, 0, +1} symbols."""
    with open(path, "w", newline="") as f:
        f.write("symbol\n")
        for v in np.asarray(values, dtype=np.int8):
            f.write(f"{int(v)}\n")


def load_ternary(path) -> np.ndarray:
    with open(path, newline="") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if lines and lines[0] == "symbol":
        lines = lines[1:]
    return np.asarray([int(v) for v in lines], dtype=np.int8)


def parse_config(path) -> dict:
    """Flat `key=value` config, '#' starts a comment. Values are parsed
    as int when possible, then float, else kept as strings."""
    out = {}
    with open(path) as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigInvalid(f"malformed config line: {raw.rstrip()}")
            key, value = (part.strip() for part in line.split("=", 1))
            for cast in (int, float):
                try:
                    value = cast(value)
                    break
                except ValueError:
                    continue
            out[key] = value
    return out

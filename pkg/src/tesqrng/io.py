"""On-disk formats: event records, pulse features, waveforms, totals.

Events: CSV with columns event_id,n_a,n_b,n_c, or a binary stream of
little-endian (u64 id, three u16 counts) records. Features: CSV with
columns event_id,channel,area,height,duration,t_start,t_peak; a row with
duration 0 means no pulse crossed the trigger threshold. Waveform files
carry a JSON header line {sample_rate, adc_bits, record_len} followed by
packed little-endian u16 samples. Totals: binary (u64 id, i16 total)
records, total -1 meaning discarded.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

__all__ = [
    "write_events_csv",
    "read_events_csv",
    "write_events_bin",
    "read_events_bin",
    "write_features_csv",
    "read_features_csv",
    "write_waveforms",
    "read_waveforms",
    "write_totals",
    "read_totals",
]

_EVENT_DTYPE = np.dtype([("id", "<u8"), ("a", "<u2"), ("b", "<u2"), ("c", "<u2")])
_TOTAL_DTYPE = np.dtype([("id", "<u8"), ("total", "<i2")])


def write_events_csv(path: str | Path, counts: np.ndarray, start: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["event_id", "n_a", "n_b", "n_c"])
        for i, row in enumerate(counts):
            w.writerow([start + i, *map(int, row)])


def read_events_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    return data[:, 0], data[:, 1:]


def write_events_bin(path: str | Path, counts: np.ndarray, start: int = 0) -> None:
    counts = np.asarray(counts)
    rec = np.empty(len(counts), dtype=_EVENT_DTYPE)
    rec["id"] = np.arange(start, start + len(counts))
    rec["a"], rec["b"], rec["c"] = counts[:, 0], counts[:, 1], counts[:, 2]
    Path(path).write_bytes(rec.tobytes())


def read_events_bin(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    rec = np.frombuffer(Path(path).read_bytes(), dtype=_EVENT_DTYPE)
    counts = np.stack([rec["a"], rec["b"], rec["c"]], axis=1).astype(np.int64)
    return rec["id"].astype(np.int64), counts


def write_features_csv(path: str | Path, rows) -> None:
    """rows: iterable of (event_id, channel, area, height, duration, t_start, t_peak)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["event_id", "channel", "area", "height", "duration", "t_start", "t_peak"])
        for row in rows:
            w.writerow(row)


def read_features_csv(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    """Features keyed by channel label, each with parallel column arrays."""
    cols: dict[str, list] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            cols.setdefault(rec["channel"], []).append(
                (
                    int(rec["event_id"]),
                    float(rec["area"]),
                    int(rec["height"]),
                    int(rec["duration"]),
                    int(rec["t_start"]),
                    int(rec["t_peak"]),
                )
            )
    out = {}
    for ch, rows in cols.items():
        arr = np.array(rows, dtype=float)
        out[ch] = {
            "event_id": arr[:, 0].astype(np.int64),
            "area": arr[:, 1],
            "height": arr[:, 2].astype(np.int64),
            "duration": arr[:, 3].astype(np.int64),
            "t_start": arr[:, 4].astype(np.int64),
            "t_peak": arr[:, 5].astype(np.int64),
        }
    return out


def write_waveforms(path: str | Path, samples: np.ndarray, sample_rate: float, adc_bits: int) -> None:
    """samples: (n_waveforms, record_len) of ADC counts."""
    samples = np.asarray(samples)
    header = {
        "sample_rate": sample_rate,
        "adc_bits": adc_bits,
        "record_len": int(samples.shape[1]),
        "count": int(samples.shape[0]),
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(samples.astype("<u2").tobytes())


def read_waveforms(path: str | Path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<u2")
    mat = data.reshape(header["count"], header["record_len"])
    return header, mat


def write_totals(path: str | Path, totals: np.ndarray, start: int = 0) -> None:
    totals = np.asarray(totals)
    rec = np.empty(len(totals), dtype=_TOTAL_DTYPE)
    rec["id"] = np.arange(start, start + len(totals))
    rec["total"] = totals
    Path(path).write_bytes(rec.tobytes())


def read_totals(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    rec = np.frombuffer(Path(path).read_bytes(), dtype=_TOTAL_DTYPE)
    return rec["id"].astype(np.int64), rec["total"].astype(np.int64)

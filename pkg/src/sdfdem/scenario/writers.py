"""Output files: per-particle time series, collection averages and VTK frames.

Numbers are written with ``%.17g`` so a re-read reproduces every value
exactly. Rows are ordered by time, then body id.
"""

from __future__ import annotations

import csv
import math
import os
from pathlib import Path

import numpy as np

from ..errors import OutputError

TIMESERIES_HEADER = ["t", "id", "x", "y", "z", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz"]
COLLECTION_HEADER = ["t", "strain", "sxx", "syy", "szz", "sxy", "sxz", "syz", "V"]


def fmt(x) -> str:
    return "%.17g" % float(x)


def _as3(v):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return np.concatenate([v, np.zeros(3 - len(v))]) if len(v) < 3 else v


def _orientation4(q):
    """Quaternion for a 3-D orientation, or the z-rotation for a 2-D angle."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        return np.array([math.cos(0.5 * q), 0.0, 0.0, math.sin(0.5 * q)])
    return q


def _spin3(w):
    w = np.asarray(w, dtype=float)
    return np.array([0.0, 0.0, float(w)]) if w.ndim == 0 else w


def timeseries_row(record):
    d = record.data
    values = [record.t, record.body_id]
    values += list(_as3(d["position"])) + list(_as3(d["velocity"]))
    values += list(_orientation4(d["orientation"])) + list(_spin3(d["angular_velocity"]))
    return [fmt(values[0]), str(int(values[1]))] + [fmt(v) for v in values[2:]]


def collection_row(record):
    d = record.data
    s = np.zeros((3, 3))
    sig = np.asarray(d["stress"], dtype=float)
    s[: sig.shape[0], : sig.shape[1]] = sig
    values = [record.t, d["strain"], s[0, 0], s[1, 1], s[2, 2], s[0, 1], s[0, 2], s[1, 2], d["volume"]]
    return [fmt(v) for v in values]


def vtk_frame(records) -> str:
    """Legacy ASCII VTK POLYDATA for one output frame of particle records."""
    n = len(records)
    lines = ["# vtk DataFile Version 3.0", "particles", "ASCII", "DATASET POLYDATA", f"POINTS {n} double"]
    lines += [" ".join(fmt(v) for v in _as3(r.data["position"])) for r in records]
    lines.append(f"VERTICES {n} {2 * n}")
    lines += [f"1 {k}" for k in range(n)]
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS velocity double")
    lines += [" ".join(fmt(v) for v in _as3(r.data["velocity"])) for r in records]
    lines.append("VECTORS angular_velocity double")
    lines += [" ".join(fmt(v) for v in _spin3(r.data["angular_velocity"])) for r in records]
    lines += ["SCALARS body_id int 1", "LOOKUP_TABLE default"]
    lines += [str(int(r.body_id)) for r in records]
    lines += ["SCALARS broken_bonds int 1", "LOOKUP_TABLE default"]
    lines += [str(int(r.data.get("broken_bonds", 0))) for r in records]
    return "\n".join(lines) + "\n"


class OutputWriter:
    """Streams observer records to disk, flushing at every write call."""

    def __init__(self, directory, vtk: bool = True):
        self.directory = Path(directory)
        self.vtk = vtk
        self.frame = 0
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._ts = open(self.directory / "timeseries.csv", "w", newline="")
            self._col = open(self.directory / "collection.csv", "w", newline="")
        except OSError as exc:
            raise OutputError(self.directory, exc.strerror or exc) from None
        self._ts_csv = csv.writer(self._ts, lineterminator="\n")
        self._col_csv = csv.writer(self._col, lineterminator="\n")
        self._ts_csv.writerow(TIMESERIES_HEADER)
        self._col_csv.writerow(COLLECTION_HEADER)
        self._flush()

    def _flush(self):
        self._ts.flush()
        self._col.flush()

    def write(self, records):
        """Write the records of one or more observer firings."""
        by_time = {}
        for r in records:
            by_time.setdefault(r.t, []).append(r)
        for t in sorted(by_time):
            group = by_time[t]
            particles = sorted((r for r in group if r.kind == "particle"), key=lambda r: r.body_id)
            for r in particles:
                self._ts_csv.writerow(timeseries_row(r))
            for r in group:
                if r.kind == "collection":
                    self._col_csv.writerow(collection_row(r))
            if self.vtk and particles:
                path = self.directory / f"particles_{self.frame}.vtk"
                try:
                    with open(path, "w", newline="\n") as fh:
                        fh.write(vtk_frame(particles))
                except OSError as exc:
                    raise OutputError(path, exc.strerror or exc) from None
                self.frame += 1
        self._flush()

    def close(self):
        self._ts.close()
        self._col.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_outputs(records, directory, vtk: bool = True):
    """Write a complete record list to ``directory``; returns the file paths."""
    with OutputWriter(directory, vtk) as w:
        w.write(records)
    return sorted(os.path.join(str(directory), f) for f in os.listdir(directory))


def read_csv(path):
    """Header and float rows of a written CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in row] for row in rows[1:]]

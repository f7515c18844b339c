"""Deterministic flat-file emission: CSV tables, JSON summaries, state files.

Data files never contain timestamps; run metadata (version, config hash,
wall time) lives in a separate manifest so reruns of the same configuration
are byte-identical.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .dynamics import DriveSchedule, Segment, Trajectory
from .fock import PhaseSpaceGrid, QuantumState


def fmt_float(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if math.isnan(xf):
        return "nan"
    # repr is the shortest exact-roundtrip decimal form, so files rebuild the
    # same doubles and reruns stay byte-identical
    return repr(xf)


@dataclass
class ResultTable:
    """Rectangular, unit-annotated table; rows of scalars.

    Non-finite entries require a flag column (a column whose name ends in
    ``_flag`` or equals ``reachable``) so downstream plotting can filter.
    """

    columns: list
    rows: list

    def __post_init__(self):
        ncol = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != ncol:
                raise ValueError(f"row {i} has {len(row)} entries, expected {ncol}")
        has_flag = any(c == "reachable" or c.endswith("_flag") for c in self.columns)
        if not has_flag:
            for row in self.rows:
                for c, v in zip(self.columns, row):
                    if isinstance(v, (str, bool)):
                        continue
                    if not math.isfinite(float(v)):
                        raise ValueError(
                            f"non-finite value in column {c!r} without a flag column")

    def write_csv(self, path):
        write_csv(path, self.columns, self.rows)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt_float(v)
                              for v in row) + "\n")


def write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


TRAJECTORY_COLUMNS = ("t_s", "n_expect", "p0", "p1", "p2", "g2", "trace_err")


def trajectory_to_csv(path, traj: Trajectory):
    rows = zip(traj.times, traj.n_expect, traj.p0, traj.p1, traj.p2,
               traj.g2, traj.trace_err)
    write_csv(path, TRAJECTORY_COLUMNS, rows)


SCHEDULE_COLUMNS = ("duration_s",
                    "l1_re_start", "l1_im_start", "l1_re_end", "l1_im_end",
                    "l2_re_start", "l2_im_start", "l2_re_end", "l2_im_end",
                    "delta_rad_s")


def schedule_to_csv(path, schedule: DriveSchedule):
    rows = [(s.duration_s,
             s.l1_start.real if isinstance(s.l1_start, complex) else s.l1_start,
             s.l1_start.imag if isinstance(s.l1_start, complex) else 0.0,
             s.l1_end.real if isinstance(s.l1_end, complex) else s.l1_end,
             s.l1_end.imag if isinstance(s.l1_end, complex) else 0.0,
             s.l2_start.real if isinstance(s.l2_start, complex) else s.l2_start,
             s.l2_start.imag if isinstance(s.l2_start, complex) else 0.0,
             s.l2_end.real if isinstance(s.l2_end, complex) else s.l2_end,
             s.l2_end.imag if isinstance(s.l2_end, complex) else 0.0,
             s.delta)
            for s in schedule.segments]
    write_csv(path, SCHEDULE_COLUMNS, rows)


def schedule_from_csv(path, frame="lab", blockade_n=1) -> DriveSchedule:
    segs = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != SCHEDULE_COLUMNS:
            raise ValueError(f"unexpected schedule header {header}")
        prev_l1_end = prev_l2_end = None
        for line in fh:
            vals = [float(x) for x in line.strip().split(",")]
            (dur, l1rs, l1is, l1re_, l1ie, l2rs, l2is, l2re_, l2ie, delta) = vals
            seg = Segment(dur, l1rs + 1j * l1is, l1re_ + 1j * l1ie,
                          l2rs + 1j * l2is, l2re_ + 1j * l2ie, delta,
                          allow_jump=True)
            segs.append(seg)
    return DriveSchedule(tuple(segs), frame=frame, blockade_n=blockade_n)


def state_to_csv(path, state: QuantumState):
    """Density-matrix entries as (row, col, re, im) records."""
    rho = state.density()
    rows = []
    for i in range(rho.shape[0]):
        for j in range(rho.shape[1]):
            rows.append((i, j, rho[i, j].real, rho[i, j].imag))
    write_csv(path, ("row", "col", "re", "im"), rows)


def state_from_csv(path) -> QuantumState:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    dim = int(data[:, 0].max()) + 1
    rho = np.zeros((dim, dim), dtype=complex)
    for i, j, re, im in data:
        rho[int(i), int(j)] = re + 1j * im
    return QuantumState(rho)


def wigner_to_csv(path, grid: PhaseSpaceGrid):
    rows = []
    for i, x in enumerate(grid.re):
        for j, y in enumerate(grid.im):
            rows.append((x, y, grid.values[i, j]))
    write_csv(path, ("re", "im", "w"), rows)


def write_manifest(path, config_text: str, command: str, extra=None):
    from .config import config_hash
    payload = {
        "version": __version__,
        "command": command,
        "config_sha256": config_hash(config_text),
        "wall_time_s": time.time(),
    }
    if extra:
        payload.update(extra)
    write_json(path, payload)

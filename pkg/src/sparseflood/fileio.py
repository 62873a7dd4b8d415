"""Plain-text file formats: grids, observations, iteration logs, configs.

All writers are deterministic (floats printed with 17 significant digits, so
write-then-read round-trips exactly) and every file starts with a header
declaring its units and ordering.
"""

import csv

import numpy as np

from .forward_models import ObservationSet

__all__ = [
    "write_grid",
    "read_grid",
    "write_observations",
    "read_observations",
    "write_iteration_log",
    "read_iteration_log",
    "write_eval_report",
    "write_summary",
    "parse_config",
]

_FMT = "{:.17g}"


def _fmt(x):
    return _FMT.format(float(x))


def write_grid(path, field, geometry, units):
    """Grid file: header line ``nx ny dx dy dz units``, then ny rows of nx
    values (row-major, y-outer)."""
    field = np.asarray(field, dtype=float)
    ny, nx = field.shape
    if (nx, ny) != (geometry.nx, geometry.ny):
        raise ValueError(f"field shape {field.shape} does not match geometry")
    with open(path, "w") as fh:
        fh.write(
            f"{nx} {ny} {_fmt(geometry.dx)} {_fmt(geometry.dy)} {_fmt(geometry.dz)} {units}\n"
        )
        for row in field:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def read_grid(path):
    """Read a grid file; returns ``(field, (dx, dy, dz), units)``."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise ValueError(f"{path}: malformed grid header {header!r}")
        nx, ny = int(header[0]), int(header[1])
        dx, dy, dz = (float(v) for v in header[2:5])
        units = header[5]
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split()])
    field = np.array(rows, dtype=float)
    if field.shape != (ny, nx):
        raise ValueError(f"{path}: expected {ny}x{nx} values, got {field.shape}")
    return field, (dx, dy, dz), units


def write_observations(path, observations, comment=None):
    """Observation file: comment, column header, then one row per entry
    ``time_days well quantity value``. Pressures are gauge-relative Pa,
    saturations are fractions."""
    with open(path, "w") as fh:
        fh.write(
            "# "
            + (
                comment
                or "well observations; pressure: Pa gauge-relative; water_saturation: fraction"
            )
            + "\n"
        )
        fh.write("time_days well quantity value\n")
        for (t, well, quantity), v in zip(observations.index, observations.values):
            fh.write(f"{_fmt(t)} {well} {quantity} {_fmt(v)}\n")


def read_observations(path):
    with open(path) as fh:
        values = []
        index = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("time_days"):
                continue
            t, well, quantity, v = line.split()
            index.append((float(t), well, quantity))
            values.append(float(v))
    return ObservationSet(np.array(values), index)


def write_iteration_log(path, records):
    """CSV log, one row per iteration: iter, misfit, sparsity, cost, epsilon,
    beta (empty in additive mode), clamp_count."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "misfit", "sparsity", "cost", "epsilon", "beta", "clamp_count"])
        for r in records:
            writer.writerow(
                [
                    r.iteration,
                    _fmt(r.misfit),
                    _fmt(r.sparsity),
                    _fmt(r.cost),
                    _fmt(r.epsilon),
                    "" if r.beta is None else _fmt(r.beta),
                    r.clamp_count,
                ]
            )


def read_iteration_log(path):
    """Read back an iteration log as a list of dicts (beta None if empty)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                {
                    "iter": int(row["iter"]),
                    "misfit": float(row["misfit"]),
                    "sparsity": float(row["sparsity"]),
                    "cost": float(row["cost"]),
                    "epsilon": float(row["epsilon"]),
                    "beta": float(row["beta"]) if row["beta"] else None,
                    "clamp_count": int(row["clamp_count"]),
                }
            )
    return out


def write_eval_report(path, report):
    with open(path, "w") as fh:
        fh.write("# recovery metrics vs truth (log10-permeability comparison)\n")
        fh.write(f"relative_l2_error = {_fmt(report.relative_l2_error)}\n")
        fh.write(f"correlation = {_fmt(report.correlation)}\n")
        fh.write(f"support_overlap = {_fmt(report.support_overlap)}\n")
        if report.misfit_ratio is not None:
            fh.write(f"misfit_ratio = {_fmt(report.misfit_ratio)}\n")
        if report.iterations is not None:
            fh.write(f"iterations = {report.iterations}\n")


def write_summary(path, header, rows):
    """CSV summary table with the given header and rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_fmt(v) if isinstance(v, float) else v for v in row]
            )


def parse_config(path):
    """Flat key-value config: ``key = value`` lines, ``#`` comments."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key or not value:
                raise ValueError(f"{path}:{lineno}: empty key or value")
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out

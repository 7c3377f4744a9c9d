"""Legacy ASCII VTK PolyData writer/reader for surface scalars.

Covers exactly the subset this package emits: POINTS, POLYGONS, and named
scalar arrays under POINT_DATA. The reader exists so exports can be
round-trip checked without a VTK dependency.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def write_polydata(path, points: np.ndarray, polygons: np.ndarray, scalars: dict) -> None:
    points = np.asarray(points, dtype=np.float64)
    polygons = np.asarray(polygons, dtype=np.int64)
    n = len(points)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("windload surface scalars\n")
        fh.write("ASCII\n")
        fh.write("DATASET POLYDATA\n")
        fh.write(f"POINTS {n} double\n")
        for x, y, z in points:
            fh.write(f"{x!r} {y!r} {z!r}\n")
        m = len(polygons)
        fh.write(f"POLYGONS {m} {4 * m}\n")
        for a, b, c in polygons:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"POINT_DATA {n}\n")
        for name, vals in scalars.items():
            vals = np.asarray(vals, dtype=np.float64)
            if len(vals) != n:
                raise FormatError(f"scalar {name!r} has {len(vals)} values for {n} points")
            fh.write(f"SCALARS {name} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in vals:
                fh.write(f"{v!r}\n")


def read_polydata(path):
    """Parse a file written by :func:`write_polydata`.

    Returns (points, polygons, scalars-dict).
    """
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(k):
        nonlocal pos
        if pos + k > len(tokens):
            raise FormatError(f"{path}: truncated VTK file")
        out = tokens[pos : pos + k]
        pos += k
        return out

    def seek(word):
        nonlocal pos
        while pos < len(tokens):
            if tokens[pos] == word:
                pos += 1
                return
            pos += 1
        raise FormatError(f"{path}: missing {word} section")

    seek("POINTS")
    n = int(take(1)[0])
    take(1)  # dtype
    points = np.array(take(3 * n), dtype=np.float64).reshape(n, 3)

    seek("POLYGONS")
    m = int(take(1)[0])
    take(1)  # total index count
    polys = np.empty((m, 3), dtype=np.int64)
    for i in range(m):
        row = take(4)
        if row[0] != "3":
            raise FormatError(f"{path}: only triangles are supported")
        polys[i] = [int(v) for v in row[1:]]

    seek("POINT_DATA")
    pn = int(take(1)[0])
    if pn != n:
        raise FormatError(f"{path}: POINT_DATA count {pn} != POINTS count {n}")
    scalars = {}
    while pos < len(tokens) and tokens[pos] == "SCALARS":
        pos += 1
        name = take(1)[0]
        take(2)  # dtype, components
        lut = take(2)
        if lut[0] != "LOOKUP_TABLE":
            raise FormatError(f"{path}: expected LOOKUP_TABLE after SCALARS {name}")
        scalars[name] = np.array(take(n), dtype=np.float64)
    return points, polys, scalars

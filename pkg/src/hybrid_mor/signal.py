"""Sampled hybrid signals and their CSV representation."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError

__all__ = ["Segment", "HybridSignal", "error_norm", "log_slope"]


@dataclass
class Segment:
    """Samples of a signal over one flow interval ``[t_j, t_{j+1}] x {j}``."""

    j: int
    t: np.ndarray
    values: np.ndarray  # shape (len(t), *value_shape)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.t.shape[0]:
            raise ValueError("one sample per grid point is required")


class HybridSignal:
    """Piecewise sampled signal indexed by hybrid time ``(t, j)``.

    Segments tile the domain in order; at a jump instant the pre-jump sample
    is the last one of segment ``j`` and the post-jump sample the first one
    of segment ``j + 1``.
    """

    def __init__(self, segments, name="x"):
        self.segments = list(segments)
        self.name = name
        if not self.segments:
            raise ValueError("a hybrid signal needs at least one segment")
        shapes = {s.values.shape[1:] for s in self.segments}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent sample shapes {shapes}")

    def __repr__(self):
        return (
            f"HybridSignal({self.name!r}, segments={len(self.segments)}, "
            f"t=[{self.t_start}, {self.t_end}], shape={self.value_shape})"
        )

    @property
    def value_shape(self):
        return self.segments[0].values.shape[1:]

    @property
    def t_start(self):
        return float(self.segments[0].t[0])

    @property
    def t_end(self):
        return float(self.segments[-1].t[-1])

    @property
    def jump_values(self):
        """Post-jump values ``x(t_{j+1}, j+1)``, one per jump."""
        return [s.values[0] for s in self.segments[1:]]

    def segment(self, j):
        for s in self.segments:
            if s.j == j:
                return s
        raise KeyError(f"no segment with jump index {j}")

    def samples(self):
        """Flattened ``(t, j, values)``; jump instants appear twice."""
        t = np.concatenate([s.t for s in self.segments])
        j = np.concatenate([np.full(s.t.size, s.j, dtype=int) for s in self.segments])
        v = np.concatenate([s.values for s in self.segments])
        return t, j, v

    def at(self, t, j):
        """Value at ``(t, j)`` by linear interpolation inside segment ``j``."""
        seg = self.segment(j)
        if not seg.t[0] - 1e-12 <= t <= seg.t[-1] + 1e-12:
            raise ValueError(f"t={t} outside segment {j} [{seg.t[0]}, {seg.t[-1]}]")
        flat = seg.values.reshape(seg.t.size, -1)
        out = np.array([np.interp(t, seg.t, flat[:, k]) for k in range(flat.shape[1])])
        return out.reshape(self.value_shape)

    def map(self, fn, name=None):
        """Apply ``fn(t, j, value)`` sample-wise."""
        segs = []
        for s in self.segments:
            vals = np.array([fn(t, s.j, v) for t, v in zip(s.t, s.values)])
            segs.append(Segment(s.j, s.t.copy(), vals))
        return HybridSignal(segs, name or self.name)

    def final(self):
        return self.segments[-1].values[-1]

    def aligned_with(self, other, atol=1e-12):
        if len(self.segments) != len(other.segments):
            return False
        for a, b in zip(self.segments, other.segments):
            if a.j != b.j or a.t.shape != b.t.shape or not np.allclose(a.t, b.t, rtol=0, atol=atol):
                return False
        return True

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path, name=None):
        """Write ``t,j,<name>_0,...`` with matrix samples flattened row-major."""
        name = name or self.name
        t, j, v = self.samples()
        flat = v.reshape(t.size, -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "j"] + [f"{name}_{k}" for k in range(flat.shape[1])])
            for ti, ji, row in zip(t, j, flat):
                w.writerow([repr(float(ti)), int(ji)] + [repr(float(x)) for x in row])
        return path

    @classmethod
    def from_csv(cls, path, shape=None):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            rows = [row for row in r]
        name = header[2].rsplit("_", 1)[0] if len(header) > 2 else "x"
        data = np.array([[float(x) for x in row] for row in rows])
        t, j, flat = data[:, 0], data[:, 1].astype(int), data[:, 2:]
        if shape is not None:
            flat = flat.reshape((t.size, *shape))
        segs = []
        for jj in np.unique(j):
            mask = j == jj
            segs.append(Segment(int(jj), t[mask], flat[mask]))
        segs.sort(key=lambda s: s.j)
        return cls(segs, name)


def error_norm(a, b, name="error"):
    """Pointwise Euclidean/Frobenius norm of ``a - b`` on a shared grid."""
    if not a.aligned_with(b):
        raise AlignmentError(f"signals {a.name!r} and {b.name!r} are sampled on different grids")
    segs = []
    for sa, sb in zip(a.segments, b.segments):
        diff = (sa.values - sb.values).reshape(sa.t.size, -1)
        segs.append(Segment(sa.j, sa.t.copy(), np.linalg.norm(diff, axis=1)))
    return HybridSignal(segs, name)


def log_slope(signal, floor=1e-300):
    """Least-squares slope of ``log(value)`` against ``t``.

    Returns ``None`` ("not a fit") when fewer than two samples are positive.
    """
    t, _, v = signal.samples()
    v = np.asarray(v, dtype=float).reshape(t.size, -1)
    mag = np.linalg.norm(v, axis=1)
    keep = mag > floor
    if np.count_nonzero(keep) < 2 or np.ptp(t[keep]) == 0:
        return None
    slope, _ = np.polyfit(t[keep], np.log(mag[keep]), 1)
    return float(slope)

"""
Time grids, reproducible Brownian paths and discrete stochastic integrals.

Gaussian draws come from a counter-based generator: the ``i``-th standard
normal of stream ``(seed, stream_id)`` is a pure function of those three
integers, so paths are bit-identical regardless of how or in which order they
are produced.

Two Riemann-Ito sums are provided. :func:`ito_integral` evaluates the
integrand at the left end of each interval. :func:`backward_ito_integral` is
the ordinary Ito integral of the time-reversed integrand against the
time-reversed driver ``W~(s) = W(T) - W(T - s)``, which in direct time puts the
integrand at the right end of each interval.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

__all__ = [
    "TimeGrid",
    "BrownianPath",
    "SampledProcess",
    "standard_normals",
    "sample_brownian",
    "ito_integral",
    "backward_ito_integral",
    "right_endpoint_sum",
    "time_reverse",
    "coarsen",
    "write_csv",
    "read_csv",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time nodes ``t[0] < ... < t[N]``."""

    t: np.ndarray
    uniform: bool = False

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if not np.all(np.diff(t) > 0):
            raise ValueError("time nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def uniform_grid(cls, T: float, N: int, t0: float = 0.0) -> "TimeGrid":
        if N < 1:
            raise ValueError("N must be >= 1")
        t = t0 + (T - t0) * np.arange(N + 1) / N
        t[-1] = T
        return cls(t, uniform=True)

    @property
    def N(self) -> int:
        return self.t.size - 1

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t)

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (self.t.shape == other.t.shape and np.array_equal(self.t, other.t))

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and self.same_as(other)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SampledProcess:
    """Values of a process on the nodes of a grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.grid.t.size:
            raise ValueError(
                f"process has {v.shape[0]} samples but grid has {self.grid.t.size} nodes"
            )
        object.__setattr__(self, "values", v)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


@dataclass(frozen=True, eq=False)
class BrownianPath(SampledProcess):
    """A sampled Wiener path.

    The generating increments are stored alongside the values so that integrals
    and time reversal never re-derive them from differences of rounded values.
    ``values`` has shape ``(N+1,)`` or ``(N+1, d1)``.
    """

    seed: int | None = None
    stream_id: int | None = None
    _increments: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        super().__post_init__()
        if self._increments is None:
            object.__setattr__(self, "_increments", np.diff(self.values, axis=0))

    @classmethod
    def from_increments(cls, grid, increments, start=0.0, seed=None, stream_id=None):
        inc = np.asarray(increments, dtype=float)
        values = np.empty((inc.shape[0] + 1,) + inc.shape[1:])
        values[0] = start
        np.cumsum(inc, axis=0, out=values[1:])
        values[1:] += values[0]
        return cls(grid, values, seed, stream_id, inc)

    @property
    def increments(self) -> np.ndarray:
        return self._increments

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def component(self, j: int) -> "BrownianPath":
        if self.values.ndim == 1:
            if j != 0:
                raise IndexError(j)
            return self
        return BrownianPath(self.grid, self.values[:, j], self.seed, self.stream_id,
                            self._increments[:, j])


def _key(seed: int, stream_id: int) -> np.ndarray:
    return np.array([int(seed) & _MASK64, int(stream_id) & _MASK64], dtype=np.uint64)


def standard_normals(seed: int, stream_id: int, n: int, start: int = 0) -> np.ndarray:
    """Draws ``start, ..., start + n - 1`` of the normal stream ``(seed, stream_id)``.

    Each draw is the inverse normal CDF of one 53-bit uniform taken from a
    Philox-4x64 counter, so draw ``i`` depends on ``(seed, stream_id, i)`` only.
    """
    if n <= 0:
        return np.empty(0)
    block, skip = divmod(int(start), 4)
    bg = np.random.Philox(key=_key(seed, stream_id),
                          counter=np.array([block, 0, 0, 0], dtype=np.uint64))
    bits = bg.random_raw(n + skip)[skip:]
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def sample_brownian(grid: TimeGrid, seed: int, stream_id: int = 0, start: float = 0.0,
                    dim: int | None = None) -> BrownianPath:
    """Wiener path on ``grid`` with increments ``N(0, dt_i)``.

    With ``dim`` set, returns a ``dim``-dimensional path whose component ``j``
    at step ``i`` uses draw ``i * dim + j`` of the stream.
    """
    N = grid.N
    sq = np.sqrt(grid.dt)
    if dim is None:
        inc = standard_normals(seed, stream_id, N) * sq
    else:
        inc = standard_normals(seed, stream_id, N * dim).reshape(N, dim) * sq[:, None]
    return BrownianPath.from_increments(grid, inc, start, seed, stream_id)


def _check_aligned(xi: SampledProcess, W: SampledProcess):
    if not xi.grid.same_as(W.grid):
        raise ValueError("integrand and driver are sampled on different grids")


def ito_integral(xi: SampledProcess, W: SampledProcess) -> float:
    """Left-point sum ``sum_i xi(t_i) (W(t_{i+1}) - W(t_i))``.

    For a vector driver ``xi`` must carry a matching trailing dimension; the
    products are summed over it.
    """
    _check_aligned(xi, W)
    return float(np.sum(xi.values[:-1] * W.increments))


def time_reverse(obj):
    """Reflect a path or process in time on ``[t0, T]``.

    Drivers map to ``W~(s) = W(T) - W(T - s)`` (so ``W~`` starts at 0);
    other processes map to ``xi~(s) = xi(T - s)``.
    """
    grid = obj.grid
    t = grid.t
    rgrid = TimeGrid(t[0] + (t[-1] - t[::-1]), uniform=grid.uniform)
    if isinstance(obj, BrownianPath):
        return BrownianPath.from_increments(rgrid, obj.increments[::-1], 0.0,
                                            obj.seed, obj.stream_id)
    return SampledProcess(rgrid, obj.values[::-1])


def backward_ito_integral(xi: SampledProcess, W: SampledProcess) -> float:
    """Backward Ito integral ``int xi * dW``.

    Computed literally as the forward sum over the time-reversed integrand and
    driver; equals ``sum_i xi(t_{i+1}) (W(t_{i+1}) - W(t_i))`` up to summation
    order. The sign makes ``int 1 * dW = W(T) - W(t0)``.
    """
    _check_aligned(xi, W)
    Wr = W if isinstance(W, BrownianPath) else BrownianPath(W.grid, W.values)
    return ito_integral(time_reverse(xi), time_reverse(Wr))


def right_endpoint_sum(xi: SampledProcess, W: SampledProcess) -> float:
    """Direct-time form ``sum_i xi(t_{i+1}) dW_i`` of the backward integral."""
    _check_aligned(xi, W)
    return float(np.sum(xi.values[1:] * W.increments))


def coarsen(path: SampledProcess, factor: int):
    """Subsample to every ``factor``-th node.

    Brownian increments are summed over each block, so coarse and fine levels
    see the same underlying path.
    """
    grid = path.grid
    if factor < 1 or grid.N % factor:
        raise ValueError(f"cannot coarsen {grid.N} steps by {factor}")
    cgrid = TimeGrid(grid.t[::factor], uniform=grid.uniform)
    if isinstance(path, BrownianPath):
        inc = path.increments
        inc = inc.reshape((grid.N // factor, factor) + inc.shape[1:]).sum(axis=1)
        return BrownianPath.from_increments(cgrid, inc, path.values[0], path.seed, path.stream_id)
    return SampledProcess(cgrid, path.values[::factor])


def write_csv(path, target, columns=None):
    """Dump one or more aligned processes as CSV with 17 significant digits.

    ``target`` is a process (written as ``t,value``) or a sequence of processes
    on a common grid; ``columns`` names the value columns.
    """
    procs = [target] if isinstance(target, SampledProcess) else list(target)
    grid = procs[0].grid
    if columns is None:
        columns = ["value"] if len(procs) == 1 else [f"value{i}" for i in range(len(procs))]
    cols = [p.values.reshape(grid.t.size, -1) for p in procs]
    data = np.column_stack([grid.t] + cols)
    header = ["t"]
    for name, c in zip(columns, cols):
        header += [name] if c.shape[1] == 1 else [f"{name}{j + 1}" for j in range(c.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([f"{v:.17g}" for v in row])


def read_csv(path):
    """Load a ``t,value`` CSV written by :func:`write_csv` as a :class:`SampledProcess`.

    Files with several value columns return a 2-D ``values`` array.
    """
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    values = data[:, 1] if data.shape[1] == 2 else data[:, 1:]
    return SampledProcess(TimeGrid(data[:, 0]), values)

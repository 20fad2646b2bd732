"""
Finite-difference solver for the linear backward filtering SPDE.

The field ``v(t, x)`` is marched from its terminal data at ``T`` down to
``t0`` against a recorded observation path. Each step ``i+1 -> i`` is split:

1. observation update ``v <- v * exp(h(x) dY_i - h(x)^2 dt_i / 2)``, the exact
   solution of ``dv = h v * dY`` over one cell, which keeps ``v`` positive;
2. explicit diffusion step ``v <- v + dt_i (v_xx / 2 + f(x) v_x)`` with central
   differences.

The truncated domain uses zero-flux boundaries by default. The flow-map
variant, where the noise multiplies the gradient rather than the field, uses
linear extrapolation at the ends instead, since its terminal data ``u = z``
grows linearly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import model as cm
from .model import FlowModel, SystemModel
from .paths import SampledProcess, TimeGrid

__all__ = [
    "NumericalError",
    "SpatialGrid",
    "ScalarField",
    "SolverReport",
    "auto_half_width",
    "solve_backward",
    "evaluate_field",
    "solve_backward_flow_expectation",
    "write_field_csv",
]

CFL_WARN = 0.5


class NumericalError(RuntimeError):
    """A solver produced non-finite values or a non-positive normaliser."""

    def __init__(self, message, step=None, report=None):
        super().__init__(message)
        self.step = step
        self.report = report


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    M: int

    def __post_init__(self):
        if self.M < 5:
            raise ValueError("spatial grid needs M >= 5 nodes")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def around(cls, x0: float, half_width: float, M: int) -> "SpatialGrid":
        return cls(x0 - half_width, x0 + half_width, M)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.M - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.M)

    def contains_interior(self, x0: float, margin_nodes: int = 5) -> bool:
        pad = margin_nodes * self.dx
        return self.x_min + pad < x0 < self.x_max - pad


@dataclass(frozen=True, eq=False)
class ScalarField:
    """``values[k, j] = v(t_k, x_j)``."""

    sgrid: SpatialGrid
    tgrid: TimeGrid
    values: np.ndarray


@dataclass
class SolverReport:
    scheme: str
    dt_max: float
    dx: float
    cfl_ratio: float
    cfl_warning: bool
    boundary: str
    terminal: str
    order: str
    min_value: float
    mass_change: float
    notes: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "scheme": self.scheme,
            "dt_max": self.dt_max,
            "dx": self.dx,
            "cfl_ratio": self.cfl_ratio,
            "cfl_warning": self.cfl_warning,
            "boundary": self.boundary,
            "terminal": self.terminal,
            "order": self.order,
            "min_value": self.min_value,
            "mass_change": self.mass_change,
            "notes": list(self.notes),
        }


def auto_half_width(model: SystemModel) -> float:
    """Truncation radius ``8 sqrt(T) + sup|f| T`` for bounded drift."""
    norms = cm.sup_norms(model.f)
    if norms is cm.Unbounded:
        raise ValueError("automatic domain needs a bounded drift; give half_width explicitly")
    return 8.0 * math.sqrt(model.T) + norms[0] * model.T


def _pad(v, boundary):
    if boundary == "neumann":
        left, right = v[1], v[-2]
    elif boundary == "linear":
        left, right = 2 * v[0] - v[1], 2 * v[-1] - v[-2]
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    return left, right


def _derivatives(v, dx, boundary):
    left, right = _pad(v, boundary)
    up = np.empty_like(v)
    down = np.empty_like(v)
    up[:-1], up[-1] = v[1:], right
    down[1:], down[0] = v[:-1], left
    D1 = (up - down) / (2 * dx)
    D2 = (up - 2 * v + down) / (dx * dx)
    return D1, D2


def _trapezoid(v, dx):
    return dx * (v.sum() - 0.5 * (v[0] + v[-1]))


def _check_inputs(sgrid, tgrid, path):
    if not path.grid.same_as(tgrid):
        raise ValueError("observation path is not sampled on the solver time grid")


def solve_backward(model: SystemModel, sgrid: SpatialGrid, tgrid: TimeGrid, Y: SampledProcess,
                   terminal: str = "g", order: str = "observation_first",
                   boundary: str = "neumann"):
    """March ``-dv = [v_xx/2 + f v_x] dt + h v * dY`` from ``v(T) = g`` (or 1).

    Parameters
    ----------
    terminal : {"g", "one"} or array
        Terminal data: the model's test function, the constant 1, or explicit
        node values.
    order : {"observation_first", "diffusion_first"}
        Splitting order within a step.
    boundary : {"neumann", "linear"}

    Returns
    -------
    (ScalarField, SolverReport)

    Raises
    ------
    NumericalError
        On the first step producing non-finite values.
    """
    _check_inputs(sgrid, tgrid, Y)
    if isinstance(terminal, str):
        if terminal not in ("g", "one"):
            raise ValueError("terminal must be 'g', 'one' or an array")
    elif np.shape(terminal) != (sgrid.M,):
        raise ValueError("terminal values must have one entry per spatial node")
    if order not in ("observation_first", "diffusion_first"):
        raise ValueError(f"unknown splitting order {order!r}")
    x = sgrid.x
    dx = sgrid.dx
    dt = tgrid.dt
    dY = Y.increments
    fx = cm.eval(model.f, x)
    hx = cm.eval(model.h, x)
    h_zero = model.h.is_zero
    N = tgrid.N

    values = np.empty((N + 1, sgrid.M))
    if isinstance(terminal, str):
        values[N] = cm.eval(model.g, x) if terminal == "g" else 1.0
    else:
        values[N] = terminal
    v = values[N].copy()
    for i in range(N - 1, -1, -1):
        if order == "observation_first" and not h_zero:
            v = v * np.exp(hx * dY[i] - 0.5 * hx * hx * dt[i])
        D1, D2 = _derivatives(v, dx, boundary)
        v = v + dt[i] * (0.5 * D2 + fx * D1)
        if order == "diffusion_first" and not h_zero:
            v = v * np.exp(hx * dY[i] - 0.5 * hx * hx * dt[i])
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite field values at step {i}", step=i)
        values[i] = v

    ratio = float(dt.max() / dx**2)
    notes = list(model.assumption_violations)
    notes.append(f"truncated domain [{sgrid.x_min:.6g}, {sgrid.x_max:.6g}] with {boundary} boundaries")
    mass_T = _trapezoid(values[N], dx)
    report = SolverReport(
        scheme="split-exponential-explicit",
        dt_max=float(dt.max()),
        dx=float(dx),
        cfl_ratio=ratio,
        cfl_warning=ratio > CFL_WARN,
        boundary=boundary,
        terminal=terminal if isinstance(terminal, str) else "array",
        order=order,
        min_value=float(values.min()),
        mass_change=float(_trapezoid(values[0], dx) - mass_T),
        notes=notes,
    )
    return ScalarField(sgrid, tgrid, values), report


def evaluate_field(field: ScalarField, t_idx: int, x: float) -> float:
    """Linear interpolation of ``field`` at time index ``t_idx`` and point ``x``."""
    g = field.sgrid
    if not g.x_min <= x <= g.x_max:
        raise ValueError(f"x={x} outside [{g.x_min}, {g.x_max}]")
    pos = (x - g.x_min) / g.dx
    j = min(int(math.floor(pos)), g.M - 2)
    w = pos - j
    row = field.values[t_idx]
    if w == 0.0:
        return float(row[j])
    return float((1.0 - w) * row[j] + w * row[j + 1])


def solve_backward_flow_expectation(model: FlowModel, sgrid: SpatialGrid, tgrid: TimeGrid,
                                    w: SampledProcess, boundary: str = "linear") -> ScalarField:
    """Terminal map ``u(t, z) = Z(t, T, z)`` of a scalar flow from its backward SPDE.

    Solves ``-du = [sigma^2 u_zz / 2 + b u_z] dt + sigma u_z * dw`` with
    ``u(T, z) = z``. The noise term is an explicit increment
    ``sigma(z_j) D1 u_{i+1, j} dw_i`` using the gradient at the later time.
    """
    if model.d != 1 or model.d1 != 1:
        raise ValueError("the grid solver handles scalar flows only")
    _check_inputs(sgrid, tgrid, w)
    z = sgrid.x
    dx = sgrid.dx
    dt = tgrid.dt
    dw = w.increments
    zz = z[:, None]
    bz = model.drift(zz)[:, 0]
    sz = model.diffusion(zz)[:, 0, 0]
    N = tgrid.N
    values = np.empty((N + 1, sgrid.M))
    values[N] = z
    u = z.copy()
    for i in range(N - 1, -1, -1):
        D1, D2 = _derivatives(u, dx, boundary)
        u = u + dt[i] * (0.5 * sz * sz * D2 + bz * D1) + sz * D1 * dw[i]
        if not np.all(np.isfinite(u)):
            raise NumericalError(f"non-finite field values at step {i}", step=i)
        values[i] = u
    return ScalarField(sgrid, tgrid, values)


def write_field_csv(path, field: ScalarField):
    """Field dump with header ``t,x,value``, one row per node."""
    t = field.tgrid.t
    x = field.sgrid.x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "value"])
        for k in range(t.size):
            tk = f"{t[k]:.17g}"
            for j in range(x.size):
                w.writerow([tk, f"{x[j]:.17g}", f"{field.values[k, j]:.17g}"])

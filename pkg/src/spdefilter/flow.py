"""
Euler-Maruyama simulation of the filtering system and of stochastic flows.

A flow ``Z(s, t, z)`` is the solution started from ``z`` at time ``s``. All
start points of a lattice are advanced by one shared noise path, so pathwise
identities between different starts can be checked exactly. Derivatives in
the start point are central differences over the lattice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as cm
from .model import FlowModel, SystemModel
from .paths import (
    BrownianPath,
    SampledProcess,
    TimeGrid,
    backward_ito_integral,
    sample_brownian,
    write_csv,
)

__all__ = [
    "W1_STREAM",
    "W2_STREAM",
    "simulate_system",
    "FlowMap",
    "FlowDerivatives",
    "simulate_flow",
    "check_evolution_identity",
    "flow_derivatives",
    "stencil_lattice",
    "terminal_maps",
    "lemma1_residual",
    "write_flow_csv",
]

W1_STREAM = 1
W2_STREAM = 2


def simulate_system(model: SystemModel, grid: TimeGrid, seed: int | None = None, noise=None):
    """Simulate the signal ``X`` and observation ``Y`` on ``grid``.

    Returns ``(X, Y, w1, w2)``. The noises are drawn from streams of ``seed``
    unless an explicit pair ``noise=(w1, w2)`` is given.
    """
    if noise is None:
        if seed is None:
            raise ValueError("give either a seed or the noise paths")
        w1 = sample_brownian(grid, seed, W1_STREAM)
        w2 = sample_brownian(grid, seed, W2_STREAM)
    else:
        w1, w2 = noise
        if not (w1.grid.same_as(grid) and w2.grid.same_as(grid)):
            raise ValueError("noise paths are sampled on a different grid")
    dt = grid.dt
    dw1, dw2 = w1.increments, w2.increments
    X = np.empty(grid.N + 1)
    Y = np.empty(grid.N + 1)
    X[0], Y[0] = model.x0, model.y0
    f, h = model.f, model.h
    for i in range(grid.N):
        x = X[i]
        X[i + 1] = x + cm.eval(f, x) * dt[i] + dw1[i]
        Y[i + 1] = Y[i] + cm.eval(h, x) * dt[i] + dw2[i]
    return SampledProcess(grid, X), SampledProcess(grid, Y), w1, w2


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Trajectories ``Z(s, t_k, z)`` for every lattice start ``z``.

    ``Z`` has shape ``lattice_shape + (N+1, d)``; entries before ``s_idx`` are
    NaN. ``spacing`` is the lattice step per axis when the lattice is a tensor
    grid (``None`` otherwise).
    """

    model: FlowModel
    grid: TimeGrid
    noise: BrownianPath
    s_idx: int
    z0_lattice: np.ndarray
    Z: np.ndarray
    lattice_shape: tuple
    spacing: tuple | None = None

    def terminal(self):
        """``u(s, z) = Z(s, T, z)`` over the lattice."""
        return self.Z[..., -1, :]


@dataclass(frozen=True, eq=False)
class FlowDerivatives:
    """Central-difference gradient and Hessian of the flow in its start point.

    ``Zz[..., k, i, j] = dZ^i / dz^j`` and ``Zzz[..., k, i, j, l]`` at interior
    lattice points and every time index ``k``.
    """

    Zz: np.ndarray
    Zzz: np.ndarray
    spacing: tuple


def _noise_increments(noise: BrownianPath, d1: int) -> np.ndarray:
    inc = noise.increments
    if inc.ndim == 1:
        inc = inc[:, None]
    if inc.shape[1] != d1:
        raise ValueError(f"model needs {d1} noise components, path has {inc.shape[1]}")
    return inc


def _euler_step(model: FlowModel, z, dt, dw):
    return z + model.drift(z) * dt + np.einsum("...ij,...j->...i", model.diffusion(z), dw)


def _as_lattice(model, z0_lattice):
    z = np.asarray(z0_lattice, dtype=float)
    if z.size == 0:
        raise ValueError("lattice of start points is empty")
    if model.d == 1 and (z.ndim == 1 or z.shape[-1] != 1):
        z = z[..., None]
    if z.shape[-1] != model.d:
        raise ValueError(f"start points must have {model.d} coordinates")
    return z


def simulate_flow(model: FlowModel, grid: TimeGrid, s_idx: int, z0_lattice, noise: BrownianPath,
                  spacing=None) -> FlowMap:
    """Advance every lattice start from ``t[s_idx]`` to ``T`` under common noise.

    ``z0_lattice`` has shape ``lattice_shape + (d,)`` (for ``d == 1`` the last
    axis may be omitted).
    """
    if not noise.grid.same_as(grid):
        raise ValueError("noise path is sampled on a different grid")
    if not 0 <= s_idx <= grid.N:
        raise ValueError("start index outside the grid")
    z = _as_lattice(model, z0_lattice)
    inc = _noise_increments(noise, model.d1)
    dt = grid.dt
    shape = z.shape[:-1]
    Z = np.full(shape + (grid.N + 1, model.d), np.nan)
    Z[..., s_idx, :] = z
    cur = z
    for k in range(s_idx, grid.N):
        cur = _euler_step(model, cur, dt[k], inc[k])
        Z[..., k + 1, :] = cur
    if spacing is not None:
        spacing = tuple(np.broadcast_to(np.asarray(spacing, dtype=float), (model.d,)))
    return FlowMap(model, grid, noise, s_idx, z, Z, shape, spacing)


def check_evolution_identity(model: FlowModel, grid: TimeGrid, z0, s_idx: int,
                             noise: BrownianPath) -> float:
    """Max-norm of ``Z(0, T, z) - Z(s, T, Z(0, s, z))`` over the start points."""
    direct = simulate_flow(model, grid, 0, z0, noise)
    mid = direct.Z[..., s_idx, :]
    restarted = simulate_flow(model, grid, s_idx, mid, noise)
    return float(np.max(np.abs(direct.terminal() - restarted.terminal())))


def flow_derivatives(flowmap: FlowMap, spacing=None) -> FlowDerivatives:
    """Gradient and Hessian of ``Z`` in the start point by central differences.

    The lattice must be a tensor grid with one axis per state coordinate and
    uniform ``spacing`` along each axis. Results cover interior points only.
    """
    d = flowmap.model.d
    spacing = flowmap.spacing if spacing is None else spacing
    if spacing is None:
        raise ValueError("lattice spacing is required")
    h = np.broadcast_to(np.asarray(spacing, dtype=float), (d,))
    shape = flowmap.lattice_shape
    if len(shape) != d:
        raise ValueError("derivatives need a tensor lattice with one axis per coordinate")
    if any(n < 3 for n in shape):
        raise ValueError("need at least 3 lattice points per axis")
    Z = flowmap.Z
    inner = tuple(slice(1, -1) for _ in range(d))

    def shifted(offsets):
        idx = tuple(slice(1 + o, n - 1 + o) for o, n in zip(offsets, shape))
        return Z[idx]

    center = Z[inner]
    Zz = np.empty(center.shape + (d,))
    Zzz = np.empty(center.shape + (d, d))
    for j in range(d):
        e = [0] * d
        e[j] = 1
        plus, minus = shifted(e), shifted([-x for x in e])
        Zz[..., j] = (plus - minus) / (2 * h[j])
        Zzz[..., j, j] = (plus - 2 * center + minus) / h[j] ** 2
        for l in range(j + 1, d):
            off = [0] * d
            pp, pm, mp, mm = (list(off) for _ in range(4))
            pp[j], pp[l] = 1, 1
            pm[j], pm[l] = 1, -1
            mp[j], mp[l] = -1, 1
            mm[j], mm[l] = -1, -1
            mixed = (shifted(pp) - shifted(pm) - shifted(mp) + shifted(mm)) / (4 * h[j] * h[l])
            Zzz[..., j, l] = mixed
            Zzz[..., l, j] = mixed
    return FlowDerivatives(Zz, Zzz, tuple(h))


def stencil_lattice(z, spacing, d=None):
    """3^d tensor lattice centred on ``z`` with the given spacing."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = z.size if d is None else d
    h = np.broadcast_to(np.asarray(spacing, dtype=float), (d,))
    axes = [z[i] + h[i] * np.array([-1.0, 0.0, 1.0]) for i in range(d)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def terminal_maps(model: FlowModel, grid: TimeGrid, z0_lattice, noise: BrownianPath) -> np.ndarray:
    """``Z(t_k, T, z)`` for every start index ``k`` and lattice point.

    Returns shape ``(N+1,) + lattice_shape + (d,)``. All starts share the
    noise; trajectories started at ``t_k`` are advanced together with the
    earlier ones.
    """
    z = _as_lattice(model, z0_lattice)
    inc = _noise_increments(noise, model.d1)
    dt = grid.dt
    N = grid.N
    cur = np.broadcast_to(z, (N + 1,) + z.shape).copy()
    for k in range(N):
        # starts 0..k are live at step k
        cur[: k + 1] = _euler_step(model, cur[: k + 1], dt[k], inc[k])
    return cur


def lemma1_residual(model: FlowModel, grid: TimeGrid, z, noise: BrownianPath, t_idx: int = 0,
                    spacing: float = 1e-2) -> float:
    """Residual of the integral form of the backward flow equation at ``z``.

    Compares ``Z(t, T, z) - z`` with

        backward int_t^T Z_z(s, T, z) sigma(z) dW_s
        + int_t^T [Z_z(s, T, z) b(z) + Tr(Z_zz(s, T, z) a(z))] ds,

    where coefficients are frozen at ``z``, the stochastic integral is the
    backward (right-point) sum on the grid and the time integral uses right
    endpoints too. Returns the max-norm of the difference over components.
    """
    d = model.d
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lattice = stencil_lattice(z, spacing, d)
    maps = terminal_maps(model, grid, lattice, noise)  # (N+1, 3,...,3, d)
    maps = np.moveaxis(maps, 0, d)  # lattice axes first, time next
    fm = FlowMap(model, grid, noise, 0, lattice, maps, lattice.shape[:-1], (spacing,) * d)
    der = flow_derivatives(fm)
    centre = (0,) * d
    Zz = der.Zz[centre]  # (N+1, d, d)
    Zzz = der.Zzz[centre]  # (N+1, d, d, d)
    Zc = fm.Z[(1,) * d]  # (N+1, d) = Z(t_k, T, z)

    b = model.drift(z)
    sig = model.diffusion(z)
    a = model.a(z)
    lhs = Zc[t_idx] - z
    if t_idx == grid.N:
        # empty interval: both sides vanish
        return float(np.max(np.abs(lhs)))

    sub = TimeGrid(grid.t[t_idx:])
    inc = _noise_increments(noise, model.d1)[t_idx:]
    integrand = np.einsum("kij,jm->kim", Zz[t_idx:], sig)  # (n+1, d, d1)
    rhs = np.zeros(d)
    for i in range(d):
        for m in range(model.d1):
            xi = SampledProcess(sub, integrand[:, i, m])
            W = BrownianPath.from_increments(sub, inc[:, m])
            rhs[i] += backward_ito_integral(xi, W)
    drift_rate = np.einsum("kij,j->ki", Zz[t_idx:], b) + np.einsum("kijl,jl->ki", Zzz[t_idx:], a)
    rhs += np.sum(drift_rate[1:] * sub.dt[:, None], axis=0)
    return float(np.max(np.abs(lhs - rhs)))


def write_flow_csv(path, flowmap: FlowMap):
    """Flow lattice dump: columns ``lattice_index,t,Z1..Zd``."""
    import csv

    Z = flowmap.Z.reshape(-1, flowmap.grid.N + 1, flowmap.model.d)
    t = flowmap.grid.t
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lattice_index", "t"] + [f"Z{j + 1}" for j in range(flowmap.model.d)])
        for li, traj in enumerate(Z):
            for k in range(flowmap.s_idx, t.size):
                w.writerow([li, f"{t[k]:.17g}"] + [f"{v:.17g}" for v in traj[k]])


def write_trajectory_csv(path, X: SampledProcess, Y: SampledProcess):
    """Trajectory dump with columns ``t,X,Y``."""
    write_csv(path, [X, Y], columns=["X", "Y"])

"""
Filter estimates of ``E[g(X_T) | Y_s, s <= T]``.

Three routes to the same number:

* :func:`filter_estimate_spde` - ratio of two backward-SPDE solves, terminal
  data ``g`` and ``1``, both read at ``(0, x0)``;
* :func:`particle_ks_estimate` - Bayes-formula Monte Carlo: signal paths are
  simulated independently of the recorded observations and weighted by the
  likelihood ratio ``rho^{-1}``;
* :func:`kalman_bucy_oracle` - the closed-form linear-Gaussian filter.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import model as cm
from .model import CoefficientFn, SystemModel
from .paths import SampledProcess, TimeGrid, standard_normals
from .spde import NumericalError, SpatialGrid, evaluate_field, solve_backward

__all__ = [
    "PARTICLE_STREAM",
    "ESS_WARN",
    "FilterEstimate",
    "ParticleEnsemble",
    "girsanov_log_weight",
    "simulate_ensemble",
    "particle_ks_estimate",
    "kalman_bucy_oracle",
    "filter_estimate_spde",
]

PARTICLE_STREAM = 3
ESS_WARN = 10.0


@dataclass
class FilterEstimate:
    """An estimate of ``m_T`` and where it came from.

    ``method`` is one of ``BackwardSPDE``, ``ParticleKS``, ``KalmanBucy``.
    """

    m_T: float
    numerator: float
    denominator: float
    method: str
    ess: float | None = None
    n: int | None = None
    stderr: float | None = None
    seeds: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    fields: tuple = field(default=(), repr=False, compare=False)

    def to_record(self) -> dict:
        return {
            "method": self.method,
            "m_T": self.m_T,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "ess": self.ess,
            "n": self.n,
            "stderr": self.stderr,
            "seeds": dict(self.seeds),
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Terminal values ``g(X_T)`` and log-weights ``log rho^{-1}`` of a particle cloud."""

    g_terminal: np.ndarray
    log_weights: np.ndarray
    Y: SampledProcess
    X_terminal: np.ndarray | None = None

    @property
    def n_particles(self) -> int:
        return self.g_terminal.size

    def normalized_weights(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self) -> float:
        w = self.normalized_weights()
        return float(1.0 / np.sum(w * w))


def girsanov_log_weight(X: SampledProcess, driver: SampledProcess, h: CoefficientFn,
                        direction: str = "RhoInverse") -> float:
    """Log of the likelihood ratio along one signal path.

    ``RhoInverse``: ``int h(X) dw~ - 1/2 int h(X)^2 dt`` with ``driver = w~``
    (the observation path minus its start).
    ``Rho``: ``-int h(X) dw2 - 1/2 int h(X)^2 dt`` with ``driver = w2``.
    Both integrals use left endpoints.
    """
    if not X.grid.same_as(driver.grid):
        raise ValueError("signal and driver are sampled on different grids")
    hx = cm.eval(h, X.values[:-1])
    stoch = float(np.sum(hx * driver.increments))
    quad = 0.5 * float(np.sum(hx * hx * X.grid.dt))
    if direction == "RhoInverse":
        return stoch - quad
    if direction == "Rho":
        return -stoch - quad
    raise ValueError(f"unknown direction {direction!r}")


def simulate_ensemble(model: SystemModel, Y: SampledProcess, n_particles: int, seed: int,
                      stream_id: int = PARTICLE_STREAM) -> ParticleEnsemble:
    """Signal particles under the reference measure, weighted against ``Y``.

    Particle ``p`` at step ``i`` uses normal draw ``i * n_particles + p`` of
    the stream, so the cloud is reproducible independently of batching.
    """
    grid = Y.grid
    dt = grid.dt
    dY = Y.increments
    n = int(n_particles)
    X = np.full(n, float(model.x0))
    logw = np.zeros(n)
    f, h = model.f, model.h
    h_zero = h.is_zero
    for i in range(grid.N):
        if not h_zero:
            hx = cm.eval(h, X)
            logw += hx * dY[i] - 0.5 * dt[i] * hx * hx
        dw = standard_normals(seed, stream_id, n, start=i * n)
        X += cm.eval(f, X) * dt[i] + math.sqrt(dt[i]) * dw
    return ParticleEnsemble(cm.eval(model.g, X), logw, Y, X)


def particle_ks_estimate(model: SystemModel, Y: SampledProcess, grid: TimeGrid, n_particles: int,
                         seed: int, stream_id: int = PARTICLE_STREAM) -> FilterEstimate:
    """Weighted Monte Carlo estimate of ``m_T`` from the Bayes ratio.

    The standard error is the delta-method value for a self-normalised
    estimator. Fewer than ``ESS_WARN`` effective particles triggers a warning.
    """
    if not Y.grid.same_as(grid):
        raise ValueError("observation path is not sampled on the given grid")
    if n_particles < 100:
        raise ValueError("need at least 100 particles")
    ens = simulate_ensemble(model, Y, n_particles, seed, stream_id)
    gT = ens.g_terminal
    lmax = float(ens.log_weights.max())
    # weights on the shifted scale exp(logw - max); identical sums when g == 1
    scaled = np.exp(ens.log_weights - lmax)
    num = float(np.sum(scaled * gT)) / gT.size
    den = float(np.sum(scaled)) / gT.size
    m = num / den
    w = scaled / np.sum(scaled)
    se = float(math.sqrt(np.sum(w * w * (gT - m) ** 2)))
    ess = float(1.0 / np.sum(w * w))
    diag = {"ess_warning": ess < ESS_WARN, "weight_scale_log": lmax}
    if ess < ESS_WARN:
        warnings.warn(f"effective sample size {ess:.1f} below {ESS_WARN}", RuntimeWarning)
    return FilterEstimate(m, num, den, "ParticleKS", ess=ess, n=int(n_particles), stderr=se,
                          seeds={"seed": int(seed), "stream_id": int(stream_id)}, diagnostics=diag)


def kalman_bucy_oracle(a: float, c: float, x0: float, Y: SampledProcess, grid: TimeGrid,
                       P0: float = 0.0) -> FilterEstimate:
    """Linear-Gaussian filter for ``f(x) = a x``, ``h(x) = c x``, ``g(x) = x``.

    Euler on the Riccati equation ``P' = 2aP + 1 - c^2 P^2`` and on
    ``dm = a m dt + P c (dY - c m dt)``.
    """
    if P0 < 0:
        raise ValueError("P0 must be non-negative")
    if not Y.grid.same_as(grid):
        raise ValueError("observation path is not sampled on the given grid")
    dt = grid.dt
    dY = Y.increments
    m, P = float(x0), float(P0)
    for i in range(grid.N):
        m_next = m + a * m * dt[i] + P * c * (dY[i] - c * m * dt[i])
        P = P + (2 * a * P + 1 - c * c * P * P) * dt[i]
        m = m_next
    return FilterEstimate(m, m, 1.0, "KalmanBucy",
                          diagnostics={"P_T": P, "assumption_violation": "linear coefficients"})


def filter_estimate_spde(model: SystemModel, sgrid: SpatialGrid, tgrid: TimeGrid,
                         Y: SampledProcess, **solver_options) -> FilterEstimate:
    """``m_T = v^g(0, x0) / v^1(0, x0)`` from two solves on the same observations.

    Raises
    ------
    NumericalError
        If the normaliser is not positive at ``(0, x0)``.
    """
    if not sgrid.contains_interior(model.x0):
        raise ValueError("x0 must lie at least 5 nodes inside the spatial grid")
    vg, rep_g = solve_backward(model, sgrid, tgrid, Y, terminal="g", **solver_options)
    v1, rep_1 = solve_backward(model, sgrid, tgrid, Y, terminal="one", **solver_options)
    num = evaluate_field(vg, 0, model.x0)
    den = evaluate_field(v1, 0, model.x0)
    diag = {"numerator_report": rep_g.to_record(), "denominator_report": rep_1.to_record(),
            "g_smoothness": model.g_smoothness}
    if not den > 0:
        raise NumericalError(
            f"normaliser v1(0, x0) = {den!r} is not positive "
            f"(cfl ratio {rep_1.cfl_ratio:.3g}, mass change {rep_1.mass_change:.3g})",
            report=diag,
        )
    return FilterEstimate(num / den, num, den, "BackwardSPDE", diagnostics=diag,
                          fields=(vg, v1))

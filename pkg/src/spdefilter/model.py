"""
Coefficient catalog and model containers.

Every coefficient used by the simulators and solvers is a :class:`CoefficientFn`
drawn from a small closed catalog. Each kind knows its exact first, second and
third derivatives and, when bounded, sup-norm bounds for all of them. The
argument may be pre-scaled, ``fn(scale * x + shift)``, which is the only
composition mechanism needed for scalar coefficients.

Multidimensional flow coefficients (drift vector ``b`` and diffusion matrix
``sigma``) are sums of :class:`Term` objects, each a catalog function of one
state coordinate optionally multiplied by another coordinate. That covers the
two-dimensional signal/likelihood system ``(X, rho^{-1})`` where the diffusion
entry is ``h(x) * rho``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

__all__ = [
    "KINDS",
    "UNBOUNDED_KINDS",
    "CoefficientFn",
    "Unbounded",
    "constant",
    "linear",
    "quadratic",
    "tanh",
    "sine",
    "gaussian_bump",
    "eval",
    "d1",
    "d2",
    "d3",
    "sup_norms",
    "SystemModel",
    "Term",
    "FlowModel",
]

# parameter names per kind, in positional order
KINDS: dict[str, tuple[str, ...]] = {
    "constant": ("c",),
    "linear": ("a",),
    "quadratic": ("a",),
    "tanh": ("a", "b"),
    "sine": ("a", "k"),
    "gaussian_bump": ("a", "c", "s"),
}
UNBOUNDED_KINDS = frozenset({"linear", "quadratic"})

_ALIASES = {
    "Constant": "constant",
    "Linear": "linear",
    "Quadratic": "quadratic",
    "Tanh": "tanh",
    "SineBounded": "sine",
    "sine_bounded": "sine",
    "GaussianBump": "gaussian_bump",
}


class _UnboundedMarker:
    """Returned by :func:`sup_norms` for coefficients with no finite bound."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Unbounded"

    def __bool__(self):
        return False


Unbounded = _UnboundedMarker()


@dataclass(frozen=True)
class CoefficientFn:
    """A catalog coefficient ``fn(scale * x + shift)``.

    Parameters
    ----------
    kind : str
        One of ``constant``, ``linear``, ``quadratic``, ``tanh``, ``sine``,
        ``gaussian_bump``. The CamelCase names ``Constant``, ``Tanh``,
        ``SineBounded`` etc. are accepted too.
    params : tuple of float
        Kind parameters in the order listed in :data:`KINDS`.
    scale, shift : float
        Affine pre-scaling of the argument.
    """

    kind: str
    params: tuple[float, ...]
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if len(params) != len(KINDS[kind]):
            raise ValueError(
                f"{kind} takes parameters {KINDS[kind]}, got {len(params)} values"
            )
        if kind == "gaussian_bump" and params[2] <= 0:
            raise ValueError("gaussian_bump width must be positive")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "shift", float(self.shift))

    @property
    def unbounded(self) -> bool:
        return self.kind in UNBOUNDED_KINDS and any(p != 0 for p in self.params)

    @property
    def is_zero(self) -> bool:
        if self.kind in ("tanh", "sine"):
            return self.params[0] == 0 or self.params[1] == 0
        return self.params[0] == 0

    def __call__(self, x):
        return eval(self, x)

    def to_record(self) -> dict:
        rec = {"kind": self.kind, "params": dict(zip(KINDS[self.kind], self.params))}
        if self.scale != 1.0:
            rec["scale"] = self.scale
        if self.shift != 0.0:
            rec["shift"] = self.shift
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "CoefficientFn":
        kind = _ALIASES.get(rec["kind"], rec["kind"])
        if kind not in KINDS:
            raise ValueError(f"unknown coefficient kind {rec['kind']!r}")
        params = rec.get("params", {})
        if isinstance(params, Mapping):
            missing = [p for p in KINDS[kind] if p not in params]
            extra = [p for p in params if p not in KINDS[kind]]
            if missing or extra:
                raise ValueError(
                    f"{kind} expects params {KINDS[kind]}; missing {missing}, unexpected {extra}"
                )
            values = tuple(params[p] for p in KINDS[kind])
        else:
            values = tuple(params)
        return cls(kind, values, rec.get("scale", 1.0), rec.get("shift", 0.0))


def constant(c):
    return CoefficientFn("constant", (c,))


def linear(a):
    return CoefficientFn("linear", (a,))


def quadratic(a=1.0):
    return CoefficientFn("quadratic", (a,))


def tanh(a, b):
    return CoefficientFn("tanh", (a, b))


def sine(a, k):
    return CoefficientFn("sine", (a, k))


def gaussian_bump(a, c, s):
    return CoefficientFn("gaussian_bump", (a, c, s))


def _raw(kind, p, u, order):
    # derivative of the unscaled kind of the given order at u
    if kind == "constant":
        return np.full_like(u, p[0]) if order == 0 else np.zeros_like(u)
    if kind == "linear":
        if order == 0:
            return p[0] * u
        return np.full_like(u, p[0]) if order == 1 else np.zeros_like(u)
    if kind == "quadratic":
        if order == 0:
            return p[0] * u * u
        if order == 1:
            return 2.0 * p[0] * u
        return np.full_like(u, 2.0 * p[0]) if order == 2 else np.zeros_like(u)
    if kind == "tanh":
        a, b = p
        t = np.tanh(b * u)
        s2 = 1.0 - t * t
        if order == 0:
            return a * t
        if order == 1:
            return a * b * s2
        if order == 2:
            return -2.0 * a * b * b * t * s2
        return -2.0 * a * b**3 * s2 * (1.0 - 3.0 * t * t)
    if kind == "sine":
        a, k = p
        ku = k * u
        return a * k**order * (np.sin, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v))[order](ku)
    if kind == "gaussian_bump":
        a, c, s = p
        v = (u - c) / s
        e = a * np.exp(-0.5 * v * v)
        if order == 0:
            return e
        if order == 1:
            return -v * e / s
        if order == 2:
            return (v * v - 1.0) * e / s**2
        return (3.0 * v - v**3) * e / s**3
    raise ValueError(kind)


def _apply(fn: CoefficientFn, x, order):
    arr = np.asarray(x, dtype=float)
    u = fn.scale * arr + fn.shift if (fn.scale != 1.0 or fn.shift != 0.0) else arr
    out = _raw(fn.kind, fn.params, u, order)
    if order and fn.scale != 1.0:
        out = out * fn.scale**order
    if np.ndim(x) == 0:
        return float(out)
    return out


def eval(fn: CoefficientFn, x):
    """Exact value of ``fn`` at ``x`` (scalar or array)."""
    return _apply(fn, x, 0)


def d1(fn: CoefficientFn, x):
    """Exact first derivative."""
    return _apply(fn, x, 1)


def d2(fn: CoefficientFn, x):
    """Exact second derivative."""
    return _apply(fn, x, 2)


def d3(fn: CoefficientFn, x):
    return _apply(fn, x, 3)


def sup_norms(fn: CoefficientFn):
    """Sup norms of ``fn`` and its first three derivatives.

    Returns a 4-tuple of floats, or :data:`Unbounded` for linear and quadratic
    coefficients with a nonzero slope.
    """
    if fn.unbounded:
        return Unbounded
    p = fn.params
    if fn.kind in UNBOUNDED_KINDS:
        raw = (0.0, 0.0, 0.0, 0.0)
    elif fn.kind == "constant":
        raw = (abs(p[0]), 0.0, 0.0, 0.0)
    elif fn.kind == "tanh":
        a, b = abs(p[0]), abs(p[1])
        raw = (a, a * b, 4.0 * a * b * b / (3.0 * math.sqrt(3.0)), 2.0 * a * b**3)
    elif fn.kind == "sine":
        a, k = abs(p[0]), abs(p[1])
        raw = (a, a * k, a * k * k, a * k**3)
    else:
        a, s = abs(p[0]), p[2]
        # |v^3 - 3v| e^{-v^2/2} peaks at v^2 = 3 - sqrt(6)
        v = math.sqrt(3.0 - math.sqrt(6.0))
        third = v * (3.0 - v * v) * math.exp(-0.5 * v * v)
        raw = (a, a * math.exp(-0.5) / s, a / s**2, a * third / s**3)
    sc = abs(fn.scale)
    return tuple(r * sc**n for n, r in enumerate(raw))


@dataclass(frozen=True)
class SystemModel:
    """Signal/observation pair ``dX = f(X)dt + dw1``, ``dY = h(X)dt + dw2``.

    ``g`` is the test function whose conditional mean is estimated at ``T``.
    Unbounded coefficients are refused unless ``allow_unbounded`` is set (used
    by the linear-Gaussian oracle case); :attr:`assumption_violations` lists
    what was admitted.
    """

    f: CoefficientFn
    h: CoefficientFn
    g: CoefficientFn
    x0: float = 0.0
    y0: float = 0.0
    T: float = 1.0
    allow_unbounded: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.allow_unbounded and self.assumption_violations:
            raise ValueError(
                "unbounded coefficients require allow_unbounded=True: "
                + "; ".join(self.assumption_violations)
            )

    @property
    def assumption_violations(self) -> list[str]:
        return [
            f"assumption_violation: {name}={fn.kind} is unbounded"
            for name, fn in (("f", self.f), ("h", self.h), ("g", self.g))
            if fn.unbounded
        ]

    @property
    def g_smoothness(self) -> str:
        # reported in metadata; the ratio formula itself needs only bounded g
        return "C2_unbounded" if self.g.unbounded else "C3_b"

    def to_record(self) -> dict:
        return {
            "f": self.f.to_record(),
            "h": self.h.to_record(),
            "g": self.g.to_record(),
            "x0": float(self.x0),
            "y0": float(self.y0),
            "T": float(self.T),
            "allow_unbounded": bool(self.allow_unbounded),
        }


@dataclass(frozen=True)
class Term:
    """``fn(z[arg])``, times ``z[factor]`` when ``factor`` is given."""

    fn: CoefficientFn
    arg: int = 0
    factor: int | None = None

    def __call__(self, z):
        val = eval(self.fn, z[..., self.arg])
        if self.factor is not None:
            val = val * z[..., self.factor]
        return val

    @property
    def unbounded(self):
        return self.fn.unbounded or self.factor is not None


def _component(spec) -> tuple[Term, ...]:
    if spec is None or spec == 0:
        return ()
    if isinstance(spec, Term):
        return (spec,)
    if isinstance(spec, CoefficientFn):
        return (Term(spec),)
    return tuple(s if isinstance(s, Term) else Term(s) for s in spec)


def _eval_component(terms, z):
    out = np.zeros(z.shape[:-1])
    for t in terms:
        out = out + t(z)
    return out


@dataclass(frozen=True)
class FlowModel:
    """Generic flow ``dZ = b(Z)dt + sigma(Z)dw`` in ``R^d`` driven by ``d1`` noises.

    ``b`` is a length-``d`` sequence of components and ``sigma`` a ``d x d1``
    nested sequence; each component is a sum of :class:`Term` (a bare
    :class:`CoefficientFn` means a function of ``z[0]``; ``None`` means zero).
    No nondegeneracy of ``sigma`` is required.
    """

    d: int
    d1: int
    b: tuple
    sigma: tuple
    T: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.d1 < 1:
            raise ValueError("d and d1 must be >= 1")
        b = tuple(_component(c) for c in self.b)
        sigma = tuple(tuple(_component(c) for c in row) for row in self.sigma)
        if len(b) != self.d or len(sigma) != self.d or any(len(r) != self.d1 for r in sigma):
            raise ValueError("b must have d components and sigma must be d x d1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def scalar(cls, drift: CoefficientFn, diffusion: CoefficientFn | None = None, T=1.0):
        """One-dimensional flow ``dZ = drift(Z)dt + diffusion(Z)dw``."""
        diffusion = constant(1.0) if diffusion is None else diffusion
        return cls(1, 1, (drift,), ((diffusion,),), T)

    @classmethod
    def signal_likelihood(cls, f: CoefficientFn, h: CoefficientFn, T=1.0):
        """The pair ``(X, rho^{-1})``: ``dX = f dt + dw1``, ``d rho^{-1} = h(X) rho^{-1} dw~``."""
        one = constant(1.0)
        return cls(2, 2, (f, None), ((one, None), (None, Term(h, 0, 1))), T)

    @property
    def unbounded(self):
        terms = [t for c in self.b for t in c] + [t for r in self.sigma for c in r for t in c]
        return any(t.unbounded for t in terms)

    def drift(self, z):
        """``b(z)`` for ``z`` of shape ``(..., d)``."""
        z = np.asarray(z, dtype=float)
        return np.stack([_eval_component(c, z) for c in self.b], axis=-1)

    def diffusion(self, z):
        """``sigma(z)`` of shape ``(..., d, d1)``."""
        z = np.asarray(z, dtype=float)
        rows = [np.stack([_eval_component(c, z) for c in row], axis=-1) for row in self.sigma]
        return np.stack(rows, axis=-2)

    def a(self, z):
        """Half the diffusion covariance, ``sigma sigma^T / 2``."""
        s = self.diffusion(z)
        return 0.5 * np.einsum("...ij,...kj->...ik", s, s)

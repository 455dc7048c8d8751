"""Pointwise and differential tensor operations over a metric field.

Index conventions: lower indices are covariant, g^{ij} is the pointwise 2x2
inverse, and all spatial derivatives use the shared 4th-order stencils from
grid, so discrete identities degrade uniformly.  The flat metric passes
through the same code path as any other metric.

Sign convention for the orbit pairing: with (div S)_j = nabla_i S^i_j lowered
back to a one-form, the duality reads

    sigma_gamma(L_X gamma, S) = -2 * integral (div S)(X) dvol(gamma),

and is exact (to roundoff) for constant-coefficient metrics because the
central stencils are skew-adjoint under the midpoint quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import PositivityLoss
from .grid import (
    GridSpec,
    MetricField,
    ScalarField,
    SymTensorField,
    VectorField,
    integrate,
    stencil_derivative,
)


@dataclass(frozen=True, eq=False)
class OneFormField:
    """Covariant components (w1, w2) of a 1-form field."""

    spec: GridSpec
    w1: ScalarField
    w2: ScalarField

    @classmethod
    def from_arrays(cls, spec, w1, w2) -> "OneFormField":
        return cls(spec, ScalarField(spec, w1), ScalarField(spec, w2))

    def as_stack(self) -> np.ndarray:
        return np.stack([self.w1.values, self.w2.values])

    def __sub__(self, other: "OneFormField") -> "OneFormField":
        return OneFormField(self.spec, self.w1 - other.w1, self.w2 - other.w2)


@dataclass(frozen=True, eq=False)
class ChristoffelField:
    """Levi-Civita symbols of a metric; six fields c^k_ij, symmetric in (i, j)."""

    spec: GridSpec
    c111: ScalarField
    c112: ScalarField
    c122: ScalarField
    c211: ScalarField
    c212: ScalarField
    c222: ScalarField

    def as_array(self) -> np.ndarray:
        """Dense [k][i][j] layout, shape (2, 2, 2, n, n)."""
        u = self
        row1 = [[u.c111.values, u.c112.values], [u.c112.values, u.c122.values]]
        row2 = [[u.c211.values, u.c212.values], [u.c212.values, u.c222.values]]
        return np.array([row1, row2])


def _require_spd(g: MetricField) -> None:
    a = g.g11.values
    det = _det(g.as_stack())
    if not (np.all(a > 0.0) and np.all(det > 0.0)):
        raise PositivityLoss("metric is not positive-definite at every cell")


def _det(stack: np.ndarray) -> np.ndarray:
    return stack[0] * stack[2] - stack[1] ** 2


def _inv(stack: np.ndarray) -> np.ndarray:
    det = _det(stack)
    return np.stack([stack[2] / det, -stack[1] / det, stack[0] / det])


@lru_cache(maxsize=32)
def _inv_stack(g: MetricField) -> np.ndarray:
    return _inv(g.as_stack())


@lru_cache(maxsize=32)
def _vol_values(g: MetricField) -> np.ndarray:
    return np.sqrt(_det(g.as_stack()))


@lru_cache(maxsize=32)
def _metric_gradients(g: MetricField) -> np.ndarray:
    """dg[a][b][c] = D_a g_bc, shape (2, 2, 2, n, n)."""
    h = g.spec.h
    gs = g.as_stack()
    comp = [[gs[0], gs[1]], [gs[1], gs[2]]]
    out = np.empty((2, 2, 2) + gs[0].shape)
    for a in range(2):
        for b in range(2):
            for c in range(b, 2):
                d = stencil_derivative(comp[b][c], a + 1, h)
                out[a, b, c] = d
                out[a, c, b] = d
    return out


@lru_cache(maxsize=32)
def _chris_array(g: MetricField) -> np.ndarray:
    """Gamma[k][i][j], shape (2, 2, 2, n, n)."""
    inv = _inv_stack(g)
    ginv = [[inv[0], inv[1]], [inv[1], inv[2]]]
    dg = _metric_gradients(g)
    out = np.zeros_like(dg)
    for k in range(2):
        for i in range(2):
            for j in range(i, 2):
                acc = np.zeros_like(dg[0, 0, 0])
                for l in range(2):
                    acc += ginv[k][l] * (dg[i, l, j] + dg[j, l, i] - dg[l, i, j])
                out[k, i, j] = 0.5 * acc
                out[k, j, i] = out[k, i, j]
    return out


def metric_inverse(g: MetricField) -> SymTensorField:
    """Pointwise 2x2 inverse of the metric."""
    _require_spd(g)
    return SymTensorField.from_stack(g.spec, _inv_stack(g))


def volume_density(g: MetricField) -> ScalarField:
    """sqrt(det g) at every cell."""
    _require_spd(g)
    return ScalarField(g.spec, _vol_values(g))


def christoffels(g: MetricField) -> ChristoffelField:
    """Levi-Civita symbols c^k_ij = (1/2) g^{kl} (D_i g_lj + D_j g_li - D_l g_ij)."""
    _require_spd(g)
    c = _chris_array(g)
    f = lambda a: ScalarField(g.spec, a)
    return ChristoffelField(
        g.spec, f(c[0, 0, 0]), f(c[0, 0, 1]), f(c[0, 1, 1]), f(c[1, 0, 0]), f(c[1, 0, 1]), f(c[1, 1, 1])
    )


def lie_derivative_metric(g: MetricField, x: VectorField) -> SymTensorField:
    """(L_X g)_ij = X^k D_k g_ij + g_kj D_i X^k + g_ik D_j X^k."""
    return SymTensorField.from_stack(g.spec, _lie_stack(g, x.as_stack()))


def _lie_stack(g: MetricField, xs: np.ndarray) -> np.ndarray:
    h = g.spec.h
    gs = g.as_stack()
    comp = [[gs[0], gs[1]], [gs[1], gs[2]]]
    dg = _metric_gradients(g)
    dx = np.empty((2, 2) + xs[0].shape)  # dx[i][k] = D_i X^k
    for i in range(2):
        for k in range(2):
            dx[i, k] = stencil_derivative(xs[k], i + 1, h)
    out = np.empty((3,) + xs[0].shape)
    for idx, (i, j) in enumerate(((0, 0), (0, 1), (1, 1))):
        acc = xs[0] * dg[0, i, j] + xs[1] * dg[1, i, j]
        for k in range(2):
            acc += comp[k][j] * dx[i, k] + comp[i][k] * dx[j, k]
        out[idx] = acc
    return out


def divergence(g: MetricField, s: SymTensorField) -> OneFormField:
    """Covariant divergence of s, returned with the free index lowered.

    Both indices of s are raised with g^{-1}, nabla_i is applied with the
    Levi-Civita symbols of g, and the result is lowered back with g.
    """
    return OneFormField.from_arrays(g.spec, *_divergence_stack(g, s.as_stack()))


def _divergence_stack(g: MetricField, ss: np.ndarray) -> np.ndarray:
    h = g.spec.h
    inv = _inv_stack(g)
    ginv = [[inv[0], inv[1]], [inv[1], inv[2]]]
    gs = g.as_stack()
    glow = [[gs[0], gs[1]], [gs[1], gs[2]]]
    slow = [[ss[0], ss[1]], [ss[1], ss[2]]]
    chris = _chris_array(g)

    # raise both indices: T^{ij} = g^{ia} g^{jb} s_ab
    t = [[None, None], [None, None]]
    for i in range(2):
        for j in range(i, 2):
            acc = np.zeros_like(ss[0])
            for a in range(2):
                for b in range(2):
                    acc = acc + ginv[i][a] * ginv[j][b] * slow[a][b]
            t[i][j] = acc
            t[j][i] = acc

    # nabla_i T^{ij} = D_i T^{ij} + c^i_ia T^{aj} + c^j_ia T^{ia}
    div_up = []
    for j in range(2):
        acc = np.zeros_like(ss[0])
        for i in range(2):
            acc = acc + stencil_derivative(t[i][j], i + 1, h)
            for a in range(2):
                acc = acc + chris[i, i, a] * t[a][j] + chris[j, i, a] * t[i][a]
        div_up.append(acc)

    return np.stack(
        [glow[0][0] * div_up[0] + glow[0][1] * div_up[1], glow[1][0] * div_up[0] + glow[1][1] * div_up[1]]
    )


def sharp(g: MetricField, w: OneFormField) -> VectorField:
    """Raise the index of a 1-form: X^i = g^{ij} w_j."""
    _require_spd(g)
    inv = _inv_stack(g)
    ws = w.as_stack()
    return VectorField.from_arrays(g.spec, inv[0] * ws[0] + inv[1] * ws[1], inv[1] * ws[0] + inv[2] * ws[1])


def flat(g: MetricField, x: VectorField) -> OneFormField:
    """Lower the index of a vector field: w_i = g_ij X^j."""
    _require_spd(g)
    gs = g.as_stack()
    xs = x.as_stack()
    return OneFormField.from_arrays(g.spec, gs[0] * xs[0] + gs[1] * xs[1], gs[1] * xs[0] + gs[2] * xs[1])


def trace_pairing(g: MetricField, s: SymTensorField, t: SymTensorField) -> ScalarField:
    """Pointwise tr(g^{-1} s g^{-1} t)."""
    _require_spd(g)
    return ScalarField(g.spec, _trace_pairing_values(_inv_stack(g), s.as_stack(), t.as_stack()))


def _trace_pairing_values(inv: np.ndarray, ss: np.ndarray, ts: np.ndarray) -> np.ndarray:
    a = _sym_product(inv, ss)  # g^{-1} s, a general 2x2 field
    b = _sym_product(inv, ts)
    # term grouping keeps the pairing bitwise symmetric in (s, t)
    return (a[0] * b[0] + a[3] * b[3]) + (a[1] * b[2] + a[2] * b[1])


def _sym_product(p: np.ndarray, q: np.ndarray) -> tuple:
    """Product of two symmetric 2x2 stacks as (m11, m12, m21, m22)."""
    return (
        p[0] * q[0] + p[1] * q[1],
        p[0] * q[1] + p[1] * q[2],
        p[1] * q[0] + p[2] * q[1],
        p[1] * q[1] + p[2] * q[2],
    )


def form_vector_pairing(w: OneFormField, x: VectorField) -> ScalarField:
    """Pointwise w_j X^j."""
    return ScalarField(w.spec, w.w1.values * x.v1.values + w.w2.values * x.v2.values)


def vector_inner(g: MetricField, x: VectorField, y: VectorField) -> float:
    """Weighted L2 inner product of vector fields: integral g_ij X^i Y^j dvol."""
    gs = g.as_stack()
    xs, ys = x.as_stack(), y.as_stack()
    dens = gs[0] * xs[0] * ys[0] + gs[1] * (xs[0] * ys[1] + xs[1] * ys[0]) + gs[2] * xs[1] * ys[1]
    return integrate(ScalarField(g.spec, dens * _vol_values(g)))

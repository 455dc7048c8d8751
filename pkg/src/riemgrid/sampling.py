"""Reproducible random fields from a counter-based 64-bit generator.

The generator is SplitMix64 driven directly by (seed, counter): draw k of a
stream is mix64((seed + (k+1) * 0x9E3779B97F4A7C15) mod 2^64), mapped to a
double in [0,1) via the top 53 bits.  It is stateless, so any draw can be
reproduced from its index alone, in any language.

Random fields are band-limited: real Fourier modes with wavenumbers
0 <= p <= max_mode, |q| <= max_mode (skipping the constant), with cosine and
sine coefficients drawn uniformly from [-1, 1] and the result rescaled to a
requested max-abs amplitude.
"""

from __future__ import annotations

import numpy as np

from .grid import GridSpec, ScalarField, SymTensorField, VectorField, stencil_derivative

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def unit_draw(seed: int, counter: int) -> float:
    """The counter-th double in [0,1) of the stream identified by seed."""
    z = _mix64((seed + (counter + 1) * _GAMMA) & _MASK)
    return (z >> 11) * 2.0 ** -53


class DrawStream:
    """Sequential view over the counter-based stream."""

    def __init__(self, seed: int, start: int = 0):
        self.seed = int(seed) & _MASK
        self.counter = start

    def next_unit(self) -> float:
        u = unit_draw(self.seed, self.counter)
        self.counter += 1
        return u

    def next_symmetric(self) -> float:
        return 2.0 * self.next_unit() - 1.0


def _mode_list(max_mode: int) -> list[tuple[int, int]]:
    modes = []
    for p in range(0, max_mode + 1):
        for q in range(-max_mode, max_mode + 1):
            if p == 0 and q <= 0:
                continue  # keep one representative per +/- pair, drop the constant
            modes.append((p, q))
    return modes


def band_limited_scalar(
    spec: GridSpec,
    stream: DrawStream,
    max_mode: int = 4,
    amplitude: float = 1.0,
    period_cells: int | None = None,
) -> ScalarField:
    """Seeded smooth periodic scalar, rescaled so max|f| = amplitude.

    With period_cells set, the field is synthesized on one block of that many
    cells and tiled, making it bitwise periodic under the block translation.
    """
    n = spec.n
    block = n if period_cells is None else period_cells
    if n % block != 0:
        raise ValueError("period_cells must divide the resolution")
    c = (np.arange(block) + 0.5) / block
    x, y = np.meshgrid(c, c, indexing="ij")
    f = np.zeros((block, block))
    for p, q in _mode_list(max_mode):
        a = stream.next_symmetric()
        b = stream.next_symmetric()
        phase = 2.0 * np.pi * (p * x + q * y)
        f += a * np.cos(phase) + b * np.sin(phase)
    scale = np.max(np.abs(f))
    if scale > 0.0:
        f *= amplitude / scale
    if block != n:
        f = np.tile(f, (n // block, n // block))
    return ScalarField(spec, f)


def random_vector_field(
    spec: GridSpec,
    seed: int,
    max_mode: int = 4,
    amplitude: float = 1.0,
    zero_mean: bool = True,
    period_cells: int | None = None,
) -> VectorField:
    stream = DrawStream(seed)
    comps = []
    for _ in range(2):
        f = band_limited_scalar(spec, stream, max_mode, amplitude, period_cells)
        v = f.values
        if zero_mean:
            v = v - np.mean(v)
        comps.append(v)
    return VectorField.from_arrays(spec, comps[0], comps[1])


def random_sym_tensor(
    spec: GridSpec, seed: int, max_mode: int = 4, amplitude: float = 1.0
) -> SymTensorField:
    stream = DrawStream(seed)
    comps = [band_limited_scalar(spec, stream, max_mode, amplitude) for _ in range(3)]
    return SymTensorField(spec, comps[0], comps[1], comps[2])


def random_metric_near_identity(spec: GridSpec, seed: int, amplitude: float, max_mode: int = 4):
    """Identity metric plus a seeded symmetric perturbation of given max-abs size."""
    from .grid import MetricField, constant_field

    pert = random_sym_tensor(spec, seed, max_mode, amplitude)
    return MetricField(constant_field(spec, np.eye(2)) + pert)


def divergence_free_tensor(
    spec: GridSpec, seed: int, max_mode: int = 4, amplitude: float = 1.0
) -> SymTensorField:
    """Seeded symmetric tensor with vanishing flat-metric divergence.

    Built as the rotated second-derivative pattern of a seeded potential,
    (D_yy psi, -D_xy psi, D_xx psi), plus a seeded constant part: both pieces
    are annihilated by the stencil divergence on the flat torus because the
    shift operators commute.
    """
    stream = DrawStream(seed)
    psi = band_limited_scalar(spec, stream, max_mode, 1.0)
    h = spec.h
    dx = stencil_derivative(psi.values, 1, h)
    dy = stencil_derivative(psi.values, 2, h)
    s11 = stencil_derivative(dy, 2, h)
    s12 = -stencil_derivative(dx, 2, h)
    s22 = stencil_derivative(dx, 1, h)
    c11 = stream.next_symmetric()
    c12 = stream.next_symmetric()
    c22 = stream.next_symmetric()
    scale = max(np.max(np.abs(s11)), np.max(np.abs(s12)), np.max(np.abs(s22)), 1e-300)
    s11 = s11 / scale + c11
    s12 = s12 / scale + c12
    s22 = s22 / scale + c22
    rescale = amplitude / max(np.max(np.abs(s11)), np.max(np.abs(s12)), np.max(np.abs(s22)))
    return SymTensorField.from_arrays(spec, s11 * rescale, s12 * rescale, s22 * rescale)

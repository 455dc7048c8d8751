"""The weak L2 (Ebin) Riemannian structure on the discretized metric space.

The inner product is sigma_g(S, T) = integral tr(g^{-1} S g^{-1} T) dvol(g).
Because each cell contributes independently, its geodesic equation is a
pointwise second-order ODE in the 3-dimensional SPD fiber.  Taking the first
variation of the energy (1/2) integral tr(g^{-1} g' g^{-1} g') sqrt(det g) dt
per cell gives, with A = g^{-1} g',

    g'' = g' A  +  (1/4) tr(A A) g  -  (1/2) tr(A) g',

which is what ebin_exp integrates.  Sanity anchor: for conformal motion
g(t) = c(t) I the equation reduces to c'' = c'^2 / (2 c), whose solution
c(t) = (1 + k t)^2 gives closed-form endpoints used by the tests.

ebin_log inverts the endpoint map by shooting: damped Gauss-Newton on the
endpoint mismatch, with per-cell 3x3 Jacobians obtained by finite differencing
the integrator (the pointwise ODE makes the Jacobian block-diagonal).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import _inv_stack, _trace_pairing_values, _vol_values
from .errors import NoConvergence, PositivityLoss, ToleranceNotMet
from .grid import MetricField, SymTensorField

_MAX_STEPS = 10_000
_SAMPLE_CAP = 256


def ebin_inner(g: MetricField, s: SymTensorField, t: SymTensorField) -> float:
    """sigma_g(S, T): integral of tr(g^{-1} S g^{-1} T) against dvol(g)."""
    vals = _trace_pairing_values(_inv_stack(g), s.as_stack(), t.as_stack()) * _vol_values(g)
    return float(g.spec.h ** 2 * np.sum(vals))


def ebin_norm(g: MetricField, s: SymTensorField) -> float:
    return float(np.sqrt(max(ebin_inner(g, s, s), 0.0)))


def relative_distance(base: MetricField, other: MetricField) -> float:
    """Linear-chart sigma distance |other - base| / |base|, measured at base."""
    diff = other.g - base.g
    return ebin_norm(base, diff) / ebin_norm(base, base.g)


@dataclass(frozen=True)
class GeodesicSample:
    t: float
    point: MetricField
    velocity: SymTensorField


@dataclass(frozen=True)
class GeodesicPath:
    """Sampled solution of the geodesic ODE from (base, velocity)."""

    base: MetricField
    velocity: SymTensorField
    samples: tuple
    steps: int
    max_error_estimate: float
    speed_drift: float

    @property
    def endpoint(self) -> MetricField:
        return self.samples[-1].point

    @property
    def endpoint_velocity(self) -> SymTensorField:
        return self.samples[-1].velocity


def _rhs(g: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise geodesic acceleration; g, v have shape (..., 3, n, n)."""
    g0, g1, g2 = g[..., 0, :, :], g[..., 1, :, :], g[..., 2, :, :]
    v0, v1, v2 = v[..., 0, :, :], v[..., 1, :, :], v[..., 2, :, :]
    det = g0 * g2 - g1 * g1
    i0, i1, i2 = g2 / det, -g1 / det, g0 / det
    a11 = i0 * v0 + i1 * v1
    a12 = i0 * v1 + i1 * v2
    a21 = i1 * v0 + i2 * v1
    a22 = i1 * v1 + i2 * v2
    tr_a = a11 + a22
    tr_aa = a11 * a11 + 2.0 * a12 * a21 + a22 * a22
    w0 = v0 * a11 + v1 * a21
    w1 = v0 * a12 + v1 * a22
    w2 = v1 * a12 + v2 * a22
    acc = np.empty_like(v)
    acc[..., 0, :, :] = w0 + 0.25 * tr_aa * g0 - 0.5 * tr_a * v0
    acc[..., 1, :, :] = w1 + 0.25 * tr_aa * g1 - 0.5 * tr_a * v1
    acc[..., 2, :, :] = w2 + 0.25 * tr_aa * g2 - 0.5 * tr_a * v2
    return v, acc


def _rk4_step(g, v, dt):
    k1g, k1v = _rhs(g, v)
    k2g, k2v = _rhs(g + 0.5 * dt * k1g, v + 0.5 * dt * k1v)
    k3g, k3v = _rhs(g + 0.5 * dt * k2g, v + 0.5 * dt * k2v)
    k4g, k4v = _rhs(g + dt * k3g, v + dt * k3v)
    return (
        g + (dt / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g),
        v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )


def _is_spd(g: np.ndarray) -> bool:
    det = g[..., 0, :, :] * g[..., 2, :, :] - g[..., 1, :, :] ** 2
    return bool(np.all(g[..., 0, :, :] > 0.0) and np.all(det > 0.0))


def _speed(spec_h2: float, g: np.ndarray, v: np.ndarray) -> float:
    det = g[0] * g[2] - g[1] ** 2
    inv = np.stack([g[2] / det, -g[1] / det, g[0] / det])
    return float(spec_h2 * np.sum(_trace_pairing_values(inv, v, v) * np.sqrt(det)))


def ebin_exp(g: MetricField, s: SymTensorField, t_end: float = 1.0, tol: float = 1e-8) -> GeodesicPath:
    """Geodesic from g with initial velocity s, integrated to time t_end.

    Adaptive RK4 with step doubling; every accepted point must stay in the SPD
    cone (violations raise PositivityLoss, nothing is projected), and the
    sigma-speed along the returned path is constant within tol.
    """
    spec = g.spec
    h2 = spec.h ** 2
    gbuf = g.as_stack().astype(np.float64)
    vbuf = s.as_stack().astype(np.float64)

    records = [(0.0, gbuf, vbuf)]
    if t_end == 0.0 or not np.any(vbuf):
        records.append((t_end, gbuf, vbuf))
        return _package(g, s, records, 0, 0.0, 0.0)

    step_tol = tol * 1e-2
    scale = max(float(np.max(np.abs(gbuf))), float(np.max(np.abs(vbuf))), 1.0)
    speed0 = _speed(h2, gbuf, vbuf)
    drift = 0.0
    max_err = 0.0
    t = 0.0
    dt = t_end / 16.0
    dt_min = abs(t_end) * 1e-12
    steps = 0
    keep_every, since_kept = 1, 0

    while t < t_end:
        dt = min(dt, t_end - t)
        steps += 1
        if steps > _MAX_STEPS:
            raise ToleranceNotMet(f"step budget {_MAX_STEPS} exhausted at t={t:.3g}")
        with np.errstate(all="ignore"):
            g_full, v_full = _rk4_step(gbuf, vbuf, dt)
            g_half, v_half = _rk4_step(gbuf, vbuf, 0.5 * dt)
            g_two, v_two = _rk4_step(g_half, v_half, 0.5 * dt)
        err_raw = max(float(np.max(np.abs(g_two - g_full))), float(np.max(np.abs(v_two - v_full))))
        err = err_raw / (15.0 * scale)
        if not np.isfinite(err):
            err = np.inf
        if err <= step_tol:
            if not _is_spd(g_two):
                raise PositivityLoss("geodesic left the SPD cone; rescale the initial velocity")
            gbuf, vbuf = g_two, v_two
            t += dt
            max_err = max(max_err, err_raw / 15.0)
            sp = _speed(h2, gbuf, vbuf)
            drift = max(drift, abs(sp - speed0) / speed0)
            since_kept += 1
            if since_kept >= keep_every or t >= t_end:
                records.append((t, gbuf, vbuf))
                since_kept = 0
                if len(records) > _SAMPLE_CAP:
                    records = records[0:1] + records[1:-1:2] + records[-1:]
                    keep_every *= 2
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * (step_tol / err) ** 0.2))
        dt *= factor
        if dt < dt_min:
            if not _is_spd(gbuf):
                raise PositivityLoss("geodesic left the SPD cone; rescale the initial velocity")
            raise ToleranceNotMet("step size underflow in geodesic integration")

    if drift > tol:
        raise ToleranceNotMet(f"sigma-speed drift {drift:.3e} exceeds tol {tol:.3e}")
    return _package(g, s, records, steps, max_err, drift)


def _package(g, s, records, steps, max_err, drift) -> GeodesicPath:
    spec = g.spec
    samples = tuple(
        GeodesicSample(t, MetricField.from_stack(spec, gb), SymTensorField.from_stack(spec, vb))
        for t, gb, vb in records
    )
    return GeodesicPath(g, s, samples, steps, max_err, drift)


def _endpoints_fixed(g0: np.ndarray, v0: np.ndarray, t_end: float, n_steps: int) -> np.ndarray:
    """Batched fixed-step RK4 endpoint map; shape (..., 3, n, n) in and out."""
    g, v = g0, v0
    dt = t_end / n_steps
    with np.errstate(all="ignore"):
        for _ in range(n_steps):
            g, v = _rk4_step(g, v, dt)
    return g


def _endpoint_adaptive(g0: np.ndarray, v0: np.ndarray, t_end: float, step_tol: float) -> np.ndarray:
    g, v = g0, v0
    t, dt = 0.0, t_end / 16.0
    steps = 0
    scale = max(float(np.max(np.abs(g0))), float(np.max(np.abs(v0))), 1.0)
    while t < t_end:
        dt = min(dt, t_end - t)
        steps += 1
        if steps > _MAX_STEPS:
            raise ToleranceNotMet("step budget exhausted")
        with np.errstate(all="ignore"):
            g_full, v_full = _rk4_step(g, v, dt)
            g_half, v_half = _rk4_step(g, v, 0.5 * dt)
            g_two, v_two = _rk4_step(g_half, v_half, 0.5 * dt)
        err = max(float(np.max(np.abs(g_two - g_full))), float(np.max(np.abs(v_two - v_full)))) / (15.0 * scale)
        if not np.isfinite(err):
            err = np.inf
        if err <= step_tol:
            g, v, t = g_two, v_two, t + dt
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * (step_tol / err) ** 0.2))
        dt *= factor
        if dt < abs(t_end) * 1e-12:
            raise ToleranceNotMet("step size underflow")
    return g


def ebin_log(
    g_base: MetricField,
    g_target: MetricField,
    tol: float = 1e-8,
    max_iter: int = 30,
    fast_steps: int = 32,
) -> SymTensorField:
    """Initial velocity S with exp(g_base, S, 1).endpoint = g_target within tol.

    Shooting: Gauss-Newton on the endpoint mismatch, Jacobian-vector blocks by
    central finite differences of the integrator, per-cell 3x3 solves (the ODE
    is pointwise, so the Jacobian is block-diagonal).  The search iterates on a
    fixed-step endpoint map and is then polished against the adaptive
    integrator, so the returned S meets the contract of ebin_exp itself.
    Raises NoConvergence when g_target is outside the local chart.
    """
    spec = g_base.spec
    g0 = g_base.as_stack().astype(np.float64)
    target = g_target.as_stack().astype(np.float64)
    norm_target = max(ebin_norm(g_base, g_target.g), 1e-300)

    def signorm(stack: np.ndarray) -> float:
        if not np.all(np.isfinite(stack)):
            return np.inf
        return ebin_norm(g_base, SymTensorField.from_stack(spec, stack))

    s = target - g0
    if signorm(s) == 0.0:
        return SymTensorField.from_stack(spec, s)

    eps = 1e-6 * max(1.0, float(np.max(np.abs(g0))))
    n2 = spec.n * spec.n
    basis = np.zeros((3, 3, 1, 1))
    for k in range(3):
        basis[k, k, 0, 0] = 1.0

    def fast_endpoint_and_jac(s_now: np.ndarray):
        batch = np.concatenate(
            [s_now[None], s_now[None] + eps * basis, s_now[None] - eps * basis], axis=0
        )
        ends = _endpoints_fixed(np.broadcast_to(g0, batch.shape).copy(), batch, 1.0, fast_steps)
        jac = (ends[1:4] - ends[4:7]) / (2.0 * eps)  # [k, c, :, :] = d end_c / d s_k
        return ends[0], np.transpose(jac.reshape(3, 3, n2), (2, 1, 0))  # (cell, c, k)

    res = signorm(_endpoints_fixed(g0.copy(), s, 1.0, fast_steps) - target)
    for _ in range(max_iter):
        end, jac = fast_endpoint_and_jac(s)
        r = (end - target).reshape(3, n2).T  # (n2, 3)
        try:
            delta = np.linalg.solve(jac, -r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise NoConvergence("singular shooting Jacobian; target outside the local chart")
        delta = delta.T.reshape(3, spec.n, spec.n)
        lam, improved = 1.0, False
        for _ in range(10):
            trial = s + lam * delta
            res_try = signorm(_endpoints_fixed(g0.copy(), trial, 1.0, fast_steps) - target)
            if res_try < res:
                s, res, improved = trial, res_try, True
                break
            lam *= 0.5
        if not improved:
            break
        if res <= 0.25 * tol * norm_target:
            break

    # polish against the adaptive integrator, whose endpoint defines the contract
    step_tol = min(1e-10, tol * 1e-3)
    polish_budget = min(6, max_iter)
    for k in range(polish_budget + 1):
        end = _endpoint_adaptive(g0, s, 1.0, step_tol)
        r_stack = end - target
        res_true = signorm(r_stack)
        if res_true <= tol * norm_target:
            return SymTensorField.from_stack(spec, s)
        if k == polish_budget:
            break
        _, jac = fast_endpoint_and_jac(s)
        r = r_stack.reshape(3, n2).T
        try:
            delta = np.linalg.solve(jac, -r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise NoConvergence("singular shooting Jacobian; target outside the local chart")
        s = s + delta.T.reshape(3, spec.n, spec.n)

    raise NoConvergence(f"shooting stalled at relative mismatch {res_true:.3e} (tol {tol:.3e})")

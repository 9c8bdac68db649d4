"""Explicit solvers for the Wright-Fisher SPDE and its coupled tracer system.

The single equation
    du = alpha*Lap(u) dt + 2*theta*beta*u(1-u) dt + sqrt(4*gamma*u(1-u)) dW
and the coupled pair, where u and ell share the noise that comes from voting
between labeled 1s and 0s:
    du   = alpha*Lap(u)   + 2*theta*beta*u(1-u)   dt
           + sqrt(4*gamma*ell(1-u)) dW0 + sqrt(4*gamma*(u-ell)(1-u)) dW1
    dell = alpha*Lap(ell) + 2*theta*beta*ell(1-u) dt
           + sqrt(4*gamma*ell(1-u)) dW0 + sqrt(4*gamma*ell(u-ell)) dW2
are stepped with forward Euler on a periodic mesh; space-time white noise is
approximated by independent N(0,1) draws per (cell, step) scaled by
1/sqrt(dx*dt).  Square-root arguments are clipped at 0 before the root and
fields are clamped back to 0 <= ell <= u <= 1 after each step; clamp counts
are reported so refinement studies can confirm they vanish.

Also here: the lattice heat kernel (the transition density of the simple
random walk on (1/L)Z with jump rate 2 L^2, scaled by L), test functions with
analytic derivatives, martingale-problem residual diagnostics, and the
Green-representation decomposition check for finite-n forward runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._rng import generator
from .forward import Configuration, density_profiles
from .scaling import derived_ratios

__all__ = [
    "StabilityError",
    "Mesh",
    "SPDEField",
    "step_wf_spde",
    "step_coupled_spde",
    "simulate_wf",
    "simulate_coupled",
    "heat_kernel",
    "heat_kernel_offsets",
    "heat_kernel_torus",
    "semigroup_apply",
    "TestFunction",
    "cosine_test_function",
    "martingale_residual",
    "coupled_martingale_residual",
    "green_representation_check",
]


class StabilityError(ValueError):
    """Explicit step size violates dt <= dx^2 / (4 alpha)."""


@dataclass(frozen=True)
class Mesh:
    """Periodic 1-d mesh: `width` cells of size dx, explicit step dt."""

    dx: float
    dt: float
    width: int

    def __post_init__(self):
        if self.dx <= 0 or self.dt <= 0:
            raise ValueError("dx and dt must be positive")
        if self.width < 4:
            raise ValueError("need at least 4 cells")

    def check_stability(self, alpha):
        if self.dt > self.dx**2 / (4 * alpha) * (1 + 1e-12):
            raise StabilityError(
                f"dt={self.dt} exceeds dx^2/(4 alpha)={self.dx ** 2 / (4 * alpha)}"
            )

    @property
    def x(self):
        return np.arange(self.width) * self.dx

    @property
    def period(self):
        return self.width * self.dx

    def inner(self, f, g):
        """<f, g> = dx * sum over cells (trailing axis)."""
        return self.dx * np.sum(f * g, axis=-1)


@dataclass
class SPDEField:
    """u and ell values per cell (trailing axis; leading axes are replicas)."""

    u: np.ndarray
    ell: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.ell = np.asarray(self.ell, dtype=float)
        if self.u.shape != self.ell.shape:
            raise ValueError("u and ell must share a shape")


def _lap(f, dx):
    return (np.roll(f, 1, axis=-1) + np.roll(f, -1, axis=-1) - 2 * f) / dx**2


def _step_u(u, mesh, alpha, rate, gamma, rng):
    drift = alpha * _lap(u, mesh.dx) + 2 * rate * u * (1 - u)
    new = u + mesh.dt * drift
    if gamma > 0:
        amp = np.sqrt(4 * gamma * np.clip(u * (1 - u), 0.0, None))
        new = new + math.sqrt(mesh.dt / mesh.dx) * amp * rng.normal(size=u.shape)
    clamped = int(np.count_nonzero((new < 0) | (new > 1)))
    return np.clip(new, 0.0, 1.0), clamped


def _step_pair(u, ell, mesh, alpha, rate, gamma, rng):
    scale = math.sqrt(mesh.dt / mesh.dx)
    du = mesh.dt * (alpha * _lap(u, mesh.dx) + 2 * rate * u * (1 - u))
    dl = mesh.dt * (alpha * _lap(ell, mesh.dx) + 2 * rate * ell * (1 - u))
    if gamma > 0:
        shared = np.sqrt(4 * gamma * np.clip(ell * (1 - u), 0.0, None))
        w0 = rng.normal(size=u.shape)
        du = du + scale * (
            shared * w0
            + np.sqrt(4 * gamma * np.clip((u - ell) * (1 - u), 0.0, None))
            * rng.normal(size=u.shape)
        )
        dl = dl + scale * (
            shared * w0
            + np.sqrt(4 * gamma * np.clip(ell * (u - ell), 0.0, None))
            * rng.normal(size=u.shape)
        )
    new_u = u + du
    new_l = ell + dl
    clamped = int(
        np.count_nonzero((new_u < 0) | (new_u > 1) | (new_l < 0) | (new_l > new_u))
    )
    new_u = np.clip(new_u, 0.0, 1.0)
    new_l = np.clip(new_l, 0.0, new_u)
    return new_u, new_l, clamped


def step_wf_spde(field, mesh, limits, theta, rng):
    """One explicit step of the single Wright-Fisher SPDE.

    Returns (new field, number of clamped entries)."""
    mesh.check_stability(limits.alpha)
    u, clamped = _step_u(
        field.u, mesh, limits.alpha, theta * limits.beta, limits.gamma, generator(rng)
    )
    return SPDEField(u=u, ell=field.ell, time=field.time + mesh.dt), clamped


def step_coupled_spde(field, mesh, limits, theta, rng):
    """One explicit step of the coupled (u, ell) system; W0 is shared between
    the two equations, W1 and W2 are their private noises.

    Returns (new field, number of clamped entries)."""
    mesh.check_stability(limits.alpha)
    u, ell, clamped = _step_pair(
        field.u, field.ell, mesh, limits.alpha, theta * limits.beta, limits.gamma,
        generator(rng),
    )
    return SPDEField(u=u, ell=ell, time=field.time + mesh.dt), clamped


def _run(stepper, n_steps, observer):
    clamp_total = 0
    for k in range(n_steps):
        clamp_total += stepper(k)
        if observer is not None:
            observer(k)
    return clamp_total


def simulate_wf(u0, mesh, limits, theta, T, seed, reps=1, observer=None):
    """Evolve `reps` independent copies of the single equation to time T.

    u0 is a (width,) profile (broadcast over replicas) or a (reps, width)
    array.  `observer(t, u)` is called after every step.  Returns
    (U, clamp_count) with U of shape (reps, width).
    """
    mesh.check_stability(limits.alpha)
    rng = generator(seed)
    u = np.broadcast_to(np.asarray(u0, float), (reps, mesh.width)).copy()
    rate = theta * limits.beta
    n_steps = int(round(T / mesh.dt))
    clamp_total = 0
    for k in range(n_steps):
        u, c = _step_u(u, mesh, limits.alpha, rate, limits.gamma, rng)
        clamp_total += c
        if observer is not None:
            observer((k + 1) * mesh.dt, u)
    return u, clamp_total


def simulate_coupled(u0, ell0, mesh, limits, theta, T, seed, reps=1, observer=None):
    """Coupled analogue of simulate_wf; returns (U, ELL, clamp_count)."""
    mesh.check_stability(limits.alpha)
    rng = generator(seed)
    u = np.broadcast_to(np.asarray(u0, float), (reps, mesh.width)).copy()
    ell = np.broadcast_to(np.asarray(ell0, float), (reps, mesh.width)).copy()
    if np.any(ell > u) or np.any(u > 1) or np.any(ell < 0):
        raise ValueError("need 0 <= ell0 <= u0 <= 1")
    rate = theta * limits.beta
    n_steps = int(round(T / mesh.dt))
    clamp_total = 0
    for k in range(n_steps):
        u, ell, c = _step_pair(u, ell, mesh, limits.alpha, rate, limits.gamma, rng)
        clamp_total += c
        if observer is not None:
            observer((k + 1) * mesh.dt, u, ell)
    return u, ell, clamp_total


# ---------------------------------------------------------------------------
# lattice heat kernel


def _offset_cutoff(lam):
    """Offset beyond which the Poissonized-walk mass is far below 1e-16."""
    if lam <= 0:
        return 1
    return int(lam + 14 * math.sqrt(lam) + 45)


def heat_kernel(L, t, w):
    """p_t(w) = L * P(X_t = w | X_0 = 0) for the simple random walk on
    (1/L)Z with jump rate 2 L^2; w may be an array of lattice points.

    Evaluated through the exponentially scaled modified Bessel function,
    which is the closed form of the Poisson-jump-count sum; relative error
    is at machine level (far below 1e-12).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    w = np.asarray(w, dtype=float)
    k = np.rint(L * w)
    if not np.allclose(L * w, k, atol=1e-9):
        raise ValueError("w must lie on the lattice (1/L)Z")
    if t == 0:
        return np.where(k == 0, float(L), 0.0)
    lam = 2.0 * L * L * t
    return L * special.ive(np.abs(k), lam)


def heat_kernel_offsets(L, t, kmax=None):
    """Kernel values at integer offsets 0..kmax (w = k/L); kmax defaults to
    the cutoff beyond which the remaining mass is negligible."""
    lam = 2.0 * L * L * t
    if kmax is None:
        kmax = _offset_cutoff(lam)
    k = np.arange(kmax + 1)
    if t == 0:
        out = np.zeros(kmax + 1)
        out[0] = L
        return out
    return L * special.ive(k, lam)


def heat_kernel_torus(L, t, W):
    """Kernel folded onto a ring of W demes: q[j] = sum_m p_t((j + m W)/L)."""
    row = heat_kernel_offsets(L, t)
    kmax = len(row) - 1
    folded = np.zeros(W)
    ks = np.arange(-kmax, kmax + 1)
    vals = row[np.abs(ks)]
    np.add.at(folded, np.mod(ks, W), vals)
    return folded


def semigroup_apply(L, t, values):
    """P_t f on a ring of W demes: (1/L) sum_w q_t(w) f(z + w)."""
    values = np.asarray(values, dtype=float)
    W = len(values)
    q = heat_kernel_torus(L, t, W)
    out = np.empty(W)
    for z in range(W):
        out[z] = np.sum(q * np.roll(values, -z)) / L
    return out


# ---------------------------------------------------------------------------
# test functions and martingale residuals


@dataclass
class TestFunction:
    """Smooth test function with analytic time and space derivatives.

    phi, dt_phi, lap_phi are callables (s, x) -> values; x may be an array.
    """

    phi: callable
    dt_phi: callable
    lap_phi: callable


def cosine_test_function(amplitude, mode, period, phase=0.0, ramp=0.0):
    """(1 + ramp*s) * A * (1 + cos(2 pi mode (x - phase)/period)) / 2.

    Periodic and C-infinity on the ring, nonnegative, with closed-form
    derivatives; `ramp` adds a linear time factor to exercise the
    d(phi)/ds term of the residual.
    """
    kx = 2 * math.pi * mode / period

    def space(x):
        return amplitude * 0.5 * (1 + np.cos(kx * (x - phase)))

    def lap_space(x):
        return -amplitude * 0.5 * kx * kx * np.cos(kx * (x - phase))

    return TestFunction(
        phi=lambda s, x: (1 + ramp * s) * space(x),
        dt_phi=lambda s, x: ramp * space(x),
        lap_phi=lambda s, x: (1 + ramp * s) * lap_space(x),
    )


@dataclass
class ResidualReport:
    """Residual series of the martingale-problem functional.

    martingale[k] is M at times[k]; realized_qv and predicted_qv are the
    running quadratic-variation estimates.  Arrays carry one value per
    replica in the leading axis when the input was batched.
    """

    times: np.ndarray
    martingale: np.ndarray
    realized_qv: np.ndarray
    predicted_qv: np.ndarray

    @property
    def final_m(self):
        return self.martingale[-1]

    @property
    def qv_ratio(self):
        return self.realized_qv[-1] / self.predicted_qv[-1]


def _trapezoid_cumsum(values, times):
    """Cumulative trapezoid along axis 0; result[0] = 0."""
    out = np.zeros_like(values)
    dt = np.diff(times)
    steps = 0.5 * (values[1:] + values[:-1]) * dt.reshape(
        (-1,) + (1,) * (values.ndim - 1)
    )
    out[1:] = np.cumsum(steps, axis=0)
    return out


def martingale_residual(times, u_traj, phi, mesh, limits, theta):
    """Residual of the single-equation martingale problem on a sampled path.

    M_t = <u_t, phi_t> - <u_0, phi_0>
          - int_0^t <u, d_s phi> + alpha <u, Lap phi> + 2 theta beta <u(1-u), phi> ds
    (trapezoid quadrature on the sampled grid).  The predicted quadratic
    variation is 4 gamma int <u(1-u), phi^2> ds; the realized one sums
    squared increments of M.

    `u_traj` has shape (n_times, width) or (n_times, reps, width).
    """
    times = np.asarray(times, dtype=float)
    u = np.asarray(u_traj, dtype=float)
    x = mesh.x
    phi_t = np.stack([phi.phi(s, x) for s in times])
    dphi_t = np.stack([phi.dt_phi(s, x) for s in times])
    lap_t = np.stack([phi.lap_phi(s, x) for s in times])
    if u.ndim == 3:
        expand = lambda a: a[:, None, :]
    else:
        expand = lambda a: a
    pair = mesh.inner(u, expand(phi_t))
    drift = (
        mesh.inner(u, expand(dphi_t))
        + limits.alpha * mesh.inner(u, expand(lap_t))
        + 2 * theta * limits.beta * mesh.inner(u * (1 - u), expand(phi_t))
    )
    m = pair - pair[0] - _trapezoid_cumsum(drift, times)
    qv_rate = 4 * limits.gamma * mesh.inner(u * (1 - u), expand(phi_t) ** 2)
    predicted = _trapezoid_cumsum(qv_rate, times)
    realized = np.zeros_like(m)
    realized[1:] = np.cumsum(np.diff(m, axis=0) ** 2, axis=0)
    return ResidualReport(times, m, realized, predicted)


def coupled_martingale_residual(times, u_traj, ell_traj, phi, psi, mesh, limits, theta):
    """Joint residual for the coupled system with test pair (phi, psi).

    Drifts: 2 theta beta u(1-u) against phi and 2 theta beta ell(1-u) against
    psi (the tracer only outcompetes type 0).  Predicted quadratic variation:
    4 gamma int <u(1-u), phi^2> + <ell(1-ell), psi^2> + 2 <phi psi ell (1-u)>.
    """
    times = np.asarray(times, dtype=float)
    u = np.asarray(u_traj, dtype=float)
    ell = np.asarray(ell_traj, dtype=float)
    x = mesh.x
    phi_t = np.stack([phi.phi(s, x) for s in times])
    dphi_t = np.stack([phi.dt_phi(s, x) for s in times])
    lapphi_t = np.stack([phi.lap_phi(s, x) for s in times])
    psi_t = np.stack([psi.phi(s, x) for s in times])
    dpsi_t = np.stack([psi.dt_phi(s, x) for s in times])
    lappsi_t = np.stack([psi.lap_phi(s, x) for s in times])
    if u.ndim == 3:
        expand = lambda a: a[:, None, :]
    else:
        expand = lambda a: a
    pair = mesh.inner(u, expand(phi_t)) + mesh.inner(ell, expand(psi_t))
    drift = (
        mesh.inner(u, expand(dphi_t))
        + mesh.inner(ell, expand(dpsi_t))
        + limits.alpha
        * (mesh.inner(u, expand(lapphi_t)) + mesh.inner(ell, expand(lappsi_t)))
        + 2 * theta * limits.beta
        * (
            mesh.inner(u * (1 - u), expand(phi_t))
            + mesh.inner(ell * (1 - u), expand(psi_t))
        )
    )
    m = pair - pair[0] - _trapezoid_cumsum(drift, times)
    qv_rate = 4 * limits.gamma * (
        mesh.inner(u * (1 - u), expand(phi_t) ** 2)
        + mesh.inner(ell * (1 - ell), expand(psi_t) ** 2)
        + 2 * mesh.inner(ell * (1 - u), expand(phi_t * psi_t))
    )
    predicted = _trapezoid_cumsum(qv_rate, times)
    realized = np.zeros_like(m)
    realized[1:] = np.cumsum(np.diff(m, axis=0) ** 2, axis=0)
    return ResidualReport(times, m, realized, predicted)


# ---------------------------------------------------------------------------
# Green-representation check for the finite-n particle model


def green_representation_check(xi0, torus, family, t, z_deme, reps, seed, n_quad=25):
    """Decompose finite-n forward runs against the heat-semigroup baseline.

    For each replica, u_t(z) - P_{alpha_n t} u_0 (z) - Y_t should be a mean
    zero martingale contribution; Y_t is the selection drift integrated
    against the backward kernel (quadrature over n_quad sampled times).
    Returns a dict with the replica mean, standard error, and components.
    """
    from .forward import simulate  # local import to keep module load light

    ratios = derived_ratios(family)
    alpha_n, beta_n = ratios.alpha_n, ratios.beta_n
    L, W = family.L, torus.W
    eta0 = np.zeros_like(np.asarray(xi0))
    cfg = Configuration(torus, np.asarray(xi0, np.int8), eta0.astype(np.int8))
    u0 = cfg.xi.reshape(W, torus.M).mean(axis=1)
    baseline = semigroup_apply(L, alpha_n * t, u0)[z_deme]

    quad_times = np.linspace(0.0, t, n_quad)
    kernels = np.stack(
        [heat_kernel_torus(L, alpha_n * (t - s), W) for s in quad_times]
    )  # (n_quad, W) values of p_{alpha_n (t-s)}(w - z) after rolling
    # center each kernel row on z_deme: value at deme w is q[(w - z) mod W]
    centered = np.stack([np.roll(k, z_deme) for k in kernels])

    remainders = np.empty(reps)
    for i in range(reps):
        final, snaps = simulate(
            cfg, family, T=t, seed=(seed, i), sample_times=list(quad_times)
        )
        u_snap = np.stack(
            [s.xi.reshape(W, torus.M).mean(axis=1) for s in snaps]
        )  # (n_quad, W)
        u_t = final.xi.reshape(W, torus.M).mean(axis=1)
        if family.theta > 0:
            up = np.roll(u_snap, -1, axis=1)
            down = np.roll(u_snap, 1, axis=1)
            integrand = ((up + down) * (1 - u_snap) * centered).sum(axis=1) / L
            y_t = family.theta * beta_n * np.trapezoid(integrand, quad_times)
        else:
            y_t = 0.0
        remainders[i] = u_t[z_deme] - baseline - y_t
    se = remainders.std(ddof=1) / math.sqrt(reps) if reps > 1 else float("nan")
    return {
        "mean_remainder": float(remainders.mean()),
        "se": float(se),
        "baseline": float(baseline),
        "reps": reps,
        "pass": bool(reps > 1 and abs(remainders.mean()) <= 3 * se),
    }

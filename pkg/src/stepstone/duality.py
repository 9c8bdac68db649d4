"""Moment duality kit: Wright-Fisher diffusions, their birth-death moment
dual, and the duality identities as executable checks.

The single diffusion dU = beta U(1-U) dt + sigma sqrt(U(1-U)) dB and its
Z = 1-U form, the coupled (Z, V) system driven by three independent
Brownian motions with the V Z noise shared (opposite signs), and the dual
chain N(t) with rates m -> m+1 at beta*m and m -> m-1 at sigma^2 m(m-1)/2.

Identities under test:
  moment duality     E[Z_T^{n0}]             = E[z0^{N_T}]        (0^0 := 1)
  coupled duality    E[F_k((Z_T,V_T), n0)]   = E[F_k((z0,v0), N_T)]
with F_k((z,l),(x,n)) = sum_{j1<...<jk} l(x_{jk})...l(x_{j1}) prod_{i<j1} z(x_i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import child_seed, generator

__all__ = [
    "simulate_single_diffusion",
    "simulate_single_diffusion_paired",
    "simulate_coupled_diffusion",
    "chain_step",
    "simulate_chain",
    "ChainResult",
    "check_moment_duality",
    "eval_Fk",
    "eval_Fk_scalar",
    "check_coupled_duality",
    "check_coupled_duality_spatial",
    "generator_drift_check",
]


def _clip01(x):
    return np.clip(x, 0.0, 1.0)


def simulate_single_diffusion(
    x0, beta, sigma, T, dt, seed, reps=1, mode="u", return_path=False
):
    """Euler-Maruyama for the single Wright-Fisher diffusion.

    mode "u": dU = beta U(1-U) dt + sigma sqrt(U(1-U)) dB started from x0.
    mode "z": returns Z = 1 - U where U is driven by the negated Brownian
    motion and started from 1 - x0, i.e. the pathwise change of variables
    dZ = -beta Z(1-Z) dt - sigma sqrt(Z(1-Z)) dB.

    Square-root arguments are clipped at 0; the state is projected back to
    [0, 1] after each step, which leaves 0 and 1 exactly absorbing.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not 0.0 <= x0 <= 1.0:
        raise ValueError("initial state must lie in [0, 1]")
    rng = generator(seed)
    sign = 1.0 if mode == "u" else -1.0
    u = np.full(reps, x0 if mode == "u" else 1.0 - x0)
    n_steps = int(round(T / dt))
    sqdt = math.sqrt(dt)
    path = [u.copy()] if return_path else None
    for _ in range(n_steps):
        var = np.clip(u * (1 - u), 0.0, None)
        u = _clip01(
            u
            + beta * u * (1 - u) * dt
            + sign * sigma * np.sqrt(var) * sqdt * rng.normal(size=reps)
        )
        if return_path:
            path.append(u.copy())
    out = u if mode == "u" else 1.0 - u
    if return_path:
        arr = np.stack(path)
        return out, (arr if mode == "u" else 1.0 - arr)
    return out


def simulate_single_diffusion_paired(x0, beta, sigma, T, dt, seed, reps, mode="z"):
    """Run the single diffusion at step dt and dt/2 on the same Brownian path.

    Each coarse increment is the sum of the two fine increments, so the
    difference of the two endpoints isolates the Euler discretization bias
    (paired common random numbers).  Returns (coarse, fine) state arrays.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    rng = generator(seed)
    sign = 1.0 if mode == "u" else -1.0
    start = x0 if mode == "u" else 1.0 - x0
    uc = np.full(reps, start)
    uf = np.full(reps, start)
    n_steps = int(round(T / dt))
    sq_half = math.sqrt(dt / 2.0)

    def em(u, h, dw):
        var = np.clip(u * (1 - u), 0.0, None)
        return _clip01(u + beta * u * (1 - u) * h + sign * sigma * np.sqrt(var) * dw)

    for _ in range(n_steps):
        z1 = rng.normal(size=reps)
        z2 = rng.normal(size=reps)
        uf = em(em(uf, dt / 2, sq_half * z1), dt / 2, sq_half * z2)
        uc = em(uc, dt, sq_half * (z1 + z2))
    if mode == "u":
        return uc, uf
    return 1.0 - uc, 1.0 - uf


def _project_simplex(z, v):
    """Project onto {z >= 0, v >= 0, z + v <= 1} (equal-split overshoot)."""
    z = _clip01(z)
    v = _clip01(v)
    excess = np.clip(z + v - 1.0, 0.0, None) / 2.0
    z = np.clip(z - excess, 0.0, None)
    v = np.clip(v - excess, 0.0, None)
    v = np.minimum(v, 1.0 - z)
    return z, v


def simulate_coupled_diffusion(z0, v0, beta, sigma, T, dt, seed, reps=1):
    """Euler-Maruyama for the coupled system

        dZ = -beta Z(1-Z) dt - sigma sqrt(VZ) dB0 - sigma sqrt(Z(1-Z-V)) dB1
        dV =  beta V Z  dt + sigma sqrt(VZ) dB0 + sigma sqrt(V(1-V-Z)) dB2

    with independent B0, B1, B2 and the B0 term shared (opposite signs), so
    cov(dZ, dV) = -sigma^2 V Z dt.  Returns (Z, V) arrays of shape (reps,).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not (0 <= z0 <= 1 and 0 <= v0 <= 1 and z0 + v0 <= 1):
        raise ValueError("need z0, v0 >= 0 with z0 + v0 <= 1")
    rng = generator(seed)
    z = np.full(reps, float(z0))
    v = np.full(reps, float(v0))
    n_steps = int(round(T / dt))
    sqdt = math.sqrt(dt)
    for _ in range(n_steps):
        shared = sigma * np.sqrt(np.clip(v * z, 0.0, None)) * rng.normal(size=reps)
        b1 = (
            sigma
            * np.sqrt(np.clip(z * (1 - z - v), 0.0, None))
            * rng.normal(size=reps)
        )
        b2 = (
            sigma
            * np.sqrt(np.clip(v * (1 - v - z), 0.0, None))
            * rng.normal(size=reps)
        )
        z_new = z - beta * z * (1 - z) * dt + sqdt * (-shared - b1)
        v_new = v + beta * v * z * dt + sqdt * (shared + b2)
        z, v = _project_simplex(z_new, v_new)
    return z, v


def chain_step(n, beta, sigma, rng):
    """One holding time and jump for each chain state in the array `n`.

    Rates: up beta*n, down sigma^2 n(n-1)/2.  Where the total rate is zero
    (n = 1 with beta = 0) the holding time is inf and the state is kept.
    Returns (holding_times, next_states).
    """
    n = np.asarray(n)
    up = beta * n
    down = sigma * sigma * n * (n - 1) / 2.0
    tot = up + down
    with np.errstate(divide="ignore"):
        hold = np.where(tot > 0, rng.exponential(1.0, n.shape) / np.where(tot > 0, tot, 1.0), np.inf)
    go_up = rng.random(n.shape) * tot < up
    nxt = np.where(tot > 0, np.where(go_up, n + 1, n - 1), n)
    return hold, nxt


@dataclass
class ChainResult:
    n: np.ndarray
    overflow: np.ndarray

    @property
    def overflow_count(self):
        return int(self.overflow.sum())


def simulate_chain(n0, beta, sigma, T, seed, reps=1, cap=10_000):
    """Exact Gillespie runs of the dual birth-death chain to time T.

    Runs whose state exceeds `cap` are flagged in `overflow` (their final
    state is whatever first exceeded the cap); callers discard and count
    them.  N = 1 is kept >= 1 automatically (death rate 0 there).
    """
    if n0 < 1:
        raise ValueError("chain starts at n0 >= 1")
    rng = generator(seed)
    n = np.full(reps, int(n0), dtype=np.int64)
    t = np.zeros(reps)
    active = np.arange(reps)
    overflow = np.zeros(reps, dtype=bool)
    while len(active):
        hold, nxt = chain_step(n[active], beta, sigma, rng)
        t_new = t[active] + hold
        jumped = t_new <= T
        n[active[jumped]] = nxt[jumped]
        t[active] = np.where(jumped, t_new, np.inf)
        over = n[active] > cap
        overflow[active[over]] = True
        active = active[jumped & ~over]
    return ChainResult(n=n, overflow=overflow)


def _mc_mean(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def check_moment_duality(z0, n0, beta, sigma, T, dt, reps, seed, cap=10_000):
    """E[Z_T^{n0}] against E[z0^{N_T}] with independent Monte Carlo sides.

    Returns a dict report; `pass` is |lhs - rhs| <= 3 * combined SE.  z0 in
    {0, 1} is excluded (boundary conventions), use z0 in (0, 1).
    """
    if not 0.0 < z0 < 1.0:
        raise ValueError("use z0 strictly inside (0, 1)")
    z = simulate_single_diffusion(
        z0, beta, sigma, T, dt, seed=child_seed(seed, 0), reps=reps, mode="z"
    )
    lhs, se_lhs = _mc_mean(z**n0)
    chain = simulate_chain(n0, beta, sigma, T, seed=child_seed(seed, 1), reps=reps, cap=cap)
    kept = chain.n[~chain.overflow]
    rhs, se_rhs = _mc_mean(z0 ** kept.astype(float))
    se = math.hypot(se_lhs, se_rhs)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "se_lhs": se_lhs,
        "se_rhs": se_rhs,
        "combined_se": se,
        "reps": reps,
        "overflow_count": chain.overflow_count,
        "pass": bool(abs(lhs - rhs) <= 3 * se),
    }


def eval_Fk(zvals, lvals, k):
    """F_k for ordered per-position values: sum over j1 < ... < jk of
    l[jk] ... l[j1] * prod_{i < j1} z[i].  k = 0 gives prod z[i]."""
    n = len(zvals)
    if len(lvals) != n:
        raise ValueError("zvals and lvals must have equal length")
    if k < 0 or k > n:
        raise ValueError("need 0 <= k <= n")
    if k == 0:
        out = 1.0
        for z in zvals:
            out *= z
        return out
    prefix = np.concatenate([[1.0], np.cumprod(np.asarray(zvals, dtype=float))])
    # e[m] = elementary symmetric polynomial of order m of the current suffix
    e = np.zeros(k)
    e[0] = 1.0
    total = 0.0
    for j in range(n - 1, -1, -1):
        total += prefix[j] * lvals[j] * e[k - 1]
        for m in range(k - 1, 0, -1):
            e[m] += lvals[j] * e[m - 1]
    return float(total)


def eval_Fk_scalar(z, v, n, k):
    """F_k with spatially constant fields z(x) = z, l(x) = v:
    v^k * sum_{j=1}^{n-k+1} C(n-j, k-1) z^(j-1).  Vectorized in z and v."""
    if k == 0:
        return np.asarray(z) ** n
    if k > n:
        raise ValueError("need k <= n")
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    acc = 0.0
    for j in range(1, n - k + 2):
        acc = acc + math.comb(n - j, k - 1) * z ** (j - 1)
    return v**k * acc


def check_coupled_duality(k, n0, z0, v0, beta, sigma, T, dt, reps, seed, cap=10_000):
    """Scalar-mode coupled duality: E[F_k((Z_T, V_T), n0)] from the coupled
    diffusion versus E[F_k((z0, v0), N_T)] from the dual chain."""
    if k > n0:
        raise ValueError("need k <= n0")
    z, v = simulate_coupled_diffusion(
        z0, v0, beta, sigma, T, dt, seed=child_seed(seed, 0), reps=reps
    )
    lhs, se_lhs = _mc_mean(eval_Fk_scalar(z, v, n0, k))
    chain = simulate_chain(n0, beta, sigma, T, seed=child_seed(seed, 1), reps=reps, cap=cap)
    kept = chain.n[~chain.overflow]
    values = np.array([eval_Fk_scalar(z0, v0, int(n), k) for n in kept])
    rhs, se_rhs = _mc_mean(values)
    se = math.hypot(se_lhs, se_rhs)
    return {
        "k": k,
        "lhs": lhs,
        "rhs": rhs,
        "se_lhs": se_lhs,
        "se_rhs": se_rhs,
        "combined_se": se,
        "reps": reps,
        "overflow_count": chain.overflow_count,
        "pass": bool(abs(lhs - rhs) <= 3 * se),
    }


def check_coupled_duality_spatial(
    k, x0, u0_fn, ell0_fn, limits, theta, T, mesh, spde_reps, bbm_reps,
    bbm_dt, seed, slack=0.02,
):
    """Spatial coupled duality: E[F_k((z_t, l_t), x0)] from the coupled SPDE
    against E[F_k((z_0, l_0), x_t)] from the ordered branching Brownian dual.

    x0 is the ordered tuple of positions; the dual keeps the smaller index at
    coalescence and inserts offspring before the parent, matching eval_Fk's
    ordering.  `slack` absorbs the discretization bias of both sides (the
    solver clamps at the boundary, the dual estimates local time by bands);
    the pass bound is max(3 combined SE, slack).
    """
    from .bbm import simulate_bbm_batch
    from .spde import simulate_coupled

    x0 = list(x0)
    cells = [int(round(x / mesh.dx)) % mesh.width for x in x0]
    u, ell, _ = simulate_coupled(
        u0_fn(mesh.x), ell0_fn(mesh.x), mesh, limits, theta, T,
        seed=child_seed(seed, 0), reps=spde_reps,
    )
    z_vals = 1.0 - u[:, cells]
    l_vals = ell[:, cells]
    lhs_samples = np.array(
        [eval_Fk(z_vals[i], l_vals[i], k) for i in range(spde_reps)]
    )
    lhs, se_lhs = _mc_mean(lhs_samples)
    finals = simulate_bbm_batch(
        x0, limits, theta, T, bbm_dt, seed=child_seed(seed, 1), reps=bbm_reps
    )
    rhs_samples = np.array(
        [eval_Fk(1.0 - u0_fn(f), ell0_fn(f), k) if len(f) >= k else 0.0
         for f in finals]
    )
    rhs, se_rhs = _mc_mean(rhs_samples)
    se = math.hypot(se_lhs, se_rhs)
    tol = max(3 * se, slack)
    return {
        "k": k, "lhs": lhs, "rhs": rhs, "se_lhs": se_lhs, "se_rhs": se_rhs,
        "combined_se": se, "tolerance": tol,
        "pass": bool(abs(lhs - rhs) <= tol),
    }


def generator_drift_check(z0, m, beta, sigma, h_values, dt, reps, seed):
    """Finite-horizon MC drift of Z^m against the generator prediction.

    For each horizon h: D(h) = (E[Z_h^m] - z0^m)/h with its SE.  The
    prediction is beta m (z0^(m+1) - z0^m) + sigma^2 m(m-1)/2 (z0^(m-1) - z0^m).
    Also reports the Richardson extrapolation over the two smallest h values
    (removes the O(h) bias).  Each entry gets `pass` = within 3 SE.
    """
    theory = beta * m * (z0 ** (m + 1) - z0**m)
    if m >= 2:
        theory += sigma**2 * m * (m - 1) / 2.0 * (z0 ** (m - 1) - z0**m)
    rows = []
    for i, h in enumerate(sorted(h_values)):
        z = simulate_single_diffusion(
            z0, beta, sigma, T=h, dt=dt, seed=child_seed(seed, i), reps=reps, mode="z"
        )
        mean, se = _mc_mean(z**m)
        d = (mean - z0**m) / h
        se_d = se / h
        rows.append(
            {
                "h": h,
                "drift": d,
                "se": se_d,
                "pass": bool(abs(d - theory) <= 3 * se_d),
            }
        )
    report = {"m": m, "theory": theory, "rows": rows}
    if len(rows) >= 2:
        h1, h2 = rows[0]["h"], rows[1]["h"]
        w1, w2 = h2 / (h2 - h1), -h1 / (h2 - h1)
        extr = w1 * rows[0]["drift"] + w2 * rows[1]["drift"]
        se_extr = math.hypot(w1 * rows[0]["se"], w2 * rows[1]["se"])
        report["richardson"] = {
            "drift": extr,
            "se": se_extr,
            "pass": bool(abs(extr - theory) <= 3 * se_extr),
        }
    report["pass"] = bool(
        all(r["pass"] for r in rows) and report.get("richardson", {"pass": True})["pass"]
    )
    return report

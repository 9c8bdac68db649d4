"""The laboratory's experiments: every duality identity and solver check as a
registered, configurable, seed-deterministic experiment.

Each function takes (params, master_seed, out_dir) and returns a JSON-able
report with a "pass" flag; defaults reproduce the acceptance configurations.
All randomness is derived from the master seed through named substreams, so
reports are bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from ._rng import substream
from .scaling import ScalingFamily, LimitParams, derived_ratios
from .lattice import Torus
from .forward import Configuration, simulate, density_profiles, product_statistic
from .eventlog import generate_event_log, replay_forward, replay_dual
from .dual import simulate_dual, eval_F, eval_G
from .bbm import (
    coalescence_time_experiment,
    sample_limit_law,
    simulate_bbm_batch,
)
from .spde import (
    Mesh,
    cosine_test_function,
    heat_kernel,
    heat_kernel_offsets,
    martingale_residual,
    simulate_coupled,
    simulate_wf,
)
from .duality import (
    chain_step,
    check_coupled_duality,
    generator_drift_check,
    simulate_chain,
    simulate_single_diffusion_paired,
)
from .harness import register_experiment, write_csv, write_json

__all__ = ["DEFAULTS"]


def _merge(defaults, params):
    out = dict(defaults)
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameters: {sorted(unknown)}")
    out.update(params)
    return out


def _mc(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def _family(p):
    return ScalingFamily(L=p["W"], M=p["M"], R=p["R"], r=p["r"], theta=p["theta"])


def _seed_entropy(master_seed, *key):
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))


# ---------------------------------------------------------------------------
# forward utility run


FORWARD_DEFAULTS = {
    "W": 32, "M": 8, "r": 1.0, "theta": 0.5, "R": 8.0, "T": 4.0,
    "init": "half", "label_demes": 8, "snapshots": 5,
}


@register_experiment("simulate-forward")
def forward_run(params, master_seed, out_dir):
    """One forward trajectory; emits density profiles (w, u, ell) as CSV."""
    p = _merge(FORWARD_DEFAULTS, params)
    torus = Torus(W=p["W"], M=p["M"])
    fam = _family(p)
    xi0 = np.zeros(torus.n_sites, np.int8)
    if p["init"] == "half":
        xi0[: torus.n_sites // 2] = 1
    else:
        rng = substream(master_seed, 0)
        xi0[:] = rng.random(torus.n_sites) < float(p["init"])
    eta0 = np.zeros_like(xi0)
    eta0[: p["label_demes"] * torus.M] = xi0[: p["label_demes"] * torus.M]
    cfg = Configuration(torus, xi0, eta0)
    times = np.linspace(0.0, p["T"], p["snapshots"] + 1)[1:]
    final, snaps = simulate(
        cfg, fam, T=p["T"], seed=_seed_entropy(master_seed, 1), sample_times=times
    )
    report = {"final_density": float(final.xi.mean()),
              "final_label_density": float(final.eta.mean()), "pass": True}
    if out_dir is not None:
        for snap in snaps + [final]:
            prof = density_profiles(snap, fam)
            write_csv(
                out_dir / f"density_t{snap.time:.3f}.csv",
                list(zip(prof.grid, prof.u, prof.ell)),
                ["w", "u", "ell"],
                meta={"t": snap.time, "master_seed": master_seed},
            )
    return report


# ---------------------------------------------------------------------------
# criterion 1: pathwise duality on shared logs


PATHWISE_DEFAULTS = {
    "W": 16, "M": 4, "r": 1.0, "theta": 0.5, "R": 4.0, "T": 2.0,
    "n_seeds": 1000, "cases_per_seed": 5,
}


@register_experiment("replay-duality")
def pathwise_duality(params, master_seed, out_dir):
    """Forward and backward replays of the same log must agree exactly:
    the union reading (some root is 1 iff some dual site started 1) and the
    per-root F/G readings of type and tracer label."""
    p = _merge(PATHWISE_DEFAULTS, params)
    torus = Torus(W=p["W"], M=p["M"])
    fam = _family(p)
    checks = violations = 0
    case_rng = substream(master_seed, 2)
    for i in range(p["n_seeds"]):
        log = generate_event_log(torus, fam, T=p["T"], seed=_seed_entropy(master_seed, 3, i))
        for _ in range(p["cases_per_seed"]):
            k = int(case_rng.integers(1, 4))
            roots = case_rng.choice(torus.n_sites, size=k, replace=False).tolist()
            xi0 = (case_rng.random(torus.n_sites) < 0.5).astype(np.int8)
            eta0 = np.where(case_rng.random(torus.n_sites) < 0.5, xi0, 0).astype(np.int8)
            final, _ = replay_forward(log, xi0, eta0)
            sample = replay_dual(log, p["T"], roots)
            lhs = max(int(final.xi[z]) for z in roots)
            rhs = max(int(xi0[y]) for y in sample.union)
            violations += lhs != rhs
            checks += 1
            for root, view in zip(roots, sample.views):
                violations += int(final.xi[root]) != 1 - int(eval_F(view, xi0))
                violations += int(final.eta[root]) != int(eval_G(view, xi0, eta0))
                checks += 2
    report = {"checks": checks, "violations": violations, "pass": violations == 0}
    if out_dir is not None:
        write_json(out_dir / "replay_duality.json", report,
                   meta={"master_seed": master_seed})
    return report


# ---------------------------------------------------------------------------
# criteria 2 and 3: Monte Carlo duality at finite n


DUAL_MC_DEFAULTS = {
    "W": 16, "M": 4, "r": 1.0, "theta": 0.5, "R": 4.0, "T": 2.0,
    "reps": 20_000, "mode": "product",
    "cases": [[5], [5, 10], [5, 5, 10]],
    "tracer_x1_deme": 5, "tracer_x1_cell": 1,
    "tracer_x2_deme": 9, "tracer_x2_cell": 2,
}


def _mixed_fields(torus):
    """Deterministic initial data: type 1 on the left half, labels on the
    first quarter of demes."""
    xi0 = np.zeros(torus.n_sites, np.int8)
    xi0[: torus.n_sites // 2] = 1
    eta0 = np.zeros_like(xi0)
    eta0[: torus.n_sites // 4] = xi0[: torus.n_sites // 4]
    return xi0, eta0


@register_experiment("dual-mc")
def dual_mc(params, master_seed, out_dir):
    """Distributional duality with independent randomness on the two sides.

    mode "product": E prod_{a in A} (1 - u_t(a)) from forward runs against
    the union-dual estimate, for deme multisets A (cells resampled uniformly
    per replica).  mode "tracer": the joint event {xi_t(x1)=0, eta_t(x2)=1}
    against E[F(view1) G(view2)] from one two-root dual per replica.
    """
    p = _merge(DUAL_MC_DEFAULTS, params)
    torus = Torus(W=p["W"], M=p["M"])
    fam = _family(p)
    xi0, eta0 = _mixed_fields(torus)
    cfg = Configuration(torus, xi0, eta0)
    reps = p["reps"]
    if p["mode"] == "product":
        cases = [list(c) if isinstance(c, list) else [c] for c in p["cases"]]
        fwd = np.empty((reps, len(cases)))
        for i in range(reps):
            final, _ = simulate(cfg, fam, T=p["T"], seed=_seed_entropy(master_seed, 4, i))
            for j, demes in enumerate(cases):
                fwd[i, j] = product_statistic(final, demes)
        results = []
        for j, demes in enumerate(cases):
            cell_rng = substream(master_seed, 5, j)
            vals = np.empty(reps)
            for i in range(reps):
                roots = [
                    torus.site(a, int(cell_rng.integers(torus.M))) for a in demes
                ]
                sample = simulate_dual(
                    roots, torus, fam, s_max=p["T"], seed=_seed_entropy(master_seed, 6, j, i)
                )
                vals[i] = eval_F(sample.union, xi0)
            lhs, se_l = _mc(fwd[:, j])
            rhs, se_r = _mc(vals)
            se = math.hypot(se_l, se_r)
            results.append({
                "A": demes, "forward": lhs, "dual": rhs,
                "se": se, "pass": bool(abs(lhs - rhs) <= 3 * se),
            })
        report = {"cases": results, "pass": all(c["pass"] for c in results)}
    elif p["mode"] == "tracer":
        x1 = torus.site(p["tracer_x1_deme"], p["tracer_x1_cell"])
        x2 = torus.site(p["tracer_x2_deme"], p["tracer_x2_cell"])
        hits = np.empty(reps)
        for i in range(reps):
            final, _ = simulate(cfg, fam, T=p["T"], seed=_seed_entropy(master_seed, 4, i))
            hits[i] = (final.xi[x1] == 0) and (final.eta[x2] == 1)
        vals = np.empty(reps)
        for i in range(reps):
            sample = simulate_dual(
                [x1, x2], torus, fam, s_max=p["T"], seed=_seed_entropy(master_seed, 6, i)
            )
            vals[i] = eval_F(sample.views[0], xi0) * eval_G(sample.views[1], xi0, eta0)
        lhs, se_l = _mc(hits)
        rhs, se_r = _mc(vals)
        se = math.hypot(se_l, se_r)
        report = {
            "forward": lhs, "dual": rhs, "se": se,
            "pass": bool(abs(lhs - rhs) <= 3 * se),
        }
    else:
        raise ValueError(f"unknown mode {p['mode']!r}")
    if out_dir is not None:
        write_json(out_dir / f"dual_mc_{p['mode']}.json", report,
                   meta={"master_seed": master_seed})
    return report


# ---------------------------------------------------------------------------
# criteria 4, 6, 7: moment duality kit


MOMENT_DEFAULTS = {
    "z0": 0.5, "n0": 2, "beta": 1.0, "sigma": 1.0, "T": 0.5, "dt": 1e-4,
    "reps": 100_000, "drift_reps": 400_000, "drift_h": [1e-3, 1e-2],
    "drift_ms": [1, 2, 3], "rate_ms": [1, 2, 5], "rate_reps": 100_000,
    "run_drift": True, "run_rates": True,
}


@register_experiment("moment-duality")
def moment_duality(params, master_seed, out_dir):
    """E[Z_T^{n0}] vs E[z0^{N_T}] with an Euler-bias control (the dt -> dt/2
    shift on a shared Brownian path must stay below one SE), plus the
    generator drift check and the chain jump-rate check."""
    p = _merge(MOMENT_DEFAULTS, params)
    z0, n0, beta, sigma = p["z0"], p["n0"], p["beta"], p["sigma"]
    zc, zf = simulate_single_diffusion_paired(
        z0, beta, sigma, p["T"], p["dt"], seed=_seed_entropy(master_seed, 10),
        reps=p["reps"], mode="z",
    )
    lhs, se_l = _mc(zc ** n0)
    lhs_fine, _ = _mc(zf ** n0)
    shift_mean, shift_se = _mc(zc ** n0 - zf ** n0)
    chain = simulate_chain(
        n0, beta, sigma, p["T"], seed=_seed_entropy(master_seed, 11), reps=p["reps"]
    )
    kept = chain.n[~chain.overflow]
    rhs, se_r = _mc(z0 ** kept.astype(float))
    se = math.hypot(se_l, se_r)
    duality = {
        "lhs": lhs, "rhs": rhs, "se_lhs": se_l, "se_rhs": se_r,
        "combined_se": se, "lhs_half_dt": lhs_fine,
        "dt_shift": shift_mean, "dt_shift_se": shift_se,
        "overflow_count": chain.overflow_count,
        "pass_duality": bool(abs(lhs - rhs) <= 3 * se),
        "pass_dt_shift": bool(abs(shift_mean) < se_l),
    }
    report = {"duality": duality}
    ok = duality["pass_duality"] and duality["pass_dt_shift"]

    if p["run_drift"]:
        drift = [
            generator_drift_check(
                z0, m, beta, sigma, p["drift_h"], p["dt"], p["drift_reps"],
                seed=_seed_entropy(master_seed, 12, m),
            )
            for m in p["drift_ms"]
        ]
        report["generator_drift"] = drift
        ok = ok and all(d["pass"] for d in drift)

    if p["run_rates"]:
        rates = []
        for m in p["rate_ms"]:
            rng = substream(master_seed, 13, m)
            n = np.full(p["rate_reps"], m, dtype=np.int64)
            hold, nxt = chain_step(n, beta, sigma, rng)
            q = beta * m + sigma * sigma * m * (m - 1) / 2.0
            h_mean, h_se = _mc(hold)
            ups = nxt == m + 1
            downs = int((nxt == m - 1).sum())
            p_up, p_up_se = _mc(ups.astype(float))
            row = {
                "m": m,
                "holding_mean": h_mean, "holding_expected": 1.0 / q,
                "holding_se": h_se,
                "up_fraction": p_up, "up_expected": beta * m / q,
                "up_se": p_up_se,
                "down_count": downs,
                "pass": bool(
                    abs(h_mean - 1.0 / q) <= 3 * h_se
                    and abs(p_up - beta * m / q) <= 3 * max(p_up_se, 1e-12)
                    and (m > 1 or downs == 0)
                ),
            }
            rates.append(row)
        report["chain_rates"] = rates
        ok = ok and all(r["pass"] for r in rates)

    report["pass"] = bool(ok)
    if out_dir is not None:
        write_json(out_dir / "moment_duality.json", report,
                   meta={"master_seed": master_seed})
    return report


# ---------------------------------------------------------------------------
# criterion 5: coupled duality, scalar mode


COUPLED_DUALITY_DEFAULTS = {
    "k": 1, "n0": 2, "z0": 0.4, "v0": 0.3, "beta": 1.0, "sigma": 1.0,
    "T": 0.5, "dt": 1e-4, "reps": 100_000,
}


@register_experiment("coupled-duality")
def coupled_duality(params, master_seed, out_dir):
    p = _merge(COUPLED_DUALITY_DEFAULTS, params)
    report = check_coupled_duality(
        p["k"], p["n0"], p["z0"], p["v0"], p["beta"], p["sigma"], p["T"],
        p["dt"], p["reps"], seed=_seed_entropy(master_seed, 14),
    )
    if out_dir is not None:
        write_json(out_dir / "coupled_duality.json", report,
                   meta={"master_seed": master_seed})
    return report


# ---------------------------------------------------------------------------
# criterion 8: heat kernel identities


KERNEL_DEFAULTS = {"L_values": [8, 32], "t_values": [0.01, 0.1, 1.0], "tol": 1e-12}


@register_experiment("kernel-check")
def kernel_check(params, master_seed, out_dir):
    p = _merge(KERNEL_DEFAULTS, params)
    rows = []
    worst = 0.0
    for L in p["L_values"]:
        for t in p["t_values"]:
            row = heat_kernel_offsets(L, t)
            norm_dev = abs((row[0] + 2 * row[1:].sum()) / L - 1.0)
            ks = np.arange(1, min(len(row), 50))
            sym_dev = float(np.max(np.abs(
                heat_kernel(L, t, ks / L) - heat_kernel(L, t, -ks / L)
            )))
            ck_dev = abs((row[0] ** 2 + 2 * (row[1:] ** 2).sum()) / L
                         - heat_kernel(L, 2 * t, 0.0))
            worst = max(worst, norm_dev, sym_dev, ck_dev)
            rows.append({
                "L": L, "t": t, "normalization_dev": norm_dev,
                "symmetry_dev": sym_dev, "chapman_kolmogorov_dev": ck_dev,
            })
    report = {"rows": rows, "worst_dev": worst, "tol": p["tol"],
              "pass": bool(worst <= p["tol"])}
    if out_dir is not None:
        write_json(out_dir / "kernel_check.json", report, meta={})
    return report


# ---------------------------------------------------------------------------
# criterion 9: gamma = 0 reduction to the PDE


PDE_DEFAULTS = {
    "alpha": 1.0, "thetabeta": 1.0, "T": 1.0, "period": 8.0,
    "dx": 0.025, "stability": 0.8, "tol": 1e-3,
}


@register_experiment("spde")
def pde_reduction(params, master_seed, out_dir):
    """gamma = 0: the coupled solver against a refined-mesh reference on a
    logistic-in-time, heat-in-space composite, and the homogeneous case
    against the exact logistic."""
    p = _merge(PDE_DEFAULTS, params)
    alpha, tb = p["alpha"], p["thetabeta"]
    limits = LimitParams(alpha=alpha, beta=1.0, gamma=0.0)

    def solve(dx):
        width = int(round(p["period"] / dx))
        mesh = Mesh(dx=dx, dt=p["stability"] * dx * dx / (4 * alpha), width=width)
        x = mesh.x
        u0 = 0.3 + 0.4 * np.exp(-((x - p["period"] / 2) ** 2))
        u, ell, _ = simulate_coupled(
            u0, 0.5 * u0, mesh, limits, theta=tb, T=p["T"], seed=0
        )
        return u[0], ell[0]

    u_c, l_c = solve(p["dx"])
    u_f, l_f = solve(p["dx"] / 2)
    err_u = float(np.max(np.abs(u_c - u_f[::2])))
    err_l = float(np.max(np.abs(l_c - l_f[::2])))

    mesh = Mesh(dx=0.1, dt=2e-4, width=16)
    u_h, l_h, _ = simulate_coupled(
        np.full(16, 0.5), np.full(16, 0.3), mesh, limits, theta=tb, T=p["T"], seed=0
    )
    exact = 1.0 / (1.0 + math.exp(-2 * tb * p["T"]))
    err_logistic = float(np.max(np.abs(u_h - exact)))
    err_ratio = float(np.max(np.abs(l_h / u_h - 0.6)))

    report = {
        "sup_err_u_vs_refined": err_u,
        "sup_err_ell_vs_refined": err_l,
        "sup_err_logistic": err_logistic,
        "label_ratio_drift": err_ratio,
        "tol": p["tol"],
        "pass": bool(err_u <= p["tol"] and err_l <= p["tol"]
                     and err_logistic <= p["tol"]),
    }
    if out_dir is not None:
        write_json(out_dir / "pde_reduction.json", report, meta={})
    return report


# ---------------------------------------------------------------------------
# criterion 10: u-marginal consistency of the coupled solver


UMARGINAL_DEFAULTS = {
    "alpha": 0.5, "thetabeta": 0.5, "gamma": 1.0, "T": 0.5,
    "dx": 0.1, "width": 64, "reps": 1000, "stability": 0.8,
}


@register_experiment("coupled-spde")
def u_marginal(params, master_seed, out_dir):
    """First and second spatial moments of u agree between the coupled solver
    (arbitrary ell_0) and the single-equation solver: the noise-variance
    identity 4g l(1-u) + 4g (u-l)(1-u) = 4g u(1-u) made empirical."""
    p = _merge(UMARGINAL_DEFAULTS, params)
    alpha = p["alpha"]
    mesh = Mesh(dx=p["dx"], dt=p["stability"] * p["dx"] ** 2 / (4 * alpha),
                width=p["width"])
    limits = LimitParams(alpha=alpha, beta=1.0, gamma=p["gamma"])
    x = mesh.x
    u0 = 0.5 + 0.2 * np.exp(-((x - mesh.period / 2) ** 2))
    ell0 = 0.5 * u0
    reps = p["reps"]
    u_single, _ = simulate_wf(
        u0, mesh, limits, theta=p["thetabeta"], T=p["T"],
        seed=_seed_entropy(master_seed, 20), reps=reps,
    )
    u_coupled, _, _ = simulate_coupled(
        u0, ell0, mesh, limits, theta=p["thetabeta"], T=p["T"],
        seed=_seed_entropy(master_seed, 21), reps=reps,
    )
    rows = []
    ok = True
    for name, f in (("m1", lambda u: mesh.inner(u, np.ones_like(u))),
                    ("m2", lambda u: mesh.inner(u, u))):
        a, se_a = _mc(f(u_single))
        b, se_b = _mc(f(u_coupled))
        se = math.hypot(se_a, se_b)
        good = abs(a - b) <= 3 * se
        ok = ok and good
        rows.append({"moment": name, "single": a, "coupled": b,
                     "se": se, "pass": bool(good)})
    report = {"moments": rows, "pass": bool(ok)}
    if out_dir is not None:
        write_json(out_dir / "u_marginal.json", report,
                   meta={"master_seed": master_seed})
    return report


# ---------------------------------------------------------------------------
# criterion 11: martingale residual


RESIDUAL_DEFAULTS = {
    "alpha": 1.0, "thetabeta": 0.5, "gamma": 0.1, "T": 0.3,
    "dx": 0.1, "width": 64, "reps": 1000, "mode": 2, "stability": 0.8,
}


@register_experiment("martingale-residual")
def residual_experiment(params, master_seed, out_dir):
    p = _merge(RESIDUAL_DEFAULTS, params)
    alpha = p["alpha"]
    mesh = Mesh(dx=p["dx"], dt=p["stability"] * p["dx"] ** 2 / (4 * alpha),
                width=p["width"])
    limits = LimitParams(alpha=alpha, beta=1.0, gamma=p["gamma"])
    x = mesh.x
    u0 = 0.5 + 0.1 * np.exp(-((x - mesh.period / 2) ** 2))
    reps = p["reps"]
    times = [0.0]
    traj = [np.broadcast_to(u0, (reps, mesh.width)).copy()]

    def observer(t, u):
        times.append(t)
        traj.append(u.copy())

    _, clamped = simulate_wf(
        u0, mesh, limits, theta=p["thetabeta"], T=p["T"],
        seed=_seed_entropy(master_seed, 22), reps=reps, observer=observer,
    )
    phi = cosine_test_function(amplitude=1.0, mode=p["mode"], period=mesh.period)
    rep = martingale_residual(np.array(times), np.stack(traj), phi, mesh, limits,
                              theta=p["thetabeta"])
    m = rep.final_m
    mean, se = _mc(m)
    ratio = float(rep.qv_ratio.mean())
    report = {
        "mean_M": mean, "se": se, "qv_ratio": ratio,
        "clamped_entries": clamped,
        "pass_mean": bool(abs(mean) <= 3 * se),
        "pass_qv": bool(0.9 <= ratio <= 1.1),
        "pass": bool(abs(mean) <= 3 * se and 0.9 <= ratio <= 1.1),
    }
    if out_dir is not None:
        write_json(out_dir / "martingale_residual.json", report,
                   meta={"master_seed": master_seed})
    return report


# ---------------------------------------------------------------------------
# criterion 12: Theorem-2 ladder


LADDER_DEFAULTS = {
    "alpha": 0.05, "nu": 1.0, "L_values": [20, 40, 80], "reps": 10_000,
    "v_cap": 60.0, "ref_reps": 40_000, "ref_dt": 2e-4, "ref_eps": 0.008,
}


def _ks_distance(a, b):
    a = np.sort(np.asarray(a))
    b = np.sort(np.asarray(b))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


@register_experiment("coalescence-ladder")
def coalescence_ladder(params, master_seed, out_dir):
    """Rescaled discrete coalescence times against the sampled limit law:
    the KS distance should fall as L grows with M*nu/L pinned.

    Both laws are censored at the common rescaled-time cap (the limit has
    infinite mean); censor counts are reported.
    """
    p = _merge(LADDER_DEFAULTS, params)
    alpha, nu, cap = p["alpha"], p["nu"], p["v_cap"]
    ref = sample_limit_law(
        alpha, p["ref_reps"], dt=p["ref_dt"], seed=_seed_entropy(master_seed, 30),
        cap=cap, eps=p["ref_eps"],
    )
    rungs = []
    for L in p["L_values"]:
        M = max(1, round(alpha * L / nu))
        v, cens = coalescence_time_experiment(
            L, M, nu=nu, n_reps=p["reps"], seed=_seed_entropy(master_seed, 31, L),
            v_cap=cap,
        )
        rungs.append({
            "L": L, "M": M, "ks_distance": _ks_distance(v, ref.values),
            "censored": int(cens.sum()),
        })
        if out_dir is not None:
            write_csv(out_dir / f"ladder_L{L}.csv", [(x,) for x in v],
                      ["rescaled_time"],
                      meta={"L": L, "M": M, "nu": nu, "v_cap": cap,
                            "censored": int(cens.sum()),
                            "master_seed": master_seed})
    ds = [r["ks_distance"] for r in rungs]
    report = {
        "rungs": rungs, "ref_censored": ref.n_censored,
        "ref_params": ref.params,
        "pass": bool(all(a > b for a, b in zip(ds, ds[1:]))),
    }
    if out_dir is not None:
        write_csv(out_dir / "ladder_limit_law.csv", [(x,) for x in ref.values],
                  ["rescaled_time"], meta=ref.params)
        write_json(out_dir / "ladder.json", report,
                   meta={"master_seed": master_seed})
    return report


# ---------------------------------------------------------------------------
# criterion 13: cross-scale duality (SPDE vs BBM dual)


CROSS_DEFAULTS = {
    "alpha": 0.5, "thetabeta": 0.5, "gamma": 0.3, "t": 0.25,
    "period": 12.0, "dx": 0.05, "coarse_dx": 0.1, "stability": 0.5,
    "spde_reps": 20_000, "bbm_reps": 20_000, "bbm_dt": 1e-4,
    "offsets": [-0.2, 0.2], "u0_base": 0.15, "u0_height": 0.35,
    "slack": 0.02,
}


@register_experiment("bbm")
def cross_scale_duality(params, master_seed, out_dir):
    """E prod_{x in A}(1 - u_t(x)): Wright-Fisher SPDE runs against the
    branching Brownian dual reading the initial profile, with a mesh-halving
    check that the discretization gap shrinks."""
    p = _merge(CROSS_DEFAULTS, params)
    alpha, tb, gamma = p["alpha"], p["thetabeta"], p["gamma"]
    limits = LimitParams(alpha=alpha, beta=1.0, gamma=gamma)
    center = p["period"] / 2

    def u0_fn(x):
        return p["u0_base"] + p["u0_height"] * np.exp(-((x - center) ** 2) / 2.0)

    def spde_estimate(dx, stream):
        mesh = Mesh(dx=dx, dt=p["stability"] * dx * dx / (4 * alpha),
                    width=int(round(p["period"] / dx)))
        cells = [int(round((center + off) / dx)) % mesh.width for off in p["offsets"]]
        u, _ = simulate_wf(
            u0_fn(mesh.x), mesh, limits, theta=tb, T=p["t"],
            seed=_seed_entropy(master_seed, 40, stream), reps=p["spde_reps"],
        )
        prods = np.prod([1.0 - u[:, c] for c in cells], axis=0)
        return _mc(prods)

    spde_fine, se_fine = spde_estimate(p["dx"], 0)
    spde_coarse, se_coarse = spde_estimate(p["coarse_dx"], 1)

    roots = [center + off for off in p["offsets"]]
    finals = simulate_bbm_batch(
        roots, limits, theta=tb, T=p["t"], dt=p["bbm_dt"],
        seed=_seed_entropy(master_seed, 41), reps=p["bbm_reps"],
    )
    vals = np.array([np.prod(1.0 - u0_fn(f)) for f in finals])
    bbm_mean, se_bbm = _mc(vals)

    se = math.hypot(se_fine, se_bbm)
    gap_fine = abs(spde_fine - bbm_mean)
    gap_coarse = abs(spde_coarse - bbm_mean)
    tol = max(3 * se, p["slack"])
    report = {
        "spde": spde_fine, "spde_coarse": spde_coarse, "bbm": bbm_mean,
        "se_spde": se_fine, "se_bbm": se_bbm,
        "gap": gap_fine, "gap_coarse": gap_coarse, "tolerance": tol,
        "pass_agreement": bool(gap_fine <= tol),
        "pass_mesh_trend": bool(gap_fine <= gap_coarse + 2 * se),
        "pass": bool(gap_fine <= tol and gap_fine <= gap_coarse + 2 * se),
    }
    if out_dir is not None:
        write_json(out_dir / "cross_scale_duality.json", report,
                   meta={"master_seed": master_seed})
    return report


DEFAULTS = {
    "simulate-forward": FORWARD_DEFAULTS,
    "replay-duality": PATHWISE_DEFAULTS,
    "dual-mc": DUAL_MC_DEFAULTS,
    "moment-duality": MOMENT_DEFAULTS,
    "coupled-duality": COUPLED_DUALITY_DEFAULTS,
    "kernel-check": KERNEL_DEFAULTS,
    "spde": PDE_DEFAULTS,
    "coupled-spde": UMARGINAL_DEFAULTS,
    "martingale-residual": RESIDUAL_DEFAULTS,
    "coalescence-ladder": LADDER_DEFAULTS,
    "bbm": CROSS_DEFAULTS,
}

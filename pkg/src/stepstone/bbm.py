"""Branching Brownian motion with local-time-mediated pairwise coalescence.

Particles move as independent Brownian motions with variance 2*alpha*t and
branch at rate 2*theta*beta per particle (offspring at the parent's position,
taking the parent's ancestry rank; everything from that rank up shifts by
one).  The factor 2 matches the discrete dual, whose per-particle birth rate
is 2*M*theta/R -> 2*theta*beta, and the density drift 2*theta*beta*u(1-u):
a dual particle must duplicate at the full drift coefficient for
E prod (1-u_t(x)) = E prod (1-u_0(y)) to hold.  For
each unordered pair the local time at 0 of the position difference is
accumulated with a band estimator; the pair coalesces (the higher ancestry
rank is removed, matching the discrete dual's rule of keeping the smaller
index) when that local time first exceeds alpha*tau/gamma with tau a fresh
mean-1 exponential drawn at pair creation.  gamma = 0 disables coalescence.

Normalization: the difference of two particles has quadratic variation
4*alpha*t, and the thresholds are calibrated to the semimartingale local time
of that difference, which equals 4*alpha times the time-occupation density.
The band accumulator therefore adds 4*alpha*dt/(2*eps) per in-band step.
Equivalently, pairs are killed at rate 4*gamma per unit occupation density.
Pairs created by a birth start with zero accumulated local time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import generator

__all__ = [
    "BBMState",
    "simulate_bbm",
    "simulate_bbm_batch",
    "local_time_band",
    "pair_coalescence_times",
    "coalescence_time_experiment",
    "sample_limit_law",
    "LimitLawSample",
]


def default_band(dt):
    """Band half-width for local-time estimation; keeps dt << eps**2."""
    return 4.0 * math.sqrt(dt)


def local_time_band(path_diff, eps, dt):
    """Occupation-density estimate of the local time at 0 of a sampled path:
    (1/(2 eps)) * dt * #{k >= 1 : |path[k]| <= eps}.

    This is the raw occupation density; for a standard Brownian motion it is
    the usual local time.  (Rescale by the quadratic-variation rate for other
    diffusions.)
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    path_diff = np.asarray(path_diff)
    return float(np.sum(np.abs(path_diff[1:]) <= eps) * dt / (2 * eps))


@dataclass
class BBMState:
    """Snapshot of one replica: particle positions in ancestry order."""

    time: float
    positions: np.ndarray


class _Engine:
    """Batched BBM over `reps` replicas with padded particle arrays."""

    def __init__(self, A, limits, theta, dt, rng, reps, eps=None):
        A = list(A)
        if not A:
            raise ValueError("need at least one initial particle")
        if dt <= 0:
            raise ValueError("dt must be > 0")
        self.alpha = limits.alpha
        self.gamma = limits.gamma
        self.branch_rate = 2.0 * theta * limits.beta
        self.dt = dt
        self.eps = default_band(dt) if eps is None else eps
        self.rng = rng
        self.reps = reps
        self.t = 0.0
        self.sigma_step = math.sqrt(2 * self.alpha * dt)
        self.p_branch = -math.expm1(-self.branch_rate * dt)
        self.lt_coef = 4 * self.alpha * dt / (2 * self.eps)
        # tight capacity: pair arrays cost O(cap^2) per step; grows on demand
        self._alloc(len(A) + (2 if self.p_branch > 0 else 0), init_positions=A)

    def _pair_index(self, cap):
        iu, ju = np.triu_indices(cap, 1)
        lookup = -np.ones((cap, cap), dtype=np.int64)
        lookup[iu, ju] = np.arange(len(iu))
        lookup[ju, iu] = lookup[iu, ju]
        return iu, ju, lookup

    def _alloc(self, cap, init_positions=None):
        R = self.reps
        self.cap = cap
        self.iu, self.ju, self.pair_lookup = self._pair_index(cap)
        P = len(self.iu)
        if init_positions is not None:
            n0 = len(init_positions)
            self.pos = np.zeros((R, cap))
            self.pos[:, :n0] = np.asarray(init_positions, dtype=float)
            self.alive = np.zeros((R, cap), dtype=bool)
            self.alive[:, :n0] = True
            self.rank = np.zeros((R, cap), dtype=np.int32)
            self.rank[:, :n0] = np.arange(1, n0 + 1)
            self.lt = np.zeros((R, P))
            self.thr = np.full((R, P), np.inf)
            if self.gamma > 0:
                init_pairs = self.pair_lookup[
                    np.triu_indices(n0, 1)
                ]
                if len(init_pairs):
                    self.thr[:, init_pairs] = (
                        self.alpha * self.rng.exponential(1.0, (R, len(init_pairs)))
                        / self.gamma
                    )

    def _grow(self):
        old_iu, old_ju = self.iu, self.ju
        old_lt, old_thr = self.lt, self.thr
        old_cap = self.cap
        cap = old_cap + 4
        self.cap = cap
        self.iu, self.ju, self.pair_lookup = self._pair_index(cap)
        P = len(self.iu)
        self.pos = np.pad(self.pos, ((0, 0), (0, 4)))
        self.alive = np.pad(self.alive, ((0, 0), (0, 4)))
        self.rank = np.pad(self.rank, ((0, 0), (0, 4)))
        lt = np.zeros((self.reps, P))
        thr = np.full((self.reps, P), np.inf)
        old_pair_ids = self.pair_lookup[old_iu, old_ju]
        lt[:, old_pair_ids] = old_lt
        thr[:, old_pair_ids] = old_thr
        self.lt, self.thr = lt, thr

    def n_alive(self):
        return self.alive.sum(axis=1)

    def _fresh_threshold(self):
        if self.gamma > 0:
            return self.alpha * self.rng.exponential() / self.gamma
        return np.inf

    def _spawn(self, rep, parent):
        free = np.flatnonzero(~self.alive[rep])
        if len(free) == 0:
            self._grow()
            free = np.flatnonzero(~self.alive[rep])
        c = free[0]
        parent_rank = self.rank[rep, parent]
        bump = self.alive[rep] & (self.rank[rep] >= parent_rank)
        self.rank[rep, bump] += 1
        self.alive[rep, c] = True
        self.rank[rep, c] = parent_rank
        self.pos[rep, c] = self.pos[rep, parent]
        pairs = self.pair_lookup[c, np.arange(self.cap) != c]
        self.lt[rep, pairs] = 0.0
        self.thr[rep, pairs] = np.inf
        if self.gamma > 0:
            for j in np.flatnonzero(self.alive[rep]):
                if j != c:
                    self.thr[rep, self.pair_lookup[c, j]] = self._fresh_threshold()

    def _remove(self, rep, col):
        gone_rank = self.rank[rep, col]
        self.alive[rep, col] = False
        self.rank[rep, col] = 0
        drop = self.alive[rep] & (self.rank[rep] > gone_rank)
        self.rank[rep, drop] -= 1
        pairs = self.pair_lookup[col, np.arange(self.cap) != col]
        self.thr[rep, pairs] = np.inf

    def step(self):
        rng = self.rng
        noise = rng.normal(0.0, self.sigma_step, (self.reps, self.cap))
        self.pos += noise * self.alive
        if self.gamma > 0:
            pair_alive = self.alive[:, self.iu] & self.alive[:, self.ju]
            diff = self.pos[:, self.iu] - self.pos[:, self.ju]
            in_band = pair_alive & (np.abs(diff) <= self.eps)
            self.lt += self.lt_coef * in_band
            trig = in_band & (self.lt >= self.thr)
            if trig.any():
                for rep, p in np.argwhere(trig):
                    i, j = self.iu[p], self.ju[p]
                    if not (self.alive[rep, i] and self.alive[rep, j]):
                        continue
                    loser = i if self.rank[rep, i] > self.rank[rep, j] else j
                    self._remove(rep, loser)
        if self.p_branch > 0:
            births = (rng.random((self.reps, self.cap)) < self.p_branch) & self.alive
            if births.any():
                for rep, parent in np.argwhere(births):
                    self._spawn(rep, parent)
        self.t += self.dt

    def run_until(self, T, observer=None):
        n_steps = int(round(T / self.dt))
        for k in range(n_steps):
            self.step()
            if observer is not None:
                observer(self)

    def state(self, rep):
        cols = np.flatnonzero(self.alive[rep])
        order = np.argsort(self.rank[rep, cols], kind="stable")
        return BBMState(time=self.t, positions=self.pos[rep, cols[order]].copy())


def simulate_bbm(A, limits, theta, T, dt, seed, eps=None, sample_times=None):
    """Single-replica BBM run; returns (final BBMState, snapshots).

    Snapshots are BBMStates at the requested times (rounded to step ends).
    """
    eng = _Engine(A, limits, theta, dt, generator(seed), reps=1, eps=eps)
    wanted = sorted(sample_times) if sample_times else []
    snaps = []
    idx = 0
    while idx < len(wanted) and wanted[idx] <= 0:
        snaps.append(eng.state(0))
        idx += 1

    def observer(e):
        nonlocal idx
        while idx < len(wanted) and wanted[idx] <= e.t + 1e-12:
            snaps.append(e.state(0))
            idx += 1

    eng.run_until(T, observer)
    return eng.state(0), snaps


def simulate_bbm_batch(A, limits, theta, T, dt, seed, reps, eps=None):
    """Final rank-ordered particle positions of `reps` independent replicas."""
    eng = _Engine(A, limits, theta, dt, generator(seed), reps=reps, eps=eps)
    eng.run_until(T)
    return [eng.state(rep).positions for rep in range(reps)]


def pair_coalescence_times(alpha, gamma, separation, reps, dt, seed, t_cap, eps=None):
    """Coalescence times of a two-particle BBM (no branching), fast path.

    Tracks only the position difference (variance 4*alpha*t) and its band
    local time; a replica coalesces when 4*alpha*(occupation density) first
    exceeds alpha*tau/gamma.  Returns (times, censored) where censored marks
    replicas still uncoalesced at t_cap (their time is reported as t_cap).
    """
    if gamma <= 0:
        raise ValueError("pair coalescence needs gamma > 0")
    rng = generator(seed)
    eps = default_band(dt) if eps is None else eps
    sig = math.sqrt(4 * alpha * dt)
    coef = 4 * alpha * dt / (2 * eps)
    thr = alpha * rng.exponential(1.0, reps) / gamma
    times = np.full(reps, t_cap)
    censored = np.ones(reps, dtype=bool)
    idx = np.arange(reps)
    diff = np.full(reps, float(separation))
    lt = np.zeros(reps)
    chunk = 512
    n_steps = int(round(t_cap / dt))
    done_steps = 0
    while len(idx) and done_steps < n_steps:
        k = min(chunk, n_steps - done_steps)
        z = rng.normal(0.0, sig, (len(idx), k))
        path = diff[:, None] + np.cumsum(z, axis=1)
        hits = np.cumsum(np.abs(path) <= eps, axis=1) * coef + lt[:, None]
        crossed = hits >= thr[idx, None]
        any_cross = crossed.any(axis=1)
        first = np.argmax(crossed, axis=1)
        rows = np.flatnonzero(any_cross)
        times[idx[rows]] = (done_steps + first[rows] + 1) * dt
        censored[idx[rows]] = False
        keep = ~any_cross
        diff = path[keep, -1]
        lt = hits[keep, -1]
        idx = idx[keep]
        done_steps += k
    return times, censored


def coalescence_time_experiment(L, M, nu, n_reps, seed, v_cap=1000.0):
    """Rescaled coalescence times 2*nu*t0/L**2 of the discrete difference walk.

    The difference of the two sampled lineages jumps +-1 at total rate 2*nu
    (rate nu per direction) from initial separation L; on each landing at 0
    the pair coalesces with probability 1/M.  Runs are censored at rescaled
    time v_cap.  Returns (rescaled_times, censored).
    """
    rng = generator(seed)
    p_coal = 1.0 / M
    t_cap = v_cap * L * L / (2 * nu)
    times = np.full(n_reps, t_cap)
    censored = np.ones(n_reps, dtype=bool)
    idx = np.arange(n_reps)
    pos = np.full(n_reps, int(L), dtype=np.int64)
    t = np.zeros(n_reps)
    chunk = 512
    scale = 1.0 / (2 * nu)
    while len(idx):
        steps = rng.integers(0, 2, (len(idx), chunk), dtype=np.int8) * 2 - 1
        holds = rng.exponential(scale, (len(idx), chunk))
        path = pos[:, None] + np.cumsum(steps, axis=1, dtype=np.int64)
        cumt = t[:, None] + np.cumsum(holds, axis=1)
        hit = (path == 0) & (rng.random((len(idx), chunk)) < p_coal)
        hit &= cumt <= t_cap
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        rows = np.flatnonzero(any_hit)
        times[idx[rows]] = cumt[rows, first[rows]]
        censored[idx[rows]] = False
        over = cumt[:, -1] >= t_cap
        keep = ~any_hit & ~over
        pos = path[keep, -1]
        t = cumt[keep, -1]
        idx = idx[keep]
    return 2 * nu * times / (L * L), censored


@dataclass
class LimitLawSample:
    """Samples of the limiting rescaled coalescence time, with censoring."""

    values: np.ndarray
    censored: np.ndarray
    cap: float
    params: dict = field(default_factory=dict)

    @property
    def n_censored(self):
        return int(self.censored.sum())


def sample_limit_law(alpha, n_reps, dt, seed, cap=1e4, eps=None):
    """Sample the first time the local time at 0 of a standard Brownian
    motion started from 1 reaches alpha*tau, tau ~ Exp(1) independent.

    Local time is accumulated with the band estimator.  Runs not finished by
    the hard time cap are reported censored at the cap (not silently dropped).
    """
    rng = generator(seed)
    eps = default_band(dt) if eps is None else eps
    thr = alpha * rng.exponential(1.0, n_reps)
    sig = math.sqrt(dt)
    coef = dt / (2 * eps)
    values = np.full(n_reps, float(cap))
    censored = np.ones(n_reps, dtype=bool)
    idx = np.arange(n_reps)
    pos = np.ones(n_reps)
    lt = np.zeros(n_reps)
    chunk = 512
    n_steps = int(round(cap / dt))
    done_steps = 0
    while len(idx) and done_steps < n_steps:
        k = min(chunk, n_steps - done_steps)
        z = rng.normal(0.0, sig, (len(idx), k))
        path = pos[:, None] + np.cumsum(z, axis=1)
        hits = np.cumsum(np.abs(path) <= eps, axis=1) * coef + lt[:, None]
        # a zero threshold (alpha = 0) means the first entry into the band
        crossed = (hits >= thr[idx, None]) & (hits > 0)
        any_cross = crossed.any(axis=1)
        first = np.argmax(crossed, axis=1)
        rows = np.flatnonzero(any_cross)
        values[idx[rows]] = (done_steps + first[rows] + 1) * dt
        censored[idx[rows]] = False
        keep = ~any_cross
        pos = path[keep, -1]
        lt = hits[keep, -1]
        idx = idx[keep]
        done_steps += k
    return LimitLawSample(
        values=values,
        censored=censored,
        cap=cap,
        params={"alpha": alpha, "dt": dt, "eps": eps, "n_reps": n_reps},
    )


def crossing_times_for_taus(alpha, taus, dt, seed, cap=1e4, eps=None):
    """First band-local-time crossing times of levels alpha*tau for one fixed
    path (shared randomness across the tau values)."""
    rng = generator(seed)
    eps = default_band(dt) if eps is None else eps
    taus = np.asarray(taus, dtype=float)
    levels = alpha * taus
    out = np.full(len(taus), np.inf)
    pos = 1.0
    lt = 0.0
    t = 0.0
    todo = np.argsort(levels)
    ptr = 0
    n_steps = int(round(cap / dt))
    for _ in range(n_steps):
        pos += rng.normal(0.0, math.sqrt(dt))
        t += dt
        if abs(pos) <= eps:
            lt += dt / (2 * eps)
        while ptr < len(todo) and lt >= levels[todo[ptr]] and lt > 0:
            out[todo[ptr]] = t
            ptr += 1
        if ptr == len(todo):
            break
    return out

"""Harris graphical representation: shared randomness for forward and dual.

An event log is the time-sorted list of Poisson arrows on the torus over a
horizon [0, T]: voter arrows y -> x at rate r per directed neighbor slot and
selection arrows y -> x at rate theta/R.  Replayed forward it produces the
biased voter configuration; replayed backward from any time t <= T it yields
the ordered branching-coalescing dual of any root set.  Both replays read the
same arrows, which is what makes the duality identities pathwise exact.

Forward update per arrow y -> x: a voter arrow makes x imitate y in both
fields; a selection arrow does so only when xi(y) = 1.  Backward, a voter
arrow makes a dual particle at x jump to y and a selection arrow makes it
give birth at y, with collisions coalescing under the ancestry ordering of
:mod:`stepstone.dual`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._rng import substream, generator
from .dual import DualSample, DualSystem
from .forward import Configuration

__all__ = [
    "Arrow",
    "EventLog",
    "generate_event_log",
    "replay_forward",
    "replay_dual",
    "thin_selection",
    "log_rows",
]

VOTER, SELECTION = 0, 1


class Arrow(NamedTuple):
    time: float
    source: int
    target: int
    kind: int


@dataclass
class EventLog:
    """Immutable time-sorted arrow record, reproducible from its seed."""

    torus: object
    family: object
    T: float
    seed: object
    time: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    kind: np.ndarray

    def __len__(self):
        return len(self.time)

    def arrows(self):
        for i in range(len(self.time)):
            yield Arrow(self.time[i], int(self.src[i]), int(self.dst[i]), int(self.kind[i]))

    def n_selection(self):
        return int(self.kind.sum())


def generate_event_log(torus, family, T, seed):
    """Draw the full arrow record on `torus` over [0, T].

    Each directed neighbor slot carries an independent Poisson stream:
    voter arrows at rate r, selection arrows at rate theta/R.  Voter and
    selection streams use separate Philox substreams of `seed`, generated in
    a fixed canonical slot order, so the log is a pure function of
    (torus, family, T, seed).
    """
    if not (np.isfinite(T) and T > 0):
        raise ValueError("horizon T must be finite and positive")
    if torus.W < 2:
        raise ValueError("need at least 2 demes")
    tgt_tab, src_tab = torus.slot_tables()
    n_slots = torus.n_slots

    parts = []
    rates = [(VOTER, family.r, 0), (SELECTION, family.selection_rate, 1)]
    for kind, rate, stream in rates:
        if rate <= 0:
            continue
        rng = seed if isinstance(seed, np.random.Generator) else substream(seed, stream)
        counts = rng.poisson(rate * T, n_slots)
        total = int(counts.sum())
        times = rng.uniform(0.0, T, total)
        slots = np.repeat(np.arange(n_slots), counts)
        parts.append((times, slots, np.full(total, kind, dtype=np.uint8)))

    if parts:
        times = np.concatenate([p[0] for p in parts])
        slots = np.concatenate([p[1] for p in parts])
        kinds = np.concatenate([p[2] for p in parts])
    else:
        times = np.empty(0)
        slots = np.empty(0, dtype=np.int64)
        kinds = np.empty(0, dtype=np.uint8)

    src = src_tab[slots]
    dst = tgt_tab[slots]
    # ties are a.s. impossible; lexsort fixes a deterministic order anyway
    order = np.lexsort((kinds, dst, src, times))
    return EventLog(
        torus=torus,
        family=family,
        T=T,
        seed=seed,
        time=times[order],
        src=src[order],
        dst=dst[order],
        kind=kinds[order],
    )


def _upper_index(log, t):
    """Number of arrows with time <= t."""
    if t is None:
        return len(log.time)
    if t > log.T:
        raise ValueError("t exceeds the log horizon")
    return int(np.searchsorted(log.time, t, side="right"))


def replay_forward(log, xi0, eta0=None, t=None, sample_times=None):
    """Apply the log's arrows in time order to (xi0, eta0) up to time t.

    Returns (Configuration at t, snapshots at sample_times).  eta0 defaults
    to all zeros; eta0 <= xi0 is required.
    """
    torus = log.torus
    xi = np.asarray(xi0, dtype=np.int8).tolist()
    eta = (
        np.zeros(torus.n_sites, dtype=np.int8)
        if eta0 is None
        else np.asarray(eta0, dtype=np.int8)
    )
    if np.any(np.asarray(eta) > np.asarray(xi0)):
        raise ValueError("eta0 <= xi0 must hold pointwise")
    eta = np.asarray(eta).tolist()

    hi = _upper_index(log, t)
    t_end = log.T if t is None else t
    src = log.src[:hi].tolist()
    dst = log.dst[:hi].tolist()
    kinds = log.kind[:hi].tolist()
    times = log.time[:hi].tolist()

    sample_times = sorted(sample_times) if sample_times else []
    snapshots = []
    si = 0

    def snap_until(t_now):
        nonlocal si
        while si < len(sample_times) and sample_times[si] <= t_now:
            snapshots.append(
                Configuration(
                    torus,
                    np.array(xi, dtype=np.int8),
                    np.array(eta, dtype=np.int8),
                    time=sample_times[si],
                )
            )
            si += 1

    for i in range(hi):
        snap_until(times[i])
        x = dst[i]
        y = src[i]
        if kinds[i]:
            if xi[y]:
                xi[x] = 1
                eta[x] = eta[y]
        else:
            xi[x] = xi[y]
            eta[x] = eta[y]
    snap_until(t_end)

    final = Configuration(
        torus,
        np.array(xi, dtype=np.int8),
        np.array(eta, dtype=np.int8),
        time=t_end,
    )
    return final, snapshots


def replay_dual(log, t, roots, record_trajectory=False):
    """Read the log backward from time t with dual roots at the given sites.

    Arrows at forward time u <= t act at dual time s = t - u: a voter arrow
    y -> x moves a dual particle at x to y, a selection arrow y -> x makes a
    particle at x give birth at y.  Returns a DualSample with per-root ordered
    views and the union of occupied sites, i.e. the state at dual time s = t.
    """
    if not roots:
        raise ValueError("need at least one root site")
    hi = _upper_index(log, t)
    sys = DualSystem(list(roots))
    occ = sys.occ
    src = log.src[:hi].tolist()
    dst = log.dst[:hi].tolist()
    kinds = log.kind[:hi].tolist()
    times = log.time[:hi].tolist()
    trajectory = []
    if record_trajectory:
        trajectory.append((0.0, sys.all_view_sites()))
    for i in range(hi - 1, -1, -1):
        x = dst[i]
        if x not in occ:
            continue
        y = src[i]
        if kinds[i]:
            sys.birth(x, y)
        else:
            sys.jump(x, y)
        if record_trajectory:
            trajectory.append((t - times[i], sys.all_view_sites()))
    return DualSample(
        s=t,
        views=sys.all_view_sites(),
        union=sys.union_sites(),
        trajectory=trajectory,
    )


def thin_selection(log, keep_prob, seed):
    """Keep each selection arrow independently with probability keep_prob.

    Voter arrows are untouched.  Thinning a theta2-log with keep_prob =
    theta1/theta2 yields a theta1-log coupled to the original, which is the
    monotone coupling used by the selection-monotonicity tests.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError("keep_prob must be in [0, 1]")
    rng = generator(seed)
    keep = (log.kind == VOTER) | (rng.random(len(log)) < keep_prob)
    return EventLog(
        torus=log.torus,
        family=log.family,
        T=log.T,
        seed=(log.seed, "thinned"),
        time=log.time[keep],
        src=log.src[keep],
        dst=log.dst[keep],
        kind=log.kind[keep],
    )


def log_rows(log):
    """Rows (time, src_deme, src_cell, dst_deme, dst_cell, kind) for CSV."""
    M = log.torus.M
    return [
        (float(log.time[i]), int(log.src[i]) // M, int(log.src[i]) % M,
         int(log.dst[i]) // M, int(log.dst[i]) % M, int(log.kind[i]))
        for i in range(len(log))
    ]

"""Branching-coalescing random walk dual with ancestry ordering.

Dual particles live on the same deme lattice as the forward model.  Each
particle jumps to each of its 2*M neighbor slots at rate r and gives birth
onto each slot at rate theta/R.  A particle landing on an occupied site
coalesces with the resident.  The ancestry order makes the first occupied
entry of the list the true ancestor:

* a jump without collision leaves the order unchanged;
* on a collision the entry with the higher index is removed and the survivor
  carries the collision site;
* a newborn takes its parent's index and everything from that index up shifts
  by one (a birth landing on an occupied site is the insertion immediately
  followed by the collision rule).

Multi-root duals keep one physical particle per occupied site and one ordered
view per root.  A collision merges the physical particles; a view containing
both applies the higher-index rule, a view containing only one just follows
the merged particle.  This is the executable resolution of evaluating the
F/G functionals per root while the union process coalesces across roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import generator

__all__ = [
    "OrderedDual",
    "DualSample",
    "DualSystem",
    "apply_order_rules",
    "simulate_dual",
    "eval_F",
    "eval_G",
    "dual_trajectory_rows",
]


class _Particle:
    __slots__ = ("site",)

    def __init__(self, site):
        self.site = site

    def __repr__(self):
        return f"_Particle({self.site})"


@dataclass
class OrderedDual:
    """Single-root ordered dual state: sites listed in ancestry order
    (index 1 = first candidate ancestor) at dual time s."""

    particles: list
    s: float = 0.0


@dataclass
class DualSample:
    """Multi-root dual state: one ordered view per root plus the union."""

    s: float
    views: list
    union: list
    trajectory: list = field(default_factory=list)


class DualSystem:
    """Physical particle set with per-root ordered views."""

    def __init__(self, roots):
        self.occ = {}
        self.views = []
        for site in roots:
            p = self.occ.get(site)
            if p is None:
                p = _Particle(site)
                self.occ[site] = p
            self.views.append([p])

    @classmethod
    def from_ordered_sites(cls, sites):
        """One view holding the given (distinct) sites in the given order."""
        sys = cls([])
        view = []
        for site in sites:
            if site in sys.occ:
                raise ValueError("ordered dual may not repeat a site")
            p = _Particle(site)
            sys.occ[site] = p
            view.append(p)
        sys.views.append(view)
        return sys

    @property
    def n_particles(self):
        return len(self.occ)

    def view_sites(self, i=0):
        return [p.site for p in self.views[i]]

    def all_view_sites(self):
        return [[p.site for p in v] for v in self.views]

    def union_sites(self):
        return sorted(self.occ)

    def jump(self, x, y):
        """Particle at x jumps to y; returns True if it coalesced."""
        p = self.occ.pop(x)
        q = self.occ.get(y)
        if q is None:
            p.site = y
            self.occ[y] = p
            return False
        for view in self.views:
            ip = iq = -1
            for k, obj in enumerate(view):
                if obj is p:
                    ip = k
                elif obj is q:
                    iq = k
            if ip < 0:
                continue
            if iq < 0:
                view[ip] = q
            elif ip < iq:
                view.pop(iq)
                view[ip] = q
            else:
                view.pop(ip)
        return True

    def birth(self, x, y):
        """Particle at x gives birth at y; returns True if the offspring
        immediately coalesced."""
        p = self.occ[x]
        q = self.occ.get(y)
        if q is None:
            c = _Particle(y)
            self.occ[y] = c
            for view in self.views:
                for k, obj in enumerate(view):
                    if obj is p:
                        view.insert(k, c)
                        break
            return False
        for view in self.views:
            ip = iq = -1
            for k, obj in enumerate(view):
                if obj is p:
                    ip = k
                elif obj is q:
                    iq = k
            if ip < 0:
                continue
            if iq < 0:
                view.insert(ip, q)
            elif iq > ip:
                view.pop(iq)
                view.insert(ip, q)
            # iq < ip: offspring at ip would be the higher index, removed again
        return True

    def check_consistency(self):
        sites = set()
        for view in self.views:
            seen = set()
            for p in view:
                assert id(p) not in seen, "duplicate particle in a view"
                seen.add(id(p))
                assert self.occ.get(p.site) is p, "view references a dead particle"
                sites.add(p.site)
        assert sites == set(self.occ), "occupancy map out of sync with views"


def apply_order_rules(dual, event):
    """Apply one dual event to a single ordered list.

    `event` is ("jump", i, site) or ("birth", i, site) with a 1-based live
    index i.  Collisions are detected by site equality, exactly as in the
    stochastic dynamics.  Returns a new OrderedDual.
    """
    kind, index, site = event
    if not 1 <= index <= len(dual.particles):
        raise IndexError(f"stale dual index {index}")
    sys = DualSystem.from_ordered_sites(dual.particles)
    x = dual.particles[index - 1]
    if kind == "jump":
        sys.jump(x, site)
    elif kind == "birth":
        sys.birth(x, site)
    else:
        raise ValueError(f"unknown dual event kind {kind!r}")
    return OrderedDual(particles=sys.view_sites(0), s=dual.s)


class _UniformBuffer:
    """Chunked uniform draws from a Generator (single stream, deterministic)."""

    def __init__(self, rng, chunk=4096):
        self.rng = rng
        self.chunk = chunk
        self.buf = rng.random(chunk)
        self.i = 0

    def next(self):
        if self.i >= self.buf.shape[0]:
            self.buf = self.rng.random(self.chunk)
            self.i = 0
        v = self.buf[self.i]
        self.i += 1
        return v


def simulate_dual(roots, torus, family, s_max, seed, record_trajectory=False):
    """Run the branching-coalescing dual from the multiset `roots` of sites.

    Each physical particle jumps at total rate 2*M*r and branches at total
    rate 2*M*theta/R; collisions coalesce on exact site equality.  Returns a
    DualSample with one ordered view per root (views of coinciding roots share
    particles from the start).
    """
    if not roots:
        raise ValueError("need at least one root site")
    if s_max < 0:
        raise ValueError("s_max must be >= 0")
    sys = DualSystem(list(roots))
    rng = generator(seed)
    draws = _UniformBuffer(rng)
    M = torus.M
    two_m = 2 * M
    jump_rate = two_m * family.r
    birth_rate = two_m * family.selection_rate
    per_particle = jump_rate + birth_rate
    p_jump = jump_rate / per_particle
    trajectory = []
    if record_trajectory:
        trajectory.append((0.0, sys.all_view_sites()))
    s = 0.0
    while True:
        K = sys.n_particles
        total = K * per_particle
        s += -math.log(draws.next()) / total
        if s > s_max:
            break
        sites = list(sys.occ)
        x = sites[int(draws.next() * K)]
        slot = int(draws.next() * two_m)
        y = torus.neighbor_site(x, slot // M, slot % M)
        if draws.next() < p_jump:
            sys.jump(x, y)
        else:
            sys.birth(x, y)
        if record_trajectory:
            trajectory.append((s, sys.all_view_sites()))
    return DualSample(
        s=s_max,
        views=sys.all_view_sites(),
        union=sys.union_sites(),
        trajectory=trajectory,
    )


def _sites_of(dual):
    return dual.particles if hasattr(dual, "particles") else list(dual)


def eval_F(dual, xi0):
    """F = prod over the dual sites y of (1 - xi0(y)): the indicator (for
    binary xi0) that no listed site started occupied."""
    out = 1.0
    for y in _sites_of(dual):
        out *= 1.0 - xi0[y]
        if out == 0.0:
            break
    return out


def eval_G(dual, xi0, eta0):
    """G = sum_j eta0(y_j) * prod_{i<j} (1 - xi0(y_i)): for binary fields the
    indicator that the first occupied listed site is labeled."""
    out = 0.0
    pref = 1.0
    for y in _sites_of(dual):
        out += eta0[y] * pref
        pref *= 1.0 - xi0[y]
        if pref == 0.0:
            break
    return out


def dual_trajectory_rows(sample):
    """Flatten a recorded trajectory to (s, root, index, deme, cell) rows for
    CSV emission; index is the 1-based ancestry rank within the root's view."""
    rows = []
    for s, views in sample.trajectory:
        for root_id, view in enumerate(views):
            for rank, site in enumerate(view, start=1):
                rows.append((s, root_id, rank, site))
    return rows

import numpy as np
import pytest
from scipy import stats

from stepstone import ScalingFamily, Torus, simulate_dual
from stepstone.dual import dual_trajectory_rows
from stepstone.eventlog import generate_event_log, replay_dual


def test_single_particle_theta_zero_never_branches():
    torus = Torus(W=16, M=2)
    fam = ScalingFamily(L=16, M=2, R=4.0, r=1.0, theta=0.0)
    sample = simulate_dual([5], torus, fam, s_max=5.0, seed=1, record_trajectory=True)
    assert all(len(views[0]) == 1 for _, views in sample.trajectory)
    assert len(sample.union) == 1


def test_determinism():
    torus = Torus(W=8, M=2)
    fam = ScalingFamily(L=8, M=2, R=2.0, r=1.0, theta=1.0)
    a = simulate_dual([3, 10], torus, fam, s_max=2.0, seed=42)
    b = simulate_dual([3, 10], torus, fam, s_max=2.0, seed=42)
    assert a.views == b.views and a.union == b.union


def test_repeated_root_shares_particle():
    torus = Torus(W=8, M=1)
    fam = ScalingFamily(L=8, M=1, R=2.0, r=1.0, theta=0.0)
    sample = simulate_dual([4, 4], torus, fam, s_max=1.0, seed=7)
    assert len(sample.union) == 1
    assert sample.views[0] == sample.views[1]


def coalescence_time(sample):
    for s, views in sample.trajectory:
        sites = {p for v in views for p in v}
        if len(sites) == 1:
            return s
    return None


@pytest.mark.slow
def test_pair_coalescence_time_matches_cycle_walk():
    # theta = 0, M = 1: the deme difference walks a cycle of size W at total
    # rate 4r and coalescence is the first meeting, so E[t] = d(W-d)/(4r)
    torus = Torus(W=32, M=1)
    fam = ScalingFamily(L=32, M=1, R=2.0, r=1.0, theta=0.0)
    reps = 600
    for d in (2, 4, 8):
        times = []
        for i in range(reps):
            sample = simulate_dual(
                [0, d], torus, fam, s_max=4000.0, seed=(d, i), record_trajectory=True
            )
            t = coalescence_time(sample)
            assert t is not None
            times.append(t)
        times = np.array(times)
        expect = d * (torus.W - d) / (4 * fam.r)
        se = times.std(ddof=1) / np.sqrt(reps)
        assert abs(times.mean() - expect) <= 3 * se


def test_branching_increases_particles_and_stays_consistent():
    torus = Torus(W=12, M=2)
    fam = ScalingFamily(L=12, M=2, R=1.0, r=1.0, theta=2.0)
    sample = simulate_dual([0, 9], torus, fam, s_max=1.5, seed=3, record_trajectory=True)
    # per-root particle counts move by at most one per event (births add one,
    # coalescences remove exactly one; cross-root merges may touch both views)
    for root in (0, 1):
        sizes = [len(views[root]) for _, views in sample.trajectory]
        assert all(abs(a - b) <= 1 for a, b in zip(sizes, sizes[1:]))
    assert max(len(views[0]) + len(views[1]) for _, views in sample.trajectory) > 2
    rows = dual_trajectory_rows(sample)
    assert rows[0] == (0.0, 0, 1, 0)


@pytest.mark.slow
def test_gillespie_dual_matches_replay_dual_in_law():
    # the union set of the Gillespie dual and of the backward replay of a
    # fresh log agree in law (chi-square over observed union sets)
    torus = Torus(W=4, M=1)
    fam = ScalingFamily(L=4, M=1, R=2.0, r=1.0, theta=1.0)
    t, reps = 0.7, 3000
    roots = [1]

    def key(union):
        return tuple(sorted(union))

    counts_a, counts_b = {}, {}
    for i in range(reps):
        sample = simulate_dual(roots, torus, fam, s_max=t, seed=(7, i))
        counts_a[key(sample.union)] = counts_a.get(key(sample.union), 0) + 1
        log = generate_event_log(torus, fam, T=t, seed=(900_000 + i))
        sample = replay_dual(log, t, roots)
        counts_b[key(sample.union)] = counts_b.get(key(sample.union), 0) + 1

    keys = sorted(set(counts_a) | set(counts_b))
    a = np.array([counts_a.get(k, 0) for k in keys], float)
    b = np.array([counts_b.get(k, 0) for k in keys], float)
    # pool rare states so expected counts stay reasonable
    keep = (a + b) >= 10
    a = np.append(a[keep], a[~keep].sum())
    b = np.append(b[keep], b[~keep].sum())
    e = (a + b) / 2
    ok = e > 0
    stat = np.sum((a[ok] - e[ok]) ** 2 / e[ok] + (b[ok] - e[ok]) ** 2 / e[ok])
    p = stats.chi2.sf(stat, ok.sum() - 1)
    assert p > 1e-3


def test_validation_errors():
    torus = Torus(W=4, M=1)
    fam = ScalingFamily(L=4, M=1, R=2.0, r=1.0)
    with pytest.raises(ValueError):
        simulate_dual([], torus, fam, s_max=1.0, seed=0)
    with pytest.raises(ValueError):
        simulate_dual([0], torus, fam, s_max=-1.0, seed=0)

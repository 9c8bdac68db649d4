import numpy as np
import pytest

from stepstone import (
    ScalingFamily,
    Torus,
    eval_F,
    eval_G,
    generate_event_log,
    replay_dual,
    replay_forward,
    thin_selection,
)
from stepstone.eventlog import EventLog, log_rows


def small_family(theta=0.8, R=3.0):
    return ScalingFamily(L=8, M=2, R=R, r=1.0, theta=theta)


def test_determinism_same_seed_same_log():
    torus = Torus(W=6, M=2)
    fam = small_family()
    a = generate_event_log(torus, fam, T=1.5, seed=123)
    b = generate_event_log(torus, fam, T=1.5, seed=123)
    assert np.array_equal(a.time, b.time)
    assert np.array_equal(a.src, b.src)
    assert np.array_equal(a.dst, b.dst)
    assert np.array_equal(a.kind, b.kind)
    c = generate_event_log(torus, fam, T=1.5, seed=124)
    assert not np.array_equal(a.time, c.time)


def test_theta_zero_means_no_selection_arrows():
    torus = Torus(W=4, M=1)
    fam = ScalingFamily(L=4, M=1, R=2.0, r=1.0, theta=0.0)
    log = generate_event_log(torus, fam, T=5.0, seed=7)
    assert log.n_selection() == 0
    assert len(log) > 0


def test_arrows_sorted_and_neighbors():
    torus = Torus(W=5, M=2)
    log = generate_event_log(torus, small_family(), T=2.0, seed=5)
    assert np.all(np.diff(log.time) >= 0)
    src_deme = log.src // torus.M
    dst_deme = log.dst // torus.M
    d = (src_deme - dst_deme) % torus.W
    assert np.all((d == 1) | (d == torus.W - 1))
    assert np.all(log.src != log.dst)


def test_poisson_counts_per_slot():
    # W=2, M=1: 4 directed slots, each Poisson(r*T); pooled over seeds
    torus = Torus(W=2, M=1)
    fam = ScalingFamily(L=2, M=1, R=1.0, r=1.0, theta=0.0)
    T, n_seeds = 1000.0, 20
    counts = np.zeros(4)
    tgt_tab, src_tab = torus.slot_tables()
    for seed in range(n_seeds):
        log = generate_event_log(torus, fam, T=T, seed=900 + seed)
        for s in range(4):
            counts[s] += np.sum((log.dst == tgt_tab[s]) & (log.src == src_tab[s]))
    # W=2 wraps: slots (x, left) and (x, right) hit the same (src, dst) pair,
    # so each observed pair pools two slots
    mean_per_pair = counts / n_seeds
    se = np.sqrt(2 * T / n_seeds)
    assert np.all(np.abs(mean_per_pair - 2 * T) <= 3 * se)


def test_empty_log_replays_identity():
    torus = Torus(W=4, M=2)
    fam = ScalingFamily(L=4, M=2, R=2.0, r=1.0, theta=1.0)
    log = generate_event_log(torus, fam, T=1.0, seed=3)
    empty = EventLog(
        torus=torus, family=fam, T=1.0, seed=0,
        time=np.empty(0), src=np.empty(0, np.int32),
        dst=np.empty(0, np.int32), kind=np.empty(0, np.uint8),
    )
    xi0 = np.zeros(torus.n_sites, np.int8)
    xi0[::3] = 1
    final, _ = replay_forward(empty, xi0, xi0)
    assert np.array_equal(final.xi, xi0)
    assert np.array_equal(final.eta, xi0)
    sample = replay_dual(empty, 1.0, [5])
    assert sample.views == [[5]]
    assert sample.union == [5]
    del log


def test_all_ones_absorbing():
    torus = Torus(W=5, M=2)
    log = generate_event_log(torus, small_family(), T=3.0, seed=11)
    ones = np.ones(torus.n_sites, np.int8)
    final, _ = replay_forward(log, ones, ones)
    assert final.xi.min() == 1
    assert final.eta.min() == 1


def test_single_voter_arrow_copies_source():
    torus = Torus(W=4, M=1)
    fam = ScalingFamily(L=4, M=1, R=2.0, r=1.0, theta=0.5)
    mk = lambda kind: EventLog(
        torus=torus, family=fam, T=1.0, seed=0,
        time=np.array([0.5]), src=np.array([1], np.int32),
        dst=np.array([2], np.int32), kind=np.array([kind], np.uint8),
    )
    xi0 = np.array([0, 1, 0, 0], np.int8)
    eta0 = np.array([0, 1, 0, 0], np.int8)
    final, _ = replay_forward(mk(0), xi0, eta0)
    assert final.xi.tolist() == [0, 1, 1, 0]
    assert final.eta.tolist() == [0, 1, 1, 0]
    # selection arrow with source in state 1 acts the same way
    final, _ = replay_forward(mk(1), xi0, eta0)
    assert final.xi.tolist() == [0, 1, 1, 0]
    # selection arrow with source in state 0 is a no-op
    xi0b = np.array([0, 0, 1, 0], np.int8)
    final, _ = replay_forward(mk(1), xi0b, None)
    assert final.xi.tolist() == [0, 0, 1, 0]
    # but a voter arrow from a 0 source kills the target
    final, _ = replay_forward(mk(0), xi0b, None)
    assert final.xi.tolist() == [0, 0, 0, 0]


def figure_line_log():
    """Hand-built log reproducing the worked dual example on a line segment
    (demes shifted by +4 so the lattice stays non-negative; M=1)."""
    torus = Torus(W=8, M=1)
    fam = ScalingFamily(L=8, M=1, R=2.0, r=1.0, theta=1.0)
    # dual-time events from root site 5 (deme 1 in the example's coordinates),
    # listed with dual time s; forward time is T - s with T = 2
    dual_events = [
        (0.2, 4, 5, 1),  # birth at 0 (deme 4)
        (0.4, 6, 5, 0),  # jump 1 -> 2
        (0.6, 3, 4, 0),  # jump 0 -> -1
        (0.8, 7, 6, 1),  # birth at 3
        (1.0, 4, 3, 1),  # birth at 0 from -1
        (1.2, 5, 4, 0),  # jump 0 -> 1
        (1.4, 5, 6, 0),  # particle at 2 jumps onto 1: coalescence
        (1.6, 2, 3, 1),  # birth at -2
    ]
    times = np.array([2.0 - s for s, _, _, _ in dual_events])
    src = np.array([y for _, y, _, _ in dual_events], np.int32)
    dst = np.array([x for _, _, x, _ in dual_events], np.int32)
    kind = np.array([k for _, _, _, k in dual_events], np.uint8)
    order = np.argsort(times)
    return EventLog(
        torus=torus, family=fam, T=2.0, seed=0,
        time=times[order], src=src[order], dst=dst[order], kind=kind[order],
    )


def test_worked_example_through_replay_dual():
    log = figure_line_log()
    sample = replay_dual(log, 2.0, [5], record_trajectory=True)
    # ordered final state {1, -2, -1, 3} in shifted coordinates
    assert sample.views == [[5, 2, 3, 7]]
    assert sample.union == [2, 3, 5, 7]
    states = [views[0] for _, views in sample.trajectory]
    assert states == [
        [5],
        [4, 5],
        [4, 6],
        [3, 6],
        [3, 7, 6],
        [4, 3, 7, 6],
        [5, 3, 7, 6],
        [5, 3, 7],
        [5, 2, 3, 7],
    ]


def test_one_selection_arrow_dual_inserts_before():
    torus = Torus(W=6, M=1)
    fam = ScalingFamily(L=6, M=1, R=2.0, r=1.0, theta=1.0)
    log = EventLog(
        torus=torus, family=fam, T=1.0, seed=0,
        time=np.array([0.4]), src=np.array([2], np.int32),
        dst=np.array([3], np.int32), kind=np.array([1], np.uint8),
    )
    sample = replay_dual(log, 1.0, [3])
    assert sample.views == [[2, 3]]


def random_fields(torus, rng):
    xi0 = (rng.random(torus.n_sites) < 0.5).astype(np.int8)
    eta0 = np.where(rng.random(torus.n_sites) < 0.5, xi0, 0).astype(np.int8)
    return xi0, eta0


def test_pathwise_duality_exact():
    """Lemma-1 style identity plus the tracer reading, exactly, per seed."""
    torus = Torus(W=6, M=2)
    fam = small_family()
    T = 1.5
    rng = np.random.default_rng(2024)
    for seed in range(40):
        log = generate_event_log(torus, fam, T=T, seed=seed)
        for _ in range(3):
            k = int(rng.integers(1, 4))
            roots = rng.choice(torus.n_sites, size=k, replace=False).tolist()
            xi0, eta0 = random_fields(torus, rng)
            final, _ = replay_forward(log, xi0, eta0)
            sample = replay_dual(log, T, roots)
            # union reading: some root is type 1 iff some dual site started 1
            lhs = max(int(final.xi[z]) for z in roots)
            rhs = max(int(xi0[y]) for y in sample.union)
            assert lhs == rhs
            # per-root readings: type and tracer label
            for root, view in zip(roots, sample.views):
                assert int(final.xi[root]) == 1 - int(eval_F(view, xi0))
                assert int(final.eta[root]) == int(eval_G(view, xi0, eta0))
                assert np.all(final.eta <= final.xi)


def test_selection_monotonicity_by_thinning():
    torus = Torus(W=8, M=2)
    theta2 = 1.0
    fam2 = ScalingFamily(L=8, M=2, R=2.0, r=1.0, theta=theta2)
    theta1 = 0.4
    rng = np.random.default_rng(99)
    for seed in range(15):
        log2 = generate_event_log(torus, fam2, T=2.0, seed=seed)
        log1 = thin_selection(log2, keep_prob=theta1 / theta2, seed=seed + 1000)
        xi0 = (rng.random(torus.n_sites) < 0.4).astype(np.int8)
        hi, _ = replay_forward(log2, xi0)
        lo, _ = replay_forward(log1, xi0)
        assert np.all(lo.xi <= hi.xi)


def test_replay_dual_horizon_check():
    torus = Torus(W=4, M=1)
    fam = ScalingFamily(L=4, M=1, R=2.0, r=1.0)
    log = generate_event_log(torus, fam, T=1.0, seed=0)
    with pytest.raises(ValueError):
        replay_dual(log, 2.0, [0])
    with pytest.raises(ValueError):
        generate_event_log(torus, fam, T=0.0, seed=0)


def test_log_rows_roundtrip():
    torus = Torus(W=4, M=2)
    log = generate_event_log(torus, small_family(), T=0.5, seed=1)
    rows = log_rows(log)
    assert len(rows) == len(log)
    t, sd, sc, dd, dc, k = rows[0]
    assert sd * torus.M + sc == log.src[0]
    assert dd * torus.M + dc == log.dst[0]

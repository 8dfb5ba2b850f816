import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localspin.instance import Instance, g05, generate, ising, pm1d, pm1s, pw, stats, torus, w
from localspin.solver import (
    Hyperparams, RunResult, best_result, cut_value, cutoff, derive_seed, energy, energy_offset, evolve, force,
    gd_step, imag_step, initial_state, lt_step, maxcut_hamiltonian, round_spins, run, run_restarts,
)

SEVEN = [g05(20), pm1s(30), pm1d(20), w(20, 0.5), pw(20, 0.5), ising(20, 2.5), torus(2, 5)]
EDGE = Instance.from_edges(2, [(0, 1, 1.0)])
J2 = np.array([[0.0, 1.0], [1.0, 0.0]])


def random_spins(rng, n):
    return rng.choice(np.array([-1, 1]), size=n)


# --- objective -------------------------------------------------------------


def test_cut_value_examples():
    assert cut_value(EDGE, [1, -1]) == 1.0
    inst = generate(w(12, 0.6), 0)
    assert cut_value(inst, np.ones(12, dtype=int)) == 0.0
    assert cut_value(inst, -np.ones(12, dtype=int)) == 0.0


def test_length_mismatch_errors():
    with pytest.raises(ValueError):
        cut_value(EDGE, [1, 1, 1])
    with pytest.raises(ValueError):
        energy(J2, [1.0])
    with pytest.raises(ValueError):
        force(J2, np.zeros(3))


def test_energy_examples():
    assert energy(J2, [0.0, 0.0]) == 0.0
    assert energy(J2, [1.0, -1.0]) == -1.0
    rng = np.random.default_rng(0)
    inst = generate(pm1d(15), 1)
    for _ in range(20):
        v = rng.uniform(-1, 1, 15)
        assert energy(inst.coupling, v) == pytest.approx(energy(inst.coupling, -v), abs=1e-12)


def test_force_examples():
    assert np.array_equal(force(J2, [0.0, 0.0]), [0.0, 0.0])
    assert np.array_equal(force(J2, [1.0, 0.0]), [0.0, -1.0])


def test_force_is_negative_gradient():
    rng = np.random.default_rng(1)
    eps = 1e-5
    for k in range(50):
        inst = generate(SEVEN[k % 7], k)
        J = inst.coupling
        v = rng.uniform(-1, 1, inst.n)
        f = force(J, v)
        fd = np.empty(inst.n)
        for i in range(inst.n):
            e = np.zeros(inst.n)
            e[i] = eps
            fd[i] = -(energy(J, v + e) - energy(J, v - e)) / (2 * eps)
        assert np.max(np.abs(f - fd)) <= 1e-6


def test_cut_matches_energy_offset():
    rng = np.random.default_rng(2)
    inst = generate(w(10, 0.7), 4)
    for _ in range(100):
        s = random_spins(rng, 10)
        h = maxcut_hamiltonian(inst, s)
        assert h == pytest.approx(-cut_value(inst, s), rel=1e-9, abs=1e-12)
        assert h == pytest.approx(energy(inst.coupling, s) - energy_offset(inst), rel=1e-9, abs=1e-12)


# --- single steps ----------------------------------------------------------


def test_cutoff_values():
    assert cutoff(0.5) == 0.5
    assert cutoff(-3.0) == -1.0
    assert cutoff(1.0) == 1.0


def test_zero_is_a_fixed_point():
    inst = generate(g05(10), 0)
    z = np.zeros(10)
    assert not np.any(lt_step(z, inst.coupling, 1.0, 0.7))
    assert not np.any(gd_step(z, inst.coupling, 1.0, 0.7))
    assert not np.any(imag_step(z, inst.coupling, 0.1))


def test_lt_saturates_to_sign_at_large_beta():
    rng = np.random.default_rng(3)
    inst = generate(g05(10), 0)
    v = rng.uniform(-1, 1, 10)
    assert np.array_equal(lt_step(v, inst.coupling, 0.0, 1e6), np.sign(v))


def test_gd_and_lt_differ_by_activation_gap():
    rng = np.random.default_rng(4)
    for k in range(20):
        inst = generate(SEVEN[k % 7], k)
        st_ = stats(inst)
        eta, beta = 1.0, 0.5
        c = eta * st_.cbar
        v = rng.uniform(-1, 1, inst.n)
        x = beta * (v + c * force(inst.coupling, v))
        bound = np.max(np.abs(x - np.tanh(x)))
        gap = np.max(np.abs(gd_step(v, inst.coupling, c, beta) - lt_step(v, inst.coupling, c, beta)))
        assert gap <= bound + 1e-15


def test_imag_dtau_zero_is_identity():
    rng = np.random.default_rng(5)
    inst = generate(pm1d(12), 2)
    v = rng.uniform(-0.99, 0.99, 12)
    assert np.allclose(imag_step(v, inst.coupling, 0.0), v, atol=1e-15)


def test_imag_rejects_out_of_range():
    with pytest.raises(ValueError):
        imag_step(np.array([1.5, 0.0]), J2, 0.1)


def test_imag_clamps_saturated_entries():
    out = imag_step(np.array([1.0, -1.0]), J2, 0.1)
    assert np.all(np.abs(out) < 1.0)


def test_imag_slope_matches_ode_first_order():
    rng = np.random.default_rng(6)
    for k in range(10):
        inst = generate(SEVEN[k % 7], 100 + k)
        J = inst.coupling
        v = rng.uniform(-0.9, 0.9, inst.n)
        rhs = -2.0 * (1.0 - v**2) * (J.matrix @ v)
        h = 1e-2 / (1.0 + np.max(np.abs(J.matrix @ v)))
        slope = {dt: (imag_step(v, J, dt) - v) / dt for dt in (h, h / 2, h / 4)}
        errs = [np.max(np.abs(slope[dt] - rhs)) for dt in (h, h / 2, h / 4)]
        assert errs[0] / errs[1] >= 1.9
        assert errs[1] / errs[2] >= 1.9
        # Richardson extrapolation removes the first-order term
        rich = 2 * slope[h / 4] - slope[h / 2]
        assert np.max(np.abs(rich - rhs)) < errs[2] / 10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 6), st.integers(0, 10**6), st.floats(0.05, 4.0), st.floats(0.05, 3.0))
def test_steps_stay_bounded(fam, seed, c, beta):
    inst = generate(SEVEN[fam], seed)
    v = np.random.default_rng(seed).uniform(-1, 1, inst.n)
    assert np.all(np.abs(lt_step(v, inst.coupling, c, beta)) <= 1.0)
    assert np.all(np.abs(gd_step(v, inst.coupling, c, beta)) <= 1.0)
    assert np.all(np.abs(imag_step(v, inst.coupling, c)) < 1.0)


def test_lt_step_is_synchronous():
    rng = np.random.default_rng(7)
    inst = generate(w(15, 0.5), 3)
    Jd = inst.coupling.dense()
    v = rng.uniform(-1, 1, 15)
    c, beta = 0.3, 0.8
    snapshot = v.copy()
    ref = np.empty_like(v)
    for i in range(15):
        ref[i] = np.tanh(beta * (snapshot[i] - c * Jd[i] @ snapshot))
    assert np.allclose(lt_step(v, inst.coupling, c, beta), ref, atol=1e-14)
    assert np.array_equal(v, snapshot)


def test_rounding():
    assert list(round_spins([0.3, -0.7])) == [1, -1]
    assert list(round_spins([0.0, -0.1])) == [1, -1]
    v = np.random.default_rng(8).uniform(-1, 1, 50)
    assert np.array_equal(round_spins(-v), -round_spins(v))


# --- runs -------------------------------------------------------------------


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        Hyperparams(eta=0.0)
    with pytest.raises(ValueError):
        Hyperparams(beta=-1.0)
    with pytest.raises(ValueError):
        Hyperparams(threshold=-1e-3)
    with pytest.raises(ValueError):
        Hyperparams(variant="imag")
    with pytest.raises(ValueError):
        Hyperparams(variant="sa")
    Hyperparams(variant="imag", dtau=0.1)


def test_single_edge_run_finds_cut():
    hp = Hyperparams(eta=1.0, beta=1.0, max_rounds=1000, threshold=1e-6)
    for seed in range(50):
        r = run(EDGE, hp, seed)
        assert r.cut == 1.0
        assert r.energy == -0.5
        assert r.converged


def test_run_result_fields_consistent():
    inst = generate(g05(16), 0)
    r = run(inst, Hyperparams(), 3)
    assert len(r.spins) == 16 and set(np.unique(r.spins)) <= {-1, 1}
    assert len(r.displacement_trace) == r.rounds_used
    assert r.cut == cut_value(inst, r.spins)
    assert r.energy == pytest.approx(energy_offset(inst) - r.cut)
    assert r.converged == (r.displacement_trace[-1] < 1e-6)


def test_run_result_json_round_trip():
    r = run(generate(pw(12, 0.5), 1), Hyperparams(), 9)
    data = r.to_json(trace=True)
    assert set(data) == {"spins", "cut", "energy", "rounds", "converged", "wall_time_s", "trace"}
    back = RunResult.from_json(data)
    assert np.array_equal(back.spins, r.spins) and back.cut == r.cut and back.rounds_used == r.rounds_used
    assert "wall_time_s" not in r.to_json(timing=False)
    assert "trace" not in r.to_json()


def test_runs_are_deterministic():
    inst = generate(w(40, 0.5), 0)
    hp = Hyperparams(beta=0.4)
    a, b = run(inst, hp, 77), run(inst, hp, 77)
    assert np.array_equal(a.spins, b.spins)
    assert a.displacement_trace == b.displacement_trace


def test_restarts_identical_across_thread_counts():
    inst = generate(pm1s(60), 2)
    hp = Hyperparams(beta=0.45)
    ref = run_restarts(inst, hp, 5, 17, threads=1, record_trace=True)
    for threads in (2, 4, 17):
        other = run_restarts(inst, hp, 5, 17, threads=threads, record_trace=True)
        for x, y in zip(ref, other):
            assert np.array_equal(x.spins, y.spins)
            assert x.rounds_used == y.rounds_used
            assert x.displacement_trace == y.displacement_trace


def test_single_restart_equals_single_run():
    inst = generate(g05(30), 1)
    hp = Hyperparams()
    (a,) = run_restarts(inst, hp, 11, 1, record_trace=True)
    b = run(inst, hp, derive_seed(11, 0))
    assert np.array_equal(a.spins, b.spins)
    assert a.displacement_trace == b.displacement_trace


def test_restart_batch_does_not_change_columns():
    inst = generate(ising(30, 2.5), 0)
    hp = Hyperparams(beta=0.6)
    batch = run_restarts(inst, hp, 0, 10, record_trace=True)
    for k in (0, 4, 9):
        alone = run(inst, hp, derive_seed(0, k))
        assert np.array_equal(batch[k].spins, alone.spins)
        assert batch[k].displacement_trace == alone.displacement_trace


@pytest.mark.parametrize("variant", ["lt", "gd"])
def test_spin_flip_symmetry(variant):
    inst = generate(w(30, 0.5), 6)
    hp = Hyperparams(beta=0.5, variant=variant)
    v0 = initial_state(30, 123)
    a = run(inst, hp, 0, initial=v0)
    b = run(inst, hp, 0, initial=-v0)
    assert np.array_equal(a.spins, -b.spins)
    assert a.rounds_used == b.rounds_used


def test_imag_variant_runs():
    inst = generate(torus(2, 4), 0)
    r = run(inst, Hyperparams(variant="imag", dtau=0.05), 1)
    assert r.cut >= 0 and r.rounds_used >= 1


def test_fixed_point_residue():
    inst = generate(g05(40), 0)
    hp = Hyperparams(eta=1.0, beta=0.5)
    V, rounds, conv, _ = evolve(inst, hp, initial_state(40, 3)[:, None])
    assert conv[0]
    c = hp.eta * stats(inst).cbar
    v = V[:, 0]
    assert np.max(np.abs(lt_step(v, inst.coupling, c, hp.beta) - v)) <= hp.threshold


def test_contraction_tail():
    inst = generate(w(100, 0.5), 0)
    hp = Hyperparams(eta=1.0, beta=0.5)
    for r in run_restarts(inst, hp, 0, 10, record_trace=True):
        assert r.converged
        tail = np.asarray(r.displacement_trace[-20:])
        assert np.all(np.diff(tail) <= 1e-12)
        nonzero = tail[tail > 0]
        slope = np.polyfit(np.arange(nonzero.size), np.log(nonzero), 1)[0]
        assert slope < 0


def test_best_result_prefers_earliest_tie():
    inst = generate(g05(16), 0)
    rs = run_restarts(inst, Hyperparams(), 0, 20)
    best = best_result(rs)
    assert best.cut == max(r.cut for r in rs)
    assert best is next(r for r in rs if r.cut == best.cut)


def test_all_zero_instance_errors():
    with pytest.raises(ValueError):
        run(Instance(3, ()), Hyperparams(), 0)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle
from spingate.cavity import CavityParams, empty_cavity_coeffs
from spingate.errors import InvalidParameter, NonNormalizedInput
from spingate.gate import build_gate
from spingate.protocols import (
    DephasingParams,
    dephasing_kraus,
    entangle_photons,
    entangle_spins,
    entanglement_fidelity,
    ghz_photons,
    ghz_spins,
    mean_transfer_fidelity,
    photon_to_spin,
    qnd_spin_measurement,
    spin_dephase,
    spin_to_photon,
)
from spingate.qstate import concurrence, partial_trace, state_fidelity

S = 1 / math.sqrt(2)
STRONG = CavityParams(g=2.4, gamma=0.1)
IDEAL = build_gate(STRONG, 0.0, "ideal")  # t0 = -1 exactly at resonance
FULL = build_gate(STRONG, 0.0, "full")
BAL = (S, S)


def random_qubit(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return tuple(v / np.linalg.norm(v))


def overlap(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)


def sigma(p, n):
    return math.sqrt(p * (1 - p) / n)


def strong_params(rng):
    return CavityParams(g=rng.uniform(1.5, 4), kappa_s=rng.uniform(0, 0.3), gamma=rng.uniform(0, 0.3),
                        omega_x=rng.uniform(-0.1, 0.1))


class TestQND:
    def test_up_always_r(self):
        out = qnd_spin_measurement((1, 0), IDEAL, herald=None)
        assert out.herald == [("photon helicity", "R")]
        assert out.p_success == pytest.approx(0.5, abs=1e-12)
        assert out.herald_probs == {"R": pytest.approx(0.5)}
        np.testing.assert_allclose(out.final.amplitudes, [-1, 0], atol=1e-15)

    def test_balanced_conditional_probabilities(self):
        out = qnd_spin_measurement(BAL, IDEAL, herald="L")
        assert out.p_herald / out.p_success == pytest.approx(0.5, abs=1e-12)
        assert out.target_overlap == pytest.approx(1.0, abs=1e-12)
        assert abs(out.final.amplitudes[1]) == pytest.approx(1.0)

    def test_repeatability(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            first = qnd_spin_measurement(random_qubit(rng), IDEAL, rng)
            again = qnd_spin_measurement(tuple(first.final.amplitudes), IDEAL, rng)
            assert again.herald == first.herald
            assert again.herald_probs.keys() == {first.herald_label}

    def test_monte_carlo_frequencies(self):
        out = qnd_spin_measurement((0.6, 0.8), IDEAL, trials=10 ** 5, seed=3)
        n = out.trials.n_success
        assert abs(out.trials.n_success / 10 ** 5 - 0.5) < 3 * sigma(0.5, 10 ** 5)
        assert abs(out.trials.counts["R"] / n - 0.36) < 3 * sigma(0.36, n)
        assert abs(out.trials.counts["L"] / n - 0.64) < 3 * sigma(0.64, n)

    def test_full_gate_matches_oracle(self):
        te, tc = oracle.transmissions(2.4, 1, 0, 0.1, 0, 0, 0.0)
        ref = oracle.qnd((0.6, 0.8j), te, tc)
        for h in ("R", "L"):
            out = qnd_spin_measurement((0.6, 0.8j), FULL, herald=h)
            assert out.p_herald == pytest.approx(np.vdot(ref[h], ref[h]).real, rel=1e-12)
            assert overlap(out.final.amplitudes, ref[h]) == pytest.approx(1, abs=1e-12)

    def test_rejects_unnormalised(self):
        with pytest.raises(NonNormalizedInput):
            qnd_spin_measurement((1, 1), IDEAL)

    def test_unknown_herald(self):
        with pytest.raises(InvalidParameter):
            qnd_spin_measurement((1, 0), IDEAL, herald="L")


class TestEntangleSpins:
    def test_balanced_bell_pair(self):
        out = entangle_spins(BAL, BAL, IDEAL, IDEAL, herald="H")
        assert out.protocol == "entangle_spins"
        assert concurrence(out.final) == pytest.approx(1, abs=1e-9)
        np.testing.assert_allclose(abs(out.final.amplitudes), [S, 0, 0, S], atol=1e-15)
        # |H> projection on a two-branch photon: (1/2)^2 per spin branch, both heralds together
        assert out.p_success == pytest.approx(0.25, abs=1e-12)
        assert out.herald_probs == {"H": pytest.approx(0.125), "V": pytest.approx(0.125)}

    def test_v_herald_minus_sign(self):
        out = entangle_spins(BAL, BAL, IDEAL, IDEAL, herald="V")
        a = out.final.amplitudes
        assert a[3] / a[0] == pytest.approx(-1)
        assert out.target_overlap == pytest.approx(1, abs=1e-12)

    def test_correction_removes_sign(self):
        out = entangle_spins(BAL, BAL, IDEAL, IDEAL, herald="V", correct=True)
        a = out.final.amplitudes
        assert a[3] / a[0] == pytest.approx(1)

    def test_product_when_spin2_up(self):
        out = entangle_spins(BAL, (1, 0), IDEAL, IDEAL)
        assert concurrence(out.final) == pytest.approx(0, abs=1e-12)
        assert abs(out.final.amplitudes[0]) == pytest.approx(1)

    def test_unbalanced(self):
        out = entangle_spins((0.6, 0.8), (0.6, 0.8), IDEAL, IDEAL, herald="H")
        ref = np.array([0.36, 0, 0, 0.64]) / math.hypot(0.36, 0.64)
        assert overlap(out.final.amplitudes, ref) == pytest.approx(1, abs=1e-12)
        # oracle value: sum of squared norms of the two photon-readout branches
        assert out.p_success == pytest.approx(0.2696, abs=1e-12)

    def test_oracle_ideal_unbalanced(self):
        ref = oracle.spin_chain([(0.6, 0.8), (0.6, 0.8)], [(-1, 0), (-1, 0)])
        assert sum(np.vdot(v, v).real for v in ref.values()) == pytest.approx(0.2696, abs=1e-12)


class TestGHZSpins:
    def test_n2_equals_entangle_spins(self):
        a = ghz_spins([BAL, (0.6, 0.8)], [IDEAL, FULL], herald="V")
        b = entangle_spins(BAL, (0.6, 0.8), IDEAL, FULL, herald="V")
        np.testing.assert_array_equal(a.final.amplitudes, b.final.amplitudes)
        assert a.p_success == b.p_success

    def test_n3_pairs_separable(self):
        out = ghz_spins([BAL] * 3, [IDEAL] * 3, herald="H")
        assert overlap(out.final.amplitudes, oracle.ghz_ket(3)) == pytest.approx(1, abs=1e-12)
        for keep in ([0, 1], [0, 2], [1, 2]):
            assert concurrence(partial_trace(out.density, keep)) == pytest.approx(0, abs=1e-9)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_ghz_probability(self, n):
        out = ghz_spins([BAL] * n, [IDEAL] * n)
        ref = oracle.spin_chain([BAL] * n, [(-1, 0)] * n)
        assert out.p_success == pytest.approx(sum(np.vdot(v, v).real for v in ref.values()), abs=1e-12)
        assert out.p_success == pytest.approx(0.5 ** n, abs=1e-12)

    def test_n4_overlap(self):
        for h, sign in (("H", 1), ("V", -1)):
            out = ghz_spins([BAL] * 4, [IDEAL] * 4, herald=h)
            assert overlap(out.final.amplitudes, oracle.ghz_ket(4, sign)) == pytest.approx(1, abs=1e-12)

    def test_validation(self):
        with pytest.raises(InvalidParameter):
            ghz_spins([BAL], [IDEAL])
        with pytest.raises(InvalidParameter):
            ghz_spins([BAL, BAL], [IDEAL])


class TestEntanglePhotons:
    def test_bell_pair(self):
        out = entangle_photons((S, S, 0.0), (S, S, 0.0), STRONG, herald="up")
        assert out.p_success == pytest.approx(0.25, abs=1e-12)
        assert concurrence(out.final) == pytest.approx(1, abs=1e-9)
        assert overlap(out.final.amplitudes, oracle.ghz_ket(2)) == pytest.approx(1, abs=1e-12)
        down = entangle_photons((S, S, 0.0), (S, S, 0.0), STRONG, herald="down")
        assert overlap(down.final.amplitudes, oracle.ghz_ket(2, -1)) == pytest.approx(1, abs=1e-12)

    def test_product_when_ph2_r(self):
        out = entangle_photons((S, S, 0.0), (1, 0, 0.0), STRONG)
        assert abs(out.final.amplitudes[0]) == pytest.approx(1)

    def test_detuned_full_gates_closed_form(self):
        w1, w2 = 0.1, -0.15
        out = entangle_photons((S, S, w1), (S, S, w2), STRONG, mode="full")
        t1, t2 = (abs(empty_cavity_coeffs(STRONG, w).t) for w in (w1, w2))
        te1, tc1 = oracle.transmissions(2.4, 1, 0, 0.1, 0, 0, w1)
        te2, tc2 = oracle.transmissions(2.4, 1, 0, 0.1, 0, 0, w2)
        ref = oracle.photon_chain([BAL, BAL], [(te1, tc1), (te2, tc2)])
        p_ref = sum(np.vdot(v, v).real for v in ref.values())
        assert out.p_success == pytest.approx(p_ref, abs=1e-12)
        assert out.p_success == pytest.approx(t1 ** 2 * t2 ** 2 / 4, abs=1e-3)
        ideal = entangle_photons((S, S, w1), (S, S, w2), STRONG, mode="ideal")
        assert ideal.p_success == pytest.approx(t1 ** 2 * t2 ** 2 / 4, abs=1e-12)

    def test_outside_window_warns(self):
        with pytest.warns(UserWarning, match="outside"):
            entangle_photons((S, S, 1.5), (S, S, 0.0), STRONG)

    def test_physical_qnd_halves(self):
        proj = entangle_photons((S, S, 0.0), (S, S, 0.0), STRONG)
        phys = entangle_photons((S, S, 0.0), (S, S, 0.0), STRONG, qnd="physical", herald="down")
        assert phys.p_success == pytest.approx(proj.p_success / 2, abs=1e-12)
        assert overlap(phys.final.amplitudes, oracle.ghz_ket(2, -1)) == pytest.approx(1, abs=1e-12)

    def test_bad_qnd_mode(self):
        with pytest.raises(InvalidParameter):
            entangle_photons((S, S, 0.0), (S, S, 0.0), STRONG, qnd="weak")


class TestGHZPhotons:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_probability(self, n):
        out = ghz_photons([(S, S, 0.0)] * n, STRONG)
        assert out.p_success == pytest.approx(0.5 ** n, abs=1e-12)

    def test_n3_state(self):
        out = ghz_photons([(S, S, 0.0)] * 3, STRONG, herald="down", correct=True)
        assert overlap(out.final.amplitudes, oracle.ghz_ket(3)) == pytest.approx(1, abs=1e-12)
        assert out.target_overlap == pytest.approx(1, abs=1e-12)

    def test_n2_equals_entangle_photons(self):
        a = ghz_photons([(S, S, 0.0), (0.6, 0.8, 0.1)], STRONG, mode="full", herald="up")
        b = entangle_photons((S, S, 0.0), (0.6, 0.8, 0.1), STRONG, mode="full", herald="up")
        np.testing.assert_array_equal(a.final.amplitudes, b.final.amplitudes)

    def test_monte_carlo(self):
        out = ghz_photons([(S, S, 0.0)] * 3, STRONG, trials=10 ** 5, seed=2024)
        assert abs(out.trials.success_fraction - 0.125) < 3 * sigma(0.125, 10 ** 5)
        assert sum(out.trials.counts.values()) == 10 ** 5

    def test_workers_do_not_change_tally(self):
        a = ghz_photons([(S, S, 0.0)] * 3, STRONG, trials=50_000, seed=9, workers=1).trials
        b = ghz_photons([(S, S, 0.0)] * 3, STRONG, trials=50_000, seed=9, workers=4).trials
        assert a == b

    def test_seeds_differ(self):
        a = ghz_photons([(S, S, 0.0)] * 2, STRONG, trials=20_000, seed=1).trials
        b = ghz_photons([(S, S, 0.0)] * 2, STRONG, trials=20_000, seed=2).trials
        assert a.counts != b.counts


class TestDephasing:
    def test_spin_dephase_limits(self):
        np.testing.assert_allclose(spin_dephase(DephasingParams(0, 1)).matrix, np.full((2, 2), 0.5))
        np.testing.assert_allclose(spin_dephase(DephasingParams(1e3, 1)).matrix, np.eye(2) / 2, atol=1e-300)
        rho = spin_dephase(DephasingParams(math.log(2), 1)).matrix
        assert rho[0, 1] == pytest.approx(0.25, abs=1e-15)

    def test_fidelity_values(self):
        assert entanglement_fidelity(DephasingParams(0, 3)) == 1
        assert entanglement_fidelity(DephasingParams(3, 3)) == pytest.approx(0.6839397205857211608, abs=1e-15)
        assert entanglement_fidelity(DephasingParams(30, 3)) == pytest.approx(0.50002269996488124243, abs=1e-15)

    @given(st.floats(0, 50), st.floats(0.01, 50))
    def test_fidelity_bounds(self, t, dt):
        p, q = DephasingParams(t, 1), DephasingParams(t + dt, 1)
        assert 0 < q.coherence < p.coherence <= 1
        # in floats the fidelity reaches the 1/2 floor once e^-t/2 < ulp(1/2)/2
        a, b = entanglement_fidelity(p), entanglement_fidelity(q)
        assert 0.5 <= b <= a <= 1
        if a - 0.5 > 1e-15:
            assert b < a
        ev = np.linalg.eigvalsh(spin_dephase(DephasingParams(t, 1)).matrix)
        assert np.all((ev >= -1e-15) & (ev <= 1 + 1e-15))

    def test_validation(self):
        with pytest.raises(InvalidParameter):
            DephasingParams(-1, 1)
        with pytest.raises(InvalidParameter):
            DephasingParams(1, 0)
        with pytest.warns(UserWarning, match="T1"):
            DephasingParams(2, 1, T1=10)

    def test_kraus_complete(self):
        ks = dephasing_kraus(DephasingParams(0.7, 1))
        np.testing.assert_allclose(sum(k.conj().T @ k for k in ks), np.eye(2), atol=1e-15)

    @pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 4.0])
    def test_photon_pair_fidelity(self, t):
        p = DephasingParams(t, 1.0)
        for h in ("up", "down"):
            out = entangle_photons((S, S, 0.0), (S, S, 0.0), STRONG, herald=h, correct=True, dephasing=p)
            assert out.final is None or t == 0
            assert out.target_overlap == pytest.approx(entanglement_fidelity(p), abs=1e-12)
            assert out.p_success == pytest.approx(0.25, abs=1e-12)

    def test_matches_density_oracle_full_gates(self):
        p = DephasingParams(0.8, 1.0)
        photons = [(0.6, 0.8j, 0.05), (S, -S, -0.1), (0.8, 0.6, 0.0)]
        coeffs = [oracle.transmissions(2.4, 1, 0, 0.1, 0, 0, w) for *_, w in photons]
        ref = oracle.photon_chain([ph[:2] for ph in photons], coeffs, kraus=dephasing_kraus(p))
        for h in ("up", "down"):
            out = ghz_photons(photons, STRONG, mode="full", dephasing=p, herald=h)
            assert out.p_herald == pytest.approx(np.trace(ref[h]).real, abs=1e-12)
            np.testing.assert_allclose(out.density.matrix * out.p_herald, ref[h], atol=1e-12)


class TestTransfer:
    def test_basis_inputs(self):
        for h in ("H", "V"):
            out = photon_to_spin((1, 0), IDEAL, herald=h)
            assert abs(out.final.amplitudes[0]) == pytest.approx(1)
        out = spin_to_photon((1, 0), IDEAL)
        assert abs(out.final.amplitudes[0]) == pytest.approx(1)

    def test_random_photon_to_spin(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            v = random_qubit(rng)
            out = photon_to_spin(v, IDEAL, herald="H")
            assert state_fidelity(out.final, out.target) == pytest.approx(1, abs=1e-12)
            assert overlap(out.final.amplitudes, v) == pytest.approx(1, abs=1e-12)
            assert out.p_success == pytest.approx(0.5, abs=1e-12)

    def test_random_spin_to_photon_corrected(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            v = random_qubit(rng)
            for h in ("up", "down"):
                out = spin_to_photon(v, IDEAL, herald=h, correct=True)
                assert overlap(out.final.amplitudes, v) == pytest.approx(1, abs=1e-12)
                assert out.p_success == pytest.approx(0.5, abs=1e-12)

    def test_uncorrected_v_herald_flips_sign(self):
        out = photon_to_spin((S, S), IDEAL, herald="V")
        a = out.final.amplitudes
        assert a[1] / a[0] == pytest.approx(-1)

    def test_round_trip(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            v = random_qubit(rng)
            a = photon_to_spin(v, IDEAL, rng, correct=True)
            b = spin_to_photon(tuple(a.final.amplitudes), IDEAL, rng, correct=True)
            assert overlap(b.final.amplitudes, v) == pytest.approx(1, abs=1e-12)
            assert a.p_success * b.p_success == pytest.approx(0.25, abs=1e-12)

    def test_physical_qnd_spin_to_photon(self):
        out = spin_to_photon((0.6, 0.8), IDEAL, qnd="physical", herald="down", correct=True)
        assert out.p_success == pytest.approx(0.25, abs=1e-12)
        assert overlap(out.final.amplitudes, (0.6, 0.8)) == pytest.approx(1, abs=1e-12)

    def test_side_leakage_scales_probability(self):
        gate = build_gate(STRONG.with_(kappa_s=0.5), 0.0, "ideal")
        out = photon_to_spin((0.6, 0.8), gate)
        assert out.p_success == pytest.approx(abs(gate.t0) ** 2 / 2, abs=1e-12)

    def test_mean_transfer_fidelity(self):
        ideal = mean_transfer_fidelity(IDEAL, 20, np.random.default_rng(1))
        assert ideal == pytest.approx(1, abs=1e-12)
        weak = build_gate(CavityParams(g=0.8, gamma=0.1), 0.0, "full")
        f = mean_transfer_fidelity(weak, 20, np.random.default_rng(1), "spin_to_photon")
        assert 0.5 < f < 1
        with pytest.raises(InvalidParameter):
            mean_transfer_fidelity(IDEAL, 1, np.random.default_rng(1), "sideways")


class TestOracleFullGates:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_ghz_spins(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 5))
        params = [strong_params(rng) for _ in range(n)]
        w = rng.uniform(-0.3, 0.3)
        spins = [random_qubit(rng) for _ in range(n)]
        gates = [build_gate(p, w) for p in params]
        coeffs = [oracle.transmissions(p.g, p.kappa, p.kappa_s, p.gamma, p.omega_c, p.omega_x, w) for p in params]
        ref = oracle.spin_chain(spins, coeffs)
        out = ghz_spins(spins, gates)
        assert out.p_success == pytest.approx(sum(np.vdot(v, v).real for v in ref.values()), abs=1e-12)
        for h, v in ref.items():
            res = ghz_spins(spins, gates, herald=h)
            np.testing.assert_allclose(res.final.amplitudes, v / np.linalg.norm(v), atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_ghz_photons(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 5))
        p = strong_params(rng)
        photons = [(*random_qubit(rng), rng.uniform(-0.3, 0.3)) for _ in range(n)]
        coeffs = [oracle.transmissions(p.g, p.kappa, p.kappa_s, p.gamma, p.omega_c, p.omega_x, w)
                  for *_, w in photons]
        ref = oracle.photon_chain([ph[:2] for ph in photons], coeffs)
        for h, v in ref.items():
            res = ghz_photons(photons, p, mode="full", herald=h)
            assert res.p_herald == pytest.approx(np.vdot(v, v).real, abs=1e-12)
            np.testing.assert_allclose(res.final.amplitudes, v / np.linalg.norm(v), atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_transfers(self, seed):
        rng = np.random.default_rng(seed)
        p = strong_params(rng)
        w = rng.uniform(-0.3, 0.3)
        gate = build_gate(p, w)
        te, tc = complex(gate.t0), complex(gate.t)
        v = random_qubit(rng)
        for fn, ref in ((photon_to_spin, oracle.photon_to_spin(v, te, tc)),
                        (spin_to_photon, oracle.spin_to_photon(v, te, tc))):
            for h, vec in ref.items():
                res = fn(v, gate, herald=h)
                assert res.p_herald == pytest.approx(np.vdot(vec, vec).real, abs=1e-12)
                np.testing.assert_allclose(res.final.amplitudes, vec / np.linalg.norm(vec), atol=1e-12)


class TestOutcomeSerialisation:
    def test_to_dict(self):
        out = ghz_photons([(S, S, 0.0)] * 2, STRONG, trials=1000, seed=4, herald="up")
        d = out.to_dict(dump_state=True)
        assert d["protocol"] == "ghz_photons"
        assert d["herald"] == [{"measurement": "spin readout", "outcome": "up"}]
        assert d["trials"]["n_trials"] == 1000
        assert len(d["density_matrix"]) == 4
        assert d["state"]["labels"][0]["id"] == "photon1"

    def test_mixed_state_dump(self):
        out = entangle_photons((S, S, 0.0), (S, S, 0.0), STRONG, dephasing=DephasingParams(1, 1))
        d = out.to_dict(dump_state=True)
        assert d["state"] is None
        assert d["target_overlap"] == pytest.approx(entanglement_fidelity(DephasingParams(1, 1)))

    def test_default_herald_is_most_probable(self):
        out = qnd_spin_measurement((0.6, 0.8), IDEAL)
        assert out.herald_label == "L"

    def test_rng_selects_herald_reproducibly(self):
        a = [qnd_spin_measurement(BAL, IDEAL, np.random.default_rng(s)).herald_label for s in range(20)]
        b = [qnd_spin_measurement(BAL, IDEAL, np.random.default_rng(s)).herald_label for s in range(20)]
        assert a == b and set(a) == {"R", "L"}

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hqnn import noise, qsim
from hqnn.noise import CHANNELS, NoiseConfig, make_channel, validate_cptp
from hqnn.qsim import DensityMatrix

from conftest import random_pure

PLUS = np.full((2, 2), 0.5, dtype=complex)
ZERO = np.diag([1.0, 0.0]).astype(complex)
ONE = np.diag([0.0, 1.0]).astype(complex)


def kraus_sum(ops, rho):
    return sum(k @ rho @ k.conj().T for k in ops)


def run(label, p, rho):
    return qsim.apply_channel(DensityMatrix(rho), make_channel(label, p), 0).matrix


class TestBitFlip:
    def test_operators(self):
        ops = noise.bit_flip(0.3).operators
        np.testing.assert_allclose(ops[0], np.sqrt(0.7) * np.eye(2))
        np.testing.assert_allclose(ops[1], np.sqrt(0.3) * qsim.X)

    def test_zero_probability(self):
        assert not np.any(noise.bit_flip(0.0).operators[1])

    def test_full_flip(self):
        np.testing.assert_allclose(run("bit_flip", 1.0, ZERO), ONE, atol=1e-15)

    def test_plus_invariant(self):
        out = run("bit_flip", 0.5, PLUS)
        np.testing.assert_allclose(out, 0.5 * PLUS + 0.5 * qsim.X @ PLUS @ qsim.X, atol=1e-15)
        np.testing.assert_allclose(out, PLUS, atol=1e-15)


class TestPhaseFlip:
    @pytest.mark.parametrize("p", [0.0, 0.4, 1.0])
    def test_z_eigenstate(self, p):
        np.testing.assert_allclose(run("phase_flip", p, ZERO), ZERO, atol=1e-15)

    def test_full_flip_negates_coherences(self):
        out = run("phase_flip", 1.0, PLUS)
        np.testing.assert_allclose(out, qsim.Z @ PLUS @ qsim.Z, atol=1e-15)
        np.testing.assert_allclose(out, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)

    def test_half_dephases(self):
        np.testing.assert_allclose(run("phase_flip", 0.5, PLUS), np.diag([0.5, 0.5]), atol=1e-15)


class TestPhaseDamping:
    def test_identity_at_zero(self, rng):
        rho = random_pure(rng)
        np.testing.assert_allclose(run("phase_damping", 0.0, rho), rho, atol=1e-15)

    def test_coherence_shrinks(self):
        out = run("phase_damping", 0.36, PLUS)
        assert abs(abs(out[0, 1]) - 0.4) < 1e-12
        np.testing.assert_allclose(out, kraus_sum(noise.phase_damping(0.36).operators, PLUS))

    @pytest.mark.parametrize("g", [0.0, 0.3, 1.0])
    def test_excited_populations(self, g):
        np.testing.assert_allclose(run("phase_damping", g, ONE), ONE, atol=1e-15)


class TestAmplitudeDamping:
    def test_half_decay(self):
        np.testing.assert_allclose(run("amplitude_damping", 0.5, ONE), np.diag([0.5, 0.5]), atol=1e-15)

    def test_full_decay(self):
        np.testing.assert_allclose(run("amplitude_damping", 1.0, ONE), ZERO, atol=1e-15)

    @pytest.mark.parametrize("g", [0.0, 0.5, 1.0])
    def test_ground_fixed(self, g):
        np.testing.assert_allclose(run("amplitude_damping", g, ZERO), ZERO, atol=1e-15)


class TestDepolarizing:
    def test_four_operators_with_pauli_y(self):
        ops = noise.depolarizing(0.3).operators
        assert len(ops) == 4
        np.testing.assert_allclose(ops[2], np.sqrt(0.1) * np.array([[0, -1j], [1j, 0]]))

    @pytest.mark.parametrize("p", noise.PROBABILITY_GRID)
    def test_ground_state(self, p):
        np.testing.assert_allclose(run("depolarizing", p, ZERO),
                                   np.diag([1 - 2 * p / 3, 2 * p / 3]), atol=1e-15)

    def test_zero_is_identity(self, rng):
        rho = random_pure(rng)
        np.testing.assert_allclose(run("depolarizing", 0.0, rho), rho, atol=1e-15)


class TestValidateCPTP:
    @pytest.mark.parametrize("label", list(CHANNELS))
    @pytest.mark.parametrize("p", noise.PROBABILITY_GRID)
    def test_grid(self, label, p):
        ok, dev = validate_cptp(make_channel(label, p).operators)
        assert ok and dev < 1e-12

    def test_double_identity_fails(self):
        ok, dev = validate_cptp([np.eye(2), np.eye(2)])
        assert not ok and dev == pytest.approx(1.0)

    def test_half_mixture(self):
        ok, dev = validate_cptp([np.sqrt(0.5) * np.eye(2), np.sqrt(0.5) * qsim.X])
        assert ok

    def test_phase_shifted_y_variant(self):
        # [[0, -i], [1, 0]] is unitary, so completeness alone cannot tell it
        # from Pauli Y; the maximally mixed fixed point at p=0.75 can.
        alt_y = np.array([[0, -1j], [1, 0]])
        s = np.sqrt(0.25)
        ops = [np.sqrt(0.25) * np.eye(2), s * qsim.X, s * alt_y, s * qsim.Z]
        assert validate_cptp(ops)[0]
        assert np.max(np.abs(kraus_sum(ops, PLUS) - 0.5 * np.eye(2))) > 0.1

    def test_empty(self):
        with pytest.raises(ValueError):
            validate_cptp([])

    def test_wrong_shape(self):
        with pytest.raises(ValueError):
            validate_cptp([np.eye(4)])


class TestConstruction:
    @pytest.mark.parametrize("label", list(CHANNELS))
    @pytest.mark.parametrize("p", [-0.1, 1.1, float("nan")])
    def test_out_of_range(self, label, p):
        with pytest.raises(ValueError):
            make_channel(label, p)

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            make_channel("Depolarizing", 0.1)

    def test_config(self):
        cfg = NoiseConfig("phase_flip", 0.2)
        assert cfg.kraus().label == "phase_flip"
        with pytest.raises(ValueError):
            NoiseConfig("thermal", 0.2)
        with pytest.raises(ValueError):
            NoiseConfig("phase_flip", 2.0)

    def test_grids(self):
        assert noise.SWEEP_GRID == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
        assert len(noise.PROBABILITY_GRID) == 11


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_depolarizing_three_quarters_maximally_mixed(seed):
    rho = random_pure(np.random.default_rng(seed))
    assert np.max(np.abs(run("depolarizing", 0.75, rho) - 0.5 * np.eye(2))) < 1e-12


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.floats(0, 1))
def test_dephasing_keeps_diagonal(seed, p):
    rho = random_pure(np.random.default_rng(seed))
    for label in ("phase_flip", "phase_damping"):
        out = run(label, p, rho)
        assert np.max(np.abs(np.diag(out) - np.diag(rho))) < 1e-12


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), g1=st.floats(0, 1), g2=st.floats(0, 1))
def test_amplitude_damping_monotone(seed, g1, g2):
    lo, hi = sorted((g1, g2))
    rho = random_pure(np.random.default_rng(seed))
    assert run("amplitude_damping", hi, rho)[0, 0].real >= run("amplitude_damping", lo, rho)[0, 0].real - 1e-14

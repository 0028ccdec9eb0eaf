import numpy as np
import pytest

from hqnn import circuits, qsim
from hqnn.circuits import CircuitSpec, Shots, compile_circuit, run_circuit
from hqnn.noise import NoiseConfig, PROBABILITY_GRID

from conftest import embed


def dense_reference(spec, params, features):
    """Statevector-free oracle: build every gate as a full 16x16 matrix."""
    n = spec.n_qubits
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1
    for q, x in enumerate(features):
        u = embed(qsim.ry(np.pi * x).matrix, [q], n)
        rho = u @ rho @ u.conj().T
    per = circuits.per_layer_count(spec.template, n)
    for layer in range(1, spec.n_layers + 1):
        chunk = params[(layer - 1) * per: layer * per]
        for gate, targets in circuits.build_layer(spec.template, layer, chunk, n):
            u = embed(gate.matrix, list(targets), n)
            rho = u @ rho @ u.conj().T
    if spec.noise is not None:
        for q in range(n):
            ops = [embed(k, [q], n) for k in spec.noise.kraus().operators]
            rho = sum(k @ rho @ k.conj().T for k in ops)
    return np.array([np.real(np.trace(rho @ embed(qsim.Z, [q], n))) for q in range(n)])


class TestParameterCount:
    @pytest.mark.parametrize("template,layers,expected", [
        ("basic", 3, 12), ("strong", 3, 36), ("weak", 1, 4), ("strong", 6, 72)])
    def test_counts(self, template, layers, expected):
        assert circuits.parameter_count(CircuitSpec(4, template, layers)) == expected

    def test_init_range(self, rng):
        p = circuits.init_parameters(CircuitSpec(4, "strong", 3), rng)
        assert p.shape == (36,) and np.all((p >= 0) & (p < np.pi))


class TestSpecValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(n_layers=0), dict(n_layers=7), dict(template="ring"), dict(n_qubits=1)])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            CircuitSpec(**kwargs)


class TestEncoding:
    def test_zero_features(self):
        gates = circuits.angle_encode([0, 0, 0, 0], 4)
        assert len(gates) == 4
        for g, _ in gates:
            np.testing.assert_allclose(g.matrix, np.eye(2), atol=1e-15)

    def test_feature_one_flips(self):
        out = run_circuit(CircuitSpec(4, "basic", 1), np.zeros(4), [1.0, 0, 0, 0])
        g = circuits.angle_encode([1.0, 0, 0, 0])[0][0]
        pop = np.abs(g.matrix @ [1, 0]) ** 2
        np.testing.assert_allclose(pop, [0, 1], atol=1e-15)
        # |1000> through the ring 0->1, 1->2, 2->3, 3->0 ends in |0111>
        np.testing.assert_allclose(out, [1, -1, -1, -1], atol=1e-12)

    def test_half_feature(self):
        angles = circuits.encoding_angles([0.5])
        assert abs(np.cos(angles[0])) < 1e-15

    def test_clamp(self):
        np.testing.assert_allclose(circuits.clamp_features([0.0, 0.3, 1.0]), [0.0, 0.3, 1.0])
        np.testing.assert_allclose(circuits.clamp_features([-2.0, 3.0]), np.tanh([-2.0, 3.0]))
        np.testing.assert_allclose(circuits.clamp_features([0.3], activation=True), np.tanh([0.3]))

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            circuits.angle_encode([0.1, 0.2], 4)
        with pytest.raises(ValueError):
            run_circuit(CircuitSpec(), np.zeros(12), [0.1, 0.2])


class TestBuildLayer:
    def test_basic_layout(self):
        gates = circuits.build_layer("basic", 1, np.zeros(4), 4)
        assert len(gates) == 8
        assert [t for g, t in gates[4:]] == [(0, 1), (1, 2), (2, 3), (3, 0)]
        assert all(g.name.startswith("RX") for g, _ in gates[:4])

    def test_strong_offsets(self):
        odd = circuits.build_layer("strong", 1, np.zeros(12), 4)
        even = circuits.build_layer("strong", 2, np.zeros(12), 4)
        assert [t for g, t in odd[12:]] == [(0, 1), (1, 2), (2, 3), (3, 0)]
        assert [t for g, t in even[12:]] == [(0, 2), (1, 3), (2, 0), (3, 1)]
        assert [g.name[:2] for g, _ in odd[:3]] == ["RZ", "RY", "RZ"]

    def test_weak_axes_and_pairs(self):
        for layer, axis, pair in [(1, "RY", (0, 1)), (2, "RX", (1, 2)), (3, "RZ", (2, 3)), (4, "RY", (0, 1))]:
            gates = circuits.build_layer("weak", layer, np.zeros(4), 4)
            assert len(gates) == 5
            assert all(g.name.startswith(axis) for g, _ in gates[:4])
            assert gates[4][1] == pair

    def test_zero_basic_layer_keeps_zero_state(self):
        state = qsim.init_zero_state(4)
        for g, t in circuits.build_layer("basic", 1, np.zeros(4), 4):
            state = qsim.apply_gate(state, g, t)
        np.testing.assert_allclose(state.matrix, qsim.init_zero_state(4).matrix, atol=1e-15)

    def test_slice_mismatch(self):
        with pytest.raises(ValueError):
            circuits.build_layer("strong", 1, np.zeros(4), 4)


class TestRunCircuit:
    def test_identity_circuit(self):
        np.testing.assert_allclose(run_circuit(CircuitSpec(), np.zeros(12), np.zeros(4)), np.ones(4))

    @pytest.mark.parametrize("template", circuits.TEMPLATES)
    @pytest.mark.parametrize("layers", [1, 2, 3])
    def test_matches_dense_oracle(self, template, layers, rng):
        spec = CircuitSpec(4, template, layers, NoiseConfig("amplitude_damping", 0.3))
        params = rng.uniform(0, 2 * np.pi, circuits.parameter_count(spec))
        x = rng.uniform(0, 1, 4)
        np.testing.assert_allclose(run_circuit(spec, params, x), dense_reference(spec, params, x), atol=1e-12)

    @pytest.mark.parametrize("channel", ["bit_flip", "phase_flip", "phase_damping",
                                         "amplitude_damping", "depolarizing"])
    def test_zero_noise_matches_clean(self, channel, rng):
        base = CircuitSpec(4, "strong", 2)
        params = rng.uniform(0, np.pi, 24)
        x = rng.uniform(0, 1, 4)
        clean = run_circuit(base, params, x)
        noisy = run_circuit(base.with_noise(NoiseConfig(channel, 0.0)), params, x)
        assert np.max(np.abs(clean - noisy)) < 1e-12

    def test_depolarizing_three_quarters(self, rng):
        for template in circuits.TEMPLATES:
            spec = CircuitSpec(4, template, 3, NoiseConfig("depolarizing", 0.75))
            out = run_circuit(spec, rng.uniform(0, np.pi, circuits.parameter_count(spec)), rng.uniform(0, 1, 4))
            assert np.max(np.abs(out)) < 1e-12

    def test_full_bit_flip_negates(self, rng):
        spec = CircuitSpec(4, "basic", 3)
        params, x = rng.uniform(0, np.pi, 12), rng.uniform(0, 1, 4)
        flipped = run_circuit(spec.with_noise(NoiseConfig("bit_flip", 1.0)), params, x)
        assert np.max(np.abs(flipped + run_circuit(spec, params, x))) < 1e-12

    @pytest.mark.parametrize("template", circuits.TEMPLATES)
    @pytest.mark.parametrize("layers", range(1, 7))
    def test_zeros_in_range(self, template, layers):
        spec = CircuitSpec(4, template, layers)
        out = run_circuit(spec, np.zeros(circuits.parameter_count(spec)), [0.2, 0.4, 0.6, 0.8])
        assert np.all(np.abs(out) <= 1 + 1e-12)

    def test_repeatable(self, rng):
        spec = CircuitSpec(4, "weak", 4, NoiseConfig("phase_damping", 0.4))
        params, x = rng.uniform(0, np.pi, 16), rng.uniform(0, 1, 4)
        np.testing.assert_array_equal(run_circuit(spec, params, x), run_circuit(spec, params, x))

    def test_continuity(self, rng):
        spec = CircuitSpec(4, "strong", 3)
        params, x = rng.uniform(0, np.pi, 36), rng.uniform(0, 1, 4)
        base = run_circuit(spec, params, x)
        for i in range(36):
            p = params.copy()
            p[i] += 1e-7
            assert np.max(np.abs(run_circuit(spec, p, x) - base)) <= 1e-6

    def test_wrong_param_count(self):
        with pytest.raises(ValueError):
            run_circuit(CircuitSpec(), np.zeros(11), np.zeros(4))

    def test_shots_mode(self, rng):
        spec = CircuitSpec(4, "basic", 2)
        params, x = rng.uniform(0, np.pi, 8), rng.uniform(0, 1, 4)
        exact = run_circuit(spec, params, x)
        a = run_circuit(spec, params, x, mode=Shots(1024, 5))
        b = run_circuit(spec, params, x, mode=Shots(1024, 5))
        np.testing.assert_array_equal(a, b)
        assert np.max(np.abs(a - exact)) < 4 * 2 / np.sqrt(1024)
        with pytest.raises(ValueError):
            run_circuit(spec, params, x, mode="sampled")


class TestEngines:
    @pytest.mark.parametrize("template", circuits.TEMPLATES)
    def test_heisenberg_matches_schrodinger(self, template, rng):
        spec = CircuitSpec(4, template, 3, NoiseConfig("depolarizing", 0.2))
        program = compile_circuit(spec)
        w = rng.uniform(0, np.pi, program.n_weights)
        angles = rng.uniform(0, np.pi, (5, 4))
        obs = circuits.evolve_observables(program, w, circuits.z_observables(4, range(4)))
        fast = circuits.batch_expectations(obs, circuits.product_states(angles))
        slow = np.array([circuits.measure(circuits.simulate(program, w, a), range(4)) for a in angles])
        batched = circuits.z_values(circuits.simulate_batch(
            program, np.repeat(circuits.rotation_angles(program, w)[None], 5, 0), angles), range(4))
        assert np.max(np.abs(fast - slow)) < 1e-12
        assert np.max(np.abs(batched - slow)) < 1e-12

    def test_sampled_expectations_reproducible(self, rng):
        program = compile_circuit(CircuitSpec())
        w = rng.uniform(0, np.pi, 12)
        angles = rng.uniform(0, np.pi, (3, 4))
        a = circuits.sample_expectations(program, w, angles, Shots(1024, 9))
        b = circuits.sample_expectations(program, w, angles, Shots(1024, 9))
        np.testing.assert_array_equal(a, b)
        assert np.all(np.abs(a) <= 1)


def test_probability_grid_runs(rng):
    spec = CircuitSpec()
    params, x = rng.uniform(0, np.pi, 12), rng.uniform(0, 1, 4)
    for p in PROBABILITY_GRID:
        out = run_circuit(spec.with_noise(NoiseConfig("bit_flip", p)), params, x)
        assert np.all(np.isfinite(out))

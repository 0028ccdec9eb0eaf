"""Variational circuit templates, angle encoding and circuit execution.

A circuit is compiled into a :class:`Program`: RY angle encoding on every
qubit of ``|0...0>`` followed by a body of symbolic instructions (rotations
that reference the weight vector, fixed gates, Kraus channels).  Two engines
run a program:

* :func:`simulate` evolves the density matrix forward with :mod:`hqnn.qsim`.
  This is the reference path.
* :func:`evolve_observables` pulls the measured observables back through the
  body (Heisenberg picture).  Because the encoded state is a real product
  state, a whole batch of inputs is then evaluated with one contraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import qsim
from .noise import NoiseConfig

TEMPLATES = ("basic", "strong", "weak")
MAX_LAYERS = 6
WEAK_AXES = ("Y", "X", "Z")


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int = 4
    template: str = "basic"
    n_layers: int = 3
    noise: Optional[NoiseConfig] = None

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; expected one of {TEMPLATES}")
        if not 1 <= self.n_layers <= MAX_LAYERS:
            raise ValueError(f"n_layers must lie in [1, {MAX_LAYERS}], got {self.n_layers}")
        if not 2 <= self.n_qubits <= qsim.MAX_QUBITS:
            raise ValueError(f"n_qubits must lie in [2, {qsim.MAX_QUBITS}], got {self.n_qubits}")

    def with_noise(self, noise: Optional[NoiseConfig]) -> "CircuitSpec":
        return replace(self, noise=noise)


@dataclass(frozen=True)
class Shots:
    count: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"shot count must be >= 1, got {self.count}")


Mode = Union[str, Shots]


def per_layer_count(template: str, n_qubits: int) -> int:
    return n_qubits * (3 if template == "strong" else 1)


def parameter_count(spec: CircuitSpec) -> int:
    return spec.n_layers * per_layer_count(spec.template, spec.n_qubits)


def init_parameters(spec: CircuitSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, np.pi, size=parameter_count(spec))


# --- encoding ----------------------------------------------------------------


def clamp_features(features, activation: bool = False) -> np.ndarray:
    """Map features to [-1, 1] before scaling by pi.

    Bounded inputs (pixels) pass through when they lie in [0, 1]; anything
    else, and every value when ``activation`` is set, goes through tanh.
    """
    x = np.asarray(features, dtype=float)
    if activation:
        return np.tanh(x)
    return np.where((x >= 0.0) & (x <= 1.0), x, np.tanh(x))


def clamp_derivative(features, activation: bool = False) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    dtanh = 1.0 - np.tanh(x) ** 2
    if activation:
        return dtanh
    return np.where((x >= 0.0) & (x <= 1.0), 1.0, dtanh)


def encoding_angles(features, activation: bool = False) -> np.ndarray:
    return np.pi * clamp_features(features, activation)


def angle_encode(features, n_qubits: int | None = None, activation: bool = False) -> list:
    features = np.asarray(features, dtype=float)
    if n_qubits is not None and features.shape != (n_qubits,):
        raise ValueError(f"expected {n_qubits} features, got shape {features.shape}")
    angles = encoding_angles(features, activation)
    return [(qsim.ry(a), (q,)) for q, a in enumerate(angles)]


# --- symbolic instructions ---------------------------------------------------


@dataclass(frozen=True)
class Instruction:
    kind: str  # "rot" | "gate" | "kraus"
    targets: tuple
    name: str = ""  # rotation axis for "rot", gate name for "gate"
    param: Optional[int] = None
    coeff: float = 1.0
    kraus: tuple = field(default=(), repr=False)

    def gate(self, weights, shift: float = 0.0) -> qsim.Gate:
        if self.kind == "rot":
            return qsim.rotation(self.name, self.coeff * weights[self.param] + shift)
        return qsim.named(self.name)


def rot(axis: str, qubit: int, param: int, coeff: float = 1.0) -> Instruction:
    return Instruction("rot", (qubit,), axis, param, coeff)


def cnot(control: int, target: int) -> Instruction:
    return Instruction("gate", (control, target), "CNOT")


def layer_instructions(template: str, layer_index: int, n_qubits: int, offset: int = 0) -> list:
    """Instructions of one layer; ``layer_index`` is 1-based."""
    n = n_qubits
    out = []
    if template == "basic":
        out += [rot("X", q, offset + q) for q in range(n)]
        out += [cnot(q, (q + 1) % n) for q in range(n)] if n > 2 else [cnot(0, 1)]
    elif template == "strong":
        for q in range(n):
            base = offset + 3 * q
            out += [rot("Z", q, base), rot("Y", q, base + 1), rot("Z", q, base + 2)]
        r = 1 if layer_index % 2 == 1 else 2
        r = (r - 1) % (n - 1) + 1  # keep the range below n for small registers
        out += [cnot(q, (q + r) % n) for q in range(n)]
    elif template == "weak":
        axis = WEAK_AXES[(layer_index - 1) % len(WEAK_AXES)]
        out += [rot(axis, q, offset + q) for q in range(n)]
        c = (layer_index - 1) % (n - 1)
        out.append(cnot(c, c + 1))
    else:
        raise ValueError(f"unknown template {template!r}")
    return out


def build_layer(template: str, layer_index: int, params, n_qubits: int) -> list:
    """Concrete ``(Gate, targets)`` list for one layer."""
    params = np.asarray(params, dtype=float)
    expected = per_layer_count(template, n_qubits)
    if params.shape != (expected,):
        raise ValueError(f"{template} layer needs {expected} parameters, got {params.size}")
    return [(ins.gate(params), ins.targets)
            for ins in layer_instructions(template, layer_index, n_qubits)]


def noise_instructions(noise: Optional[NoiseConfig], qubits: Sequence[int]) -> list:
    if noise is None:
        return []
    ops = tuple(noise.kraus().operators)
    return [Instruction("kraus", (q,), noise.channel, kraus=ops) for q in qubits]


@dataclass(frozen=True)
class Program:
    n_qubits: int
    body: tuple
    n_weights: int
    measured: tuple

    def rotation_indices(self) -> list:
        return [i for i, ins in enumerate(self.body) if ins.kind == "rot"]


def variational_body(spec: CircuitSpec) -> list:
    per = per_layer_count(spec.template, spec.n_qubits)
    body = []
    for layer in range(1, spec.n_layers + 1):
        body += layer_instructions(spec.template, layer, spec.n_qubits, (layer - 1) * per)
    return body


def compile_circuit(spec: CircuitSpec) -> Program:
    body = variational_body(spec) + noise_instructions(spec.noise, range(spec.n_qubits))
    return Program(spec.n_qubits, tuple(body), parameter_count(spec), tuple(range(spec.n_qubits)))


# --- Schrödinger engine --------------------------------------------------------


def _check_weights(program: Program, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (program.n_weights,):
        raise ValueError(f"expected {program.n_weights} parameters, got shape {w.shape}")
    return w


def simulate(program: Program, weights, angles, shift: tuple | None = None) -> qsim.DensityMatrix:
    """Forward density-matrix evolution.

    ``shift`` is ``(instruction index, delta)`` and offsets one body rotation.
    """
    w = _check_weights(program, weights)
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (program.n_qubits,):
        raise ValueError(f"expected {program.n_qubits} encoding angles, got shape {angles.shape}")
    state = qsim.init_zero_state(program.n_qubits)
    for q, a in enumerate(angles):
        state = qsim.apply_gate(state, qsim.ry(a), [q])
    for i, ins in enumerate(program.body):
        if ins.kind == "kraus":
            state = qsim.apply_kraus(state, ins.kraus, ins.targets[0])
        else:
            delta = shift[1] if shift is not None and shift[0] == i else 0.0
            state = qsim.apply_gate(state, ins.gate(w, delta), ins.targets)
    return state


def rotation_angles(program: Program, weights) -> np.ndarray:
    """Angle of every body rotation, in body order."""
    w = _check_weights(program, weights)
    return np.array([program.body[i].coeff * w[program.body[i].param]
                     for i in program.rotation_indices()])


def simulate_batch(program: Program, rot_angles: np.ndarray, enc_angles: np.ndarray) -> np.ndarray:
    """Forward evolution of S circuits that differ only in their rotation angles.

    ``rot_angles`` has shape (S, R) (one column per body rotation) and
    ``enc_angles`` shape (S, n).  Returns the final states, shape (S, D, D).
    """
    rot_angles = np.atleast_2d(np.asarray(rot_angles, dtype=float))
    enc_angles = np.broadcast_to(np.asarray(enc_angles, dtype=float),
                                 (rot_angles.shape[0], program.n_qubits))
    psi = product_states(enc_angles).astype(complex)
    states = psi[:, :, None] * psi[:, None, :]
    r = 0
    for ins in program.body:
        if ins.kind == "kraus":
            states = qsim.kraus_on_states(states, ins.kraus, ins.targets[0])
        elif ins.kind == "rot":
            u = qsim.rotation_matrices(ins.name, rot_angles[:, r])
            states = qsim.unitary_on_states(states, u, ins.targets)
            r += 1
        else:
            states = qsim.unitary_on_states(states, qsim.named(ins.name).matrix, ins.targets)
    return states


def z_values(states: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Z expectations on ``qubits`` for a stack of states -> (S, len(qubits))."""
    n = states.shape[-1].bit_length() - 1
    diag = np.real(np.diagonal(states, axis1=-2, axis2=-1))
    return diag @ np.stack([qsim.z_signs(n, q) for q in qubits], axis=1)


def measure(state: qsim.DensityMatrix, qubits: Sequence[int], mode: Mode = "analytic") -> np.ndarray:
    if mode == "analytic":
        return np.array([qsim.expectation(state, qsim.Observable(q)) for q in qubits])
    if not isinstance(mode, Shots):
        raise ValueError(f"mode must be 'analytic' or Shots, got {mode!r}")
    qubits = list(qubits)
    reduced = state if qubits == list(range(state.n_qubits)) else qsim.partial_trace(state, qubits)
    return qsim.sample_counts(reduced, mode.count, mode.seed).z


def run_circuit(spec: CircuitSpec, params, features, mode: Mode = "analytic",
                activation: bool = False) -> np.ndarray:
    """Per-qubit Z expectations of encode -> layers -> optional noise."""
    features = np.asarray(features, dtype=float)
    if features.shape != (spec.n_qubits,):
        raise ValueError(f"expected {spec.n_qubits} features, got shape {features.shape}")
    program = compile_circuit(spec)
    state = simulate(program, params, encoding_angles(features, activation))
    return measure(state, program.measured, mode)


# --- Heisenberg engine ---------------------------------------------------------


def z_observables(n_qubits: int, qubits: Sequence[int]) -> np.ndarray:
    return np.stack([qsim.z_observable(n_qubits, q) for q in qubits])


def basis_projectors(n_qubits: int, qubits: Sequence[int]) -> np.ndarray:
    """Projectors onto every outcome of measuring ``qubits`` (first = MSB)."""
    m = len(qubits)
    dim = 2**n_qubits
    idx = np.arange(dim)
    outcome = np.zeros(dim, dtype=int)
    for q in qubits:
        outcome = (outcome << 1) | ((idx >> (n_qubits - 1 - q)) & 1)
    out = np.zeros((2**m, dim, dim), dtype=complex)
    out[outcome, idx, idx] = 1.0
    return out


def _pull_back(obs: np.ndarray, ins: Instruction, weights, delta: float = 0.0) -> np.ndarray:
    if ins.kind == "kraus":
        return qsim.kraus_on_observable(obs, ins.kraus, ins.targets[0])
    return qsim.gate_on_observable(obs, ins.gate(weights, delta), ins.targets)


def evolve_observables(program: Program, weights, observables: np.ndarray) -> np.ndarray:
    """Pull ``observables`` back through the whole body (stack of D x D)."""
    w = _check_weights(program, weights)
    obs = observables
    for ins in reversed(program.body):
        obs = _pull_back(obs, ins, w)
    return obs


def shifted_observables(program: Program, weights, observables: np.ndarray,
                        shift: float = np.pi / 2) -> np.ndarray:
    """Observables pulled back with each body rotation shifted by +/- ``shift``.

    Returns an array of shape (R, 2, K, D, D) for the R rotations in body
    order; index 0 of the second axis is the + shift.
    """
    w = _check_weights(program, weights)
    body = program.body
    suffix = [None] * (len(body) + 1)
    suffix[len(body)] = observables
    for i in range(len(body) - 1, -1, -1):
        suffix[i] = _pull_back(suffix[i + 1], body[i], w)
    out = []
    for i in program.rotation_indices():
        pair = np.stack([_pull_back(suffix[i + 1], body[i], w, s) for s in (shift, -shift)])
        for ins in reversed(body[:i]):
            pair = _pull_back(pair, ins, w)
        out.append(pair)
    return np.stack(out) if out else np.zeros((0, 2) + observables.shape, dtype=complex)


def product_states(angles: np.ndarray) -> np.ndarray:
    """Real state vectors of RY(angle)|0> on each qubit; angles shape (..., n)."""
    angles = np.asarray(angles, dtype=float)
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    psi = np.ones(angles.shape[:-1] + (1,))
    for q in range(angles.shape[-1]):
        amp = np.stack([c[..., q], s[..., q]], axis=-1)
        psi = (psi[..., :, None] * amp[..., None, :]).reshape(angles.shape[:-1] + (-1,))
    return psi


def batch_expectations(observables: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``psi^T O psi`` for observables (..., K, D, D) and states (B, D) -> (B, ..., K)."""
    real = np.ascontiguousarray(observables.real)
    lead = real.shape[:-2]
    flat = real.reshape(-1, real.shape[-2], real.shape[-1])
    tmp = np.einsum("bi,kij->bkj", psi, flat, optimize=True)
    vals = np.einsum("bkj,bj->bk", tmp, psi, optimize=True)
    return vals.reshape((psi.shape[0],) + lead)


def sample_expectations(program: Program, weights, angles: np.ndarray, shots: Shots) -> np.ndarray:
    """Shot-sampled Z estimates for a batch of encodings (B, n) -> (B, m)."""
    qubits = list(program.measured)
    proj = evolve_observables(program, weights, basis_projectors(program.n_qubits, qubits))
    probs = batch_expectations(proj, product_states(angles))
    if probs.min() < -1e-9:
        raise qsim.SimulationError(f"negative outcome probability {probs.min():.3e}")
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    counts = np.random.default_rng(shots.seed).multinomial(shots.count, probs)
    return qsim.z_from_counts(counts.astype(float), len(qubits))

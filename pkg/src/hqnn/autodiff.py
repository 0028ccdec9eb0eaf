"""Parameter-shift gradients of circuit expectations, plus a finite-difference oracle.

Every trainable gate is a single-axis rotation ``exp(-i a P / 2)``, for which
``dE/da = [E(a + pi/2) - E(a - pi/2)] / 2`` holds exactly.  A weight that
enters several rotations (scaled by ``coeff``) collects the chain-ruled sum.
Noise channels carry no parameters and sit outside the shifted gate, so the
rule stays exact for noisy circuits.
"""

from __future__ import annotations

import numpy as np

from .circuits import (
    CircuitSpec,
    batch_expectations,
    Program,
    Shots,
    compile_circuit,
    encoding_angles,
    product_states,
    rotation_angles,
    shifted_observables,
    simulate_batch,
    z_values,
)

SHIFT = np.pi / 2


def _require_analytic(mode):
    if isinstance(mode, Shots) or mode != "analytic":
        raise ValueError("gradients are computed in analytic mode only")


def program_param_grad(program: Program, weights, angles, output_index=None) -> np.ndarray:
    """Parameter-shift gradient of one measured output (or the full Jacobian,
    shape (n_outputs, n_weights), when ``output_index`` is None)."""
    base = rotation_angles(program, weights)
    rot = program.rotation_indices()
    r = len(rot)
    jac = np.zeros((len(program.measured), program.n_weights))
    if r == 0:
        return jac if output_index is None else jac[output_index]
    shifted = np.repeat(base[None], 2 * r, axis=0)
    shifted[np.arange(r), np.arange(r)] += SHIFT
    shifted[r + np.arange(r), np.arange(r)] -= SHIFT
    vals = z_values(simulate_batch(program, shifted, angles), program.measured)
    diff = 0.5 * (vals[:r] - vals[r:])  # (R, K)
    for j, i in enumerate(rot):
        ins = program.body[i]
        jac[:, ins.param] += ins.coeff * diff[j]
    return jac if output_index is None else jac[output_index]


def program_angle_grad(program: Program, weights, angles, output_index=None) -> np.ndarray:
    """Shift-rule gradient w.r.t. the encoding angles (Jacobian when ``output_index`` is None)."""
    base = rotation_angles(program, weights)
    n = program.n_qubits
    enc = np.repeat(np.asarray(angles, dtype=float)[None], 2 * n, axis=0)
    enc[np.arange(n), np.arange(n)] += SHIFT
    enc[n + np.arange(n), np.arange(n)] -= SHIFT
    vals = z_values(simulate_batch(program, np.repeat(base[None], 2 * n, axis=0), enc),
                    program.measured)
    jac = (0.5 * (vals[:n] - vals[n:])).T
    return jac if output_index is None else jac[output_index]


def param_shift_grad(spec: CircuitSpec, params, features, output_index: int,
                     mode="analytic", activation: bool = False) -> np.ndarray:
    _require_analytic(mode)
    program = compile_circuit(spec)
    return program_param_grad(program, params, encoding_angles(features, activation), output_index)


def input_shift_grad(spec: CircuitSpec, params, features, output_index: int,
                     mode="analytic", activation: bool = False) -> np.ndarray:
    """Gradient w.r.t. the encoded RY angles; callers chain-rule through the encoding."""
    _require_analytic(mode)
    program = compile_circuit(spec)
    return program_angle_grad(program, params, encoding_angles(features, activation), output_index)


def finite_diff_grad(spec: CircuitSpec, params, features, output_index=None,
                     step: float = 1e-5, wrt: str = "params", activation: bool = False) -> np.ndarray:
    """Central differences w.r.t. ``params`` or the encoding ``angles``."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if wrt not in ("params", "angles"):
        raise ValueError(f"wrt must be 'params' or 'angles', got {wrt!r}")
    program = compile_circuit(spec)
    w = np.asarray(params, dtype=float)
    a = encoding_angles(features, activation)
    target = w if wrt == "params" else a
    m = target.size
    pert = np.repeat(target[None], 2 * m, axis=0)
    pert[np.arange(m), np.arange(m)] += step
    pert[m + np.arange(m), np.arange(m)] -= step
    if wrt == "params":
        rot = np.stack([rotation_angles(program, row) for row in pert]) if m else np.zeros((0, 0))
        states = simulate_batch(program, rot, a) if m else None
    else:
        base = rotation_angles(program, w)
        states = simulate_batch(program, np.repeat(base[None], 2 * m, axis=0), pert)
    if m == 0:
        jac = np.zeros((len(program.measured), 0))
    else:
        vals = z_values(states, program.measured)
        jac = ((vals[:m] - vals[m:]) / (2 * step)).T
    return jac if output_index is None else jac[output_index]


# --- batched forms used by the models ----------------------------------------


def weight_derivative_observables(program: Program, weights, observables: np.ndarray) -> np.ndarray:
    """Observables whose expectation is ``dE_k/dw_p``; shape (P, K, D, D)."""
    shifted = shifted_observables(program, weights, observables, SHIFT)
    out = np.zeros((program.n_weights,) + observables.shape, dtype=complex)
    for r, i in enumerate(program.rotation_indices()):
        ins = program.body[i]
        out[ins.param] += ins.coeff * 0.5 * (shifted[r, 0] - shifted[r, 1])
    return out


def angle_jacobian(observables: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """``dE_k/da_j`` for pulled-back observables (K, D, D) and angles (B, n) -> (B, n, K)."""
    angles = np.asarray(angles, dtype=float)
    b, n = angles.shape
    jac = np.zeros((b, n, observables.shape[0]))
    for j in range(n):
        plus, minus = angles.copy(), angles.copy()
        plus[:, j] += SHIFT
        minus[:, j] -= SHIFT
        jac[:, j] = 0.5 * (batch_expectations(observables, product_states(plus))
                           - batch_expectations(observables, product_states(minus)))
    return jac

"""The three hybrid architectures: quanvolutional network, QCNN and the
dressed-circuit transfer-learning model.

Each model keeps its trainable parameters in a flat ``dict`` of arrays.  The
batched ``forward``/``loss_and_grad`` methods evaluate circuits in the
Heisenberg picture (see :mod:`hqnn.circuits`); the module-level
``*_forward`` functions run one image through the forward density-matrix
simulator and serve as the reference the batched path is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import nn, qsim
from .autodiff import angle_jacobian, weight_derivative_observables
from .circuits import (
    CircuitSpec,
    Instruction,
    Program,
    Shots,
    batch_expectations,
    compile_circuit,
    encoding_angles,
    clamp_derivative,
    evolve_observables,
    init_parameters,
    noise_instructions,
    parameter_count,
    product_states,
    sample_expectations,
    simulate,
    variational_body,
    z_observables,
)

N_CLASSES = 4
IMAGE_SIDE = 28


@dataclass(frozen=True)
class QuanNNConfig:
    circuit: CircuitSpec = field(default_factory=lambda: CircuitSpec(4, "basic", 3))
    patch: int = 2
    stride: int = 2
    freeze_quantum: bool = False

    def __post_init__(self):
        if self.patch * self.patch != self.circuit.n_qubits:
            raise ValueError(f"patch area {self.patch ** 2} != {self.circuit.n_qubits} qubits")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def out_side(self) -> int:
        return (IMAGE_SIDE - self.patch) // self.stride + 1


@dataclass(frozen=True)
class QCNNConfig:
    circuit: CircuitSpec = field(default_factory=lambda: CircuitSpec(4, "strong", 3))
    conv_size: int = 3
    pool_window: int = 13

    def __post_init__(self):
        side = (IMAGE_SIDE - self.conv_size + 1) // self.pool_window
        if side * side != self.circuit.n_qubits or self.circuit.n_qubits != 4:
            raise ValueError("QCNN front must produce exactly 4 features for a 4-qubit circuit")


@dataclass(frozen=True)
class QTLConfig:
    circuit: CircuitSpec = field(default_factory=lambda: CircuitSpec(4, "strong", 3))
    extractor_window: int = 4

    @property
    def n_features(self) -> int:
        return (IMAGE_SIDE // self.extractor_window) ** 2


@dataclass
class ModelOutput:
    logits: np.ndarray
    expectations: np.ndarray


def _quantum_grad(deriv_obs: np.ndarray, psi: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Contract upstream gradients (N, K) with derivative observables (P, K, D, D)."""
    m = np.einsum("nk,ni,nj->kij", upstream, psi, psi, optimize=True)
    return np.einsum("pkij,kij->p", deriv_obs.real, m, optimize=True)


def _as_images(images) -> np.ndarray:
    x = np.asarray(images, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
        raise ValueError(f"images must be {IMAGE_SIDE}x{IMAGE_SIDE}, got {x.shape[1:]}")
    return x


class HybridModel:
    kind = ""
    circuit: CircuitSpec

    def init_params(self, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def forward(self, params: dict, images, mode="analytic") -> ModelOutput:
        raise NotImplementedError

    def loss_and_grad(self, params: dict, images, labels):
        """Mean cross-entropy over the batch, its gradients, and the logits."""
        raise NotImplementedError

    def program(self) -> Program:
        return compile_circuit(self.circuit)

    def trainable(self) -> tuple:
        raise NotImplementedError

    def metadata(self) -> dict:
        return {}

    def _expectations(self, program, weights, angles, mode):
        if isinstance(mode, Shots):
            return sample_expectations(program, weights, angles, mode)
        if mode != "analytic":
            raise ValueError(f"mode must be 'analytic' or Shots, got {mode!r}")
        obs = evolve_observables(program, weights, z_observables(program.n_qubits, program.measured))
        return batch_expectations(obs, product_states(angles))


# --- QuanNN --------------------------------------------------------------------


def extract_patches(images, patch: int, stride: int) -> np.ndarray:
    """(B, 28, 28) -> (B, H', W', patch*patch), pixels row-major within a patch."""
    x = _as_images(images)
    win = sliding_window_view(x, (patch, patch), axis=(1, 2))[:, ::stride, ::stride]
    return win.reshape(win.shape[:3] + (patch * patch,))


def quanvolve(image, circuit: CircuitSpec, params, patch: int = 2, stride: int = 2) -> np.ndarray:
    """Apply the circuit to every patch; returns (n_qubits, H', W') (or batched)."""
    single = np.asarray(image).ndim == 2
    patches = extract_patches(image, patch, stride)
    if patch * patch != circuit.n_qubits:
        raise ValueError("patch area must equal the qubit count")
    program = compile_circuit(circuit)
    b, h, w, n = patches.shape
    obs = evolve_observables(program, params, z_observables(n, range(n)))
    vals = batch_expectations(obs, product_states(encoding_angles(patches.reshape(-1, n))))
    maps = vals.reshape(b, h, w, n).transpose(0, 3, 1, 2)
    return maps[0] if single else maps


class QuanNN(HybridModel):
    kind = "quann"

    def __init__(self, cfg: QuanNNConfig | None = None):
        self.cfg = cfg or QuanNNConfig()
        self.circuit = self.cfg.circuit
        n = self.circuit.n_qubits
        self.n_features = n * self.cfg.out_side**2

    def init_params(self, rng):
        head = nn.DenseLayer.init(self.n_features, N_CLASSES, rng)
        return {"circuit": init_parameters(self.circuit, rng),
                "head_w": head.weights, "head_b": head.bias}

    def trainable(self):
        keys = ("head_w", "head_b")
        return keys if self.cfg.freeze_quantum else ("circuit",) + keys

    def metadata(self):
        return {"freeze_quantum": self.cfg.freeze_quantum, "patch": self.cfg.patch,
                "stride": self.cfg.stride}

    def _angles(self, images):
        patches = extract_patches(images, self.cfg.patch, self.cfg.stride)
        return patches.shape, encoding_angles(patches.reshape(-1, patches.shape[-1]))

    def forward(self, params, images, mode="analytic"):
        shape, angles = self._angles(images)
        b, h, w, n = shape
        vals = self._expectations(self.program(), params["circuit"], angles, mode)
        feats = vals.reshape(b, h, w, n).transpose(0, 3, 1, 2).reshape(b, -1)
        head = nn.DenseLayer(params["head_w"], params["head_b"])
        return ModelOutput(nn.dense_forward(head, feats), feats)

    def loss_and_grad(self, params, images, labels):
        shape, angles = self._angles(images)
        b, h, w, n = shape
        program = self.program()
        zobs = z_observables(n, range(n))
        obs = evolve_observables(program, params["circuit"], zobs)
        psi = product_states(angles)
        vals = batch_expectations(obs, psi)
        feats = vals.reshape(b, h, w, n).transpose(0, 3, 1, 2).reshape(b, -1)
        head = nn.DenseLayer(params["head_w"], params["head_b"])
        logits = nn.dense_forward(head, feats)
        losses, g = nn.softmax_cross_entropy(logits, labels)
        g = g / b
        d_w, d_b, d_feats = nn.dense_backward(head, feats, g)
        grads = {"head_w": d_w, "head_b": d_b}
        if not self.cfg.freeze_quantum:
            upstream = d_feats.reshape(b, n, h, w).transpose(0, 2, 3, 1).reshape(-1, n)
            deriv = weight_derivative_observables(program, params["circuit"], zobs)
            grads["circuit"] = _quantum_grad(deriv, psi, upstream)
        return float(np.mean(losses)), grads, logits


def quann_forward(cfg: QuanNNConfig, params: dict, image) -> ModelOutput:
    """Reference single-image forward pass through the density-matrix simulator."""
    patches = extract_patches(image, cfg.patch, cfg.stride)[0]
    h, w, n = patches.shape
    program = compile_circuit(cfg.circuit)
    maps = np.zeros((n, h, w))
    for i in range(h):
        for j in range(w):
            state = simulate(program, params["circuit"], encoding_angles(patches[i, j]))
            maps[:, i, j] = [qsim.expectation(state, qsim.Observable(q)) for q in range(n)]
    feats = maps.reshape(-1)
    head = nn.DenseLayer(params["head_w"], params["head_b"])
    return ModelOutput(nn.dense_forward(head, feats), feats)


# --- QCNN ----------------------------------------------------------------------

POOL_PAIRS = ((0, 1), (2, 3))  # (control, target); controls are traced out
POOL_KEEP = (1, 3)


def pooling_instructions(offset: int) -> list:
    """Controlled-RY(phi) as RY(phi/2) . CNOT . RY(-phi/2) . CNOT on the target."""
    out = []
    for k, (c, t) in enumerate(POOL_PAIRS):
        p = offset + k
        out += [Instruction("rot", (t,), "Y", p, 0.5),
                Instruction("gate", (c, t), "CNOT"),
                Instruction("rot", (t,), "Y", p, -0.5),
                Instruction("gate", (c, t), "CNOT")]
    return out


def qcnn_program(circuit: CircuitSpec) -> Program:
    n_circ = parameter_count(circuit)
    body = (variational_body(circuit)
            + noise_instructions(circuit.noise, range(circuit.n_qubits))
            + pooling_instructions(n_circ))
    return Program(circuit.n_qubits, tuple(body), n_circ + len(POOL_PAIRS), POOL_KEEP)


def qcnn_front(params, images):
    x = _as_images(images)[:, None]
    conv = nn.Conv2DLayer(params["conv_k"], params["conv_b"])
    pre = nn.conv2d_forward(conv, x)
    return x, conv, pre


class QCNN(HybridModel):
    kind = "qcnn"

    def __init__(self, cfg: QCNNConfig | None = None):
        self.cfg = cfg or QCNNConfig()
        self.circuit = self.cfg.circuit

    def program(self):
        return qcnn_program(self.circuit)

    def init_params(self, rng):
        conv = nn.Conv2DLayer.init(1, 1, self.cfg.conv_size, rng)
        head = nn.DenseLayer.init(len(POOL_KEEP), N_CLASSES, rng)
        return {"conv_k": conv.kernel, "conv_b": conv.bias,
                "circuit": init_parameters(self.circuit, rng),
                "pool": rng.uniform(0.0, np.pi, len(POOL_PAIRS)),
                "head_w": head.weights, "head_b": head.bias}

    def trainable(self):
        return ("conv_k", "conv_b", "circuit", "pool", "head_w", "head_b")

    def metadata(self):
        return {"noise_placement": "once, after the variational layers and before pooling"}

    def features(self, params, images):
        x, conv, pre = qcnn_front(params, images)
        pooled = nn.avgpool_forward(nn.relu(pre), self.cfg.pool_window)
        return pooled.reshape(len(pooled), -1)

    def forward(self, params, images, mode="analytic"):
        feats = self.features(params, images)
        weights = np.concatenate([params["circuit"], params["pool"]])
        vals = self._expectations(self.program(), weights, encoding_angles(feats, True), mode)
        head = nn.DenseLayer(params["head_w"], params["head_b"])
        return ModelOutput(nn.dense_forward(head, vals), vals)

    def loss_and_grad(self, params, images, labels):
        x, conv, pre = qcnn_front(params, images)
        act = nn.relu(pre)
        pooled = nn.avgpool_forward(act, self.cfg.pool_window)
        b = len(pooled)
        feats = pooled.reshape(b, -1)
        angles = encoding_angles(feats, True)
        program = self.program()
        weights = np.concatenate([params["circuit"], params["pool"]])
        zobs = z_observables(program.n_qubits, program.measured)
        obs = evolve_observables(program, weights, zobs)
        psi = product_states(angles)
        vals = batch_expectations(obs, psi)
        head = nn.DenseLayer(params["head_w"], params["head_b"])
        logits = nn.dense_forward(head, vals)
        losses, g = nn.softmax_cross_entropy(logits, labels)
        g = g / b
        d_w, d_b, d_vals = nn.dense_backward(head, vals, g)
        q_grad = _quantum_grad(weight_derivative_observables(program, weights, zobs), psi, d_vals)
        n_circ = params["circuit"].size
        d_angles = np.einsum("bjk,bk->bj", angle_jacobian(obs, angles), d_vals)
        d_feats = d_angles * np.pi * clamp_derivative(feats, True)
        d_act = nn.relu_backward(pre, nn.avgpool_backward(d_feats.reshape(pooled.shape),
                                                          self.cfg.pool_window))
        d_k, d_cb, _ = nn.conv2d_backward(conv, x, d_act)
        grads = {"conv_k": d_k, "conv_b": d_cb, "circuit": q_grad[:n_circ],
                 "pool": q_grad[n_circ:], "head_w": d_w, "head_b": d_b}
        return float(np.mean(losses)), grads, logits


def qcnn_pooled_state(cfg: QCNNConfig, params: dict, image) -> qsim.DensityMatrix:
    """Reduced two-qubit state after controlled-RY pooling and trace-out."""
    model = QCNN(cfg)
    feats = model.features(params, image)[0]
    program = compile_circuit(cfg.circuit)
    state = simulate(program, params["circuit"], encoding_angles(feats, True))
    for (c, t), phi in zip(POOL_PAIRS, params["pool"]):
        state = qsim.apply_gate(state, qsim.cry(phi), [c, t])
    return qsim.partial_trace(state, list(POOL_KEEP))


def qcnn_forward(cfg: QCNNConfig, params: dict, image) -> ModelOutput:
    """Reference single-image forward pass (explicit pooling and partial trace)."""
    reduced = qcnn_pooled_state(cfg, params, image)
    vals = np.array([qsim.expectation(reduced, qsim.Observable(q)) for q in range(len(POOL_KEEP))])
    head = nn.DenseLayer(params["head_w"], params["head_b"])
    return ModelOutput(nn.dense_forward(head, vals), vals)


# --- QTL -----------------------------------------------------------------------


def frozen_extractor(window: int = 4) -> nn.Conv2DLayer:
    """Fixed average pooling expressed as a strided convolution; never trained."""
    kernel = np.full((1, 1, window, window), 1.0 / window**2)
    return nn.Conv2DLayer(kernel, np.zeros(1), stride=window)


def extract_features(images, window: int = 4) -> np.ndarray:
    x = _as_images(images)[:, None]
    out = nn.conv2d_forward(frozen_extractor(window), x)
    return out.reshape(len(out), -1)


class QTL(HybridModel):
    """Dressed circuit: dense -> circuit -> dense on top of frozen features.

    Inputs are either 28x28 images (run through the frozen extractor) or
    precomputed feature vectors of length ``cfg.n_features``.
    """

    kind = "qtl"

    def __init__(self, cfg: QTLConfig | None = None):
        self.cfg = cfg or QTLConfig()
        self.circuit = self.cfg.circuit
        self.extractor = frozen_extractor(self.cfg.extractor_window)

    def init_params(self, rng):
        n = self.circuit.n_qubits
        pre = nn.DenseLayer.init(self.cfg.n_features, n, rng)
        post = nn.DenseLayer.init(n, N_CLASSES, rng)
        return {"pre_w": pre.weights, "pre_b": pre.bias,
                "circuit": init_parameters(self.circuit, rng),
                "post_w": post.weights, "post_b": post.bias}

    def trainable(self):
        return ("pre_w", "pre_b", "circuit", "post_w", "post_b")

    def metadata(self):
        return {"extractor": f"frozen avgpool {self.cfg.extractor_window}x{self.cfg.extractor_window}"}

    def features(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=float)
        if x.shape[-1] == self.cfg.n_features and x.ndim <= 2:
            return np.atleast_2d(x)
        x = _as_images(x)[:, None]
        out = nn.conv2d_forward(self.extractor, x)
        return out.reshape(len(out), -1)

    def forward(self, params, inputs, mode="analytic"):
        feats = self.features(inputs)
        pre = nn.dense_forward(nn.DenseLayer(params["pre_w"], params["pre_b"]), feats)
        vals = self._expectations(self.program(), params["circuit"], encoding_angles(pre, True), mode)
        logits = nn.dense_forward(nn.DenseLayer(params["post_w"], params["post_b"]), vals)
        return ModelOutput(logits, vals)

    def loss_and_grad(self, params, inputs, labels):
        feats = self.features(inputs)
        pre_layer = nn.DenseLayer(params["pre_w"], params["pre_b"])
        post_layer = nn.DenseLayer(params["post_w"], params["post_b"])
        pre = nn.dense_forward(pre_layer, feats)
        angles = encoding_angles(pre, True)
        program = self.program()
        n = program.n_qubits
        zobs = z_observables(n, range(n))
        obs = evolve_observables(program, params["circuit"], zobs)
        psi = product_states(angles)
        vals = batch_expectations(obs, psi)
        logits = nn.dense_forward(post_layer, vals)
        losses, g = nn.softmax_cross_entropy(logits, labels)
        b = len(feats)
        g = g / b
        d_pw, d_pb, d_vals = nn.dense_backward(post_layer, vals, g)
        q_grad = _quantum_grad(weight_derivative_observables(program, params["circuit"], zobs),
                               psi, d_vals)
        d_angles = np.einsum("bjk,bk->bj", angle_jacobian(obs, angles), d_vals)
        d_pre = d_angles * np.pi * clamp_derivative(pre, True)
        d_w, d_b, _ = nn.dense_backward(pre_layer, feats, d_pre)
        grads = {"pre_w": d_w, "pre_b": d_b, "circuit": q_grad, "post_w": d_pw, "post_b": d_pb}
        return float(np.mean(losses)), grads, logits


def qtl_forward(cfg: QTLConfig, params: dict, image) -> ModelOutput:
    """Reference single-input forward pass through the density-matrix simulator."""
    model = QTL(cfg)
    feats = model.features(image)[0]
    pre = nn.dense_forward(nn.DenseLayer(params["pre_w"], params["pre_b"]), feats)
    state = simulate(compile_circuit(cfg.circuit), params["circuit"], encoding_angles(pre, True))
    vals = np.array([qsim.expectation(state, qsim.Observable(q)) for q in range(cfg.circuit.n_qubits)])
    logits = nn.dense_forward(nn.DenseLayer(params["post_w"], params["post_b"]), vals)
    return ModelOutput(logits, vals)


MODELS = {"quann": (QuanNN, QuanNNConfig), "qcnn": (QCNN, QCNNConfig), "qtl": (QTL, QTLConfig)}


def build_model(kind: str, circuit: Optional[CircuitSpec] = None, **options) -> HybridModel:
    try:
        model_cls, cfg_cls = MODELS[kind]
    except KeyError:
        raise ValueError(f"unknown model {kind!r}; expected one of {sorted(MODELS)}") from None
    kwargs = dict(options)
    if circuit is not None:
        kwargs["circuit"] = circuit
    return model_cls(cfg_cls(**kwargs))


def model_backward(model: HybridModel, params: dict, images, labels) -> dict:
    """Gradients of the mean loss for every trainable parameter (frozen parts omitted)."""
    _, grads, _ = model.loss_and_grad(params, images, np.atleast_1d(labels))
    return {k: grads[k] for k in model.trainable()}

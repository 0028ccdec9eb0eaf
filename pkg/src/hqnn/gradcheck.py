"""Parameter-shift versus central finite differences over random circuits."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import finite_diff_grad, param_shift_grad
from .circuits import TEMPLATES, CircuitSpec, parameter_count
from .noise import CHANNELS, NoiseConfig

LAYER_CHOICES = (1, 3, 6)
CHECK_PROBS = (0.0, 0.3, 1.0)
RTOL = 1e-5
ATOL = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray, rtol: float = RTOL,
                   atol: float = ATOL) -> float:
    """Largest ``|a - n| / max(|n|, atol / rtol)``.

    A value below ``rtol`` means every entry satisfies
    ``|a - n| < max(rtol * |n|, atol)``: relative agreement, with an absolute
    floor for gradients near zero.
    """
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.abs(numeric), atol / rtol)
    return float(np.max(np.abs(analytic - numeric) / denom))


def noise_variants() -> list:
    return [None] + [NoiseConfig(c, p) for c in CHANNELS for p in CHECK_PROBS]


@dataclass
class GradcheckReport:
    per_template: dict = field(default_factory=dict)
    n_checks: int = 0
    seconds: float = 0.0

    @property
    def max_error(self) -> float:
        return max(self.per_template.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < RTOL


def run_gradcheck(n_circuits: int = 20, seed: int = 0, step: float = 1e-5) -> GradcheckReport:
    """Random 4-qubit circuits per template, each checked noise-free and under
    every channel at p in {0, 0.3, 1}; layers cycle through 1, 3, 6."""
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    t0 = time.perf_counter()
    for template in TEMPLATES:
        worst = 0.0
        for i in range(n_circuits):
            layers = LAYER_CHOICES[i % len(LAYER_CHOICES)]
            base = CircuitSpec(4, template, layers)
            params = rng.uniform(0.0, 2 * np.pi, parameter_count(base))
            features = rng.uniform(0.0, 1.0, 4)
            for noise in noise_variants():
                spec = base.with_noise(noise)
                ps = param_shift_grad(spec, params, features, None)
                fd = finite_diff_grad(spec, params, features, None, step=step)
                worst = max(worst, relative_error(ps, fd))
                report.n_checks += 1
        report.per_template[template] = worst
    report.seconds = time.perf_counter() - t0
    return report

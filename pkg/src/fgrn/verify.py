"""Parameter-independent property suites run by ``fgrn verify``."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .flow import CouplingCell, FlowModule
from .gradcheck import check_gradients, numerical_jacobian
from .imageops import bicubic_downscale, pixel_shuffle, quantize_array, quantize_ste, rounding_disabled, squeeze
from .layers import randomize_
from .tensor import Tensor, backward, concat_channels, conv2d, exp, l1_mean, leaky_relu, no_grad, split_channels, tanh


@dataclass
class SuiteResult:
    name: str
    max_error: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max_error={self.max_error:.3e} tol={self.tolerance:.0e} ({self.seconds:.2f}s)"


def random_flow(rng: np.random.Generator, dtype=np.float64, scale: float = 0.1) -> FlowModule:
    """A FlowModule with K in 1..4 cells, growth in 2..8 and every weight drawn
    from N(0, scale^2)."""
    k = int(rng.integers(1, 5))
    growth = int(rng.integers(2, 9))
    return randomize_(FlowModule(rng, k, growth, 1.0, dtype), rng, scale)


def flow_roundtrip_error(flow: FlowModule, x: np.ndarray) -> float:
    with no_grad():
        t = Tensor(x)
        y, _ = flow.forward(t)
        back = flow.inverse(y)
        fwd, _ = flow.forward(flow.inverse(t))
    return float(max(np.abs(back.data - x).max(), np.abs(fwd.data - x).max()))


def invertibility_errors(trials: int, seed: int = 0) -> tuple[float, float]:
    """Worst round-trip error over random flows, in float32 and float64."""
    worst32 = worst64 = 0.0
    for t in range(trials):
        for dtype in (np.float32, np.float64):
            rng = np.random.default_rng([seed, t])
            flow = random_flow(rng, dtype)
            x = rng.standard_normal((1, 3, 8, 8)).astype(dtype)
            err = flow_roundtrip_error(flow, x)
            if dtype is np.float32:
                worst32 = max(worst32, err)
            else:
                worst64 = max(worst64, err)
    return worst32, worst64


def logdet_rel_error(cell: CouplingCell, x: np.ndarray) -> float:
    with no_grad():
        jac = numerical_jacobian(lambda v: cell.forward(Tensor(v))[0].data, x)
        _, analytic = cell.forward(Tensor(x))
    _, ref = np.linalg.slogdet(jac)
    return abs(analytic.item() - ref) / max(abs(ref), 1e-12)


def logdet_errors(trials: int, seed: int = 0) -> float:
    worst = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, 10_000 + t])
        cell = randomize_(CouplingCell(rng, growth=int(rng.integers(2, 6)), clamp=float(rng.uniform(0.5, 2.0)),
                                       dtype=np.float64), rng, 0.3)
        worst = max(worst, logdet_rel_error(cell, rng.standard_normal((1, 3, 2, 2))))
    return worst


def op_gradient_checks(seed: int = 0) -> dict[str, float]:
    """Relative error of backward() vs central differences for every op."""
    rng = np.random.default_rng(seed)

    def p(*shape, lo=None):
        data = rng.standard_normal(shape)
        if lo is not None:
            data = np.where(np.abs(data) < lo, data + np.sign(data + 1e-12) * lo, data)
        return Tensor(data, requires_grad=True)

    a, b = p(2, 3, 4), p(1, 3, 1)
    mix = rng.standard_normal((1, 3, 4, 4))
    x, w, bias = p(2, 3, 5, 5), p(4, 3, 3, 3), p(4)
    cmix = rng.standard_normal((2, 4, 5, 5))
    c4 = p(1, 3, 4, 4, lo=0.05)
    s8 = p(1, 8, 2, 2)
    smix = rng.standard_normal((1, 2, 4, 4))
    l1a = p(12)
    l1b = Tensor(l1a.data + rng.choice([-1.0, 1.0], 12) * rng.uniform(0.1, 1.0, 12), requires_grad=True)
    q = Tensor(rng.uniform(0.05, 0.95, (1, 3, 2, 2)), requires_grad=True)
    qmix = rng.standard_normal((1, 3, 2, 2))
    squeeze_mix = rng.standard_normal((1, 12, 2, 2))

    checks: dict[str, tuple[Callable[[], Tensor], list[Tensor]]] = {
        "add": (lambda: ((a + b) * (a + b)).sum(), [a, b]),
        "sub": (lambda: ((a - b) * a).sum(), [a, b]),
        "mul": (lambda: (a * b).sum(), [a, b]),
        "neg": (lambda: (-(a * a)).sum(), [a]),
        "exp": (lambda: exp(a).sum(), [a]),
        "tanh": (lambda: (tanh(a) * a).sum(), [a]),
        "leaky_relu": (lambda: (leaky_relu(c4, 0.2) * mix).sum(), [c4]),
        "conv2d": (lambda: (conv2d(x, w, bias, 1, 1) * cmix).sum(), [x, w, bias]),
        "concat_split": (lambda: (concat_channels(split_channels(c4, [1, 2])[::-1]) * mix).sum(), [c4]),
        "l1_mean": (lambda: l1_mean(l1a, l1b), [l1a, l1b]),
        "squeeze": (lambda: (squeeze(c4, 2) * squeeze_mix).sum(), [c4]),
        "pixel_shuffle": (lambda: (pixel_shuffle(s8, 2) * smix).sum(), [s8]),
    }
    out = {name: check_gradients(f, ins) for name, (f, ins) in checks.items()}
    # rounding is piecewise constant, so the straight-through rule is checked
    # against the identity it promises inside (0, 1)
    q.grad = None
    backward((quantize_ste(q) * qmix).sum())
    out["quantize_ste"] = float(np.abs(q.grad - qmix).max())
    return out


def composite_gradient_error(seed: int = 0) -> float:
    """L_rec + L_bic + L_guide on a tiny float64 model vs finite differences.

    The flow sees a fixed representation: L_guide detaches its input, so
    finite differences through G_d would measure a dependence the training
    gradient deliberately omits.
    """
    from .training import RescaleModel, TrainConfig, loss_bic_baseline, loss_guide, loss_rec

    cfg = TrainConfig(width=4, n_blocks=1, flow_cells=1, flow_growth=2, hr_patch=4, dtype="float64", seed=seed)
    model = RescaleModel(cfg)
    rng = np.random.default_rng(seed)
    randomize_(model.flow, rng, 0.1)
    y = Tensor(rng.uniform(0.3, 0.7, (1, 3, 4, 4)))
    y_bic = Tensor(bicubic_downscale(y.data, 2))
    x_fixed = Tensor(rng.uniform(0.2, 0.8, (1, 3, 2, 2)))
    params = [model.down.head.weight, model.down.tail.bias, model.down.body[0].conv2.weight,
              model.up.body[0].conv1.weight, model.up.tail.weight,
              model.flow.cells[0].beta.convs[-1].weight, model.flow.cells[0].alpha.convs[0].bias,
              model.flow.cells[0].phi.convs[-1].bias]

    def loss():
        x = model.down(y)
        return (loss_rec(y, model, x) + loss_bic_baseline(x, y_bic)
                + loss_guide(x_fixed, y_bic, model.flow, 0.5))

    with rounding_disabled():
        return check_gradients(loss, params)


def squeeze_roundtrip_error(trials: int, seed: int = 0) -> float:
    worst = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, 20_000 + t])
        s = int(rng.integers(2, 5))
        shape = (int(rng.integers(1, 3)), int(rng.integers(1, 4)), s * int(rng.integers(1, 5)), s * int(rng.integers(1, 5)))
        x = rng.standard_normal(shape)
        worst = max(worst, float(np.abs(pixel_shuffle(squeeze(Tensor(x), s), s).data - x).max()))
    return worst


def quantize_error(trials: int, seed: int = 0) -> float:
    worst = 0.0
    for t in range(trials):
        v = np.random.default_rng([seed, 30_000 + t]).uniform(-0.5, 1.5, 256)
        q = quantize_array(v)
        k = q * 255.0
        worst = max(worst, float(np.abs(quantize_array(q) - q).max()), float(np.abs(k - np.round(k)).max()))
    return worst


def _timed(name: str, tol: float, fn) -> SuiteResult:
    start = time.perf_counter()
    err = fn()
    return SuiteResult(name, float(err), tol, time.perf_counter() - start)


def run_all(trials: int = 100, model=None, seed: int = 0) -> list[SuiteResult]:
    results: list[SuiteResult] = []
    inv = {}

    def invert():
        inv["v"] = invertibility_errors(trials, seed)
        return inv["v"][0]

    results.append(_timed("invertibility_f32", 1e-4, invert))
    results.append(SuiteResult("invertibility_f64", inv["v"][1], 1e-9, 0.0))
    results.append(_timed("logdet", 1e-3, lambda: logdet_errors(min(trials, 20), seed)))
    grads = {}
    results.append(_timed("gradients", 1e-4, lambda: max(grads.setdefault("g", op_gradient_checks(seed)).values())))
    results.append(_timed("composite_gradient", 1e-4, lambda: composite_gradient_error(seed)))
    results.append(_timed("squeeze_roundtrip", 1e-15, lambda: squeeze_roundtrip_error(trials, seed)))
    results.append(_timed("quantize_grid", 1e-9, lambda: quantize_error(trials, seed)))
    if model is not None:
        def model_flow():
            rng = np.random.default_rng(seed)
            x = rng.uniform(0, 1, (2, 3, 16, 16)).astype(model.dtype)
            return flow_roundtrip_error(model.flow, x)

        tol = 1e-4 if model.dtype == np.float32 else 1e-9
        results.append(_timed("checkpoint_flow_invertibility", tol, model_flow))
    return results

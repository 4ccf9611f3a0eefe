"""Finite-difference gradient checks for every primitive and loss.

Each case builds a scalar objective from the op under test (projected
with a fixed random tensor), runs the reverse pass, and compares every
input gradient against central differences. The whole suite runs in
float64 so the comparison isolates the backward formulas from float32
rounding; the checked code paths are the production ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses
from . import tensor as T
from .tensor import Tensor

__all__ = ["CheckResult", "run_all", "check_case"]

STEP = 1e-3
REL_TOL = 1e-3
ABS_TOL = 1e-5
NEAR_ZERO = 1e-4


@dataclass
class CheckResult:
    name: str
    cases: int
    max_rel_err: float
    max_abs_err: float
    passed: bool

    def line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (
            f"{self.name:<28} cases={self.cases:<3} "
            f"max_rel={self.max_rel_err:.2e} max_abs={self.max_abs_err:.2e} {status}"
        )


def _objective(build: Callable, leaves: list[Tensor]) -> Tensor:
    out = build(*leaves)
    proj = Tensor(np.cos(1.7 * np.arange(out.size)).reshape(out.shape))
    return T.reduce_sum(T.mul(out, proj))


def check_case(build: Callable, arrays: list[np.ndarray]) -> tuple[float, float, bool]:
    """Compare reverse-mode gradients with central differences.

    Returns (max relative error away from zero, max absolute error
    near zero, pass flag).
    """
    with T.use_dtype(np.float64):
        leaves = [Tensor(a.astype(np.float64), requires_grad=True) for a in arrays]
        loss = _objective(build, leaves)
        T.backward(loss)
        analytic = [leaf.grad.copy() for leaf in leaves]

        max_rel = 0.0
        max_abs = 0.0
        ok = True
        for li, base in enumerate(arrays):
            flat = base.astype(np.float64).ravel()
            for k in range(flat.size):
                shifted = flat.copy()
                shifted[k] += STEP
                plus = _objective(
                    build,
                    [
                        Tensor(shifted.reshape(base.shape) if i == li else arrays[i].astype(np.float64))
                        for i in range(len(arrays))
                    ],
                ).item()
                shifted[k] -= 2 * STEP
                minus = _objective(
                    build,
                    [
                        Tensor(shifted.reshape(base.shape) if i == li else arrays[i].astype(np.float64))
                        for i in range(len(arrays))
                    ],
                ).item()
                fd = (plus - minus) / (2 * STEP)
                an = analytic[li].ravel()[k]
                diff = abs(an - fd)
                scale = max(abs(an), abs(fd))
                if scale < NEAR_ZERO:
                    max_abs = max(max_abs, diff)
                    if diff >= ABS_TOL:
                        ok = False
                else:
                    rel = diff / scale
                    max_rel = max(max_rel, rel)
                    if rel >= REL_TOL:
                        ok = False
    return max_rel, max_abs, ok


def _rand(rng: np.random.Generator, shape, lo=-2.0, hi=2.0) -> np.ndarray:
    return rng.uniform(lo, hi, size=shape)


def _away_from(rng, shape, kink: float, margin: float = 0.05, lo=-2.0, hi=2.0):
    x = _rand(rng, shape, lo, hi)
    near = np.abs(x - kink) < margin
    x[near] = kink + margin * np.sign(x[near] - kink + 1e-9)
    return x


def _suite(seed: int) -> list[tuple[str, Callable, Callable]]:
    """(name, array factory, graph builder) triples for every op."""
    rng = np.random.default_rng(seed)

    cases: list[tuple[str, Callable, Callable]] = [
        ("add", lambda: [_rand(rng, (3, 4)), _rand(rng, (3, 4))], lambda a, b: T.add(a, b)),
        ("add-broadcast", lambda: [_rand(rng, (3, 4)), _rand(rng, (4,))], lambda a, b: T.add(a, b)),
        ("sub", lambda: [_rand(rng, (2, 5)), _rand(rng, (2, 5))], lambda a, b: T.sub(a, b)),
        ("mul", lambda: [_rand(rng, (3, 4)), _rand(rng, (3, 4))], lambda a, b: T.mul(a, b)),
        ("div", lambda: [_rand(rng, (3, 3)), _rand(rng, (3, 3), 0.5, 2.0)], lambda a, b: T.div(a, b)),
        ("neg", lambda: [_rand(rng, (7,))], T.neg),
        ("log", lambda: [_rand(rng, (3, 3), 0.2, 2.0)], T.log),
        ("exp", lambda: [_rand(rng, (3, 3))], T.exp),
        ("relu", lambda: [_away_from(rng, (4, 4), 0.0)], T.relu),
        ("sigmoid", lambda: [_rand(rng, (4, 4))], T.sigmoid),
        ("square", lambda: [_rand(rng, (4, 4))], T.square),
        ("abs", lambda: [_away_from(rng, (4, 4), 0.0)], T.absval),
        ("sqrt", lambda: [_rand(rng, (4, 4), 0.3, 2.0)], T.sqrt),
        ("matmul", lambda: [_rand(rng, (3, 4)), _rand(rng, (4, 2))], T.matmul),
        ("transpose2d", lambda: [_rand(rng, (3, 5))], T.transpose2d),
        ("reshape", lambda: [_rand(rng, (3, 4))], lambda a: T.reshape(a, (2, 6))),
        (
            "gather_rows",
            lambda: [_rand(rng, (5, 3))],
            lambda a: T.gather_rows(a, np.array([0, 2, 2, 4])),
        ),
        ("sum-all", lambda: [_rand(rng, (3, 4))], lambda a: T.reduce_sum(a)),
        ("sum-axis", lambda: [_rand(rng, (3, 4))], lambda a: T.reduce_sum(a, 1)),
        ("mean-all", lambda: [_rand(rng, (3, 4))], lambda a: T.reduce_mean(a)),
        ("mean-axes", lambda: [_rand(rng, (2, 3, 4))], lambda a: T.reduce_mean(a, (0, 2))),
        ("softmax", lambda: [_rand(rng, (4, 5))], lambda a: T.softmax(a, 1)),
        (
            "conv2d",
            lambda: [_rand(rng, (2, 2, 5, 5)), _rand(rng, (3, 2, 3, 3)), _rand(rng, (3,))],
            lambda x, w, b: T.conv2d(x, w, b, 1, 1),
        ),
        (
            "conv2d-stride2",
            lambda: [_rand(rng, (2, 2, 6, 6)), _rand(rng, (3, 2, 3, 3)), _rand(rng, (3,))],
            lambda x, w, b: T.conv2d(x, w, b, 2, 1),
        ),
        (
            "maxpool2d",
            lambda: [_rand(rng, (2, 2, 4, 4)) + 0.01 * np.arange(64).reshape(2, 2, 4, 4)],
            lambda x: T.maxpool2d(x, 2, 2),
        ),
        (
            "maxpool2d-overlap",
            lambda: [_rand(rng, (1, 2, 5, 5)) + 0.01 * np.arange(50).reshape(1, 2, 5, 5)],
            lambda x: T.maxpool2d(x, 2, 1),
        ),
        ("upsample", lambda: [_rand(rng, (2, 2, 3, 3))], lambda x: T.upsample_nearest2d(x, 2)),
        ("crop", lambda: [_rand(rng, (1, 2, 6, 6))], lambda x: T.crop_pad2d(x, 4, 4)),
        ("pad", lambda: [_rand(rng, (1, 2, 4, 4))], lambda x: T.crop_pad2d(x, 6, 7)),
        (
            "batchnorm-train",
            lambda: [_rand(rng, (3, 2, 3, 3)), _rand(rng, (2,), 0.5, 1.5), _rand(rng, (2,))],
            lambda x, g, b: T.batchnorm2d(x, g, b, np.zeros(2), np.ones(2), True),
        ),
        (
            "batchnorm-eval",
            lambda: [_rand(rng, (3, 2, 3, 3)), _rand(rng, (2,), 0.5, 1.5), _rand(rng, (2,))],
            lambda x, g, b: T.batchnorm2d(x, g, b, np.full(2, 0.3), np.full(2, 1.2), False),
        ),
        (
            "dropout",
            lambda: [_rand(rng, (4, 6))],
            lambda x: T.dropout(x, 0.4, True, seed=7, layer_id=1, step=3),
        ),
        (
            "loss-gan-d",
            lambda: [_rand(rng, (4, 1)), _rand(rng, (4, 1))],
            losses.gan_loss_discriminator,
        ),
        ("loss-gan-g", lambda: [_rand(rng, (5, 1))], losses.gan_loss_generator),
        (
            "loss-cycle",
            lambda: [_rand(rng, (2, 1, 3, 3)), _rand(rng, (2, 1, 3, 3))],
            losses.cycle_loss,
        ),
        (
            "loss-metric",
            lambda: [_rand(rng, (4, 1, 2, 3)), _rand(rng, (4, 2, 2, 2))],
            lambda x, g: losses.metric_loss(x, g, losses.all_pairs(4)),
        ),
        (
            "loss-classification",
            lambda: [_rand(rng, (4, 3))],
            lambda lg: losses.classification_loss(lg, np.array([0, 2, 1, 2])),
        ),
    ]
    return cases


def run_all(instances_per_op: int = 3, seed: int = 0) -> list[CheckResult]:
    """Run every op's randomized instances; at least 100 cases total."""
    results = []
    for name, make_arrays, build in _suite(seed):
        max_rel = 0.0
        max_abs = 0.0
        passed = True
        for _ in range(instances_per_op):
            rel, ab, ok = check_case(build, make_arrays())
            max_rel = max(max_rel, rel)
            max_abs = max(max_abs, ab)
            passed = passed and ok
        results.append(CheckResult(name, instances_per_op, max_rel, max_abs, passed))
    return results

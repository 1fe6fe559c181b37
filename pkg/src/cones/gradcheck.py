"""Central finite-difference checks of every differentiable op, in float64.

Each configuration draws an op, random shapes and random values (kept away
from the kinks of abs/relu/leaky_relu), projects the op output onto a fixed
random direction, and compares the analytic gradient of that scalar with
central differences for every input element.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

EPS = 1e-3
TOL = 1e-4


@dataclass
class GradCase:
    op: str
    fn: Callable[..., Tensor]
    inputs: list[np.ndarray]
    description: str = ""


@dataclass
class GradResult:
    op: str
    description: str
    max_rel_error: float
    passed: bool


def _away_from_zero(rng, shape, margin=0.05, scale=1.0):
    x = rng.uniform(margin, 1.0, size=shape) * scale
    return x * rng.choice([-1.0, 1.0], size=shape)


def _dims(rng, ndim, lo=1, hi=4):
    return tuple(int(v) for v in rng.integers(lo, hi + 1, size=ndim))


def _case_add(rng):
    s = _dims(rng, 2)
    b = (1, s[1]) if rng.random() < 0.5 else s  # one broadcast variant
    return GradCase("add", ad.add, [rng.standard_normal(s), rng.standard_normal(b)], f"{s}+{b}")


def _case_sub(rng):
    s = _dims(rng, 3)
    return GradCase("sub", ad.sub, [rng.standard_normal(s), rng.standard_normal(s[-1:])], f"{s}")


def _case_mul(rng):
    s = _dims(rng, 2)
    return GradCase("mul", ad.mul, [rng.standard_normal(s), rng.standard_normal(s)], f"{s}")


def _case_div(rng):
    s = _dims(rng, 2)
    return GradCase("div", ad.div, [rng.standard_normal(s), _away_from_zero(rng, s, 0.5)], f"{s}")


def _unary(name, fn, sampler):
    def make(rng):
        s = _dims(rng, int(rng.integers(1, 4)))
        return GradCase(name, fn, [sampler(rng, s)], f"{s}")
    return make


def _case_leaky(rng):
    s = _dims(rng, 2)
    slope = float(rng.uniform(0.01, 0.5))
    return GradCase("leaky_relu", lambda x: ad.leaky_relu(x, slope), [_away_from_zero(rng, s)], f"{s} slope={slope:.3f}")


def _case_sum(rng):
    s = _dims(rng, 3)
    axis = int(rng.integers(0, 3))
    return GradCase("sum", lambda x: ad.sum(x, axis=axis), [rng.standard_normal(s)], f"{s} axis={axis}")


def _case_mean(rng):
    s = _dims(rng, 4, 1, 3)
    axis = (0, 2, 3) if rng.random() < 0.5 else None
    return GradCase("mean", lambda x: ad.mean(x, axis=axis), [rng.standard_normal(s)], f"{s} axis={axis}")


def _case_reshape(rng):
    s = _dims(rng, 3)
    return GradCase("reshape", lambda x: ad.reshape(x, (s[0] * s[1], s[2])), [rng.standard_normal(s)], f"{s}")


def _case_transpose(rng):
    s = _dims(rng, 3)
    perm = tuple(int(v) for v in rng.permutation(3))
    return GradCase("transpose", lambda x: ad.transpose(x, perm), [rng.standard_normal(s)], f"{s} {perm}")


def _case_concat(rng):
    a = _dims(rng, 2)
    b = (a[0], int(rng.integers(1, 4)))
    return GradCase("concat", lambda x, y: ad.concat([x, y], axis=1),
                    [rng.standard_normal(a), rng.standard_normal(b)], f"{a}|{b}")


def _case_getitem(rng):
    s = (int(rng.integers(2, 5)), int(rng.integers(3, 7)))
    lo = int(rng.integers(0, s[1] - 1))
    hi = int(rng.integers(lo + 1, s[1] + 1))
    return GradCase("getitem", lambda x: x[:, lo:hi], [rng.standard_normal(s)], f"{s}[:, {lo}:{hi}]")


def _case_matmul(rng):
    p, i, o = _dims(rng, 3, 1, 5)
    return GradCase("matmul", ad.matmul, [rng.standard_normal((p, i)), rng.standard_normal((i, o))], f"({p},{i})@({i},{o})")


def _case_pixel_matvec(rng):
    p, o, i = _dims(rng, 3, 1, 4)
    return GradCase("pixel_matvec", ad.pixel_matvec, [rng.standard_normal((p, o, i)), rng.standard_normal((p, i))],
                    f"P={p} O={o} I={i}")


def _case_conv(rng):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 3))
    o = int(rng.integers(1, 4))
    k = int(rng.choice([1, 2, 3, 4]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    h = int(rng.integers(max(k, 3), 7))
    w = int(rng.integers(max(k, 3), 7))
    use_bias = rng.random() < 0.7
    x = rng.standard_normal((n, c, h, w))
    ker = rng.standard_normal((o, c, k, k))
    desc = f"x={x.shape} k={ker.shape} s={stride} p={pad} bias={use_bias}"
    if use_bias:
        return GradCase("conv2d", lambda a, b, bb: ad.conv2d(a, b, bb, stride=stride, pad=pad),
                        [x, ker, rng.standard_normal(o)], desc)
    return GradCase("conv2d", lambda a, b: ad.conv2d(a, b, None, stride=stride, pad=pad), [x, ker], desc)


def _case_upsample(rng):
    s = (1, int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    f = int(rng.integers(1, 4))
    return GradCase("upsample_nearest", lambda x: ad.upsample_nearest(x, f), [rng.standard_normal(s)], f"{s} x{f}")


def _case_instance_norm(rng):
    s = (int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(2, 5)), int(rng.integers(2, 5)))
    return GradCase("instance_norm", ad.instance_norm, [rng.standard_normal(s)], f"{s}")


def _case_composed(rng):
    while True:  # resample until no pre-activation sits within reach of the kink
        x = rng.standard_normal((1, 2, 5, 5))
        k = rng.standard_normal((3, 2, 3, 3))
        pre = ad.conv2d(Tensor(x), Tensor(k), stride=1, pad=1).data
        reach = 2 * EPS * max(np.abs(x).max(), np.abs(k).max()) * x.shape[1] * 9
        if np.abs(pre).min() > reach:
            break
    return GradCase("conv_relu_mean", lambda a, b: ad.mean(ad.relu(ad.conv2d(a, b, stride=1, pad=1))), [x, k],
                    "conv2d -> relu -> mean")


CASES: dict[str, Callable[[np.random.Generator], GradCase]] = {
    "add": _case_add,
    "sub": _case_sub,
    "mul": _case_mul,
    "div": _case_div,
    "square": _unary("square", ad.square, lambda r, s: r.standard_normal(s)),
    "abs": _unary("abs", ad.abs, _away_from_zero),
    "exp": _unary("exp", ad.exp, lambda r, s: r.uniform(-2, 2, s)),
    "log": _unary("log", ad.log, lambda r, s: r.uniform(0.2, 3.0, s)),
    "sqrt": _unary("sqrt", ad.sqrt, lambda r, s: r.uniform(0.2, 3.0, s)),
    "relu": _unary("relu", ad.relu, _away_from_zero),
    "leaky_relu": _case_leaky,
    "tanh": _unary("tanh", ad.tanh, lambda r, s: r.uniform(-2, 2, s)),
    "sigmoid": _unary("sigmoid", ad.sigmoid, lambda r, s: r.uniform(-4, 4, s)),
    "log_sigmoid": _unary("log_sigmoid", ad.log_sigmoid, lambda r, s: r.uniform(-4, 4, s)),
    "sum": _case_sum,
    "mean": _case_mean,
    "reshape": _case_reshape,
    "transpose": _case_transpose,
    "concat": _case_concat,
    "getitem": _case_getitem,
    "matmul": _case_matmul,
    "pixel_matvec": _case_pixel_matvec,
    "conv2d": _case_conv,
    "upsample_nearest": _case_upsample,
    "instance_norm": _case_instance_norm,
    "conv_relu_mean": _case_composed,
}


def _scalar_of(fn, arrays, direction):
    out = fn(*[Tensor(a) for a in arrays])
    return float(np.sum(out.data * direction))


def check_case(case: GradCase, eps: float = EPS, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in case.inputs]
    out = case.fn(*leaves)
    direction = rng.standard_normal(out.shape)
    loss = ad.sum(out * Tensor(direction))
    ad.backward(loss)
    worst = 0.0
    for k, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
        numeric = np.zeros(leaf.shape)
        base = [a.astype(np.float64) for a in case.inputs]
        flat = base[k].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = _scalar_of(case.fn, base, direction)
            flat[j] = orig - eps
            fm = _scalar_of(case.fn, base, direction)
            flat[j] = orig
            numeric.reshape(-1)[j] = (fp - fm) / (2 * eps)
        scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic - numeric)) / scale))
    return worst


@dataclass
class GradCheckReport:
    results: list[GradResult]
    seconds: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def max_error(self) -> float:
        return max(r.max_rel_error for r in self.results)

    def by_op(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for r in self.results:
            out[r.op] = max(out.get(r.op, 0.0), r.max_rel_error)
        return out


def run_gradcheck(n_configs: int = 100, seed: int = 0, eps: float = EPS, tol: float = TOL,
                  ops: list[str] | None = None) -> GradCheckReport:
    """Cycle through ``ops`` (default: all) for ``n_configs`` random configurations."""
    names = list(ops or CASES)
    rng = np.random.default_rng(seed)
    results = []
    t0 = time.perf_counter()
    for i in range(n_configs):
        name = names[i % len(names)]
        case = CASES[name](rng)
        err = check_case(case, eps, seed=seed + i)
        results.append(GradResult(name, case.description, err, err <= tol))
    return GradCheckReport(results, time.perf_counter() - t0)

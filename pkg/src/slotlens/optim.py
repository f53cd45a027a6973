"""Named parameter registry, initialization helpers, and Adam."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    """Glorot-uniform weight matrix of shape ``(fan_in, fan_out)``."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class ParamSet:
    """Ordered map from parameter path to leaf tensor, plus Adam state.

    Parameter names are unique.  The optimizer's step count is shared by
    all parameters in the set; first/second moment buffers are allocated
    lazily on the first :func:`adam_step`.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(data), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def size(self, prefix: str = "") -> int:
        """Total scalar count, optionally restricted to a name prefix."""
        return sum(t.size for n, t in self._params.items() if n.startswith(prefix))

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, arr in state.items():
            t = self._params[name]
            if t.data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {t.data.shape} vs {arr.shape}")
            t.data = np.asarray(arr, dtype=t.data.dtype).copy()

    def optimizer_state(self) -> dict:
        """Adam moment buffers and the shared step count."""
        return {
            "step_count": self.step_count,
            "m": {n: a.copy() for n, a in self._m.items()},
            "v": {n: a.copy() for n, a in self._v.items()},
        }

    def load_optimizer_state(self, state: dict) -> None:
        self.step_count = int(state["step_count"])
        self._m = {n: np.array(a) for n, a in state["m"].items()}
        self._v = {n: np.array(a) for n, a in state["v"].items()}


def adam_step(
    params: ParamSet,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update over every parameter, then zero grads.

    Every parameter must have a populated gradient buffer (zeros count);
    a ``None`` gradient means backward never ran and is reported as an
    error naming the parameter.
    """
    b1, b2 = betas
    for name, t in params.items():
        if t.grad is None:
            raise ValueError(f"adam_step: parameter {name!r} has no gradient")
    params.step_count += 1
    step = params.step_count
    bias1 = 1.0 - b1**step
    bias2 = 1.0 - b2**step
    for name, t in params.items():
        g = t.grad
        m = params._m.get(name)
        if m is None:
            m = params._m[name] = np.zeros_like(t.data)
        v = params._v.get(name)
        if v is None:
            v = params._v[name] = np.zeros_like(t.data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        t.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(t.data.dtype, copy=False)
        g.fill(0.0)

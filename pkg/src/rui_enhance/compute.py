"""Differentiable-operation contract, gradient verification, checkpoints.

Forward/backward execution is delegated to torch; everything here is the
surface the rest of the package relies on: the primitive-operation table
(for isolation tests), deterministic parameter initialization, a
central-finite-difference gradient checker that is independent of the
autograd path it verifies, and the binary checkpoint container.

Training runs at 32-bit; gradient verification re-runs the same graph at
64-bit, where finite differences are not noise-dominated.

The gated recurrent cell uses the standard two-gate formulation; with
input x_t, state h_{t-1}, and weight blocks (r, z, n) stacked row-wise:

    r_t = sigmoid(W_ir x_t + b_ir + W_hr h_{t-1} + b_hr)
    z_t = sigmoid(W_iz x_t + b_iz + W_hz h_{t-1} + b_hz)
    n_t = tanh(W_in x_t + b_in + r_t * (W_hn h_{t-1} + b_hn))
    h_t = (1 - z_t) * n_t + z_t * h_{t-1}

which matches the cell used by the recurrent layers in the networks.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np
import torch

from .errors import FormatError, NanError, ShapeError, WriteError

CHECKPOINT_MAGIC = b"RUICKPT1"
CHECKPOINT_VERSION = 1


class ParamStore:
    """Named parameter tensors with deterministic (lexicographic) iteration."""

    def __init__(self) -> None:
        self._params: dict[str, torch.Tensor] = {}

    def register(self, name: str, tensor: torch.Tensor) -> torch.Tensor:
        if name in self._params:
            raise ShapeError(f"parameter {name!r} registered twice")
        self._params[name] = tensor
        return tensor

    @classmethod
    def from_module(cls, module: torch.nn.Module) -> "ParamStore":
        store = cls()
        for name, p in module.named_parameters():
            store.register(name, p)
        return store

    @classmethod
    def from_dict(cls, params: Mapping[str, torch.Tensor]) -> "ParamStore":
        store = cls()
        for name, p in params.items():
            store.register(name, p)
        return store

    def names(self) -> list[str]:
        return sorted(self._params)

    def __iter__(self) -> Iterator[tuple[str, torch.Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def __getitem__(self, name: str) -> torch.Tensor:
        return self._params[name]

    def __len__(self) -> int:
        return len(self._params)


def init_parameters(module: torch.nn.Module, seed: int) -> None:
    """Seeded init: weights uniform in +-sqrt(1/fan_in), biases zero.

    Parameters are visited in lexicographic name order so the result does
    not depend on module construction order or global RNG state.
    1-D non-bias parameters (e.g. learned gains) keep their constructor
    values.
    """
    gen = torch.Generator().manual_seed(seed)
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if "bias" in name.rsplit(".", 1)[-1]:
                p.zero_()
            elif p.dim() >= 2:
                fan_in = int(np.prod(p.shape[1:]))
                bound = math.sqrt(1.0 / fan_in)
                p.uniform_(-bound, bound, generator=gen)
            # 1-D gains etc. keep constructor values


# ---------------------------------------------------------------------------
# primitive operation table


def gru_over_time(
    x: torch.Tensor,
    w_ih: torch.Tensor,
    w_hh: torch.Tensor,
    b_ih: torch.Tensor,
    b_hh: torch.Tensor,
    h0: torch.Tensor | None = None,
) -> torch.Tensor:
    """Two-gate recurrent cell applied along axis 1 of (B, T, I) input.

    Weight layout matches torch.nn.GRU: rows stacked as (reset, update,
    candidate), each block of size H.
    """
    batch, steps, _ = x.shape
    hidden = w_hh.shape[1]
    h = x.new_zeros(batch, hidden) if h0 is None else h0
    gates_x = x @ w_ih.T + b_ih
    outs = []
    for t in range(steps):
        gx = gates_x[:, t]
        gh = h @ w_hh.T + b_hh
        r = torch.sigmoid(gx[:, :hidden] + gh[:, :hidden])
        z = torch.sigmoid(gx[:, hidden : 2 * hidden] + gh[:, hidden : 2 * hidden])
        n = torch.tanh(gx[:, 2 * hidden :] + r * gh[:, 2 * hidden :])
        h = (1.0 - z) * n + z * h
        outs.append(h)
    return torch.stack(outs, dim=1)


@dataclass(frozen=True)
class Primitive:
    """One differentiable operation plus a builder for seeded test inputs."""

    fn: Callable[..., torch.Tensor]
    make_inputs: Callable[[np.random.Generator], tuple[torch.Tensor, ...]]


def _t(rng: np.random.Generator, *shape: int) -> torch.Tensor:
    return torch.tensor(rng.uniform(-1.0, 1.0, shape), dtype=torch.float64, requires_grad=True)


def primitives() -> dict[str, Primitive]:
    """The required differentiable set, keyed by operation name."""
    return {
        "add": Primitive(torch.add, lambda rng: (_t(rng, 5, 7), _t(rng, 5, 7))),
        "multiply": Primitive(torch.mul, lambda rng: (_t(rng, 5, 7), _t(rng, 5, 7))),
        "matmul": Primitive(torch.matmul, lambda rng: (_t(rng, 4, 6), _t(rng, 6, 3))),
        "conv2d": Primitive(
            lambda x, w, b: torch.nn.functional.conv2d(x, w, b, stride=(1, 2), padding=(1, 2)),
            lambda rng: (_t(rng, 2, 3, 6, 9), _t(rng, 4, 3, 3, 5), _t(rng, 4)),
        ),
        "sigmoid": Primitive(torch.sigmoid, lambda rng: (_t(rng, 5, 7),)),
        "tanh": Primitive(torch.tanh, lambda rng: (_t(rng, 5, 7),)),
        "relu": Primitive(torch.relu, lambda rng: (_t(rng, 5, 7),)),
        "softmax": Primitive(
            lambda x: torch.softmax(x, dim=1), lambda rng: (_t(rng, 5, 7),)
        ),
        "layer_norm": Primitive(
            lambda x, g, b: torch.nn.functional.layer_norm(x, (7,), g, b),
            lambda rng: (_t(rng, 5, 7), _t(rng, 7), _t(rng, 7)),
        ),
        "concat": Primitive(
            lambda a, b: torch.cat([a, b], dim=1), lambda rng: (_t(rng, 3, 4, 5), _t(rng, 3, 2, 5))
        ),
        "slice": Primitive(lambda x: x[:, 1:4], lambda rng: (_t(rng, 5, 7),)),
        "transpose": Primitive(lambda x: x.transpose(0, 1), lambda rng: (_t(rng, 5, 7),)),
        "reshape": Primitive(lambda x: x.reshape(7, 5), lambda rng: (_t(rng, 5, 7),)),
        "mean": Primitive(lambda x: x.mean(dim=1), lambda rng: (_t(rng, 5, 7),)),
        "sum": Primitive(lambda x: x.sum(dim=0), lambda rng: (_t(rng, 5, 7),)),
        "gru": Primitive(
            gru_over_time,
            lambda rng: (
                _t(rng, 2, 5, 3),
                _t(rng, 12, 3),
                _t(rng, 12, 4),
                _t(rng, 12),
                _t(rng, 12),
            ),
        ),
    }


# ---------------------------------------------------------------------------
# finite-difference gradient verification


@dataclass
class CoordReport:
    name: str
    flat_index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradReport:
    passed: bool
    tol: float
    eps: float
    worst: list[CoordReport] = field(default_factory=list)

    def worst_overall(self) -> CoordReport:
        return max(self.worst, key=lambda c: c.rel_error)

    def __str__(self) -> str:
        lines = [f"grad_check: {'PASS' if self.passed else 'FAIL'} (tol {self.tol:g}, eps {self.eps:g})"]
        for c in sorted(self.worst, key=lambda c: -c.rel_error):
            lines.append(
                f"  {c.name}[{c.flat_index}]: analytic {c.analytic:+.6e}"
                f" numeric {c.numeric:+.6e} rel {c.rel_error:.3e}"
            )
        return "\n".join(lines)


def grad_check(
    f: Callable[[], torch.Tensor],
    params: ParamStore,
    eps: float = 1e-4,
    tol: float = 1e-4,
    coords_per_param: int = 32,
    seed: int = 0,
    abs_floor: float = 1e-7,
) -> GradReport:
    """Compare autograd gradients of scalar f() against central differences.

    For each parameter a seeded random subset of at least
    ``coords_per_param`` coordinates (or all, for small tensors) is
    perturbed by +-eps.  The relative error |a - fd| / max(|a|, |fd|)
    must stay within tol; coordinate pairs that are both below
    ``abs_floor`` in magnitude count as agreeing.  Run the computation
    in float64.
    """
    for name, p in params:
        if p.grad is not None:
            p.grad = None
    y = f()
    if y.dim() != 0:
        raise ShapeError("grad_check requires a scalar-valued computation")
    if not torch.isfinite(y):
        raise NanError("forward pass produced a non-finite loss value")
    y.backward()

    rng = np.random.default_rng(seed)
    worst: list[CoordReport] = []
    passed = True
    for name, p in params:
        if p.grad is None:
            raise NanError(f"parameter {name!r} received no gradient")
        grad = p.grad.detach().clone().reshape(-1)
        if not torch.all(torch.isfinite(grad)):
            raise NanError(f"backward pass produced non-finite gradient for {name!r}")
        n = p.numel()
        k = min(coords_per_param, n)
        coords = rng.choice(n, size=k, replace=False)
        flat = p.data.reshape(-1)
        worst_c = CoordReport(name, -1, 0.0, 0.0, 0.0)
        for c in coords:
            c = int(c)
            orig = flat[c].item()
            with torch.no_grad():
                flat[c] = orig + eps
                y_plus = f().item()
                flat[c] = orig - eps
                y_minus = f().item()
                flat[c] = orig
            if not (math.isfinite(y_plus) and math.isfinite(y_minus)):
                raise NanError(f"finite-difference probe of {name!r} produced non-finite loss")
            fd = (y_plus - y_minus) / (2.0 * eps)
            a = grad[c].item()
            if abs(a) < abs_floor and abs(fd) < abs_floor:
                rel = 0.0
            else:
                rel = abs(a - fd) / max(abs(a), abs(fd))
            if rel >= worst_c.rel_error:
                worst_c = CoordReport(name, c, a, fd, rel)
        worst.append(worst_c)
        if worst_c.rel_error > tol:
            passed = False
    return GradReport(passed=passed, tol=tol, eps=eps, worst=worst)


# ---------------------------------------------------------------------------
# checkpoint container


def save_checkpoint(path: str, params: Mapping[str, torch.Tensor] | ParamStore, config: Mapping) -> None:
    """Write parameters and a config snapshot to the binary container.

    Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
    header (version, config, name -> shape/offset table), then float32
    little-endian payloads in header (lexicographic) order.
    """
    if isinstance(params, ParamStore):
        items = list(params)
    else:
        items = sorted(params.items())
    table: dict[str, dict] = {}
    payloads: list[bytes] = []
    offset = 0
    for name, tensor in items:
        arr = tensor.detach().cpu().numpy().astype("<f4")
        table[name] = {"shape": list(arr.shape), "offset": offset}
        raw = arr.tobytes()
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"version": CHECKPOINT_VERSION, "config": dict(config), "params": table},
        sort_keys=True,
    ).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for raw in payloads:
                fh.write(raw)
    except OSError as exc:
        raise WriteError(f"{path}: {exc}") from exc


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; returns (name -> float32 array, config dict)."""
    if not os.path.exists(path):
        raise FormatError(f"{path}: checkpoint not found")
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
        payload = fh.read()
    state: dict[str, np.ndarray] = {}
    for name, meta in header["params"].items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        state[name] = arr.reshape(shape).copy()
    return state, header["config"]


def load_into_module(module: torch.nn.Module, state: Mapping[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into a module, validating names and shapes."""
    own = dict(module.named_parameters())
    missing = sorted(set(own) - set(state))
    extra = sorted(set(state) - set(own))
    if missing or extra:
        raise FormatError(f"checkpoint/model mismatch: missing {missing}, unexpected {extra}")
    with torch.no_grad():
        for name, arr in state.items():
            p = own[name]
            if tuple(p.shape) != tuple(arr.shape):
                raise FormatError(f"parameter {name!r}: checkpoint shape {arr.shape} != model {tuple(p.shape)}")
            p.copy_(torch.from_numpy(np.asarray(arr)).to(p.dtype))

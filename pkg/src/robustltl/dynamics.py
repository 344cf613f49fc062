"""Affine parameter-varying dynamics ``x+ = A(w) x + B(w) u + c(w)`` and their stacked form."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .logic.semantics import Trajectory


class DimensionError(ValueError):
    pass


class MatrixFamily:
    """A matrix-valued function of ``w``: constant, affine, or a callback.

    Affine families are ``base + sum_i w_i * increments[i]``; they are kept in
    that form so the robust-linear path can read off the dependence directly.
    """

    def __init__(self, base=None, increments=None, fn: Optional[Callable] = None,
                 shape: Optional[tuple] = None):
        if fn is not None:
            if shape is None:
                raise ValueError("callback families need an explicit shape")
            self.fn, self.base, self.increments = fn, None, None
            self.shape = tuple(shape)
            return
        self.fn = None
        self.base = np.asarray(base, dtype=float)
        self.shape = self.base.shape
        if increments is None:
            self.increments = None
        else:
            inc = np.asarray(increments, dtype=float)
            if inc.shape[1:] != self.shape:
                raise DimensionError(f"increments of shape {inc.shape[1:]} do not match base {self.shape}")
            self.increments = inc

    @classmethod
    def constant(cls, M) -> "MatrixFamily":
        return cls(base=M)

    @classmethod
    def affine(cls, base, increments) -> "MatrixFamily":
        return cls(base=base, increments=increments)

    @classmethod
    def callback(cls, fn: Callable, shape: tuple) -> "MatrixFamily":
        return cls(fn=fn, shape=shape)

    @property
    def is_constant(self) -> bool:
        return self.fn is None and (self.increments is None or not np.any(self.increments))

    @property
    def is_affine(self) -> bool:
        return self.fn is None

    def __call__(self, w) -> np.ndarray:
        if self.fn is not None:
            out = np.asarray(self.fn(np.asarray(w, dtype=float)), dtype=float).reshape(self.shape)
            return out
        if self.increments is None:
            return self.base
        w = np.asarray(w, dtype=float).reshape(-1)
        return self.base + np.tensordot(w[: len(self.increments)], self.increments, axes=1)


def _family(m) -> MatrixFamily:
    return m if isinstance(m, MatrixFamily) else MatrixFamily.constant(m)


@dataclass(frozen=True)
class StackedDynamics:
    A: np.ndarray  # ((N+1) n_x, n_x)
    B: np.ndarray  # ((N+1) n_x, N n_u)
    c: np.ndarray  # ((N+1) n_x,)

    def states(self, x0, u) -> np.ndarray:
        return self.A @ np.asarray(x0, float) + self.B @ np.asarray(u, float).reshape(-1) + self.c


class UncertainSystem:
    def __init__(self, A, B, c=None, *, n_w: int, N: int):
        self.A = _family(A)
        self.B = _family(B)
        if len(self.A.shape) != 2 or self.A.shape[0] != self.A.shape[1]:
            raise DimensionError(f"A must be square, got {self.A.shape}")
        self.n_x = self.A.shape[0]
        if len(self.B.shape) != 2 or self.B.shape[0] != self.n_x:
            raise DimensionError(f"B must have {self.n_x} rows, got {self.B.shape}")
        self.n_u = self.B.shape[1]
        self.c = _family(np.zeros(self.n_x) if c is None else c)
        if self.c.shape != (self.n_x,):
            raise DimensionError(f"c must have shape ({self.n_x},), got {self.c.shape}")
        if N < 1:
            raise ValueError("horizon must be at least 1")
        self.n_w, self.N = int(n_w), int(N)

    @property
    def is_lti(self) -> bool:
        """Constant A, B and c affine in w (the fast robust path)."""
        return self.A.is_constant and self.B.is_constant and self.c.is_affine

    def _w_seq(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(self.N + 1, self.n_w) if self.n_w else np.zeros((self.N + 1, 0))
        if w.shape != (self.N + 1, self.n_w):
            raise DimensionError(f"disturbance sequence must have shape ({self.N + 1}, {self.n_w}), got {w.shape}")
        return w

    def simulate(self, x0, u, w) -> Trajectory:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.shape != (self.n_x,):
            raise DimensionError(f"x0 must have length {self.n_x}")
        u = np.asarray(u, dtype=float)
        if u.size != self.N * self.n_u:
            raise DimensionError(f"input sequence must hold {self.N} inputs of size {self.n_u}")
        u = u.reshape(self.N, self.n_u)
        w = self._w_seq(w)
        x = np.empty((self.N + 1, self.n_x))
        x[0] = x0
        for k in range(self.N):
            x[k + 1] = self.A(w[k]) @ x[k] + self.B(w[k]) @ u[k] + self.c(w[k])
        return Trajectory(x, w)

    def stack(self, w) -> StackedDynamics:
        """Stacked map ``x = A x0 + B u + c`` built from the block product formulas."""
        w = self._w_seq(w)
        N, nx, nu = self.N, self.n_x, self.n_u
        As = [self.A(w[k]) for k in range(N)]
        Bs = [self.B(w[k]) for k in range(N)]
        cs = [self.c(w[k]) for k in range(N)]
        I = np.eye(nx)

        def prod(indices):
            # ordered product A(w_{i0}) A(w_{i1}) ...; empty product is identity
            out = I
            for j in indices:
                out = out @ As[j]
            return out

        Abig = np.zeros(((N + 1) * nx, nx))
        Bbig = np.zeros(((N + 1) * nx, N * nu))
        cbig = np.zeros((N + 1) * nx)
        # block indices i = 1..N+1, j = 1..N as in the block product formulas
        for i in range(1, N + 2):
            rows = slice((i - 1) * nx, i * nx)
            Abig[rows] = prod([i - 2 - j for j in range(0, i - 1)])
            for j in range(1, N + 1):
                if i > j:
                    Bbig[rows, (j - 1) * nu: j * nu] = prod([i - k for k in range(2, i - j + 1)]) @ Bs[j - 1]
            acc = np.zeros(nx)
            for k in range(0, i - 1):
                acc += prod([i - 2 - j for j in range(0, i - k - 2)]) @ cs[k]
            cbig[rows] = acc
        return StackedDynamics(Abig, Bbig, cbig)


def affine_c_terms(sys: UncertainSystem) -> tuple:
    """For LTI systems: ``cbold(w) = c0 + Cw @ w_stacked`` with ``w_stacked`` of length (N+1) n_w."""
    if not sys.is_lti:
        raise ValueError("system is not linear in the disturbance")
    N, nx, nw = sys.N, sys.n_x, sys.n_w
    A = sys.A.base
    c_base = sys.c.base
    c_inc = sys.c.increments if sys.c.increments is not None else np.zeros((0, nx))
    n_inc = len(c_inc)
    c0 = np.zeros((N + 1) * nx)
    Cw = np.zeros(((N + 1) * nx, (N + 1) * nw))
    powers = [np.eye(nx)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    for i in range(1, N + 1):
        for k in range(i):
            M = powers[i - 1 - k]
            c0[i * nx:(i + 1) * nx] += M @ c_base
            for q in range(min(n_inc, nw)):
                Cw[i * nx:(i + 1) * nx, k * nw + q] += M @ c_inc[q]
    return c0, Cw

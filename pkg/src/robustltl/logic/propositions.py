"""Uncertainty-dependent polyhedral atomic propositions ``P(w) x <= rho(w)``."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class AtomicProposition:
    """Base class: a proposition with ``r`` rows over an ``n_x`` state."""

    id: str
    r: int
    n_x: int
    n_w: int

    def evaluate(self, w) -> tuple:
        """Return ``(P(w), rho(w))`` with shapes ``(r, n_x)`` and ``(r,)``."""
        raise NotImplementedError

    def evaluate_batch(self, W) -> tuple:
        """Vectorized :meth:`evaluate` over rows of ``W`` (shape ``(S, n_w)``)."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        Ps, rhos = zip(*(self.evaluate(w) for w in W)) if len(W) else ((), ())
        return (np.array(Ps).reshape(len(W), self.r, self.n_x),
                np.array(rhos).reshape(len(W), self.r))

    @property
    def is_affine(self) -> bool:
        return False

    def contains(self, x, w, tol: float = 1e-6) -> bool:
        P, rho = self.evaluate(w)
        return bool(np.all(P @ np.asarray(x, dtype=float) <= rho + tol))

    def _check(self, P, rho):
        if P.shape != (self.r, self.n_x) or rho.shape != (self.r,):
            raise ValueError(f"proposition {self.id!r} returned shapes {P.shape}, {rho.shape}; "
                             f"expected ({self.r}, {self.n_x}) and ({self.r},)")


class AffineProposition(AtomicProposition):
    """Constant ``P`` and ``rho(w) = rho0 + rhoW @ w``."""

    def __init__(self, id: str, P, rho0, rhoW=None, n_w: Optional[int] = None):
        self.id = id
        self.P = np.atleast_2d(np.asarray(P, dtype=float))
        self.rho0 = np.asarray(rho0, dtype=float).reshape(-1)
        self.r, self.n_x = self.P.shape
        if self.r < 1:
            raise ValueError("a proposition needs at least one row")
        if rhoW is None:
            self.n_w = 0 if n_w is None else n_w
            self.rhoW = np.zeros((self.r, self.n_w))
        else:
            self.rhoW = np.atleast_2d(np.asarray(rhoW, dtype=float))
            self.n_w = self.rhoW.shape[1]
        if self.rho0.shape != (self.r,) or self.rhoW.shape[0] != self.r:
            raise ValueError(f"proposition {id!r}: inconsistent row counts")
        self.P.setflags(write=False)
        self.rho0.setflags(write=False)
        self.rhoW.setflags(write=False)

    @property
    def is_affine(self) -> bool:
        return True

    def evaluate(self, w):
        w = np.asarray(w, dtype=float).reshape(-1)
        rho = self.rho0 + (self.rhoW @ w[: self.n_w] if self.n_w else 0.0)
        return self.P, np.asarray(rho, dtype=float)

    def evaluate_batch(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        S = W.shape[0]
        rho = np.broadcast_to(self.rho0, (S, self.r)).copy()
        if self.n_w:
            rho += W[:, : self.n_w] @ self.rhoW.T
        return np.broadcast_to(self.P, (S, self.r, self.n_x)), rho


class CallbackProposition(AtomicProposition):
    """General nonlinear dependence through a user function ``w -> (P, rho)``."""

    def __init__(self, id: str, fn: Callable, r: int, n_x: int, n_w: int):
        self.id, self.fn, self.r, self.n_x, self.n_w = id, fn, r, n_x, n_w

    def evaluate(self, w):
        P, rho = self.fn(np.asarray(w, dtype=float))
        P = np.atleast_2d(np.asarray(P, dtype=float))
        rho = np.asarray(rho, dtype=float).reshape(-1)
        self._check(P, rho)
        return P, rho


class RotatedBoxProposition(AtomicProposition):
    """Rectangle with side lengths ``b`` centred at ``w[center]``, rotated by ``w[angle]``.

    A state point ``x`` (its ``state`` coordinates) lies inside iff
    ``[I; -I] R(theta)^T (x - c) <= b / 2`` stacked twice, i.e. the body-frame
    offset is within half the side lengths. ``angle=None`` gives an axis-aligned
    box, which is affine in ``w`` (see :meth:`as_affine`).
    """

    def __init__(self, id: str, b: Sequence[float], n_x: int, n_w: int,
                 center: Sequence[int] = (0, 1), angle: Optional[int] = 2,
                 state: Sequence[int] = (0, 1)):
        self.id = id
        self.b = np.asarray(b, dtype=float)
        if self.b.shape != (2,) or np.any(self.b <= 0):
            raise ValueError("side lengths must be two positive numbers")
        self.n_x, self.n_w, self.r = n_x, n_w, 4
        self.center = tuple(int(i) for i in center)
        self.angle = None if angle is None else int(angle)
        self.state = tuple(int(i) for i in state)
        self._S = np.zeros((2, n_x))
        self._S[0, self.state[0]] = 1.0
        self._S[1, self.state[1]] = 1.0
        self._half = np.concatenate([self.b, self.b]) / 2.0

    @staticmethod
    def rotation(theta: float) -> np.ndarray:
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, -s], [s, c]])

    def evaluate(self, w):
        w = np.asarray(w, dtype=float).reshape(-1)
        theta = 0.0 if self.angle is None else w[self.angle]
        Rt = self.rotation(theta).T
        E = np.vstack([Rt, -Rt])
        c = w[list(self.center)]
        return E @ self._S, E @ c + self._half

    def evaluate_batch(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        S = W.shape[0]
        theta = np.zeros(S) if self.angle is None else W[:, self.angle]
        cs, sn = np.cos(theta), np.sin(theta)
        # R^T rows: [c, s], [-s, c]
        Rt = np.stack([np.stack([cs, sn], -1), np.stack([-sn, cs], -1)], 1)
        E = np.concatenate([Rt, -Rt], axis=1)  # (S, 4, 2)
        P = E @ self._S
        c = W[:, list(self.center)]
        rho = np.einsum("sij,sj->si", E, c) + self._half
        return P, rho

    @property
    def is_affine(self) -> bool:
        return self.angle is None

    def as_affine(self) -> AffineProposition:
        if self.angle is not None:
            raise ValueError("a rotated box is not affine in w")
        E = np.vstack([np.eye(2), -np.eye(2)])
        rhoW = np.zeros((4, self.n_w))
        rhoW[:, list(self.center)] = E
        return AffineProposition(self.id, E @ self._S, self._half, rhoW)


def axis_box(id: str, b, n_x: int, n_w: int, center=(0, 1), state=(0, 1)) -> AffineProposition:
    """Axis-aligned box proposition in affine form."""
    return RotatedBoxProposition(id, b, n_x, n_w, center=center, angle=None, state=state).as_affine()

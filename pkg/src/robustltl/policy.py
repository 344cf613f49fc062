"""Disturbance-feedback policies ``u(w) = H kappa(w)`` over polyhedral partitions."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np


class SplitError(ValueError):
    pass


class MaskViolation(ValueError):
    pass


@dataclass(frozen=True)
class Piece:
    """Polyhedron ``{w : G w <= g}`` with an optional bounding box and a lineage label."""

    G: np.ndarray
    g: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    label: str = "0"

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float).reshape(-1, self.dim_hint())
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float).reshape(-1))
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float).reshape(-1))

    def dim_hint(self) -> int:
        G = np.asarray(self.G)
        if G.ndim == 2:
            return G.shape[1]
        if self.lower is not None:
            return len(np.asarray(self.lower).reshape(-1))
        raise ValueError("cannot infer piece dimension")

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    def violation(self, w) -> float:
        """Max constraint violation (0 inside). Box distance counts in the inf-norm."""
        w = np.asarray(w, dtype=float)
        v = 0.0
        if len(self.g):
            v = max(v, float(np.max(self.G @ w - self.g)))
        if self.lower is not None:
            v = max(v, float(np.max(self.lower - w)))
        if self.upper is not None:
            v = max(v, float(np.max(w - self.upper)))
        return max(v, 0.0)

    def contains(self, w, tol: float = 1e-12) -> bool:
        return self.violation(w) <= tol

    def with_cut(self, coord: int, value: float, side: str, label: str) -> "Piece":
        row = np.zeros(self.dim)
        lower = None if self.lower is None else self.lower.copy()
        upper = None if self.upper is None else self.upper.copy()
        if side == "le":
            row[coord] = 1.0
            rhs = value
            if upper is not None:
                upper[coord] = min(upper[coord], value)
        else:
            row[coord] = -1.0
            rhs = -value
            if lower is not None:
                lower[coord] = max(lower[coord], value)
        return Piece(np.vstack([self.G, row]), np.append(self.g, rhs), lower, upper, label)

    def to_dict(self) -> dict:
        d = {"label": self.label, "G": self.G.tolist(), "g": self.g.tolist()}
        if self.lower is not None:
            d["lower"] = self.lower.tolist()
        if self.upper is not None:
            d["upper"] = self.upper.tolist()
        return d

    @classmethod
    def from_dict(cls, d: Mapping, dim: int) -> "Piece":
        G = np.asarray(d.get("G", []), dtype=float).reshape(-1, dim)
        return cls(G, np.asarray(d.get("g", []), dtype=float), d.get("lower"), d.get("upper"),
                   str(d.get("label", "0")))


class Partition:
    """Ordered list of pieces. Points on shared boundaries go to the lowest index."""

    def __init__(self, pieces: Sequence[Piece]):
        if not pieces:
            raise ValueError("a partition needs at least one piece")
        self.pieces = tuple(pieces)
        self.dim = self.pieces[0].dim
        if any(p.dim != self.dim for p in self.pieces):
            raise ValueError("pieces live in different dimensions")

    @classmethod
    def trivial(cls, dim: int) -> "Partition":
        return cls([Piece(np.zeros((0, dim)), np.zeros(0), label="0")])

    @classmethod
    def halfspace_split(cls, dim: int, a, b: float, labels=("1", "2")) -> "Partition":
        """Two pieces ``a.w <= b`` and ``a.w >= b``."""
        a = np.asarray(a, dtype=float).reshape(1, dim)
        return cls([Piece(a, [b], label=labels[0]), Piece(-a, [-b], label=labels[1])])

    @property
    def P(self) -> int:
        return len(self.pieces)

    def __len__(self) -> int:
        return len(self.pieces)

    def locate(self, w, tol: float = 1e-12) -> tuple:
        """``(piece index, inside)``; outside points go to the nearest piece."""
        w = np.asarray(w, dtype=float).reshape(-1)
        viol = [p.violation(w) for p in self.pieces]
        for i, v in enumerate(viol):
            if v <= tol:
                return i, True
        return int(np.argmin(viol)), False

    def locate_batch(self, W) -> tuple:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        idx = np.empty(len(W), dtype=int)
        inside = np.empty(len(W), dtype=bool)
        for s, w in enumerate(W):
            idx[s], inside[s] = self.locate(w)
        return idx, inside

    def to_dict(self) -> dict:
        return {"dim": self.dim, "pieces": [p.to_dict() for p in self.pieces]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Partition":
        dim = int(d["dim"])
        return cls([Piece.from_dict(p, dim) for p in d["pieces"]])


def causality_mask(N: int, n_u: int, n_w: int, P: int = 1, memory: Optional[float] = None) -> np.ndarray:
    """Free entries of ``H``; ``memory=None`` (or inf) means unlimited memory."""
    if memory is not None and memory < 0:
        raise ValueError("memory must be nonnegative")
    D = (N + 1) * n_w
    block = np.zeros((N * n_u, 1 + D), dtype=bool)
    block[:, 0] = True
    for k in range(N):
        lo = 0 if memory is None or math.isinf(memory) else max(0, k - int(memory) + 1)
        for j in range(lo, k + 1):
            block[k * n_u:(k + 1) * n_u, 1 + j * n_w: 1 + (j + 1) * n_w] = True
    return np.tile(block, (1, P))


class PolicySpec:
    """Structure of a piecewise-affine disturbance-feedback policy.

    Pieces are told apart from the disturbance, so an input applied before the
    active piece can be observed must not depend on it. ``reveal_stage`` is the
    first stage at which the piece is known; rows of ``u_k`` with ``k`` below it
    share one set of parameters across all pieces.
    """

    def __init__(self, N: int, n_u: int, n_w: int, partition: Optional[Partition] = None,
                 memory: Optional[float] = None, reveal_stage: Optional[int] = None):
        self.N, self.n_u, self.n_w = int(N), int(n_u), int(n_w)
        self.D = (self.N + 1) * self.n_w
        self.partition = partition if partition is not None else Partition.trivial(self.D)
        if self.partition.dim != self.D:
            raise ValueError(f"partition dimension {self.partition.dim} != {(self.N + 1)}*{self.n_w}")
        self.memory = None if memory is None or math.isinf(memory) else int(memory)
        self.reveal_stage = _reveal_stage(self.partition, self.n_w) if reveal_stage is None else int(reveal_stage)
        self.mask = causality_mask(self.N, self.n_u, self.n_w, self.P, self.memory)
        self.mask.setflags(write=False)
        self.param_index = self._build_index()
        self.param_index.setflags(write=False)

    @property
    def P(self) -> int:
        return self.partition.P

    @property
    def n_kappa(self) -> int:
        return self.P * (1 + self.D)

    @property
    def d(self) -> int:
        """Number of independent policy parameters."""
        return int(self.param_index.max()) + 1 if self.mask.any() else 0

    def _build_index(self) -> np.ndarray:
        idx = -np.ones(self.mask.shape, dtype=np.int64)
        w = 1 + self.D
        nxt = 0
        for r in range(self.mask.shape[0]):
            k = r // self.n_u
            tied = self.P > 1 and k < self.reveal_stage
            for c in range(w):
                if not self.mask[r, c]:
                    continue
                if tied:
                    idx[r, c::w] = nxt
                    nxt += 1
            if tied:
                continue
            for i in range(self.P):
                for c in range(w):
                    if self.mask[r, i * w + c]:
                        idx[r, i * w + c] = nxt
                        nxt += 1
        return idx

    def kappa(self, w) -> tuple:
        """Feature vector and whether ``w`` lies inside the partition."""
        w = np.asarray(w, dtype=float).reshape(-1)
        i, inside = self.partition.locate(w)
        out = np.zeros(self.n_kappa)
        base = i * (1 + self.D)
        out[base] = 1.0
        out[base + 1: base + 1 + self.D] = w
        return out, inside

    def H_from_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        H = np.zeros(self.mask.shape)
        H[self.mask] = theta[self.param_index[self.mask]]
        return H

    def theta_from_H(self, H) -> np.ndarray:
        H = np.asarray(H, dtype=float)
        theta = np.zeros(self.d)
        theta[self.param_index[self.mask]] = H[self.mask]
        return theta

    def to_dict(self) -> dict:
        return {"N": self.N, "n_u": self.n_u, "n_w": self.n_w,
                "memory": self.memory, "reveal_stage": self.reveal_stage,
                "partition": self.partition.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PolicySpec":
        return cls(d["N"], d["n_u"], d["n_w"], Partition.from_dict(d["partition"]),
                   d.get("memory"), d.get("reveal_stage"))


def _reveal_stage(partition: Partition, n_w: int) -> int:
    """Earliest stage at which every piece-defining row can be evaluated."""
    stage = 0
    if partition.P == 1:
        return 0
    for p in partition.pieces:
        nz = np.flatnonzero(np.any(p.G != 0, axis=0))
        if len(nz):
            stage = max(stage, int(nz.max()) // n_w)
    return stage


def kappa(spec: PolicySpec, w) -> np.ndarray:
    return spec.kappa(w)[0]


@dataclass
class PolicyParam:
    H: np.ndarray

    def check(self, spec: PolicySpec, tol: float = 0.0) -> None:
        H = np.asarray(self.H, dtype=float)
        if H.shape != spec.mask.shape:
            raise MaskViolation(f"H has shape {H.shape}, expected {spec.mask.shape}")
        bad = np.abs(H[~spec.mask]) > tol
        if bad.any():
            r, c = np.argwhere(~spec.mask)[np.flatnonzero(bad)[0]]
            raise MaskViolation(f"H[{r}, {c}] = {H[r, c]!r} is outside the causality mask")


def evaluate_policy(param: PolicyParam, spec: PolicySpec, w) -> np.ndarray:
    """Input sequence ``H kappa(w)`` as a flat vector of length ``N n_u``."""
    param.check(spec)
    return np.asarray(param.H, dtype=float) @ spec.kappa(w)[0]


@dataclass(frozen=True)
class RecourseSpec:
    """Piecewise-constant recourse: one copy of the auxiliaries per piece."""

    partition: Optional[Partition] = None

    @property
    def P_delta(self) -> int:
        return 1 if self.partition is None else self.partition.P

    def piece(self, w) -> int:
        return 0 if self.partition is None else self.partition.locate(w)[0]


def refine_partition(partition: Partition, binding: Mapping[int, Sequence], coords: Sequence[int]) -> Partition:
    """Split each piece in ``binding`` between its two most distant binding scenarios.

    The cut is axis-aligned on the permitted coordinate ``coords`` with the
    largest separation, through the midpoint of the pair. Distances are taken
    over the permitted coordinates only.
    """
    coords = list(coords)
    new = []
    for i, piece in enumerate(partition.pieces):
        if i not in binding:
            new.append(piece)
            continue
        Wb = np.atleast_2d(np.asarray(binding[i], dtype=float))
        if len(Wb) < 2:
            raise SplitError(f"piece {piece.label} needs at least two binding scenarios")
        Z = Wb[:, coords]
        D2 = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1)
        a, b = np.unravel_index(int(np.argmax(D2)), D2.shape)
        sep = np.abs(Z[a] - Z[b])
        j = int(np.argmax(sep))
        if sep[j] <= 1e-12:
            raise SplitError(f"no permitted coordinate separates the binding scenarios of piece {piece.label}")
        c = coords[j]
        mid = 0.5 * (Wb[a, c] + Wb[b, c])
        new.append(piece.with_cut(c, mid, "le", piece.label + ".0"))
        new.append(piece.with_cut(c, mid, "ge", piece.label + ".1"))
    return Partition(new)


def save_policy(path: str, spec: PolicySpec, H, extra: Optional[dict] = None) -> None:
    from .io_utils import atomic_write_text
    doc = {"policy": spec.to_dict(), "mask_shape": list(spec.mask.shape),
           "H": np.asarray(H, dtype=float).tolist()}
    if extra:
        doc.update(extra)
    atomic_write_text(path, json.dumps(doc, indent=1))


def load_policy(path: str) -> tuple:
    with open(path) as fh:
        doc = json.load(fh)
    spec = PolicySpec.from_dict(doc["policy"])
    H = np.asarray(doc["H"], dtype=float).reshape(doc["mask_shape"])
    PolicyParam(H).check(spec)
    return spec, H, doc

"""Case-study configuration. Desk and paper scale differ only in these numbers."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Tuple

KMH = 1.0 / 3.6

DESK_MAX_N = 6
DESK_MAX_K_PHI = 300


@dataclass(frozen=True)
class CaseConfig:
    case: str                       # "turning" | "overtaking"
    scale: str = "desk"             # "desk" | "paper"
    N: int = 5
    Ts: float = 0.4
    K_phi: Optional[int] = 200      # None: size from the scenario bounds
    K_s: Optional[int] = 60
    K_w: Optional[int] = None       # None: size from the support bound
    eps_phi: float = 0.05
    eps_s: float = 0.3
    beta_phi: float = 1e-3
    beta_s: float = 1e-3
    eps: float = 0.05
    beta: float = 1e-3
    memory: Optional[int] = 3
    P_delta: int = 1
    P_values: Tuple[int, ...] = (1, 2, 3, 5)
    seed: int = 0
    n_eval: int = 10_000
    n_replay: int = 5
    polarity: str = "auto"
    backend: Optional[str] = None
    H_bound: float = 100.0
    feastol: float = 1e-6
    time_limit: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.case not in ("turning", "overtaking"):
            raise ValueError(f"unknown case {self.case!r}")
        if self.scale not in ("desk", "paper"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.scale == "desk":
            if self.N > DESK_MAX_N:
                raise ValueError(f"desk scale caps N at {DESK_MAX_N}")
            if self.K_phi is not None and self.K_phi > DESK_MAX_K_PHI:
                raise ValueError(f"desk scale caps K_phi at {DESK_MAX_K_PHI}")

    def with_(self, **kw) -> "CaseConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["P_values"] = list(self.P_values)
        return d

    def diff(self, other: "CaseConfig") -> dict:
        a, b = self.to_dict(), other.to_dict()
        return {k: (a[k], b[k]) for k in a if a[k] != b[k]}


def turning_config(scale: str = "desk", **kw) -> CaseConfig:
    if scale == "paper":
        base = dict(N=10, K_phi=None, K_s=None)
    else:
        base = dict(N=5, K_phi=200, K_s=60)
    base.update(kw)
    return CaseConfig("turning", scale, memory=base.pop("memory", 3), **base)


def overtaking_config(scale: str = "desk", **kw) -> CaseConfig:
    if scale == "paper":
        base = dict(N=10, P_values=(1, 2, 3, 5, 9))
    else:
        base = dict(N=6, P_values=(1, 2, 3, 5))
    base.update(kw)
    return CaseConfig("overtaking", scale, K_phi=None, K_s=None, memory=base.pop("memory", None), **base)

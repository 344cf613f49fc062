"""Double-integrator car, its constraint sets and the truck proposition."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from ..dynamics import UncertainSystem
from ..logic import RotatedBoxProposition, always, parse_formula
from ..logic.propositions import AtomicProposition
from ..problem import ObjectiveSpec, Polyhedron, SynthesisProblem
from .config import KMH, CaseConfig

CAR_SIZE = (4.5, 2.0)
TRUCK_SIZE = (9.0, 2.5)
ACCEL_HALF_WIDTHS = (3.5, 5.0)
ACCEL_OFFSET = 6.5
LANE_WIDTH = 3.5


def zoh_double_integrator(Ts: float) -> tuple:
    I = np.eye(2)
    A = np.block([[I, Ts * I], [np.zeros((2, 2)), I]])
    B = np.vstack([0.5 * Ts ** 2 * I, Ts * I])
    return A, B


def weighted_l1_ball(center, half_widths, index, n: int) -> Polyhedron:
    """``{z : |z_i - c_0|/r_0 + |z_j - c_1|/r_1 <= 1}`` over coordinates ``index = (i, j)``."""
    c = np.asarray(center, dtype=float)
    r = np.asarray(half_widths, dtype=float)
    rows, rhs = [], []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            a = np.zeros(n)
            a[index[0]] = s1 / r[0]
            a[index[1]] = s2 / r[1]
            rows.append(a)
            rhs.append(1.0 + s1 * c[0] / r[0] + s2 * c[1] / r[1])
    return Polyhedron(np.array(rows), np.array(rhs))


def input_set(u_set: str = "literal") -> Polyhedron:
    """Acceleration set: a weighted 1-norm ball.

    ``literal`` centres it at ``(-6.5, 0)`` with half-widths ``(3.5, 5)``, so the
    car always brakes by at least 3 m/s^2. ``mirrored`` centres it at ``(3.5, 0)``
    with half-widths ``(6.5, 5)``, giving ``u1`` in ``[-3, 10]``.
    """
    if u_set == "literal":
        return weighted_l1_ball((-ACCEL_OFFSET, 0.0), ACCEL_HALF_WIDTHS, (0, 1), 2)
    if u_set == "mirrored":
        return weighted_l1_ball((ACCEL_HALF_WIDTHS[0], 0.0), (ACCEL_OFFSET, ACCEL_HALF_WIDTHS[1]), (0, 1), 2)
    raise ValueError(f"unknown input set {u_set!r}")


@dataclass
class CarScenario:
    config: CaseConfig
    system: UncertainSystem
    X: Polyhedron
    U: Polyhedron
    x0: np.ndarray
    props: Dict[str, AtomicProposition]
    n_w: int

    def problem(self) -> SynthesisProblem:
        """Keep clear of the truck at all times and push ``x1_N`` forward."""
        formula = always(parse_formula("!truck", self.props))
        objective = ObjectiveSpec("sample_average_terminal", np.array([-1.0, 0.0, 0.0, 0.0]))
        return SynthesisProblem(self.system, formula, self.props, self.x0, self.X, self.U,
                                objective=objective, H_bound=self.config.H_bound, tol=1e-5)


def _state_set(vbar, v1, v2, x1_range, x2_range) -> Polyhedron:
    vel = weighted_l1_ball(vbar, (v1, v2), (2, 3), 4)
    lo = np.array([x1_range[0], x2_range[0], -np.inf, -np.inf])
    hi = np.array([x1_range[1], x2_range[1], np.inf, np.inf])
    return vel.stack(Polyhedron.box(lo, hi))


def build_car(config: CaseConfig, u_set: str = "literal") -> CarScenario:
    A, B = zoh_double_integrator(config.Ts)
    obstacle = np.add(TRUCK_SIZE, CAR_SIZE)
    half_car_width = CAR_SIZE[1] / 2
    if config.case == "turning":
        n_w = 3
        # right lane of a two-way street; the car centre keeps half its width off the kerbs
        X = _state_set((40 * KMH, 0.0), 40 * KMH, 20 * KMH, (-10.0, 100.0),
                       (-LANE_WIDTH + half_car_width, LANE_WIDTH - half_car_width))
        x0 = np.array([0.0, -LANE_WIDTH / 2, 50 * KMH, 0.0])
        truck = RotatedBoxProposition("truck", obstacle, 4, n_w, center=(0, 1), angle=2)
    else:
        n_w = 2
        # frame co-moving at 100 km/h; the car stays in the left lane [0, 3.5]
        X = _state_set((10 * KMH, 0.0), 20 * KMH, 20 * KMH, (-50.0, 100.0),
                       (half_car_width, LANE_WIDTH - half_car_width))
        x0 = np.array([0.0, LANE_WIDTH / 2, 0.0, 0.0])
        truck = RotatedBoxProposition("truck", obstacle, 4, n_w, center=(0, 1), angle=None).as_affine()
    system = UncertainSystem(A, B, n_w=n_w, N=config.N)
    return CarScenario(config, system, X, input_set(u_set), x0, {"truck": truck}, n_w)

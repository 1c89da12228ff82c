"""Manufactured-solution verification and diagnostic norms.

The exact solution is a divergence-free no-slip velocity with a
sinusoidal time factor and a mean-zero pressure on the unit square. The
forcing is hand-coded from its analytic derivatives; the test suite
cross-checks every derivative against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import build_rectangle_mesh, build_staggered
from .solver import (
    BACKWARD_EULER,
    BDF2,
    ModelParams,
    PicardConfig,
    TransientResult,
    build_operators,
    run_transient,
)
from .spaces import (
    PRESSURE,
    FieldCoefficients,
    edge_tables,
    enhanced_degree,
    tri_tables,
)

TWO_PI = 2.0 * np.pi
# Mean of sin(x)cos(y) over the unit square, subtracted so the exact
# pressure integrates to zero.
_P_SHIFT = np.sin(1.0) * (np.cos(1.0) - 1.0)


def _g(x):
    return x * x * (1.0 - x) ** 2


def _gp(x):
    return 2.0 * x * (1.0 - x) * (1.0 - 2.0 * x)


def _gpp(x):
    return 2.0 - 12.0 * x + 12.0 * x * x


def _gppp(x):
    return 24.0 * x - 12.0


@dataclass(frozen=True)
class ManufacturedProblem:
    """Closed-form fields and the forcing they induce.

    The velocity starts from rest (a sin(2 pi t) factor), vanishes on the
    whole boundary and is exactly divergence free, so it exercises every
    term of the scheme without boundary-data plumbing.
    """

    params: ModelParams
    final_time: float = 0.1

    def velocity(self, pts, t):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        s = np.sin(TWO_PI * t)
        return np.column_stack(
            [
                np.pi * _g(x) * np.sin(TWO_PI * y) * s,
                -_gp(x) * np.sin(np.pi * y) ** 2 * s,
            ]
        )

    def pressure(self, pts, t):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        return (np.sin(x) * np.cos(y) + _P_SHIFT) * np.cos(TWO_PI * t)

    def velocity_gradient(self, pts, t):
        """(n, 2, 2) array with entry [i, j] = d u_i / d x_j."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        s = np.sin(TWO_PI * t)
        out = np.empty((len(pts), 2, 2))
        out[:, 0, 0] = np.pi * _gp(x) * np.sin(TWO_PI * y) * s
        out[:, 0, 1] = 2.0 * np.pi**2 * _g(x) * np.cos(TWO_PI * y) * s
        out[:, 1, 0] = -_gpp(x) * np.sin(np.pi * y) ** 2 * s
        out[:, 1, 1] = -np.pi * _gp(x) * np.sin(TWO_PI * y) * s
        return out

    def scaled_gradient(self, pts, t):
        return np.sqrt(self.params.epsilon) * self.velocity_gradient(pts, t)

    def forcing(self, pts, t):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        s = np.sin(TWO_PI * t)
        c = np.cos(TWO_PI * t)
        sy, wy = np.sin(TWO_PI * y), np.sin(np.pi * y) ** 2
        u1 = np.pi * _g(x) * sy * s
        u2 = -_gp(x) * wy * s
        speed = np.hypot(u1, u2)
        lap1 = np.pi * sy * s * (_gpp(x) - 4.0 * np.pi**2 * _g(x))
        lap2 = -(_gppp(x) * wy + 2.0 * np.pi**2 * _gp(x) * np.cos(TWO_PI * y)) * s
        eps, alpha, beta = self.params.epsilon, self.params.alpha, self.params.beta
        drag = alpha + beta * speed
        f1 = (
            TWO_PI * np.pi * _g(x) * sy * c
            - eps * lap1
            + drag * u1
            + np.cos(x) * np.cos(y) * c
        )
        f2 = (
            -TWO_PI * _gp(x) * wy * c
            - eps * lap2
            + drag * u2
            - np.sin(x) * np.sin(y) * c
        )
        return np.column_stack([f1, f2])


def error_l2(fc: FieldCoefficients, exact, t: float) -> float:
    """L2 distance between a discrete field and an exact field at time t.

    Uses the enhanced quadrature tier; the integrand is not polynomial.
    ``exact`` maps (points, t) to values shaped like the field's space.
    """
    space = fc.space
    ttab = tri_tables(space.mesh, space.k, enhanced_degree(space.k))
    nt, nq = ttab.w.shape
    vals = np.einsum("tcn,tnq->tcq", space.broken(fc.values), ttab.val)
    ex = np.asarray(exact(ttab.pts.reshape(-1, 2), t), dtype=float)
    if space.kind == PRESSURE:
        ex = ex.reshape(nt, 1, nq)
    else:
        ex = ex.reshape(nt, nq, -1).transpose(0, 2, 1)
    return float(np.sqrt(np.einsum("tcq,tq->", (vals - ex) ** 2, ttab.w)))


def observed_orders(errors, hs=None) -> np.ndarray:
    """Convergence order next to each error row; the first is nan.

    With ``hs`` omitted the rows are assumed to halve the mesh size, so
    the rate is log2 of consecutive error ratios.
    """
    e = np.asarray(errors, dtype=float)
    orders = np.full(e.shape, np.nan)
    if hs is None:
        ratio = np.full(len(e) - 1, 2.0)
    else:
        h = np.asarray(hs, dtype=float)
        ratio = h[:-1] / h[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        orders[1:] = np.log(e[:-1] / e[1:]) / np.log(ratio)
    return orders


def _edge_values(space, broken, etab, e, side):
    return broken[space.mesh.edge_tri[e, side]] @ etab.trace[e, side]


def z2_norm(fc: FieldCoefficients) -> float:
    """Broken W^{1,3}-style norm of a velocity field.

    Cubes the broken-gradient L3 norm, adds edge-jump L3 terms weighted
    by length^-2 (full jumps on primal edges, one-sided on the boundary,
    tangential jumps on dual edges) and takes the cube root.
    """
    space = fc.space
    mesh, k = space.mesh, space.k
    deg = enhanced_degree(k)
    ttab = tri_tables(mesh, k, deg)
    etab = edge_tables(mesh, k, deg)
    broken = space.broken(fc.values)
    gvals = np.einsum("tcn,tnqd->tcdq", broken, ttab.grad)
    total = float(np.einsum("tq,tq->", np.sum(gvals**2, axis=(1, 2)) ** 1.5, ttab.w))
    for e in mesh.primal_edges:
        jump = np.zeros((2, etab.w.shape[1]))
        for s in (0, 1) if mesh.edge_tri[e, 1] >= 0 else (0,):
            jump += mesh.edge_sign[e, s] * _edge_values(space, broken, etab, e, s)
        mag = np.hypot(jump[0], jump[1])
        total += float((mag**3) @ etab.w[e]) / mesh.edge_length[e] ** 2
    for e in mesh.dual_edges:
        tv = mesh.edge_tangent[e]
        jt = np.zeros(etab.w.shape[1])
        for s in (0, 1):
            jt += mesh.edge_sign[e, s] * (
                tv @ _edge_values(space, broken, etab, e, s)
            )
        total += float((np.abs(jt) ** 3) @ etab.w[e]) / mesh.edge_length[e] ** 2
    return total ** (1.0 / 3.0)


def pressure_seminorm(fc: FieldCoefficients) -> float:
    """Broken W^{1,3/2}-style seminorm of a pressure field.

    Integrates |grad q|^{3/2} per triangle plus length^{-1/2}-weighted
    dual-edge jump terms, raised to the power 2/3. Constants map to 0.
    """
    space = fc.space
    mesh, k = space.mesh, space.k
    deg = enhanced_degree(k)
    ttab = tri_tables(mesh, k, deg)
    etab = edge_tables(mesh, k, deg)
    broken = space.broken(fc.values)
    gvals = np.einsum("tcn,tnqd->tdq", broken, ttab.grad)
    total = float(np.einsum("tq,tq->", np.hypot(gvals[:, 0], gvals[:, 1]) ** 1.5, ttab.w))
    for e in mesh.dual_edges:
        jump = np.zeros(etab.w.shape[1])
        for s in (0, 1):
            jump += mesh.edge_sign[e, s] * _edge_values(space, broken, etab, e, s)[0]
        total += float((np.abs(jump) ** 1.5) @ etab.w[e]) / np.sqrt(
            mesh.edge_length[e]
        )
    return total ** (2.0 / 3.0)


@dataclass(frozen=True)
class StudyRow:
    """Errors of one mesh/step pair at the final time."""

    inv_h: int
    n_steps: int
    err_u: float
    err_L: float
    err_p: float


def default_steps(mesh_sizes, scheme: str) -> list[int]:
    """Step counts paired to mesh sizes: n^2 for the first-order scheme,
    n for the second-order one."""
    if scheme == BDF2:
        return [int(n) for n in mesh_sizes]
    return [int(n) ** 2 for n in mesh_sizes]


def run_manufactured(
    n: int,
    n_steps: int,
    params: ModelParams,
    scheme: str = BACKWARD_EULER,
    k: int = 1,
    final_time: float = 0.1,
    picard: PicardConfig = PicardConfig(),
    ops=None,
) -> tuple[StudyRow, TransientResult]:
    """Solve the manufactured problem on an n-by-n grid; return final
    errors and the full result. ``ops`` may carry prebuilt operators for
    the same n and k (parameter sweeps reuse them across runs)."""
    if ops is None:
        mesh = build_staggered(build_rectangle_mesh(n, n))
        ops = build_operators(mesh, k)
    prob = ManufacturedProblem(params, final_time)
    res = run_transient(
        ops,
        params,
        prob.forcing,
        dt=final_time / n_steps,
        n_steps=n_steps,
        scheme=scheme,
        picard=picard,
    )
    row = StudyRow(
        inv_h=n,
        n_steps=n_steps,
        err_u=error_l2(res.u, prob.velocity, final_time),
        err_L=error_l2(res.L, prob.scaled_gradient, final_time),
        err_p=error_l2(res.p, prob.pressure, final_time),
    )
    return row, res


def convergence_study(
    mesh_sizes,
    n_steps_list,
    params: ModelParams,
    scheme: str = BACKWARD_EULER,
    k: int = 1,
    final_time: float = 0.1,
) -> list[StudyRow]:
    """Run the manufactured problem over a refinement schedule."""
    if len(mesh_sizes) != len(n_steps_list):
        raise ValueError("mesh sizes and step counts must pair up")
    rows = []
    for n, steps in zip(mesh_sizes, n_steps_list):
        row, _ = run_manufactured(n, steps, params, scheme, k, final_time)
        rows.append(row)
    return rows

"""Operating-point analysis and reference selection.

Computes the closed-form equilibrium of the microgrid for given reference
voltages, selects (V_r, I_s) by the reference program (quadratic voltage
cost + current-sharing cost subject to the nonlinear power-balance
equality, reference box and VSC saturation band), and provides residual/
feasibility checks used by the verification stages.

The nonlinear equality couples V_r and I_s through the CPL current
``diag(V_r)^-1 P_L``; it is solved by successive convexification: the CPL
term is frozen at the previous iterate, the resulting convex QP is solved
and the voltage iterate is damped until the fixed point is reached, then
a Newton polish drives the equality residual to machine precision when no
reference-box constraint is active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleProblemError, NumericalFailureError
from .netmodel import MicrogridNetwork

__all__ = [
    "Equilibrium",
    "ReferenceProgramConfig",
    "SaturationReport",
    "conductance_matrix",
    "equilibrium_from_refs",
    "steady_state_inputs",
    "check_saturation_feasibility",
    "steady_state_residuals",
    "solve_reference_program",
]


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """Operating point: voltages, converter/line currents, VSC commands, sharing ratio."""

    V_E: np.ndarray
    I_tE: np.ndarray
    I_bar_E: np.ndarray
    u_E: np.ndarray
    I_s: float


@dataclass(frozen=True)
class ReferenceProgramConfig:
    """Inputs of the reference program.

    alpha_V and alpha_I are the normalizing cost coefficients on the
    voltage deviation and the sharing ratio; when alpha_I == 0 a tiny
    positive weight is substituted so the minimal-norm I_s is selected
    among ties.
    """

    V_bar_r: np.ndarray | float
    V_min: float
    V_max: float
    alpha_V: float = 1.0
    alpha_I: float = 1.0
    tol: float = 1e-9
    max_iters: int = 100
    damping: float = 0.5


@dataclass(frozen=True, eq=False)
class SaturationReport:
    """Per-DG saturation feasibility of an equilibrium command vector."""

    feasible: np.ndarray      # bool per DG
    margin: np.ndarray        # distance to nearest limit; negative = violation

    @property
    def all_feasible(self) -> bool:
        return bool(np.all(self.feasible))


def _load_vectors(net: MicrogridNetwork) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Y_L = np.array([load.Y_L for _, load in net.dgs])
    I_bar = np.array([load.I_bar for _, load in net.dgs])
    P_L = np.array([load.P_L for _, load in net.dgs])
    return Y_L, I_bar, P_L


def conductance_matrix(net: MicrogridNetwork) -> np.ndarray:
    """Network conductance G = B R^-1 B^T + diag(Y_L) seen from the PCCs."""
    B = net.incidence
    Y_L, _, _ = _load_vectors(net)
    if net.L:
        Rinv = np.diag([1.0 / line.R for line in net.lines])
        return B @ Rinv @ B.T + np.diag(Y_L)
    return np.diag(Y_L)


def equilibrium_from_refs(net: MicrogridNetwork, V_r, I_s: float = float("nan")) -> Equilibrium:
    """Closed-form equilibrium for reference voltages V_r.

    V_E = V_r, I_tE = G V_r + I_bar + diag(V_r)^-1 P_L,
    I_bar_E = R^-1 B^T V_r, u_E = V_r + R_t I_tE. The I_s slot is carried
    through for bookkeeping (equal to the solved sharing ratio when V_r
    comes out of the reference program).
    """
    V_r = np.broadcast_to(np.asarray(V_r, dtype=float), (net.N,)).copy()
    if np.any(V_r <= 0.0):
        raise ValueError("reference voltages must be positive")
    _, I_bar, P_L = _load_vectors(net)
    G = conductance_matrix(net)
    I_tE = G @ V_r + I_bar + P_L / V_r
    if net.L:
        Rinv = np.diag([1.0 / line.R for line in net.lines])
        I_bar_E = Rinv @ net.incidence.T @ V_r
    else:
        I_bar_E = np.zeros(0)
    R_t = np.array([dg.R_t for dg, _ in net.dgs])
    u_E = V_r + R_t * I_tE
    return Equilibrium(V_E=V_r, I_tE=I_tE, I_bar_E=I_bar_E, u_E=u_E, I_s=float(I_s))


def steady_state_inputs(net: MicrogridNetwork, V_r, I_s: float) -> np.ndarray:
    """Steady-state VSC commands u_S = V_r + R_t P_n 1 I_s (elementwise)."""
    V_r = np.broadcast_to(np.asarray(V_r, dtype=float), (net.N,))
    R_t = np.array([dg.R_t for dg, _ in net.dgs])
    P_n = np.array([dg.P_n for dg, _ in net.dgs])
    return V_r + R_t * P_n * I_s


def check_saturation_feasibility(u_E, limits: list[tuple[float, float]]) -> SaturationReport:
    """Margin of each equilibrium command to its VSC limits."""
    u_E = np.asarray(u_E, dtype=float)
    lo = np.array([l for l, _ in limits])
    hi = np.array([h for _, h in limits])
    margin = np.minimum(u_E - lo, hi - u_E)
    return SaturationReport(feasible=margin >= 0.0, margin=margin)


def steady_state_residuals(net: MicrogridNetwork, eq: Equilibrium, V_r=None) -> dict[str, float]:
    """Relative residuals of the steady-state equations at an equilibrium.

    Evaluates the voltage, current, integrator and line equations plus the
    current-sharing requirement I_tE = P_n 1 I_s; each residual is an
    infinity norm divided by (1 + signal scale).
    """
    V_r = eq.V_E if V_r is None else np.broadcast_to(np.asarray(V_r, dtype=float), (net.N,))
    Y_L, I_bar, P_L = _load_vectors(net)
    R_t = np.array([dg.R_t for dg, _ in net.dgs])
    P_n = np.array([dg.P_n for dg, _ in net.dgs])
    B = net.incidence
    flow = B @ eq.I_bar_E if net.L else np.zeros(net.N)
    r_V = -Y_L * eq.V_E + eq.I_tE - I_bar - P_L / eq.V_E - flow
    r_I = -eq.V_E - R_t * eq.I_tE + eq.u_E
    r_int = eq.V_E - V_r
    out = {
        "voltage": float(np.max(np.abs(r_V))) / (1.0 + float(np.max(np.abs(eq.I_tE)))),
        "current": float(np.max(np.abs(r_I))) / (1.0 + float(np.max(np.abs(eq.u_E)))),
        "integrator": float(np.max(np.abs(r_int))) / (1.0 + float(np.max(np.abs(V_r)))),
    }
    if net.L:
        R = np.array([line.R for line in net.lines])
        r_line = -R * eq.I_bar_E + B.T @ eq.V_E
        out["line"] = float(np.max(np.abs(r_line))) / (1.0 + float(np.max(np.abs(B.T @ eq.V_E))))
    else:
        out["line"] = 0.0
    if np.isfinite(eq.I_s):
        r_share = eq.I_tE - P_n * eq.I_s
        out["sharing"] = float(np.max(np.abs(r_share))) / (1.0 + float(np.max(np.abs(eq.I_tE))))
    return out


def _newton_voltage(G: np.ndarray, P_L: np.ndarray, rhs: np.ndarray, V0: np.ndarray,
                    tol: float = 1e-13, max_iters: int = 60) -> np.ndarray | None:
    """Solve G V + P_L / V = rhs by Newton, starting at V0 (None on failure)."""
    V = V0.copy()
    for _ in range(max_iters):
        if np.any(V <= 0.0):
            return None
        F = G @ V + P_L / V - rhs
        if float(np.max(np.abs(F))) < tol * (1.0 + float(np.max(np.abs(rhs)))):
            return V
        J = G - np.diag(P_L / V**2)
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return None
        V = V - step
    return None


def _diagnose_infeasibility(net: MicrogridNetwork, cfg: ReferenceProgramConfig) -> str:
    """Scan I_s in [0, 1] to name the constraint family blocking feasibility."""
    Y_L, I_bar, P_L = _load_vectors(net)
    G = conductance_matrix(net)
    P_n = np.array([dg.P_n for dg, _ in net.dgs])
    R_t = np.array([dg.R_t for dg, _ in net.dgs])
    lo = np.array([dg.sat_min for dg, _ in net.dgs])
    hi = np.array([dg.sat_max for dg, _ in net.dgs])
    mid = 0.5 * (cfg.V_min + cfg.V_max) * np.ones(net.N)
    worst = {"reference box": np.inf, "saturation band": np.inf, "power balance": np.inf}
    for I_s in np.linspace(0.0, 1.0, 201):
        V = _newton_voltage(G, P_L, P_n * I_s - I_bar, mid)
        if V is None:
            continue
        worst["power balance"] = 0.0
        box = max(float(np.max(cfg.V_min - V)), float(np.max(V - cfg.V_max)), 0.0)
        u = V + R_t * P_n * I_s
        band = max(float(np.max(lo - u)), float(np.max(u - hi)), 0.0)
        worst["reference box"] = min(worst["reference box"], box)
        worst["saturation band"] = min(worst["saturation band"], band)
        if box == 0.0 and band == 0.0:
            return "feasible point found during diagnosis; solver failure is numerical"
    family = min(worst, key=lambda k: worst[k])
    return f"no feasible (V_r, I_s): closest violation in '{family}' ({worst[family]:.4g})"


def solve_reference_program(net: MicrogridNetwork, cfg: ReferenceProgramConfig) -> tuple[np.ndarray, float]:
    """Select (V_r, I_s) minimizing alpha_V ||V_r - V_bar||^2 + alpha_I I_s.

    Subject to the reference box, I_s in [0, 1], the power-balance
    equality with CPL currents, and the saturation band on the
    steady-state commands. Raises :class:`InfeasibleProblemError` naming
    the blocking constraint family, or :class:`NumericalFailureError` when
    the fixed point does not converge within cfg.max_iters.
    """
    import cvxpy as cp

    if not (0 < cfg.V_min < cfg.V_max):
        raise ValueError("require 0 < V_min < V_max")
    n = net.N
    V_bar = np.broadcast_to(np.asarray(cfg.V_bar_r, dtype=float), (n,)).astype(float)
    Y_L, I_bar, P_L = _load_vectors(net)
    G = conductance_matrix(net)
    P_n = np.array([dg.P_n for dg, _ in net.dgs])
    R_t = np.array([dg.R_t for dg, _ in net.dgs])
    lo = np.array([dg.sat_min for dg, _ in net.dgs])
    hi = np.array([dg.sat_max for dg, _ in net.dgs])
    alpha_I = cfg.alpha_I if cfg.alpha_I > 0.0 else 1e-9

    V = cp.Variable(n)
    I_s = cp.Variable()
    cpl = cp.Parameter(n)
    constraints = [
        V >= cfg.V_min,
        V <= cfg.V_max,
        I_s >= 0.0,
        I_s <= 1.0,
        P_n * I_s - G @ V == I_bar + cpl,
        V + cp.multiply(R_t * P_n, I_s) >= lo,
        V + cp.multiply(R_t * P_n, I_s) <= hi,
    ]
    objective = cp.Minimize(cfg.alpha_V * cp.sum_squares(V - V_bar) + alpha_I * I_s)
    qp = cp.Problem(objective, constraints)

    V_k = np.clip(V_bar, cfg.V_min, cfg.V_max)
    solved = False
    for _ in range(cfg.max_iters):
        cpl.value = P_L / V_k
        try:
            qp.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
        except cp.SolverError as exc:
            raise NumericalFailureError(f"reference program QP failed: {exc}") from exc
        if qp.status in ("infeasible", "infeasible_inaccurate"):
            msg = _diagnose_infeasibility(net, cfg)
            raise InfeasibleProblemError(f"reference program infeasible: {msg}", violated=msg)
        if V.value is None:
            raise NumericalFailureError(f"reference program QP status {qp.status}")
        V_new = V_k + cfg.damping * (np.asarray(V.value) - V_k)
        step = float(np.max(np.abs(V_new - V_k)))
        V_k = V_new
        if step <= cfg.tol:
            solved = True
            break
    if not solved:
        raise NumericalFailureError(
            f"reference program fixed point did not converge in {cfg.max_iters} iterations"
        )
    I_s_opt = float(I_s.value)

    # Newton polish of the equality (holding I_s) when the box is inactive;
    # the QP landed inside the basin so this only sharpens the residual.
    gap = min(float(np.min(V_k - cfg.V_min)), float(np.min(cfg.V_max - V_k)))
    if gap > 1e-6:
        V_pol = _newton_voltage(G, P_L, P_n * I_s_opt - I_bar, V_k)
        if V_pol is not None and np.all(V_pol > cfg.V_min) and np.all(V_pol < cfg.V_max):
            V_k = V_pol
    return V_k, I_s_opt

"""Physical model of an islanded DC microgrid.

Holds the per-unit parameter sets (generators, ZIP loads, RL lines), the
signed incidence matrix of the physical graph, the static nonlinearities
(constant-power-load current, VSC dead-zone) and the dense state-space /
coupling matrix builders used by every downstream stage.

All containers are frozen dataclasses and every operation is a pure
function of its arguments, so instances can be shared freely across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkError",
    "VoltageFloorError",
    "DGParams",
    "ZipLoad",
    "LineParams",
    "MicrogridNetwork",
    "DGState",
    "StateSpaceSet",
    "build_network",
    "dg_matrices",
    "line_matrices",
    "coupling_matrices",
    "state_space_set",
    "zip_current",
    "deadzone",
    "saturate",
    "cpl_error_nonlinearity",
]


class NetworkError(ValueError):
    """Raised for ill-formed network descriptions (self loops, disconnection, bad indices)."""


class VoltageFloorError(ArithmeticError):
    """Raised when a CPL current is evaluated at or below the voltage floor."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class DGParams:
    """Converter-side parameters of one distributed generator.

    R_t, L_t, C_t are the internal resistance (Ohm), inductance (H) and
    filter capacitance (F); P_n is the power rating used for proportional
    current sharing; sat_min/sat_max are the VSC command limits (V) and
    K_aw is the anti-windup gain on the voltage-tracking integrator.
    """

    R_t: float
    L_t: float
    C_t: float
    P_n: float
    sat_min: float
    sat_max: float
    K_aw: float

    def __post_init__(self) -> None:
        for name in ("R_t", "L_t", "C_t", "P_n", "K_aw"):
            _require(getattr(self, name) > 0.0, f"DGParams.{name} must be > 0")
        _require(self.sat_min < self.sat_max, "DGParams requires sat_min < sat_max")


@dataclass(frozen=True)
class ZipLoad:
    """ZIP load: conductance Y_L (S), constant current I_bar (A), constant power P_L (W)."""

    Y_L: float = 0.0
    I_bar: float = 0.0
    P_L: float = 0.0

    def __post_init__(self) -> None:
        for name in ("Y_L", "I_bar", "P_L"):
            _require(getattr(self, name) >= 0.0, f"ZipLoad.{name} must be >= 0")


@dataclass(frozen=True)
class LineParams:
    """RL transmission line: series resistance R (Ohm) and inductance L (H)."""

    R: float
    L: float

    def __post_init__(self) -> None:
        _require(self.R > 0.0, "LineParams.R must be > 0")
        _require(self.L > 0.0, "LineParams.L must be > 0")


@dataclass(frozen=True)
class DGState:
    """Per-DG state sample: PCC voltage V, converter current I_t, integrator v."""

    V: float
    I_t: float
    v: float


@dataclass(frozen=True, eq=False)
class MicrogridNetwork:
    """Full plant description: N generator/load pairs, L lines, signed incidence B.

    Column l of ``incidence`` carries exactly one +1 (tail DG) and one -1
    (head DG); the sign convention follows the edge order in the user
    config. Results downstream are orientation-invariant up to the sign
    of the corresponding line current.
    """

    dgs: tuple[tuple[DGParams, ZipLoad], ...]
    lines: tuple[LineParams, ...]
    incidence: np.ndarray

    @property
    def N(self) -> int:
        return len(self.dgs)

    @property
    def L(self) -> int:
        return len(self.lines)

    def dg(self, i: int) -> DGParams:
        return self.dgs[i][0]

    def load(self, i: int) -> ZipLoad:
        return self.dgs[i][1]


def build_network(
    dg_specs: list[tuple[DGParams, ZipLoad]],
    line_specs: list[LineParams],
    edge_list: list[tuple[int, int]],
) -> MicrogridNetwork:
    """Assemble a microgrid from parameter lists and an ordered edge list.

    ``edge_list[l] = (i_plus, i_minus)`` marks line l as leaving DG
    ``i_plus`` (+1 in column l) and entering DG ``i_minus`` (-1).
    Raises :class:`NetworkError` on self loops, out-of-range DG indices,
    a line-count mismatch, or a disconnected physical graph.
    """
    n, m = len(dg_specs), len(line_specs)
    if n == 0:
        raise NetworkError("at least one DG is required")
    if len(edge_list) != m:
        raise NetworkError(f"{m} lines declared but {len(edge_list)} edges given")
    B = np.zeros((n, m))
    for l, (ip, im) in enumerate(edge_list):
        if not (0 <= ip < n and 0 <= im < n):
            raise NetworkError(f"edge {l}: DG index out of range (N={n})")
        if ip == im:
            raise NetworkError(f"edge {l}: self loop at DG {ip}")
        B[ip, l] = 1.0
        B[im, l] = -1.0
    if not _is_connected(n, edge_list):
        raise NetworkError("physical graph is not connected")
    B.flags.writeable = False
    return MicrogridNetwork(dgs=tuple(dg_specs), lines=tuple(line_specs), incidence=B)


def _is_connected(n: int, edges: list[tuple[int, int]]) -> bool:
    if n == 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


def dg_matrices(dg: DGParams, load: ZipLoad) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """State-space matrices (A, B, B_aw, E) of one DG in state order (V, I_t, v)."""
    A = np.array(
        [
            [-load.Y_L / dg.C_t, 1.0 / dg.C_t, 0.0],
            [-1.0 / dg.L_t, -dg.R_t / dg.L_t, 0.0],
            [1.0, 0.0, 0.0],
        ]
    )
    B = np.array([[0.0], [1.0 / dg.L_t], [0.0]])
    B_aw = np.array([[0.0], [1.0 / dg.L_t], [-dg.K_aw]])
    E = np.diag([1.0 / dg.C_t, 1.0 / dg.L_t, 1.0])
    return A, B, B_aw, E


def line_matrices(line: LineParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scalar state-space matrices (A_bar, B_bar, E_bar) of one RL line."""
    A_bar = np.array([[-line.R / line.L]])
    B_bar = np.array([[1.0 / line.L]])
    E_bar = np.array([[1.0 / line.L]])
    return A_bar, B_bar, E_bar


def coupling_matrices(net: MicrogridNetwork) -> tuple[np.ndarray, np.ndarray]:
    """DG-line coupling blocks (C_bar, C).

    C_bar is 3N x L with block (i, l) = -[B_il, 0, 0]^T / C_ti (line current
    into the voltage channel); C is L x 3N with block (l, i) = [B_il, 0, 0]
    (DG voltage into the line input). The exact identity
    ``C = -C_bar^T @ diag(C_ti * I_3)`` holds by construction.
    """
    n, m = net.N, net.L
    C_bar = np.zeros((3 * n, m))
    C = np.zeros((m, 3 * n))
    for i in range(n):
        c_t = net.dg(i).C_t
        for l in range(m):
            b = net.incidence[i, l]
            if b != 0.0:
                C_bar[3 * i, l] = -b / c_t
                C[l, 3 * i] = b
    return C_bar, C


@dataclass(frozen=True, eq=False)
class StateSpaceSet:
    """Dense state-space data of the whole plant.

    Per-DG triples live in ``A[i]``, ``B[i]``, ``B_aw[i]``, ``E[i]``; lines
    in ``A_bar[l]``, ``B_bar[l]``, ``E_bar[l]``; the coupling blocks satisfy
    ``C = -C_bar^T @ diag(C_ti * I_3)`` exactly.
    """

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    B_aw: tuple[np.ndarray, ...]
    E: tuple[np.ndarray, ...]
    A_bar: tuple[np.ndarray, ...]
    B_bar: tuple[np.ndarray, ...]
    E_bar: tuple[np.ndarray, ...]
    C_bar: np.ndarray
    C: np.ndarray


def state_space_set(net: MicrogridNetwork) -> StateSpaceSet:
    """Build every state-space and coupling matrix of the plant in one pass."""
    dg_mats = [dg_matrices(dg, load) for dg, load in net.dgs]
    line_mats = [line_matrices(line) for line in net.lines]
    C_bar, C = coupling_matrices(net)
    return StateSpaceSet(
        A=tuple(m[0] for m in dg_mats),
        B=tuple(m[1] for m in dg_mats),
        B_aw=tuple(m[2] for m in dg_mats),
        E=tuple(m[3] for m in dg_mats),
        A_bar=tuple(m[0] for m in line_mats),
        B_bar=tuple(m[1] for m in line_mats),
        E_bar=tuple(m[2] for m in line_mats),
        C_bar=C_bar,
        C=C,
    )


def zip_current(V: float, load: ZipLoad, v_floor: float = 0.0) -> float:
    """Total ZIP load current Y_L*V + I_bar + P_L/V drawn at PCC voltage V.

    The CPL term is singular at V = 0; evaluation at V <= max(v_floor, 0)
    raises :class:`VoltageFloorError` instead of returning a huge number
    (the sector bound only holds on the configured voltage window).
    """
    if V <= 0.0 or (load.P_L > 0.0 and V <= v_floor):
        raise VoltageFloorError(f"ZIP current evaluated at V={V} (floor {v_floor})")
    return load.Y_L * V + load.I_bar + load.P_L / V


def deadzone(u, limits: tuple[float, float]):
    """Dead-zone excess phi(u) = sat(u) - u for scalar or array commands.

    Zero inside [min, max], (max - u) above, (min - u) below; satisfies
    sat(u) = u + phi(u) and the sector bound phi*(phi + u) <= 0.
    """
    lo, hi = limits
    u = np.asarray(u, dtype=float)
    phi = np.clip(u, lo, hi) - u
    return phi if phi.ndim else float(phi)


def saturate(u, limits: tuple[float, float]):
    """sat(u) = u + deadzone(u); hard clip to the VSC command limits."""
    lo, hi = limits
    u = np.asarray(u, dtype=float)
    s = np.clip(u, lo, hi)
    return s if s.ndim else float(s)


def cpl_error_nonlinearity(V_err, V_r: float, P_L: float, C_t: float):
    """CPL nonlinearity g(V_err) = (P_L/C_t) * (1/V_r - 1/(V_err + V_r)).

    This is the voltage-channel term of the error dynamics; g(0) = 0 and g
    is monotone increasing on (-V_r, inf). Requires V_err + V_r > 0.
    """
    V_err = np.asarray(V_err, dtype=float)
    if np.any(V_err + V_r <= 0.0):
        raise VoltageFloorError("CPL error nonlinearity evaluated at V <= 0")
    g = (P_L / C_t) * (1.0 / V_r - 1.0 / (V_err + V_r))
    return g if g.ndim else float(g)

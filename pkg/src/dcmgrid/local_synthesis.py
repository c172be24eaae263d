"""Per-DG controller synthesis and subsystem passivity analysis.

Covers the CPL sector bounds, the dead-zone sector check, the analytic
line passivity indices with their LMI certificate, the single-DG
synthesis LMI (PI gain + anti-windup channel under both sector-bounded
nonlinearities), the unified joint design that adds the per-line analysis
and the global-feasibility necessary conditions, and the trajectory-level
dissipation check.

Sector bookkeeping: :func:`cpl_sector` returns the slopes of the
current-domain nonlinearity ``C_t * g`` (alpha = P_L/V_max^2,
beta = P_L/V_min^2, both in siemens). The voltage-channel term g of the
error dynamics carries an extra 1/C_t, so the synthesis LMIs divide both
slopes by C_t before forming the multiplier; certificates and trajectory
checks stay consistent with the simulated dynamics either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lmi
from .errors import InfeasibleProblemError
from .netmodel import LineParams, MicrogridNetwork, dg_matrices

__all__ = [
    "SectorBounds",
    "PassivityIndices",
    "LinePassivity",
    "DGLocalDesign",
    "LocalDesign",
    "LocalSynthesisOptions",
    "DissipationReport",
    "cpl_sector",
    "sector_quadratic_form",
    "saturation_sector_form",
    "saturation_sector_check",
    "line_passivity",
    "untransformed_sprocedure_matrix",
    "synthesize_local_single",
    "synthesize_local",
    "necessary_condition_matrix",
    "necessary_conditions_feasible",
    "verify_ifofp_on_trajectory",
]

E1 = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class SectorBounds:
    """Slopes [alpha, beta] bounding the CPL current nonlinearity on a voltage window."""

    alpha: float
    beta: float
    V_min: float
    V_max: float


@dataclass(frozen=True)
class PassivityIndices:
    """IF-OFP indices of one DG error subsystem (nu < 0, rho > 0)."""

    nu: float
    rho: float


@dataclass(frozen=True)
class LinePassivity:
    """Line passivity indices with the storage value certifying them."""

    nu_bar: float
    rho_bar: float
    P_bar: float


@dataclass(eq=False)
class DGLocalDesign:
    """Synthesized local design of one DG."""

    K0: np.ndarray                # [k_P, 0, k_I]
    P_tilde: np.ndarray           # transformed storage (3x3, > 0)
    P: np.ndarray                 # storage P = inv(P_tilde)
    nu: float
    rho: float
    rho_tilde: float
    sigma: float
    delta_tilde: float
    delta_bar: float              # sqrt(delta_tilde / sigma); nan when undefined
    mu: float
    lam: float                    # CPL multiplier 1/(alpha_g * beta_g); 0 when no CPL
    sector: SectorBounds
    gamma_tilde: float = float("nan")
    deviations: list[str] = field(default_factory=list)


@dataclass(eq=False)
class LocalDesign:
    """Joint local design: per-DG gains/indices plus per-line indices."""

    dgs: list[DGLocalDesign]
    lines: list[LinePassivity]
    p: np.ndarray
    p_bar: np.ndarray
    window: tuple[float, float]
    mu: np.ndarray
    gamma_bar: float
    xi: dict[tuple[int, int], float] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class LocalSynthesisOptions:
    """Numerical knobs of the local synthesis LMIs."""

    psd_margin: float = 1e-6       # shift for the synthesis blocks (strictness)
    nu_max: float = -1e-3          # upper bound keeping -nu bounded away from 0
    nu_min: float = -1e3
    rho_tilde_min: float = 1e-6
    rho_tilde_max: float = 1e6
    delta_bar_cap: float = 100.0   # bounds delta_tilde <= cap^2 * sigma
    mu_ladder: tuple[float, ...] = (0.1, 1.0, 10.0)
    gain_zero_tol: float = 1e-9
    solver: lmi.SolveOptions = field(default_factory=lmi.SolveOptions)


def cpl_sector(P_L: float, V_min: float, V_max: float) -> SectorBounds:
    """Sector slopes alpha = P_L/V_max^2, beta = P_L/V_min^2 of the CPL current.

    Valid on PCC voltages in [V_min, V_max] with the reference inside the
    same window. Both slopes vanish iff P_L = 0.
    """
    if not (0.0 < V_min < V_max):
        raise ValueError("require 0 < V_min < V_max")
    if P_L < 0.0:
        raise ValueError("P_L must be >= 0")
    return SectorBounds(alpha=P_L / V_max**2, beta=P_L / V_min**2, V_min=V_min, V_max=V_max)


def sector_quadratic_form(sector: SectorBounds, V_err, g_current):
    """Quadratic sector form -a*b*Ve^2 + (a+b)*Ve*g - g^2 (>= 0 inside the sector).

    ``g_current`` is the current-domain nonlinearity C_t * g(V_err).
    """
    V_err = np.asarray(V_err, dtype=float)
    g = np.asarray(g_current, dtype=float)
    a, b = sector.alpha, sector.beta
    out = -a * b * V_err**2 + (a + b) * V_err * g - g**2
    return out if out.ndim else float(out)


def saturation_sector_form(u, phi):
    """Dead-zone sector form -u*phi - phi^2, nonnegative for phi = deadzone(u)."""
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = -u * phi - phi**2
    return out if out.ndim else float(out)


def saturation_sector_check(u_samples, limits) -> bool:
    """True when the dead-zone sector form is >= 0 for every sampled command."""
    from .netmodel import deadzone

    u = np.asarray(u_samples, dtype=float)
    phi = deadzone(u, limits)
    return bool(np.min(saturation_sector_form(u, phi)) >= 0.0)


def line_passivity(
    line: LineParams,
    rel_gap: float = 1e-4,
    opts: lmi.SolveOptions | None = None,
    certify: bool = True,
) -> tuple[LinePassivity, dict[str, bool]]:
    """Analytic maximal passivity indices of an RL line plus an LMI certificate.

    Returns (nu_bar, rho_bar, P_bar) = (0, R, L/2) and, when ``certify``,
    a dict confirming the dissipativity LMI is feasible at
    rho = R*(1 - rel_gap) and infeasible at rho = R*(1 + rel_gap).
    """
    result = LinePassivity(nu_bar=0.0, rho_bar=line.R, P_bar=line.L / 2.0)
    cert: dict[str, bool] = {}
    if certify:
        A = [[-line.R / line.L]]
        B = [[1.0 / line.L]]
        C = [[1.0]]
        D = [[0.0]]
        lo, _ = lmi.check_lti_dissipativity(A, B, C, D, lmi.ifofp_supply(0.0, line.R * (1.0 - rel_gap)), opts)
        hi, _ = lmi.check_lti_dissipativity(A, B, C, D, lmi.ifofp_supply(0.0, line.R * (1.0 + rel_gap)), opts)
        cert = {"feasible_below": lo, "infeasible_above": not hi}
    return result, cert


# ---------------------------------------------------------------------------
# synthesis LMI fragment (shared by the single-DG and the joint problems)
# ---------------------------------------------------------------------------


def _g_sector(sector: SectorBounds, C_t: float) -> tuple[float, float]:
    """Rescale the current-domain slopes to the voltage-channel g term."""
    return sector.alpha / C_t, sector.beta / C_t


def _dg_fragment(
    prob: lmi.SdpProblem,
    tag: str,
    A: np.ndarray,
    B: np.ndarray,
    B_aw: np.ndarray,
    sector: SectorBounds,
    C_t: float,
    mu: float,
    opts: LocalSynthesisOptions,
    block_diag_P: bool = False,
) -> dict[str, str]:
    """Register one DG's variables and constraints; returns the variable names.

    The CPL row is dropped when the sector is degenerate (P_L = 0); the
    multiplier is then vacuous. The gain variable is parameterized as
    [k1, 0, k3] so the transformed gain carries the structural zero.
    """
    has_cpl = sector.alpha > 0.0 and sector.beta > 0.0
    names = {
        "Kt": f"Kt_{tag}",
        "Pt": f"Pt_{tag}",
        "sigma": f"sigma_{tag}",
        "deltat": f"deltat_{tag}",
        "nu": f"nu_{tag}",
        "rhot": f"rhot_{tag}",
    }
    prob.add_rect(names["Kt"], 1, 3, mask=[[True, False, True]])
    prob.add_symmetric(names["Pt"], 3)
    prob.add_scalar(names["sigma"], lb=0.0)
    prob.add_scalar(names["deltat"], lb=0.0)
    prob.add_scalar(names["nu"], lb=opts.nu_min, ub=opts.nu_max)
    prob.add_scalar(names["rhot"], lb=opts.rho_tilde_min, ub=opts.rho_tilde_max)

    # keep the recovered tolerable bound finite: delta_tilde <= cap^2 * sigma
    prob.add_ineq({names["deltat"]: 1.0, names["sigma"]: -opts.delta_bar_cap**2},
                  rhs=0.0, label=f"delta_cap_{tag}")
    if block_diag_P:
        # sym 3x3 basis order: (0,0),(0,1),(0,2),(1,1),(1,2),(2,2)
        prob.add_eq({(names["Pt"], 1): 1.0}, 0.0, label=f"Pt01_{tag}")
        prob.add_eq({(names["Pt"], 4): 1.0}, 0.0, label=f"Pt12_{tag}")

    dims = [3, 3] + ([1] if has_cpl else []) + [1, 1, 1, 3]
    g_row = 2 if has_cpl else None
    phi_row = 3 if has_cpl else 2
    sig_row, del_row, lift_row = phi_row + 1, phi_row + 2, phi_row + 3

    ex = prob.expr(dims, label=f"synth_{tag}")
    I3 = np.eye(3)
    e1 = E1.reshape(3, 1)

    ex.diag_term(0, names["nu"], coeff=-1.0)
    ex.term(0, 1, names["Pt"], coeff=0.5)
    ex.const_block(0, 1, -I3)

    ex.herm_term(1, names["Pt"], left=-A)
    ex.herm_term(1, names["Kt"], left=-B)
    if has_cpl:
        a_g, b_g = _g_sector(sector, C_t)
        ex.herm_term(1, names["Pt"], right=e1 @ e1.T)
        ex.const_block(1, 1, -I3)
        ex.const_block(1, g_row, -e1)
        ex.term(1, g_row, names["Pt"], right=e1, coeff=-(a_g + b_g) / (2.0 * a_g * b_g))
        ex.const_block(g_row, g_row, [[1.0 / (a_g * b_g)]])

    ex.const_block(1, phi_row, -B_aw.reshape(3, 1))
    ex.term(1, phi_row, names["Kt"], transpose=True, coeff=mu / 2.0)
    ex.const_block(phi_row, phi_row, [[mu]])
    ex.const_block(phi_row, sig_row, [[-mu / 2.0]])
    ex.diag_term(sig_row, names["sigma"])
    ex.diag_term(del_row, names["deltat"])

    ex.term(1, lift_row, names["Pt"])
    ex.diag_term(lift_row, names["rhot"], I3)
    prob.add_psd(ex, shift=opts.psd_margin)

    pos = prob.expr([3], label=f"Ppos_{tag}")
    pos.herm_term(0, names["Pt"], coeff=0.5)
    prob.add_psd(pos, shift=1e-6)
    return names


def _recover_dg(values: dict, names: dict[str, str], sector: SectorBounds, C_t: float,
                mu: float, opts: LocalSynthesisOptions) -> DGLocalDesign:
    P_tilde = np.asarray(values[names["Pt"]])
    K_tilde = np.asarray(values[names["Kt"]]).reshape(1, 3)
    P = np.linalg.inv(P_tilde)
    K0 = (K_tilde @ P).ravel()
    sigma = float(values[names["sigma"]])
    delta_tilde = float(values[names["deltat"]])
    rho_tilde = float(values[names["rhot"]])
    nu = float(values[names["nu"]])
    delta_bar = math.sqrt(delta_tilde / sigma) if sigma > 0.0 else float("nan")
    a_g, b_g = _g_sector(sector, C_t)
    lam = 1.0 / (a_g * b_g) if a_g > 0.0 else 0.0
    return DGLocalDesign(
        K0=K0, P_tilde=P_tilde, P=P, nu=nu, rho=1.0 / rho_tilde, rho_tilde=rho_tilde,
        sigma=sigma, delta_tilde=delta_tilde, delta_bar=delta_bar, mu=mu, lam=lam,
        sector=sector,
    )


def _enforce_gain_zero(design: DGLocalDesign, resolve, opts: LocalSynthesisOptions) -> DGLocalDesign:
    """Snap the structural zero of K0; re-solve with block-diagonal P if needed."""
    scale = 1.0 + float(np.max(np.abs(design.K0)))
    if abs(design.K0[1]) > opts.gain_zero_tol * scale:
        design = resolve()
        design.deviations.append(
            "recovered gain middle entry exceeded tolerance; re-solved with "
            "block-diagonalized storage coupling"
        )
    design.K0[1] = 0.0
    return design


def synthesize_local_single(
    dg_params,
    load,
    sector: SectorBounds,
    mu: float = 1.0,
    opts: LocalSynthesisOptions | None = None,
) -> DGLocalDesign:
    """Synthesize one DG's PI gain and passivity indices via the local LMI.

    Tries the given mu first, then the log-spaced retry ladder on
    infeasibility. Raises :class:`InfeasibleProblemError` if every
    multiplier fails.
    """
    opts = opts or LocalSynthesisOptions()
    A, B, B_aw, _ = dg_matrices(dg_params, load)
    tried = []
    ladder = [mu] + [m for m in opts.mu_ladder if m != mu]
    last_status = ""
    for mu_k in ladder:
        def attempt(block_diag_P: bool = False, mu_k=mu_k) -> DGLocalDesign | None:
            prob = lmi.SdpProblem()
            names = _dg_fragment(prob, "0", A, B, B_aw, sector, dg_params.C_t, mu_k, opts,
                                 block_diag_P=block_diag_P)
            report = lmi.solve(prob, opts.solver)
            if not report.ok:
                return None
            return _recover_dg(report.values, names, sector, dg_params.C_t, mu_k, opts)

        design = attempt()
        if design is not None:
            return _enforce_gain_zero(
                design, lambda: attempt(block_diag_P=True) or design, opts
            )
        tried.append(mu_k)
        last_status = "infeasible or numerical failure"
    raise InfeasibleProblemError(
        f"local synthesis LMI infeasible for mu in {tried} ({last_status})",
        violated="local synthesis LMI",
    )


# ---------------------------------------------------------------------------
# untransformed S-procedure matrix (round-trip oracle)
# ---------------------------------------------------------------------------


def untransformed_sprocedure_matrix(
    A: np.ndarray,
    B: np.ndarray,
    B_aw: np.ndarray,
    design: DGLocalDesign,
    C_t: float,
) -> np.ndarray:
    """Pre-transform S-procedure matrix rebuilt from the recovered variables.

    Assembles the supply/storage form and the three multiplier-weighted
    sector pieces directly in the untransformed variables (P, K0, rho,
    sigma, delta_bar^2), in block order (eta, x, g, phi, u_G, 1) with the
    CPL row dropped when the sector is degenerate. A solved transformed
    LMI maps onto this matrix being PSD.
    """
    has_cpl = design.lam > 0.0
    P = design.P
    K0 = design.K0.reshape(1, 3)
    Ahat = A + B @ K0
    dims = [3, 3] + ([1] if has_cpl else []) + [1, 1, 1]
    n = sum(dims)
    off = np.concatenate([[0], np.cumsum(dims)]).astype(int)

    def blk(r, c):
        return slice(off[r], off[r + 1]), slice(off[c], off[c + 1])

    M = np.zeros((n, n))

    def put(r, c, val):
        sr, sc = blk(r, c)
        M[sr, sc] += np.atleast_2d(val)
        if r != c:
            M[sc, sr] += np.atleast_2d(val).T

    g_row = 2 if has_cpl else None
    phi_row = 3 if has_cpl else 2
    ug_row, one_row = phi_row + 1, phi_row + 2
    I3 = np.eye(3)
    e1 = E1.reshape(3, 1)

    # -Pi: supply rate minus storage derivative
    put(0, 0, -design.nu * I3)
    put(0, 1, 0.5 * I3 - P)
    put(1, 1, -design.rho * I3 - (P @ Ahat + Ahat.T @ P))
    put(1, phi_row, -P @ B_aw.reshape(3, 1) + (design.mu / 2.0) * K0.T)

    # -mu * Gamma_phi (dead-zone sector with the command error K0 x + u_G)
    put(phi_row, phi_row, design.mu)
    put(phi_row, ug_row, -design.mu / 2.0)

    # -sigma * Gamma_delta (bounded distributed contribution)
    put(ug_row, ug_row, design.sigma)
    put(one_row, one_row, design.sigma * (design.delta_bar**2 if design.sigma > 0 else 0.0))

    if has_cpl:
        # -lam * Gamma_g with lam * alpha_g * beta_g = 1
        a_g, b_g = _g_sector(design.sector, C_t)
        put(1, 1, e1 @ e1.T)
        put(1, g_row, -P @ e1 - ((a_g + b_g) / (2.0 * a_g * b_g)) * e1)
        put(g_row, g_row, design.lam)
    return M


# ---------------------------------------------------------------------------
# joint local design (DGs + lines + necessary conditions)
# ---------------------------------------------------------------------------


def _line_fragment(prob: lmi.SdpProblem, tag: str, line: LineParams,
                   opts: LocalSynthesisOptions) -> dict[str, str]:
    """Line dissipativity LMI with the storage scaled as P_bar = L * P_bar'."""
    names = {"Pbar": f"Pbar_{tag}", "nubar": f"nubar_{tag}", "rhobar": f"rhobar_{tag}"}
    prob.add_scalar(names["Pbar"], lb=1e-9)
    prob.add_scalar(names["nubar"], lb=opts.nu_min, ub=opts.nu_max)
    prob.add_scalar(names["rhobar"], lb=1e-9)
    ex = prob.expr([1, 1], label=f"line_{tag}")
    ex.diag_term(0, names["Pbar"], coeff=2.0 * line.R)
    ex.diag_term(0, names["rhobar"], coeff=-1.0)
    ex.term(0, 1, names["Pbar"], coeff=-1.0)
    ex.const_block(0, 1, [[0.5]])
    ex.diag_term(1, names["nubar"], coeff=-1.0)
    prob.add_psd(ex)
    return names


def _necessary_fragment(
    prob: lmi.SdpProblem,
    dg_names: dict[str, str],
    line_names: dict[str, str],
    tag: str,
    b_il: float,
    C_t: float,
    p_i: float,
    p_l: float,
    gamma_name: str,
    opts: LocalSynthesisOptions,
) -> None:
    """Transformed necessary-condition block plus the bilinear lift for one (i, l)."""
    cbar = -b_il / C_t
    c = b_il
    xi = prob.add_scalar(f"xi_{tag}")
    s1 = prob.add_scalar(f"s1_{tag}", lb=0.0)
    s2 = prob.add_scalar(f"s2_{tag}", lb=0.0)
    nu, rhot = dg_names["nu"], dg_names["rhot"]
    nubar, rhobar = line_names["nubar"], line_names["rhobar"]

    ex = prob.expr([1] * 6, label=f"necc_{tag}")
    ex.diag_term(0, nu, coeff=-p_i)
    ex.term(0, 4, nu, coeff=-p_i * cbar)
    ex.term(0, 5, nu, coeff=-p_i)
    ex.diag_term(1, nubar, coeff=-p_l)
    ex.term(1, 3, xi, coeff=-p_l * c)
    ex.term(1, 5, nubar, coeff=-p_l)
    ex.const_block(2, 2, [[1.0]])
    ex.term(2, 3, rhot)
    ex.const_block(2, 4, [[1.0]])
    ex.diag_term(3, rhot, coeff=p_i)
    ex.term(3, 4, rhot, coeff=-0.5 * (p_i * cbar + c * p_l))
    ex.term(3, 5, rhot, coeff=-0.5 * p_i)
    ex.diag_term(4, rhobar, coeff=p_l)
    ex.const_block(4, 5, [[-0.5 * p_l]])
    ex.diag_term(5, gamma_name)
    prob.add_psd(ex, shift=opts.psd_margin)

    lift = prob.expr([1, 1, 1], label=f"xilift_{tag}")
    lift.const_block(0, 0, [[1.0]])
    lift.term(0, 1, nubar)
    lift.term(0, 2, rhot)
    lift.diag_term(1, s1)
    lift.term(1, 2, xi)
    lift.diag_term(2, s2)
    prob.add_psd(lift)


def synthesize_local(
    net: MicrogridNetwork,
    window: tuple[float, float],
    mu=1.0,
    p=1.0,
    p_bar=1.0,
    alpha_gamma: float = 1.0,
    gamma_bar: float = 100.0,
    opts: LocalSynthesisOptions | None = None,
) -> LocalDesign:
    """Unified local design: per-DG synthesis + line analysis + necessary conditions.

    Solves one joint SDP minimizing the summed local L2-gain surrogates.
    With no lines the problem is block-separable and reduces exactly to
    independent single-DG syntheses (solved as such). On infeasibility the
    constraint families are re-tried incrementally (DG-only, +lines,
    +necessary conditions) to name the first failing family.
    """
    opts = opts or LocalSynthesisOptions()
    V_min, V_max = window
    n, m = net.N, net.L
    mu_v = np.broadcast_to(np.asarray(mu, dtype=float), (n,)).copy()
    p_v = np.broadcast_to(np.asarray(p, dtype=float), (n,)).copy()
    pb_v = np.broadcast_to(np.asarray(p_bar, dtype=float), (max(m, 1),)).copy()[:m]
    sectors = [cpl_sector(load.P_L, V_min, V_max) for _, load in net.dgs]

    if m == 0:
        dgs = [
            synthesize_local_single(net.dg(i), net.load(i), sectors[i], mu_v[i], opts)
            for i in range(n)
        ]
        for d in dgs:
            d.gamma_tilde = 0.0
        return LocalDesign(dgs=dgs, lines=[], p=p_v, p_bar=pb_v, window=window,
                           mu=mu_v, gamma_bar=gamma_bar,
                           diagnostics=["no lines: joint design separates into per-DG problems"])

    def build(include_lines: bool, include_necessary: bool, block_diag_P: bool = False):
        prob = lmi.SdpProblem()
        dg_names = []
        for i in range(n):
            A, B, B_aw, _ = dg_matrices(net.dg(i), net.load(i))
            dg_names.append(
                _dg_fragment(prob, str(i), A, B, B_aw, sectors[i], net.dg(i).C_t,
                             mu_v[i], opts, block_diag_P=block_diag_P)
            )
        gammas = [prob.add_scalar(f"gammat_{i}", lb=0.0, ub=gamma_bar) for i in range(n)]
        line_names = []
        if include_lines:
            for l in range(m):
                line_names.append(_line_fragment(prob, str(l), net.lines[l], opts))
        if include_necessary:
            for i in range(n):
                for l in range(m):
                    b_il = net.incidence[i, l]
                    if b_il != 0.0:
                        _necessary_fragment(prob, dg_names[i], line_names[l], f"{i}_{l}",
                                            b_il, net.dg(i).C_t, p_v[i], pb_v[l],
                                            gammas[i], opts)
        prob.set_objective({g: alpha_gamma for g in gammas})
        return prob, dg_names, line_names

    prob, dg_names, line_names = build(True, True)
    report = lmi.solve(prob, opts.solver)
    if not report.ok:
        for stage, (inc_l, inc_n) in [("DG synthesis", (False, False)),
                                      ("line analysis", (True, False)),
                                      ("necessary conditions", (True, True))]:
            sub, _, _ = build(inc_l, inc_n)
            sub_report = lmi.solve(sub, opts.solver)
            if not sub_report.ok:
                raise InfeasibleProblemError(
                    f"joint local design infeasible; first failing family: {stage} "
                    f"(status {sub_report.status})",
                    violated=stage,
                )
        raise InfeasibleProblemError(
            f"joint local design failed with status {report.status} though every "
            "constraint family is individually feasible",
            violated="joint",
        )

    dgs = []
    deviating = []
    for i in range(n):
        d = _recover_dg(report.values, dg_names[i], sectors[i], net.dg(i).C_t, mu_v[i], opts)
        d.gamma_tilde = float(report.values[f"gammat_{i}"])
        scale = 1.0 + float(np.max(np.abs(d.K0)))
        if abs(d.K0[1]) > opts.gain_zero_tol * scale:
            deviating.append(i)
        d.K0[1] = 0.0
        dgs.append(d)
    if deviating:
        prob, dg_names, line_names = build(True, True, block_diag_P=True)
        report = lmi.solve(prob, opts.solver)
        if not report.ok:
            raise InfeasibleProblemError(
                "joint re-solve with block-diagonal storage failed", violated="gain structure"
            )
        dgs = []
        for i in range(n):
            d = _recover_dg(report.values, dg_names[i], sectors[i], net.dg(i).C_t, mu_v[i], opts)
            d.gamma_tilde = float(report.values[f"gammat_{i}"])
            d.K0[1] = 0.0
            d.deviations.append("block-diagonalized storage to enforce the gain zero")
            dgs.append(d)

    lines = [
        LinePassivity(
            nu_bar=float(report.values[line_names[l]["nubar"]]),
            rho_bar=float(report.values[line_names[l]["rhobar"]]),
            P_bar=float(report.values[line_names[l]["Pbar"]]) * net.lines[l].L,
        )
        for l in range(m)
    ]
    xi = {}
    for i in range(n):
        for l in range(m):
            if net.incidence[i, l] != 0.0:
                xi[(i, l)] = float(report.values[f"xi_{i}_{l}"])
    return LocalDesign(dgs=dgs, lines=lines, p=p_v, p_bar=pb_v, window=window,
                       mu=mu_v, gamma_bar=gamma_bar, xi=xi)


# ---------------------------------------------------------------------------
# necessary conditions (untransformed, standalone pre-screen)
# ---------------------------------------------------------------------------


def necessary_condition_matrix(
    nu: float, rho: float, nu_bar: float, rho_bar: float, gamma_tilde: float,
    b_il: float, C_t: float, p_i: float = 1.0, p_l: float = 1.0,
) -> np.ndarray:
    """Untransformed 6x6 necessary-condition block for one DG-line incidence."""
    cbar = -b_il / C_t
    c = b_il
    M = np.zeros((6, 6))

    def put(r, cix, v):
        M[r, cix] += v
        if r != cix:
            M[cix, r] += v

    put(0, 0, -p_i * nu)
    put(0, 4, -p_i * nu * cbar)
    put(0, 5, -p_i * nu)
    put(1, 1, -p_l * nu_bar)
    put(1, 3, -p_l * nu_bar * c)
    put(1, 5, -p_l * nu_bar)
    put(2, 2, 1.0)
    put(2, 3, 1.0)
    put(2, 4, 1.0)
    put(3, 3, p_i * rho)
    put(3, 4, -0.5 * (p_i * cbar + c * p_l))
    put(3, 5, -0.5 * p_i)
    put(4, 4, p_l * rho_bar)
    put(4, 5, -0.5 * p_l)
    put(5, 5, gamma_tilde)
    return M


def necessary_conditions_feasible(
    net: MicrogridNetwork,
    dg_indices: list[PassivityIndices],
    line_indices: list[LinePassivity],
    gamma_tilde,
    p=1.0,
    p_bar=1.0,
    tol: float = 0.0,
) -> dict[tuple[int, int], bool]:
    """Per-(DG, line) check of the untransformed necessary conditions (> 0)."""
    n, m = net.N, net.L
    p_v = np.broadcast_to(np.asarray(p, dtype=float), (n,))
    pb_v = np.broadcast_to(np.asarray(p_bar, dtype=float), (max(m, 1),))[:m]
    g_v = np.broadcast_to(np.asarray(gamma_tilde, dtype=float), (n,))
    out = {}
    for i in range(n):
        for l in range(m):
            b_il = net.incidence[i, l]
            if b_il == 0.0:
                continue
            M = necessary_condition_matrix(
                dg_indices[i].nu, dg_indices[i].rho,
                line_indices[l].nu_bar, line_indices[l].rho_bar,
                g_v[i], b_il, net.dg(i).C_t, p_v[i], pb_v[l],
            )
            out[(i, l)] = bool(np.linalg.eigvalsh(M)[0] > tol)
    return out


# ---------------------------------------------------------------------------
# trajectory-level dissipation check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DissipationReport:
    """Outcome of the IF-OFP inequality check along one DG trace."""

    max_violation: float           # max over time of (dV/dt - supply)
    passed: bool
    sector_exited: bool            # voltage left the sector window (advisory result)
    saturation_active: bool


def verify_ifofp_on_trajectory(
    t: np.ndarray,
    x_err: np.ndarray,
    eta: np.ndarray,
    nu: float,
    rho: float,
    P: np.ndarray,
    *,
    V_r: float | None = None,
    window: tuple[float, float] | None = None,
    phi: np.ndarray | None = None,
    tol: float = 1e-5,
) -> DissipationReport:
    """Check dV/dt <= -nu||eta||^2 - rho||x||^2 + eta.x along a simulated trace.

    The storage derivative is taken by central differences on the sampled
    storage V(t) = x^T P x, so the check is independent of the synthesis
    and of the integrator internals. Samples where the voltage leaves the
    sector window make the result advisory (flagged, still reported).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x_err, dtype=float)
    eta = np.asarray(eta, dtype=float)
    V = np.einsum("ti,ij,tj->t", x, P, x)
    dV = np.gradient(V, t)
    s = -nu * np.sum(eta**2, axis=1) - rho * np.sum(x**2, axis=1) + np.sum(eta * x, axis=1)
    # endpoints of the gradient are one-sided; compare interior samples
    viol = dV[1:-1] - s[1:-1]
    max_violation = float(np.max(viol)) if viol.size else 0.0
    scale = 1.0 + float(np.max(np.abs(s))) + float(np.max(np.abs(dV)))
    sector_exited = False
    if V_r is not None and window is not None:
        Vabs = x[:, 0] + V_r
        sector_exited = bool(np.any((Vabs < window[0]) | (Vabs > window[1])))
    saturation_active = bool(phi is not None and np.any(phi != 0.0))
    return DissipationReport(
        max_violation=max_violation,
        passed=bool(max_violation <= tol * scale),
        sector_exited=sector_exited,
        saturation_active=saturation_active,
    )

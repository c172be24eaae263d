"""Block-structured LMI assembly, semidefinite solving and verification.

The carrier type is :class:`MatrixExpr`: a constant symmetric matrix plus
affine terms in named decision variables, assembled block-wise with
structural symmetry (every off-diagonal placement mirrors transposed).
:class:`SdpProblem` collects PSD constraints, linear equalities and
inequalities, bounds and a linear objective over scalar, symmetric-matrix
and (optionally masked) rectangular variables.

``solve`` translates the problem to cvxpy and runs an in-process
interior-point conic solver (CLARABEL by default). Every returned
solution is re-verified by an independent path: each constraint matrix is
rebuilt in plain numpy from the reported variable values and its spectrum
is computed with ``numpy.linalg.eigvalsh``, sharing no code with the
solver.

Only the block patterns needed by this toolkit are supported; this is not
a general modeling language.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VarSpec",
    "MatrixExpr",
    "SdpProblem",
    "SolveReport",
    "SolveOptions",
    "solve",
    "dump_problem",
    "check_lti_dissipativity",
    "ifofp_supply",
    "schur_embed",
    "is_psd_via_schur",
    "schur_forms_agree",
    "inv_schur_bound",
    "woodbury_inverse",
]

# Strict inequalities ("> 0" in the source conditions) are realized as
# ">= DEFAULT_EPS * scale"; numerical SDP cannot express open cones.
DEFAULT_EPS = 1e-7


@dataclass
class VarSpec:
    """One decision variable: a scalar, a symmetric block or a masked gain block."""

    name: str
    kind: str                 # "scalar" | "sym" | "rect"
    shape: tuple[int, int]
    offset: int               # first component index in the flat vector
    basis: list[np.ndarray]   # value = sum_k x[offset+k] * basis[k]
    lb: float | None = None
    ub: float | None = None

    @property
    def ncomp(self) -> int:
        return len(self.basis)

    def value_from(self, x: np.ndarray):
        v = sum(x[self.offset + k] * B for k, B in enumerate(self.basis))
        if self.kind == "scalar":
            return float(v[0, 0])
        return np.asarray(v)


def _sym_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n):
        for j in range(i, n):
            B = np.zeros((n, n))
            if i == j:
                B[i, i] = 1.0
            else:
                B[i, j] = B[j, i] = 1.0
            basis.append(B)
    return basis


def _rect_basis(m: int, n: int, mask: np.ndarray | None) -> list[np.ndarray]:
    basis = []
    for i in range(m):
        for j in range(n):
            if mask is not None and not mask[i, j]:
                continue
            B = np.zeros((m, n))
            B[i, j] = 1.0
            basis.append(B)
    return basis


class MatrixExpr:
    """Affine symmetric block matrix: constant + terms linear in variables.

    Created via :meth:`SdpProblem.expr` with a list of block dimensions.
    Placements address blocks; off-diagonal placements mirror transposed
    to (c, r) so the assembled matrix is exactly symmetric by
    construction.
    """

    def __init__(self, problem: "SdpProblem", block_dims: list[int], label: str = ""):
        self._problem = problem
        self.block_dims = list(block_dims)
        self.offsets = np.concatenate([[0], np.cumsum(block_dims)]).astype(int)
        self.dim = int(self.offsets[-1])
        self.label = label
        self.const = np.zeros((self.dim, self.dim))
        # component index -> dense coefficient matrix
        self.coeffs: dict[int, np.ndarray] = {}

    # -- low-level ---------------------------------------------------------

    def _slice(self, r: int) -> slice:
        return slice(self.offsets[r], self.offsets[r + 1])

    def _place(self, M: np.ndarray, r: int, c: int, target: np.ndarray) -> None:
        sr, sc = self._slice(r), self._slice(c)
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape != (sr.stop - sr.start, sc.stop - sc.start):
            raise ValueError(
                f"block ({r},{c}) expects shape {(sr.stop - sr.start, sc.stop - sc.start)}, got {M.shape}"
            )
        target[sr, sc] += M
        if r != c:
            target[sc, sr] += M.T

    def _accumulate(self, var: str, piece_of_basis, r: int, c: int) -> None:
        spec = self._problem.vars[var]
        for k, B in enumerate(spec.basis):
            piece = piece_of_basis(B)
            if not np.any(piece):
                continue
            comp = spec.offset + k
            buf = self.coeffs.get(comp)
            if buf is None:
                buf = np.zeros((self.dim, self.dim))
                self.coeffs[comp] = buf
            self._place(piece, r, c, buf)

    # -- builders ----------------------------------------------------------

    def const_block(self, r: int, c: int, M) -> None:
        """Place constant M at block (r, c); mirrors transposed off the diagonal."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if r == c and not np.allclose(M, M.T, atol=0.0):
            raise ValueError("diagonal constant block must be symmetric")
        self._place(M, r, c, self.const)
        if r == c:
            # _place added it once; diagonal placements do not mirror
            pass

    def term(self, r: int, c: int, var: str, left=None, right=None, coeff: float = 1.0, transpose: bool = False) -> None:
        """Off-diagonal placement of coeff * left @ V @ right at (r, c), mirrored."""
        if r == c:
            raise ValueError("use diag_term or herm_term on the diagonal")
        L = None if left is None else np.atleast_2d(np.asarray(left, dtype=float))
        R = None if right is None else np.atleast_2d(np.asarray(right, dtype=float))

        def piece(B: np.ndarray) -> np.ndarray:
            P = B.T if transpose else B
            if L is not None:
                P = L @ P
            if R is not None:
                P = P @ R
            return coeff * P

        self._accumulate(var, piece, r, c)

    def diag_term(self, r: int, var: str, coeff_mat=None, coeff: float = 1.0) -> None:
        """Place coeff * v * coeff_mat at (r, r) for a scalar variable."""
        spec = self._problem.vars[var]
        if spec.kind != "scalar":
            raise ValueError("diag_term is for scalar variables; use herm_term")
        n = self.block_dims[r]
        C = np.eye(n) if coeff_mat is None else np.atleast_2d(np.asarray(coeff_mat, dtype=float))
        if not np.allclose(C, C.T, atol=0.0):
            raise ValueError("diagonal coefficient must be symmetric")
        self._accumulate(var, lambda B: coeff * float(B[0, 0]) * C, r, r)

    def herm_term(self, r: int, var: str, left=None, right=None, coeff: float = 1.0, transpose: bool = False) -> None:
        """Place the Hermitian pair coeff*(L V R + (L V R)^T) at (r, r)."""
        L = None if left is None else np.atleast_2d(np.asarray(left, dtype=float))
        R = None if right is None else np.atleast_2d(np.asarray(right, dtype=float))

        def piece(B: np.ndarray) -> np.ndarray:
            P = B.T if transpose else B
            if L is not None:
                P = L @ P
            if R is not None:
                P = P @ R
            return coeff * (P + P.T)

        self._accumulate(var, piece, r, r)

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        M = self.const.copy()
        for comp, C in self.coeffs.items():
            M += x[comp] * C
        return M

    def max_abs_entry(self) -> float:
        m = float(np.max(np.abs(self.const))) if self.const.size else 0.0
        for C in self.coeffs.values():
            m = max(m, float(np.max(np.abs(C))))
        return m


@dataclass
class _LinearCon:
    coeffs: dict[int, float]
    rhs: float
    label: str = ""


class SdpProblem:
    """Decision variables + PSD constraints + linear equalities/inequalities.

    Problems are immutable once handed to :func:`solve` (nothing enforces
    this; just do not mutate afterwards). Every constraint matrix is
    affine in the flat component vector.
    """

    def __init__(self) -> None:
        self.vars: dict[str, VarSpec] = {}
        self.ncomp = 0
        self.psd: list[tuple[MatrixExpr, float]] = []
        self.eqs: list[_LinearCon] = []
        self.ineqs: list[_LinearCon] = []  # sum coeffs * x <= rhs
        self.objective: dict[int, float] = {}

    # -- variables ----------------------------------------------------------

    def _register(self, spec: VarSpec) -> str:
        if spec.name in self.vars:
            raise ValueError(f"duplicate variable {spec.name!r}")
        self.vars[spec.name] = spec
        self.ncomp += spec.ncomp
        return spec.name

    def add_scalar(self, name: str, lb: float | None = None, ub: float | None = None) -> str:
        return self._register(VarSpec(name, "scalar", (1, 1), self.ncomp, [np.array([[1.0]])], lb, ub))

    def add_symmetric(self, name: str, n: int) -> str:
        return self._register(VarSpec(name, "sym", (n, n), self.ncomp, _sym_basis(n)))

    def add_rect(self, name: str, m: int, n: int, mask=None) -> str:
        mask = None if mask is None else np.asarray(mask, dtype=bool)
        return self._register(VarSpec(name, "rect", (m, n), self.ncomp, _rect_basis(m, n, mask)))

    # -- constraints ---------------------------------------------------------

    def expr(self, block_dims: list[int], label: str = "") -> MatrixExpr:
        return MatrixExpr(self, block_dims, label)

    def add_psd(self, expr: MatrixExpr, shift: float = 0.0) -> None:
        """Constrain expr >= shift * I (PSD after subtracting the shift)."""
        self.psd.append((expr, float(shift)))

    def _component(self, key) -> int:
        var, comp = key if isinstance(key, tuple) else (key, 0)
        spec = self.vars[var]
        if not (0 <= comp < spec.ncomp):
            raise ValueError(f"component {comp} out of range for {var}")
        return spec.offset + comp

    def add_eq(self, terms: dict, rhs: float = 0.0, label: str = "") -> None:
        """Linear equality: sum coeff * component == rhs.

        Keys are scalar variable names or (name, component) pairs for
        matrix-variable entries in basis order.
        """
        self.eqs.append(_LinearCon({self._component(v): c for v, c in terms.items()}, rhs, label))

    def add_ineq(self, terms: dict, rhs: float = 0.0, label: str = "") -> None:
        """Linear inequality: sum coeff * component <= rhs (keys as in add_eq)."""
        self.ineqs.append(_LinearCon({self._component(v): c for v, c in terms.items()}, rhs, label))

    def set_objective(self, terms: dict[str, float]) -> None:
        """Minimize sum coeff * var over scalar variables (empty = feasibility)."""
        self.objective = {self._component(v): c for v, c in terms.items()}

    def unreferenced_variables(self) -> list[str]:
        used: set[int] = set()
        for expr, _ in self.psd:
            used.update(expr.coeffs)
        for con in self.eqs + self.ineqs:
            used.update(con.coeffs)
        out = []
        for spec in self.vars.values():
            comps = set(range(spec.offset, spec.offset + spec.ncomp))
            if not (comps & used) and spec.lb is None and spec.ub is None:
                out.append(spec.name)
        return out


@dataclass
class SolveOptions:
    solver: str = "CLARABEL"
    eps: float = DEFAULT_EPS          # strictness shift scale for callers
    verify_tol: float = 1e-7
    max_iters: int = 200_000
    scale_cap: float = 1e3            # cap on the per-constraint diagonal preconditioner


@dataclass
class SolveReport:
    """Outcome of one SDP solve with independently recomputed residuals."""

    status: str                       # "optimal" | "infeasible" | "numerical-failure"
    values: dict[str, object] = field(default_factory=dict)
    psd_min_eigs: list[tuple[str, float]] = field(default_factory=list)
    eq_residuals: list[tuple[str, float]] = field(default_factory=list)
    objective: float | None = None
    iterations: int | None = None
    solver: str = ""
    scalings: list[np.ndarray] = field(default_factory=list)  # preconditioner diagonals
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, name: str):
        return self.values[name]


def _equilibrate(C0: np.ndarray, coeffs: dict[int, np.ndarray], max_scale: float) -> np.ndarray:
    """Symmetric diagonal (Ruiz) preconditioner for one PSD constraint.

    Works on the elementwise-magnitude envelope of the constant and every
    coefficient matrix; M >= 0 iff D M D >= 0, so the feasible set and the
    variable values are exactly preserved.
    """
    env = np.abs(C0).copy()
    for C in coeffs.values():
        env = np.maximum(env, np.abs(C))
    n = env.shape[0]
    d = np.ones(n)
    for _ in range(6):
        scaled = env * d[:, None] * d[None, :]
        row = np.max(scaled, axis=1)
        row[row <= 0.0] = 1.0
        d /= np.sqrt(row)
    return np.clip(d, 1.0 / max_scale, max_scale)


def _to_cvxpy(problem: SdpProblem, opts: SolveOptions):
    import cvxpy as cp

    x = cp.Variable(problem.ncomp)
    cons = []
    scalings = []
    for expr, shift in problem.psd:
        n = expr.dim
        C0 = expr.const - shift * np.eye(n)
        d = _equilibrate(C0, expr.coeffs, opts.scale_cap)
        scalings.append(d)
        outer = d[:, None] * d[None, :]
        acc = cp.Constant(C0 * outer)
        for comp, C in expr.coeffs.items():
            acc = acc + x[comp] * (C * outer)
        acc = (acc + acc.T) / 2
        cons.append(acc >> 0)
    for con in problem.eqs:
        cons.append(sum(c * x[i] for i, c in con.coeffs.items()) == con.rhs)
    for con in problem.ineqs:
        cons.append(sum(c * x[i] for i, c in con.coeffs.items()) <= con.rhs)
    for spec in problem.vars.values():
        if spec.kind == "scalar":
            if spec.lb is not None:
                cons.append(x[spec.offset] >= spec.lb)
            if spec.ub is not None:
                cons.append(x[spec.offset] <= spec.ub)
    if problem.objective:
        obj = cp.Minimize(sum(c * x[i] for i, c in problem.objective.items()))
    else:
        obj = cp.Minimize(0)
    return cp.Problem(obj, cons), x, scalings


def solve(problem: SdpProblem, opts: SolveOptions | None = None) -> SolveReport:
    """Solve an :class:`SdpProblem` and verify the result independently.

    The verification path rebuilds every PSD constraint matrix in numpy
    from the returned component vector and computes min eigenvalues with
    ``numpy.linalg.eigvalsh``; a nominally optimal solution violating
    ``min eig >= shift - verify_tol * (1 + ||M||)`` is downgraded to
    numerical-failure.
    """
    import cvxpy as cp

    opts = opts or SolveOptions()
    unref = problem.unreferenced_variables()
    if unref:
        raise ValueError(f"variables never referenced by any constraint: {unref}")
    cp_problem, x, scalings = _to_cvxpy(problem, opts)
    try:
        if opts.solver == "CLARABEL":
            cp_problem.solve(solver=cp.CLARABEL, max_iter=opts.max_iters)
        elif opts.solver == "SCS":
            cp_problem.solve(solver=cp.SCS, max_iters=opts.max_iters, eps=1e-9)
        else:
            cp_problem.solve(solver=opts.solver)
    except cp.SolverError as exc:
        return SolveReport(status="numerical-failure", solver=opts.solver,
                           warnings=[f"solver error: {exc}"], scalings=scalings)

    iters = None
    stats = cp_problem.solver_stats
    if stats is not None and stats.num_iters is not None:
        iters = int(stats.num_iters)

    if cp_problem.status in ("infeasible", "infeasible_inaccurate"):
        return SolveReport(status="infeasible", solver=opts.solver, iterations=iters,
                           scalings=scalings,
                           warnings=["infeasibility certificate returned by solver"])
    if x.value is None or cp_problem.status not in ("optimal", "optimal_inaccurate", "unbounded_inaccurate"):
        return SolveReport(status="numerical-failure", solver=opts.solver, iterations=iters,
                           scalings=scalings, warnings=[f"solver status: {cp_problem.status}"])

    xv = np.asarray(x.value, dtype=float)
    values = {name: spec.value_from(xv) for name, spec in problem.vars.items()}

    report = SolveReport(status="optimal", values=values, solver=opts.solver,
                         iterations=iters, scalings=scalings)
    if problem.objective:
        report.objective = float(sum(c * xv[i] for i, c in problem.objective.items()))
    if cp_problem.status == "optimal_inaccurate":
        report.warnings.append("solver reported optimal_inaccurate")

    # independent verification (numpy rebuild + eigvalsh)
    ok = True
    for idx, (expr, shift) in enumerate(problem.psd):
        M = expr.evaluate(xv)
        w = float(np.linalg.eigvalsh(M)[0])
        label = expr.label or f"psd[{idx}]"
        report.psd_min_eigs.append((label, w))
        scale = 1.0 + float(np.max(np.abs(M)))
        if w < shift - opts.verify_tol * scale:
            ok = False
            report.warnings.append(f"{label}: min eig {w:.3e} below shift {shift:.3e}")
        elif w - shift < 10.0 * opts.verify_tol * scale:
            report.warnings.append(f"{label}: ill-conditioned (min eig within 10x tolerance of shift)")
    for idx, con in enumerate(problem.eqs):
        r = float(sum(c * xv[i] for i, c in con.coeffs.items()) - con.rhs)
        report.eq_residuals.append((con.label or f"eq[{idx}]", r))
        if abs(r) > 1e-6 * (1.0 + abs(con.rhs)):
            ok = False
            report.warnings.append(f"equality {con.label or idx} residual {r:.3e}")
    if not ok:
        report.status = "numerical-failure"
    return report


def dump_problem(problem: SdpProblem) -> str:
    """Serialize a problem to a text sparse-triplet format for external checks.

    Layout: one ``var`` line per variable, then per PSD constraint a
    ``psd`` header followed by ``c i j value`` (constant) and
    ``t comp i j value`` (coefficient) triplets; equalities and
    inequalities as ``comp coeff`` pairs with the right-hand side on the
    header line.
    """
    out = ["# dcmgrid sdp dump v1"]
    for spec in problem.vars.values():
        out.append(f"var {spec.name} {spec.kind} {spec.shape[0]} {spec.shape[1]} offset {spec.offset} ncomp {spec.ncomp}")
    for idx, (expr, shift) in enumerate(problem.psd):
        out.append(f"psd {expr.label or idx} dim {expr.dim} shift {shift!r}")
        for (i, j) in zip(*np.nonzero(expr.const)):
            if i <= j:
                out.append(f"c {i} {j} {expr.const[i, j]!r}")
        for comp in sorted(expr.coeffs):
            C = expr.coeffs[comp]
            for (i, j) in zip(*np.nonzero(C)):
                if i <= j:
                    out.append(f"t {comp} {i} {j} {C[i, j]!r}")
    for con in problem.eqs:
        out.append(f"eq {con.rhs!r} " + " ".join(f"{i}:{c!r}" for i, c in sorted(con.coeffs.items())))
    for con in problem.ineqs:
        out.append(f"ineq {con.rhs!r} " + " ".join(f"{i}:{c!r}" for i, c in sorted(con.coeffs.items())))
    if problem.objective:
        out.append("obj " + " ".join(f"{i}:{c!r}" for i, c in sorted(problem.objective.items())))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# dissipativity and linear-algebra utilities
# ---------------------------------------------------------------------------


def ifofp_supply(nu: float, rho: float, q: int = 1, m: int | None = None) -> np.ndarray:
    """Quadratic supply matrix of the IF-OFP(nu, rho) property.

    X = [[-nu*I, I/2], [I/2, -rho*I]] acting on stacked (input, output).
    """
    m = q if m is None else m
    if q != m:
        raise ValueError("IF-OFP supply requires square input/output dimensions")
    X = np.zeros((2 * q, 2 * q))
    X[:q, :q] = -nu * np.eye(q)
    X[:q, q:] = 0.5 * np.eye(q)
    X[q:, :q] = 0.5 * np.eye(q)
    X[q:, q:] = -rho * np.eye(q)
    return X


def check_lti_dissipativity(
    A, B, C, D, X,
    opts: SolveOptions | None = None,
    feas_tol: float = 1e-7,
) -> tuple[bool, np.ndarray | None]:
    """Feasibility of the quadratic-dissipativity LMI for an LTI system.

    Searches P > 0 with
    ``[[-H(PA) + C'X22C, -PB + C'X21 + C'X22D], [*, X11 + H(X12 D) + D'X22 D]] >= 0``
    by maximizing the smallest eigenvalue margin t; the system is declared
    dissipative when the optimal margin is >= -feas_tol relative to the
    constraint scale. Returns (feasible, P).

    The storage variable is internally substituted P = s * P' with
    s = 1 / max(1, |A|, |B|) so badly scaled plants (microhenry lines) do
    not starve the interior-point solver.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    X = np.asarray(X, dtype=float)
    n = A.shape[0]
    q = B.shape[1]
    X11, X12 = X[:q, :q], X[:q, q:]
    X21, X22 = X[q:, :q], X[q:, q:]

    s_p = 1.0 / max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(B))))

    prob = SdpProblem()
    prob.add_symmetric("Pn", n)
    prob.add_scalar("t", ub=1e6)

    lmi = prob.expr([n, q], label="dissipativity")
    lmi.const_block(0, 0, C.T @ X22 @ C)
    lmi.herm_term(0, "Pn", left=-s_p * np.eye(n), right=A)
    lmi.term(0, 1, "Pn", left=-s_p * np.eye(n), right=B)
    lmi.const_block(0, 1, C.T @ X21 + C.T @ X22 @ D)
    lmi.const_block(1, 1, X11 + (X12 @ D) + (X12 @ D).T + D.T @ X22 @ D)
    lmi.diag_term(0, "t", coeff=-1.0)
    lmi.diag_term(1, "t", coeff=-1.0)
    prob.add_psd(lmi)

    pos = prob.expr([n], label="P_pos")
    pos.herm_term(0, "Pn", coeff=0.5)
    prob.add_psd(pos, shift=1e-9)
    prob.set_objective({"t": -1.0})

    report = solve(prob, opts)
    if not report.ok:
        return False, None
    scale = 1.0 + max(abs(float(np.max(X))), 1.0)
    t = float(report.value("t"))
    P = s_p * np.asarray(report.value("Pn"))
    return t >= -feas_tol * scale, P


def schur_embed(P, Q, R) -> np.ndarray:
    """Block embedding [[P, Q], [Q^T, R]]."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Q = np.asarray(Q, dtype=float).reshape(P.shape[0], R.shape[0])
    return np.block([[P, Q], [Q.T, R]])


def _is_pd(M: np.ndarray, tol: float = 0.0) -> bool:
    return bool(np.linalg.eigvalsh(np.atleast_2d(M))[0] > tol)


def is_psd_via_schur(P, Q, R, form: int = 1, tol: float = 0.0) -> bool:
    """Positive definiteness of [[P, Q], [Q^T, R]] via one of three equivalent forms.

    form 1: eigenvalues of the embedding; form 2: P > 0 and
    R - Q^T P^-1 Q > 0; form 3: R > 0 and P - Q R^-1 Q^T > 0.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Q = np.asarray(Q, dtype=float).reshape(P.shape[0], R.shape[0])
    if form == 1:
        return _is_pd(schur_embed(P, Q, R), tol)
    if form == 2:
        return _is_pd(P, tol) and _is_pd(R - Q.T @ np.linalg.solve(P, Q), tol)
    if form == 3:
        return _is_pd(R, tol) and _is_pd(P - Q @ np.linalg.solve(R, Q.T), tol)
    raise ValueError("form must be 1, 2 or 3")


def schur_forms_agree(P, Q, R, tol: float = 0.0) -> bool:
    """Numerical equivalence check of the three Schur-complement forms."""
    answers = {is_psd_via_schur(P, Q, R, form=f, tol=tol) for f in (1, 2, 3)}
    return len(answers) == 1


def inv_schur_bound(P, Q) -> np.ndarray:
    """Lower bound Q^T + Q - P of Q^T P^-1 Q, tight exactly at Q = P."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    return Q.T + Q - P


def woodbury_inverse(R, rho: float) -> np.ndarray:
    """(R + rho*I)^-1 via the Woodbury identity on R^-1."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Rinv = np.linalg.inv(R)
    n = R.shape[0]
    return Rinv - rho * Rinv @ np.linalg.solve(np.eye(n) + rho * Rinv, Rinv)

"""Energy terms and the local/scale/global alternating optimizer.

The unknowns are the dictionary coefficients T (one surface is atoms @ T),
per-example per-cluster rotations, and a scale factor tying the examples to
the constraint targets. Every sub-step below is an exact minimizer of the
phase energy in its own block of variables, so within a phase the energy
trace is non-increasing; the acceptance suite leans on that.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from ._cd import coordinate_descent
from .dictionary import BlendDictionary, ExampleSet, change_dictionary

MODE_AVERAGE = "average"
MODE_MINIMAL = "minimal"

# tiny diagonal added (through D^T D) when assembling the normal matrix of
# the global step; keeps the Cholesky factorization safe on meshes whose
# clamped cotangent Laplacian is only positive semidefinite
GAMMA_SHIFT = 1e-8


@dataclass
class SolveParams:
    """Tuning knobs of the solver; defaults are package-calibrated."""

    beta_lc: float = 1e3
    beta_sm: float = 1.0
    beta_sp: float = 0.1
    max_iters: int = 100
    avg_iters: int = 10
    tol: float = 1e-6
    mode: str = MODE_AVERAGE
    alpha_min: float = 1e-3
    alpha_max: float = 1e3

    def __post_init__(self):
        if self.beta_lc <= 0:
            raise ValueError("beta_lc must be positive")
        if self.beta_sm < 0 or self.beta_sp < 0:
            raise ValueError("beta_sm and beta_sp must be non-negative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class ConstraintSet:
    """h linear constraints H V ~ Y, with the dictionary product cached."""

    H: sp.csr_matrix
    Y: np.ndarray
    X: np.ndarray | None = None  # H @ atoms for the dictionary last bound

    @property
    def h(self) -> int:
        return self.H.shape[0]

    def with_rows_removed(self, rows) -> "ConstraintSet":
        keep = np.setdiff1d(np.arange(self.h), np.asarray(rows, dtype=int))
        if len(keep) == 0:
            raise ValueError("cannot remove every constraint row")
        return ConstraintSet(H=self.H[keep], Y=self.Y[keep])


def point_constraints(vertex_indices, targets, n: int) -> ConstraintSet:
    """One-hot constraint rows pinning the given vertices to targets."""
    idx = np.asarray(vertex_indices, dtype=int)
    targets = np.asarray(targets, dtype=np.float64).reshape(len(idx), 3)
    H = sp.csr_matrix(
        (np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(len(idx), n)
    )
    return ConstraintSet(H=H, Y=targets)


@dataclass(frozen=True)
class BoundConstraints:
    """A ConstraintSet bound to one Deformer: X = H D, and chol(Gamma)."""

    cs: ConstraintSet
    X: np.ndarray
    XtY: np.ndarray
    gamma: np.ndarray
    chol: tuple


@dataclass
class SolveState:
    T: np.ndarray                     # (b, 3) operative coefficients
    rotations: np.ndarray             # (q, r, 3, 3)
    alpha: float | np.ndarray
    mode: str
    deformer: "Deformer"
    bound: BoundConstraints
    T_all: np.ndarray | None = None   # (q, b, 3), minimal mode only
    alpha_all: np.ndarray | None = None
    selected: int | None = None
    energy: float = math.nan
    trace: list = field(default_factory=list)

    def surface(self) -> np.ndarray:
        return self.deformer.D @ self.T

    def log(self, phase: str, step: str, energy: float):
        self.energy = float(energy)
        self.trace.append((phase, step, float(energy)))

    def phase_energies(self, phase: str) -> list:
        return [e for p, _, e in self.trace if p == phase]


# ---------------------------------------------------------------------------
# rotations


def project_to_rotations(S: np.ndarray, prev: np.ndarray | None = None) -> np.ndarray:
    """Closest-in-trace rotations: argmax over SO(3) of tr(R S), batched.

    Computed from the singular value decomposition with the column of the
    smallest singular value sign-flipped whenever the plain product lands in
    a reflection. Blocks with (numerically) zero S keep their previous
    rotation; non-finite input is rejected.
    """
    S = np.asarray(S, dtype=np.float64)
    single = S.ndim == 2
    S3 = S[None] if single else S
    if not np.isfinite(S3).all():
        raise ValueError("non-finite entries in rotation fit input")
    U, sig, Vt = np.linalg.svd(S3)
    R = np.matmul(Vt.transpose(0, 2, 1), U.transpose(0, 2, 1))
    neg = np.linalg.det(R) < 0
    if neg.any():
        Vt = Vt.copy()
        Vt[neg, 2, :] *= -1.0
        R[neg] = np.matmul(Vt[neg].transpose(0, 2, 1), U[neg].transpose(0, 2, 1))
    norms = np.linalg.norm(S3, axis=(1, 2))
    dead = norms <= 1e-12 * max(norms.max(), 1e-300)
    if dead.any():
        if prev is None:
            R[dead] = np.eye(3)
        else:
            prev3 = prev[None] if single else prev
            R[dead] = prev3[dead]
    return R[0] if single else R


def _rot_to_quat(R):
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        return np.array([s / 4, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
                         (R[1, 0] - R[0, 1]) / s])
    i = int(np.argmax(np.diag(R)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = math.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2
    q = np.empty(4)
    q[0] = (R[k, j] - R[j, k]) / s
    q[1 + i] = s / 4
    q[1 + j] = (R[j, i] + R[i, j]) / s
    q[1 + k] = (R[k, i] + R[i, k]) / s
    return q


def _quat_to_rot(q):
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def slerp_rotation(Ra, Rb, t: float):
    """Shortest-arc spherical interpolation between two rotation matrices."""
    qa, qb = _rot_to_quat(Ra), _rot_to_quat(Rb)
    dot = float(qa @ qb)
    if dot < 0:
        qb, dot = -qb, -dot
    if dot > 1 - 1e-12:
        q = (1 - t) * qa + t * qb
    else:
        th = math.acos(min(dot, 1.0))
        q = (math.sin((1 - t) * th) * qa + math.sin(t * th) * qb) / math.sin(th)
    return _quat_to_rot(q)


def _slerp_batch(Ra, Rb, t):
    out = np.empty_like(Ra)
    for idx in np.ndindex(Ra.shape[:-2]):
        out[idx] = slerp_rotation(Ra[idx], Rb[idx], t)
    return out


# ---------------------------------------------------------------------------
# solver context


class Deformer:
    """Per-dictionary precomputation and the solver steps built on it."""

    def __init__(self, examples: ExampleSet, dictionary: BlendDictionary,
                 params: SolveParams | None = None):
        self.examples = examples
        self.dictionary = dictionary
        self.params = params or SolveParams()
        D = dictionary.atoms
        self.D = D
        Lt = D.T @ (examples.L @ D)
        self.Lt = 0.5 * (Lt + Lt.T)
        self.DtD = D.T @ D
        self.Kt = [np.asarray((K @ D)) for K in examples.Ks]  # (3r, b) each
        self.smooth = dictionary.smooth_diag()
        self.q = examples.q
        self.r = examples.r
        self.b = dictionary.b

    # -- binding constraints

    def bind(self, cs: ConstraintSet) -> BoundConstraints:
        if cs.h < 1:
            raise ValueError("a solve needs at least one constraint row")
        X = cs.X
        if X is None or X.shape != (cs.h, self.b):
            X = np.asarray(cs.H @ self.D)
            cs.X = X
        p = self.params
        gamma = (
            self.Lt
            + GAMMA_SHIFT * self.DtD
            + p.beta_lc * (X.T @ X)
            + np.diag(p.beta_sm * self.smooth)
        )
        # relative identity ridge: covers collinear atoms (null directions of
        # D itself) without disturbing the well-conditioned directions
        ridge = GAMMA_SHIFT * max(float(np.trace(gamma)) / self.b, 1e-30)
        gamma = gamma + ridge * np.eye(self.b)
        try:
            chol = cho_factor(gamma, lower=True)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(
                "global-step matrix is not positive definite; raise beta_sm or "
                "check the Laplacian clamping"
            ) from exc
        return BoundConstraints(cs=cs, X=X, XtY=X.T @ cs.Y, gamma=gamma, chol=chol)

    # -- energies

    def constraint_energy(self, bound: BoundConstraints, T) -> float:
        r = bound.X @ T - bound.cs.Y
        return 0.5 * float(np.sum(r * r))

    def smoothness_energy(self, T) -> float:
        return 0.5 * float(np.sum(self.smooth[:, None] * T * T))

    def arap_energy(self, T, rotations_ell, alpha: float, ell: int) -> float:
        """Scale-aware rigidity energy against example ell."""
        S = (self.Kt[ell] @ T).reshape(self.r, 3, 3)
        cross = float(np.einsum("kij,kji->", rotations_ell, S))
        quad = float(np.einsum("ij,ij->", T, self.Lt @ T))
        return 0.5 * (quad - 2.0 * alpha * cross + alpha**2 * self.examples.tr_vlv[ell])

    def total_average(self, bound, T, rotations, alpha: float) -> float:
        p = self.params
        arap = sum(self.arap_energy(T, rotations[l], alpha, l) for l in range(self.q))
        return (
            arap / self.q
            + p.beta_lc * self.constraint_energy(bound, T)
            + p.beta_sm * self.smoothness_energy(T)
        )

    def example_energy(self, bound, T_ell, rotations_ell, alpha_ell: float, ell: int) -> float:
        p = self.params
        return (
            self.arap_energy(T_ell, rotations_ell, alpha_ell, ell)
            + p.beta_lc * self.constraint_energy(bound, T_ell)
            + p.beta_sm * self.smoothness_energy(T_ell)
        )

    def minimal_energy(self, bound, T_all, rotations, alpha_all):
        """Smallest per-example energy and its argmin (ties to smallest index)."""
        vals = np.array(
            [
                self.example_energy(bound, T_all[l], rotations[l], float(alpha_all[l]), l)
                for l in range(self.q)
            ]
        )
        ell = int(np.argmin(vals))
        return float(vals[ell]), ell

    # -- steps

    def fit_rotations(self, T, prev, ell: int) -> np.ndarray:
        S = (self.Kt[ell] @ T).reshape(self.r, 3, 3)
        return project_to_rotations(S, prev)

    def _rigidity_blocks(self, T_per_example) -> np.ndarray:
        """S blocks for every example, shape (q, r, 3, 3)."""
        return np.stack(
            [(self.Kt[l] @ T_per_example[l]).reshape(self.r, 3, 3) for l in range(self.q)]
        )

    def _cross_trace(self, T, rotations_ell, ell: int) -> float:
        S = (self.Kt[ell] @ T).reshape(self.r, 3, 3)
        return float(np.einsum("kij,kji->", rotations_ell, S))

    def scale_step_average(self, T, rotations) -> float:
        num = sum(self._cross_trace(T, rotations[l], l) for l in range(self.q))
        den = float(self.examples.tr_vlv.sum())
        if den <= 0:
            raise ValueError("degenerate example set: zero rigidity trace")
        p = self.params
        return float(np.clip(num / den, p.alpha_min, p.alpha_max))

    def scale_step_minimal(self, T_all, rotations) -> np.ndarray:
        den = self.examples.tr_vlv
        if (den <= 0).any():
            raise ValueError("degenerate example set: zero rigidity trace")
        num = np.array(
            [self._cross_trace(T_all[l], rotations[l], l) for l in range(self.q)]
        )
        p = self.params
        return np.clip(num / den, p.alpha_min, p.alpha_max)

    def _solve_gamma(self, bound: BoundConstraints, rhs) -> np.ndarray:
        T = cho_solve(bound.chol, rhs)
        res = np.linalg.norm(bound.gamma @ T - rhs)
        if res > 1e-8 * max(np.linalg.norm(rhs), 1e-300):
            raise RuntimeError(
                f"global-step residual {res:.2e} too large; raise beta_sm or "
                "check the Laplacian clamping"
            )
        return T

    def _rot_stack(self, rotations_ell) -> np.ndarray:
        # vertical stack of R_k^T, aligned with the (3r, b) rigidity blocks
        return rotations_ell.transpose(0, 2, 1).reshape(3 * self.r, 3)

    def global_step_average(self, bound, rotations, alpha: float) -> np.ndarray:
        p = self.params
        rhs = p.beta_lc * bound.XtY.copy()
        for l in range(self.q):
            rhs += (alpha / self.q) * (self.Kt[l].T @ self._rot_stack(rotations[l]))
        return self._solve_gamma(bound, rhs)

    def global_step_minimal(self, bound, rotations_ell, alpha_ell: float,
                            ell: int) -> np.ndarray:
        p = self.params
        rhs = p.beta_lc * bound.XtY + alpha_ell * (
            self.Kt[ell].T @ self._rot_stack(rotations_ell)
        )
        return self._solve_gamma(bound, rhs)

    # -- alternation drivers

    def run_average(self, state: SolveState, phase: str, iters: int | None = None,
                    tol: float | None = None) -> SolveState:
        p = self.params
        iters = p.avg_iters if iters is None else iters
        tol = p.tol if tol is None else tol
        bound = state.bound
        # cached pieces; only the cross terms move during local/scale steps
        S = self._rigidity_blocks([state.T] * self.q)
        quad = float(np.einsum("ij,ij->", state.T, self.Lt @ state.T))
        fixed = p.beta_lc * self.constraint_energy(bound, state.T) + (
            p.beta_sm * self.smoothness_energy(state.T)
        )

        def energy(alpha):
            cross = float(np.einsum("lkij,lkji->", state.rotations, S))
            tr_sum = float(self.examples.tr_vlv.sum())
            return 0.5 * (self.q * quad - 2 * alpha * cross + alpha**2 * tr_sum) / self.q + fixed

        prev = energy(state.alpha)
        state.log(phase, "start", prev)
        for _ in range(iters):
            state.rotations = project_to_rotations(
                S.reshape(-1, 3, 3), state.rotations.reshape(-1, 3, 3)
            ).reshape(self.q, self.r, 3, 3)
            state.log(phase, "local", energy(state.alpha))
            num = float(np.einsum("lkij,lkji->", state.rotations, S))
            den = float(self.examples.tr_vlv.sum())
            if den <= 0:
                raise ValueError("degenerate example set: zero rigidity trace")
            state.alpha = float(np.clip(num / den, p.alpha_min, p.alpha_max))
            state.log(phase, "scale", energy(state.alpha))
            state.T = self.global_step_average(bound, state.rotations, state.alpha)
            S = self._rigidity_blocks([state.T] * self.q)
            quad = float(np.einsum("ij,ij->", state.T, self.Lt @ state.T))
            fixed = p.beta_lc * self.constraint_energy(bound, state.T) + (
                p.beta_sm * self.smoothness_energy(state.T)
            )
            e = energy(state.alpha)
            state.log(phase, "global", e)
            if prev - e <= tol * max(abs(prev), 1e-30):
                break
            prev = e
        return state

    def run_minimal(self, state: SolveState, phase: str, iters: int | None = None,
                    tol: float | None = None) -> SolveState:
        p = self.params
        iters = p.max_iters if iters is None else iters
        tol = p.tol if tol is None else tol
        bound = state.bound
        if state.T_all is None:
            state.T_all = np.repeat(state.T[None], self.q, axis=0)
        if state.alpha_all is None:
            a = state.alpha if np.ndim(state.alpha) else float(state.alpha)
            state.alpha_all = np.full(self.q, a, dtype=np.float64)
        state.mode = MODE_MINIMAL
        trv = self.examples.tr_vlv
        if (trv <= 0).any():
            raise ValueError("degenerate example set: zero rigidity trace")

        def refresh_caches():
            S = self._rigidity_blocks(state.T_all)
            quad = np.array(
                [float(np.einsum("ij,ij->", t, self.Lt @ t)) for t in state.T_all]
            )
            fixed = np.array(
                [
                    p.beta_lc * self.constraint_energy(bound, t)
                    + p.beta_sm * self.smoothness_energy(t)
                    for t in state.T_all
                ]
            )
            return S, quad, fixed

        S, quad, fixed = refresh_caches()

        def energies():
            cross = np.einsum("lkij,lkji->l", state.rotations, S)
            return 0.5 * (quad - 2 * state.alpha_all * cross + state.alpha_all**2 * trv) + fixed

        vals = energies()
        ell = int(np.argmin(vals))
        prev = float(vals[ell])
        state.log(phase, "start", prev)
        for _ in range(iters):
            state.rotations = project_to_rotations(
                S.reshape(-1, 3, 3), state.rotations.reshape(-1, 3, 3)
            ).reshape(self.q, self.r, 3, 3)
            vals = energies()
            state.log(phase, "local", float(vals.min()))
            cross = np.einsum("lkij,lkji->l", state.rotations, S)
            state.alpha_all = np.clip(cross / trv, p.alpha_min, p.alpha_max)
            vals = energies()
            state.log(phase, "scale", float(vals.min()))
            for l in range(self.q):
                state.T_all[l] = self.global_step_minimal(
                    bound, state.rotations[l], float(state.alpha_all[l]), l
                )
            S, quad, fixed = refresh_caches()
            vals = energies()
            ell = int(np.argmin(vals))
            e = float(vals[ell])
            state.log(phase, "global", e)
            if prev - e <= tol * max(abs(prev), 1e-30):
                break
            prev = e
        state.selected = ell
        state.T = state.T_all[ell]
        state.alpha = float(state.alpha_all[ell])
        return state

    def fresh_state(self, bound: BoundConstraints, T: np.ndarray) -> SolveState:
        rot = np.broadcast_to(np.eye(3), (self.q, self.r, 3, 3)).copy()
        return SolveState(T=T, rotations=rot, alpha=1.0, mode=MODE_AVERAGE,
                          deformer=self, bound=bound)

    def refine(self, state: SolveState, cs: ConstraintSet, phase: str = "refine",
               iters: int | None = None) -> SolveState:
        """Continue minimal-mode iteration under an updated constraint set."""
        bound = self.bind(cs)
        state.bound = bound
        return self.run_minimal(state, phase, iters=iters)


# ---------------------------------------------------------------------------
# initialization


def init_transformations(deformer: Deformer, bound: BoundConstraints,
                         params: SolveParams | None = None) -> np.ndarray:
    """Closed-form first coefficients: constraints plus smoothness only."""
    p = params or deformer.params
    X, Y = bound.X, bound.cs.Y
    A = p.beta_lc * (X.T @ X) + np.diag(p.beta_sm * deformer.smooth)
    rhs = p.beta_lc * (X.T @ Y)
    try:
        T = cho_solve(cho_factor(A, lower=True), rhs)
        bad = np.linalg.norm(A @ T - rhs) > 1e-8 * max(np.linalg.norm(rhs), 1e-300)
    except np.linalg.LinAlgError:
        bad = True
    if bad:  # singular system: retry with a tiny ridge
        A = A + 1e-10 * np.eye(len(A))
        T = cho_solve(cho_factor(A, lower=True), rhs)
    return T


def sparse_init(deformer: Deformer, bound: BoundConstraints,
                params: SolveParams | None = None, tol: float = 1e-6,
                max_sweeps: int = 1000):
    """Elastic-net initial coefficients by cyclic coordinate descent.

    Minimizes the closed-form init energy plus an entrywise L1 penalty with
    soft-thresholding updates; stops when no coefficient moves more than
    ``tol`` in a sweep. Returns (T, per-sweep objective values).
    """
    p = params or deformer.params
    X, Y = bound.X, bound.cs.Y
    G = p.beta_lc * (X.T @ X)
    c = p.beta_lc * (X.T @ Y)
    const = 0.5 * p.beta_lc * float(np.sum(Y * Y))
    T, history = coordinate_descent(
        G, c, p.beta_sm * deformer.smooth, p.beta_sp, const, tol, max_sweeps
    )
    return T, [const] + history


# ---------------------------------------------------------------------------
# the full schedule


def solve_with(coarse: Deformer, rich: Deformer, cs: ConstraintSet,
               schedule: tuple = ("sparse", "average", "minimal", "rich")) -> SolveState:
    """Run the solve schedule on prebuilt solver contexts.

    Phases: elastic-net init on the coarse dictionary, average-mode
    alternation, minimal-mode alternation (selecting the closest example),
    then conversion to the rich dictionary for a final minimal-mode
    refinement. Each phase logs its energy trace into the returned state.
    """
    bound = coarse.bind(ConstraintSet(H=cs.H, Y=cs.Y))
    if "sparse" in schedule:
        T0, history = sparse_init(coarse, bound)
    else:
        T0, history = init_transformations(coarse, bound), []
    state = coarse.fresh_state(bound, T0)
    for e in history:
        state.log("sparse", "sweep", e)
    if "average" in schedule:
        coarse.run_average(state, "average")
    if "minimal" in schedule:
        coarse.run_minimal(state, "minimal")
    if "rich" in schedule and rich is not coarse:
        bound_r = rich.bind(ConstraintSet(H=cs.H, Y=cs.Y))
        if state.T_all is None:  # minimal phase skipped
            state.T_all = np.repeat(state.T[None], coarse.q, axis=0)
            state.alpha_all = np.full(coarse.q, float(np.mean(state.alpha)))
        T_all = np.stack(
            [change_dictionary(coarse.dictionary, rich.dictionary, state.T_all[l])
             for l in range(coarse.q)]
        )
        state = SolveState(
            T=T_all[state.selected or 0],
            rotations=state.rotations,
            alpha=state.alpha,
            mode=MODE_MINIMAL,
            deformer=rich,
            bound=bound_r,
            T_all=T_all,
            alpha_all=state.alpha_all,
            selected=state.selected,
            trace=state.trace,
        )
        rich.run_minimal(state, "rich")
    return state


def solve(examples: ExampleSet, dict_coarse: BlendDictionary,
          dict_rich: BlendDictionary, cs: ConstraintSet,
          params: SolveParams | None = None,
          schedule: tuple = ("sparse", "average", "minimal", "rich")) -> SolveState:
    """Build solver contexts for the two dictionaries and run the schedule."""
    params = params or SolveParams()
    coarse = Deformer(examples, dict_coarse, params)
    rich = coarse if dict_rich is dict_coarse else Deformer(examples, dict_rich, params)
    return solve_with(coarse, rich, cs, schedule)


# ---------------------------------------------------------------------------
# constraint edits and interpolation


def remove_constraints(cs: ConstraintSet, rows, state: SolveState | None = None):
    """Drop constraint rows; rebind the state's factorization if given."""
    cs2 = cs.with_rows_removed(rows)
    if state is not None:
        state.bound = state.deformer.bind(cs2)
    return cs2, state


def interpolate_poses(state_a: SolveState, state_b: SolveState, t: float) -> SolveState:
    """Blend two solved states: slerp rotations, interpolate scale
    geometrically, blend targets linearly, then run one global step."""
    if state_a.deformer is not state_b.deformer:
        raise ValueError("states must share a deformer (same dictionary)")
    dfm = state_a.deformer
    ba, bb = state_a.bound, state_b.bound
    if ba.X.shape != bb.X.shape or not np.array_equal(
        ba.cs.H.toarray(), bb.cs.H.toarray()
    ):
        raise ValueError("states must constrain the same rows to interpolate")
    p = dfm.params
    R_t = _slerp_batch(state_a.rotations, state_b.rotations, t)
    Y_t = (1 - t) * ba.cs.Y + t * bb.cs.Y
    rhs = p.beta_lc * (ba.X.T @ Y_t)
    if state_a.mode == MODE_MINIMAL and state_b.mode == MODE_MINIMAL:
        aa = np.asarray(state_a.alpha_all, dtype=float)
        ab = np.asarray(state_b.alpha_all, dtype=float)
        alpha_t = np.exp((1 - t) * np.log(aa) + t * np.log(ab))
        la, lb = state_a.selected, state_b.selected
        if la == lb:
            rhs += alpha_t[la] * (dfm.Kt[la].T @ dfm._rot_stack(R_t[la]))
        else:  # examples changed between the endpoints: blend their pulls
            rhs += (1 - t) * alpha_t[la] * (dfm.Kt[la].T @ dfm._rot_stack(R_t[la]))
            rhs += t * alpha_t[lb] * (dfm.Kt[lb].T @ dfm._rot_stack(R_t[lb]))
        selected = la if t <= 0.5 else lb
        alpha = float(alpha_t[selected])
    else:
        a0, a1 = float(np.mean(state_a.alpha)), float(np.mean(state_b.alpha))
        alpha = math.exp((1 - t) * math.log(a0) + t * math.log(a1))
        alpha_t = None
        for l in range(dfm.q):
            rhs += (alpha / dfm.q) * (dfm.Kt[l].T @ dfm._rot_stack(R_t[l]))
        selected = None
    T = dfm._solve_gamma(ba, rhs)
    out = SolveState(
        T=T, rotations=R_t, alpha=alpha, mode=state_a.mode, deformer=dfm,
        bound=BoundConstraints(
            cs=ConstraintSet(H=ba.cs.H, Y=Y_t, X=ba.X),
            X=ba.X, XtY=ba.X.T @ Y_t, gamma=ba.gamma, chol=ba.chol,
        ),
        selected=selected,
        alpha_all=alpha_t,
    )
    out.energy = float("nan")
    return out

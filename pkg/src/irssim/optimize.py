"""SNR maximization over surface rotations, surface phases and UE beams.

Three engines share the objective f = Tr{(H H^H)^{-1} Q} (minimizing f
maximizes every user's zero-forcing SNR simultaneously):

* ``multistart`` - damped Newton iterations with closed-form gradient and
  Hessian, batched over random starting points.  Mode ``"NRP"`` searches all
  2N+K variables; mode ``"NR"`` pins the surface phases to zero.
* ``heuristic_optimize`` ("HOP") - assigns each UE to one surface by solving
  a linear assignment problem on asymptotic channel weights, then points
  beams and aligns phases in closed form.
* ``exhaustive_map_search`` and ``prop2_oracle`` - brute-force references
  used to certify the heuristic.

Derivative bookkeeping: with K = H H^H and Z = K^{-1} Q K^{-1},

    df/dx    = -2 Re Tr{Z H_x H^H}
    d2f/dxdy =  2 Re Tr{Z K_y K^{-1} K_x} - Tr{Z K_xy}

and every H_x is rank one (p_x q_x^H), so both reduce to small Gram products
of K-vectors; the Hessian costs O(D^2 K) after O(K^2 M1) setup.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import (
    ChannelOperands,
    ChannelRealization,
    build_operands,
    dirichlet_ratio,
    evaluate_channel,
)
from .geometry import Scene

MODES = ("NR", "NRP")


class NoFeasibleAssignmentError(ValueError):
    """No injective UE -> surface map with finite total weight exists."""


class OptimizationError(RuntimeError):
    """Every starting point was infeasible."""


@dataclass(frozen=True)
class ControlVector:
    """The optimization variables: rotations, phases, UE beam directions."""

    delta: np.ndarray   # (N,)
    psi: np.ndarray     # (N,)
    alpha: np.ndarray   # (K,)

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.delta)) and np.all(np.isfinite(self.psi))
                and np.all(np.isfinite(self.alpha))):
            raise ValueError("control entries must be finite")
        if self.delta.shape != self.psi.shape:
            raise ValueError("delta and psi must both have one entry per surface")


@dataclass(frozen=True)
class AssignmentMap:
    """Injective map from UE index to the surface serving it."""

    irs_for_ue: tuple

    def __post_init__(self) -> None:
        if len(set(self.irs_for_ue)) != len(self.irs_for_ue):
            raise ValueError("assignment must be injective")
        if any(n < 0 for n in self.irs_for_ue):
            raise ValueError("surface indices must be non-negative")


@dataclass
class OptimResult:
    """Outcome of one optimization run."""

    control: ControlVector
    objective: float
    snr_db: np.ndarray
    mode: str
    iterations: int = 0
    total_iterations: int = 0
    starts: int = 1
    converged: bool = True
    wall_time_s: float = 0.0
    trace: Optional[list] = None


class _Layout:
    """Index bookkeeping for the packed variable vector."""

    def __init__(self, n_irs: int, n_ues: int, optimize_phases: bool):
        self.n_irs = n_irs
        self.n_ues = n_ues
        self.optimize_phases = optimize_phases
        self.dim = (2 * n_irs if optimize_phases else n_irs) + n_ues

    def pack(self, control: ControlVector) -> np.ndarray:
        parts = [control.delta]
        if self.optimize_phases:
            parts.append(control.psi)
        parts.append(control.alpha)
        return np.concatenate(parts)

    def unpack(self, x: np.ndarray):
        n = self.n_irs
        delta = x[..., :n]
        if self.optimize_phases:
            psi = x[..., n:2 * n]
            alpha = x[..., 2 * n:]
        else:
            psi = np.zeros_like(delta)
            alpha = x[..., n:]
        return delta, psi, alpha

    def project(self, x: np.ndarray) -> np.ndarray:
        """Canonicalize angles without changing the objective value.

        The channel is pi-periodic in each rotation and depends on each beam
        direction only through (sin, cos^2)-type terms, so rotations fold
        into (-pi/2, pi/2], beams mirror across the end-fire line, and
        phases wrap mod 2 pi.
        """
        x = np.array(x, dtype=float, copy=True)
        n = self.n_irs
        x[..., :n] = np.mod(x[..., :n] + np.pi / 2, np.pi) - np.pi / 2
        a0 = 2 * n if self.optimize_phases else n
        if self.optimize_phases:
            x[..., n:2 * n] = np.mod(x[..., n:2 * n], 2 * np.pi)
        alpha = np.mod(x[..., a0:] + np.pi, 2 * np.pi) - np.pi
        alpha = np.where(alpha > np.pi / 2, np.pi - alpha, alpha)
        alpha = np.where(alpha < -np.pi / 2, -np.pi - alpha, alpha)
        x[..., a0:] = alpha
        return x


class SnrObjective:
    """f(control) = Tr{(H H^H)^{-1} Q} bound to one channel draw.

    Evaluation is deterministic for fixed inputs and broadcasts over a
    leading batch axis of packed variable vectors.
    """

    def __init__(self, scene: Scene, realization: Optional[ChannelRealization] = None,
                 q_diag: Optional[np.ndarray] = None, optimize_phases: bool = True,
                 operands: Optional[ChannelOperands] = None):
        if operands is None:
            if realization is None:
                raise ValueError("need either a realization or prebuilt operands")
            operands = build_operands(scene, realization)
        self.op = operands
        self.scene = scene
        self.q_diag = (np.ones(self.op.n_ues) if q_diag is None
                       else np.asarray(q_diag, dtype=float))
        self.layout = _Layout(self.op.n_irs, self.op.n_ues, optimize_phases)

    # -- scalar conversions ---------------------------------------------------

    def snr_db(self, objective_value: float) -> np.ndarray:
        r = self.scene.radio
        snr = r.tx_power_w * self.q_diag / (r.noise_power_w * objective_value)
        return 10.0 * np.log10(snr)

    # -- evaluation -------------------------------------------------------------

    def value(self, x: np.ndarray) -> np.ndarray:
        """Objective at packed points ``x`` (..., D); +inf where singular."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        delta, psi, alpha = self.layout.unpack(x)
        ev = evaluate_channel(self.op, delta, psi, alpha, order=0)
        kmat = ev.h @ ev.h.conj().swapaxes(-1, -2)
        kinv, bad = _inv_batch(kmat)
        f = np.einsum("...kk,k->...", kinv, self.q_diag).real
        f = np.where(bad | ~np.isfinite(f) | (f <= 0), np.inf, f)
        return f if f.shape else float(f)

    def value_grad_hess(self, x: np.ndarray):
        """Objective, gradient and Hessian at packed points ``x`` (B, D)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lay = self.layout
        n, k, d = lay.n_irs, lay.n_ues, lay.dim
        b = x.shape[0]
        delta, psi, alpha = lay.unpack(x)
        ev = evaluate_channel(self.op, delta, psi, alpha, order=2)
        h = ev.h
        kmat = h @ h.conj().swapaxes(-1, -2)
        kinv, bad = _inv_batch(kmat)
        f = np.einsum("bkk,k->b", kinv, self.q_diag).real
        f = np.where(bad | ~np.isfinite(f) | (f <= 0), np.inf, f)
        z = (kinv * self.q_diag[None, None, :]) @ kinv

        v1, v3 = self.op.v1, self.op.v3
        phase = ev.psi_phase                                   # (B, N)

        # Rank-one factors H_x = p_x q_x^H for every variable.
        pmat = np.zeros((b, k, d), dtype=complex)
        qmat = np.zeros((b, v1.shape[0], d), dtype=complex)
        i_alpha = 2 * n if lay.optimize_phases else n
        pmat[:, :, :n] = phase[:, None, :] * ev.dm_ddelta
        qmat[:, :, :n] = v1[None, :, :]
        if lay.optimize_phases:
            pmat[:, :, n:2 * n] = 1j * phase[:, None, :] * ev.m
            qmat[:, :, n:2 * n] = v1[None, :, :]
        pmat[:, np.arange(k), i_alpha + np.arange(k)] = 1.0
        a_coef = np.conj(phase[:, None, :] * ev.dm_dalpha)     # (B, K, N)
        qmat[:, :, i_alpha:] = np.einsum("mn,bkn->bmk", v1, a_coef)
        qmat[:, :, i_alpha:] += v3[None, :, :] * np.conj(ev.dt_dalpha)[:, None, :]

        amat = h @ qmat                                        # (B, K, D)
        zp = z @ pmat
        za = z @ amat
        kip = kinv @ pmat
        kia = kinv @ amat

        grad = -2.0 * np.einsum("bkx,bkx->bx", np.conj(amat), zp).real

        g1 = np.einsum("bkx,bky->bxy", np.conj(amat), zp)
        g2 = np.einsum("bkx,bky->bxy", np.conj(amat), kip)
        g3 = np.einsum("bkx,bky->bxy", np.conj(pmat), zp)
        g4 = np.einsum("bkx,bky->bxy", np.conj(amat), kia)
        g5 = np.einsum("bkx,bky->bxy", np.conj(amat), za)
        g6 = np.einsum("bkx,bky->bxy", np.conj(pmat), kip)
        g7 = np.einsum("bkx,bky->bxy", np.conj(pmat), za)
        g8 = np.einsum("bkx,bky->bxy", np.conj(pmat), kia)
        tr = lambda m: m.swapaxes(-1, -2)
        curv = g1 * tr(g2) + g3 * tr(g4) + g5 * tr(g6) + g7 * tr(g8)

        qq = np.einsum("bmx,bmy->bxy", np.conj(qmat), qmat)
        cross = qq * tr(g3)

        # Second-derivative terms of H itself (sparse in the variable pairs).
        hz = np.einsum("bkm,bkl->bml", np.conj(h), z)          # H^H Z
        r1 = np.einsum("mn,bmk->bnk", np.conj(v1), hz)         # (B, N, K)
        r3 = np.einsum("mk,bmk->bk", np.conj(v3), hz)          # (B, K) diagonal
        sparse = np.zeros((b, d, d), dtype=complex)
        idx_n = np.arange(n)
        sp_dd = np.einsum("bnk,bkn->bn", r1, phase[:, None, :] * ev.d2m_ddelta2)
        sparse[:, idx_n, idx_n] += sp_dd
        if lay.optimize_phases:
            sp_dp = np.einsum("bnk,bkn->bn", r1, 1j * phase[:, None, :] * ev.dm_ddelta)
            sparse[:, idx_n, n + idx_n] += sp_dp
            sparse[:, n + idx_n, idx_n] += sp_dp
            sp_pp = np.einsum("bnk,bkn->bn", r1, -phase[:, None, :] * ev.m)
            sparse[:, n + idx_n, n + idx_n] += sp_pp
            sp_pa = r1.swapaxes(1, 2) * (1j * phase[:, None, :] * ev.dm_dalpha)
            for kk in range(k):
                sparse[:, n + idx_n, i_alpha + kk] += sp_pa[:, kk, :]
                sparse[:, i_alpha + kk, n + idx_n] += sp_pa[:, kk, :]
        sp_da = r1.swapaxes(1, 2) * (phase[:, None, :] * ev.d2m_ddelta_dalpha)
        for kk in range(k):
            sparse[:, idx_n, i_alpha + kk] += sp_da[:, kk, :]
            sparse[:, i_alpha + kk, idx_n] += sp_da[:, kk, :]
        idx_k = np.arange(k)
        sp_aa = np.einsum("bnk,bkn->bk", r1, phase[:, None, :] * ev.d2m_dalpha2)
        sp_aa = sp_aa + r3 * ev.d2t_dalpha2
        sparse[:, i_alpha + idx_k, i_alpha + idx_k] += sp_aa

        hess = 2.0 * curv.real - 2.0 * cross.real - 2.0 * sparse.real
        if np.any(bad):
            grad[bad] = 0.0
            hess[bad] = np.eye(d)[None]
        return f, grad, hess

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Analytic gradient at a single packed point (length D)."""
        _, g, _ = self.value_grad_hess(np.asarray(x, dtype=float)[None, :])
        return g[0]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Analytic Hessian at a single packed point (D x D, symmetric)."""
        _, _, s = self.value_grad_hess(np.asarray(x, dtype=float)[None, :])
        return s[0]


def _inv_batch(kmat: np.ndarray):
    """Batched Hermitian inverse; flags lanes where inversion fails."""
    bshape = kmat.shape[:-2]
    bad = np.zeros(bshape, dtype=bool)
    try:
        return np.linalg.inv(kmat), bad
    except np.linalg.LinAlgError:
        pass
    flat = kmat.reshape((-1,) + kmat.shape[-2:])
    out = np.empty_like(flat)
    bad = np.zeros(flat.shape[0], dtype=bool)
    eye = np.eye(kmat.shape[-1])
    for i, m in enumerate(flat):
        try:
            out[i] = np.linalg.inv(m)
        except np.linalg.LinAlgError:
            out[i] = eye
            bad[i] = True
    return out.reshape(kmat.shape), bad.reshape(bshape)


# --- Newton-Raphson with multi-start -------------------------------------------


def newton_step(objective: SnrObjective, x: np.ndarray, damping: bool = True):
    """One safeguarded Newton update from a single packed point.

    Returns (x_next, info).  With damping enabled the step never increases
    the objective; without it this is the raw iteration.
    """
    xb = np.asarray(x, dtype=float)[None, :]
    f = objective.value(xb)
    xn, fn, accepted = _newton_iteration(objective, xb, f, damping)
    return xn[0], {"f": float(fn[0]), "accepted": bool(accepted[0])}


def _solve_damped(hess: np.ndarray, grad: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Solve (S + tau*scale*I) step = grad per lane; zero step on failure."""
    d = hess.shape[-1]
    diag_scale = np.maximum(np.abs(np.einsum("bii->bi", hess)).mean(axis=1), 1e-12)
    shifted = hess + (tau * diag_scale)[:, None, None] * np.eye(d)[None]
    try:
        return np.linalg.solve(shifted, grad[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.zeros_like(grad)
        for i in range(hess.shape[0]):
            try:
                out[i] = np.linalg.solve(shifted[i], grad[i])
            except np.linalg.LinAlgError:
                pass
        return out


def _newton_iteration(objective: SnrObjective, x: np.ndarray, f: np.ndarray,
                      damping: bool):
    """One (optionally damped) Newton update for a batch of points."""
    lay = objective.layout
    _, grad, hess = objective.value_grad_hess(x)
    if not damping:
        step = _solve_damped(hess, grad, np.zeros(x.shape[0]))
        xn = lay.project(x - step)
        return xn, objective.value(xn), np.ones(x.shape[0], dtype=bool)

    xn = x.copy()
    fn = f.copy()
    accepted = np.zeros(x.shape[0], dtype=bool)
    tau = np.zeros(x.shape[0])
    for _ in range(40):
        todo = ~accepted
        if not todo.any():
            break
        step = _solve_damped(hess[todo], grad[todo], tau[todo])
        cand = lay.project(x[todo] - step)
        fc = objective.value(cand)
        ok = np.isfinite(fc) & (fc <= f[todo])
        idx = np.flatnonzero(todo)
        good = idx[ok]
        xn[good] = cand[ok]
        fn[good] = fc[ok]
        accepted[good] = True
        lagging = idx[~ok]
        tau[lagging] = np.maximum(tau[lagging] * 8.0, 1e-6)
    return xn, fn, accepted


def multistart(scene: Scene, realization: Optional[ChannelRealization] = None,
               mode: str = "NRP", n_starts: int = 100,
               rng: Optional[np.random.Generator] = None,
               q_diag: Optional[np.ndarray] = None,
               operands: Optional[ChannelOperands] = None,
               include_heuristic_start: bool = True,
               max_iterations: int = 200, step_tolerance: float = 1e-8,
               damping: bool = True, collect_trace: bool = False) -> OptimResult:
    """Newton-Raphson from ``n_starts`` random points; returns the best local
    minimum found.

    Starting points are uniform over [0, 2*pi)^D (then canonicalized); with
    ``include_heuristic_start`` the assignment heuristic's configuration is
    appended as one extra deterministic start, which anchors the search when
    large surfaces make the good basins narrow.  Mode ``"NR"`` freezes the
    surface phases at zero and removes them from the search space.
    Results are deterministic for a fixed seed: candidates are generated up
    front and ties resolve by start index.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if n_starts < 1:
        raise ValueError("need at least one start")
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng()
    objective = SnrObjective(scene, realization, q_diag=q_diag,
                             optimize_phases=(mode == "NRP"), operands=operands)
    lay = objective.layout

    starts = rng.uniform(0.0, 2.0 * np.pi, size=(n_starts, lay.dim))
    if include_heuristic_start:
        hop = heuristic_optimize(scene, realization, q_diag=q_diag, operands=objective.op)
        starts = np.vstack([starts, lay.pack(hop.control)[None, :]])
    x = lay.project(starts)
    f = objective.value(x)
    if not np.any(np.isfinite(f)):
        raise OptimizationError("all starting points are infeasible")

    alive = np.isfinite(f)
    converged = np.zeros(x.shape[0], dtype=bool)
    iters = np.zeros(x.shape[0], dtype=int)
    trace = [] if collect_trace else None
    for _ in range(max_iterations):
        active = alive & ~converged
        if not active.any():
            break
        xn, fn, accepted = _newton_iteration(objective, x[active], f[active], damping)
        step_inf = np.max(np.abs(xn - x[active]), axis=1)
        idx = np.flatnonzero(active)
        x[idx], f[idx] = xn, fn
        iters[idx] += 1
        if trace is not None:
            for lane, s_norm in zip(idx, step_inf):
                trace.append((int(lane), int(iters[lane]), float(f[lane]), float(s_norm)))
        converged[idx] |= (step_inf < step_tolerance) | ~accepted

    best = int(np.argmin(np.where(np.isfinite(f), f, np.inf)))
    delta, psi, alpha = lay.unpack(x[best])
    control = ControlVector(delta=delta.copy(), psi=psi.copy(), alpha=alpha.copy())
    return OptimResult(
        control=control,
        objective=float(f[best]),
        snr_db=objective.snr_db(float(f[best])),
        mode=mode,
        iterations=int(iters[best]),
        total_iterations=int(iters.sum()),
        starts=x.shape[0],
        converged=bool(converged[best]),
        wall_time_s=time.perf_counter() - t0,
        trace=trace,
    )


# --- assignment heuristic ---------------------------------------------------------


def hop_weights(op: ChannelOperands, q_diag: Optional[np.ndarray] = None) -> np.ndarray:
    """Assignment weights w[k, n] = q_k / (|M_kn|^2 + |T_k|^2) at aligned beams.

    Entry (k, n) is evaluated as if surface ``n`` pointed its beam at UE
    ``k``'s LoS direction and the UE pointed back at the surface; the full
    multipath sum enters, and the wall term uses the same UE beam choice.
    A vanishing channel maps to an infinite weight so the assignment avoids
    it.
    """
    q_diag = np.ones(op.n_ues) if q_diag is None else np.asarray(q_diag, dtype=float)
    sin_ref = np.sin(op.zeta[:, :, :1])                        # UE beam at the LoS path
    b = dirichlet_ratio(op.ue_spacing, op.ue_elements, sin_ref - np.sin(op.zeta))
    s = np.sin(op.phi2[:, :, :1]) - np.sin(op.phi2)            # beam at the LoS path
    m_aligned = np.sum(op.cg * b * np.sinc(op.kappa[None, :, None] * s), axis=-1)
    b3 = dirichlet_ratio(op.ue_spacing, op.ue_elements,
                         sin_ref[:, :, 0] - np.sin(op.zeta3)[:, None])
    t_aligned = op.t3[:, None] * b3
    denom = np.abs(m_aligned) ** 2 + np.abs(t_aligned) ** 2
    with np.errstate(divide="ignore"):
        return np.where(denom > 0.0, q_diag[:, None] / denom, np.inf)


def hungarian(weights: np.ndarray) -> AssignmentMap:
    """Minimum-total-weight injective UE -> surface assignment.

    Rectangular instances (K < N) are supported directly; infinite weights
    mark forbidden pairs.
    """
    weights = np.asarray(weights, dtype=float)
    k, n = weights.shape
    if k > n:
        raise ValueError(f"need at least as many surfaces as UEs; got K={k}, N={n}")
    try:
        rows, cols = linear_sum_assignment(weights)
    except ValueError as exc:
        raise NoFeasibleAssignmentError(str(exc)) from exc
    order = np.argsort(rows)
    return AssignmentMap(irs_for_ue=tuple(int(c) for c in cols[order]))


def hop_configure(op: ChannelOperands, assignment: AssignmentMap) -> ControlVector:
    """Closed-form controls realizing an assignment.

    Each assigned surface rotates to zero the LoS misalignment of its UE and
    the UE points back at the surface; assigned surface phases rotate the
    surface path onto the wall path's phase at the UE so the two add
    constructively (zero when there is no wall).  Unassigned surfaces keep
    zero rotation and phase.
    """
    n, k = op.n_irs, op.n_ues
    if len(assignment.irs_for_ue) != k or max(assignment.irs_for_ue) >= n:
        raise ValueError("assignment does not match the scene dimensions")
    delta = np.zeros(n)
    alpha = np.zeros(k)
    for ue, surf in enumerate(assignment.irs_for_ue):
        delta[surf] = 0.5 * (op.phi1[surf] - op.phi2[ue, surf, 0])
        alpha[ue] = op.zeta[ue, surf, 0]
    psi = np.zeros(n)
    if np.any(np.abs(op.t3) > 0.0):
        ev = evaluate_channel(op, delta, psi, alpha, order=0)
        for ue, surf in enumerate(assignment.irs_for_ue):
            if abs(ev.t[ue]) > 0.0 and abs(ev.m[ue, surf]) > 0.0:
                psi[surf] = np.mod(np.angle(ev.t[ue]) - np.angle(ev.m[ue, surf]),
                                   2.0 * np.pi)
    return ControlVector(delta=delta, psi=psi, alpha=alpha)


def heuristic_optimize(scene: Scene, realization: Optional[ChannelRealization] = None,
                       q_diag: Optional[np.ndarray] = None,
                       operands: Optional[ChannelOperands] = None) -> OptimResult:
    """Full assignment heuristic: weights -> assignment -> configuration."""
    t0 = time.perf_counter()
    objective = SnrObjective(scene, realization, q_diag=q_diag, operands=operands)
    weights = hop_weights(objective.op, objective.q_diag)
    assignment = hungarian(weights)
    control = hop_configure(objective.op, assignment)
    f = float(objective.value(objective.layout.pack(control)[None, :])[0])
    return OptimResult(
        control=control,
        objective=f,
        snr_db=objective.snr_db(f),
        mode="HOP",
        wall_time_s=time.perf_counter() - t0,
    )


def exhaustive_map_search(scene: Scene, realization: Optional[ChannelRealization] = None,
                          q_diag: Optional[np.ndarray] = None,
                          operands: Optional[ChannelOperands] = None,
                          budget: int = 1_000_000):
    """Best assignment by evaluating the full objective for every map.

    Reference oracle for the Hungarian route; the number of injective maps
    N!/(N-K)! must stay within ``budget``.  Returns (map, objective value).
    """
    objective = SnrObjective(scene, realization, q_diag=q_diag, operands=operands)
    op = objective.op
    n, k = op.n_irs, op.n_ues
    count = math.perm(n, k)
    if count > budget:
        raise ValueError(f"{count} candidate maps exceed the budget of {budget}")
    packed = np.empty((count, objective.layout.dim))
    maps = []
    for i, perm in enumerate(itertools.permutations(range(n), k)):
        maps.append(perm)
        packed[i] = objective.layout.pack(hop_configure(op, AssignmentMap(perm)))
    f = objective.value(packed)
    best = int(np.argmin(np.where(np.isfinite(f), f, np.inf)))
    return AssignmentMap(maps[best]), float(f[best])


# --- two-user optimality oracle -----------------------------------------------


@dataclass(frozen=True)
class Prop2Result:
    """Grid certification of the 2x2 assignment-optimality claim."""

    conclusive: bool
    assignment: Optional[AssignmentMap]
    corner_values: tuple
    grid_max: float
    certified: bool


def prop2_oracle(mu: np.ndarray, grid_points: int = 512) -> Prop2Result:
    """Brute-force check that the best 2x2 mixing is a pure assignment.

    ``mu`` holds the positive per-link channel magnitudes.  The reflected
    energy split of surface n between the two users is parametrized by an
    angle phi_n; the achievable objective (all energy in the useful signal
    space) is

        f = (mu11 mu22 c1 s2 - mu12 mu21 s1 c2)^2 /
            (mu11^2 c1^2 + mu21^2 s1^2 + mu12^2 c2^2 + mu22^2 s2^2)

    with c = cos(phi), s = sin(phi).  Under the dominance hypothesis
    (mu11 > mu21 and mu22 > mu12, or both reversed) the maximum over the
    grid must land on the assignment corner picked by comparing
    1/mu11^2 + 1/mu22^2 against 1/mu12^2 + 1/mu21^2.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (2, 2) or np.any(mu <= 0.0):
        raise ValueError("mu must be a positive 2 x 2 matrix")
    hypothesis = (mu[0, 0] > mu[1, 0] and mu[1, 1] > mu[0, 1]) or (
        mu[0, 0] < mu[1, 0] and mu[1, 1] < mu[0, 1]
    )

    phi = np.linspace(0.0, np.pi / 2, grid_points)
    c1, s1 = np.cos(phi)[:, None], np.sin(phi)[:, None]
    c2, s2 = np.cos(phi)[None, :], np.sin(phi)[None, :]
    num = (mu[0, 0] * mu[1, 1] * c1 * s2 - mu[0, 1] * mu[1, 0] * s1 * c2) ** 2
    den = (mu[0, 0] ** 2 * c1**2 + mu[1, 0] ** 2 * s1**2
           + mu[0, 1] ** 2 * c2**2 + mu[1, 1] ** 2 * s2**2)
    f = num / den
    grid_max = float(f.max())
    arg = np.unravel_index(int(np.argmax(f)), f.shape)

    straight = 1.0 / mu[0, 0] ** 2 + 1.0 / mu[1, 1] ** 2
    swapped = 1.0 / mu[0, 1] ** 2 + 1.0 / mu[1, 0] ** 2
    corner_values = (1.0 / straight, 1.0 / swapped)
    if not hypothesis:
        return Prop2Result(False, None, corner_values, grid_max, False)

    if straight < swapped:
        assignment = AssignmentMap((0, 1))
        corner = (0, grid_points - 1)      # (phi1, phi2) = (0, pi/2)
        expected = corner_values[0]
    else:
        assignment = AssignmentMap((1, 0))
        corner = (grid_points - 1, 0)
        expected = corner_values[1]
    certified = arg == corner and grid_max <= expected * (1.0 + 1e-9)
    return Prop2Result(True, assignment, corner_values, grid_max, certified)

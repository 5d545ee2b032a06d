"""Channel synthesis for the IRS-aided sub-THz downlink.

The end-to-end K x M1 channel is kept in factored form:

    H = M diag(e^{j psi}) V1^H + diag(T) V3^H

where ``M[k, n]`` collects every propagation path from surface ``n`` to UE
``k`` (beam misalignment enters through a sinc whose argument scales with
sqrt(area)/wavelength), ``T[k]`` is the wall bounce, and V1/V3 hold the BS
steering vectors toward the surfaces and toward the wall images of the UEs.
The factored form is what makes analytic derivatives with respect to the
control variables (surface rotations ``delta``, surface phases ``psi``, UE
beam directions ``alpha``) cheap; see :mod:`irssim.optimize`.

All evaluation routines broadcast over leading batch axes of the control
arrays, so a multi-start optimizer can evaluate hundreds of candidate
configurations in one call.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    NotIlluminatedWarning,
    Point2,
    Scene,
    wall_image_path,
    wall_reflection_coefficient,
    wrap_angle,
)

FOUR_PI = 4.0 * math.pi


# --- array responses ---------------------------------------------------------


def steering_vector(spacing_wl: float, count: int, angle: float) -> np.ndarray:
    """Unit-norm spatial signature of a ULA observed from ``angle``.

    Entry m (0-based) is (1/sqrt(M)) e^{j pi d (M-1) sin b} e^{-j 2 pi d m sin b}
    with d the element spacing in wavelengths.  Every entry has magnitude
    1/sqrt(M), so the vector has unit Euclidean norm.
    """
    if count < 1:
        raise ValueError("element count must be >= 1")
    if spacing_wl <= 0.0:
        raise ValueError("element spacing must be positive")
    m = np.arange(count)
    s = math.sin(angle)
    phase = math.pi * spacing_wl * (count - 1) * s - 2.0 * math.pi * spacing_wl * m * s
    return np.exp(1j * phase) / math.sqrt(count)


def _sinc_d1(x: np.ndarray) -> np.ndarray:
    """First derivative of sinc(x) = sin(pi x)/(pi x)."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.02
    xs = np.where(small, 1.0, x)  # avoid 0/0 in the generic branch
    generic = (np.cos(np.pi * xs) - np.sinc(xs)) / xs
    px = np.pi * x
    series = np.pi * (-px / 3.0 + px**3 / 30.0 - px**5 / 840.0)
    return np.where(small, series, generic)


def _sinc_d2(x: np.ndarray) -> np.ndarray:
    """Second derivative of sinc(x)."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.02
    xs = np.where(small, 1.0, x)
    generic = (-np.pi * np.sin(np.pi * xs) - 2.0 * _sinc_d1(xs)) / xs
    px = np.pi * x
    series = np.pi**2 * (-1.0 / 3.0 + px**2 / 10.0 - px**4 / 168.0)
    return np.where(small, series, generic)


def dirichlet_ratio(spacing_wl: float, count: int, u) -> np.ndarray:
    """Array misalignment gain sinc(d*M*u) / sinc(d*u).

    Equals the normalized Dirichlet kernel sin(pi d M u) / (M sin(pi d u)).
    Removable singularities (u = 0 and every grating point where the
    denominator sinc vanishes) evaluate to the exact limit via the finite
    cosine-sum representation.
    """
    u = np.asarray(u, dtype=float)
    if count == 1:
        return np.ones_like(u)
    den = np.sinc(spacing_wl * u)
    safe = np.abs(den) > 1e-6
    out = np.empty_like(u)
    np.divide(np.sinc(spacing_wl * count * u), den, out=out, where=safe)
    if not np.all(safe):
        out[~safe] = _dirichlet_cosine_sum(spacing_wl, count, u[~safe])
    return out


def _dirichlet_offsets(spacing_wl: float, count: int) -> np.ndarray:
    m = np.arange(count) - (count - 1) / 2.0
    return 2.0 * math.pi * spacing_wl * m


def _dirichlet_cosine_sum(spacing_wl: float, count: int, u: np.ndarray) -> np.ndarray:
    # sin(pi d M u) / (M sin(pi d u)) == mean_m cos(w_m u); exact everywhere.
    w = _dirichlet_offsets(spacing_wl, count)
    return np.mean(np.cos(np.multiply.outer(u, w)), axis=-1)


def dirichlet_derivs(spacing_wl: float, count: int, u):
    """Value and first two derivatives of :func:`dirichlet_ratio` w.r.t. u.

    Uses the cosine-sum form, which is smooth through every removable
    singularity; intended for small element counts (UE arrays).
    """
    u = np.asarray(u, dtype=float)
    w = _dirichlet_offsets(spacing_wl, count)
    arg = np.multiply.outer(u, w)
    c = np.cos(arg)
    s = np.sin(arg)
    b0 = np.mean(c, axis=-1)
    b1 = -np.mean(s * w, axis=-1)
    b2 = -np.mean(c * w**2, axis=-1)
    return b0, b1, b2


# --- rotation / misalignment mapping ----------------------------------------


def rotation_to_gradient(phi1: float, delta) -> np.ndarray:
    """Phase-gradient parameter producing electronic rotation ``delta``.

    ``phi1`` is the arrival angle of the feeding signal at the surface; the
    reflected beam leaves at phi1 - 2*delta.
    """
    return np.sin(phi1) - np.sin(phi1 - 2.0 * np.asarray(delta, dtype=float))


def misalignment(phi1, phi2, delta) -> np.ndarray:
    """Beam pointing error s = sin(phi1 - 2 delta) - sin(phi2)."""
    return np.sin(np.asarray(phi1, dtype=float) - 2.0 * np.asarray(delta, dtype=float)) - np.sin(
        np.asarray(phi2, dtype=float)
    )


# --- per-path gains -----------------------------------------------------------


def _propagation_factor(distance: float, wavelength: float, absorption: float) -> complex:
    return np.exp(-1j * 2.0 * math.pi * distance / wavelength) * math.exp(-absorption * distance)


def path_gain_bs_irs(scene: Scene, n: int) -> complex:
    """LoS gain from the BS array to surface ``n`` (unfaded)."""
    from .geometry import los_path

    irs = scene.irs[n]
    path = los_path(scene.bs, irs)
    phi1 = path.arrival
    if not path.arrival_front:
        warnings.warn(
            f"surface {n} is not illuminated by the BS; gain zeroed",
            NotIlluminatedWarning,
            stacklevel=2,
        )
        return 0.0j
    r = scene.radio
    amp = math.sqrt(scene.bs.elements * irs.area_m2 * math.cos(phi1) / FOUR_PI) / path.length
    return amp * _propagation_factor(path.length, r.wavelength_m, r.absorption_per_m)


def path_gain_irs_ue(scene: Scene, realization: "ChannelRealization", k: int, n: int, p: int) -> complex:
    """Gain of path ``p`` from surface ``n`` to UE ``k`` (p = 0 is LoS).

    Excludes the large-scale fading draw, which multiplies separately.
    """
    from .geometry import los_path, reflector_path

    irs = scene.irs[n]
    ue = scene.ues[k].at(Point2(*realization.ue_positions[k]))
    if p == 0:
        path = los_path(irs, ue)
        rho = 1.0 + 0.0j
    else:
        refl = Point2(*realization.reflectors[k, n, p - 1])
        path = reflector_path(irs, refl, ue)
        rho = complex(realization.reflector_coeff[k, n, p - 1])
    phi2 = path.departure
    if not path.departure_front:
        warnings.warn(
            f"UE {k} path {p} lies behind surface {n}; gain zeroed",
            NotIlluminatedWarning,
            stacklevel=2,
        )
        return 0.0j
    r = scene.radio
    amp = math.sqrt(ue.elements * irs.area_m2 * math.cos(phi2) / FOUR_PI) / path.length
    return (
        r.irs_reflection
        * rho
        * amp
        * _propagation_factor(path.length, r.wavelength_m, r.absorption_per_m)
    )


def path_gain_wall(scene: Scene, realization: "ChannelRealization", k: int) -> complex:
    """Gain of the BS -> wall -> UE bounce (zero when no wall path exists)."""
    if scene.wall is None:
        return 0.0j
    ue = scene.ues[k].at(Point2(*realization.ue_positions[k]))
    hit = wall_image_path(scene.bs, ue, scene.wall)
    if hit is None:
        return 0.0j
    path, incidence = hit
    r = scene.radio
    rho = wall_reflection_coefficient(scene.wall.material, incidence)
    amp = math.sqrt(ue.elements * scene.bs.elements * r.wavelength_m**2) / (FOUR_PI * path.length)
    return rho * amp * _propagation_factor(path.length, r.wavelength_m, r.absorption_per_m)


# --- random realization -------------------------------------------------------


@dataclass(frozen=True)
class ChannelRealization:
    """One random draw: UE positions, reflector points, fading coefficients.

    Shapes: ``ue_positions`` (K, 2); ``reflectors`` (K, N, P, 2);
    ``shadow_paths`` (K, N, P+1) amplitude multipliers (entry 0 is the LoS
    path); ``reflector_coeff`` (K, N, P) complex; ``shadow_wall`` (K,).
    """

    ue_positions: np.ndarray
    reflectors: np.ndarray
    shadow_paths: np.ndarray
    reflector_coeff: np.ndarray
    shadow_wall: np.ndarray
    shadow_bs: Optional[np.ndarray] = None   # (N,); None = unfaded BS legs

    def __post_init__(self) -> None:
        if np.any(self.shadow_paths <= 0.0) or np.any(self.shadow_wall <= 0.0):
            raise ValueError("shadowing amplitudes must be positive")
        if self.shadow_bs is not None and np.any(self.shadow_bs <= 0.0):
            raise ValueError("shadowing amplitudes must be positive")
        if self.reflector_coeff.size and np.any(np.abs(self.reflector_coeff) > 1.0 + 1e-12):
            raise ValueError("reflector coefficients must have magnitude <= 1")

    @property
    def n_paths(self) -> int:
        return self.reflectors.shape[2]

    def los_only(self) -> "ChannelRealization":
        """Strip NLoS reflectors, keeping positions and LoS shadowing."""
        k, n = self.shadow_paths.shape[:2]
        return replace(
            self,
            reflectors=np.zeros((k, n, 0, 2)),
            shadow_paths=self.shadow_paths[:, :, :1].copy(),
            reflector_coeff=np.zeros((k, n, 0), dtype=complex),
        )

    @classmethod
    def fixed(cls, scene: Scene) -> "ChannelRealization":
        """Deterministic draw at the nominal UE positions, no multipath."""
        k, n = scene.n_ues, scene.n_irs
        pos = np.array([[ue.position.x, ue.position.y] for ue in scene.ues])
        return cls(
            ue_positions=pos,
            reflectors=np.zeros((k, n, 0, 2)),
            shadow_paths=np.ones((k, n, 1)),
            reflector_coeff=np.zeros((k, n, 0), dtype=complex),
            shadow_wall=np.ones(k),
        )


# --- precomputed per-trial factors -------------------------------------------


@dataclass(frozen=True)
class ChannelOperands:
    """Everything about one (scene, realization) pair that the control
    variables cannot change; built once per trial and reused across every
    candidate configuration the optimizer tries."""

    c1: np.ndarray          # (N,) BS->surface gains
    phi1: np.ndarray        # (N,) arrival angle at each surface
    v1: np.ndarray          # (M1, N) BS steering toward surfaces
    cg: np.ndarray          # (K, N, P+1) c1 * shadow * surface->UE gains
    phi2: np.ndarray        # (K, N, P+1) departure angles at the surfaces
    zeta: np.ndarray        # (K, N, P+1) arrival angles at the UEs
    t3: np.ndarray          # (K,) shadowed wall gains (0 without a wall)
    zeta3: np.ndarray       # (K,) wall-bounce arrival angles at the UEs
    v3: np.ndarray          # (M1, K) BS steering toward the UE wall images
    kappa: np.ndarray       # (N,) sqrt(area)/wavelength sinc scale
    ue_spacing: float
    ue_elements: int

    @property
    def n_ues(self) -> int:
        return self.cg.shape[0]

    @property
    def n_irs(self) -> int:
        return self.cg.shape[1]

    @property
    def bs_elements(self) -> int:
        return self.v1.shape[0]

    @classmethod
    def build(cls, scene: Scene, realization: ChannelRealization) -> "ChannelOperands":
        return build_operands(scene, realization)


def build_operands(scene: Scene, realization: ChannelRealization) -> ChannelOperands:
    """Compute all control-independent channel factors for one trial."""
    r = scene.radio
    lam, kap = r.wavelength_m, r.absorption_per_m
    n_irs, n_ues = scene.n_irs, scene.n_ues
    p_paths = realization.n_paths

    centers = np.array([[s.center.x, s.center.y] for s in scene.irs])      # (N,2)
    normals = np.array([s.normal for s in scene.irs])                      # (N,)
    areas = np.array([s.area_m2 for s in scene.irs])                       # (N,)
    ue_pos = np.asarray(realization.ue_positions, dtype=float)             # (K,2)
    ue_axes = np.array([u.boresight for u in scene.ues])                   # (K,)
    bs = scene.bs.position.as_array()

    # BS -> surface LoS legs.
    vec = centers - bs[None, :]                                            # (N,2)
    d1 = np.linalg.norm(vec, axis=1)
    beta1 = _wrap(np.arctan2(vec[:, 1], vec[:, 0]) - scene.bs.boresight)
    phi1 = _wrap(np.arctan2(-vec[:, 1], -vec[:, 0]) - normals)
    lit = np.abs(phi1) < math.pi / 2
    if not np.all(lit):
        warnings.warn("some surfaces are behind the BS; their gains are zeroed",
                      NotIlluminatedWarning, stacklevel=2)
    c1 = np.where(
        lit,
        np.sqrt(scene.bs.elements * areas * np.abs(np.cos(phi1)) / FOUR_PI) / d1
        * np.exp(-1j * 2 * np.pi * d1 / lam - kap * d1),
        0.0,
    )
    if realization.shadow_bs is not None:
        c1 = c1 * realization.shadow_bs
    v1 = np.stack(
        [steering_vector(scene.bs.spacing_wl, scene.bs.elements, b) for b in beta1], axis=1
    )

    # Surface -> UE paths: LoS plus P point reflectors per (k, n) link.
    m2 = scene.ues[0].elements
    d2s = scene.ues[0].spacing_wl
    sep = ue_pos[:, None, :] - centers[None, :, :]                         # (K,N,2)
    d_los = np.linalg.norm(sep, axis=-1)
    phi2_los = _wrap(np.arctan2(sep[..., 1], sep[..., 0]) - normals[None, :])
    zeta_los = _wrap(np.arctan2(-sep[..., 1], -sep[..., 0]) - ue_axes[:, None])

    phi2 = np.empty((n_ues, n_irs, p_paths + 1))
    zeta = np.empty((n_ues, n_irs, p_paths + 1))
    dist = np.empty((n_ues, n_irs, p_paths + 1))
    rho = np.ones((n_ues, n_irs, p_paths + 1), dtype=complex)
    phi2[..., 0], zeta[..., 0], dist[..., 0] = phi2_los, zeta_los, d_los
    if p_paths:
        refl = np.asarray(realization.reflectors, dtype=float)             # (K,N,P,2)
        leg1 = refl - centers[None, :, None, :]
        leg2 = ue_pos[:, None, None, :] - refl
        d_a = np.linalg.norm(leg1, axis=-1)
        d_b = np.linalg.norm(leg2, axis=-1)
        phi2[..., 1:] = _wrap(np.arctan2(leg1[..., 1], leg1[..., 0]) - normals[None, :, None])
        zeta[..., 1:] = _wrap(
            np.arctan2(-leg2[..., 1], -leg2[..., 0]) - ue_axes[:, None, None]
        )
        dist[..., 1:] = d_a + d_b
        rho[..., 1:] = realization.reflector_coeff

    front = np.abs(phi2) < math.pi / 2
    if not np.all(front):
        warnings.warn("some surface->UE paths leave behind the surface; gains zeroed",
                      NotIlluminatedWarning, stacklevel=2)
    c2 = np.where(
        front,
        r.irs_reflection * rho
        * np.sqrt(m2 * areas[None, :, None] * np.abs(np.cos(phi2)) / FOUR_PI) / dist
        * np.exp(-1j * 2 * np.pi * dist / lam - kap * dist),
        0.0,
    )
    cg = c1[None, :, None] * realization.shadow_paths * c2

    # Wall bounce, via the image construction.
    t3 = np.zeros(n_ues, dtype=complex)
    zeta3 = np.zeros(n_ues)
    beta3 = np.zeros(n_ues)
    if scene.wall is not None:
        for k in range(n_ues):
            ue = scene.ues[k].at(Point2(*ue_pos[k]))
            hit = wall_image_path(scene.bs, ue, scene.wall)
            if hit is None:
                continue
            path, incidence = hit
            rho_w = wall_reflection_coefficient(scene.wall.material, incidence)
            amp = math.sqrt(m2 * scene.bs.elements * lam**2) / (FOUR_PI * path.length)
            t3[k] = (
                realization.shadow_wall[k]
                * rho_w
                * amp
                * np.exp(-1j * 2 * np.pi * path.length / lam - kap * path.length)
            )
            zeta3[k] = path.arrival
            beta3[k] = path.departure
    v3 = np.stack(
        [steering_vector(scene.bs.spacing_wl, scene.bs.elements, b) for b in beta3], axis=1
    )

    return ChannelOperands(
        c1=c1, phi1=phi1, v1=v1, cg=cg, phi2=phi2, zeta=zeta,
        t3=t3, zeta3=zeta3, v3=v3, kappa=np.sqrt(areas) / lam,
        ue_spacing=d2s, ue_elements=m2,
    )


def _wrap(a: np.ndarray) -> np.ndarray:
    return np.mod(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi


# --- channel evaluation (batched, with optional derivatives) ------------------


class ChannelEval:
    """Channel value and, when requested, its derivative ingredients.

    Attributes are arrays with the control batch shape in front:
    ``h`` (..., K, M1); ``m`` (..., K, N); ``t`` (..., K).  Derivative blocks
    (orders 1 and 2) follow the same layout; mixed blocks vanish except where
    a variable actually enters the corresponding factor.
    """

    __slots__ = (
        "h", "m", "t", "psi_phase",
        "dm_ddelta", "dm_dalpha", "dt_dalpha",
        "d2m_ddelta2", "d2m_dalpha2", "d2m_ddelta_dalpha", "d2t_dalpha2",
    )

    def __init__(self, **kw) -> None:
        for name in self.__slots__:
            setattr(self, name, kw.get(name))


def evaluate_channel(op: ChannelOperands, delta, psi, alpha, order: int = 0) -> ChannelEval:
    """Assemble H (and derivatives up to ``order``) at the given controls.

    ``delta``/``psi`` broadcast as (..., N) and ``alpha`` as (..., K); the
    returned arrays share the leading batch shape.
    """
    delta = np.asarray(delta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)

    ang = op.phi1 - 2.0 * delta                       # (...,N)
    e1 = np.sin(ang)
    s = e1[..., None, :, None] - np.sin(op.phi2)      # (...,K,N,P+1)
    x = op.kappa[:, None] * s
    s0 = np.sinc(x)

    u = np.sin(alpha)[..., :, None, None] - np.sin(op.zeta)
    if order == 0:
        b0 = dirichlet_ratio(op.ue_spacing, op.ue_elements, u)
    else:
        b0, b1, b2 = dirichlet_derivs(op.ue_spacing, op.ue_elements, u)

    m = np.sum(op.cg * b0 * s0, axis=-1)              # (...,K,N)

    u3 = np.sin(alpha) - np.sin(op.zeta3)             # (...,K)
    if order == 0:
        b30 = dirichlet_ratio(op.ue_spacing, op.ue_elements, u3)
    else:
        b30, b31, b32 = dirichlet_derivs(op.ue_spacing, op.ue_elements, u3)
    t = op.t3 * b30

    psi_phase = np.exp(1j * psi)
    h = np.matmul(m * psi_phase[..., None, :], op.v1.conj().T)
    h = h + t[..., :, None] * op.v3.conj().T

    out = ChannelEval(h=h, m=m, t=t, psi_phase=psi_phase)
    if order == 0:
        return out

    s_d = -2.0 * np.cos(ang)                          # ds/ddelta, (...,N)
    s_dd = -4.0 * np.sin(ang)
    sdb = s_d[..., None, :, None]
    s1 = op.kappa[:, None] * _sinc_d1(x)
    u_a = np.cos(alpha)[..., :, None, None]
    out.dm_ddelta = np.sum(op.cg * b0 * s1 * sdb, axis=-1)
    out.dm_dalpha = np.sum(op.cg * b1 * s0 * u_a, axis=-1)
    out.dt_dalpha = op.t3 * b31 * np.cos(alpha)
    if order == 1:
        return out

    s2 = op.kappa[:, None] ** 2 * _sinc_d2(x)
    sddb = s_dd[..., None, :, None]
    u_aa = -np.sin(alpha)[..., :, None, None]
    out.d2m_ddelta2 = np.sum(op.cg * b0 * (s2 * sdb**2 + s1 * sddb), axis=-1)
    out.d2m_dalpha2 = np.sum(op.cg * s0 * (b2 * u_a**2 + b1 * u_aa), axis=-1)
    out.d2m_ddelta_dalpha = np.sum(op.cg * b1 * s1 * sdb * u_a, axis=-1)
    out.d2t_dalpha2 = op.t3 * (b32 * np.cos(alpha) ** 2 - b31 * np.sin(alpha))
    return out


# --- public factored channel ---------------------------------------------------


@dataclass(frozen=True)
class AsymptoticChannel:
    """Factored infinite-grid channel H = M diag(e^{j psi}) V1^H + diag(T) V3^H."""

    m_matrix: np.ndarray    # (K, N)
    t_diag: np.ndarray      # (K,)
    v1: np.ndarray          # (M1, N)
    v3: np.ndarray          # (M1, K)
    psi: np.ndarray         # (N,)

    @property
    def h(self) -> np.ndarray:
        return (self.m_matrix * np.exp(1j * self.psi)) @ self.v1.conj().T + (
            self.t_diag[:, None] * self.v3.conj().T
        )


def asymptotic_channel(scene: Scene, realization: ChannelRealization, delta, psi, alpha,
                       operands: Optional[ChannelOperands] = None) -> AsymptoticChannel:
    """Infinite-grid channel at the given controls, kept in factored form."""
    op = operands if operands is not None else build_operands(scene, realization)
    delta = np.asarray(delta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if delta.shape != (op.n_irs,) or psi.shape != (op.n_irs,) or alpha.shape != (op.n_ues,):
        raise ValueError(
            f"control sizes must be (N={op.n_irs}, N, K={op.n_ues}); got "
            f"{delta.shape}, {psi.shape}, {alpha.shape}"
        )
    ev = evaluate_channel(op, delta, psi, alpha)
    return AsymptoticChannel(m_matrix=ev.m, t_diag=ev.t, v1=op.v1, v3=op.v3, psi=psi)


# --- finite meta-atom grids and phase quantization ----------------------------


def phase_profile(gradient: float, psi: float, grid: int, spacing_wl: float) -> np.ndarray:
    """Per-column phase pattern implementing a linear gradient plus offset.

    Column ``l`` (0-based) gets 2*pi*g*d*(l - (L-1)/2) + psi; every row of the
    square grid repeats the same profile.
    """
    cols = np.arange(grid) - (grid - 1) / 2.0
    return 2.0 * math.pi * gradient * spacing_wl * cols + psi


def quantize_phases(theta: np.ndarray, bits: int) -> np.ndarray:
    """Snap phases to the nearest of the 2**bits levels {2 pi i / 2**bits}."""
    if bits < 1:
        raise ValueError("need at least one control bit")
    levels = 2**bits
    step = 2.0 * math.pi / levels
    idx = np.mod(np.rint(np.asarray(theta, dtype=float) / step), levels)
    return idx * step


def _column_inner(spacing_wl: float, grid: int, w: float, theta: np.ndarray) -> complex:
    # (1/L) e^{j pi d (L-1) w} sum_l e^{j(theta_l - 2 pi d l w)}; reduces to
    # e^{j psi} * dirichlet_ratio for an unquantized linear profile.
    cols = np.arange(grid)
    phase = theta - 2.0 * math.pi * spacing_wl * cols * w
    return np.exp(1j * math.pi * spacing_wl * (grid - 1) * w) * np.mean(np.exp(1j * phase))


def finite_channel_row(scene: Scene, realization: ChannelRealization, delta, psi, alpha,
                       k: int, grids: Sequence[int], method: str = "closed",
                       bits: Optional[int] = None,
                       operands: Optional[ChannelOperands] = None) -> np.ndarray:
    """Row k of the finite-grid channel after UE beamforming, shape (M1,).

    ``grids[n]`` is the per-surface grid side L; the meta-atom pitch is
    recovered as sqrt(area)/(L*wavelength) so the surface area is invariant
    as the grid refines.  ``method`` selects the closed-form Dirichlet-ratio
    evaluation or the explicit per-meta-atom matrix product (slow; meant for
    cross-checks with small L).  With ``bits`` set, the per-column phases are
    quantized before evaluation (closed path only).
    """
    grids = list(grids)
    if len(grids) != scene.n_irs or any(g < 1 for g in grids):
        raise ValueError("need one grid side >= 1 per surface")
    if method == "explicit":
        if bits is not None:
            raise ValueError("explicit method does not support quantization")
        return _explicit_row(scene, realization, delta, psi, alpha, k, grids)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")

    op = operands if operands is not None else build_operands(scene, realization)
    delta = np.asarray(delta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    lam = scene.radio.wavelength_m

    u = np.sin(alpha[k]) - np.sin(op.zeta[k])          # (N,P+1)
    b = dirichlet_ratio(op.ue_spacing, op.ue_elements, u)
    row = np.zeros(op.bs_elements, dtype=complex)
    for n in range(scene.n_irs):
        grid = grids[n]
        spacing = scene.irs[n].grid_spacing_wl(grid, lam)
        s = misalignment(op.phi1[n], op.phi2[k, n], delta[n])   # (P+1,)
        if bits is None:
            inner = np.exp(1j * psi[n]) * dirichlet_ratio(spacing, grid, s)
        else:
            g = float(rotation_to_gradient(op.phi1[n], delta[n]))
            theta = quantize_phases(phase_profile(g, psi[n], grid, spacing), bits)
            w = np.sin(op.phi1[n]) - np.sin(op.phi2[k, n])
            inner = np.array([_column_inner(spacing, grid, wp, theta) for wp in w])
        coeff = np.sum(op.cg[k, n] * b[n] * inner)
        row += coeff * op.v1[:, n].conj()
    b3 = dirichlet_ratio(op.ue_spacing, op.ue_elements, np.sin(alpha[k]) - np.sin(op.zeta3[k]))
    row += op.t3[k] * b3 * op.v3[:, k].conj()
    return row


def quantized_channel_matrix(scene: Scene, realization: ChannelRealization, delta, psi, alpha,
                             grids: Sequence[int], bits: int,
                             operands: Optional[ChannelOperands] = None) -> np.ndarray:
    """Finite-grid channel (K, M1) with ``bits``-bit phase shifters."""
    op = operands if operands is not None else build_operands(scene, realization)
    rows = [
        finite_channel_row(scene, realization, delta, psi, alpha, k, grids,
                           bits=bits, operands=op)
        for k in range(scene.n_ues)
    ]
    return np.stack(rows, axis=0)


def _explicit_row(scene: Scene, realization: ChannelRealization, delta, psi, alpha,
                  k: int, grids: Sequence[int]) -> np.ndarray:
    """Reference evaluation with per-meta-atom matrices (O(L^2) memory)."""
    op = build_operands(scene, realization)
    lam = scene.radio.wavelength_m
    delta = np.asarray(delta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    f_k = steering_vector(op.ue_spacing, op.ue_elements, alpha[k])

    total = np.zeros((op.ue_elements, op.bs_elements), dtype=complex)
    for n in range(scene.n_irs):
        grid = grids[n]
        spacing = scene.irs[n].grid_spacing_wl(grid, lam)
        ones = np.ones(grid)
        u1 = np.kron(ones, steering_vector(spacing, grid, op.phi1[n])) / math.sqrt(grid)
        h1 = op.c1[n] * np.outer(u1, op.v1[:, n].conj())
        g = float(rotation_to_gradient(op.phi1[n], delta[n]))
        theta = phase_profile(g, psi[n], grid, spacing)
        big_theta = np.tile(np.exp(1j * theta), grid)
        h2 = np.zeros((op.ue_elements, grid * grid), dtype=complex)
        for p in range(realization.n_paths + 1):
            u2 = np.kron(ones, steering_vector(spacing, grid, op.phi2[k, n, p])) / math.sqrt(grid)
            w2 = steering_vector(op.ue_spacing, op.ue_elements, op.zeta[k, n, p])
            # cg already folds c1 in; divide it back out for the hop matrix
            h2 += (op.cg[k, n, p] / op.c1[n]) * np.outer(w2, u2.conj())
        total += h2 @ (big_theta[:, None] * h1)
    w3 = steering_vector(op.ue_spacing, op.ue_elements, op.zeta3[k])
    total += op.t3[k] * np.outer(w3, op.v3[:, k].conj())
    return f_k.conj() @ total


def irs_radiation_pattern(scene: Scene, n: int, delta: float, angles) -> np.ndarray:
    """Normalized reflected power of surface ``n`` versus departure angle.

    Proportional to cos(phi) * sinc^2(kappa * (sin(phi1 - 2 delta) - sin(phi)))
    with the BS as the feed; normalized to unit peak over the grid.
    """
    from .geometry import los_path

    angles = np.asarray(angles, dtype=float)
    if np.any(np.abs(angles) >= math.pi / 2):
        raise ValueError("pattern angles must lie inside (-pi/2, pi/2)")
    phi1 = los_path(scene.bs, scene.irs[n]).arrival
    kappa = math.sqrt(scene.irs[n].area_m2) / scene.radio.wavelength_m
    gain = np.cos(angles) * np.sinc(kappa * (math.sin(phi1 - 2.0 * delta) - np.sin(angles))) ** 2
    peak = gain.max()
    return gain / peak if peak > 0 else gain

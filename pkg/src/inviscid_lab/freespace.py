"""Whole-plane velocity machinery on a truncated, padded box.

The plane is truncated to a box [-L/2, L/2)^2 with zero-padded discrete
convolutions (pad factor 2, so every pairwise offset between box cells is
sampled exactly and the linear convolution has no wrap contamination).
Only zero-mean data are meant to be evolved here: their velocity decays
like |x|^-2, so the tail neglected at the boundary is negligible for the
box margins enforced below.

The Biot-Savart kernel is K(x) = (1/2pi) (-x2, x1)/|x|^2, oriented so that
``curl(K * w) = w`` matches the torus convention.  The kernel is split by a
radial C^2 cutoff ``a`` (1 inside r1, 0 outside r2) into an integrable near
part aK and a smooth far part (1-a)K; the far part's second derivatives and
Laplacian are sampled from closed forms.  The matrix kernel stored for the
velocity-update identity is ``D^i_{kj} = d_k (perp-grad (1-a)K_i)_j`` with
perp-grad = (-d2, d1), the orientation for which ``f * curl v`` equals the
star-convolution of perp-grad f with v.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .errors import (
    BadCutoff,
    CflViolation,
    HistoryGap,
    ShapeMismatch,
    SupportViolation,
)

TWO_PI = 2.0 * np.pi
_KC = 1.0 / TWO_PI


@dataclass(frozen=True)
class PaddedGrid:
    """Square box [-L/2, L/2)^2 sampled on n x n cells, padded for convolution.

    Fields evolved here must be supported in the ball of radius L/4 (with
    their own margin), matching the compact-support hypothesis at finite
    truncation.
    """

    n: int
    box: float
    pad_factor: int = 2

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if self.box <= 0:
            raise ValueError("box size must be positive")
        if self.pad_factor < 2:
            raise ValueError("pad factor must be >= 2 for aperiodic convolution")
        n, L = self.n, self.box
        h = L / n
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "cell_area", h * h)
        object.__setattr__(self, "padded_n", self.pad_factor * n)
        x = -L / 2.0 + h * np.arange(n)
        object.__setattr__(self, "axis", x)
        # box-periodic spectral multipliers for the interior dynamics
        k1 = np.fft.fftfreq(n, d=1.0 / n)
        dk = k1.copy()
        dk[n // 2] = 0.0
        k1r = k1[: n // 2 + 1]
        dkr = dk[: n // 2 + 1]
        rkx, rky = np.meshgrid(dk, dkr, indexing="ij")
        fkx, fky = np.meshgrid(k1, k1r, indexing="ij")
        rk2 = fkx * fkx + fky * fky
        cut = n / 3.0
        for name, arr in (
            ("rgrad1_mult", TWO_PI / L * 1j * rkx),
            ("rgrad2_mult", TWO_PI / L * 1j * rky),
            ("rlap_mult", -((TWO_PI / L) ** 2) * rk2),
            ("rdealias_mask", (np.abs(fkx) <= cut) & (np.abs(fky) <= cut)),
        ):
            if hasattr(arr, "setflags"):
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def mesh(self):
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    def offsets(self):
        """Pairwise-offset coordinates in circular (fftfreq) layout."""
        off = np.fft.fftfreq(self.padded_n, d=1.0 / self.padded_n) * self.spacing
        return np.meshgrid(off, off, indexing="ij")

    @property
    def safe_radius(self) -> float:
        return self.box / 4.0


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


class FreeField:
    """Real scalar field on a :class:`PaddedGrid` (compact support assumed)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: PaddedGrid, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (grid.n, grid.n):
            raise ValueError(f"values shape {values.shape} != ({grid.n}, {grid.n})")
        self.grid = grid
        self.values = _freeze(values)

    def lp(self, p) -> float:
        a = np.abs(self.values)
        if p == np.inf:
            return float(np.max(a))
        return float((np.sum(a**p) * self.grid.cell_area) ** (1.0 / p))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_area)


@dataclass(frozen=True)
class FreeVelocity:
    u1: FreeField
    u2: FreeField

    @property
    def grid(self):
        return self.u1.grid

    def l2_sq(self) -> float:
        return self.u1.lp(2) ** 2 + self.u2.lp(2) ** 2

    def max_speed(self) -> float:
        return float(np.sqrt(np.max(self.u1.values**2 + self.u2.values**2)))


def support_check(f: FreeField, rel_tol: float = 1e-12):
    """Raise unless the field mass is carried inside the safe ball B_{L/4}."""
    x1, x2 = f.grid.mesh()
    outside = x1 * x1 + x2 * x2 > f.grid.safe_radius**2
    total = np.sum(np.abs(f.values))
    if total > 0 and np.sum(np.abs(f.values[outside])) > rel_tol * total:
        raise SupportViolation(
            f"field carries mass outside |x| < {f.grid.safe_radius} "
            f"(box margin invariant 2R < L/2)")


# ---------------------------------------------------------------------------
# convolution plumbing


def pad_field(values, grid: PaddedGrid):
    P = grid.padded_n
    out = np.zeros((P, P))
    out[: grid.n, : grid.n] = values
    return out


def as_kernel_layout(values, grid: PaddedGrid):
    """Embed a box field into the circular offset layout used for kernels."""
    return np.roll(pad_field(values, grid), (-(grid.n // 2), -(grid.n // 2)), axis=(0, 1))


def kernel_fft(kernel_layout, grid: PaddedGrid):
    return np.fft.rfft2(kernel_layout)


def convolve_fft(khat, values, grid: PaddedGrid):
    """Linear convolution (kernel given by its padded FFT) times cell area."""
    P = grid.padded_n
    fhat = np.fft.rfft2(pad_field(values, grid))
    out = np.fft.irfft2(khat * fhat, s=(P, P))
    return out[: grid.n, : grid.n] * grid.cell_area


# ---------------------------------------------------------------------------
# analytic kernel family


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def _smoothstep_d1(x):
    y = np.where((x > 0.0) & (x < 1.0), x, 0.0)
    return np.where((x > 0.0) & (x < 1.0), 30.0 * y**2 * (1.0 - y) ** 2, 0.0)


def _smoothstep_d2(x):
    y = np.where((x > 0.0) & (x < 1.0), x, 0.0)
    return np.where((x > 0.0) & (x < 1.0), 60.0 * y * (1.0 - y) * (1.0 - 2.0 * y), 0.0)


def _bump(rho, r1, r2):
    """Radial cutoff a(rho): 1 inside r1, 0 outside r2, C^2 in between."""
    d = r2 - r1
    s = (rho - r1) / d
    return 1.0 - _smoothstep(s), -_smoothstep_d1(s) / d, -_smoothstep_d2(s) / d**2


def _kernel_samples(grid: PaddedGrid, r1: float, r2: float):
    """Sample all kernel pieces on the padded offset grid.

    Returns a dict with 'near' (2,P,P), 'far' (2,P,P), 'dd' (2,2,2,P,P),
    'lap' (2,P,P).  The origin cell of the near kernel is zero: the cell
    average of the odd kernel K over a centered cell vanishes exactly.
    """
    y1, y2 = grid.offsets()
    rho2 = y1 * y1 + y2 * y2
    origin = rho2 == 0.0
    rho2s = np.where(origin, 1.0, rho2)
    rho = np.sqrt(rho2s)
    k1 = -_KC * y2 / rho2s
    k2 = _KC * y1 / rho2s
    k1[origin] = 0.0
    k2[origin] = 0.0
    a, a1, a2 = _bump(rho, r1, r2)
    a = np.where(origin, 1.0, a)

    near = np.stack([a * k1, a * k2])
    far = np.stack([(1.0 - a) * k1, (1.0 - a) * k2])

    # first and second derivatives of K away from the origin
    r4 = rho2s * rho2s
    r6 = r4 * rho2s
    dk = np.empty((2, 2) + y1.shape)  # dk[i, k] = d_k K_i
    dk[0, 0] = 2.0 * _KC * y1 * y2 / r4
    dk[0, 1] = _KC * (y2 * y2 - y1 * y1) / r4
    dk[1, 0] = dk[0, 1]
    dk[1, 1] = -dk[0, 0]
    hk = np.empty((2, 2, 2) + y1.shape)  # hk[i, k, j] = d_k d_j K_i
    hk[1, 0, 0] = _KC * 2.0 * y1 * (y1 * y1 - 3.0 * y2 * y2) / r6
    hk[1, 0, 1] = _KC * 2.0 * y2 * (3.0 * y1 * y1 - y2 * y2) / r6
    hk[1, 1, 0] = hk[1, 0, 1]
    hk[1, 1, 1] = -hk[1, 0, 0]
    hk[0, 0, 0] = -_KC * 2.0 * y2 * (3.0 * y1 * y1 - y2 * y2) / r6
    hk[0, 0, 1] = -_KC * 2.0 * y1 * (3.0 * y2 * y2 - y1 * y1) / r6
    hk[0, 1, 0] = hk[0, 0, 1]
    hk[0, 1, 1] = -hk[0, 0, 0]

    # Hessian of g_i = (1 - a) K_i by the product rule; a is radial
    xh = np.stack([y1 / rho, y2 / rho])
    inside = rho <= 0.5 * r1  # all far quantities vanish identically here
    kk = np.stack([k1, k2])
    hg = np.empty_like(hk)
    for i in range(2):
        for k in range(2):
            for j in range(2):
                delta = 1.0 if k == j else 0.0
                term = -(a2 * xh[k] * xh[j] + a1 / rho * (delta - xh[k] * xh[j])) * kk[i]
                term -= a1 * (xh[j] * dk[i, k] + xh[k] * dk[i, j])
                term += (1.0 - a) * hk[i, k, j]
                term[inside | origin] = 0.0
                hg[i, k, j] = term

    # D^i_{kj} = d_k (perp-grad g_i)_j with perp-grad = (-d2, d1)
    dd = np.empty_like(hk)
    for i in range(2):
        dd[i, :, 0] = -hg[i, :, 1]
        dd[i, :, 1] = hg[i, :, 0]

    # lap[(1-a) K_i] = (a'/rho - a'') K_i, supported in the transition annulus
    lap_factor = a1 / rho - a2
    lap = np.stack([lap_factor * k1, lap_factor * k2])
    lap[:, inside | origin] = 0.0
    for arr in (far,):
        arr[:, inside | origin] = 0.0
    return {"near": near, "far": far, "dd": dd, "lap": lap}


class KernelPair:
    """Near/far split of the Biot-Savart kernel with derived kernels and FFTs.

    ``near + far == K`` pointwise away from the origin cell; ``far`` vanishes
    inside r1 and ``near`` vanishes outside r2.  The ``dd`` matrix kernels
    and the far-part Laplacian feed the velocity-update identity.
    """

    def __init__(self, grid: PaddedGrid, r1: float, r2: float, samples: dict):
        self.grid = grid
        self.r1 = r1
        self.r2 = r2
        self.near = samples["near"]
        self.far = samples["far"]
        self.dd = samples["dd"]
        self.lap = samples["lap"]
        self.full = self.near + self.far
        self._fft = {}

    def fft_of(self, name: str, index=()):
        key = (name, index)
        if key not in self._fft:
            arr = getattr(self, name)
            for ix in index:
                arr = arr[ix]
            self._fft[key] = kernel_fft(arr, self.grid)
        return self._fft[key]

    def dd_l2_norms(self) -> np.ndarray:
        """Discrete L^2 (Frobenius over matrix entries) norm per component."""
        area = self.grid.cell_area
        return np.sqrt(np.sum(self.dd**2, axis=(1, 2, 3, 4)) * area)

    def lap_lq_norms(self, q: float) -> np.ndarray:
        area = self.grid.cell_area
        return (np.sum(np.abs(self.lap) ** q, axis=(1, 2)) * area) ** (1.0 / q)


def build_kernels(grid: PaddedGrid, r1: float | None = None, r2: float | None = None) -> KernelPair:
    """Construct (and optionally cache) the kernel family for a padded grid.

    Default cutoff radii are L/16 and L/8, the plateau structure rescaled to
    the box.  Requires ``r2 <= L/4`` so the split fits inside the margin.
    Set ``INVISCID_LAB_CACHE`` to a directory to reuse sampled kernels across
    runs, keyed by (n, L, r1, r2).
    """
    if r1 is None:
        r1 = grid.box / 16.0
    if r2 is None:
        r2 = grid.box / 8.0
    if not (0 < r1 < r2):
        raise BadCutoff(f"need 0 < r1 < r2, got {r1}, {r2}")
    if r2 > grid.box / 4.0 + 1e-12:
        raise BadCutoff(f"outer radius {r2} exceeds the margin bound L/4 = {grid.box / 4.0}")
    cache_root = os.environ.get("INVISCID_LAB_CACHE")
    tag = f"kern_n{grid.n}_p{grid.pad_factor}_L{grid.box:g}_r{r1:g}_{r2:g}"
    names = ["near", "far", "lap"]
    if cache_root:
        cdir = Path(cache_root) / tag
        if cdir.is_dir():
            try:
                samples = {}
                for nm in names:
                    samples[nm] = np.stack(
                        [container.read_block(cdir / f"{nm}{i}.ivlb")[0] for i in range(2)])
                dd = np.empty((2, 2, 2, grid.padded_n, grid.padded_n))
                for i in range(2):
                    for k in range(2):
                        for j in range(2):
                            dd[i, k, j] = container.read_block(cdir / f"dd{i}{k}{j}.ivlb")[0]
                samples["dd"] = dd
                return KernelPair(grid, r1, r2, samples)
            except Exception:
                pass  # fall through and rebuild
    samples = _kernel_samples(grid, r1, r2)
    if cache_root:
        cdir = Path(cache_root) / tag
        cdir.mkdir(parents=True, exist_ok=True)
        for nm in names:
            for i in range(2):
                container.write_block(cdir / f"{nm}{i}.ivlb", samples[nm][i], kind="kernel")
        for i in range(2):
            for k in range(2):
                for j in range(2):
                    container.write_block(cdir / f"dd{i}{k}{j}.ivlb", samples["dd"][i, k, j],
                                          kind="kernel")
    return KernelPair(grid, r1, r2, samples)


_bs_cache: dict = {}


def _bs_kernel_ffts(grid: PaddedGrid):
    key = (grid.n, grid.box, grid.pad_factor)
    if key not in _bs_cache:
        y1, y2 = grid.offsets()
        rho2 = y1 * y1 + y2 * y2
        origin = rho2 == 0.0
        rho2s = np.where(origin, 1.0, rho2)
        k1 = -_KC * y2 / rho2s
        k2 = _KC * y1 / rho2s
        k1[origin] = 0.0
        k2[origin] = 0.0
        _bs_cache[key] = (kernel_fft(k1, grid), kernel_fft(k2, grid))
    return _bs_cache[key]


def biot_savart_freespace(omega: FreeField, check_support: bool = True) -> FreeVelocity:
    """Velocity from vorticity by zero-padded convolution with K.

    ``curl u = omega`` holds on the support region within the quadrature
    error of the singular kernel (midpoint samples; origin cell exact by
    oddness).
    """
    if check_support:
        support_check(omega)
    g = omega.grid
    kh1, kh2 = _bs_kernel_ffts(g)
    u1 = convolve_fft(kh1, omega.values, g)
    u2 = convolve_fft(kh2, omega.values, g)
    return FreeVelocity(FreeField(g, u1), FreeField(g, u2))


def curl_fd(u: FreeVelocity) -> FreeField:
    """Fourth-order centered-difference curl; accurate away from the box boundary."""
    g = u.grid
    h = g.spacing

    def deriv(arr, ax):
        return (-np.roll(arr, -2, axis=ax) + 8 * np.roll(arr, -1, axis=ax)
                - 8 * np.roll(arr, 1, axis=ax) + np.roll(arr, 2, axis=ax)) / (12 * h)

    return FreeField(g, deriv(u.u2.values, 0) - deriv(u.u1.values, 1))


def star_convolution(a, b, grid: PaddedGrid, a_is_kernel_layout: bool = False):
    """Sum of componentwise convolutions: vectors sum over i, matrices over (i, j).

    ``a`` is the kernel-side operand: either box fields (converted to the
    circular offset layout, valid for compactly supported functions) or
    already-sampled padded kernels; ``b`` holds box fields.  Returns box
    values of shape (n, n).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != b.ndim or a.shape[: a.ndim - 2] != b.shape[: b.ndim - 2]:
        raise ShapeMismatch(f"operand shapes {a.shape} vs {b.shape}")
    if a.ndim not in (3, 4):
        raise ShapeMismatch("operands must be stacks of 2 (vector) or 2x2 (matrix) fields")
    lead = a.shape[: a.ndim - 2]
    if any(s != 2 for s in lead):
        raise ShapeMismatch(f"leading dimensions must be 2, got {lead}")
    out = np.zeros((grid.n, grid.n))
    for idx in np.ndindex(*lead):
        ka = a[idx]
        if not a_is_kernel_layout:
            ka = as_kernel_layout(ka, grid)
        out += convolve_fft(kernel_fft(ka, grid), b[idx], grid)
    return out


def zero_mean_result(omega: FreeField):
    """(zero_mean, mean, finite_energy): finite kinetic energy iff zero mean."""
    mean = omega.integral()
    l1 = omega.lp(1)
    ok = abs(mean) <= 1e-10 * l1 if l1 > 0 else True
    return ok, mean, ok


def zero_mean_check(omega: FreeField) -> bool:
    return zero_mean_result(omega)[0]


def serfati_rhs(u0: FreeVelocity, omega_t: FreeField, omega_0: FreeField,
                uu_history, nuomega_history, kernels: KernelPair,
                quadrature_dt: float) -> FreeVelocity:
    """Evaluate the velocity-update identity at time t.

    ``u_i(t) = u_i(0) + (aK_i) * (w(t) - w(0))
               - int_0^t D^i star (u x u) ds + int_0^t lap[(1-a)K_i] * (nu w) ds``

    Histories are uniform-checkpoint sequences starting at s = 0 and ending
    at s = t; time integrals use the trapezoidal rule.  By linearity the
    histories are time-integrated first and convolved once.
    """
    g = kernels.grid
    uu_history = list(uu_history)
    nuw_history = list(nuomega_history)
    if len(uu_history) != len(nuw_history):
        raise HistoryGap(f"history lengths differ: {len(uu_history)} vs {len(nuw_history)}")
    if len(uu_history) == 0:
        raise HistoryGap("histories must contain at least the initial checkpoint")
    m = len(uu_history)
    if m == 1:
        uu_int = np.zeros((2, 2, g.n, g.n))
        nuw_int = np.zeros((g.n, g.n))
    else:
        w = np.full(m, quadrature_dt)
        w[0] = w[-1] = quadrature_dt / 2.0
        uu_int = sum(wk * np.asarray(uk) for wk, uk in zip(w, uu_history))
        nuw_int = sum(wk * np.asarray(vk) for wk, vk in zip(w, nuw_history))
    domega = omega_t.values - omega_0.values
    comps = []
    for i in range(2):
        acc = u0.u1.values.copy() if i == 0 else u0.u2.values.copy()
        acc += convolve_fft(kernels.fft_of("near", (i,)), domega, g)
        for k in range(2):
            for j in range(2):
                acc -= convolve_fft(kernels.fft_of("dd", (i, k, j)), uu_int[k, j], g)
        acc += convolve_fft(kernels.fft_of("lap", (i,)), nuw_int, g)
        comps.append(FreeField(g, acc))
    return FreeVelocity(comps[0], comps[1])


# ---------------------------------------------------------------------------
# free-space dynamics (reuses the integrating-factor RK4 structure)


class FreeTrajectory:
    """Checkpointed free-space solve with cached convolution velocities."""

    def __init__(self, grid: PaddedGrid, nu, times, frames, settings):
        self.grid = grid
        self.nu = float(nu)
        self.times = np.asarray(times, dtype=np.float64)
        self.frames = list(frames)
        self.settings = settings
        self._velocities: list = [None] * len(frames)

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def frame(self, i) -> FreeField:
        return self.frames[i]

    def velocity(self, i) -> FreeVelocity:
        if self._velocities[i] is None:
            self._velocities[i] = biot_savart_freespace(self.frames[i], check_support=False)
        return self._velocities[i]

    def uu(self, i) -> np.ndarray:
        """Velocity self-tensor (2, 2, n, n) at checkpoint i."""
        u = self.velocity(i)
        comps = (u.u1.values, u.u2.values)
        return np.stack([np.stack([comps[a] * comps[b] for b in range(2)]) for a in range(2)])

    def integral_of(self, i, func) -> float:
        return float(np.sum(func(self.frames[i].values)) * self.grid.cell_area)

    def omega_lp(self, i, p) -> float:
        return self.frames[i].lp(p)

    def omega_l2_sq(self, i) -> float:
        return self.frames[i].lp(2) ** 2

    def energy_l2_sq(self, i) -> float:
        return self.velocity(i).l2_sq()


class _FreeStepper:
    """IF-RK4 on the box spectrum with free-space Biot-Savart drift."""

    def __init__(self, grid: PaddedGrid, nu, dt, use_dealias=True):
        self.grid = grid
        self.nu = nu
        self.dt = dt
        self.mask = grid.rdealias_mask if use_dealias else 1.0
        lam = nu * grid.rlap_mult
        self.e_half = np.exp(lam * (dt / 2.0))
        self.e_full = np.exp(lam * dt)
        self.max_speed = 0.0

    def to_state(self, values):
        return np.fft.rfft2(values)

    def to_values(self, c):
        n = self.grid.n
        return np.fft.irfft2(c, s=(n, n))

    def nonlinear(self, c):
        g = self.grid
        n = g.n
        cm = c * self.mask
        w = np.fft.irfft2(cm, s=(n, n))
        kh1, kh2 = _bs_kernel_ffts(g)
        u1 = convolve_fft(kh1, w, g)
        u2 = convolve_fft(kh2, w, g)
        self.max_speed = float(np.sqrt(np.max(u1 * u1 + u2 * u2)))
        w1 = np.fft.irfft2(g.rgrad1_mult * cm, s=(n, n))
        w2 = np.fft.irfft2(g.rgrad2_mult * cm, s=(n, n))
        adv = np.fft.rfft2(u1 * w1 + u2 * w2)
        adv *= self.mask
        adv[0, 0] = 0.0  # conserves the vorticity integral exactly
        return -adv

    def check_cfl(self):
        if self.max_speed > 0 and self.dt > 0.5 * self.grid.spacing / self.max_speed:
            raise CflViolation(
                f"dt = {self.dt:.3e} exceeds 0.5 * h / max|u| = "
                f"{0.5 * self.grid.spacing / self.max_speed:.3e}")

    def step(self, c):
        dt, eh, ef = self.dt, self.e_half, self.e_full
        n1 = self.nonlinear(c)
        self.check_cfl()
        a = eh * (c + (dt / 2.0) * n1)
        n2 = self.nonlinear(a)
        b = eh * c + (dt / 2.0) * n2
        n3 = self.nonlinear(b)
        d = ef * c + dt * eh * n3
        n4 = self.nonlinear(d)
        return ef * c + (dt / 6.0) * (ef * n1 + 2.0 * eh * (n2 + n3) + n4)


def solve_nse_freespace(omega0: FreeField, nu: float, T: float, settings) -> FreeTrajectory:
    """Integrate the free-space vorticity dynamics on [0, T].

    Same stepper as the periodic solver with the Biot-Savart inversion
    replaced by the zero-padded convolution; periodic artifacts of the box
    transforms are controlled by the support margin.
    """
    support_check(omega0)
    grid = omega0.grid
    n_full = int(np.floor(T / settings.dt + 1e-9))
    rem = T - n_full * settings.dt
    sizes = [settings.dt] * n_full
    if rem > 1e-12 * max(T, 1.0):
        sizes.append(rem)
    stepper = _FreeStepper(grid, nu, settings.dt, settings.dealias)
    c = stepper.to_state(omega0.values)
    times = [0.0]
    frames = [omega0]
    t = 0.0
    for k, h in enumerate(sizes):
        if h != stepper.dt:
            stepper = _FreeStepper(grid, nu, h, settings.dealias)
        c = stepper.step(c)
        t += h
        if (k + 1) % settings.checkpoint_every == 0 or k == len(sizes) - 1:
            times.append(t)
            frames.append(FreeField(grid, stepper.to_values(c)))
    return FreeTrajectory(grid, nu, times, frames, settings)


def serfati_residual(traj: FreeTrajectory, kernels: KernelPair, at_index: int | None = None) -> float:
    """Relative L^2 residual of the velocity-update identity along a run."""
    i = len(traj.times) - 1 if at_index is None else at_index
    dt_cp = float(traj.times[1] - traj.times[0]) if len(traj.times) > 1 else 0.0
    uu_hist = [traj.uu(k) for k in range(i + 1)]
    nuw_hist = [traj.nu * traj.frames[k].values for k in range(i + 1)]
    rhs = serfati_rhs(traj.velocity(0), traj.frames[i], traj.frames[0],
                      uu_hist, nuw_hist, kernels, dt_cp)
    u = traj.velocity(i)
    num = np.sqrt((rhs.u1.values - u.u1.values) ** 2 + (rhs.u2.values - u.u2.values) ** 2)
    den = np.sqrt(u.u1.values**2 + u.u2.values**2)
    area = traj.grid.cell_area
    return float(np.sqrt(np.sum(num**2) * area) / np.sqrt(np.sum(den**2) * area))

"""Time integration of the vorticity equation and of linear advection-diffusion.

The stepper is classical four-stage Runge-Kutta applied to the dealiased
convective term ``-u . grad(omega)``, with the diffusion ``nu * lap`` handled
exactly by an integrating factor in Fourier space.  Single-mode diffusion is
therefore exact, which isolates the nonlinear error; with ``nu = 0`` the
scheme reduces to plain RK4.

A single solve is sequential in time; independent solves share no mutable
state and trajectories are immutable after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .errors import CflViolation, NonZeroMean, TimeRangeExceeded
from .spectral import (
    MEAN_TOL,
    SpectralField,
    TorusGrid,
    VelocityField,
    biot_savart,
    lp_norm,
)

CFL_FACTOR = 0.5


@dataclass(frozen=True)
class SolverSettings:
    """Time-stepping knobs.

    ``dt`` must satisfy the advective guard ``dt <= 0.5 * spacing / max|u|``
    at every step; violations raise rather than being silently fixed.
    Checkpoints are stored every ``checkpoint_every`` steps (plus the final
    time).  Flow studies should checkpoint every step so that the linear
    velocity-in-time interpolation error stays below the stepping error.
    """

    dt: float
    checkpoint_every: int = 1
    dealias: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")


class _VorticityStepper:
    """Integrating-factor RK4 for d/dt omega = -u.grad(omega) + nu*lap(omega).

    Works on the rfft2 half-spectrum internally; one plan (and its scratch
    state) per worker thread, never shared.
    """

    def __init__(self, grid: TorusGrid, nu: float, dt: float, use_dealias: bool = True):
        self.grid = grid
        self.nu = nu
        self.dt = dt
        self.mask = grid.rdealias_mask if use_dealias else 1.0
        lam = nu * grid.rlap_mult
        self.e_half = np.exp(lam * (dt / 2.0))
        self.e_full = np.exp(lam * dt)
        self.max_speed = 0.0

    def to_state(self, values):
        return np.fft.rfft2(values) / self.grid.n**2

    def to_values(self, c):
        n = self.grid.n
        return np.fft.irfft2(c * n**2, s=(n, n))

    def nonlinear(self, c):
        """Half-spectrum coefficients of ``-u.grad(omega)``, dealiased, mean-free."""
        g = self.grid
        cm = c * self.mask
        psi = cm * g.rinv_neg_lap_mult
        n, n2 = g.n, g.n**2
        u1 = np.fft.irfft2(g.rgrad2_mult * psi * n2, s=(n, n))
        u2 = np.fft.irfft2(-g.rgrad1_mult * psi * n2, s=(n, n))
        w1 = np.fft.irfft2(g.rgrad1_mult * cm * n2, s=(n, n))
        w2 = np.fft.irfft2(g.rgrad2_mult * cm * n2, s=(n, n))
        self.max_speed = float(np.sqrt(np.max(u1 * u1 + u2 * u2)))
        adv = np.fft.rfft2(u1 * w1 + u2 * w2) / n2
        adv *= self.mask
        adv[0, 0] = 0.0
        return -adv

    def check_cfl(self):
        if self.max_speed > 0 and self.dt > CFL_FACTOR * self.grid.spacing / self.max_speed:
            raise CflViolation(
                f"dt = {self.dt:.3e} exceeds {CFL_FACTOR} * h / max|u| = "
                f"{CFL_FACTOR * self.grid.spacing / self.max_speed:.3e}"
            )

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


def step_vorticity(omega: SpectralField, nu: float, dt: float, use_dealias: bool = True) -> SpectralField:
    """One integrating-factor RK4 step of the vorticity equation.

    Raises ``NonZeroMean`` for non-mean-zero input and ``CflViolation`` when
    the advective guard fails.  ``dt = 0`` is the identity.
    """
    if abs(omega.mean) > MEAN_TOL:
        raise NonZeroMean(f"|mean(omega)| = {abs(omega.mean):.3e}")
    if nu < 0:
        raise ValueError("nu must be >= 0")
    if dt == 0.0:
        return omega
    stepper = _VorticityStepper(omega.grid, nu, dt, use_dealias)
    return SpectralField(omega.grid, values=stepper.to_values(stepper.step(stepper.to_state(omega.values))))


class Trajectory:
    """Checkpointed solution of a vorticity (or passive-scalar) solve.

    Frames are immutable; per-frame velocities are reconstructed through the
    Biot-Savart inversion on first use and cached.  Provides the carrier
    interface used by the flow integrators: ``grid``, ``t_max``,
    ``flow_step``, ``velocity_values_at``.
    """

    def __init__(self, grid: TorusGrid, nu: float, times, frames, settings: SolverSettings,
                 scalar: bool = False):
        times = np.asarray(times, dtype=np.float64)
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("checkpoint times must start at 0 and increase strictly")
        if len(times) != len(frames):
            raise ValueError("times and frames length mismatch")
        self.grid = grid
        self.nu = float(nu)
        self.times = times
        self.frames = list(frames)
        self.settings = settings
        self.scalar = scalar
        self._velocities: list = [None] * len(frames)

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    @property
    def flow_step(self) -> float:
        return self.settings.dt

    def frame(self, i: int) -> SpectralField:
        return self.frames[i]

    def velocity(self, i: int) -> VelocityField:
        if self._velocities[i] is None:
            self._velocities[i] = biot_savart(self.frames[i])
        return self._velocities[i]

    def _bracket(self, t: float):
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise TimeRangeExceeded(f"t = {t} outside [0, {times[-1]}]")
        t = min(max(t, times[0]), times[-1])
        j = int(np.searchsorted(times, t, side="right") - 1)
        j = min(j, len(times) - 2) if len(times) > 1 else 0
        return j, t

    def velocity_values_at(self, t: float) -> np.ndarray:
        """Velocity samples at time ``t``, shape (n, n, 2), linear in time."""
        j, t = self._bracket(t)
        if len(self.times) == 1:
            return self.velocity(0).stacked()
        t0, t1 = self.times[j], self.times[j + 1]
        v0 = self.velocity(j).stacked()
        if t == t0:
            return v0
        v1 = self.velocity(j + 1).stacked()
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * v0 + w * v1

    # accessors shared with the free-space trajectory for the metric checks
    def integral_of(self, i: int, func) -> float:
        return float(np.mean(func(self.frames[i].values)))

    def omega_lp(self, i: int, p) -> float:
        return lp_norm(self.frames[i], p)

    def omega_l2_sq(self, i: int) -> float:
        return self.omega_lp(i, 2) ** 2

    def energy_l2_sq(self, i: int) -> float:
        u = self.velocity(i)
        return lp_norm(u.u1, 2) ** 2 + lp_norm(u.u2, 2) ** 2


def _checkpoint_plan(T: float, dt: float):
    """Number of steps and step sizes covering [0, T]; final step may be short."""
    if T < 0:
        raise ValueError("T must be >= 0")
    n_full = int(np.floor(T / dt + 1e-9))
    rem = T - n_full * dt
    sizes = [dt] * n_full
    if rem > 1e-12 * max(T, 1.0):
        sizes.append(rem)
    return sizes


def solve_nse(omega0: SpectralField, nu: float, T: float, settings: SolverSettings) -> Trajectory:
    """Integrate the vorticity equation on [0, T] with checkpointing.

    ``nu = 0`` gives the inviscid (Euler) dynamics.  The datum must be
    mean-zero; the mean is conserved exactly by the discrete dynamics.
    """
    if abs(omega0.mean) > MEAN_TOL:
        raise NonZeroMean(f"|mean(omega0)| = {abs(omega0.mean):.3e}")
    grid = omega0.grid
    sizes = _checkpoint_plan(T, settings.dt)
    times = [0.0]
    frames = [omega0]
    stepper = _VorticityStepper(grid, nu, settings.dt, settings.dealias)
    c = stepper.to_state(omega0.values)
    t = 0.0
    for k, h in enumerate(sizes):
        if h != stepper.dt:
            stepper = _VorticityStepper(grid, nu, h, settings.dealias)
        c = stepper.step(c)
        t += h
        if (k + 1) % settings.checkpoint_every == 0 or k == len(sizes) - 1:
            times.append(t)
            frames.append(SpectralField(grid, values=stepper.to_values(c)))
    return Trajectory(grid, nu, times, frames, settings)


class _ScalarStepper:
    """Integrating-factor RK4 for a passive scalar in a frozen carrier field."""

    def __init__(self, grid, carrier, nu, dt, use_dealias):
        self.grid = grid
        self.carrier = carrier
        self.mask = grid.rdealias_mask if use_dealias else 1.0
        self.dt = dt
        lam = nu * grid.rlap_mult
        self.e_half = np.exp(lam * (dt / 2.0))
        self.e_full = np.exp(lam * dt)

    def to_state(self, values):
        return np.fft.rfft2(values) / self.grid.n**2

    def to_values(self, c):
        n = self.grid.n
        return np.fft.irfft2(c * n**2, s=(n, n))

    def nonlinear(self, c, t):
        g = self.grid
        cm = c * self.mask
        n, n2 = g.n, g.n**2
        b = self.carrier.velocity_values_at(t)
        r1 = np.fft.irfft2(g.rgrad1_mult * cm * n2, s=(n, n))
        r2 = np.fft.irfft2(g.rgrad2_mult * cm * n2, s=(n, n))
        adv = np.fft.rfft2(b[..., 0] * r1 + b[..., 1] * r2) / n2
        adv *= self.mask
        adv[0, 0] = 0.0
        return -adv

    def step(self, c, t):
        dt, eh, ef = self.dt, self.e_half, self.e_full
        n1 = self.nonlinear(c, t)
        a = eh * (c + (dt / 2.0) * n1)
        n2 = self.nonlinear(a, t + dt / 2.0)
        b = eh * c + (dt / 2.0) * n2
        n3 = self.nonlinear(b, t + dt / 2.0)
        d = ef * c + dt * eh * n3
        n4 = self.nonlinear(d, t + dt)
        return ef * c + (dt / 6.0) * (ef * n1 + 2.0 * eh * (n2 + n3) + n4)


def solve_linear_advection_diffusion(rho0: SpectralField, carrier, nu: float,
                                     settings: SolverSettings, T: float | None = None) -> Trajectory:
    """Advect-diffuse a passive scalar in the frozen velocity of ``carrier``.

    The carrier velocity is interpolated linearly in time between its
    checkpoints.  The mean of the scalar is conserved exactly; with
    ``nu = 0`` every L^p norm is conserved up to discretization error.
    """
    grid = rho0.grid
    if carrier.grid != grid:
        raise ValueError("carrier grid does not match the scalar grid")
    horizon = carrier.t_max if T is None else T
    if horizon > carrier.t_max + 1e-12:
        raise TimeRangeExceeded(f"T = {horizon} exceeds carrier horizon {carrier.t_max}")
    sizes = _checkpoint_plan(horizon, settings.dt)
    times = [0.0]
    frames = [rho0]
    stepper = _ScalarStepper(grid, carrier, nu, settings.dt, settings.dealias)
    c = stepper.to_state(rho0.values)
    t = 0.0
    for k, h in enumerate(sizes):
        if h != stepper.dt:
            stepper = _ScalarStepper(grid, carrier, nu, h, settings.dealias)
        c = stepper.step(c, t)
        t += h
        if (k + 1) % settings.checkpoint_every == 0 or k == len(sizes) - 1:
            times.append(t)
            frames.append(SpectralField(grid, values=stepper.to_values(c)))
    return Trajectory(grid, nu, times, frames, settings, scalar=True)


class SteadyCarrier:
    """Synthetic carrier with a time-independent velocity field.

    Used to inject closed-form transport fields (uniform translation, steady
    shear) into the linear solver and the flow integrators.
    """

    def __init__(self, velocity: VelocityField, t_max: float = np.inf, flow_step: float = 1e-2):
        self.grid = velocity.grid
        self._stacked = velocity.stacked()
        self.t_max = t_max
        self.flow_step = flow_step

    @classmethod
    def uniform(cls, grid: TorusGrid, v, t_max: float = np.inf, flow_step: float = 1e-2):
        n = grid.n
        u1 = SpectralField(grid, values=np.full((n, n), float(v[0])))
        u2 = SpectralField(grid, values=np.full((n, n), float(v[1])))
        return cls(VelocityField(u1, u2), t_max, flow_step)

    @classmethod
    def zero(cls, grid: TorusGrid, t_max: float = np.inf, flow_step: float = 1e-2):
        return cls.uniform(grid, (0.0, 0.0), t_max, flow_step)

    def velocity_values_at(self, t: float) -> np.ndarray:
        return self._stacked


def energy(u: VelocityField) -> float:
    """Squared L^2 norm of the velocity."""
    return lp_norm(u.u1, 2) ** 2 + lp_norm(u.u2, 2) ** 2


def enstrophy(omega: SpectralField) -> float:
    """Squared L^2 norm of the vorticity."""
    return lp_norm(omega, 2) ** 2


def save_trajectory(traj: Trajectory, outdir) -> Path:
    """Serialize a trajectory as a manifest plus one container per checkpoint."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "nu": traj.nu,
        "dt": traj.settings.dt,
        "N": traj.grid.n,
        "times": traj.times.tolist(),
        "checkpoint_every": traj.settings.checkpoint_every,
        "dealias": traj.settings.dealias,
        "scalar": traj.scalar,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    kind = "density" if traj.scalar else "vorticity"
    for i, f in enumerate(traj.frames):
        container.write_block(outdir / f"omega_{i:06d}.ivlb", f.values, kind=kind)
    return outdir


def load_trajectory(indir) -> Trajectory:
    indir = Path(indir)
    manifest = json.loads((indir / "manifest.json").read_text())
    grid = TorusGrid(manifest["N"])
    frames = []
    for i in range(len(manifest["times"])):
        values, _ = container.read_block(indir / f"omega_{i:06d}.ivlb")
        frames.append(SpectralField(grid, values=values))
    settings = SolverSettings(
        dt=manifest["dt"],
        checkpoint_every=manifest.get("checkpoint_every", 1),
        dealias=manifest.get("dealias", True),
    )
    return Trajectory(grid, manifest["nu"], manifest["times"], frames, settings,
                      scalar=manifest.get("scalar", False))

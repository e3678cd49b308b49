"""Backward Lagrangian flows, deterministic and stochastic.

The deterministic flow solves ``dX/ds = u(s, X)`` backward from a release
time ``t`` down to ``s = 0`` with RK4; the stochastic flow adds independent
Gaussian increments of per-component variance ``2*nu*h`` per backward
Euler-Maruyama step of size ``h`` (time-reversed Brownian motion is Brownian,
so i.i.d. increments realize the backward forcing).  The abstract probability
space is realized as counter-based RNG streams: one Philox stream per step
index derived from the master seed, with the array slot of each
(seed point, replica) pair fixed, so every path sees a self-contained
deterministic stream and results are bitwise independent of scheduling and
of the seed-chunk size used internally.  Replica averages reduce in replica
index order.

Positions are accumulated unwrapped (so displacement statistics avoid
spurious jumps across the periodic seam) and wrapped on access.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import container
from .errors import (
    BadParams,
    DeterministicFlowNotAllowed,
    StochasticFlowNotAllowed,
    TimeRangeExceeded,
)
from .spectral import SpectralField, TorusGrid, _bilinear_sample

_NOISE_TAG = 0x5EED


def geodesic_distance(x, y):
    """Geodesic distance on the unit torus, elementwise over (..., 2) arrays.

    Equals ``min_k |x - y - k|`` over integer shifts; per-component wrapping
    to [-1/2, 1/2) realizes the minimum, so the result is at most sqrt(2)/2.
    """
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    d = d - np.round(d)
    return np.sqrt(np.sum(d * d, axis=-1))


def torus_displacement(x, y):
    """Wrapped displacement x - y with components in [-1/2, 1/2)."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return d - np.round(d)


def seed_grid(n_seed: int) -> np.ndarray:
    """Uniform grid of n_seed^2 seed points, row-major to match field layout."""
    x = np.arange(n_seed) / n_seed
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    return np.stack([x1.ravel(), x2.ravel()], axis=-1)


class FlowEnsemble:
    """Positions of tracer paths released at time ``t``.

    ``raw`` maps each stored intermediate time ``s`` to unwrapped positions:
    shape (S, 2) for deterministic flows, (S, M, 2) for stochastic ones.
    Positions at ``s = t`` are the seeds exactly.  Wrapped positions are
    produced on access.
    """

    def __init__(self, seeds, t, s_values, raw, nu=0.0, replicas=0,
                 master_seed=None, seed_grid_n=None, step=None):
        self.seeds = np.asarray(seeds, dtype=np.float64)
        self.t = float(t)
        self.s_values = tuple(float(s) for s in s_values)
        self.raw = raw
        self.nu = float(nu)
        self.replicas = int(replicas)
        self.master_seed = master_seed
        self.seed_grid_n = seed_grid_n
        self.step = step
        ref = self.raw[self._key(self.t)]
        if not np.array_equal(np.broadcast_to(self._seed_shape(), ref.shape), ref):
            raise BadParams("positions at s = t must equal the seeds")

    def _seed_shape(self):
        if self.stochastic:
            return self.seeds[:, None, :]
        return self.seeds

    def _key(self, s):
        for k in self.raw:
            if abs(k - s) <= 1e-9:
                return k
        raise KeyError(f"time {s} not stored; have {sorted(self.raw)}")

    @property
    def stochastic(self) -> bool:
        return self.replicas > 0

    @property
    def n_seeds(self) -> int:
        return self.seeds.shape[0]

    def raw_positions(self, s) -> np.ndarray:
        return self.raw[self._key(s)]

    def positions(self, s) -> np.ndarray:
        """Positions at time ``s`` wrapped to [0,1)^2."""
        return np.mod(self.raw_positions(s), 1.0)

    def displacement(self, s) -> np.ndarray:
        """Unwrapped displacement from the seeds at time ``s``."""
        return self.raw_positions(s) - self._seed_shape()


def _time_grid(t: float, h: float):
    """Backward step sizes covering [0, t]; the final step may be short."""
    if t < 0:
        raise TimeRangeExceeded("release time must be >= 0")
    n_full = int(np.floor(t / h + 1e-9))
    sizes = [h] * n_full
    rem = t - n_full * h
    if rem > 1e-12 * max(t, 1.0):
        sizes.append(rem)
    return sizes


def _snap_requests(t, sizes, s_values):
    grid_times = [t]
    acc = t
    for h in sizes:
        acc -= h
        grid_times.append(acc)
    grid_times[-1] = 0.0
    grid = np.asarray(grid_times)
    if s_values is None:
        wanted = {t, 0.0}
    else:
        wanted = {float(grid[np.argmin(np.abs(grid - s))]) for s in s_values}
        wanted.update((t, 0.0))
    return grid, wanted


def _sample_velocity(carrier, s, pts):
    v = carrier.velocity_values_at(s)
    return _bilinear_sample(v, pts)


class _FlatSampler:
    """Bilinear velocity gather on flattened (m, 2) position blocks.

    Works in one-dimensional gathers from per-component flattened tables
    (an order of magnitude faster than row gathers), wraps on the float
    side, and replaces index modulo with bitwise masks (grid sizes are
    powers of two).  One sampler per integration, never shared.
    """

    def __init__(self, n: int, capacity: int):
        if n & (n - 1):
            raise ValueError("sampler requires a power-of-two grid")
        self.n = n
        self.mask = n - 1
        self.out = np.empty((capacity, 2), dtype=np.float64)
        self.v1 = None
        self.v2 = None

    def load(self, velocity_grid):
        self.v1 = np.ascontiguousarray(velocity_grid[..., 0]).ravel()
        self.v2 = np.ascontiguousarray(velocity_grid[..., 1]).ravel()

    def __call__(self, pts):
        n, mask = self.n, self.mask
        m = pts.shape[0]
        sx = pts[:, 0] * n
        sy = pts[:, 1] * n
        fx = np.floor(sx)
        fy = np.floor(sy)
        sx -= fx
        sy -= fy
        ix = fx.astype(np.int64)
        iy = fy.astype(np.int64)
        ix &= mask
        iy &= mask
        jx = ix + 1
        jx &= mask
        jy = iy + 1
        jy &= mask
        ix <<= n.bit_length() - 1
        jx <<= n.bit_length() - 1
        b00 = ix + iy
        b10 = jx + iy
        b01 = ix + jy
        b11 = jx + jy
        gx = 1.0 - sx
        gy = 1.0 - sy
        w00 = gx * gy
        w10 = sx * gy
        w01 = gx * sy
        w11 = sx * sy
        out = self.out[:m]
        out[:, 0] = self.v1[b00] * w00 + self.v1[b10] * w10 + self.v1[b01] * w01 + self.v1[b11] * w11
        out[:, 1] = self.v2[b00] * w00 + self.v2[b10] * w10 + self.v2[b01] * w01 + self.v2[b11] * w11
        return out


def integrate_backward_flow(carrier, t, seeds, step=None, s_values=None,
                            seed_grid_n=None, chunk=1 << 19) -> FlowEnsemble:
    """Deterministic backward flow of the carrier velocity, RK4 in s.

    ``step`` defaults to the carrier's own time step so no second
    interpolation scale is introduced.
    """
    if t < -1e-12 or t > carrier.t_max + 1e-12:
        raise TimeRangeExceeded(f"t = {t} outside carrier range [0, {carrier.t_max}]")
    h = float(step if step is not None else carrier.flow_step)
    seeds = np.asarray(seeds, dtype=np.float64)
    sizes = _time_grid(t, h)
    grid_times, wanted = _snap_requests(t, sizes, s_values)
    x = seeds.copy()
    raw = {t: seeds.copy()}
    sampler = _FlatSampler(carrier.grid.n, min(chunk, x.shape[0]))
    s = t
    for k, hk in enumerate(sizes):
        v_s = carrier.velocity_values_at(s)
        v_mid = carrier.velocity_values_at(s - hk / 2.0)
        v_end = carrier.velocity_values_at(max(s - hk, 0.0))
        for lo in range(0, x.shape[0], chunk):
            sl = slice(lo, min(lo + chunk, x.shape[0]))
            xc = x[sl]
            sampler.load(v_s)
            k1 = sampler(xc)
            acc = k1.copy()
            pos = xc - (hk / 2.0) * k1
            sampler.load(v_mid)
            k2 = sampler(pos)
            acc += 2.0 * k2
            pos = xc - (hk / 2.0) * k2
            k3 = sampler(pos)
            acc += 2.0 * k3
            pos = xc - hk * k3
            sampler.load(v_end)
            acc += sampler(pos)
            acc *= hk / 6.0
            x[sl] = xc - acc
        s = grid_times[k + 1]
        if any(abs(s - w) <= 1e-9 for w in wanted):
            raw[float(s)] = x.copy()
    stored = sorted(raw, reverse=True)
    return FlowEnsemble(seeds, t, stored, raw, seed_grid_n=seed_grid_n, step=h)


def _noise_stream(master_seed: int, step_index: int):
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(_NOISE_TAG, step_index))
    return np.random.Generator(np.random.Philox(ss))


def integrate_stochastic_flow(carrier, t, nu, seeds, replicas, master_seed,
                              step=None, s_values=None, seed_grid_n=None,
                              chunk_elems=1 << 22) -> FlowEnsemble:
    """Backward Euler-Maruyama flow with Gaussian forcing of intensity 2*nu.

    Each backward step of size ``h`` applies the drift through the carrier
    velocity and adds an independent N(0, 2*nu*h) increment per component.
    Identical ``(carrier, t, nu, seeds, replicas, master_seed)`` reproduce
    the ensemble bitwise, for any chunk size.
    """
    if not nu > 0:
        raise BadParams(f"noise intensity must be positive, got {nu}")
    if replicas < 1:
        raise BadParams(f"need at least one replica, got {replicas}")
    if t < -1e-12 or t > carrier.t_max + 1e-12:
        raise TimeRangeExceeded(f"t = {t} outside carrier range [0, {carrier.t_max}]")
    h = float(step if step is not None else carrier.flow_step)
    seeds = np.asarray(seeds, dtype=np.float64)
    S, M = seeds.shape[0], int(replicas)
    sizes = _time_grid(t, h)
    grid_times, wanted = _snap_requests(t, sizes, s_values)
    x = np.broadcast_to(seeds[:, None, :], (S, M, 2)).copy()
    raw = {t: np.broadcast_to(seeds[:, None, :], (S, M, 2))}
    seed_chunk = max(1, int(chunk_elems // max(M * 2, 1)))
    sampler = _FlatSampler(carrier.grid.n, min(S, seed_chunk) * M)
    s = t
    for k, hk in enumerate(sizes):
        sampler.load(carrier.velocity_values_at(s))
        sigma = np.sqrt(2.0 * nu * hk)
        rng = _noise_stream(master_seed, k)
        for lo in range(0, S, seed_chunk):
            sl = slice(lo, min(lo + seed_chunk, S))
            xc = x[sl]
            flat = xc.reshape(-1, 2)
            drift = sampler(flat)
            noise = rng.standard_normal(xc.shape)
            noise *= sigma
            drift *= -hk
            flat += drift[: flat.shape[0]]
            flat += noise.reshape(-1, 2)
        s = grid_times[k + 1]
        if any(abs(s - w) <= 1e-9 for w in wanted):
            raw[float(s)] = x.copy()
    stored = sorted(raw, reverse=True)
    return FlowEnsemble(seeds, t, stored, raw, nu=nu, replicas=M,
                        master_seed=master_seed, seed_grid_n=seed_grid_n, step=h)


def flow_from_map(seeds, mapping, seed_grid_n=None) -> FlowEnsemble:
    """Synthetic deterministic ensemble whose endpoint is ``mapping(seeds)``.

    Diagnostic helper: lets the measure-preservation statistic be exercised
    on closed-form maps without integrating any carrier.
    """
    seeds = np.asarray(seeds, dtype=np.float64)
    end = np.asarray(mapping(seeds), dtype=np.float64)
    raw = {1.0: seeds.copy(), 0.0: end}
    return FlowEnsemble(seeds, 1.0, (1.0, 0.0), raw, seed_grid_n=seed_grid_n)


def lagrangian_vorticity(omega0: SpectralField, flow: FlowEnsemble,
                         mode: str = "bilinear") -> SpectralField:
    """Compose the initial vorticity with the backward flow: w0(X_{t,0})."""
    if flow.stochastic:
        raise StochasticFlowNotAllowed("use feynman_kac_vorticity for stochastic flows")
    if flow.seed_grid_n is None:
        raise BadParams("flow seeds must be the full grid (seed_grid_n set)")
    n = flow.seed_grid_n
    pts = np.mod(flow.raw_positions(0.0), 1.0)
    if mode == "bilinear":
        vals = _bilinear_sample(omega0.values, pts)
    else:
        from .spectral import sample_at

        vals = sample_at(omega0, pts, mode=mode)
    return SpectralField(TorusGrid(n), values=vals.reshape(n, n))


def feynman_kac_vorticity(omega0: SpectralField, flow: FlowEnsemble, chunk=1 << 20):
    """Replica average of w0 along the stochastic backward flow.

    Returns ``(field, stderr)``: the Monte Carlo mean on the seed grid and
    the per-point standard error of that mean.
    """
    if not flow.stochastic:
        raise DeterministicFlowNotAllowed("use lagrangian_vorticity for deterministic flows")
    if flow.seed_grid_n is None:
        raise BadParams("flow seeds must be the full grid (seed_grid_n set)")
    n = flow.seed_grid_n
    S, M = flow.n_seeds, flow.replicas
    end = flow.raw_positions(0.0)
    mean = np.empty(S)
    se = np.empty(S)
    seed_chunk = max(1, int(chunk // max(M, 1)))
    for lo in range(0, S, seed_chunk):
        sl = slice(lo, min(lo + seed_chunk, S))
        vals = _bilinear_sample(omega0.values, np.mod(end[sl], 1.0))
        mean[sl] = np.mean(vals, axis=1)
        if M > 1:
            se[sl] = np.std(vals, axis=1, ddof=1) / np.sqrt(M)
        else:
            se[sl] = np.inf
    grid = TorusGrid(n)
    return (SpectralField(grid, values=mean.reshape(n, n)),
            SpectralField(grid, values=se.reshape(n, n)))


def measure_preservation_defect(flow: FlowEnsemble, cells: int) -> float:
    """Max relative deviation of endpoint cell counts from uniform.

    Pools all replicas for stochastic flows.  Zero for any map that pushes
    the uniform seeding forward to the uniform measure (up to sampling and
    integration error).
    """
    if cells < 1:
        raise BadParams("cells must be >= 1")
    pts = np.mod(flow.raw_positions(0.0), 1.0).reshape(-1, 2)
    edges = np.linspace(0.0, 1.0, cells + 1)
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=(edges, edges))
    frac = counts / pts.shape[0]
    return float(np.max(np.abs(frac * cells**2 - 1.0)))


def save_ensemble(flow: FlowEnsemble, outdir) -> Path:
    """Serialize an ensemble: JSON manifest plus container blocks per time.

    Deterministic grid-seeded flows store one block per component and time;
    stochastic flows store one block per component, time, and replica.
    """
    if flow.seed_grid_n is None:
        raise BadParams("only grid-seeded ensembles serialize to containers")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n = flow.seed_grid_n
    manifest = {
        "t": flow.t,
        "nu": flow.nu,
        "M": flow.replicas,
        "master_seed": flow.master_seed,
        "s_values": list(flow.s_values),
        "seed_grid_n": n,
        "step": flow.step,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    for idx, s in enumerate(flow.s_values):
        raw = flow.raw_positions(s)
        if flow.stochastic:
            for r in range(flow.replicas):
                for c in (0, 1):
                    container.write_block(
                        outdir / f"pos{c + 1}_s{idx:03d}_r{r:05d}.ivlb",
                        raw[:, r, c].reshape(n, n), kind=f"positions{c + 1}")
        else:
            for c in (0, 1):
                container.write_block(outdir / f"pos{c + 1}_s{idx:03d}.ivlb",
                                      raw[:, c].reshape(n, n), kind=f"positions{c + 1}")
    return outdir


def load_ensemble(indir) -> FlowEnsemble:
    indir = Path(indir)
    manifest = json.loads((indir / "manifest.json").read_text())
    n = manifest["seed_grid_n"]
    M = manifest["M"]
    s_values = manifest["s_values"]
    raw = {}
    for idx, s in enumerate(s_values):
        if M:
            comps = []
            for c in (0, 1):
                reps = [container.read_block(indir / f"pos{c + 1}_s{idx:03d}_r{r:05d}.ivlb")[0].ravel()
                        for r in range(M)]
                comps.append(np.stack(reps, axis=1))
            raw[float(s)] = np.stack(comps, axis=-1)
        else:
            comps = [container.read_block(indir / f"pos{c + 1}_s{idx:03d}.ivlb")[0].ravel()
                     for c in (0, 1)]
            raw[float(s)] = np.stack(comps, axis=-1)
    return FlowEnsemble(seed_grid(n), manifest["t"], s_values, raw,
                        nu=manifest["nu"], replicas=M,
                        master_seed=manifest["master_seed"], seed_grid_n=n,
                        step=manifest.get("step"))

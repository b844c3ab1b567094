"""Seeded Monte Carlo simulation of the wealth jump-diffusion and statistical checks.

Dynamics.  The risky asset is stepped multiplicatively (exact for constant
drift and volatility), so positivity is exact; wealth is stepped by Euler:

    W[k+1] = W[k] + ( r W[k] + iota_k y(t_k) - c_k + w_k (mu_eff - r)
                      - iota_k theta r ) dt
             + w_k sigma dZ_k + theta delta dN_k

with two dynamics modes:

* ``paper-eq-2.4``  — income and premium are gated by survival
  (``iota = 1{t < tau}``); the single death time is drawn exactly by inverse
  transform and pays one jump at the end of the step containing it.
* ``hjb-generator`` — the literal generator of the dynamic-programming
  equation: income and premium always on, jumps from a full Poisson process
  with intensity lambda(t), each paying ``theta delta``.

and two measures:

* ``physical``      — asset drift mu, mortality at intensity lambda.
* ``pricing-v-star``— Brownian drift shifted by -xi (asset drift r) and
  mortality suppressed, the pricing measure of the optimal auxiliary market.

Reproducibility.  The engine uses the Philox 4x64 counter-based bit
generator (NumPy >= 1.26).  Each path owns two substreams keyed by
``(seed, stream_tag, path_index)`` — tag 0 for mortality/jump draws, tag 1
for Brownian increments — so every estimate is a pure function of the
configuration: independent of chunking and of the worker count.  Estimator
reductions run over a per-path array assembled in path order (NumPy pairwise
summation), which makes them bit-identical across shard layouts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .closedform import ClosedFormSolution, budget_identity_check
from .hjb import FeedbackControls
from .params import ModelParams, PiecewiseConstant, TimeGrid, derive
from .stateprice import MortalityDraw

__all__ = [
    "SimConfig",
    "PathBundle",
    "EstimatorResult",
    "CheckReport",
    "UtilityRunReport",
    "MonteCarloEngine",
    "simulate_paths",
    "estimate_utility",
    "martingale_check",
    "budget_check",
]

_MEASURES = ("physical", "pricing-v-star")
_DYNAMICS = ("paper-eq-2.4", "hjb-generator")
_TAG_JUMP = 0
_TAG_DIFFUSION = 1
_CHUNK = 4_000  # keeps the per-step working set near L2
_BUNDLE_CHUNK = 1_000  # trajectory storage is 4 full matrices per chunk


@dataclass(frozen=True)
class SimConfig:
    """Simulation run description; equal configs produce identical results."""

    n_paths: int
    grid: TimeGrid
    seed: int
    measure: str = "physical"
    dynamics: str = "paper-eq-2.4"
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.measure not in _MEASURES:
            raise ValueError(f"measure must be one of {_MEASURES}")
        if self.dynamics not in _DYNAMICS:
            raise ValueError(f"dynamics must be one of {_DYNAMICS}")
        if not 0 <= self.seed < 2**63:
            raise ValueError("seed must be a nonnegative 64-bit integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class PathBundle:
    """One simulated scenario on the configured grid."""

    dZ: np.ndarray
    tau: MortalityDraw
    S1: np.ndarray
    W: np.ndarray
    c: np.ndarray
    running_utility: float


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    std_error: float
    n_paths: int
    seed: int


@dataclass(frozen=True)
class CheckReport:
    """One statistical check: PASS when |value| is within the threshold."""

    name: str
    value: float
    std_error: float
    threshold: float
    passed: bool
    n_paths: int
    seed: int

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{self.name}: estimate={self.value:.6e} se={self.std_error:.6e} "
            f"threshold={self.threshold:.6e} n={self.n_paths} seed={self.seed} "
            f"[{verdict}]"
        )


@dataclass(frozen=True)
class UtilityRunReport:
    result: EstimatorResult
    negative_consumption_fraction: float


def _path_rng(seed: int, tag: int, path_index: int) -> np.random.Generator:
    """Philox substream keyed by (seed, tag, path index)."""
    key = np.array([seed, (tag << 62) | path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _exp_utility(x, alpha: float):
    return -np.exp(-alpha * x) / alpha


def _poisson_arrivals(
    rng: np.random.Generator, lambda_fn: PiecewiseConstant, horizon: float
) -> list[float]:
    """All arrival times of a Poisson process with intensity lambda on [0, horizon]."""
    times = []
    target = rng.standard_exponential()
    while True:
        t = lambda_fn.inverse_integral(target, horizon)
        if not math.isfinite(t) or t > horizon:
            return times
        times.append(t)
        target += rng.standard_exponential()


class MonteCarloEngine:
    """Vectorized, chunked path engine bound to one :class:`SimConfig`."""

    def __init__(self, config: SimConfig):
        self.config = config

    # ------------------------------------------------------------------
    # path generation
    # ------------------------------------------------------------------

    def _chunk_inputs(self, params: ModelParams, start: int, stop: int):
        """Per-path draws for paths [start, stop): normals (path-major),
        death times, and jump schedule (step index -> local path indices)."""
        cfg = self.config
        n = cfg.grid.n_steps
        dt = cfg.grid.dt
        nc = stop - start
        z = np.empty((nc, n))
        taus = np.full(nc, np.inf)
        jump_steps: dict[int, list[int]] = {}
        for i in range(nc):
            idx = start + i
            if cfg.measure == "physical":
                jrng = _path_rng(cfg.seed, _TAG_JUMP, idx)
                if cfg.dynamics == "paper-eq-2.4":
                    t = params.lambda_fn.inverse_integral(
                        jrng.standard_exponential(), params.T
                    )
                    taus[i] = t
                    arrivals = [t] if t <= params.T else []
                else:
                    arrivals = _poisson_arrivals(jrng, params.lambda_fn, params.T)
                    if arrivals:
                        taus[i] = arrivals[0]
                for t in arrivals:
                    k = min(max(int(math.ceil(t / dt)) - 1, 0), n - 1)
                    jump_steps.setdefault(k, []).append(i)
            z[i] = _path_rng(cfg.seed, _TAG_DIFFUSION, idx).standard_normal(n)
        return z, taus, jump_steps

    def _step_chunk(
        self,
        params: ModelParams,
        controls: FeedbackControls,
        z: np.ndarray,
        taus: np.ndarray,
        jump_steps: dict[int, list[int]],
        store_trajectories: bool,
    ):
        """Euler-step one chunk; returns terminal wealth, accumulated
        consumption utility, negative-consumption step count, trajectories."""
        cfg = self.config
        nc, n = z.shape
        dt = cfg.grid.dt
        sqrt_dt = math.sqrt(dt)
        nodes = cfg.grid.nodes()
        alpha = params.alpha
        mu_eff = params.r if cfg.measure == "pricing-v-star" else params.mu
        theta = controls.theta
        gated = cfg.measure == "physical" and cfg.dynamics == "paper-eq-2.4"
        # survival gating: path alive at step k iff k < ceil(tau/dt)
        kd = np.where(
            np.isfinite(taus), np.ceil(np.minimum(taus, params.T + dt) / dt), n + 1
        )
        w_nodes = np.array([float(controls.w_of(t)) for t in nodes])
        y_nodes = np.broadcast_to(np.asarray(params.y_fn(nodes), dtype=float), (n + 1,))
        ucoef = np.exp(-params.rho * nodes) * (dt / alpha)
        vol = w_nodes * (params.sigma * sqrt_dt)
        flow = w_nodes * (mu_eff - params.r) + y_nodes - theta * params.r
        tables = None
        if controls.c_tables is not None:
            tables = controls.c_tables(nodes)

        def consumption(k: int, wealth: np.ndarray) -> np.ndarray:
            if tables is not None:
                c = tables[0][k] * wealth
                c += tables[1][k]
                c /= alpha
                return c
            c = np.asarray(controls.c_of(nodes[k], wealth), dtype=float)
            if c.ndim == 0:
                c = np.full(wealth.shape, float(c))
            return c

        W = np.full(nc, float(params.W0))
        running = np.zeros(nc)
        neg_steps = 0
        w_traj = c_traj = None
        if store_trajectories:
            w_traj = np.empty((nc, n + 1))
            c_traj = np.empty((nc, n + 1))
            w_traj[:, 0] = W
        jump_size = theta * params.delta
        scratch = np.empty(nc)
        for k in range(n):
            c = consumption(k, W)
            np.multiply(c, -alpha, out=scratch)
            u1 = np.exp(scratch, out=scratch)
            neg_steps += int(np.count_nonzero(u1 > 1.0))  # c < 0 <=> e^{-a c} > 1
            running -= ucoef[k] * u1
            drift = params.r * W
            drift -= c
            if gated:
                drift += flow[k] * (k < kd)
            else:
                drift += flow[k]
            drift *= dt
            drift += vol[k] * z[:, k]
            W = W + drift
            if jump_size != 0.0 and k in jump_steps:
                np.add.at(W, jump_steps[k], jump_size)
            if store_trajectories:
                w_traj[:, k + 1] = W
                c_traj[:, k] = c
        if store_trajectories:
            c_traj[:, -1] = consumption(n, W)
        return W, running, neg_steps, w_traj, c_traj

    def _asset_chunk(self, params: ModelParams, z: np.ndarray) -> np.ndarray:
        """Exact multiplicative asset path for one chunk (path-major)."""
        cfg = self.config
        dt = cfg.grid.dt
        mu_eff = params.r if cfg.measure == "pricing-v-star" else params.mu
        log_steps = (mu_eff - 0.5 * params.sigma**2) * dt + (
            params.sigma * math.sqrt(dt)
        ) * z
        nc, n = z.shape
        s = np.empty((nc, n + 1))
        s[:, 0] = 1.0
        np.exp(np.cumsum(log_steps, axis=1), out=s[:, 1:])
        return s

    def simulate_paths(
        self, params: ModelParams, controls: FeedbackControls
    ) -> Iterator[PathBundle]:
        """Yield one PathBundle per path, in path-index order."""
        cfg = self.config
        if cfg.grid.t0 != 0.0 or cfg.grid.t1 != params.T:
            raise ValueError("simulation grid must span [0, T]")
        sqrt_dt = math.sqrt(cfg.grid.dt)
        for start in range(0, cfg.n_paths, _BUNDLE_CHUNK):
            stop = min(start + _BUNDLE_CHUNK, cfg.n_paths)
            z, taus, jump_steps = self._chunk_inputs(params, start, stop)
            _, running, _, w_traj, c_traj = self._step_chunk(
                params, controls, z, taus, jump_steps, store_trajectories=True
            )
            s_traj = self._asset_chunk(params, z)
            dz = sqrt_dt * z
            for i in range(stop - start):
                tau_i = float(taus[i])
                draw = MortalityDraw(
                    tau=tau_i if math.isfinite(tau_i) else math.inf,
                    survived=not tau_i <= params.T,
                )
                yield PathBundle(
                    dZ=dz[i],
                    tau=draw,
                    S1=s_traj[i],
                    W=w_traj[i],
                    c=c_traj[i],
                    running_utility=float(running[i]),
                )

    # ------------------------------------------------------------------
    # estimators
    # ------------------------------------------------------------------

    def _chunk_bounds(self) -> list[tuple[int, int]]:
        n = self.config.n_paths
        return [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]

    def _run_sharded(self, job, bounds=None):
        bounds = self._chunk_bounds() if bounds is None else bounds
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                return list(pool.map(lambda b: job(*b), bounds))
        return [job(*b) for b in bounds]

    def run_utility_estimate(
        self, params: ModelParams, controls: FeedbackControls
    ) -> UtilityRunReport:
        """Expected discounted utility of consumption and terminal wealth.

        Identical numbers to ``estimate_utility(simulate_paths(...))`` but
        skips trajectory storage; shards across workers when configured.
        """
        cfg = self.config
        if cfg.grid.t0 != 0.0 or cfg.grid.t1 != params.T:
            raise ValueError("simulation grid must span [0, T]")
        totals = np.empty(cfg.n_paths)
        disc_T = math.exp(-params.rho * params.T)

        def run_chunk(start: int, stop: int) -> int:
            z, taus, jump_steps = self._chunk_inputs(params, start, stop)
            w_term, running, neg_steps, _, _ = self._step_chunk(
                params, controls, z, taus, jump_steps, store_trajectories=False
            )
            totals[start:stop] = running + disc_T * _exp_utility(w_term, params.alpha)
            return neg_steps

        neg_total = sum(self._run_sharded(run_chunk))
        frac = float(neg_total) / (cfg.n_paths * cfg.grid.n_steps)
        return UtilityRunReport(
            result=_reduce(totals, cfg), negative_consumption_fraction=frac
        )

    def estimate_budget_lhs(
        self, params: ModelParams, zeta_star: float
    ) -> EstimatorResult:
        """Pricing-measure estimate of discounted optimal consumption plus
        terminal wealth; the time integral runs trapezoid on the grid."""
        cfg = self.config
        if cfg.measure != "pricing-v-star":
            raise ValueError("budget estimation requires the pricing-v-star measure")
        if cfg.grid.t0 != 0.0 or cfg.grid.t1 != params.T:
            raise ValueError("simulation grid must span [0, T]")
        der = derive(params)
        n = cfg.grid.n_steps
        dt = cfg.grid.dt
        sqrt_dt = math.sqrt(dt)
        nodes = cfg.grid.nodes()
        # c_hat(t) = base(t) + (xi/alpha) Z_Q(t): mortality suppressed under
        # v*, and ln phi_Z rewritten in pricing-measure increments
        # (Z_P = Z_Q - xi t) as -xi Z_Q(t) + xi^2 t / 2.
        base = (
            -math.log(zeta_star)
            + (params.r - params.rho - 0.5 * der.xi**2) * nodes
        ) / params.alpha
        slope = der.xi / params.alpha
        weights = np.full(n + 1, dt)
        weights[0] = weights[-1] = 0.5 * dt
        disc = np.exp(-params.r * nodes)
        wd = weights * disc
        const_part = float(np.dot(wd, base) + disc[-1] * base[-1])
        coeff = slope * (wd + np.concatenate((np.zeros(n), [disc[-1]])))
        totals = np.empty(cfg.n_paths)

        def run_chunk(start: int, stop: int) -> None:
            nc = stop - start
            z = np.empty((nc, n))
            for i in range(nc):
                z[i] = _path_rng(cfg.seed, _TAG_DIFFUSION, start + i).standard_normal(n)
            zpath = np.empty((nc, n + 1))
            zpath[:, 0] = 0.0
            np.cumsum(sqrt_dt * z, axis=1, out=zpath[:, 1:])
            totals[start:stop] = const_part + zpath @ coeff

        self._run_sharded(run_chunk)
        return _reduce(totals, cfg)

    def martingale_check(
        self,
        t_list: Sequence[float],
        params: ModelParams,
        psi_fn: PiecewiseConstant | None = None,
    ) -> list[CheckReport]:
        """Zero-mean checks of the state-price factors at the requested times.

        For each t: (i) phi(t) S1(t) - S1(0), (ii) phi(t)/beta(t) - 1,
        (iii) the compensated death indicator.  Brownian increments are drawn
        exactly between checkpoints and death times by exact inverse
        transform, so the assertions carry no discretization bias.  With a
        vanishing hazard the only arbitrage-free mortality intensity is 0
        (phi_N = 1 pathwise) and the mortality checks pass trivially.
        """
        cfg = self.config
        if cfg.measure != "physical":
            raise ValueError("martingale checks are physical-measure checks")
        t_list = sorted(float(t) for t in t_list)
        if not t_list or t_list[0] <= 0.0 or t_list[-1] > params.T:
            raise ValueError("checkpoints must lie in (0, T]")
        der = derive(params)
        trivial_mortality = max(params.lambda_fn.values) == 0.0
        if psi_fn is None:
            psi_fn = PiecewiseConstant.constant(0.0 if trivial_mortality else der.psi)
        m = len(t_list)
        n_paths = cfg.n_paths
        z = np.empty((n_paths, m))
        u = np.empty(n_paths)

        def fill(start: int, stop: int) -> None:
            for i in range(start, stop):
                z[i] = _path_rng(cfg.seed, _TAG_DIFFUSION, i).standard_normal(m)
                u[i] = _path_rng(cfg.seed, _TAG_JUMP, i).standard_exponential()

        self._run_sharded(fill, bounds=[
            (s, min(s + 20_000, n_paths)) for s in range(0, n_paths, 20_000)
        ])

        taus = _inverse_hazard_vec(params.lambda_fn, u, params.T)
        durations = np.diff(np.concatenate(([0.0], t_list)))
        z_at = np.cumsum(np.sqrt(durations) * z, axis=1)
        reports = []
        for j, t in enumerate(t_list):
            zt = z_at[:, j]
            phi_z = np.exp(-der.xi * zt - 0.5 * der.xi**2 * t)
            s1 = np.exp((params.mu - 0.5 * params.sigma**2) * t + params.sigma * zt)
            phi_n = _phi_n_vec(t, taus, psi_fn, params.lambda_fn)
            beta = math.exp(-params.r * t)
            comp = (taus <= t).astype(float) - params.lambda_fn.integral(
                np.minimum(taus, t)
            )
            reports.append(
                _zero_mean_report(
                    f"phi*S1 - S1(0) @ t={t:g}", beta * phi_z * phi_n * s1 - 1.0, cfg
                )
            )
            reports.append(
                _zero_mean_report(f"phi/beta - 1 @ t={t:g}", phi_z * phi_n - 1.0, cfg)
            )
            reports.append(
                _zero_mean_report(f"compensated mortality @ t={t:g}", comp, cfg)
            )
        return reports

    def budget_check(
        self, solution: ClosedFormSolution, params: ModelParams
    ) -> CheckReport:
        """Budget identity at the optimum; delegates to the closed-form module."""
        return budget_identity_check(solution, params, self)


# ----------------------------------------------------------------------
# module-level operation wrappers and helpers
# ----------------------------------------------------------------------


def simulate_paths(
    config: SimConfig, params: ModelParams, controls: FeedbackControls
) -> Iterator[PathBundle]:
    return MonteCarloEngine(config).simulate_paths(params, controls)


def estimate_utility(
    paths: Iterable[PathBundle], params: ModelParams, config: SimConfig
) -> EstimatorResult:
    """Mean discounted utility of consumption plus terminal wealth.

    Consumption utility is accumulated by the simulator at left endpoints;
    this adds the terminal-wealth term and reduces to mean / standard error.
    """
    disc_T = math.exp(-params.rho * params.T)
    totals = np.fromiter(
        (
            p.running_utility + disc_T * float(_exp_utility(p.W[-1], params.alpha))
            for p in paths
        ),
        dtype=float,
    )
    if totals.size != config.n_paths:
        raise ValueError("path stream did not match the configured path count")
    return _reduce(totals, config)


def martingale_check(
    t_list: Sequence[float], config: SimConfig, params: ModelParams
) -> list[CheckReport]:
    return MonteCarloEngine(config).martingale_check(t_list, params)


def budget_check(
    solution: ClosedFormSolution, config: SimConfig, params: ModelParams
) -> CheckReport:
    return MonteCarloEngine(config).budget_check(solution, params)


def _reduce(totals: np.ndarray, config: SimConfig) -> EstimatorResult:
    mean = float(np.mean(totals))
    if totals.size > 1:
        se = float(np.std(totals, ddof=1) / math.sqrt(totals.size))
    else:
        se = 0.0
    return EstimatorResult(
        mean=mean, std_error=se, n_paths=config.n_paths, seed=config.seed
    )


def _zero_mean_report(name: str, values: np.ndarray, config: SimConfig) -> CheckReport:
    res = _reduce(values, config)
    threshold = 3.0 * res.std_error if res.std_error > 0.0 else 1e-15
    return CheckReport(
        name=name,
        value=res.mean,
        std_error=res.std_error,
        threshold=threshold,
        passed=abs(res.mean) <= threshold,
        n_paths=config.n_paths,
        seed=config.seed,
    )


def _inverse_hazard_vec(
    lambda_fn: PiecewiseConstant, targets: np.ndarray, horizon: float
) -> np.ndarray:
    """Vectorized inverse cumulative hazard; inf when not reached by horizon."""
    out = np.full(targets.shape, np.inf)
    breaks = list(lambda_fn.breaks) + [math.inf]
    for i, v in enumerate(lambda_fn.values):
        a, b = breaks[i], breaks[i + 1]
        if a >= horizon:
            break
        if v <= 0.0:
            continue
        cum_a = lambda_fn.integral(a)
        cand = a + (targets - cum_a) / v
        hit = (targets > cum_a) & (cand <= b) & np.isinf(out)
        out[hit] = cand[hit]
    out[out > horizon] = np.inf
    return out


def _phi_n_vec(
    t: float,
    taus: np.ndarray,
    psi_fn: PiecewiseConstant,
    lambda_fn: PiecewiseConstant,
) -> np.ndarray:
    """Vectorized mortality density factor at time t."""
    cut = np.minimum(taus, t)
    exponent = lambda_fn.integral(cut) - psi_fn.integral(cut)
    dead = taus <= t
    out = np.exp(exponent)
    if dead.any():
        lam_at = np.asarray(lambda_fn(taus[dead]), dtype=float)
        psi_at = np.asarray(psi_fn(taus[dead]), dtype=float)
        safe = np.where(lam_at > 0.0, lam_at, 1.0)
        out[dead] *= np.where(lam_at > 0.0, psi_at / safe, 0.0)
    return out

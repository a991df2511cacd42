"""Seeded Monte-Carlo sweeps and their CSV reports.

Each (pilot energy, SNR, trial) triple derives its own generator from the
master seed, so results are byte-identical across runs and independent of
sweep order.  The estimator choice never consumes randomness, which keeps
trials paired between estimator variants run from the same seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .channel import draw_channel, snr_db_to_noise_variance, transmit
from .config import ExperimentConfig, RipcheckConfig
from .core import build_factor_graph, default_codebook_set
from .decode import McmcParams, decode_frame, indices_to_bits, llrs_to_bits
from .delayest import (
    FbOptions,
    delay_mae,
    estimate_delays,
    shift_matrix,
    stack_shift_matrices,
)
from .ripcheck import (
    GERSHGORIN_TOL,
    gershgorin_check,
    gram,
    rip_failure_mc,
    tail_bound_mc,
)
from .seeding import spawn_rng
from .txchain import DelayProfile, assemble_frame, generate_pilot

__all__ = [
    "TrialResult",
    "MetricRow",
    "CheckRow",
    "ExperimentResult",
    "run_mae_experiment",
    "run_ber_experiment",
    "run_rip_experiment",
]

EXPERIMENT_HEADER = "snr_db,pilot_energy,metric,mean,stderr,trials"
RIPCHECK_HEADER = "check,params,empirical,bound,verdict"


@dataclass(frozen=True)
class TrialResult:
    """Raw metrics of one Monte-Carlo trial."""

    snr_db: float
    pilot_energy: float
    mae: float | None = None
    exact_rate: float | None = None
    ber: float | None = None
    bit_errors: int = 0
    bit_count: int = 0
    solver_iterations: float | None = None
    wall_time: float = 0.0


@dataclass(frozen=True)
class MetricRow:
    """One aggregated CSV row."""

    snr_db: float
    pilot_energy: float
    metric: str
    mean: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class CheckRow:
    """One theory-check CSV row."""

    check: str
    params: str
    empirical: float
    bound: float
    verdict: str


@dataclass(frozen=True)
class ExperimentResult:
    """Aggregated rows plus the rendered CSV report."""

    rows: tuple
    csv: str


def _flatten(doc: dict, prefix: str = "") -> list[tuple[str, object]]:
    out: list[tuple[str, object]] = []
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.extend(_flatten(value, path + "."))
        else:
            out.append((path, value))
    return out


def _echo_comments(config) -> list[str]:
    flat = sorted(_flatten(config.model_dump(by_alias=True)))
    lines = []
    for path, value in flat:
        if isinstance(value, bool) or value is None:
            rendered = json.dumps(value)
        elif isinstance(value, float):
            rendered = repr(value)
        elif isinstance(value, (list, tuple)):
            rendered = json.dumps(list(value), separators=(",", ":"))
        else:
            rendered = str(value)
        lines.append(f"# {path}={rendered}")
    return lines


def _metric_csv(config, rows) -> str:
    lines = _echo_comments(config)
    lines.append(EXPERIMENT_HEADER)
    for row in rows:
        lines.append(
            f"{row.snr_db!r},{row.pilot_energy!r},{row.metric},"
            f"{row.mean!r},{row.stderr!r},{row.trials}"
        )
    return "\n".join(lines) + "\n"


def _check_csv(config, rows) -> str:
    lines = _echo_comments(config)
    lines.append(RIPCHECK_HEADER)
    for row in rows:
        lines.append(f"{row.check},{row.params},{row.empirical!r},{row.bound!r},{row.verdict}")
    return "\n".join(lines) + "\n"


def _mean_stderr(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / math.sqrt(arr.size))


def _solver_options(config: ExperimentConfig, noise_variance: float) -> FbOptions:
    solver = config.solver
    if solver.sigma is not None:
        sigma = solver.sigma
    else:
        # The l1 weight tracks the per-component noise level of the grid point.
        sigma = math.sqrt(noise_variance / 2.0)
    return FbOptions(
        lam=solver.lam,
        sigma=sigma,
        step_scale=solver.step_scale,
        stop_tol=solver.stop_tol,
        max_iters=solver.max_iters,
    )


def _draw_scene(config: ExperimentConfig, graph, energy: float, noise_variance: float, rng):
    """Common per-trial draws, identical for every estimator variant."""
    frame = config.frame
    drawn = rng.integers(0, frame.D + 1, size=graph.n_users)
    if config.estimator == "synchronous":
        true_delays = DelayProfile(np.zeros(graph.n_users, dtype=np.int64), frame.D)
    else:
        true_delays = DelayProfile(drawn, frame.D)
    data_indices = rng.integers(
        0, config.system.M, size=(graph.n_users, frame.N)
    )
    pilots = np.stack([
        generate_pilot(frame.S - frame.D, frame.D, energy, rng)
        for _ in range(graph.n_users)
    ])
    channel = draw_channel(config.channel, graph, noise_variance, rng)
    return true_delays, data_indices, pilots, channel


def _prepare(config: ExperimentConfig):
    graph = build_factor_graph(config.system.K, config.system.J, config.system.dv)
    codebooks = default_codebook_set(graph, config.system.M)
    return graph, codebooks


def _estimate(config, received, pilots, graph, opts):
    heads = pilots[:, : config.frame.S - config.frame.D]
    method = "least_squares" if config.estimator == "least_squares" else "lasso"
    profile, estimates = estimate_delays(
        received, heads, graph, config.frame.D, opts, method
    )
    iters = float(np.mean([e.iterations for e in estimates]))
    return profile, iters


def _mae_trial(config, graph, energy, snr_db, noise_variance, trial_rng, opts) -> TrialResult:
    start = time.perf_counter()
    true_delays, _, pilots, channel = _draw_scene(
        config, graph, energy, noise_variance, trial_rng
    )
    empty = np.zeros((0, graph.n_res), dtype=np.complex128)
    frames = [assemble_frame(pilots[j], empty, graph, j) for j in range(graph.n_users)]
    received = transmit(frames, true_delays, channel, trial_rng)
    profile, iters = _estimate(config, received, pilots, graph, opts)
    exact = float(np.mean(profile.delays == true_delays.delays))
    return TrialResult(
        snr_db=snr_db,
        pilot_energy=energy,
        mae=delay_mae(profile, true_delays),
        exact_rate=exact,
        solver_iterations=iters,
        wall_time=time.perf_counter() - start,
    )


def _ber_trial(
    config, graph, codebooks, energy, snr_db, noise_variance, trial_rng, opts
) -> TrialResult:
    start = time.perf_counter()
    true_delays, data_indices, pilots, channel = _draw_scene(
        config, graph, energy, noise_variance, trial_rng
    )
    frames = [
        assemble_frame(pilots[j], codebooks.user(j)[data_indices[j]], graph, j)
        for j in range(graph.n_users)
    ]
    received = transmit(frames, true_delays, channel, trial_rng)
    mcmc_seed = int(trial_rng.integers(0, 2 ** 31))

    mae = exact = iters = None
    if config.estimator in ("lasso", "least_squares"):
        profile, iters = _estimate(config, received, pilots, graph, opts)
        mae = delay_mae(profile, true_delays)
        exact = float(np.mean(profile.delays == true_delays.delays))
    else:
        profile = true_delays

    detector = config.detector
    if detector.kind == "mcmc":
        table = decode_frame(
            received, profile, pilots, config.frame.N, graph, codebooks, channel,
            "mcmc",
            mcmc=McmcParams(
                sweeps=detector.sweeps,
                chains=detector.chains,
                mixing=detector.mixing,
                seed=mcmc_seed,
            ),
        )
    else:
        table = decode_frame(
            received, profile, pilots, config.frame.N, graph, codebooks, channel,
            "log_mpa", mpa_iterations=detector.iterations,
        )
    decided = llrs_to_bits(table)
    truth = indices_to_bits(data_indices, codebooks.bits_per_symbol)
    errors = int((decided != truth).sum())
    total = int(truth.size)
    return TrialResult(
        snr_db=snr_db,
        pilot_energy=energy,
        mae=mae,
        exact_rate=exact,
        ber=errors / total,
        bit_errors=errors,
        bit_count=total,
        solver_iterations=iters,
        wall_time=time.perf_counter() - start,
    )


def _aggregate(trials: list[TrialResult], snr_db, energy, metrics) -> list[MetricRow]:
    rows = []
    for name, getter in metrics:
        values = [getter(t) for t in trials]
        if any(v is None for v in values):
            continue
        mean, stderr = _mean_stderr(values)
        rows.append(
            MetricRow(
                snr_db=snr_db,
                pilot_energy=energy,
                metric=name,
                mean=mean,
                stderr=stderr,
                trials=len(trials),
            )
        )
    return rows


_MAE_METRICS = (
    ("delay_exact_rate", lambda t: t.exact_rate),
    ("mae", lambda t: t.mae),
    ("solver_iterations", lambda t: t.solver_iterations),
)
_BER_METRICS = (
    ("ber", lambda t: t.ber),
    ("delay_exact_rate", lambda t: t.exact_rate),
    ("mae", lambda t: t.mae),
    ("solver_iterations", lambda t: t.solver_iterations),
)


def run_mae_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Sweep delay-estimation error over the SNR/pilot-energy grid.

    Only the pilot phase is simulated (data symbols never overlap the
    estimation window).  Valid estimators: ``lasso``, ``least_squares``.
    """
    if config.estimator not in ("lasso", "least_squares"):
        raise ValueError("mae experiments need estimator 'lasso' or 'least_squares'")
    graph, _ = _prepare(config)
    rows: list[MetricRow] = []
    for ei, energy in enumerate(config.pilot_energy):
        for si, snr_db in enumerate(config.snr_db):
            noise_variance = snr_db_to_noise_variance(snr_db)
            opts = _solver_options(config, noise_variance)
            trials = [
                _mae_trial(
                    config, graph, energy, snr_db, noise_variance,
                    spawn_rng(config.master_seed, ei, si, trial), opts,
                )
                for trial in range(config.trials)
            ]
            rows.extend(_aggregate(trials, snr_db, energy, _MAE_METRICS))
    return ExperimentResult(rows=tuple(rows), csv=_metric_csv(config, rows))


def run_ber_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Sweep end-to-end bit error rate over the SNR/pilot-energy grid.

    The estimator selects the delay hypothesis used for decoding:
    ``synchronous`` (all delays zero, transmission synchronous), ``genie``
    (true delays known), ``lasso`` or ``least_squares`` (estimated).
    """
    if config.frame.N < 1:
        raise ValueError("ber experiments need N >= 1 data symbols")
    graph, codebooks = _prepare(config)
    rows: list[MetricRow] = []
    for ei, energy in enumerate(config.pilot_energy):
        for si, snr_db in enumerate(config.snr_db):
            noise_variance = snr_db_to_noise_variance(snr_db)
            opts = _solver_options(config, noise_variance)
            trials = [
                _ber_trial(
                    config, graph, codebooks, energy, snr_db, noise_variance,
                    spawn_rng(config.master_seed, ei, si, trial), opts,
                )
                for trial in range(config.trials)
            ]
            rows.extend(_aggregate(trials, snr_db, energy, _BER_METRICS))
    return ExperimentResult(rows=tuple(rows), csv=_metric_csv(config, rows))


def run_rip_experiment(config: RipcheckConfig) -> ExperimentResult:
    """Run every theory check and render the verdict report."""
    rows: list[CheckRow] = []

    rng = spawn_rng(config.master_seed, 1)
    worst = 0.0
    all_contained = True
    var = 1.0 / (2.0 * config.n_pilot)
    for _ in range(config.gershgorin_matrices):
        blocks = {}
        for u in range(config.re_degree):
            head = math.sqrt(var) * (
                rng.standard_normal(config.n_pilot)
                + 1j * rng.standard_normal(config.n_pilot)
            )
            blocks[u] = shift_matrix(head, config.max_delay)
        report = gershgorin_check(gram(stack_shift_matrices(blocks)).matrix)
        worst = max(worst, report.max_violation)
        all_contained = all_contained and report.contained
    rows.append(
        CheckRow(
            check="gershgorin",
            params=(
                f"matrices={config.gershgorin_matrices};n_pilot={config.n_pilot};"
                f"max_delay={config.max_delay};re_degree={config.re_degree}"
            ),
            empirical=worst,
            bound=GERSHGORIN_TOL,
            verdict="pass" if all_contained else "fail",
        )
    )

    for i, t in enumerate(config.norm_tail_t):
        report = tail_bound_mc(
            "norm", config.n_pilot, t, config.tail_trials,
            spawn_rng(config.master_seed, 2, i),
        )
        rows.append(
            CheckRow(
                check="tail_norm",
                params=f"t={t!r};n_terms={config.n_pilot};trials={config.tail_trials}",
                empirical=report.empirical,
                bound=report.bound,
                verdict="fail" if report.violated else "pass",
            )
        )
    for i, t in enumerate(config.cross_tail_t):
        report = tail_bound_mc(
            "cross", config.n_pilot, t, config.tail_trials,
            spawn_rng(config.master_seed, 3, i),
        )
        rows.append(
            CheckRow(
                check="tail_cross",
                params=f"t={t!r};n_terms={config.n_pilot};trials={config.tail_trials}",
                empirical=report.empirical,
                bound=report.bound,
                verdict="fail" if report.violated else "pass",
            )
        )

    report = rip_failure_mc(
        config.n_pilot, config.max_delay, config.re_degree, config.sparsity,
        config.delta, config.rip_draws, spawn_rng(config.master_seed, 4),
    )
    rows.append(
        CheckRow(
            check="rip_failure",
            params=(
                f"n_pilot={config.n_pilot};max_delay={config.max_delay};"
                f"re_degree={config.re_degree};sparsity={config.sparsity};"
                f"delta={config.delta!r};draws={config.rip_draws};"
                f"raw_bound={report.raw_bound!r}"
            ),
            empirical=report.failure_rate,
            bound=report.bound,
            verdict=report.verdict,
        )
    )
    return ExperimentResult(rows=tuple(rows), csv=_check_csv(config, rows))

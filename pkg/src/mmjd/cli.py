"""Command-line pipeline: simulate price paths, estimate all model parameters.

The estimate command runs the four stages in order: threshold the log-yields
to flag jumps, estimate the jump rate, fit the regime mixture by EM, then
classify the between-jump clusters and estimate the generator by stochastic
EM. Outputs are a JSON report plus plot-ready trace CSVs.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mixture_em, segmentation, sem, yields
from .errors import DataError, EstimationError, MmjdError, ValidationError
from .model import IntensityMatrix, MmjdParams, ObservationGrid, validate
from .simulate import simulate_mmjd

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


@dataclass(frozen=True)
class PriceRecord:
    date: str
    price: float


@dataclass(frozen=True)
class EstimateReport:
    eta_hat: float
    jump_count: int
    threshold: float
    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    q_hat: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    ci_degenerate: np.ndarray
    em_iterations: int
    em_converged: bool
    sem_iterations: int
    sem_burn_in: int
    warnings: list[str]

    def to_dict(self) -> dict:
        m = self.mu.size
        return {
            "eta_hat": self.eta_hat,
            "jump_count": self.jump_count,
            "threshold": self.threshold,
            "states": [
                {
                    "state": j + 1,
                    "pi": float(self.pi[j]),
                    "mu": float(self.mu[j]),
                    "sigma": float(self.sigma[j]),
                }
                for j in range(m)
            ],
            "q_hat": self.q_hat.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "ci_degenerate": self.ci_degenerate.tolist(),
            "diagnostics": {
                "em_iterations": self.em_iterations,
                "em_converged": self.em_converged,
                "sem_iterations": self.sem_iterations,
                "sem_burn_in": self.sem_burn_in,
                "time_convention": "one time unit per consecutive record",
            },
            "warnings": self.warnings,
        }


def _parse_date(text: str):
    try:
        return datetime.date.fromisoformat(text)
    except ValueError:
        pass
    try:
        return int(text)
    except ValueError:
        raise DataError(f"unparseable date {text!r}")


def ingest_csv(path: str | Path, date_col: str = "date",
               price_col: str = "price") -> list[PriceRecord]:
    """Read, validate, and sort a date/price CSV.

    Dates may be calendar dates (ISO) or integer indices. Rows must have
    strictly increasing dates after sorting (duplicates are an error) and
    positive prices. Consecutive rows are one time unit apart regardless of
    calendar gaps.
    """
    records: list[tuple] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or date_col not in reader.fieldnames \
                or price_col not in reader.fieldnames:
            raise DataError(f"columns {date_col!r}/{price_col!r} not found in {path}")
        for lineno, row in enumerate(reader, start=2):
            raw_date = (row[date_col] or "").strip()
            raw_price = (row[price_col] or "").strip()
            try:
                price = float(raw_price)
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable price {raw_price!r}")
            if not price > 0:
                raise DataError(f"{path}:{lineno}: nonpositive price {price}")
            try:
                key = _parse_date(raw_date)
            except DataError as err:
                raise DataError(f"{path}:{lineno}: {err}")
            records.append((key, raw_date, price, lineno))
    if len(records) < 2:
        raise DataError(f"{path}: need at least two rows")
    try:
        records.sort(key=lambda r: r[0])
    except TypeError:
        raise DataError(f"{path}: mixed date formats")
    for (a, _, _, _), (b, _, _, ln) in zip(records, records[1:]):
        if a == b:
            raise DataError(f"{path}:{ln}: duplicate date")
    return [PriceRecord(date=r[1], price=r[2]) for r in records]


def load_params(path: str | Path) -> tuple[MmjdParams, ObservationGrid]:
    """Read a JSON parameter file with keys m, Q, mu, sigma, eta, s0, x0, delta, M.

    Q may be a nested m x m list or a flat row-major list. Rows must sum to
    zero to within 1e-6; the diagonal is then recomputed exactly.
    """
    with open(path) as fh:
        doc = json.load(fh)
    try:
        m = int(doc["m"])
        q_raw = np.asarray(doc["Q"], dtype=float).reshape(m, m)
        mu = np.asarray(doc["mu"], dtype=float)
        sigma = np.asarray(doc["sigma"], dtype=float)
        eta = float(doc["eta"])
        s0 = float(doc["s0"])
        x0 = int(doc["x0"])
        delta = float(doc["delta"])
        m_obs = int(doc["M"])
    except (KeyError, TypeError, ValueError) as err:
        raise ValidationError(f"{path}: bad parameter file: {err}")
    if np.max(np.abs(q_raw.sum(axis=1))) > 1e-6:
        raise ValidationError(f"{path}: Q row sums differ from zero beyond 1e-6")
    q = IntensityMatrix.from_off_diagonal(q_raw)
    params = MmjdParams(q=q, mu=mu, sigma=sigma, eta=eta, s0=s0, x0=x0 - 1)
    grid = ObservationGrid(delta=delta, m_obs=m_obs)
    validate(params)
    grid.validate()
    return params, grid


def load_q_init(path: str | Path, m: int) -> IntensityMatrix:
    with open(path) as fh:
        doc = json.load(fh)
    raw = np.asarray(doc["Q"] if isinstance(doc, dict) else doc, dtype=float).reshape(m, m)
    if np.max(np.abs(raw.sum(axis=1))) > 1e-6:
        raise ValidationError(f"{path}: Q row sums differ from zero beyond 1e-6")
    q = IntensityMatrix.from_off_diagonal(raw)
    q.validate()
    return q


def load_em_init(path: str | Path, m: int, dt: float) -> mixture_em.MixtureState:
    """Mixture starting point from JSON keys pi (optional), mu, sigma."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        mu = np.asarray(doc["mu"], dtype=float)
        sigma = np.asarray(doc["sigma"], dtype=float)
        pi = np.asarray(doc.get("pi", np.full(m, 1.0 / m)), dtype=float)
    except (KeyError, TypeError, ValueError) as err:
        raise ValidationError(f"{path}: bad mixture init file: {err}")
    if mu.size != m or sigma.size != m or pi.size != m:
        raise ValidationError(f"{path}: mixture init length mismatch with --states {m}")
    state = mixture_em.MixtureState(pi=pi / pi.sum(), delta=mu - 0.5 * sigma**2,
                                    sigma2=sigma**2)
    state.validate()
    return state


def _default_q_init(m: int, n_jumps: int, horizon: float) -> IntensityMatrix:
    # uniform generator matching the overall observed jump frequency
    rate = max(n_jumps, 1) / horizon / (m - 1)
    off = np.full((m, m), rate)
    return IntensityMatrix.from_off_diagonal(off)


def _write_prices_csv(path: Path, times: np.ndarray, prices: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "price"])
        for t, p in zip(times, prices):
            writer.writerow([f"{t:.10g}", f"{p:.12g}"])


def _write_latent_csv(path: Path, latent, jump_sizes: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "state", "jump_log_size"])
        for tau, st, j in zip(latent.jump_times, latent.post_jump_states, jump_sizes):
            writer.writerow([f"{tau:.12g}", int(st) + 1, f"{j:.12g}"])


def cmd_simulate(args: argparse.Namespace) -> int:
    params, grid = load_params(args.params)
    if args.intervals is not None:
        grid = ObservationGrid(delta=grid.delta, m_obs=args.intervals)
        grid.validate()
    rng = np.random.default_rng(np.random.SeedSequence(args.seed).spawn(2)[0])
    path = simulate_mmjd(params, grid, rng)
    out = Path(args.out)
    _write_prices_csv(out, grid.times(), path.prices)
    outputs = {"prices": str(out)}
    if args.with_latent:
        _write_latent_csv(Path(args.with_latent), path.latent, path.jump_log_sizes)
        outputs["latent"] = args.with_latent
    config = {
        "command": "simulate",
        "params_file": str(args.params),
        "m": params.m,
        "delta": grid.delta,
        "intervals": grid.m_obs,
        "seed": args.seed,
        "outputs": outputs,
    }
    print(json.dumps(config, indent=2))
    return 0


def _resolve_threshold(args: argparse.Namespace, series: yields.YieldSeries) -> float:
    if args.threshold is not None and args.threshold_sq is not None:
        raise ValidationError("pass only one of --threshold / --threshold-sq")
    if args.threshold is not None:
        if not args.threshold > 0:
            raise ValidationError("nonpositive threshold")
        return float(args.threshold)
    if args.threshold_sq is not None:
        return yields.threshold_from_squared(args.threshold_sq)
    raise ValidationError(
        "a jump threshold is required: --threshold or --threshold-sq "
        "(use --suggest-threshold for an advisory value)"
    )


def run_estimate_pipeline(
    prices: np.ndarray,
    m: int,
    threshold: float,
    seed: int,
    em_eps: float = 0.05,
    em_max_iter: int = 1000,
    em_init: mixture_em.MixtureState | None = None,
    sem_iters: int = 1000,
    sem_burn_in: int | None = None,
    ci_level: float = 0.95,
    q_init: IntensityMatrix | None = None,
    delta: float = 1.0,
):
    """Run all four estimation stages; returns the report plus stage objects."""
    warnings_list: list[str] = []
    grid = ObservationGrid(delta=delta, m_obs=len(prices) - 1)
    series = yields.log_yields(prices, delta)

    # stage 1: flag jumps
    partition = yields.detect_jumps(series, threshold)
    if yields.high_jump_frequency(partition, len(series)):
        warnings_list.append(
            "detected jump frequency above one per two intervals; "
            "the one-jump-per-interval assumption looks strained"
        )

    # stage 2: jump-rate MLE
    eta_hat = yields.estimate_eta(partition)

    # stage 3: regime mixture by EM
    w = partition.diffusion_yields
    init = em_init if em_init is not None else mixture_em.default_init(w, m, delta)
    em_res = mixture_em.run_em(w, init, delta, eps=em_eps, max_iter=em_max_iter)
    if not em_res.converged:
        warnings_list.append("EM reached the iteration cap before converging")

    # stage 4: classify clusters, impute bridges, generator MLE
    clusters = segmentation.split_clusters(partition, grid)
    labels: list[int | None] = [
        None if c.is_empty else segmentation.classify_cluster(c, em_res.final, delta)[0]
        for c in clusters
    ]
    partial = segmentation.build_partial_path(clusters, labels, grid)
    q0 = q_init if q_init is not None else _default_q_init(
        m, partition.n_jumps, partial.covered_horizon)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    sem_res = sem.run_sem(partial, q0, iters=sem_iters, burn_in=sem_burn_in,
                          rng=rng, level=ci_level)
    warnings_list.extend(sem_res.warnings)

    report = EstimateReport(
        eta_hat=eta_hat,
        jump_count=partition.n_jumps,
        threshold=threshold,
        pi=em_res.final.pi,
        mu=em_res.mu_hat,
        sigma=em_res.sigma_hat,
        q_hat=sem_res.q_hat.rates,
        ci_lower=sem_res.ci_lower,
        ci_upper=sem_res.ci_upper,
        ci_degenerate=(sem_res.mean_stats.n_jumps == 0) & ~np.eye(m, dtype=bool),
        em_iterations=em_res.iterations,
        em_converged=em_res.converged,
        sem_iterations=sem_res.iterations_used,
        sem_burn_in=sem_res.burn_in,
        warnings=warnings_list,
    )
    return report, em_res, sem_res, partial, partition


def _write_em_trace(path: Path, em_res: mixture_em.EmResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loglik"])
        for i, ll in enumerate(em_res.loglik_trace):
            writer.writerow([i, f"{ll:.12g}"])


def _write_sem_trace(path: Path, sem_res: sem.SemResult) -> None:
    m = sem_res.q_hat.m
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "i", "j", "q_ij"])
        for it in range(sem_res.trace.shape[0]):
            for i in range(m):
                for j in range(m):
                    if i != j:
                        writer.writerow([it + 1, i + 1, j + 1,
                                         f"{sem_res.trace[it, i, j]:.12g}"])


def _write_segments(path: Path, partial: segmentation.PartialMjpPath) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_start", "segment_end", "state"])
        for seg in partial.segments:
            writer.writerow([f"{seg.start:.10g}", f"{seg.end:.10g}", seg.state + 1])


def cmd_estimate(args: argparse.Namespace) -> int:
    records = ingest_csv(args.prices, args.date_col, args.price_col)
    prices = np.array([r.price for r in records])
    series = yields.log_yields(prices, 1.0)

    if args.suggest_threshold:
        suggestion = yields.suggest_threshold(series, args.threshold_multiplier)
        note = " (degenerate: robust scale is zero)" if suggestion.degenerate else ""
        print(f"suggested threshold: {suggestion.value:.8g}{note}")
        return 0

    threshold = _resolve_threshold(args, series)
    em_init = None
    if args.em_init:
        em_init = load_em_init(args.em_init, args.states, 1.0)
    q_init = None
    if args.q_init:
        q_init = load_q_init(args.q_init, args.states)

    report, em_res, sem_res, partial, _ = run_estimate_pipeline(
        prices,
        m=args.states,
        threshold=threshold,
        seed=args.seed,
        em_eps=args.em_eps,
        em_max_iter=args.em_max_iter,
        em_init=em_init,
        sem_iters=args.sem_iters,
        sem_burn_in=args.sem_burn_in,
        ci_level=args.ci_level,
        q_init=q_init,
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    _write_em_trace(out_dir / "em_trace.csv", em_res)
    _write_sem_trace(out_dir / "sem_trace.csv", sem_res)
    _write_segments(out_dir / "segments.csv", partial)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_calibrate_threshold(args: argparse.Namespace) -> int:
    records = ingest_csv(args.prices, args.date_col, args.price_col)
    prices = np.array([r.price for r in records])
    series = yields.log_yields(prices, 1.0)
    suggestion = yields.suggest_threshold(series, args.threshold_multiplier)
    note = " (degenerate: robust scale is zero)" if suggestion.degenerate else ""
    print(f"suggested threshold: {suggestion.value:.8g}{note}")
    return 0


def _add_csv_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prices", required=True, help="CSV file of dated prices")
    p.add_argument("--date-col", default="date", help="date column name")
    p.add_argument("--price-col", default="price", help="price column name")
    p.add_argument("--threshold-multiplier", type=float, default=5.0,
                   help="multiplier on the robust yield scale for advisory thresholds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmjd",
        description="Simulate and estimate a regime-switching jump-diffusion price model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a price path on a regular grid")
    p_sim.add_argument("--params", required=True, help="JSON parameter file")
    p_sim.add_argument("--intervals", type=int, default=None,
                       help="override the number of observation intervals")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="output prices CSV (t,price)")
    p_sim.add_argument("--with-latent", default=None, metavar="FILE",
                       help="also write the latent trajectory CSV (tau,state,jump_log_size)")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate all parameters from a price CSV")
    _add_csv_args(p_est)
    p_est.add_argument("--states", type=int, required=True, help="number of regimes m")
    p_est.add_argument("--threshold", type=float, default=None,
                       help="jump threshold in absolute log-yield units")
    p_est.add_argument("--threshold-sq", type=float, default=None,
                       help="jump threshold given as a squared log-return")
    p_est.add_argument("--suggest-threshold", action="store_true",
                       help="print the advisory threshold and exit")
    p_est.add_argument("--em-eps", type=float, default=0.05)
    p_est.add_argument("--em-max-iter", type=int, default=1000)
    p_est.add_argument("--em-init", default=None, metavar="FILE",
                       help="JSON mixture starting point (pi, mu, sigma)")
    p_est.add_argument("--sem-iters", type=int, default=1000)
    p_est.add_argument("--sem-burn-in", type=int, default=None)
    p_est.add_argument("--ci-level", type=float, default=0.95)
    p_est.add_argument("--q-init", default=None, metavar="FILE",
                       help="JSON generator starting point")
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--out-dir", default=".", help="directory for report and traces")
    p_est.set_defaults(func=cmd_estimate)

    p_cal = sub.add_parser("calibrate-threshold", help="print an advisory jump threshold")
    _add_csv_args(p_cal)
    p_cal.set_defaults(func=cmd_calibrate_threshold)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DataError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except EstimationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except MmjdError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

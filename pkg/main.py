# main.py
"""
Main entry point for quadlab.
Parses flags, loads configuration and dispatches subcommands that write
CSV/JSON/binary artifacts under the output directory.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from config import load_config, parse_value
from discriminants import enumerate_family
from distribution_lab import (
    bridge_rows,
    density_from_charfn,
    discrepancy_report,
    min_abs_value,
    model_distribution,
    model_small_value_probability,
    moment_compare,
    small_value_share,
    tail_frequency,
    trend_summary,
)
from errors import ConfigError, QuadLabError, StorageError
from kernels import set_thread_budget
from lfun import FamilyEvaluator
from models import (
    Command,
    FamilySlice,
    LogDerivValue,
    ModelConfig,
    ModelSampleBatch,
    RunConfig,
    TruncationParams,
    benchmark_pair,
)
from random_model import charfn_curve, fit_decay_slope, moment_growth, sample_L
from storage import ArtifactWriter, SweepStorage, TextSweepStorage, read_family, write_batch, write_family

logger = logging.getLogger(__name__)

# Silence verbose logging from external libraries
logging.getLogger("numba").setLevel(logging.WARNING)


class QuadLab:
    """
    Orchestrates the computational modules for one run configuration.
    Uses dependency injection for testability.
    """

    def __init__(
        self,
        config: RunConfig,
        writer: Optional[ArtifactWriter] = None,
        storage_factory: Optional[Callable[[int], SweepStorage]] = None,
        echo: Callable[[str], None] = print,
    ):
        """
        Initialize the lab with configuration and optional collaborators.

        Args:
            config: Run configuration
            writer: Optional artifact writer (defaults to the output directory)
            storage_factory: Optional sweep cache per family bound
            echo: Receives the one-line summaries
        """
        self.config = config
        self.writer = writer or ArtifactWriter(Path(config.out_dir))
        self._storage_factory = storage_factory or self._default_storage
        self._echo = echo
        self._families: Dict[int, FamilySlice] = {}
        self._sweeps: Dict[int, List[LogDerivValue]] = {}
        self._batch: Optional[ModelSampleBatch] = None
        self.threads = set_thread_budget(config.threads)
        self._handlers: Dict[Command, Callable[[], None]] = {
            Command.ENUMERATE: self.cmd_enumerate,
            Command.SWEEP: self.cmd_sweep,
            Command.SAMPLE: self.cmd_sample,
            Command.CHARFN: self.cmd_charfn,
            Command.DENSITY: self.cmd_density,
            Command.COMPARE: self.cmd_compare,
            Command.MOMENTS: self.cmd_moments,
            Command.TAILS: self.cmd_tails,
            Command.MINIMA: self.cmd_minima,
            Command.BRIDGE: self.cmd_bridge,
            Command.SMALLVALUES: self.cmd_smallvalues,
        }
        logger.info(f"QuadLab initialized: command={config.command.value}, threads={self.threads}")

    def _default_storage(self, bound: int) -> SweepStorage:
        return TextSweepStorage(self.writer.path(f"sweep_N{bound}.cache"))

    def family(self, bound: int) -> FamilySlice:
        """F(N), read from family_N{N}.txt when an earlier enumerate left one behind."""
        if bound not in self._families:
            self._families[bound] = self._load_family(bound) or enumerate_family(
                bound, include_d1=self.config.include_d1, memory_budget_mb=self.config.memory_budget_mb
            )
        return self._families[bound]

    def _load_family(self, bound: int) -> Optional[FamilySlice]:
        path = self.writer.path(f"family_N{bound}.txt")
        if not path.exists():
            return None
        try:
            family = read_family(path, include_d1=self.config.include_d1)
        except StorageError as e:
            logger.warning(f"Ignoring family file: {e}")
            return None
        has_d1 = bool((family.members == 1).any())
        if family.bound != bound or has_d1 != self.config.include_d1:
            logger.warning(f"Family file {path} does not match N={bound}, include_d1={self.config.include_d1}")
            return None
        logger.info(f"Family F({bound}) read from {path}")
        return family

    def _cached_sweep(self, bound: int, params: TruncationParams, threads: int = 1) -> List[LogDerivValue]:
        return self.sweep(bound)

    def _cached_batch(self, config: ModelConfig, count: int, threads: int = 1) -> ModelSampleBatch:
        return self.batch()

    def sweep(self, bound: int) -> List[LogDerivValue]:
        """Family sweep at the configured truncation policy, through the cache."""
        if bound not in self._sweeps:
            params = self.config.truncation_for(bound)
            evaluator = FamilyEvaluator(params, threads=self.threads)
            self._sweeps[bound] = evaluator.evaluate(self.family(bound), self._storage_factory(bound))
        return self._sweeps[bound]

    def batch(self) -> ModelSampleBatch:
        if self._batch is None:
            self._batch = sample_L(self.config.model_config(), self.config.samples, self.threads)
        return self._batch

    def run(self) -> int:
        """
        Execute the configured command.

        Returns:
            Exit status 0 on success
        """
        self._handlers[self.config.command]()
        return 0

    def cmd_enumerate(self) -> None:
        family = self.family(self.config.bound)
        write_family(family, self.writer.path(f"family_N{family.bound}.txt"))
        self._echo(f"N={family.bound} count={family.count} density={family.density():.6f}")

    def cmd_sweep(self) -> None:
        bound = self.config.bound
        values = self.sweep(bound)
        self.writer.write_sweep_csv(f"sweep_N{bound}.csv", values)
        flagged = sum(v.flagged for v in values)
        self._echo(f"N={bound} values={len(values)} flagged={flagged}")

    def cmd_sample(self) -> None:
        batch = self.batch()
        write_batch(batch, self.writer.path("samples.bin"))
        self.writer.write_batch_csv("samples.csv", batch)
        self._echo(
            f"samples={batch.count} eps={batch.config.epsilon} P={batch.config.prime_cutoff} "
            f"seed={batch.config.seed} tailEstimate={batch.tail_estimate:.6g}"
        )

    def cmd_charfn(self) -> None:
        cfg = self.config
        curve = charfn_curve(cfg.taus, cfg.epsilon, cfg.prime_cutoff)
        self.writer.write_charfn_csv("charfn.csv", curve)
        for tau, value, tail in zip(curve.taus.tolist(), curve.values.tolist(), curve.tail_estimates.tolist()):
            self._echo(f"tau={tau} re={value.real:.12g} im={value.imag:.12g} tailEstimate={tail:.6g}")
        window = (curve.taus >= 10.0) & (curve.taus <= 200.0)
        if window.sum() >= 2:
            self.writer.write_json("charfn.json", {"decay_slope": fit_decay_slope(curve)})

    def cmd_density(self) -> None:
        cfg = self.config
        curve = density_from_charfn(cfg.epsilon, cfg.grid(), None, cfg.prime_cutoff)
        self.writer.write_density_csv("density.csv", curve)
        at_zero = float(curve.values[abs(curve.grid).argmin()])
        summary = {
            "cutoff": curve.cutoff,
            "intervals": curve.intervals,
            "mass": curve.total_mass(),
            "min_value": float(curve.values.min()),
            "density_at_zero": at_zero,
        }
        self.writer.write_json("density.json", summary)
        self._echo(f"T={curve.cutoff} mass={summary['mass']:.6f} density(0)={at_zero:.6f}")

    def cmd_compare(self) -> None:
        cfg = self.config
        rows = discrepancy_report(
            cfg.bounds, cfg.epsilon, cfg.truncation_for, cfg.model_config(), cfg.samples, self.threads,
            evaluate=self._cached_sweep, sample=self._cached_batch,
        )
        self.writer.write_rows("compare.csv", rows)
        self.writer.write_json("compare.json", trend_summary(rows))
        for row in rows:
            self._echo(f"N={row.bound} KS={row.ks:.6f} benchmark={row.benchmark:.6f} ratio={row.ratio:.4f}")

    def cmd_moments(self) -> None:
        cfg = self.config
        rows = moment_compare(
            cfg.k_values, cfg.bound, cfg.epsilon, cfg.truncation_for(cfg.bound), cfg.model_config(),
            cfg.samples, self.threads, k_max=cfg.k_max, evaluate=self._cached_sweep, sample=self._cached_batch,
        )
        self.writer.write_rows("moments.csv", rows)
        growth = moment_growth(self.batch(), cfg.k_values)
        self.writer.write_csv("moment_growth.csv", ["k", "root", "ratio"], growth)
        for row in rows:
            self._echo(
                f"k={row.k} family={row.family_moment:.6f} model={row.exact_moment:.6f} "
                f"mc={row.mc_moment:.6f}+-{row.mc_stderr:.6f} gap^(1/k)={row.gap_root:.6f}"
            )

    def cmd_tails(self) -> None:
        cfg = self.config
        out = []
        for bound in cfg.bounds:
            values = self.sweep(bound)
            _, scale = benchmark_pair(bound, cfg.epsilon)
            freq = tail_frequency(values, bound, cfg.epsilon)
            flagged = sum(v.flagged for v in values) / len(values)
            out.append((bound, scale, freq, flagged))
            self._echo(f"N={bound} threshold={scale:.6f} tail={freq:.6f} flagged={flagged:.6f}")
        self.writer.write_csv("tails.csv", ["N", "threshold", "tailFrequency", "flaggedFraction"], out)

    def cmd_minima(self) -> None:
        cfg = self.config
        out = []
        for bound in cfg.bounds:
            d, m = min_abs_value(self.sweep(bound))
            benchmark, _ = benchmark_pair(bound, cfg.epsilon)
            out.append((bound, d, m, benchmark, m / benchmark))
            self._echo(f"N={bound} D={d} m_N={m:.6g} ratio={m / benchmark:.6g}")
        self.writer.write_csv("minima.csv", ["N", "D", "minAbs", "benchmark", "ratio"], out)

    def cmd_bridge(self) -> None:
        cfg = self.config
        rows = bridge_rows(cfg.n_values, cfg.bounds)
        self.writer.write_rows("bridge.csv", rows)
        worst = max((r.normalized_gap for r in rows), default=0.0)
        self._echo(f"bridge rows={len(rows)} max normalized gap={worst:.6f}")

    def cmd_smallvalues(self) -> None:
        cfg = self.config
        model = model_distribution(self.batch())
        probability = model_small_value_probability(model, cfg.eta)
        out = []
        for bound in cfg.bounds:
            share = small_value_share(self.sweep(bound), cfg.eta)
            out.append((bound, cfg.eta, share, probability))
            self._echo(f"N={bound} eta={cfg.eta} family={share:.6f} model={probability:.6f}")
        self.writer.write_csv("smallvalues.csv", ["N", "eta", "familyShare", "modelProbability"], out)


class ConfigArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports bad flags as ConfigError instead of exiting."""

    def error(self, message: str):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = ConfigArgumentParser(prog="quadlab", description="Value distribution of L'/L(1/2+eps, chi_D)")
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--config", type=Path, help="key=value configuration file")
    parser.add_argument("--eps", dest="epsilon")
    parser.add_argument("--N", dest="N", help="family bound, or a comma-separated list")
    parser.add_argument("--lambda", dest="lambda_value")
    parser.add_argument("--prime-cutoff", dest="prime_cutoff")
    parser.add_argument("--samples")
    parser.add_argument("--seed")
    parser.add_argument("--threads")
    parser.add_argument("--out", dest="out_dir")
    parser.add_argument("--include-d1", dest="include_d1", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--tau", dest="taus", help="comma-separated tau values")
    parser.add_argument("--k", dest="k_values", help="comma-separated moment orders")
    parser.add_argument("--n-values", dest="n_values", help="comma-separated n for the bridge table")
    parser.add_argument("--eta")
    parser.add_argument("--log-level", dest="log_level")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, object]:
    """Typed overrides from parsed flags; --N fills both bound and bounds."""
    values: Dict[str, object] = {"command": Command(args.command)}
    for key in ("epsilon", "lambda_value", "prime_cutoff", "samples", "seed", "threads",
                "out_dir", "taus", "k_values", "n_values", "eta", "log_level"):
        raw = getattr(args, key)
        if raw is not None:
            values[key] = parse_value(key, raw)
    if args.include_d1 is not None:
        values["include_d1"] = args.include_d1
    if args.N is not None:
        bounds = parse_value("bounds", args.N)
        values["bounds"] = bounds
        values["bound"] = bounds[-1]
    return values


def setup_logging(config: RunConfig) -> None:
    """
    Configure logging based on config settings.

    Args:
        config: Run configuration
    """
    logging.basicConfig(
        format=config.log_format,
        level=getattr(logging, config.log_level.upper(), logging.INFO)
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point.
    Loads configuration and runs one subcommand.

    Returns:
        0 on success, 1 invalid config, 2 resource limits, 3 I/O failure
    """
    try:
        args = build_parser().parse_args(argv)
        config = load_config(overrides_from_args(args), config_file=args.config)
        setup_logging(config)
        return QuadLab(config).run()
    except QuadLabError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"{StorageError.__name__}: {e}", file=sys.stderr)
        return StorageError.exit_code


if __name__ == "__main__":
    sys.exit(main())

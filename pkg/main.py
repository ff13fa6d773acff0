"""
Command-line interface for the private QNN probabilistic OPF toolkit

Subcommands: generate, train, evaluate, popf, accountant, figure3, bench,
table2, losstrace. Flags override config.yaml, which overrides built-in defaults.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from src.config import ExperimentConfig, get_settings, load_experiment_config
from src.data_processor import DataProcessor
from src.exceptions import ConfigurationError, QPOPFError
from src.experiments import (
    accountant_report,
    evaluate_model,
    fit_circuit,
    fit_mlp,
    load_model,
    provenance,
    quantum_time,
    run_figure3_experiment,
    run_loss_trace_experiment,
    run_table2_experiment,
    run_table3_experiment,
    sigma_label,
)
from src.grid import BUILTIN_GRIDS, GridModel, load_grid
from src.quantum_core import CircuitModel, circuit_depth
from src.schemas import RunConfig
from src.uncertainty import build_dataset, monte_carlo_popf

# Load environment variables from .env if present
load_dotenv()

logger = logging.getLogger(__name__)

DATASET_FILE = "dataset.csv"


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def model_filename(kind: str, sigma: float, seed: int) -> str:
    return f"{kind}_sigma{sigma_label(sigma)}_seed{seed}.json"


class App:
    """
    Resolves configuration for one invocation and runs a subcommand

    Args:
        args: Parsed command-line arguments
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg: ExperimentConfig = load_experiment_config(args.config)
        configure_logging(args, self.cfg.log_level)
        settings = get_settings()
        self.progress = settings.progress and not args.quiet
        self.seed = args.seed if args.seed is not None else self.cfg.seed
        self.seeds = args.seeds if args.seeds else [self.seed]
        out = args.out or settings.output_dir or self.cfg.output_dir
        self.out = Path(out).resolve()
        self.io = DataProcessor(self.out)
        self.run_config = self._run_config()

    def _run_config(self) -> RunConfig:
        args = self.args
        sigmas = getattr(args, "sigmas", None) or (
            [args.sigma] if getattr(args, "sigma", None) is not None else self._default_sigmas()
        )
        options = {
            k: (str(Path(v).resolve()) if k in ("data", "models", "model", "config") and v else v)
            for k, v in vars(args).items()
            if k not in ("command", "seed", "seeds", "grid", "sigmas", "epochs", "out", "verbose", "quiet")
        }
        try:
            return RunConfig(
                command=args.command,
                seed=self.seed,
                seeds=self.seeds,
                grid=self.grid_source,
                sigmas=sigmas,
                epochs=self.epochs,
                out=str(self.out),
                options=options,
            )
        except ValidationError as exc:
            raise ConfigurationError(f"invalid arguments: {exc}") from exc

    def _default_sigmas(self) -> List[float]:
        return self.cfg.table3_sigmas if self.args.command == "bench" else self.cfg.sigmas

    @property
    def grid_source(self) -> str:
        grid = getattr(self.args, "grid", None) or self.cfg.grid
        return grid if grid in BUILTIN_GRIDS else str(Path(grid).resolve())

    @property
    def epochs(self) -> int:
        return getattr(self.args, "epochs", None) or self.cfg.epochs

    @property
    def sigmas(self) -> List[float]:
        return self.run_config.sigmas

    def grid(self) -> GridModel:
        placements = self.cfg.placements() if self.grid_source in BUILTIN_GRIDS else None
        return load_grid(self.grid_source, placements)

    def n_samples(self) -> int:
        return getattr(self.args, "n", None) or self.cfg.n_samples

    def dataset(self) -> Tuple[np.ndarray, np.ndarray]:
        """--data CSV when given, otherwise freshly generated from the configured grid"""
        if getattr(self.args, "data", None):
            return self.io.read_dataset(self.args.data)
        logger.info("No --data given; generating a dataset")
        return build_dataset(
            self.grid(), self.cfg.distribution_spec(), self.n_samples(), self.cfg.target_bus,
            np.random.default_rng(self.seed), progress=self.progress,
        )

    def report(self, name: str, payload: Dict) -> Path:
        payload = dict(payload)
        payload["provenance"] = provenance(self.run_config)
        return self.io.write_report(name, payload)

    def load_circuits(self, seed: int) -> Dict[float, CircuitModel]:
        models_dir = Path(self.args.models)
        models = {}
        for sigma in self.sigmas:
            path = models_dir / model_filename("qnn", sigma, seed)
            if not path.exists():
                raise ConfigurationError(f"no trained model for sigma {sigma:g}: {path} is missing")
            model = load_model(path)
            if not isinstance(model, CircuitModel):
                raise ConfigurationError(f"{path} is not a circuit model")
            models[sigma] = model
        return models

    # Subcommands

    def generate(self) -> int:
        grid = self.grid()
        X, y = build_dataset(
            grid, self.cfg.distribution_spec(), self.n_samples(), self.cfg.target_bus,
            np.random.default_rng(self.seed), progress=self.progress,
        )
        self.io.write_dataset(DATASET_FILE, X, y)
        self.report("dataset_manifest.json", {"rows": int(y.size), "grid": grid.summary()})
        return 0

    def train(self) -> int:
        X, y = self.dataset()
        fit = fit_mlp if self.args.model == "mlp" else fit_circuit
        exit_code = 0
        for seed in self.seeds:
            for sigma in self.sigmas:
                result = fit(X, y, self.cfg, sigma, seed, self.epochs, self.progress)
                name = model_filename(self.args.model, sigma, seed)
                self.io.write_report(name, result.model.to_dict())
                manifest = result.manifest(self.cfg.dp_config(sigma, seed, self.epochs).model_copy(
                    update={"dataset_size": int(y.size)}
                ))
                self.report(name.replace(".json", "_manifest.json"), manifest)
                if result.status == "aborted":
                    logger.warning(f"{name}: training aborted, {result.diagnostic}")
                    exit_code = 3
        return exit_code

    def evaluate(self) -> int:
        model = load_model(self.args.model)
        X, y = self.io.read_dataset(self.args.data)
        metrics = evaluate_model(model, X, y)
        metrics["n_params"] = model.n_params
        if isinstance(model, CircuitModel):
            metrics["circuit_depth"] = circuit_depth(model)
            metrics["quantum_time_seconds"] = quantum_time(model, self.cfg.timing_model())
        self.report(f"{Path(self.args.model).stem}_evaluation.json", metrics)
        print(json.dumps(metrics, indent=2))
        return 0

    def popf(self) -> int:
        result = monte_carlo_popf(
            self.grid(), self.cfg.distribution_spec(), self.n_samples(),
            np.random.default_rng(self.seed), progress=self.progress,
        )
        self.io.write_table("popf_samples.csv", result.records)
        self.report("popf.json", {
            "n_feasible": result.n_feasible,
            "n_total": result.n_total,
            "infeasible": [{"sample": i, "reason": r} for i, r in result.infeasible],
            "stats": result.report(),
        })
        return 0

    def accountant(self) -> int:
        args = self.args
        spend = accountant_report(
            sigma=args.sigma,
            delta=args.delta if args.delta is not None else self.cfg.delta,
            batch_size=args.batch if args.batch is not None else self.cfg.batch_size,
            dataset_size=args.dataset_size if args.dataset_size is not None else self.cfg.n_samples,
            epochs=self.epochs,
            delta_prime=args.delta_prime if args.delta_prime is not None else self.cfg.delta_prime,
        )
        if args.reading == "both":
            payload = {k: v.report() for k, v in spend.items()}
        else:
            payload = spend[args.reading].report()
        print(json.dumps(payload, indent=2, allow_nan=False))
        return 0

    def figure3(self) -> int:
        models = self.load_circuits(self.seed)
        frame = run_figure3_experiment(
            self.grid(), models, self.cfg.distribution_spec(), self.sigmas, self.cfg.target_bus,
            t_max=self.args.t_max if self.args.t_max is not None else self.cfg.t_max,
            load_scale=self.args.load_scale if self.args.load_scale is not None else self.cfg.load_scale,
            shots=self.cfg.shots,
            repeats=self.cfg.shot_repeats,
            rng=np.random.default_rng(self.seed),
            progress=self.progress,
        )
        self.io.write_table("figure3.csv", frame)
        self.report("figure3.json", {"rows": len(frame)})
        return 0

    def table2(self) -> int:
        models = self.load_circuits(self.seed)
        frame = run_table2_experiment(
            self.grid(), models, self.cfg.distribution_spec(), self.cfg.target_bus,
            n_samples=self.n_samples(), rng=np.random.default_rng(self.seed), progress=self.progress,
        )
        self.io.write_table("table2.csv", frame)
        self.report("table2.json", {"rows": frame.to_dict(orient="records")})
        return 0

    def bench(self) -> int:
        X, y = self.dataset()
        rows, aggregate = run_table3_experiment(
            X, y, self.cfg, self.sigmas, self.seeds, epochs=self.epochs, progress=self.progress,
        )
        self.io.write_table("table3_runs.csv", rows)
        self.io.write_table("table3.csv", aggregate)
        self.report("table3.json", {"aggregate": aggregate.to_dict(orient="records")})
        return 0

    def losstrace(self) -> int:
        X, y = self.dataset()
        sigma = self.args.sigma if self.args.sigma is not None else 1.0
        frame = run_loss_trace_experiment(X, y, self.cfg, sigma, self.seed, self.epochs, self.progress)
        self.io.write_table("loss_trace.csv", frame)
        return 0

    def run(self) -> int:
        logger.info(f"Running {self.args.command} (seed {self.seed}, output {self.out})")
        return getattr(self, self.args.command)()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Differentially private quantum neural networks for probabilistic OPF"
    )
    parser.add_argument('--config', help='YAML defaults file (default: config.yaml)')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--quiet', action='store_true', help='Warnings only, no progress bars')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='Random seed')
    common.add_argument('--seeds', type=_int_list, help='Comma-separated seeds for multi-seed runs')
    common.add_argument('--out', help='Output directory')
    common.add_argument('--grid', help='Built-in grid name or grid JSON path')
    common.add_argument('--epochs', type=int, help='Training epochs (accountant: composition rounds)')

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser('generate', parents=[common], help='Generate an OPF dataset')
    p.add_argument('--n', type=int, help='Number of Monte Carlo scenarios')

    p = sub.add_parser('train', parents=[common], help='Train models, one per sigma and seed')
    p.add_argument('--model', choices=['qnn', 'mlp'], default='qnn')
    p.add_argument('--data', help='Dataset CSV (generated when omitted)')
    p.add_argument('--n', type=int, help='Scenarios when generating')
    p.add_argument('--sigma', type=float, help='Noise multiplier')
    p.add_argument('--sigmas', type=_float_list, help='Comma-separated noise multipliers')

    p = sub.add_parser('evaluate', parents=[common], help='Score a trained model on a dataset')
    p.add_argument('--model', required=True, help='Model JSON')
    p.add_argument('--data', required=True, help='Dataset CSV')

    p = sub.add_parser('popf', parents=[common], help='Monte Carlo probabilistic OPF statistics')
    p.add_argument('--n', type=int, help='Number of Monte Carlo scenarios')

    p = sub.add_parser('accountant', parents=[common], help='Print the privacy spend as JSON')
    p.add_argument('--sigma', type=float, required=True)
    p.add_argument('--delta', type=float)
    p.add_argument('--batch', type=int)
    p.add_argument('--dataset-size', type=int)
    p.add_argument('--delta-prime', type=float)
    p.add_argument('--reading', choices=['epochs', 'steps', 'both'], default='epochs',
                   help='Compose over epochs (default), over steps, or report both')

    p = sub.add_parser('figure3', parents=[common], help='Voltage traces under the periodic load')
    p.add_argument('--models', required=True, help='Directory holding qnn_sigma*_seed*.json')
    p.add_argument('--sigmas', type=_float_list)
    p.add_argument('--t-max', type=int)
    p.add_argument('--load-scale', type=float, help='Nominal customer load in MW')

    p = sub.add_parser('table2', parents=[common], help='POPF accuracy of trained circuits')
    p.add_argument('--models', required=True, help='Directory holding qnn_sigma*_seed*.json')
    p.add_argument('--sigmas', type=_float_list)
    p.add_argument('--n', type=int, help='Number of Monte Carlo scenarios')

    p = sub.add_parser('bench', parents=[common], help='QNN vs MLP accuracy and timing')
    p.add_argument('--data', help='Dataset CSV (generated when omitted)')
    p.add_argument('--n', type=int, help='Scenarios when generating')
    p.add_argument('--sigmas', type=_float_list)

    p = sub.add_parser('losstrace', parents=[common], help='Per-step training loss of QNN and MLP')
    p.add_argument('--data', help='Dataset CSV (generated when omitted)')
    p.add_argument('--n', type=int, help='Scenarios when generating')
    p.add_argument('--sigma', type=float, help='Noise multiplier (default 1)')

    return parser


def configure_logging(args: argparse.Namespace, default_level: str = "INFO") -> None:
    level = (get_settings().log_level or default_level).upper()
    if args.verbose:
        level = "DEBUG"
    elif args.quiet:
        level = "WARNING"
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logging.getLogger().setLevel(getattr(logging, level, logging.INFO))


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    configure_logging(args)
    try:
        return App(args).run()
    except QPOPFError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())

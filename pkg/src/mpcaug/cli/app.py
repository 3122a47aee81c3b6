import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from ..errors import DimensionError, EmptyDatasetError
from ..learning.augment import generate_augmented, generate_baseline
from ..learning.benchmark import bench_report
from ..learning.dataset import load_dataset, save_dataset, speedup, timing_report
from ..learning.policy import load_policy, save_policy, train
from ..serialization import dumps
from ..sim.closed_loop import (
    ApproximateController,
    ExactMpcController,
    Trajectory,
    compare,
    run_closed_loop,
    write_plot_data,
)
from .config import ResolvedRun, RunConfig, seed_for
from .display import Display
from .error_handlers import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, ErrorHandlerRegistry
from .validators import ConfigValidator, ValidationReporter

logger = logging.getLogger(__name__)


def _write_json(path: Path, data: Any):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data) + "\n")


class MpcAugApp:
    """Runs one pipeline stage per call; every stage reads and writes files under the output directory."""

    def __init__(self, config: RunConfig, display: Optional[Display] = None):
        self.config = config
        self.display = display or Display()
        self.validator = ConfigValidator()
        self.reporter = ValidationReporter()
        self._run: Optional[ResolvedRun] = None

    @property
    def out(self) -> Path:
        return self.config.output_dir

    @property
    def run(self) -> ResolvedRun:
        if self._run is None:
            self._run = self.config.resolve()
        return self._run

    def _check_input(self, path: Path, field: str) -> bool:
        issues = self.validator.validate_input_file(path, field)
        if self.reporter.has_errors(issues):
            self.display.error(self.reporter.format_issues(issues))
            return False
        return True

    def _echo_config(self):
        path = self.config.write_resolved(self.run)
        self.display.written("config", path)

    def dataset_path(self, mode: Optional[str] = None) -> Path:
        return self.out / f"dataset-{mode or self.config.mode}.jsonl"

    def generate(self, timing: bool = True) -> int:
        run, mode = self.run, self.config.mode
        self._echo_config()
        fn = generate_augmented if mode == "augmented" else generate_baseline
        ds = fn(run.spec, run.sampler, run.solver, jobs=self.config.jobs)

        path = self.dataset_path()
        save_dataset(ds, path, timing=timing)
        self.display.written("dataset", path)

        counts = ds.count_by_provenance()
        summary: Dict[str, Any] = {
            "problem": run.spec.name,
            "mode": mode,
            "counts": ds.meta.counts,
            "rejections": ds.meta.rejections,
        }
        try:
            report = timing_report(ds)
        except EmptyDatasetError:
            self.display.warning("no feasible sample, timing report skipped")
        else:
            ratio = speedup(report)
            summary["timing"] = {k: row.as_dict() for k, row in report.items()}
            summary["speedup"] = ratio
            self.display.timing_table(summary["timing"], ratio)
        timing_path = self.out / f"timing-{mode}.json"
        _write_json(timing_path, summary)
        self.display.written("timing", timing_path)
        self.display.metrics({**counts, "infeasible": ds.meta.counts.get("infeasible", 0)})
        return EXIT_OK

    def train(self, dataset: Optional[Path] = None) -> int:
        path = Path(dataset) if dataset else self.dataset_path()
        if not self._check_input(path, "dataset"):
            return EXIT_USAGE
        run = self.run
        ds = load_dataset(path)
        if ds.meta.ocp_hash and ds.meta.ocp_hash != run.spec.fingerprint():
            self.display.warning(f"{path} was generated for a different problem setup ({ds.meta.ocp_hash})")
        self._echo_config()

        bounds = (run.spec.input_bounds.lower, run.spec.input_bounds.upper)
        result = train(ds, run.split, run.training, bounds)
        summary = result.summary()

        policy_path = self.out / "policy.jsonl"
        save_policy(
            result.params,
            policy_path,
            extra={
                "ocp_hash": run.spec.fingerprint(),
                "dataset": path.name,
                "parameter_names": ds.meta.parameter_names,
                "input_names": ds.meta.input_names,
                "training": summary,
            },
        )
        metrics_path = self.out / "training.json"
        _write_json(
            metrics_path,
            {
                **summary,
                "history": [
                    {"epoch": r.epoch, "train_mse": r.train_mse, "val_mse": r.val_mse, "lr": r.learning_rate}
                    for r in result.history
                ],
            },
        )
        self.display.written("policy", policy_path)
        self.display.written("metrics", metrics_path)
        self.display.metrics(summary)
        return EXIT_OK

    def simulate(self, policy: Optional[Path] = None, emit_plots: bool = False) -> int:
        path = Path(policy) if policy else self.out / "policy.jsonl"
        if not self._check_input(path, "policy"):
            return EXIT_USAGE
        run = self.run
        params = load_policy(path)
        if params.n_in != run.spec.n_p or params.n_out != run.spec.model.n_u:
            raise DimensionError(
                f"policy maps {params.n_in} -> {params.n_out}, the problem needs {run.spec.n_p} -> {run.spec.model.n_u}"
            )
        self._echo_config()

        model = run.spec.model
        tracked = run.spec.cost.tracked_states
        exact = ExactMpcController(run.spec, replace(run.solver, certify=False))
        approx = ApproximateController(params)
        results: List[Dict[str, Any]] = []
        pairs: List[Tuple[Trajectory, Trajectory]] = []
        failed = False
        for scenario in run.scenarios:
            trajectories = [run_closed_loop(c, scenario, run.spec) for c in (exact, approx)]
            pairs.append((trajectories[0], trajectories[1]))
            for traj in trajectories:
                table = self.out / f"trajectory-{scenario.name}-{traj.controller}.csv"
                traj.write_table(table, model)
                self.display.written("trajectory", table)
                if traj.failure:
                    failed = True
                    self.display.error(f"{traj.controller} on '{scenario.name}': {traj.failure}")
            metrics = compare(*trajectories, tracked)
            results.append(metrics)
            self.display.heading(scenario.name)
            self.display.metrics(
                {
                    "tracking error (exact)": metrics["tracking_error"][0],
                    "tracking error (approx)": metrics["tracking_error"][1],
                    "max input deviation": metrics["max_input_deviation"],
                    "violations (exact/approx)": f"{metrics['violations'][0]}/{metrics['violations'][1]}",
                }
            )

        plots: List[str] = []
        if emit_plots:
            for plot in write_plot_data(self.out, pairs, model):
                plots.append(plot.name)
                self.display.written("plot data", plot)

        metrics_path = self.out / "simulation.json"
        _write_json(metrics_path, {"policy": path.name, "scenarios": results, "plots": plots})
        self.display.written("metrics", metrics_path)
        return EXIT_FAILURE if failed else EXIT_OK

    def bench(self, dataset: Optional[Path] = None, pairs: int = 10) -> int:
        run = self.run
        if dataset:
            if not self._check_input(Path(dataset), "dataset"):
                return EXIT_USAGE
            ds = load_dataset(Path(dataset))
        else:
            self._echo_config()
            ds = generate_augmented(run.spec, run.sampler, run.solver, jobs=self.config.jobs)
        report = bench_report(run.spec, ds, run.solver, pairs, seed_for(self.config.seed, "bench"))
        path = self.out / "bench.json"
        _write_json(path, report)

        self.display.timing_table(report["timing"], report["speedup"])
        resolve = report["resolve"]
        self.display.metrics(
            {
                "max solution Lipschitz ratio": resolve["solution_lipschitz"]["max"],
                "max objective Lipschitz ratio": resolve["objective_lipschitz"]["max"],
                "max predictor label error": resolve["label_error"]["max"],
            }
        )
        self.display.written("report", path)
        return EXIT_OK

    def echo(self) -> int:
        self.display.print(self.config.dump_resolved(self.run))
        return EXIT_OK


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--problem", help="built-in problem (cstr, building) or a problem YAML file")
    common.add_argument("--horizon", type=int, help="override the prediction horizon")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--jobs", type=int, help="sampling worker processes")
    common.add_argument("--out", type=Path, help="output directory (or MPCAUG_OUTPUT_DIR)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="mpcaug",
        description="mpcaug - sensitivity-based data augmentation for approximate MPC",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="solve anchors and write a dataset")
    gen.add_argument("--mode", choices=["augmented", "baseline"])
    gen.add_argument("--ns", type=int, help="number of anchors")
    gen.add_argument("--np", type=int, help="predictor samples per anchor (random sampling)")
    gen.add_argument("--no-timing", action="store_true", help="write zero wall times for byte-identical files")

    tr = sub.add_parser("train", parents=[common], help="fit the policy network on a dataset")
    tr.add_argument("--dataset", type=Path, help="dataset file (default: <out>/dataset-<mode>.jsonl)")
    tr.add_argument("--mode", choices=["augmented", "baseline"])

    sim = sub.add_parser("simulate", parents=[common], help="closed-loop comparison of MPC and policy")
    sim.add_argument("--policy", type=Path, help="policy file (default: <out>/policy.jsonl)")
    sim.add_argument("--emit-plots-data", action="store_true", help="also write one long-format table per plot")

    bench = sub.add_parser("bench", parents=[common], help="timing and predictor accuracy report")
    bench.add_argument("--dataset", type=Path, help="benchmark an existing dataset instead of generating one")
    bench.add_argument("--ns", type=int, help="number of anchors")
    bench.add_argument("--np", type=int, help="predictor samples per anchor (random sampling)")
    bench.add_argument("--pairs", type=int, default=10, help="predictor samples to re-solve")

    sub.add_parser("echo", parents=[common], help="print the resolved configuration")
    return parser


def configure_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def run(argv: Optional[List[str]] = None, display: Optional[Display] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    display = display or Display()
    registry = ErrorHandlerRegistry()

    try:
        config = RunConfig.load(args.config).with_overrides(
            problem=args.problem,
            mode=getattr(args, "mode", None),
            n_s=getattr(args, "ns", None),
            n_p=getattr(args, "np", None),
            jobs=args.jobs,
            seed=args.seed,
            output_dir=args.out,
            horizon=args.horizon,
        )
        app = MpcAugApp(config, display)
        if args.command == "generate":
            return app.generate(timing=not args.no_timing)
        if args.command == "train":
            return app.train(args.dataset)
        if args.command == "simulate":
            return app.simulate(args.policy, emit_plots=args.emit_plots_data)
        if args.command == "bench":
            return app.bench(args.dataset, args.pairs)
        return app.echo()
    except KeyboardInterrupt:
        return 130
    except Exception as e:
        diagnostic = registry.resolve(e, args.command)
        logger.debug("command failed", exc_info=True)
        display.error(diagnostic.message, diagnostic.hint)
        return diagnostic.exit_code


def main():
    sys.exit(run())

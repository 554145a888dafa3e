#!/usr/bin/env python3
"""Experiment runner for the black-box phase estimation protocol.

Usage:
    python -m src.cli run --config experiment.yaml [--out results/run.json]
    python -m src.cli verify --config experiment.yaml
    python -m src.cli sweep --config experiment.yaml
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)
from structlog import PrintLogger, configure, get_logger, make_filtering_bound_logger
from structlog.dev import ConsoleRenderer
from structlog.processors import JSONRenderer, TimeStamper, add_log_level

from .blackbox import (
    BlackBoxUnitary,
    HermitianGenerator,
    from_hamiltonian,
    from_spectrum,
    haar_random,
    unseal,
)
from .config import settings
from .qpe import InitialPreparation, ProtocolConfig, ProtocolMode, ProtocolVariant, RegisterPreparation
from .results import ResultWriter, sweep_summary_markdown
from .spectra import (
    autocorrelation_estimate,
    choose_time_step,
    detect_periodicities,
    nearest_grid_period,
    run_campaign,
)
from .verify import run_checks

logger = get_logger()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def configure_logging(level: str = "INFO", fmt: str = "json") -> None:
    """Configure structured logging to stderr"""
    renderer = ConsoleRenderer() if fmt == "console" else JSONRenderer()
    configure(
        processors=[
            TimeStamper(fmt="iso"),
            add_log_level,
            renderer
        ],
        wrapper_class=make_filtering_bound_logger(logging.getLevelName(level.upper())),
        # sys.stderr is looked up each time a logger is built
        logger_factory=_stderr_logger,
        cache_logger_on_first_use=False
    )


def _stderr_logger(*args: Any) -> PrintLogger:
    return PrintLogger(sys.stderr)


class HaarInstance(BaseModel):
    """Haar-random black box"""
    model_config = ConfigDict(extra="forbid")
    kind: Literal["haar"]
    n: int = Field(..., ge=1)
    seed: int = Field(0, ge=0)


class SpectrumInstance(BaseModel):
    """Black box with a prescribed eigenphase list"""
    model_config = ConfigDict(extra="forbid")
    kind: Literal["spectrum"]
    phases: List[float] = Field(..., min_length=2)
    seed: int = Field(0, ge=0)

    @field_validator("phases")
    @classmethod
    def _power_of_two(cls, phases: List[float]) -> List[float]:
        size = len(phases)
        if size & (size - 1):
            raise ValueError(f"phase list length must be a power of two, got {size}")
        return phases


class HamiltonianInstance(BaseModel):
    """exp(-iHt) for a Hamiltonian read from a matrix file"""
    model_config = ConfigDict(extra="forbid")
    kind: Literal["hamiltonian"]
    matrix_file: Path
    t: Optional[float] = Field(None, gt=0)
    delta_bound: Optional[float] = Field(None, gt=0, description="Derive t from t·Δ ≤ π")

    @field_validator("matrix_file")
    @classmethod
    def _exists(cls, path: Path) -> Path:
        if not path.is_file():
            raise ValueError(f"matrix file not found: {path}")
        return path

    @model_validator(mode="after")
    def _one_time(self) -> "HamiltonianInstance":
        if (self.t is None) == (self.delta_bound is None):
            raise ValueError("give exactly one of 't' or 'delta_bound'")
        return self


Instance = Annotated[
    Union[HaarInstance, SpectrumInstance, HamiltonianInstance],
    Field(discriminator="kind"),
]


def _default_preparation() -> InitialPreparation:
    return InitialPreparation.same(RegisterPreparation.maximally_mixed())


class RunConfig(BaseModel):
    """One experiment, as read from a YAML or JSON document"""
    model_config = ConfigDict(extra="forbid")

    command: Literal["run", "verify", "sweep"] = "run"
    instance: Instance
    k: Optional[int] = Field(None, ge=1)
    k_values: Optional[List[int]] = None
    shots: Union[PositiveInt, Literal["exact"]] = "exact"
    prep: InitialPreparation = Field(default_factory=_default_preparation)
    mode: ProtocolMode = "full-swap"
    variant: ProtocolVariant = "sandwich"
    threshold: float = Field(default_factory=lambda: settings.analysis.threshold, gt=0, lt=1)
    output: Optional[Path] = None
    seed: int = Field(0, ge=0)
    threads: Optional[int] = Field(None, ge=1)
    expected_period: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _command_fields(self) -> "RunConfig":
        if self.command in ("run", "verify") and self.k is None:
            raise ValueError(f"field 'k' is required for the {self.command} command")
        if self.command == "sweep":
            if not self.k_values:
                raise ValueError("field 'k_values' must list at least one k for the sweep command")
            if any(k < 1 for k in self.k_values):
                raise ValueError("field 'k_values' entries must be positive")
        return self

    def register_qubits(self) -> int:
        if isinstance(self.instance, HaarInstance):
            return self.instance.n
        if isinstance(self.instance, SpectrumInstance):
            return len(self.instance.phases).bit_length() - 1
        return HermitianGenerator.from_text(self.instance.matrix_file).n

    def protocol(self, k: int) -> ProtocolConfig:
        return ProtocolConfig(
            k=k,
            n=self.register_qubits(),
            shots=self.shots,
            seed=self.seed,
            mode=self.mode,
            variant=self.variant,
            threads=self.threads or settings.runner.threads,
        )


def describe_error(error: Exception) -> str:
    """One-line diagnostic naming the offending fields"""
    if isinstance(error, ValidationError):
        parts = []
        for item in error.errors():
            location = ".".join(str(part) for part in item["loc"]) or "config"
            parts.append(f"{location}: {item['msg']}")
        return "; ".join(parts)
    return str(error)


def load_run_config(path: Path, overrides: Dict[str, Any]) -> RunConfig:
    """Parse a run configuration and apply command-line overrides"""
    with open(path, "r") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    raw.update({key: value for key, value in overrides.items() if value is not None})
    return RunConfig(**raw)


def build_box(config: RunConfig) -> BlackBoxUnitary:
    instance = config.instance
    if isinstance(instance, HaarInstance):
        return haar_random(instance.n, np.random.default_rng(instance.seed))
    if isinstance(instance, SpectrumInstance):
        return from_spectrum(instance.phases, np.random.default_rng(instance.seed))
    generator = HermitianGenerator.from_text(instance.matrix_file)
    t = instance.t if instance.t is not None else choose_time_step(instance.delta_bound)
    return from_hamiltonian(generator, t)


class ExperimentRunner:
    """Executes run, verify and sweep commands"""

    def __init__(self, config: RunConfig, reveal: bool = False):
        """Initialize the runner

        Args:
            config: Validated run configuration
            reveal: Include the hidden matrix in result documents
        """
        self.config = config
        self.reveal = reveal
        output = config.output or Path(settings.runner.output_dir) / f"{config.command}.json"
        self.writer = ResultWriter(output, csv_export=settings.runner.csv_export)

    def _document(self, box: BlackBoxUnitary) -> Dict[str, Any]:
        document: Dict[str, Any] = {
            "provenance": ResultWriter.provenance(
                self.config.command, self.config.model_dump(mode="json"), self.config.seed
            ),
            "instance": {"label": box.label, "n": box.n},
        }
        if self.reveal:
            document["instance"]["hidden_matrix"] = unseal(box)
        return document

    def run(self) -> int:
        box = build_box(self.config)
        protocol = self.config.protocol(self.config.k)
        hist = run_campaign(box, self.config.prep, protocol)
        density = autocorrelation_estimate(hist)
        report = detect_periodicities(density, self.config.threshold)

        document = self._document(box)
        document["instance"]["queries"] = box.calls
        document["histogram"] = ResultWriter.histogram_section(hist)
        document["autocorrelation"] = ResultWriter.autocorrelation_section(density)
        document["periods"] = ResultWriter.period_section(report)
        self.writer.write(document, tables={"": hist})
        return EXIT_OK

    def verify(self) -> int:
        box = build_box(self.config)
        protocol = self.config.protocol(self.config.k)
        checks = run_checks(box, self.config.prep, protocol)

        document = self._document(box)
        document["checks"] = [
            {"name": c.name, "passed": c.passed, "residual": c.residual, "detail": c.detail}
            for c in checks
        ]
        document["passed"] = all(c.passed for c in checks)
        self.writer.write(document)
        for check in checks:
            status = "PASS" if check.passed else "FAIL"
            print(f"{status} {check.name} residual={check.residual:.3e}", file=sys.stderr)
        return EXIT_OK if document["passed"] else EXIT_FAILURE

    def sweep(self) -> int:
        box = build_box(self.config)
        expected = self.config.expected_period
        per_k = []
        rows = []
        tables = {}
        for k in self.config.k_values:
            hist = run_campaign(box, self.config.prep, self.config.protocol(k))
            density = autocorrelation_estimate(hist)
            report = detect_periodicities(density, self.config.threshold)
            top = report.top_period
            nearest = nearest_grid_period(expected, k) if expected is not None else None
            rows.append({
                "k": k,
                "detected_periods": report.candidates,
                "top_period": top,
                "nearest_grid_period": nearest,
                "top_error": abs(top - expected) if (top is not None and expected is not None) else None,
            })
            per_k.append({
                "k": k,
                "histogram": ResultWriter.histogram_section(hist),
                "periods": ResultWriter.period_section(report),
            })
            tables[f"_k{k}"] = hist

        document = self._document(box)
        document["instance"]["queries"] = box.calls
        document["results"] = per_k
        document["summary"] = rows
        self.writer.write(document, tables=tables)
        summary_path = self.writer.output_path.with_suffix(".md")
        summary_path.write_text(sweep_summary_markdown(rows))
        logger.info("Sweep summary written", path=str(summary_path), k_values=self.config.k_values)
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="Run configuration (YAML or JSON)")
    common.add_argument("--out", type=Path, help="Result document path")
    common.add_argument("--seed", type=int, help="Shot RNG seed")
    common.add_argument("--shots", help="Number of shots or 'exact'")
    common.add_argument("--threads", type=int, help="Worker threads for shot parallelism")
    common.add_argument("--reveal", action="store_true", help="Include the hidden matrix in outputs")

    parser = argparse.ArgumentParser(description="Black-box phase estimation experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("run", parents=[common], help="Run one shot campaign and analysis")
    commands.add_parser("verify", parents=[common], help="Run the brute-force invariant checks")
    commands.add_parser("sweep", parents=[common], help="Repeat the analysis over several k")
    return parser


def _parse_shots(value: Optional[str]) -> Union[int, str, None]:
    if value is None or value == "exact":
        return value
    return int(value)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(settings.log_level, settings.log_format)

    try:
        overrides = {
            "command": args.command,
            "output": args.out,
            "seed": args.seed,
            "shots": _parse_shots(args.shots),
            "threads": args.threads,
        }
        config = load_run_config(args.config, overrides)
    except (ValidationError, ValueError, OSError, yaml.YAMLError) as e:
        logger.error("Invalid configuration", config=str(args.config), error=describe_error(e))
        print(f"config error: {describe_error(e)}", file=sys.stderr)
        return EXIT_CONFIG

    runner = ExperimentRunner(config, reveal=args.reveal)
    try:
        return getattr(runner, config.command)()
    except (ValueError, OSError) as e:
        logger.error("Command failed", command=config.command, error=str(e), exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

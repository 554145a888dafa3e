"""Result document generation"""

from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import orjson
from structlog import get_logger

from . import __version__
from .qpe import PhaseHistogram
from .spectra import PeriodReport, SpectralDensity

logger = get_logger()

TABLE_HEADER = "m,count,probability,decoded_phase,std_error"


class ResultWriter:
    """Builds and writes machine-readable result documents"""

    def __init__(self, output_path: Path, csv_export: bool = True):
        """Initialize the writer

        Args:
            output_path: Path of the primary JSON document
            csv_export: Also write one flat table per histogram next to it
        """
        self.output_path = Path(output_path)
        self.csv_export = csv_export

    @staticmethod
    def provenance(command: str, config: Dict[str, Any], seed: int) -> Dict[str, Any]:
        return {"command": command, "version": __version__, "seed": seed, "config": config}

    @staticmethod
    def histogram_section(hist: PhaseHistogram) -> Dict[str, Any]:
        probabilities = hist.distribution()
        errors = hist.standard_errors()
        phases = hist.decoded_phases()
        rows = [
            {
                "m": m,
                "count": int(hist.counts[m]),
                "probability": float(probabilities[m]),
                "decoded_phase": float(phases[m]),
                "std_error": float(errors[m]),
            }
            for m in range(1 << hist.k)
        ]
        return {"k": hist.k, "shots": hist.shots, "exact": hist.is_exact, "rows": rows}

    @staticmethod
    def autocorrelation_section(density: SpectralDensity) -> List[Dict[str, float]]:
        order = np.argsort(density.support, kind="stable")
        return [
            {"delta": float(density.support[i]), "weight": float(density.weights[i])}
            for i in order
        ]

    @staticmethod
    def period_section(report: PeriodReport) -> Dict[str, Any]:
        return {
            "threshold": report.threshold,
            "reference_magnitude": report.reference_magnitude,
            "degenerate": report.degenerate,
            "flat": report.flat,
            "top_period": report.top_period,
            "candidates": [
                {"frequency": f, "period": p, "magnitude": mag, "passed": ok}
                for f, p, mag, ok in zip(
                    report.frequencies, report.periods, report.magnitudes, report.passed
                )
            ],
        }

    def write(self, document: Dict[str, Any], tables: Optional[Dict[str, PhaseHistogram]] = None) -> List[Path]:
        """Write the JSON document and, if enabled, the flat tables

        Args:
            document: Result document
            tables: Histograms to export, keyed by a file suffix

        Returns:
            Paths written
        """
        self.output_path.parent.mkdir(parents=True, exist_ok=True)
        payload = orjson.dumps(
            self._clean_for_json(document),
            option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS,
        )
        self.output_path.write_bytes(payload + b"\n")
        written = [self.output_path]

        if self.csv_export and tables:
            for suffix, hist in tables.items():
                path = self.output_path.with_name(f"{self.output_path.stem}{suffix}.csv")
                self._write_table(path, hist)
                written.append(path)

        logger.info("Results written", files=[str(p) for p in written])
        return written

    @staticmethod
    def _write_table(path: Path, hist: PhaseHistogram) -> None:
        m = np.arange(1 << hist.k)
        table = np.column_stack(
            [m, hist.counts, hist.distribution(), hist.decoded_phases(), hist.standard_errors()]
        )
        np.savetxt(
            path,
            table,
            delimiter=",",
            header=TABLE_HEADER,
            comments="",
            fmt=["%d", "%d", "%.17g", "%.17g", "%.17g"],
        )

    def _clean_for_json(self, data: Any) -> Any:
        """Convert numpy containers and scalars into plain JSON types"""
        if isinstance(data, dict):
            return {str(k): self._clean_for_json(v) for k, v in data.items()}
        elif isinstance(data, (list, tuple)):
            return [self._clean_for_json(item) for item in data]
        elif isinstance(data, np.ndarray):
            return self._clean_for_json(data.tolist())
        elif isinstance(data, np.generic):
            return data.item()
        elif isinstance(data, complex):
            return [data.real, data.imag]
        elif isinstance(data, (str, int, float, bool, type(None))):
            return data
        else:
            return str(data)


def sweep_summary_markdown(rows: List[Dict[str, Any]]) -> str:
    """Summary table of a k sweep"""
    lines = [
        "| k | detected periods | top candidate | nearest grid period | error |",
        "|---|---|---|---|---|",
    ]
    for row in rows:
        periods = ", ".join(f"{p:.6f}" for p in row["detected_periods"]) or "none"
        top = "none" if row["top_period"] is None else f"{row['top_period']:.6f}"
        nearest = "-" if row["nearest_grid_period"] is None else f"{row['nearest_grid_period']:.6f}"
        error = "-" if row["top_error"] is None else f"{row['top_error']:.6f}"
        lines.append(f"| {row['k']} | {periods} | {top} | {nearest} | {error} |")
    return "\n".join(lines) + "\n"

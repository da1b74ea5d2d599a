"""Distributed coherent beamforming simulator.

Thin wrappers over the compiled core. Scenario configs are plain dicts using
the same schema as the JSON files under ``configs/``.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

import numpy as np

try:
    from . import _dcbf  # installed wheel
except ImportError:  # in-tree build puts the extension on PYTHONPATH directly
    import _dcbf  # type: ignore[no-redef]

ConfigError = _dcbf.ConfigError
__version__ = _dcbf.__version__

power_gain_bound = np.vectorize(_dcbf.power_gain_bound, otypes=[float])
power_gain_bound_db = np.vectorize(_dcbf.power_gain_bound_db, otypes=[float])
rx_gain_bound_db = np.vectorize(_dcbf.rx_gain_bound_db, otypes=[float])
inr_reduction_bound = np.vectorize(_dcbf.inr_reduction_bound, otypes=[float])

link_metrics = _dcbf.link_metrics
mmse_rx_weights = _dcbf.mmse_rx_weights
tx_null_weights = _dcbf.tx_null_weights
estimate_channel = _dcbf.estimate_channel
ml_cfo = _dcbf.ml_cfo
matched_filter = _dcbf.matched_filter
golay_encode = _dcbf.golay_encode
golay_decode = _dcbf.golay_decode


def load_config(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def _parse_cell(text: str) -> float | int | None:
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_cycles_csv(text: str) -> list[dict[str, Any]]:
    """Rows of a cycles.csv as dicts; empty cells become None."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO("\n".join(lines)))]


class RunResult:
    def __init__(self, csv_text: str, summary: dict[str, Any], manifest_hash: str):
        self.csv_text = csv_text
        self.summary = summary
        self.manifest_hash = manifest_hash
        self.cycles = parse_cycles_csv(csv_text)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.cycles], dtype=float)


def run(config: dict[str, Any] | str | Path, **overrides: Any) -> RunResult:
    """Run a scenario. Keyword overrides replace top-level config keys."""
    cfg = load_config(config) if isinstance(config, (str, Path)) else dict(config)
    cfg.update(overrides)
    csv_text, summary, digest = _dcbf.run_scenario(json.dumps(cfg))
    return RunResult(csv_text, json.loads(summary), digest)


def build_frame(kind: str = "rx_source", node_id: int = 1, payload_seed: int = 1,
                config: dict[str, Any] | None = None) -> tuple[np.ndarray, dict[str, tuple[int, int]]]:
    samples, segs = _dcbf.build_frame(kind, node_id, payload_seed, json.dumps(config) if config else "")
    return samples, {name: (offset, length) for name, offset, length in segs}

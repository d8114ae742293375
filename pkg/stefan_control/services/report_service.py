"""Deterministic result files: CSV (comma, LF, header row) and UTF-8 JSON."""

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from stefan_control.errors import ProblemConfigError, ReportWriteError
from stefan_control.numerics.control import DiscreteControl
from stefan_control.numerics.energy import EnergyReport
from stefan_control.numerics.functional import CostBreakdown
from stefan_control.numerics.state import DiscreteState
from stefan_control.services.optimizer_service import OptResult
from stefan_control.services.sweep_service import SweepRow
from stefan_control.services.synthetic_service import SyntheticData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)

TRACE_COLUMNS = ("iter", "total", "boundary_term", "front_term", "step", "evals")
SWEEP_COLUMNS = tuple(SweepRow.__dataclass_fields__)


@dataclass
class RunResults:
    """Everything one CLI run produced; absent parts write no file."""

    manifest: dict[str, Any] = field(default_factory=dict)
    state: DiscreteState | None = None
    cost: CostBreakdown | None = None
    energy: EnergyReport | None = None
    opt_result: OptResult | None = None
    sweep: list[SweepRow] | None = None
    control: DiscreteControl | None = None
    diagnostics: dict[str, Any] | None = None
    synthetic: SyntheticData | None = None
    binary_state: bool = False
    dump_grid: bool = False


def format_number(value) -> str:
    if isinstance(value, bool | np.bool_):
        return str(int(value))
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return format(float(value), ".17g")
    return str(value)


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, float | np.floating):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except OSError as e:
        raise ReportWriteError(path, str(e)) from e


def write_json(path: Path, obj: Any) -> Path:
    text = json.dumps(_json_safe(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    _atomic_write_bytes(path, text.encode("utf-8"))
    return path


def write_csv(path: Path, header, rows) -> Path:
    lines = [",".join(header)]
    lines.extend(",".join(format_number(value) for value in row) for row in rows)
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))
    return path


def state_rows(st: DiscreteState):
    """k, i, x_i, u_i(k) for the nodes inside the domain of each layer."""
    for k in range(st.n + 1):
        for i in range(st.grid.boundary_index(k) + 1):
            yield k, i, st.grid.nodes[i], st.layers[k, i]


def write_state_binary(path: Path, st: DiscreteState) -> Path:
    """All layers on all nodes, row-major little-endian float64, shape (n+1, N+1)."""
    _atomic_write_bytes(path, np.ascontiguousarray(st.layers, dtype="<f8").tobytes(order="C"))
    return path


def write_control_csv(path: Path, v: DiscreteControl) -> Path:
    return write_csv(path, ("k", "s_k", "g_k"), ((k, v.s[k], v.g[k]) for k in range(v.n + 1)))


def read_control_csv(path: str | Path, T: float) -> DiscreteControl:
    """Control from a ``k,s_k,g_k`` CSV; rows must cover k = 0..n in order."""
    path = Path(path)
    if not path.is_file():
        raise ProblemConfigError(f"control file not found: {path}")
    with path.open(encoding="utf-8") as handle:
        header = handle.readline().strip().replace(" ", "")
    if header != "k,s_k,g_k":
        raise ProblemConfigError(f"{path}: expected header 'k,s_k,g_k', found '{header}'")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 2 or not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise ProblemConfigError(f"{path}: rows must be k = 0..n with n >= 1")
    n = data.shape[0] - 1
    return DiscreteControl(data[:, 1], data[:, 2], T / n)


def _grid_files(out: Path, st: DiscreteState) -> list[Path]:
    grid = st.grid
    h = grid.widths
    return [
        write_csv(out / "grid.csv", ("i", "x_i", "h_i"), ((i, grid.nodes[i], h[i]) for i in range(grid.N))),
        write_csv(
            out / "levels.csv",
            ("k", "s_k", "m_jk"),
            ((k, st.control.s[k], grid.boundary_index(k)) for k in range(st.n + 1)),
        ),
    ]


def write_report(results: RunResults, out_dir: str | Path) -> list[Path]:
    """Write every present part of ``results`` under out_dir; run.json is always written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportWriteError(out, str(e)) from e

    written: list[Path] = []
    st = results.state
    if st is not None:
        written.append(write_csv(out / "state.csv", ("k", "i", "x_i", "u_i(k)"), state_rows(st)))
        if results.binary_state:
            written.append(write_state_binary(out / "state.bin", st))
        if results.dump_grid:
            written.extend(_grid_files(out, st))
    if results.cost is not None:
        payload = results.cost.to_dict()
        if st is not None:
            payload.update(n=st.n, tau=st.tau)
        written.append(write_json(out / "cost.json", payload))
    if results.energy is not None:
        written.append(write_json(out / "energy.json", results.energy.to_dict()))
    if results.opt_result is not None:
        rows = ([row[column] for column in TRACE_COLUMNS] for row in results.opt_result.trace)
        written.append(write_csv(out / "trace.csv", TRACE_COLUMNS, rows))
    if results.sweep is not None:
        rows = ([getattr(row, column) for column in SWEEP_COLUMNS] for row in results.sweep)
        written.append(write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows))
    if results.control is not None:
        written.append(write_control_csv(out / "control.csv", results.control))
    if results.synthetic is not None:
        data = results.synthetic
        written.append(write_csv(out / "nu.csv", ("t", "value"), zip(data.times, data.nu_values, strict=True)))
        written.append(write_csv(out / "mu.csv", ("t", "value"), zip(data.times, data.mu_values, strict=True)))
        written.append(
            write_json(
                out / "synthetic.json",
                {
                    "n": data.state.n,
                    "noise": data.noise,
                    "seed": data.seed,
                    "noise_applied_to": "cell-averaged series",
                    "nu_max_abs": float(np.max(np.abs(data.nu_clean))),
                    "mu_max_abs": float(np.max(np.abs(data.mu_clean))),
                },
            )
        )
    if results.diagnostics is not None:
        written.append(write_json(out / "diagnostics.json", results.diagnostics))

    written.append(write_json(out / "run.json", results.manifest))
    logger.info(f"Wrote {len(written)} report files to {out}")
    return written

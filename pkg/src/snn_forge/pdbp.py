"""Performance-driven backpropagation.

Full-batch gradient descent on the summed squared error. A chosen KPI (the
"driver") is evaluated on the training outputs every iteration; training stops
once the driver has gone more than ``tolerance`` iterations without beating its
best value, or at ``max_iterations``.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .metrics import DEFAULT_THRESHOLD, KPI_NAMES, KpiReport, kpi_suite
from .network import SnnModel, decode_particle, dimension_count, encode_particle, gradient_flat

DRIVERS = ("ERR", "ACC", "F1")
TRACE_COLUMNS = ("iteration",) + KPI_NAMES


class DivergedError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"non-finite weights at iteration {iteration}")
        self.iteration = iteration


def check_driver(driver: str) -> str:
    d = driver.upper()
    if d not in DRIVERS:
        raise ValueError(f"driver must be one of {DRIVERS}, got {driver!r}")
    return d


def check_binary(data) -> None:
    y = np.asarray(data.labels)
    if y.size == 0:
        raise ValueError("training data is empty")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary 0/1")


@dataclass(frozen=True)
class PdbpConfig:
    driver: str = "ACC"
    max_iterations: int = 20000
    tolerance: int | None = None  # None -> 20 * d
    learning_rate: float = 0.05
    init_range: float = 0.5
    threshold: float = DEFAULT_THRESHOLD
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "driver", check_driver(self.driver))
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance is not None and self.tolerance < 1:
            raise ValueError("tolerance must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.init_range < 0:
            raise ValueError("init_range must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def resolved_tolerance(self, d: int) -> int:
        return 20 * d if self.tolerance is None else self.tolerance

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedResult:
    """Outcome of one training run.

    ``trace`` has one row per iteration with columns ``trace_columns``; for
    gradient descent a row describes the model as it entered that iteration.
    ``best_trace`` is the best-so-far driver value after each iteration.
    Iterations are numbered from 1, so ``best_iteration`` lies in
    ``[1, iterations_run]``.
    """

    model: SnnModel
    best_iteration: int
    iterations_run: int
    train_time_ms: float
    trace: np.ndarray
    best_trace: np.ndarray
    final_report: KpiReport
    stop_reason: str  # "stall" or "max_iterations"
    algorithm: str
    config: dict
    trace_columns: tuple = TRACE_COLUMNS
    extra: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "config": self.config,
            "n": self.model.n,
            "m": self.model.m,
            "d": self.model.d,
            "best_iteration": self.best_iteration,
            "iterations_run": self.iterations_run,
            "train_time_ms": self.train_time_ms,
            "stop_reason": self.stop_reason,
            "final_report": self.final_report.to_row(),
            **self.extra,
        }


def driver_value(report: KpiReport, driver: str) -> float:
    return report.get(driver)


def improved(perf: float, best: float | None, driver: str) -> bool:
    if best is None:
        return True
    return perf < best if driver == "ERR" else perf > best


def pdbp_step(model: SnnModel, data, learning_rate: float,
              threshold: float = DEFAULT_THRESHOLD) -> tuple[SnnModel, KpiReport]:
    """One full-batch update. The report scores the outputs of the incoming model."""
    X = np.asarray(data.features, dtype=float)
    y = np.asarray(data.labels, dtype=float)
    params = encode_particle(model)
    grad, outputs = gradient_flat(params, X, y, model.n, model.m)
    new = params - learning_rate * grad
    if not np.all(np.isfinite(new)):
        raise DivergedError(1)
    return decode_particle(new, model.n, model.m), kpi_suite(y, outputs, threshold)


def _trace_row(t: int, r: KpiReport) -> tuple:
    return (t, r.err, r.acc, r.f1, r.auc, r.tpr, r.tnr)


def train_pdbp(data, m: int, config: PdbpConfig = PdbpConfig(), initial: SnnModel | None = None,
               log=None) -> TrainedResult:
    check_binary(data)
    if m < 1:
        raise ValueError(f"hidden neuron count must be >= 1, got {m}")
    X = np.asarray(data.features, dtype=float)
    y = np.asarray(data.labels, dtype=float)
    n = X.shape[1]
    d = dimension_count(n, m)
    tau = config.resolved_tolerance(d)
    driver = config.driver
    rng = np.random.default_rng(config.seed)

    start = time.perf_counter()
    if initial is None:
        params = rng.uniform(-config.init_range, config.init_range, d)
    else:
        params = encode_particle(initial)
    rows, best_rows = [], []
    best, stall, best_it = None, 0, 0
    stop = "max_iterations"
    for t in range(1, config.max_iterations + 1):
        grad, outputs = gradient_flat(params, X, y, n, m)
        params = params - config.learning_rate * grad
        if not np.all(np.isfinite(params)):
            raise DivergedError(t)
        report = kpi_suite(y, outputs, config.threshold)
        perf = driver_value(report, driver)
        rows.append(_trace_row(t, report))
        if improved(perf, best, driver):
            best, stall, best_it = perf, 0, t
        else:
            stall += 1
        best_rows.append(best)
        if log is not None and t % 1000 == 0:
            log(f"pdbp t={t} {driver}={perf:.4f} best={best:.4f} stall={stall}")
        if stall > tau:
            stop = "stall"
            break
    model = decode_particle(params, n, m)
    final = kpi_suite(y, model.predict(X), config.threshold)
    elapsed = (time.perf_counter() - start) * 1000.0

    cfg = config.to_dict()
    cfg["tolerance"] = tau
    return TrainedResult(
        model=model,
        best_iteration=best_it,
        iterations_run=len(rows),
        train_time_ms=elapsed,
        trace=np.array(rows, dtype=float),
        best_trace=np.array(best_rows, dtype=float),
        final_report=final,
        stop_reason=stop,
        algorithm="PDBP",
        config=cfg,
    )

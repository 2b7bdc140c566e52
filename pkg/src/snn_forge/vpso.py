"""Variant particle swarm optimizer for network weights.

Each particle is a flat weight vector in [-1, 1]^d. The swarm sits on a ring;
every particle follows the best value seen in its ring neighbourhood (sBest)
and the best over all neighbourhoods (gsBest). Velocities are damped by a
constriction factor and by a per-particle inertia that shrinks as the
particle's mass (its fitness standing within the swarm) grows. The ring is
reshuffled every ``reorder_period`` iterations.

Fitness is always maximised: the ERR driver uses the negated average error.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .metrics import DEFAULT_THRESHOLD, KpiReport, kpi_suite
from .network import decode_particle, dimension_count, forward_swarm
from .pdbp import TRACE_COLUMNS, TrainedResult, check_binary, check_driver

VPSO_TRACE_COLUMNS = ("iteration", "gsbest_fitness") + TRACE_COLUMNS[1:]


def constriction(c1: float, c2: float) -> float:
    phi = c1 + c2
    if phi <= 4:
        raise ValueError(f"constriction needs C1 + C2 > 4, got {phi}")
    # the printed ratio is negative for phi > 4; its magnitude is the usual factor
    return abs(2.0 / (2.0 - phi - math.sqrt(phi * (phi - 4.0))))


def mass(fitness, best, worst, eps: float = 0.001):
    """Standing of a particle between the swarm's worst and best fitness, in (0, 1]."""
    return (np.asarray(fitness) - worst + eps) / (best - worst + eps)


def adaptive_inertia(mass_value, w_max: float = 0.9, w_min: float = 0.4):
    m = np.asarray(mass_value, dtype=float)
    return w_max - 2.164 * (w_max - w_min) * (np.exp(m) - 1.0) / (np.exp(m) + 1.0)


def ring_neighbors(i: int, order, n_pop: int) -> tuple[int, int]:
    """Left and right neighbours of the particle sitting at ring slot ``i``."""
    if not 0 <= i < n_pop:
        raise IndexError(f"slot {i} outside ring of {n_pop}")
    order = np.asarray(order)
    left = n_pop - 1 if i == 0 else i - 1
    right = (i + 1) % n_pop
    return int(order[left]), int(order[right])


def neighbor_arrays(order: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-particle (left, right) particle indices for a ring ``order``."""
    left = np.empty_like(order)
    right = np.empty_like(order)
    left[order] = np.roll(order, 1)
    right[order] = np.roll(order, -1)
    return left, right


def update_velocity(v, p, sbest_p, gsbest_p, w, chi, c1, c2, r1, r2):
    raw = chi * (w * v + c1 * r1 * (sbest_p - p) + c2 * r2 * (gsbest_p - p))
    return np.clip(raw, -1.0, 1.0)


def apply_position_update_and_repair(p, v, rng):
    """Move, then resample any coordinate that left [-1, 1] and reset its velocity.

    Works on scalars or arrays; replacement draws happen in row-major order of
    the offending coordinates.
    """
    p = np.asarray(p, dtype=float)
    v = np.array(v, dtype=float)
    new = p + v
    bad = (new > 1.0) | (new < -1.0)
    if np.any(bad):
        fresh = rng.uniform(-1.0, 1.0, int(np.count_nonzero(bad)))
        new = np.array(new)
        new[bad] = fresh
        v[bad] = 0.1 * fresh
    if new.ndim == 0:
        return float(new), float(v)
    return new, v


@dataclass(frozen=True)
class VpsoConfig:
    driver: str = "ACC"
    population: int | None = None  # None -> 2d
    max_iterations: int = 20000
    tolerance: int | None = None  # None -> 20d
    reorder_period: int | None = None  # None -> 10d
    c1: float = 2.05
    c2: float = 2.05
    w_max: float = 0.9
    w_min: float = 0.4
    eps_mass: float = 0.001
    threshold: float = DEFAULT_THRESHOLD
    init_velocity: float = 0.1
    mode: str = "vpso"  # "standard" = pBest/gBest reference PSO
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "driver", check_driver(self.driver))
        if self.mode not in ("vpso", "standard"):
            raise ValueError(f"mode must be 'vpso' or 'standard', got {self.mode!r}")
        if self.c1 + self.c2 <= 4:
            raise ValueError("C1 + C2 must exceed 4")
        if self.population is not None and self.population < 3:
            raise ValueError("population must be >= 3")
        if self.reorder_period is not None and self.reorder_period < 1:
            raise ValueError("reorder_period must be >= 1")
        if self.tolerance is not None and self.tolerance < 1:
            raise ValueError("tolerance must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def resolve(self, d: int) -> dict:
        cfg = asdict(self)
        cfg["population"] = 2 * d if self.population is None else self.population
        cfg["tolerance"] = 20 * d if self.tolerance is None else self.tolerance
        cfg["reorder_period"] = 10 * d if self.reorder_period is None else self.reorder_period
        cfg["d"] = d
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def swarm_fitness(outputs: np.ndarray, y: np.ndarray, driver: str, threshold: float) -> np.ndarray:
    """Driver value of every particle from its output row; higher is better."""
    if driver == "ERR":
        return -0.5 * np.mean((outputs - y) ** 2, axis=1)
    pred = outputs >= threshold
    pos = y == 1
    tp = np.count_nonzero(pred & pos, axis=1)
    if driver == "ACC":
        tn = np.count_nonzero(~pred & ~pos, axis=1)
        return (tp + tn) / y.size
    fp = np.count_nonzero(pred & ~pos, axis=1)
    fn = np.count_nonzero(~pred & pos, axis=1)
    denom = 2 * tp + fp + fn
    return np.where(tp > 0, 2 * tp / np.maximum(denom, 1), 0.0)


@dataclass
class SwarmState:
    positions: np.ndarray  # (P, d)
    velocities: np.ndarray  # (P, d)
    fitness: np.ndarray  # (P,)
    sbest_value: np.ndarray  # (P,)
    sbest_position: np.ndarray  # (P, d)
    gsbest_value: float
    gsbest_position: np.ndarray  # (d,)
    order: np.ndarray  # ring slot -> particle index
    t: int = 0
    masses: np.ndarray | None = None
    inertias: np.ndarray | None = None


def update_sbest_gsbest(state: SwarmState, topology: str = "ring") -> bool:
    """Fold the current fitness into the neighbourhood and global bests.

    Returns True when the global best value changed. Ties keep the incumbent.
    """
    f = state.fitness
    P = f.size
    if topology == "ring":
        left, right = neighbor_arrays(state.order)
        cand = np.stack([np.arange(P), left, right])  # self first so it wins ties
    else:  # personal best only
        cand = np.arange(P)[None, :]
    vals = f[cand]
    pick = cand[np.argmax(vals, axis=0), np.arange(P)]
    best_now = f[pick]
    better = best_now > state.sbest_value
    state.sbest_value = np.where(better, best_now, state.sbest_value)
    state.sbest_position = np.where(better[:, None], state.positions[pick], state.sbest_position)
    j = int(np.argmax(state.sbest_value))
    if state.sbest_value[j] > state.gsbest_value:
        state.gsbest_value = float(state.sbest_value[j])
        state.gsbest_position = state.sbest_position[j].copy()
        return True
    return False


def init_swarm(rng: np.random.Generator, n_pop: int, d: int, v0: float) -> SwarmState:
    positions = rng.uniform(-1.0, 1.0, (n_pop, d))
    velocities = rng.uniform(-v0, v0, (n_pop, d))
    return SwarmState(
        positions=positions,
        velocities=velocities,
        fitness=np.full(n_pop, -np.inf),
        sbest_value=np.full(n_pop, -np.inf),
        sbest_position=positions.copy(),
        gsbest_value=-np.inf,
        gsbest_position=positions[0].copy(),
        order=np.arange(n_pop),
    )


def optimize_vpso(data, m: int, config: VpsoConfig = VpsoConfig(), log=None,
                  observer=None) -> TrainedResult:
    """Search network weights with the ring-topology constricted swarm.

    ``observer(state)`` is called after every position update; tests use it to
    audit bounds and bookkeeping.
    """
    check_binary(data)
    if m < 1:
        raise ValueError(f"hidden neuron count must be >= 1, got {m}")
    X = np.asarray(data.features, dtype=float)
    y = np.asarray(data.labels, dtype=float)
    n = X.shape[1]
    d = dimension_count(n, m)
    cfg = config.resolve(d)
    n_pop, gamma, period = cfg["population"], cfg["tolerance"], cfg["reorder_period"]
    driver, theta = config.driver, config.threshold
    standard = config.mode == "standard"
    chi = 1.0 if standard else constriction(config.c1, config.c2)
    rng = np.random.default_rng(config.seed)

    start = time.perf_counter()
    st = init_swarm(rng, n_pop, d, config.init_velocity)
    rows, best_rows, reorders = [], [], []
    incumbent: KpiReport | None = None
    stall, best_it, stop = 0, 0, "max_iterations"
    for it in range(1, config.max_iterations + 1):
        outputs = forward_swarm(st.positions, X, n, m)
        st.fitness = swarm_fitness(outputs, y, driver, theta)
        changed = update_sbest_gsbest(st, "personal" if standard else "ring")
        if changed:
            incumbent = kpi_suite(y, forward_swarm(st.gsbest_position[None, :], X, n, m)[0], theta)
            stall, best_it = 0, it
        else:
            stall += 1
        r = incumbent
        rows.append((it, st.gsbest_value, r.err, r.acc, r.f1, r.auc, r.tpr, r.tnr))
        best_rows.append(st.gsbest_value)
        if log is not None and it % 500 == 0:
            log(f"vpso t={it} gsBest={st.gsbest_value:.6f} stall={stall}")
        if stall >= gamma:
            stop = "stall"
            break
        if it == config.max_iterations:
            break

        st.t = it
        if it % period == 0:
            st.order = rng.permutation(n_pop)
            reorders.append(it)
        # per-particle inertia from the current fitness spread
        best, worst = st.fitness.max(), st.fitness.min()
        st.masses = mass(st.fitness, best, worst, config.eps_mass)
        if standard:
            frac = (it - 1) / max(config.max_iterations - 1, 1)
            st.inertias = np.full(n_pop, config.w_max - (config.w_max - config.w_min) * frac)
        else:
            st.inertias = adaptive_inertia(st.masses, config.w_max, config.w_min)
        r1 = 1.0 - rng.random((n_pop, d))  # (0, 1]
        r2 = 1.0 - rng.random((n_pop, d))
        st.velocities = update_velocity(st.velocities, st.positions, st.sbest_position,
                                        st.gsbest_position[None, :], st.inertias[:, None], chi,
                                        config.c1, config.c2, r1, r2)
        st.positions, st.velocities = apply_position_update_and_repair(st.positions, st.velocities, rng)
        if observer is not None:
            observer(st)

    model = decode_particle(st.gsbest_position, n, m)
    final = kpi_suite(y, model.predict(X), theta)
    elapsed = (time.perf_counter() - start) * 1000.0
    return TrainedResult(
        model=model,
        best_iteration=best_it,
        iterations_run=len(rows),
        train_time_ms=elapsed,
        trace=np.array(rows, dtype=float),
        best_trace=np.array(best_rows, dtype=float),
        final_report=final,
        stop_reason=stop,
        algorithm="VPSO" if not standard else "PSO-standard",
        config=cfg,
        trace_columns=VPSO_TRACE_COLUMNS,
        extra={"chi": chi, "reorder_iterations": reorders},
    )

"""Experiment protocols: full-set training, hidden-neuron sweeps, k-fold CV,
training-rate sweeps and the multi-dataset comparison, plus their on-disk reports.

Per-run seeds follow ``base_seed + run_index``. Preprocessing (imputation and
scaling) is fitted on the training rows of each run and applied to its test rows.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import dataio
from .dataio import Dataset, DatasetManifest
from .metrics import KPI_NAMES, KpiReport, format_kpi, kpi_suite
from .pdbp import DRIVERS, PdbpConfig, TrainedResult, train_pdbp
from .vpso import VpsoConfig, optimize_vpso

PROTOCOLS = ("FULL_TRAIN", "INCREMENTAL_SWEEP", "KFOLD_CV", "RATE_SWEEP", "COMPARE")
ALGORITHMS = ("PDBP", "VPSO")
COMPARE_MAX_FEATURES = 12

_PDBP_KEYS = {"max_iterations", "tolerance", "learning_rate", "init_range", "threshold"}
_VPSO_KEYS = {"population", "max_iterations", "tolerance", "reorder_period", "c1", "c2",
              "w_max", "w_min", "eps_mass", "threshold", "init_velocity", "mode"}


class SpecError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid experiment spec:\n  " + "\n  ".join(self.problems))


@dataclass
class ExperimentSpec:
    protocol: str
    datasets: list  # manifest paths; one entry except for COMPARE
    algorithms: list = field(default_factory=lambda: ["PDBP"])
    driver: str = "ACC"
    hidden: int | None = None  # None -> protocol default
    hidden_range: list | None = None  # [lo, hi] for INCREMENTAL_SWEEP
    k: int = 10
    stratified: bool = True
    rates: list = field(default_factory=lambda: [0.5, 0.6, 0.7, 0.8, 0.9])
    repeats: int = 1
    seed: int = 0
    pdbp: dict = field(default_factory=dict)
    vpso: dict = field(default_factory=dict)
    name: str = "experiment"
    base_dir: Path | None = field(default=None, repr=False)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "ExperimentSpec":
        doc = dict(doc)
        problems = []
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        if "dataset" in doc:
            doc["datasets"] = [doc.pop("dataset")]
        if "algorithm" in doc:
            doc["algorithms"] = [doc.pop("algorithm")]
        unknown = sorted(set(doc) - known)
        if unknown:
            problems.append(f"unknown keys: {unknown}")
        for req in ("protocol", "datasets"):
            if req not in doc:
                problems.append(f"missing required key {req!r}")
        if problems:
            raise SpecError(problems)
        spec = cls(**{k: v for k, v in doc.items() if k in known},
                   base_dir=Path(base_dir) if base_dir is not None else None)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SpecError([f"{path}: not valid JSON ({exc})"]) from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc.pop("base_dir")
        return doc

    def validate(self) -> None:
        """Collect every problem before raising, so a bad spec is reported in one go."""
        p = []
        self.protocol = str(self.protocol).upper()
        if self.protocol not in PROTOCOLS:
            p.append(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if not isinstance(self.datasets, list) or not self.datasets:
            p.append("datasets must be a non-empty list of manifest paths")
        elif self.protocol != "COMPARE" and len(self.datasets) != 1:
            p.append(f"{self.protocol} takes exactly one dataset")
        algos = [str(a).upper() for a in self.algorithms] if isinstance(self.algorithms, list) else []
        if not algos or any(a not in ALGORITHMS for a in algos):
            p.append(f"algorithms must be a non-empty list drawn from {ALGORITHMS}")
        self.algorithms = algos
        self.driver = str(self.driver).upper()
        if self.driver not in DRIVERS:
            p.append(f"driver must be one of {DRIVERS}, got {self.driver!r}")
        if self.hidden is not None and (not isinstance(self.hidden, int) or self.hidden < 1):
            p.append(f"hidden must be a positive integer, got {self.hidden!r}")
        if self.hidden_range is not None:
            hr = self.hidden_range
            if not (isinstance(hr, list) and len(hr) == 2 and all(isinstance(v, int) for v in hr)
                    and 1 <= hr[0] <= hr[1]):
                p.append(f"hidden_range must be [lo, hi] with 1 <= lo <= hi, got {hr!r}")
        if self.protocol in ("FULL_TRAIN", "KFOLD_CV", "RATE_SWEEP") and self.hidden is None:
            p.append(f"{self.protocol} needs 'hidden'")
        if not isinstance(self.k, int) or self.k < 2:
            p.append(f"k must be an integer >= 2, got {self.k!r}")
        if not isinstance(self.rates, list) or not self.rates:
            p.append("rates must be a non-empty list")
        else:
            for r in self.rates:
                if not isinstance(r, (int, float)) or not 0.0 < r < 1.0:
                    p.append(f"rate {r!r} outside the open interval (0, 1)")
        if not isinstance(self.repeats, int) or self.repeats < 1:
            p.append(f"repeats must be an integer >= 1, got {self.repeats!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            p.append(f"seed must be a non-negative integer, got {self.seed!r}")
        for key, allowed in (("pdbp", _PDBP_KEYS), ("vpso", _VPSO_KEYS)):
            extra = sorted(set(getattr(self, key)) - allowed)
            if extra:
                p.append(f"{key} overrides has unknown keys {extra}")
        if not p:
            try:
                self.pdbp_config(0)
                self.vpso_config(0)
            except (ValueError, TypeError) as exc:
                p.append(f"algorithm overrides rejected: {exc}")
        if self.base_dir is not None and isinstance(self.datasets, list):
            for ds in self.datasets:
                if not self.resolve(ds).exists():
                    p.append(f"dataset manifest not found: {ds}")
        if p:
            raise SpecError(p)

    def resolve(self, path) -> Path:
        path = Path(path)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def pdbp_config(self, seed: int) -> PdbpConfig:
        return PdbpConfig(driver=self.driver, seed=seed, **self.pdbp)

    def vpso_config(self, seed: int) -> VpsoConfig:
        return VpsoConfig(driver=self.driver, seed=seed, **self.vpso)


def train(algorithm: str, data: Dataset, m: int, spec: ExperimentSpec, seed: int) -> TrainedResult:
    if algorithm == "PDBP":
        return train_pdbp(data, m, spec.pdbp_config(seed))
    return optimize_vpso(data, m, spec.vpso_config(seed))


@dataclass
class RunRecord:
    """One training run; ``eval_report`` is what aggregation uses (test side when a test side exists)."""

    run_index: int
    label: str
    protocol: str
    dataset: str
    algorithm: str
    driver: str
    m: int
    group: str
    seed: int
    train_rows: list
    test_rows: list
    train_report: dict
    eval_report: dict
    result: dict
    features: list = field(default_factory=list)
    baseline_key: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AggregateReport:
    """Mean and standard deviation of every KPI over a group of runs (sample std, ddof=1)."""

    mean: dict
    std: dict
    runs: int
    rows: list

    @classmethod
    def from_rows(cls, rows) -> "AggregateReport":
        rows = list(rows)
        if not rows:
            raise ValueError("nothing to aggregate")
        mean, std = {}, {}
        for k in KPI_NAMES:
            vals = np.array([float(r[k]) for r in rows], dtype=float)
            vals = vals[~np.isnan(vals)]
            mean[k] = float(vals.mean()) if vals.size else math.nan
            std[k] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        return cls(mean, std, len(rows), rows)

    def formatted(self, kpi: str, scale: float = 100.0) -> str:
        mu, sd = self.mean[kpi], self.std[kpi]
        if math.isnan(mu):
            return "n/a"
        return f"{mu * scale:.2f}±{sd * scale:.2f}"


@dataclass
class ExperimentOutcome:
    spec: ExperimentSpec
    records: list
    groups: dict  # (dataset, algorithm, group) -> AggregateReport
    failures: list = field(default_factory=list)  # (run_index, label, message)
    results: dict = field(default_factory=dict)  # label -> TrainedResult (in-memory only)


# ---------------------------------------------------------------- data plumbing

def load_raw(spec: ExperimentSpec, ref) -> tuple[Dataset, DatasetManifest]:
    path = spec.resolve(ref)
    man = DatasetManifest.load(path)
    return dataio.load_manifest(path), man


def _reduce_features(train: Dataset, test: Dataset, limit: int) -> tuple[Dataset, Dataset]:
    if train.n <= limit:
        return train, test
    ranking = dataio.info_gain_rank(train)
    return dataio.select_top_features(train, limit, ranking), dataio.select_top_features(test, limit, ranking)


def _prepared_pair(raw: Dataset, train_idx, test_idx, reduce_to: int | None = None):
    train, test = dataio.fit_transform_split(raw.subset(train_idx), raw.subset(test_idx))
    if reduce_to is not None:
        train, test = _reduce_features(train, test, reduce_to)
    return train, test


def _job(args):
    algorithm, train_set, test_set, m, spec, seed = args
    result = train(algorithm, train_set, m, spec, seed)
    test_report = None
    if test_set is not None:
        test_report = kpi_suite(test_set.labels, result.model.predict(test_set.features),
                                result.final_report.threshold)
    return result, test_report


def _execute(jobs, n_jobs: int):
    """Run jobs in order; returns per-job (result, test_report) or the exception raised."""
    out = []
    if n_jobs <= 1:
        for j in jobs:
            try:
                out.append(_job(j))
            except Exception as exc:  # recorded as a failed run
                out.append(exc)
        return out
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        futs = [pool.submit(_job, j) for j in jobs]
        for f in futs:
            try:
                out.append(f.result())
            except Exception as exc:
                out.append(exc)
    return out


def _assemble(spec, plans, n_jobs: int) -> ExperimentOutcome:
    """``plans`` holds (meta, job) pairs; results are reduced in run-index order."""
    outcomes = _execute([job for _, job in plans], n_jobs)
    records, failures, results = [], [], {}
    for idx, ((meta, job), res) in enumerate(zip(plans, outcomes)):
        if isinstance(res, Exception):
            failures.append((idx, meta["label"], f"{type(res).__name__}: {res}"))
            continue
        result, test_report = res
        train_set, test_set = job[1], job[2]
        rec = RunRecord(
            run_index=idx,
            label=meta["label"],
            protocol=spec.protocol,
            dataset=meta["dataset"],
            algorithm=job[0],
            driver=spec.driver,
            m=job[3],
            group=meta["group"],
            seed=job[5],
            train_rows=train_set.row_ids.tolist(),
            test_rows=[] if test_set is None else test_set.row_ids.tolist(),
            train_report=result.final_report.to_row(),
            eval_report=(test_report or result.final_report).to_row(),
            result=result.metadata(),
            features=list(train_set.feature_names),
            baseline_key=meta.get("baseline_key"),
        )
        records.append(rec)
        results[rec.label] = result
    return ExperimentOutcome(spec, records, aggregate(records), failures, results)


def aggregate(records) -> dict:
    groups: dict = {}
    for r in records:
        d = r.to_dict() if isinstance(r, RunRecord) else r
        groups.setdefault((d["dataset"], d["algorithm"], d["group"]), []).append(d["eval_report"])
    return {k: AggregateReport.from_rows(v) for k, v in groups.items()}


# ---------------------------------------------------------------- protocols

def run_full_train(spec: ExperimentSpec, n_jobs: int = 1) -> ExperimentOutcome:
    raw, man = load_raw(spec, spec.datasets[0])
    data = dataio.prepare(raw)
    plans = []
    for algo in spec.algorithms:
        for rep in range(spec.repeats):
            seed = spec.seed + len(plans)
            meta = {"label": f"{man.name or raw.name}_{algo}_full_r{rep}", "dataset": man.name or raw.name,
                    "group": "full"}
            plans.append((meta, (algo, data, None, spec.hidden, spec, seed)))
    return _assemble(spec, plans, n_jobs)


def sweep_bounds(spec: ExperimentSpec, n: int) -> tuple[int, int]:
    lo, hi = spec.hidden_range or [1, n]
    if hi > n:
        raise SpecError([f"hidden_range upper bound {hi} exceeds the {n} input features"])
    return lo, hi


def run_incremental_sweep(spec: ExperimentSpec, n_jobs: int = 1) -> ExperimentOutcome:
    """Train on the whole set for every hidden size in the sweep (one seed policy for all m)."""
    raw, man = load_raw(spec, spec.datasets[0])
    data = dataio.prepare(raw)
    lo, hi = sweep_bounds(spec, data.n)
    name = man.name or raw.name
    plans = []
    for algo in spec.algorithms:
        for m in range(lo, hi + 1):
            for rep in range(spec.repeats):
                seed = spec.seed + rep
                meta = {"label": f"{name}_{algo}_m{m}_r{rep}", "dataset": name, "group": f"m={m}"}
                plans.append((meta, (algo, data, None, m, spec, seed)))
    return _assemble(spec, plans, n_jobs)


def run_kfold_cv(spec: ExperimentSpec, n_jobs: int = 1) -> ExperimentOutcome:
    raw, man = load_raw(spec, spec.datasets[0])
    name = man.name or raw.name
    plans = []
    for rep in range(spec.repeats):
        plan = dataio.make_folds(raw, spec.k, seed=spec.seed + rep, stratified=spec.stratified)
        for fold in range(spec.k):
            tr, te = plan.train_test(fold)
            train_set, test_set = _prepared_pair(raw, tr, te)
            for algo in spec.algorithms:
                seed = spec.seed + len(plans)
                meta = {"label": f"{name}_{algo}_r{rep}_f{fold}", "dataset": name, "group": f"k={spec.k}"}
                plans.append((meta, (algo, train_set, test_set, spec.hidden, spec, seed)))
    return _assemble(spec, plans, n_jobs)


def run_rate_sweep(spec: ExperimentSpec, n_jobs: int = 1) -> ExperimentOutcome:
    raw, man = load_raw(spec, spec.datasets[0])
    name = man.name or raw.name
    plans = []
    for rate in spec.rates:
        for rep in range(spec.repeats):
            split_seed = spec.seed + rep
            tr_raw, te_raw = dataio.split_train_test(raw, rate, split_seed)
            train_set, test_set = _prepared_pair(raw, tr_raw.row_ids, te_raw.row_ids)
            for algo in spec.algorithms:
                seed = spec.seed + len(plans)
                meta = {"label": f"{name}_{algo}_rate{rate:g}_r{rep}", "dataset": name,
                        "group": f"rate={rate:g}"}
                plans.append((meta, (algo, train_set, test_set, spec.hidden, spec, seed)))
    return _assemble(spec, plans, n_jobs)


def compare_hidden(n_features: int) -> int:
    return max(1, math.ceil(n_features / 2))


def run_compare(spec: ExperimentSpec, n_jobs: int = 1) -> ExperimentOutcome:
    """``repeats`` independent 50/50 splits per dataset; sets wider than 12 features keep
    their 12 highest-information-gain columns (ranked on the training half)."""
    plans = []
    for ref in spec.datasets:
        raw, man = load_raw(spec, ref)
        name = man.name or raw.name
        for rep in range(spec.repeats):
            tr_raw, te_raw = dataio.split_train_test(raw, 0.5, spec.seed + rep)
            train_set, test_set = _prepared_pair(raw, tr_raw.row_ids, te_raw.row_ids,
                                                 reduce_to=COMPARE_MAX_FEATURES)
            m = spec.hidden or compare_hidden(train_set.n)
            for algo in spec.algorithms:
                seed = spec.seed + rep
                meta = {"label": f"{name}_{algo}_split{rep}", "dataset": name, "group": "50/50",
                        "baseline_key": man.baseline_key}
                plans.append((meta, (algo, train_set, test_set, m, spec, seed)))
    return _assemble(spec, plans, n_jobs)


RUNNERS = {
    "FULL_TRAIN": run_full_train,
    "INCREMENTAL_SWEEP": run_incremental_sweep,
    "KFOLD_CV": run_kfold_cv,
    "RATE_SWEEP": run_rate_sweep,
    "COMPARE": run_compare,
}


def run_experiment(spec: ExperimentSpec, n_jobs: int = 1) -> ExperimentOutcome:
    return RUNNERS[spec.protocol](spec, n_jobs)


# ---------------------------------------------------------------- reporting

def load_baselines() -> dict:
    return json.loads(resources.files("snn_forge").joinpath("baselines.json").read_text())


def write_trace(result: TrainedResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(result.trace_columns)
        for row in result.trace:
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def report_rows(groups: dict) -> list[dict]:
    rows = []
    for (dataset, algo, group), agg in groups.items():
        row = {"dataset": dataset, "algorithm": algo, "group": group, "runs": agg.runs}
        for k in KPI_NAMES:
            row[f"{k}_mean"] = agg.mean[k]
            row[f"{k}_std"] = agg.std[k]
        rows.append(row)
    return rows


def write_report_csv(groups: dict, path) -> None:
    rows = report_rows(groups)
    fields = ["dataset", "algorithm", "group", "runs"] + [f"{k}_{s}" for k in KPI_NAMES for s in ("mean", "std")]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def render_table(protocol: str, groups: dict, driver: str, records=()) -> str:
    """Markdown summary; COMPARE renders test accuracy beside the literature baselines."""
    if protocol == "COMPARE":
        base = load_baselines()
        cols = base["columns"]
        algos = sorted({a for _, a, _ in groups})
        head = ["Data", "n", "N"] + cols + [f"{driver}-{a}" for a in algos]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        meta = {}
        for r in records:
            d = r.to_dict() if isinstance(r, RunRecord) else r
            meta.setdefault(d["dataset"], (len(d["features"]), len(d["train_rows"]) + len(d["test_rows"]),
                                           d.get("baseline_key")))
        for ds in sorted({d for d, _, _ in groups}):
            n, N, key = meta.get(ds, ("", "", None))
            bl = base["datasets"].get(key or ds, {}).get("accuracy", {})
            cells = [ds, str(n), str(N)]
            cells += [f"{bl[c][0]:.2f}±{bl[c][1]:.2f}" if c in bl else "n/a" for c in cols]
            cells += [groups[(ds, a, "50/50")].formatted("acc") if (ds, a, "50/50") in groups else "n/a"
                      for a in algos]
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
        lines.append("Accuracy in %, mean±std over independent 50%-50% splits. Baseline sources:")
        for c in cols:
            lines.append(f"- {c}: {base['citations'][c]}")
        return "\n".join(lines) + "\n"

    head = ["Dataset", "Algorithm", "Group", "Runs"] + [k.upper() for k in KPI_NAMES]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for (ds, algo, group), agg in groups.items():
        if agg.runs == 1:
            kpis = [format_kpi(agg.mean[k]) for k in KPI_NAMES]
        else:
            kpis = [agg.formatted(k) for k in KPI_NAMES]
        lines.append("| " + " | ".join([ds, f"{driver}-{algo}", group, str(agg.runs)] + kpis) + " |")
    if any(a.runs > 1 for a in groups.values()):
        lines.append("")
        lines.append("Multi-run cells are mean±std in %.")
    return "\n".join(lines) + "\n"


def write_outcome(outcome: ExperimentOutcome, out_dir) -> Path:
    out = Path(out_dir)
    runs = out / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    for rec in outcome.records:
        (runs / f"{rec.label}.json").write_text(json.dumps(rec.to_dict(), indent=1))
        res = outcome.results.get(rec.label)
        if res is not None:
            write_trace(res, runs / f"{rec.label}_trace.csv")
    if outcome.groups:
        write_report_csv(outcome.groups, out / "report.csv")
        (out / "table.md").write_text(render_table(outcome.spec.protocol, outcome.groups,
                                                   outcome.spec.driver, outcome.records))
    if outcome.spec.protocol == "INCREMENTAL_SWEEP":
        write_sweep_csv(outcome.records, out / "sweep.csv")
    (out / "spec.json").write_text(json.dumps(outcome.spec.to_dict(), indent=2))
    if outcome.failures:
        (out / "failures.json").write_text(json.dumps(
            [{"run_index": i, "label": lab, "error": msg} for i, lab, msg in outcome.failures], indent=2))
    return out


def write_sweep_csv(records, path) -> None:
    """Hidden-size vs KPI table (training-set KPIs, averaged over repeats)."""
    by = {}
    for r in records:
        d = r.to_dict() if isinstance(r, RunRecord) else r
        by.setdefault((d["algorithm"], d["m"]), []).append(d["eval_report"])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "m"] + list(KPI_NAMES) + ["runs"])
        for (algo, m), rows in sorted(by.items()):
            agg = AggregateReport.from_rows(rows)
            w.writerow([algo, m] + [repr(agg.mean[k]) for k in KPI_NAMES] + [agg.runs])


def load_records(out_dir) -> list[dict]:
    runs = sorted(Path(out_dir, "runs").glob("*.json"), key=lambda p: p.name)
    recs = [json.loads(p.read_text()) for p in runs]
    return sorted(recs, key=lambda d: d["run_index"])


def rerender(out_dir) -> dict:
    """Rebuild report.csv and table.md from the persisted per-run JSON files."""
    out = Path(out_dir)
    spec_doc = json.loads((out / "spec.json").read_text())
    records = load_records(out)
    groups = aggregate(records)
    write_report_csv(groups, out / "report.csv")
    (out / "table.md").write_text(render_table(spec_doc["protocol"].upper(), groups,
                                               spec_doc.get("driver", "ACC").upper(), records))
    if spec_doc["protocol"].upper() == "INCREMENTAL_SWEEP":
        write_sweep_csv(records, out / "sweep.csv")
    return groups


def eval_reports(outcome: ExperimentOutcome, dataset=None, algorithm=None, group=None) -> list[KpiReport]:
    return [KpiReport.from_row(r.eval_report) for r in outcome.records
            if (dataset is None or r.dataset == dataset)
            and (algorithm is None or r.algorithm == algorithm)
            and (group is None or r.group == group)]

"""Experiment grid orchestration, aggregation, and report rendering.

A run evaluates estimators x strategies x budgets x test instances, scoring
every selection with the relevance score and optionally validating it with
one-step fine-tuning metrics on the toy model. Reports are deterministic
CSVs (stable ordering, fixed formatting); wall times stay in memory.
"""

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ._rng import derive_seed
from .errors import (
    ConfigurationError,
    IncompleteSeriesError,
    PairingError,
    SelrelError,
)
from .estimators import (
    BM25Estimator,
    GradientSimilarityEstimator,
    load_external_scores,
)
from .gradstore import (
    GradientMatrix,
    ProbeSet,
    normalize_rows,
    read_gradient_matrix,
)
from .relevance import ScoringModelSpec, format_db, selection_relevance
from .selectors import (
    MODES,
    Selection,
    aide_select,
    candidate_pool,
    candidate_similarity,
    divine_select,
    facility_location_select,
    influence_to_costs,
    select_naive,
    select_random,
)
from .validation import (
    ToyTask,
    ValidationRecord,
    accuracy_by_bins,
    make_toy_task,
    per_example_gradient,
    prediction_shift,
    prediction_support,
    spearman,
    train_toy_model,
)
from .errors import UndefinedCorrelationError

STRATEGY_FAMILIES = ("naive", "random", "facility_location", "divine", "aide")
MODEL_NAMES = {"mse": "unconstrained_ls", "nnls": "nnls_l2", "simplex": "projected_simplex"}
RANDOM_REPLICATES = 5
# Strategies meaningful for BM25's strictly positive raw scores: absolute-value
# modes only, plus the mode-free AIDE and the random baseline.
BM25_MODES = ("most_influential", "least_influential")


@dataclass
class ExperimentConfig:
    """Everything a run needs; mirrors the CLI flags and the JSON config."""

    toy: dict | None = None
    train_path: str | None = None
    test_path: str | None = None
    docs_path: str | None = None
    queries_path: str | None = None
    external_scores: dict = field(default_factory=dict)
    estimators: list = field(default_factory=lambda: ["gradient_similarity"])
    strategies: list = field(default_factory=lambda: list(STRATEGY_FAMILIES))
    modes: list = field(default_factory=lambda: list(MODES))
    lambda_grid: list = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    budgets: list = field(default_factory=lambda: [1, 5, 10, 25])
    probe_mode: str = "test"
    model: str = "simplex"
    seed: int = 0
    out_dir: str | None = None
    m: float = 2.0
    pool: int = 100
    validate: bool = False
    validation_lr: float = 1e-2

    def __post_init__(self):
        if self.toy is None and not (self.train_path and self.test_path):
            raise ConfigurationError("provide either a toy task or train/test paths")
        budgets = [int(b) for b in self.budgets]
        if not budgets or any(b < 1 for b in budgets) or any(
            a >= b for a, b in zip(budgets, budgets[1:])
        ):
            raise ConfigurationError(
                "budgets must be strictly increasing positive integers"
            )
        self.budgets = budgets
        self.lambda_grid = [float(v) for v in self.lambda_grid]
        if any(not 0.0 <= v <= 1.0 for v in self.lambda_grid):
            raise ConfigurationError("lambda values must lie in [0, 1]")
        unknown = set(self.strategies) - set(STRATEGY_FAMILIES)
        if unknown:
            raise ConfigurationError(f"unknown strategies {sorted(unknown)}")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise ConfigurationError(f"unknown modes {sorted(unknown)}")
        for est in self.estimators:
            if est not in ("gradient_similarity", "bm25") and not est.startswith(
                "external:"
            ):
                raise ConfigurationError(f"unknown estimator {est!r}")
            if est.startswith("external:") and est[9:] not in self.external_scores:
                raise ConfigurationError(f"no score directory for {est!r}")
        if self.model not in MODEL_NAMES:
            raise ConfigurationError(
                f"model must be one of {sorted(MODEL_NAMES)}, got {self.model!r}"
            )
        self.probe_spec()
        if self.validate and self.toy is None:
            raise ConfigurationError("fine-tuning validation requires the toy task")
        if self.pool < max(self.budgets):
            raise ConfigurationError("candidate pool must cover the largest budget")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def probe_spec(self) -> tuple[str, int | None]:
        if self.probe_mode == "test":
            return "test", None
        if self.probe_mode.startswith("population:"):
            count = int(self.probe_mode.split(":", 1)[1])
            if count < 1:
                raise ConfigurationError("population probe count must be positive")
            return "population", count
        raise ConfigurationError(
            f"probe_mode must be 'test' or 'population:N', got {self.probe_mode!r}"
        )

    def scoring_spec(self) -> ScoringModelSpec:
        return ScoringModelSpec(variant=MODEL_NAMES[self.model])


@dataclass(eq=False)
class ResultRow:
    """One scored grid cell (random strategy rows are replicate means)."""

    estimator: str
    strategy: str
    lam: float | None
    k: int
    test_id: str
    ratio: float
    db: float
    wall_time: float = 0.0

    def __post_init__(self):
        expected = 10.0 * math.log10(self.ratio)
        if not (abs(self.db - expected) <= 1e-9 or self.db < expected):
            raise ValueError(
                f"db {self.db} inconsistent with ratio {self.ratio} "
                f"(expected {expected} or a capped lower value)"
            )


@dataclass(eq=False)
class ExperimentResult:
    rows: list
    records: list
    selections: list  # (estimator, Selection) pairs in evaluation order
    failures: list


def toy_documents(dataset, bins: int = 8) -> tuple[dict, dict]:
    """Token renderings of toy examples so BM25 can rank them.

    Each feature is quantized into equal-width bins over the training range;
    an example's document is one token per feature, e.g. "f3b7". Returns
    (train docs, test queries) keyed by example id.
    """
    lo = dataset.train_x.min(axis=0)
    hi = dataset.train_x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)

    def render(x):
        q = np.clip(((x - lo) / span * bins).astype(int), 0, bins - 1)
        return " ".join(f"f{j}b{q[j]}" for j in range(x.shape[0]))

    docs = {i: render(x) for i, x in zip(dataset.train_ids, dataset.train_x)}
    queries = {i: render(x) for i, x in zip(dataset.test_ids, dataset.test_x)}
    return docs, queries


def _strategy_instances(config: ExperimentConfig, estimator: str):
    """(family, mode, lambda) triples for one estimator's strategy grid."""
    bm25 = estimator == "bm25"
    instances = []
    for family in config.strategies:
        if family == "naive":
            for mode in config.modes:
                if bm25 and mode not in BM25_MODES:
                    continue
                instances.append(("naive", mode, None))
        elif family == "random":
            instances.append(("random", None, None))
        elif family == "facility_location":
            for mode in config.modes:
                if bm25 and mode != "most_influential":
                    continue
                for lam in config.lambda_grid:
                    instances.append(("facility_location", mode, lam))
        elif family == "divine":
            for mode in config.modes:
                if bm25 and mode != "most_influential":
                    continue
                instances.append(("divine", mode, None))
        elif family == "aide":
            instances.append(("aide", None, None))
    return instances


class _Workbench:
    """Shared immutable inputs for one run."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.dataset = None
        self.model = None
        if config.toy is not None:
            toy = dict(config.toy)
            epochs = int(toy.pop("epochs", 300))
            train_lr = float(toy.pop("train_lr", 0.5))
            task = ToyTask(**toy)
            self.dataset = make_toy_task(task)
            self.model = train_toy_model(self.dataset, epochs, train_lr)
            dim = task.n_classes * (task.feature_dim + 1)
            segments = [("softmax", dim)]
            train_rows = np.stack(
                [
                    per_example_gradient(self.model, (x, y))
                    for x, y in zip(self.dataset.train_x, self.dataset.train_y)
                ]
            )
            # Test probes are the instances' own-label loss gradients; the
            # fine-tuning metrics separately target the model's prediction.
            test_rows = np.stack(
                [
                    per_example_gradient(self.model, (x, y))
                    for x, y in zip(self.dataset.test_x, self.dataset.test_y)
                ]
            )
            self.train_raw = GradientMatrix(
                ids=self.dataset.train_ids, rows=train_rows, layer_segments=segments
            )
            self.test_raw = GradientMatrix(
                ids=self.dataset.test_ids, rows=test_rows, layer_segments=segments
            )
            if "bm25" in config.estimators:
                self.docs, self.queries = toy_documents(self.dataset)
        else:
            self.train_raw = read_gradient_matrix(config.train_path)
            self.test_raw = read_gradient_matrix(config.test_path)
            if self.train_raw.dim != self.test_raw.dim:
                raise ConfigurationError(
                    f"train dim {self.train_raw.dim} != test dim {self.test_raw.dim}"
                )
            if "bm25" in config.estimators:
                if not (config.docs_path and config.queries_path):
                    raise ConfigurationError("bm25 needs docs_path and queries_path")
                self.docs = _read_text_csv(config.docs_path)
                self.queries = _read_text_csv(config.queries_path)
                missing = [i for i in self.test_raw.ids if i not in self.queries]
                if missing:
                    raise ConfigurationError(f"queries missing for test ids {missing}")
        self.train_norm = normalize_rows(self.train_raw)
        self.test_norm = normalize_rows(self.test_raw)
        self.scoring = config.scoring_spec()
        mode, count = config.probe_spec()
        if mode == "population":
            self.shared_probes = ProbeSet.sample_population(
                self.train_raw, count, derive_seed(config.seed, "probes")
            )
        else:
            self.shared_probes = None

    def probes_for(self, test_id: str) -> ProbeSet:
        if self.shared_probes is not None:
            return self.shared_probes
        return ProbeSet.from_test_gradient(test_id, self.test_raw.row(test_id))

    def rankings(self, estimator: str):
        """One InfluenceRanking per test id, in test matrix order."""
        if estimator == "gradient_similarity":
            est = GradientSimilarityEstimator().fit(self.train_norm)
            return [
                est.rank(self.test_norm.rows[i], test_id)
                for i, test_id in enumerate(self.test_norm.ids)
            ]
        if estimator == "bm25":
            est = BM25Estimator().fit(self.docs)
            return [est.rank(self.queries[test_id], test_id) for test_id in self.test_raw.ids]
        name = estimator[9:]
        directory = self.config.external_scores[name]
        return [
            load_external_scores(
                os.path.join(directory, f"{test_id}.csv"),
                self.train_raw.ids,
                test_id=test_id,
                name=name,
            )
            for test_id in self.test_raw.ids
        ]

    def score_members(self, member_ids, probes: ProbeSet):
        A = self.train_raw.subset(member_ids).rows.T
        return selection_relevance(A, probes, self.scoring)


def _read_text_csv(path) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ConfigurationError(f"expected 'id,text' CSV at {path}")
        for row in reader:
            if row:
                out[row[0]] = row[1]
    return out


def _validate_cell(bench, test_index: int, k: int, member_ids, seed_base: int):
    """Mean fine-tuning metrics over the random replicates for one selection."""
    config = bench.config
    dataset = bench.dataset
    idx = [dataset.train_ids.index(i) for i in member_ids]
    S = (dataset.train_x[idx], dataset.train_y[idx])
    x = dataset.test_x[test_index]
    y_hat = int(bench.model.predict(x[None, :])[0])
    plus = []
    shift = []
    for rep in range(RANDOM_REPLICATES):
        r_sel = select_random(dataset.train_ids, k, seed_base, rep)
        ridx = [dataset.train_ids.index(i) for i in r_sel.member_ids]
        R = (dataset.train_x[ridx], dataset.train_y[ridx])
        plus.append(prediction_support(bench.model, x, y_hat, S, R, config.validation_lr))
        shift.append(prediction_shift(bench.model, x, S, R, config.validation_lr))
    return float(np.mean(plus)), float(np.mean(shift))


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Evaluate the full grid; per-cell failures are recorded, not raised.

    Deterministic given the config: per-cell randomness derives from the
    master seed and the cell's position, never from execution order.
    """
    bench = _Workbench(config)
    rows = []
    records = []
    selections = []
    failures = []
    train_ids = bench.train_raw.ids
    for estimator in config.estimators:
        rankings = bench.rankings(estimator)
        instances = _strategy_instances(config, estimator)
        for test_index, ranking in enumerate(rankings):
            test_id = ranking.test_id
            probes = bench.probes_for(test_id)
            pools = {}
            sims = {}
            costs = {}
            for family, mode, lam in instances:
                for k in config.budgets:
                    cell = f"{estimator}/{family}" + (
                        f"({mode}" + (f",lambda={lam:g})" if lam is not None else ")")
                        if mode or lam is not None
                        else ""
                    ) + f"/k={k}/{test_id}"
                    started = time.perf_counter()
                    try:
                        if family == "random":
                            seed = derive_seed(config.seed, "random", test_index, k)
                            reps = [
                                select_random(train_ids, k, seed, rep, test_id=test_id)
                                for rep in range(RANDOM_REPLICATES)
                            ]
                            dbs = [
                                bench.score_members(sel.member_ids, probes).decibels
                                for sel in reps
                            ]
                            selections.extend((estimator, sel) for sel in reps)
                            mean_db = float(np.mean(dbs))
                            row = ResultRow(
                                estimator=estimator,
                                strategy="random",
                                lam=None,
                                k=k,
                                test_id=test_id,
                                ratio=10.0 ** (mean_db / 10.0),
                                db=mean_db,
                                wall_time=time.perf_counter() - started,
                            )
                            rows.append(row)
                            if config.validate:
                                seed_base = derive_seed(
                                    config.seed, "validation", test_index, k
                                )
                                plus, shift = zip(
                                    *(
                                        _validate_cell(
                                            bench, test_index, k, sel.member_ids, seed_base
                                        )
                                        for sel in reps
                                    )
                                )
                                records.append(
                                    ValidationRecord(
                                        test_id=test_id,
                                        estimator=estimator,
                                        strategy="random",
                                        k=k,
                                        xi_sr_db=row.db,
                                        xi_plus=float(np.mean(plus)),
                                        xi_jsd=float(np.mean(shift)),
                                        replicate_seed_base=seed_base,
                                    )
                                )
                            continue
                        if family == "naive":
                            selection = select_naive(ranking, k, mode)
                        else:
                            if mode is not None:
                                pool_mode = mode
                            else:
                                pool_mode = "most_influential"
                            if pool_mode not in pools:
                                pools[pool_mode] = candidate_pool(
                                    ranking, pool_mode, config.pool
                                )
                            pool = pools[pool_mode]
                            if family == "facility_location":
                                key = (pool_mode, True)
                                if key not in sims:
                                    sims[key] = candidate_similarity(
                                        bench.train_norm, pool, shift=True
                                    )
                                if pool_mode not in costs:
                                    costs[pool_mode] = influence_to_costs(
                                        ranking, pool_mode, config.m, pool
                                    )
                                selection = facility_location_select(
                                    pool, sims[key], costs[pool_mode], lam, k,
                                    test_id=test_id,
                                )
                            elif family == "divine":
                                key = (pool_mode, False)
                                if key not in sims:
                                    sims[key] = candidate_similarity(
                                        bench.train_norm, pool, shift=False
                                    )
                                selection = divine_select(
                                    pool, ranking, mode, sims[key], k
                                )
                            else:
                                key = (pool_mode, False)
                                if key not in sims:
                                    sims[key] = candidate_similarity(
                                        bench.train_norm, pool, shift=False
                                    )
                                selection = aide_select(
                                    pool,
                                    ranking,
                                    bench.test_norm.row(test_id),
                                    sims[key],
                                    k,
                                    bench.train_norm.subset(pool).rows,
                                )
                        selections.append((estimator, selection))
                        score = bench.score_members(selection.member_ids, probes)
                        strategy_label = (
                            f"{family}({mode})" if mode is not None else family
                        )
                        row = ResultRow(
                            estimator=estimator,
                            strategy=strategy_label,
                            lam=lam,
                            k=k,
                            test_id=test_id,
                            ratio=score.ratio,
                            db=score.decibels,
                            wall_time=time.perf_counter() - started,
                        )
                        rows.append(row)
                        if config.validate:
                            seed_base = derive_seed(
                                config.seed, "validation", test_index, k
                            )
                            plus, shift = _validate_cell(
                                bench, test_index, k, selection.member_ids, seed_base
                            )
                            records.append(
                                ValidationRecord(
                                    test_id=test_id,
                                    estimator=estimator,
                                    strategy=selection.strategy,
                                    k=k,
                                    xi_sr_db=row.db,
                                    xi_plus=plus,
                                    xi_jsd=shift,
                                    replicate_seed_base=seed_base,
                                )
                            )
                    except SelrelError as exc:
                        failures.append(f"{cell}: {exc}")
    return ExperimentResult(
        rows=rows, records=records, selections=selections, failures=failures
    )


def _series(item):
    if hasattr(item, "k") and hasattr(item, "db"):
        return int(item.k), float(item.db)
    k, db = item
    return int(k), float(db)


def auc_over_budgets(rows, budgets=None) -> float:
    """Trapezoid integral of dB over k, normalized by the budget range."""
    pairs = [_series(r) for r in rows]
    ks = [k for k, _ in pairs]
    if len(set(ks)) != len(ks):
        raise IncompleteSeriesError(f"duplicate budget entries in {sorted(ks)}")
    if budgets is not None:
        missing = sorted(set(int(b) for b in budgets) - set(ks))
        if missing:
            raise IncompleteSeriesError(f"series is missing budgets {missing}")
    if len(pairs) < 2:
        raise IncompleteSeriesError("need at least two budgets to aggregate")
    pairs.sort()
    x = np.array([k for k, _ in pairs], dtype=np.float64)
    y = np.array([db for _, db in pairs], dtype=np.float64)
    return float(np.trapezoid(y, x) / (x[-1] - x[0]))


def strategy_mode(strategy: str) -> str | None:
    """The selection mode named inside a strategy descriptor, if any."""
    if "(" not in strategy:
        return None
    inner = strategy[strategy.index("(") + 1 : strategy.rindex(")")]
    head = inner.split(",")[0].strip()
    return head if head in MODES else None


def relative_improvement(fl_rows, naive_rows) -> list[dict]:
    """Per-cell gain of facility location over the matching naive selection.

    Cells are (estimator, mode, lambda, k); ratios are averaged over test
    instances before comparison. Reports the dB difference and the percent
    change of the linear ratio. A facility-location cell with no matching
    naive cell raises PairingError.
    """

    def group(rows, with_lam):
        acc = {}
        for row in rows:
            mode = strategy_mode(row.strategy)
            key = (row.estimator, mode, row.lam if with_lam else None, row.k)
            acc.setdefault(key, []).append(row.ratio)
        return {k: float(np.mean(v)) for k, v in acc.items()}

    fl = group(fl_rows, with_lam=True)
    naive = group(naive_rows, with_lam=False)
    table = []
    for (estimator, mode, lam, k), fl_ratio in sorted(
        fl.items(), key=lambda kv: (kv[0][0], str(kv[0][1]), kv[0][2] or -1.0, kv[0][3])
    ):
        base_key = (estimator, mode, None, k)
        if base_key not in naive:
            raise PairingError(
                f"no naive baseline for estimator={estimator} mode={mode} k={k}"
            )
        base = naive[base_key]
        table.append(
            {
                "estimator": estimator,
                "mode": mode,
                "lambda": lam,
                "k": k,
                "db_diff": 10.0 * math.log10(fl_ratio / base),
                "pct": 100.0 * (fl_ratio - base) / base,
            }
        )
    return table


def _row_sort_key(row: ResultRow):
    return (
        row.estimator,
        row.strategy,
        -1.0 if row.lam is None else row.lam,
        row.k,
        row.test_id,
    )


def write_report(rows, out_dir, fmt: str = "csv", validation=None) -> list[str]:
    """Write results.csv, auc.csv, improvement.csv (and validation.csv).

    Deterministic: stable row ordering and fixed formatting, so identical
    rows yield byte-identical files. dB columns use the two-decimal table
    style. Strategy groups missing some budgets (failed cells) are skipped
    in the AUC table; the run itself reports those failures.
    """
    if fmt != "csv":
        raise ValueError(f"unsupported report format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    rows = sorted(rows, key=_row_sort_key)
    written = []

    def lam_str(lam):
        return "" if lam is None else f"{lam:g}"

    path = os.path.join(out_dir, "results.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "strategy", "lambda", "k", "test_id", "ratio", "db"])
        for row in rows:
            writer.writerow(
                [
                    row.estimator,
                    row.strategy,
                    lam_str(row.lam),
                    row.k,
                    row.test_id,
                    repr(row.ratio),
                    f"{row.db:.2f}",
                ]
            )
    written.append(path)

    groups = {}
    for row in rows:
        key = (row.estimator, row.strategy, row.lam)
        groups.setdefault(key, {}).setdefault(row.k, []).append(row.db)
    all_budgets = sorted({row.k for row in rows})
    path = os.path.join(out_dir, "auc.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "strategy", "lambda", "auc_db"])
        for (estimator, strategy, lam), by_k in sorted(
            groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] or -1.0)
        ):
            if sorted(by_k) != all_budgets or len(all_budgets) < 2:
                continue
            series = [(k, float(np.mean(dbs))) for k, dbs in sorted(by_k.items())]
            auc = auc_over_budgets(series, budgets=all_budgets)
            writer.writerow([estimator, strategy, lam_str(lam), f"{auc:.2f}"])
    written.append(path)

    fl_rows = [r for r in rows if r.strategy.startswith("facility_location")]
    naive_rows = [r for r in rows if r.strategy.startswith("naive")]
    path = os.path.join(out_dir, "improvement.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "mode", "lambda", "k", "db_diff", "pct"])
        if fl_rows and naive_rows:
            for cell in relative_improvement(fl_rows, naive_rows):
                writer.writerow(
                    [
                        cell["estimator"],
                        cell["mode"],
                        lam_str(cell["lambda"]),
                        cell["k"],
                        f"{cell['db_diff']:.2f}",
                        f"{cell['pct']:.2f}",
                    ]
                )
    written.append(path)

    if validation:
        path = os.path.join(out_dir, "validation.csv")
        recs = sorted(
            validation,
            key=lambda r: (r.estimator, r.strategy, r.k, r.test_id),
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "test_id",
                    "estimator",
                    "strategy",
                    "k",
                    "xi_sr_db",
                    "xi_plus",
                    "xi_jsd",
                    "replicate_seed_base",
                ]
            )
            for rec in recs:
                writer.writerow(
                    [
                        rec.test_id,
                        rec.estimator,
                        rec.strategy,
                        rec.k,
                        repr(rec.xi_sr_db),
                        repr(rec.xi_plus),
                        repr(rec.xi_jsd),
                        rec.replicate_seed_base,
                    ]
                )
        written.append(path)
    return written


def write_selections(selections, path) -> str:
    """One CSV row per selected member, with the resolved strategy params.

    Rows are sorted by (estimator, test_id, strategy, k) and members keep
    their selection order (rank starts at 1). Params serialize as JSON with
    sorted keys, so identical selections yield byte-identical files.
    """
    ordered = sorted(
        selections, key=lambda es: (es[0], es[1].test_id, es[1].strategy, es[1].k)
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["test_id", "estimator", "strategy", "k", "rank", "member_id", "params"]
        )
        for estimator, sel in ordered:
            params = json.dumps(sel.params, sort_keys=True)
            for rank, member in enumerate(sel.member_ids, start=1):
                writer.writerow(
                    [sel.test_id, estimator, sel.strategy, sel.k, rank, member, params]
                )
    return str(path)


def correlation_summary(records, n_bins: int = 5) -> dict:
    """Spearman correlations and rule-accuracy bins over validation records.

    Correlations relate xi_sr_db to xi_plus over the full record set and over
    the records with positive dB. Bins are equal-count dB quantiles, so the
    per-bin accuracies stay stable even when a few extreme reconstruction
    failures stretch the observed range.
    """
    records = list(records)
    dbs = np.array([r.xi_sr_db for r in records], dtype=np.float64)
    plus = np.array([r.xi_plus for r in records], dtype=np.float64)
    out = {"n_records": len(records)}

    def safe_spearman(a, b):
        if a.shape[0] < 2:
            return None
        try:
            return spearman(a, b)
        except UndefinedCorrelationError:
            return None

    out["spearman_full"] = safe_spearman(dbs, plus)
    positive = dbs > 0.0
    out["n_positive"] = int(positive.sum())
    out["spearman_positive"] = safe_spearman(dbs[positive], plus[positive])
    edges = []
    if len(records):
        quantiles = np.quantile(dbs, np.linspace(0.0, 1.0, n_bins + 1))
        edges = sorted(set(float(q) for q in quantiles))
    out["bins"] = accuracy_by_bins(records, edges) if len(edges) >= 2 else []
    return out

"""Cross-validation experiments and report output.

Each repetition splits the benchmark at random, evolves on the training part
and then scores every generation's training champion on the validation part.
Validation happens after evolution has finished, so it cannot influence it.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence, Union

from .benchmark import Benchmark, SplitMix64
from .evolution import EvolutionConfig, EvolutionTrace, Fitness, FitnessCache, evolve
from .strategy import Kind

PLOT_GENERATIONS = (0, 10, 20, 30, 40)

REPORT_COLUMNS = (
    "repetition", "generation", "kind", "train_size", "valid_size",
    "validation_unsolved", "train_solved", "train_rules_fired",
)


@dataclass(frozen=True)
class SplitSpec:
    split_seed: int
    train_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.split_seed < 0:
            raise ValueError("split_seed must be non-negative")


def _problems_of(benchmark) -> tuple:
    return tuple(benchmark.problems if isinstance(benchmark, Benchmark) else benchmark)


def random_split(benchmark, spec: SplitSpec) -> tuple[tuple, tuple]:
    """Shuffle with a seeded Fisher-Yates and cut after ceil(fraction * N)."""
    problems = list(_problems_of(benchmark))
    n = len(problems)
    if n < 2:
        raise ValueError("need at least 2 problems to split")
    n_train = math.ceil(spec.train_fraction * n)
    if not 0 < n_train < n:
        raise ValueError(f"fraction {spec.train_fraction} leaves an empty partition of {n} problems")
    rng = SplitMix64(spec.split_seed)
    for i in range(n - 1, 0, -1):
        j = rng.next() % (i + 1)
        problems[i], problems[j] = problems[j], problems[i]
    return tuple(problems[:n_train]), tuple(problems[n_train:])


@dataclass
class RepetitionResult:
    repetition: int
    split: SplitSpec
    master_seed: int
    train_ids: tuple[str, ...]
    valid_ids: tuple[str, ...]
    training_best: list[Fitness]
    validation: list[Fitness]
    trace: Optional[EvolutionTrace] = None

    @property
    def validation_unsolved(self) -> list[int]:
        return [len(self.valid_ids) - f.solved for f in self.validation]


@dataclass
class CrossValReport:
    kind: Kind
    benchmark_name: str
    config: EvolutionConfig
    repetitions: list[RepetitionResult] = field(default_factory=list)

    @property
    def generations(self) -> int:
        return self.config.generations

    def mean_validation_unsolved(self, generation: int) -> float:
        values = [rep.validation_unsolved[generation] for rep in self.repetitions]
        return sum(values) / len(values)

    def rows(self) -> list[tuple]:
        out = []
        for rep in sorted(self.repetitions, key=lambda r: r.repetition):
            for g, (train, unsolved) in enumerate(zip(rep.training_best, rep.validation_unsolved)):
                out.append((rep.repetition, g, self.kind.value, len(rep.train_ids),
                            len(rep.valid_ids), unsolved, train.solved, train.rules_fired_total))
        return out


def cross_validate(
    benchmark, cfg: EvolutionConfig = EvolutionConfig(), repeats: int = 4,
    base_split_seed: int = 0, train_fraction: Union[float, Sequence[float]] = 0.5,
    *, jobs: int = 1, keep_traces: bool = False,
) -> CrossValReport:
    """Repetition ``r`` splits with seed ``base_split_seed + r`` and evolves
    with master seed ``cfg.master_seed + r``. ``train_fraction`` may be a
    per-repetition sequence."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if isinstance(train_fraction, (int, float)):
        fractions = [float(train_fraction)] * repeats
    else:
        fractions = [float(f) for f in train_fraction]
        if len(fractions) != repeats:
            raise ValueError(f"got {len(fractions)} train fractions for {repeats} repetitions")
    name = benchmark.name if isinstance(benchmark, Benchmark) else "problems"
    report = CrossValReport(cfg.kind, name, cfg)
    for r in range(repeats):
        spec = SplitSpec(base_split_seed + r, fractions[r])
        train, valid = random_split(benchmark, spec)
        rep_cfg = dataclasses.replace(cfg, master_seed=cfg.master_seed + r)
        trace, _ = evolve(train, rep_cfg, jobs=jobs)
        # Champions often repeat across generations; the cache scores each once.
        valid_cache = FitnessCache(valid, cfg.budget, jobs)
        validation = [valid_cache.fitness_of(rec.champion) for rec in trace.records]
        report.repetitions.append(RepetitionResult(
            r, spec, rep_cfg.master_seed,
            tuple(p.problem_id for p in train), tuple(p.problem_id for p in valid),
            trace.best_per_generation(), validation, trace if keep_traces else None,
        ))
    return report


def _as_reports(reports) -> list[CrossValReport]:
    return [reports] if isinstance(reports, CrossValReport) else list(reports)


def _with_sink(sink, write) -> None:
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write(fh)
    else:
        write(sink)


def write_report_csv(reports: Union[CrossValReport, Iterable[CrossValReport]],
                     sink: Union[str, IO[str]]) -> None:
    def write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for report in _as_reports(reports):
            writer.writerows(report.rows())

    _with_sink(sink, write)


def read_report_csv(source: Union[str, IO[str]]) -> list[dict]:
    def read(fh):
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report columns {reader.fieldnames}")
        rows = []
        for row in reader:
            typed = {k: int(v) for k, v in row.items() if k != "kind"}
            typed["kind"] = row["kind"]
            rows.append(typed)
        return rows

    if isinstance(source, str):
        with open(source, encoding="utf-8", newline="") as fh:
            return read(fh)
    return read(source)


def plot_series(reports, generations: Sequence[int] = PLOT_GENERATIONS) -> dict[str, list[tuple]]:
    """Per kind: ``(generation, mean, min, max)`` of validation_unsolved over repetitions."""
    series = {}
    for report in _as_reports(reports):
        points = []
        for g in generations:
            if g > report.generations:
                continue
            values = [rep.validation_unsolved[g] for rep in report.repetitions]
            points.append((g, sum(values) / len(values), min(values), max(values)))
        series[report.kind.value] = points
    return series


def write_plot_data(reports, sink: Union[str, IO[str]],
                    generations: Sequence[int] = PLOT_GENERATIONS) -> None:
    def write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("kind", "generation", "mean_validation_unsolved", "min", "max"))
        for kind, points in plot_series(reports, generations).items():
            for g, mean, lo, hi in points:
                writer.writerow((kind, g, f"{mean:.4f}", lo, hi))

    _with_sink(sink, write)


def write_plot_svg(reports, path: str, generations: Sequence[int] = PLOT_GENERATIONS) -> None:
    """Line chart of mean validation_unsolved per kind. Needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = plot_series(reports, generations)
    with matplotlib.rc_context({"svg.hashsalt": "evostrat", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for kind, points in series.items():
            xs = [p[0] for p in points]
            ax.plot(xs, [p[1] for p in points], marker="o", label=kind)
            ax.fill_between(xs, [p[2] for p in points], [p[3] for p in points], alpha=0.15)
        ax.set_xlabel("generation")
        ax.set_ylabel("validation problems unsolved")
        ax.set_xticks(list(generations))
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

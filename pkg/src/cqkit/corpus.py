"""Assemble instruction samples and emit curriculum stage files.

A sample is (prompt, completion): the prompt holds the task description, the
retrieved context block, and the query; the completion is the rendered
subquery chain followed by the FINAL answer line. Samples whose estimated
prompt+completion token count exceeds the budget are discarded and counted,
never truncated.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from cqkit.decompose import compile_query, difficulty
from cqkit.executor import AnswerSplit, answer_chain, ordered_final, split_answers
from cqkit.kg import SplitGraphs
from cqkit.prompts import STEP_DISPLAY_CAP, render_completion, render_prompt
from cqkit.queries import GroundedQuery
from cqkit.retrieval import PER_RELATION_CAP, RetrievedContext, TokenBudget, estimate_tokens, retrieve

TOKEN_HISTOGRAM_BUCKET = 256


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class CorpusSample:
    id: str
    query: GroundedQuery
    split: str
    difficulty: int
    prompt: str
    completion: str
    answers: AnswerSplit
    token_estimate: int
    context: RetrievedContext | None = None

    @property
    def type(self) -> str:
        return self.query.type

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "type": self.query.type,
            "difficulty": self.difficulty,
            "split": self.split,
            "prompt": self.prompt,
            "completion": self.completion,
            "easy_answers": list(self.answers.easy),
            "hard_answers": list(self.answers.hard),
            "token_estimate": self.token_estimate,
        }


@dataclass(frozen=True)
class BuildConfig:
    per_relation_cap: int = PER_RELATION_CAP
    step_display_cap: int = STEP_DISPLAY_CAP


def build_sample(
    query: GroundedQuery,
    split: str,
    graphs: SplitGraphs,
    budget: TokenBudget,
    config: BuildConfig = BuildConfig(),
) -> CorpusSample:
    """Assemble one sample; the caller applies the budget discard rule."""
    retrieval_graph, smaller, larger = graphs.for_split(split)
    chain = compile_query(query.expr)
    count, level = difficulty(chain)
    context = retrieve(query, retrieval_graph, budget, config.per_relation_cap)
    answers = split_answers(query.expr, smaller, larger)
    bindings, final = answer_chain(chain, larger)
    prompt = render_prompt(query, context.triples, retrieval_graph)
    completion = render_completion(
        chain,
        bindings,
        ordered_final(final, answers.hard_set),
        larger,
        step_display_cap=config.step_display_cap,
    )
    return CorpusSample(
        id=query.id,
        query=query,
        split=split,
        difficulty=level,
        prompt=prompt,
        completion=completion,
        answers=answers,
        token_estimate=estimate_tokens(prompt + "\n" + completion),
        context=context,
    )


def build_corpus(
    graphs: SplitGraphs,
    tagged_queries: list[tuple[GroundedQuery, str]],
    budget: TokenBudget = TokenBudget(),
    config: BuildConfig = BuildConfig(),
) -> tuple[list[CorpusSample], dict]:
    """Samples (sorted by id) plus build statistics. Over-budget samples are
    dropped and counted per type."""
    samples: list[CorpusSample] = []
    emitted: dict[str, int] = {}
    discarded: dict[str, int] = {}
    histogram: dict[int, int] = {}
    for query, split in tagged_queries:
        sample = build_sample(query, split, graphs, budget, config)
        bucket = (sample.token_estimate // TOKEN_HISTOGRAM_BUCKET) * TOKEN_HISTOGRAM_BUCKET
        histogram[bucket] = histogram.get(bucket, 0) + 1
        if sample.token_estimate > budget.max_tokens:
            discarded[query.type] = discarded.get(query.type, 0) + 1
            continue
        emitted[query.type] = emitted.get(query.type, 0) + 1
        samples.append(sample)
    samples.sort(key=lambda s: s.id)
    stats = {
        "input_count": len(tagged_queries),
        "emitted_count": len(samples),
        "discarded_count": len(tagged_queries) - len(samples),
        "emitted_per_type": dict(sorted(emitted.items())),
        "discarded_per_type": dict(sorted(discarded.items())),
        "difficulty_counts": {
            str(level): sum(1 for s in samples if s.difficulty == level) for level in (1, 2, 3)
        },
        "token_histogram": {str(k): histogram[k] for k in sorted(histogram)},
        "budget": budget.max_tokens,
    }
    return samples, stats


def write_corpus(samples: list[CorpusSample], path: str | Path):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for s in sorted(samples, key=lambda s: s.id):
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def read_corpus(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


# ---------------------------------------------------------------------------
# Curriculum schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageSpec:
    mix: tuple[int, int, int]  # percent of easy / medium / hard
    count: int
    seed: int

    def __post_init__(self):
        if sum(self.mix) != 100:
            raise CorpusError(f"stage mix {self.mix} does not sum to 100")
        if self.count <= 0:
            raise CorpusError("stage count must be positive")


DEFAULT_MIXES = ((80, 10, 10), (10, 80, 10), (10, 10, 80))


@dataclass(frozen=True)
class CurriculumSchedule:
    stages: tuple[StageSpec, ...] = field(default=())

    @classmethod
    def default(cls, count: int, seed: int, mixes=DEFAULT_MIXES) -> "CurriculumSchedule":
        return cls(
            tuple(
                StageSpec(mix=tuple(mix), count=count, seed=seed + k)
                for k, mix in enumerate(mixes, start=1)
            )
        )


def _class_targets(count: int, mix: tuple[int, int, int]) -> list[int]:
    """Largest-remainder split of ``count`` by the mix percentages; always
    sums to ``count`` and stays within 1 of exact proportionality."""
    base = [count * p // 100 for p in mix]
    rem = [count * p % 100 for p in mix]
    short = count - sum(base)
    for idx in sorted(range(3), key=lambda i: (-rem[i], i))[:short]:
        base[idx] += 1
    return base


def schedule_stages(
    samples: list[CorpusSample], schedule: CurriculumSchedule
) -> list[list[CorpusSample]]:
    """Draw the stages without replacement (samples never repeat across
    stages). Each stage file is ordered by sample id."""
    pools: dict[int, list[CorpusSample]] = {1: [], 2: [], 3: []}
    for s in sorted(samples, key=lambda s: s.id):
        pools[s.difficulty].append(s)

    names = {1: "easy", 2: "medium", 3: "hard"}
    stages: list[list[CorpusSample]] = []
    for stage_idx, spec in enumerate(schedule.stages, start=1):
        rng = random.Random(spec.seed)
        targets = _class_targets(spec.count, spec.mix)
        chosen: list[CorpusSample] = []
        for level, want in zip((1, 2, 3), targets):
            pool = pools[level]
            if want > len(pool):
                raise CorpusError(
                    f"stage {stage_idx}: {names[level]} pool exhausted "
                    f"(need {want}, have {len(pool)}, short {want - len(pool)})"
                )
            picked_idx = sorted(rng.sample(range(len(pool)), want))
            chosen.extend(pool[i] for i in picked_idx)
            picked_set = set(picked_idx)
            pools[level] = [s for i, s in enumerate(pool) if i not in picked_set]
        stages.append(sorted(chosen, key=lambda s: s.id))
    return stages


def max_balanced_stage_count(samples: list[CorpusSample], mixes=DEFAULT_MIXES) -> int:
    """Largest per-stage count the pools can support for the given mixes,
    accounting for largest-remainder rounding (which can demand one extra
    sample per class per stage)."""
    pool_sizes = [sum(1 for s in samples if s.difficulty == level) for level in (1, 2, 3)]

    def feasible(n: int) -> bool:
        demand = [0, 0, 0]
        for mix in mixes:
            for c, t in enumerate(_class_targets(n, tuple(mix))):
                demand[c] += t
        return all(d <= p for d, p in zip(demand, pool_sizes))

    upper = len(samples) // max(len(mixes), 1)
    for n in range(upper, 0, -1):
        if feasible(n):
            return n
    return 0


def write_stages(stages: list[list[CorpusSample]], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for k, stage in enumerate(stages, start=1):
        path = out_dir / f"stage{k}.jsonl"
        write_corpus(stage, path)
        paths.append(path)
    return paths

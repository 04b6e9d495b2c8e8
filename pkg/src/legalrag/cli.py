"""Single command-line entry point for the experiment lifecycle.

Every subcommand reads a JSON config file (see README for the schema),
with flags overriding file values. Exit codes: 0 success, 2 config error,
3 data error, 4 provider error.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from . import corpus, ensemble, llm_gateway, metrics, prompting, retrieval, window_baseline
from .corpus import Dataset, Label, SplitKind
from .embedding import BuiltinEmbedder, EmbeddingProvider, KeyMode, RemoteEmbedder, build_key
from .errors import ConfigError, DataError, LegalRagError, ProviderError
from .prompting import Strategy

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PROVIDER = 4


@dataclass
class RunConfig:
    raw: dict
    path: Path

    def dataset_path(self, split: str) -> Path:
        data = self.raw.get("data", {})
        if split not in data:
            raise ConfigError(f"config has no data.{split} path")
        return self._resolve(data[split])

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else (self.path.parent / path)

    @property
    def output_dir(self) -> Path:
        return self._resolve(self.raw.get("output_dir", "out"))

    @property
    def cache_dir(self) -> Path:
        return self._resolve(self.raw.get("cache_dir", "cache"))

    @property
    def key_mode(self) -> KeyMode:
        return KeyMode(self.raw.get("embedding", {}).get("key_mode", "triplet"))

    def embedding_provider(self) -> EmbeddingProvider:
        cfg = self.raw.get("embedding", {})
        kind = cfg.get("kind", "builtin")
        token_budget = int(cfg.get("token_budget", 512))
        if kind == "builtin":
            return BuiltinEmbedder(dim=int(cfg.get("dim", 256)), token_budget=token_budget)
        if kind == "remote":
            if "endpoint" not in cfg:
                raise ConfigError("embedding.kind=remote needs embedding.endpoint")
            return RemoteEmbedder(endpoint=cfg["endpoint"], token_budget=token_budget)
        raise ConfigError(f"unknown embedding.kind {kind!r}")

    def chat_provider(self) -> llm_gateway.ChatProvider:
        cfg = self.raw.get("chat", {})
        kind = cfg.get("kind", "mock")
        cache = llm_gateway.CompletionCache(self.cache_dir)
        if kind == "mock":
            script = None
            if "script" in cfg:
                script = json.loads(self._resolve(cfg["script"]).read_text(encoding="utf-8"))
            return llm_gateway.MockChatProvider(script=script)
        if kind == "replay":
            return llm_gateway.ReplayProvider(cache)
        if kind == "remote":
            if "endpoint" not in cfg:
                raise ConfigError("chat.kind=remote needs chat.endpoint")
            remote = llm_gateway.RemoteChatProvider(endpoint=cfg["endpoint"])
            return llm_gateway.CachingProvider(remote, cache)
        raise ConfigError(f"unknown chat.kind {kind!r}")

    def template(self) -> prompting.PromptTemplate:
        budget = self.raw.get("word_budget")
        if "system_prompt" in self.raw:
            return prompting.PromptTemplate.from_file(
                self._resolve(self.raw["system_prompt"]), word_budget=budget
            )
        return prompting.PromptTemplate(word_budget=budget)

    def retrieval_config(self) -> retrieval.RetrievalConfig:
        cfg = self.raw.get("retrieval", {})
        return retrieval.RetrievalConfig(
            per_class_k=int(cfg.get("per_class_k", 1)),
            exclude_ids=frozenset(cfg.get("exclude_ids", ())),
            ordering_policy=retrieval.OrderingPolicy(
                cfg.get("ordering_policy", "false_then_true")
            ),
        )

    def ensemble_config(self) -> ensemble.EnsembleConfig:
        cfg = self.raw.get("ensemble", {})
        members = ensemble.DEFAULT_MEMBERS
        if "members" in cfg:
            members = frozenset(Strategy(name) for name in cfg["members"])
        return ensemble.EnsembleConfig(
            members=members,
            threshold=float(cfg.get("threshold", ensemble.DEFAULT_THRESHOLD)),
            strict_greater=bool(cfg.get("strict_greater", False)),
        )

    def retry_policy(self) -> llm_gateway.RetryPolicy:
        cfg = self.raw.get("retry", {})
        kwargs = {}
        if "limit" in cfg:
            kwargs["retry_limit"] = int(cfg["limit"])
        if "preamble" in cfg:
            kwargs["retry_preamble"] = cfg["preamble"]
        return llm_gateway.RetryPolicy(**kwargs)

    def strategies(self) -> list[Strategy]:
        names = self.raw.get("strategies")
        if names is None:
            return list(prompting.STRATEGY_ORDER)
        return [Strategy(name) for name in names]


def load_config(path: str) -> RunConfig:
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return RunConfig(raw=raw, path=config_path)


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except ProviderError as exc:
            click.echo(f"provider error: {exc}", err=True)
            sys.exit(EXIT_PROVIDER)
        except LegalRagError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def cli() -> None:
    """Retrieval-augmented TRUE/FALSE classification of legal answer candidates."""


_config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(), help="JSON config file."
)


def _split_kind(name: str) -> SplitKind:
    try:
        return SplitKind(name)
    except ValueError:
        raise ConfigError(f"unknown split {name!r}") from None


@cli.command("validate-data")
@_config_option
@click.option("--split", default="train", show_default=True)
@_handle_errors
def validate_data(config_path: str, split: str) -> None:
    """Load and validate one dataset split."""

    config = load_config(config_path)
    kind = _split_kind(split)
    dataset = corpus.load_dataset(config.dataset_path(split), kind)
    click.echo(f"{split}: {len(dataset)} instances, all valid")


@cli.command("audit-leakage")
@_config_option
@click.option("--other", "other_split", default="validation", show_default=True)
@_handle_errors
def audit_leakage(config_path: str, other_split: str) -> None:
    """Report introduction+question pairs shared between train and another split."""

    config = load_config(config_path)
    train = corpus.load_dataset(config.dataset_path("train"), SplitKind.TRAIN)
    other = corpus.load_dataset(config.dataset_path(other_split), _split_kind(other_split))
    report = corpus.audit_leakage(train, other)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    out = config.output_dir / f"leakage_{other_split}.json"
    out.write_text(
        json.dumps(
            {
                "overlap_count": report.overlap_count,
                "overlapping_pairs": [list(p) for p in report.overlapping_pairs],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    click.echo(f"{report.overlap_count} overlapping pair(s); details in {out}")


def _index_path(config: RunConfig) -> Path:
    return config.output_dir / "index.jsonl"


@cli.command("build-index")
@_config_option
@_handle_errors
def build_index_cmd(config_path: str) -> None:
    """Embed the training split into the retrieval index file."""

    config = load_config(config_path)
    train = corpus.load_dataset(config.dataset_path("train"), SplitKind.TRAIN)
    provider = config.embedding_provider()
    index = retrieval.build_index(train, provider, config.key_mode)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    retrieval.save_index(index, _index_path(config))
    click.echo(f"indexed {len(index.entries)} instances -> {_index_path(config)}")


def _shots_resolver(config: RunConfig, strategy: Strategy, train: Dataset):
    """Return shots_for(instance) for the strategy's exemplar source."""

    source, _ = prompting.strategy_requirements(strategy)
    if source is prompting.ShotSource.NONE:
        return lambda inst: ()
    if source is prompting.ShotSource.FIXED:
        if "fixed_shots" not in config.raw:
            raise ConfigError(f"{strategy.value} needs a fixed_shots file in the config")
        shots = prompting.load_fixed_shots(config._resolve(config.raw["fixed_shots"])).shots
        return lambda inst: shots
    provider = config.embedding_provider()
    key_mode = config.key_mode
    index_path = _index_path(config)
    if index_path.exists():
        index = retrieval.load_index(
            index_path, retrieval.provider_fingerprint(provider, key_mode)
        )
    else:
        index = retrieval.build_index(train, provider, key_mode)
    rconfig = config.retrieval_config()
    by_id = train.by_id()

    def shots_for(inst):
        query = provider.embed(build_key(inst, key_mode).text)
        hits = retrieval.retrieve(index, query, inst.id, rconfig)
        ordered = retrieval.order_examples(hits, rconfig.ordering_policy)
        return [by_id[iid] for iid, _, _ in ordered]

    return shots_for


def _predict_one_strategy(
    config: RunConfig, strategy: Strategy, split: str, jobs: int
) -> Path:
    dataset = corpus.load_dataset(config.dataset_path(split), _split_kind(split))
    train = corpus.load_dataset(config.dataset_path("train"), SplitKind.TRAIN)
    provider = config.chat_provider()
    template = config.template()
    shots_for = _shots_resolver(config, strategy, train)
    _, cot = prompting.strategy_requirements(strategy)
    predictions = llm_gateway.classify_dataset(
        provider,
        strategy,
        template,
        dataset.instances,
        shots_for,
        params=llm_gateway.default_params(cot),
        retry_policy=config.retry_policy(),
        jobs=jobs,
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    out = config.output_dir / f"predictions_{strategy.value}.jsonl"
    llm_gateway.save_predictions(predictions, out)
    return out


@cli.command("predict")
@_config_option
@click.option("--strategy", "strategy_name", required=True)
@click.option("--split", default="validation", show_default=True)
@click.option("--jobs", default=1, show_default=True)
@_handle_errors
def predict(config_path: str, strategy_name: str, split: str, jobs: int) -> None:
    """Classify one split with one prompting strategy."""

    config = load_config(config_path)
    try:
        strategy = Strategy(strategy_name)
    except ValueError:
        raise ConfigError(f"unknown strategy {strategy_name!r}") from None
    out = _predict_one_strategy(config, strategy, split, jobs)
    click.echo(f"wrote {out}")


@cli.command("predict-all")
@_config_option
@click.option("--split", default="validation", show_default=True)
@click.option("--jobs", default=1, show_default=True)
@_handle_errors
def predict_all(config_path: str, split: str, jobs: int) -> None:
    """Classify one split with every configured strategy."""

    config = load_config(config_path)
    for strategy in config.strategies():
        out = _predict_one_strategy(config, strategy, split, jobs)
        click.echo(f"wrote {out}")


def _load_prediction_sets(
    config: RunConfig, strategies: list[Strategy]
) -> dict[Strategy, dict[str, Label]]:
    sets: dict[Strategy, dict[str, Label]] = {}
    for strategy in strategies:
        path = config.output_dir / f"predictions_{strategy.value}.jsonl"
        if not path.exists():
            continue
        sets[strategy] = {
            p.instance_id: p.label for p in llm_gateway.load_predictions(path)
        }
    return sets


def _gold_labels(config: RunConfig, split: str) -> dict[str, Label]:
    dataset = corpus.load_dataset(config.dataset_path(split), _split_kind(split))
    gold = {}
    for inst in dataset.instances:
        if inst.label is None:
            raise DataError(f"instance {inst.id!r} on split {split} has no gold label")
        gold[inst.id] = inst.label
    return gold


@cli.command("ensemble-vote")
@_config_option
@_handle_errors
def ensemble_vote(config_path: str) -> None:
    """Threshold-vote the configured member strategies' prediction files."""

    config = load_config(config_path)
    econfig = config.ensemble_config()
    sets = _load_prediction_sets(config, sorted(econfig.members, key=lambda s: s.value))
    missing = [s.value for s in econfig.members if s not in sets]
    if missing:
        raise DataError(f"missing prediction file(s) for ensemble member(s): {missing}")
    voted = ensemble.vote_all(sets, econfig)
    out = config.output_dir / "predictions_ensemble.jsonl"
    lines = [
        json.dumps({"instance_id": iid, "label": voted[iid].value}, sort_keys=True)
        for iid in sorted(voted)
    ]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {out}")


@cli.command("ensemble-search")
@_config_option
@click.option("--split", default="validation", show_default=True)
@click.option("--min-size", default=1, show_default=True)
@click.option("--top", default=20, show_default=True, help="Rows in the summary output.")
@click.option(
    "--holdout-dir",
    default=None,
    type=click.Path(),
    help="Directory of prediction files for a second split; reports its scores side by side.",
)
@click.option("--holdout-split", default="test", show_default=True)
@_handle_errors
def ensemble_search(
    config_path: str,
    split: str,
    min_size: int,
    top: int,
    holdout_dir: str | None,
    holdout_split: str,
) -> None:
    """Exhaustive member-subset x threshold search against gold labels."""

    config = load_config(config_path)
    sets = _load_prediction_sets(config, config.strategies())
    if not sets:
        raise DataError("no prediction files found to search over")
    gold = _gold_labels(config, split)
    thresholds = tuple(
        float(t) for t in config.raw.get("ensemble", {}).get(
            "threshold_grid", ensemble.DEFAULT_THRESHOLD_GRID
        )
    )
    results = ensemble.search(sets, gold, thresholds=thresholds, min_size=min_size)

    holdout = None
    if holdout_dir is not None:
        holdout_sets: dict[Strategy, dict[str, Label]] = {}
        for strategy in sets:
            path = Path(holdout_dir) / f"predictions_{strategy.value}.jsonl"
            if not path.exists():
                raise DataError(f"holdout prediction file missing: {path}")
            holdout_sets[strategy] = {
                p.instance_id: p.label for p in llm_gateway.load_predictions(path)
            }
        holdout_gold = _gold_labels(config, holdout_split)
        holdout = ensemble.compare_on_holdout(results, holdout_sets, holdout_gold)

    out = config.output_dir / "ensemble_search.jsonl"
    lines = []
    for i, r in enumerate(results):
        record = {
            "members": sorted(s.value for s in r.config.members),
            "threshold": r.config.threshold,
            "macro_f1": round(r.macro_f1, 4),
            "accuracy": round(r.accuracy, 4),
        }
        if holdout is not None:
            record["holdout_macro_f1"] = round(holdout[i].holdout_macro_f1, 4)
            record["holdout_accuracy"] = round(holdout[i].holdout_accuracy, 4)
        lines.append(json.dumps(record, sort_keys=True))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    for i, r in enumerate(results[:top]):
        members = "+".join(sorted(s.value for s in r.config.members))
        line = (
            f"macro_f1={r.macro_f1:.4f} acc={r.accuracy:.4f} "
            f"threshold={r.config.threshold} members={members}"
        )
        if holdout is not None:
            line += f" holdout_macro_f1={holdout[i].holdout_macro_f1:.4f}"
        click.echo(line)
    click.echo(f"wrote {out}")


def _scored_rows(config: RunConfig, split: str) -> list[metrics.ScoredRow]:
    gold = _gold_labels(config, split)
    rows: list[metrics.ScoredRow] = []
    for strategy in prompting.STRATEGY_ORDER:
        path = config.output_dir / f"predictions_{strategy.value}.jsonl"
        if not path.exists():
            continue
        preds = {p.instance_id: p.label for p in llm_gateway.load_predictions(path)}
        rows.append(metrics.ScoredRow(strategy.value, metrics.confusion(preds, gold)))
    ensemble_path = config.output_dir / "predictions_ensemble.jsonl"
    if ensemble_path.exists():
        preds = {}
        for line in ensemble_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                record = json.loads(line)
                preds[record["instance_id"]] = Label(record["label"])
        rows.append(metrics.ScoredRow("ensemble", metrics.confusion(preds, gold)))
    if not rows:
        raise DataError("no prediction files found to score")
    return rows


@cli.command("score")
@_config_option
@click.option("--split", default="validation", show_default=True)
@_handle_errors
def score(config_path: str, split: str) -> None:
    """Score every prediction file against the split's gold labels."""

    config = load_config(config_path)
    rows = _scored_rows(config, split)
    scores_path, _ = metrics.emit_report(rows, config.output_dir)
    for row in rows:
        click.echo(f"{row.name}: macro_f1={row.macro_f1:.4f} acc={row.accuracy:.4f}")
    click.echo(f"wrote {scores_path}")


@cli.command("report")
@_config_option
@click.option("--split", default="validation", show_default=True)
@_handle_errors
def report(config_path: str, split: str) -> None:
    """Emit the human-readable results table with FP/FN id lists."""

    config = load_config(config_path)
    rows = _scored_rows(config, split)
    _, report_path = metrics.emit_report(rows, config.output_dir)
    click.echo(report_path.read_text(encoding="utf-8"), nl=False)


@cli.command("baseline-windows")
@_config_option
@click.option("--split", default="validation", show_default=True)
@click.option("--limit", default=window_baseline.TOKEN_LIMIT, show_default=True)
@_handle_errors
def baseline_windows(config_path: str, split: str, limit: int) -> None:
    """Run the windowed-encoder baseline with the configured classifier."""

    config = load_config(config_path)
    dataset = corpus.load_dataset(config.dataset_path(split), _split_kind(split))
    cfg = config.raw.get("window_classifier", {})
    kind = cfg.get("kind", "mock")
    if kind == "mock":
        classifier: window_baseline.WindowClassifier = window_baseline.RuleMockClassifier(
            set(cfg.get("trigger_words", ["valid"]))
        )
    elif kind == "remote":
        if "endpoint" not in cfg:
            raise ConfigError("window_classifier.kind=remote needs an endpoint")
        classifier = window_baseline.RemoteWindowClassifier(cfg["endpoint"])
    else:
        raise ConfigError(f"unknown window_classifier.kind {kind!r}")
    config.output_dir.mkdir(parents=True, exist_ok=True)
    out = config.output_dir / "predictions_window_baseline.jsonl"
    lines = []
    for inst in dataset.instances:
        label = window_baseline.classify_windowed(inst, classifier, limit)
        lines.append(json.dumps({"instance_id": inst.id, "label": label.value}, sort_keys=True))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {out}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.UsageError as exc:
        click.echo(exc.format_message(), err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return 1


if __name__ == "__main__":
    sys.exit(main())

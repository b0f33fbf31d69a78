"""Command line: corpus handling, simulated runs, and the HTTP service.

The config file is one JSON document with sections; flags override file
keys, file keys override defaults.

    {
      "cost_model": {"verify_property": 3, "suggest_formula": 170},
      "batch":      {"batch_size": 100, "utility_weight": 20},
      "models":     {"epochs": 100, "incremental_epochs": 10},
      "checkers":   {"count": 3, "error_rate": 0.0, "seed": 0},
      "corpus":     {"root": "./corpus"}
    }
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import click

from .classifiers import KINDS
from .config import CostModel, SessionConfig, seconds_to_weeks
from .corpus import CorpusError, load_corpus, load_profile, save_corpus
from .formula import FormulaParseError
from .harness import run_simulation, truth_table
from .synth import generate_synthetic_corpus

PROFILE_DIR = Path(__file__).resolve().parent / "profiles"

# the command line keeps the user-facing name for the optimized mode
MODE_CHOICES = ("manual", "sequential", "scrutinizer", "optimized")
MODE_ALIASES = {"scrutinizer": "optimized"}

_SECTION_KEYS = {
    "cost_model": {"verify_property", "suggest_property",
                   "verify_formula", "suggest_formula"},
    "batch": {"batch_size", "max_requeues", "section_read_seconds",
              "utility_weight", "top_per_property", "top_formulas"},
    "models": {"epochs", "learning_rate", "l2", "incremental_epochs",
               "embedding_dim", "word_vocab", "char_vocab"},
    "checkers": {"count", "error_rate", "seed"},
    "corpus": {"root", "profile", "seed"},
}


def _load_document(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}")
    if not isinstance(document, dict):
        raise click.ClickException("config must be a JSON object")
    for section, body in document.items():
        known = _SECTION_KEYS.get(section)
        if known is None:
            raise click.ClickException(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise click.ClickException(f"config section {section!r} must be "
                                       "an object")
        for key in body:
            if key not in known:
                raise click.ClickException(
                    f"unknown key {key!r} in config section {section!r}")
    return document


def _build_config(document: dict, flags: dict) -> SessionConfig:
    """Defaults, then the config file, then non-None command line flags."""
    try:
        cost = CostModel(**document.get("cost_model", {}))
        kwargs = {**document.get("batch", {}), **document.get("models", {})}
        count = document.get("checkers", {}).get("count")
        if count is not None:
            kwargs["checkers"] = count
        for key, value in flags.items():
            if value is not None:
                kwargs[key] = value
        return SessionConfig(cost=cost, **kwargs)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad config: {exc}")


def _checker_settings(document: dict, seed: Optional[int],
                      error_rate: Optional[float]) -> tuple[int, float]:
    section = document.get("checkers", {})
    if seed is None:
        seed = int(section.get("seed", 0))
    if error_rate is None:
        error_rate = float(section.get("error_rate", 0.0))
    return seed, error_rate


def _resolve_profile(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = PROFILE_DIR / f"{name}.json"
    if bundled.exists():
        return bundled
    known = sorted(p.stem for p in PROFILE_DIR.glob("*.json"))
    raise click.ClickException(
        f"no profile {name!r}; bundled profiles: {', '.join(known)}")


def _summary_lines(report: dict) -> list[str]:
    rows = [("manual", report["manual_seconds"], 0.0)]
    if report["mode"] != "manual":
        rows.append((report["mode"], report["total_seconds"],
                     report["savings"]))
    lines = [
        f"claims: {report['claims']}  resolved: {report['resolved']}"
        f"  unresolved: {len(report['unresolved'])}"
        f"  batches: {report['batches']}",
        f"{'mode':<12}{'seconds':>12}{'weeks':>9}{'savings':>10}",
    ]
    for mode, seconds, savings in rows:
        lines.append(f"{mode:<12}{seconds:>12.0f}"
                     f"{seconds_to_weeks(seconds):>9.3f}{savings:>9.1%}")
    lines.append(f"savings vs manual: {report['savings']:.1%}")
    lines.append(f"verdict agreement: {report['verdict_agreement']:.1%}")
    return lines


def _write_series(report: dict, out: Path) -> None:
    columns = [*KINDS, "average"]
    with (out / "accuracy.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch", *columns])
        series = report["accuracy"]
        for i in range(len(series["average"])):
            writer.writerow([i + 1, *(series[c][i] for c in columns)])
    with (out / "topk.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", *columns])
        curve = report["topk"]
        for k in sorted(curve["average"], key=int):
            writer.writerow([k, *(curve[c][k] for c in columns)])


@click.group()
def main() -> None:
    """Verify numeric claims in text against relational tables."""


@main.command()
@click.argument("corpus_root", type=click.Path(exists=True, file_okay=False))
def ingest(corpus_root: str) -> None:
    """Load and validate a corpus directory."""
    try:
        corpus = load_corpus(corpus_root)
        truth_table(corpus)
    except (CorpusError, FormulaParseError, OSError) as exc:
        raise click.ClickException(str(exc))
    sections = {c.section_id for c in corpus.claims}
    explicit = sum(1 for c in corpus.claims if c.kind == "explicit")
    click.echo(f"claims: {len(corpus.claims)} "
               f"(explicit {explicit}, general {len(corpus.claims) - explicit})")
    click.echo(f"annotated: {len(corpus.annotations)}")
    click.echo(f"relations: {len(corpus.relations)}  sections: {len(sections)}")


@main.command()
@click.option("--profile", "profile_name", default="table1_div10",
              show_default=True, help="bundled profile name or a JSON path")
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--out", default="./corpus", show_default=True,
              type=click.Path(file_okay=False))
def synth(profile_name: str, seed: int, out: str) -> None:
    """Generate a synthetic corpus from a frequency profile."""
    profile = load_profile(_resolve_profile(profile_name))
    try:
        corpus = generate_synthetic_corpus(profile, seed)
    except CorpusError as exc:
        raise click.ClickException(str(exc))
    save_corpus(corpus, out)
    click.echo(f"wrote {len(corpus.claims)} claims over "
               f"{len(corpus.relations)} relations to {out}")


@main.command()
@click.argument("corpus_root", default="./corpus",
                type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--epochs", type=int, default=None)
@click.option("--embedding-dim", type=int, default=None)
def train(corpus_root: str, config_path: Optional[str],
          epochs: Optional[int], embedding_dim: Optional[int]) -> None:
    """Fit the featurizer and all four classifiers on an annotated corpus."""
    from .classifiers import ModelSet
    from .features import EmbeddingTable, fit_featurizer
    from .harness import accuracy_snapshot

    document = _load_document(config_path)
    config = _build_config(document, {"epochs": epochs,
                                      "embedding_dim": embedding_dim})
    try:
        corpus = load_corpus(corpus_root)
        truths = truth_table(corpus)
    except (CorpusError, FormulaParseError) as exc:
        raise click.ClickException(str(exc))
    if not corpus.claims:
        raise click.ClickException("corpus has no claims to train on")
    pairs = [(c.sentence_text, c.claim_span) for c in corpus.claims]
    featurizer = fit_featurizer(pairs, EmbeddingTable.hashed(config.embedding_dim),
                                word_cap=config.word_vocab,
                                char_cap=config.char_vocab)
    X = featurizer.featurize_matrix(pairs)
    models = ModelSet(epochs=config.epochs, learning_rate=config.learning_rate,
                      l2=config.l2)
    for kind in KINDS:
        rows, labels = [], []
        for i, claim in enumerate(corpus.claims):
            for label in truths[claim.id][kind]:
                rows.append(i)
                labels.append(label)
        models.add_examples(kind, X[rows], labels)
    models.refit(KINDS)
    fit = accuracy_snapshot(models, X, [truths[c.id] for c in corpus.claims])
    for kind in KINDS:
        model = models.models[kind]
        click.echo(f"{kind:<10} labels: {len(model.labels):>5} "
                   f"top-1 on training claims: {fit[kind]:.3f}")
    click.echo(f"average top-1: {fit['average']:.3f}")
    click.echo(f"fingerprint: {models.fingerprint}")


@main.command()
@click.argument("corpus_root", default="./corpus",
                type=click.Path(exists=True, file_okay=False))
@click.option("--mode", default="scrutinizer", show_default=True,
              type=click.Choice(MODE_CHOICES))
@click.option("--seed", type=int, default=None,
              help="checker vote seed [default: config file or 0]")
@click.option("--error-rate", type=float, default=None,
              help="chance of a flipped vote [default: config file or 0]")
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--batch-size", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--incremental-epochs", type=int, default=None)
@click.option("--embedding-dim", type=int, default=None)
@click.option("--word-vocab", type=int, default=None)
@click.option("--char-vocab", type=int, default=None)
@click.option("--checkers", type=int, default=None)
@click.option("--out", default="./report", show_default=True,
              type=click.Path(file_okay=False))
def simulate(corpus_root: str, mode: str, seed: Optional[int],
             error_rate: Optional[float], config_path: Optional[str],
             out: str, **flags) -> None:
    """Run simulated checkers over a corpus and write the report."""
    document = _load_document(config_path)
    config = _build_config(document, flags)
    seed, error_rate = _checker_settings(document, seed, error_rate)
    try:
        corpus = load_corpus(corpus_root)
    except (CorpusError, OSError) as exc:
        raise click.ClickException(str(exc))
    engine_mode = MODE_ALIASES.get(mode, mode)
    report = run_simulation(corpus, engine_mode, config,
                            seed=seed, error_rate=error_rate)
    payload = report.to_dict()
    payload["mode"] = mode
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    _write_series(payload, out_dir)
    for line in _summary_lines(payload):
        click.echo(line)
    click.echo(f"computation: {report.computation_seconds:.1f}s")
    click.echo(f"report: {out_dir / 'report.json'}")


@main.command()
@click.argument("report_dir", default="./report",
                type=click.Path(exists=True, file_okay=False))
def report(report_dir: str) -> None:
    """Render the summary of a saved simulation report."""
    path = Path(report_dir) / "report.json"
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read {path}: {exc}")
    for line in _summary_lines(payload):
        click.echo(line)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True, type=int)
@click.option("--log-dir", default=None,
              type=click.Path(file_okay=False),
              help="persist sessions as replayable answer logs")
def serve(host: str, port: int, log_dir: Optional[str]) -> None:
    """Start the HTTP API."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(log_dir=log_dir), host=host, port=port)


if __name__ == "__main__":
    main()

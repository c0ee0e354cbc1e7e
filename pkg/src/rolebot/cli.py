"""Command-line entry point orchestrating the full workflow.

Exit codes: 0 success, 1 user error (bad input, bad config), 2 internal
error. Stage subcommands are individually re-runnable; `run` executes the
whole pipeline from one config file.
"""

from __future__ import annotations

import json
import sys
import traceback
from pathlib import Path

import click
import yaml

from . import corpus, evaluation, filtering, toy_data, workflow
from .config import load_config
from .corpus import RoleCategory, RoleSpecification, Source
from .errors import RolebotError
from .feedback import load_session_log, extract_session_examples, error_rate
from .models import (
    ClassifierConfig,
    GeneratorConfig,
    LossConfig,
    RerankerConfig,
    RetrieverConfig,
    classifier_train,
    generator_train,
    load_model,
    reranker_train,
    retriever_train,
    save_model,
)
from .reporting import write_error_rate_report, write_roc_report, write_stats_report
from .synthesis import HttpBackend, SamplingParams, ScriptedBackend, generate_batch


@click.group()
def cli():
    """Build, train, serve, and evaluate a role-constrained chatbot."""


# --- init / run ------------------------------------------------------------


@cli.command()
@click.option("--out-dir", type=click.Path(), default="rolebot-demo", show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
def init(out_dir, seed):
    """Write a ready-to-run toy configuration into OUT_DIR."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fallback_questions.txt").write_text(
        "\n".join(toy_data.TOY_FALLBACK_QUESTIONS) + "\n", encoding="utf-8"
    )
    (out / "feedback_script.json").write_text(
        json.dumps(toy_data.toy_feedback_script(seed=seed), indent=2), encoding="utf-8"
    )
    config = {
        "seed": seed,
        "out_dir": "artifacts",
        "synthesize": {"backend": "toy", "n_dialogues": 20, "temperature": 0.5,
                       "nucleus_p": 0.8},
        "train": {
            "generator": {"epochs": 15},
            "retriever": {"epochs": 20},
            "reranker": {"epochs": 8},
            "classifier": {"epochs": 15},
            "alpha": 1.0,
        },
        "pipeline": {
            "unanswerable_method": "mc_dropout",
            "top_k": 5,
            "fallback_questions_file": "fallback_questions.txt",
        },
        "feedback": {"script": "feedback_script.json"},
        "eval": {"hits_k": 8},
    }
    (out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    click.echo(f"wrote {out / 'config.yaml'}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--stage", type=click.Choice(workflow.RUN_ORDER), default=None,
              help="Run a single stage instead of the full workflow.")
def run(config_path, out_dir, stage):
    """Run the workflow (synthesize -> filter -> train -> feedback -> eval)."""
    cfg = load_config(config_path, out_dir_override=out_dir)
    if stage:
        workflow.STAGES[stage](cfg)
        click.echo(f"stage {stage} complete; artifacts in {cfg.out_dir}")
    else:
        workflow.run_all(cfg)
        click.echo(f"run complete; artifacts in {cfg.out_dir}")


# --- synthesize ------------------------------------------------------------


def _load_role_spec(path) -> RoleSpecification:
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    return RoleSpecification(
        outline=doc["outline"],
        categories=[
            RoleCategory(
                name=c["name"],
                description=c.get("description", ""),
                forbidden_examples=c.get("forbidden_examples", []),
            )
            for c in doc.get("categories", [])
        ],
    )


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="Role specification YAML (default: bundled toy spec).")
@click.option("--examples", "examples_path", type=click.Path(exists=True), default=None,
              help="Seed dialogues JSONL (default: bundled toy seeds).")
@click.option("--n", "n_dialogues", type=int, default=20, show_default=True)
@click.option("--temperature", type=float, default=0.5, show_default=True)
@click.option("--nucleus-p", type=float, default=0.8, show_default=True)
@click.option("--max-tokens", type=int, default=512, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--backend-url", default=None, help="Remote backend endpoint; default is the offline scripted backend.")
@click.option("--out", "out_path", required=True, type=click.Path())
def synthesize(spec_path, examples_path, n_dialogues, temperature, nucleus_p,
               max_tokens, seed, backend_url, out_path):
    """Generate dialogues by one-shot prompting of an LM backend."""
    spec = _load_role_spec(spec_path) if spec_path else toy_data.toy_role_spec()
    if examples_path:
        examples = corpus.load_corpus(examples_path)
    else:
        examples = toy_data.toy_seed_dialogues(seed=seed)
    if backend_url:
        backend = HttpBackend(backend_url)
    else:
        backend = ScriptedBackend(toy_data.build_toy_transcripts(n=n_dialogues, seed=seed))
    params = SamplingParams(
        temperature=temperature, nucleus_p=nucleus_p, max_tokens=max_tokens
    )
    records = generate_batch(backend, spec, examples, params, n=n_dialogues, rng_seed=seed)
    corpus.save_corpus([r.dialogue for r in records], out_path)
    truncated = sum(1 for r in records if r.report.truncated)
    click.echo(f"wrote {len(records)} dialogues to {out_path} ({truncated} truncated)")


# --- filter ----------------------------------------------------------------


@cli.group("filter")
def filter_group():
    """Human-filtering utilities."""


@filter_group.command("auto-annotate")
@click.option("--dialogues", "dialogues_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def filter_auto_annotate(dialogues_path, out_path):
    """Rule-based annotation of marker-word violations (toy corpora only)."""
    dialogues = corpus.load_corpus(dialogues_path)
    annotations = [toy_data.auto_annotate(d) for d in dialogues]
    corpus.save_annotations(annotations, out_path)
    flagged = sum(1 for a in annotations if a.first_violation_index is not None)
    click.echo(f"annotated {len(annotations)} dialogues ({flagged} flagged)")


@filter_group.command("export")
@click.option("--dialogues", "dialogues_path", required=True, type=click.Path(exists=True))
@click.option("--annotations", "annotations_path", required=True, type=click.Path(exists=True))
@click.option("--out-pos", required=True, type=click.Path())
@click.option("--out-neg", required=True, type=click.Path())
def filter_export(dialogues_path, annotations_path, out_pos, out_neg):
    """Convert annotated dialogues into training examples."""
    dialogues = corpus.load_corpus(dialogues_path)
    annotations = {a.dialogue_id: a for a in corpus.load_annotations(annotations_path)}
    store = filtering.FilterTaskStore(dialogues)
    for task in store.tasks():
        annotation = annotations.get(task.task_id)
        if annotation is None:
            raise RolebotError(f"no annotation for dialogue {task.task_id}")
        store.submit_annotation(task.task_id, annotation)
    positives, negatives, survival = filtering.export_examples(store.tasks())
    corpus.save_examples(positives, out_pos)
    corpus.save_examples(negatives, out_neg)
    click.echo(
        f"{len(positives)} positives, {len(negatives)} negatives; "
        f"survival {100 * survival.survival_rate:.1f}%"
    )


# --- train -----------------------------------------------------------------


@cli.command()
@click.argument("model_kind", type=click.Choice(["classifier", "retriever", "reranker", "generator"]))
@click.option("--pos", "pos_path", required=True, type=click.Path(exists=True))
@click.option("--neg", "neg_path", type=click.Path(exists=True), default=None)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def train(model_kind, pos_path, neg_path, alpha, epochs, seed, out_path):
    """Train one model from positive (and optionally negative) examples."""
    positives = corpus.load_examples(pos_path)
    negatives = corpus.load_examples(neg_path) if neg_path else []
    if model_kind == "generator":
        cfg = GeneratorConfig(seed=seed, **({"epochs": epochs} if epochs else {}))
        model = generator_train(positives, negatives, cfg, LossConfig(alpha=alpha))
    elif model_kind == "retriever":
        cfg = RetrieverConfig(seed=seed, **({"epochs": epochs} if epochs else {}))
        model = retriever_train(positives, cfg)
    elif model_kind == "reranker":
        cfg = RerankerConfig(seed=seed, **({"epochs": epochs} if epochs else {}))
        model = reranker_train(positives, cfg)
    else:
        cfg = ClassifierConfig(seed=seed, **({"epochs": epochs} if epochs else {}))
        model = classifier_train(positives, negatives, cfg)
    save_model(model, out_path)
    click.echo(f"trained {model_kind} on {len(positives)} positives -> {out_path}")


# --- serve -----------------------------------------------------------------


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config_path, port, host):
    """Serve the chat + filtering service over HTTP."""
    import uvicorn

    from .feedback import ChatService, pipeline_responder
    from .service import create_app

    cfg = load_config(config_path)
    bundle, pipeline_cfg = workflow.load_bundle(cfg)
    chat = ChatService(
        pipeline_responder(bundle, pipeline_cfg),
        config_snapshot={"threshold": pipeline_cfg.threshold},
    )
    task_store = None
    generated = cfg.out_dir / workflow.GENERATED_FILE
    if generated.exists():
        task_store = filtering.FilterTaskStore(corpus.load_corpus(generated))
    app = create_app(
        chat_service=chat,
        task_store=task_store,
        bundle=bundle,
        pipeline_config=pipeline_cfg,
    )
    uvicorn.run(app, host=host, port=port)


# --- feedback-export -------------------------------------------------------


@cli.command("feedback-export")
@click.option("--sessions", "sessions_path", required=True, type=click.Path(exists=True))
@click.option("--out-pos", required=True, type=click.Path())
@click.option("--out-neg", required=True, type=click.Path())
@click.option("--report-dir", type=click.Path(), default=None)
def feedback_export(sessions_path, out_pos, out_neg, report_dir):
    """Export training examples and error metrics from a session log."""
    sessions = load_session_log(sessions_path)
    all_pos, all_neg = [], []
    for session in sessions:
        pos, neg = extract_session_examples(session)
        all_pos.extend(pos)
        all_neg.extend(neg)
    corpus.save_examples(all_pos, out_pos)
    corpus.save_examples(all_neg, out_neg)
    report = error_rate(sessions)
    click.echo(
        f"{len(all_pos)} positives, {len(all_neg)} negatives; "
        f"error rate {100 * report.overall_rate:.2f}%"
    )
    if report_dir:
        paths = write_error_rate_report(report, report_dir)
        click.echo(f"report written to {paths['csv']} and {paths['figure']}")


# --- stats -----------------------------------------------------------------


@cli.command()
@click.option("--dialogues", "dialogues_path", required=True, type=click.Path(exists=True))
@click.option("--examples", "examples_path", type=click.Path(exists=True), default=None)
@click.option("--report-dir", type=click.Path(), default=None)
def stats(dialogues_path, examples_path, report_dir):
    """Corpus statistics (counts, lexical diversity), optionally with figures."""
    dialogues = corpus.load_corpus(dialogues_path)
    examples = corpus.load_examples(examples_path) if examples_path else None
    report = corpus.corpus_stats(dialogues, examples)
    for key, value in report.to_dict().items():
        click.echo(f"{key}: {value}")
    if report_dir:
        paths = write_stats_report(report, dialogues, report_dir)
        click.echo(f"report written to {paths['csv']} and {paths['figure']}")


# --- eval ------------------------------------------------------------------


@cli.group("eval")
def eval_group():
    """Metric computations over evaluation files."""


def _load_scored(path):
    scores, labels = [], []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            scores.append(float(obj["score"]))
            labels.append(evaluation.ValLabel(obj["label"]))
    return scores, labels


@eval_group.command("auc")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--report-dir", type=click.Path(), default=None)
def eval_auc(in_path, report_dir):
    """AUC of unanswerable detection from {"score", "label"} records."""
    scores, labels = _load_scored(in_path)
    auc = evaluation.roc_auc(scores, labels)
    click.echo(f"auc: {auc:.6f}")
    if report_dir:
        paths = write_roc_report(scores, labels, report_dir)
        click.echo(f"report written to {paths['csv']} and {paths['figure']}")


@eval_group.command("threshold")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
def eval_threshold(in_path):
    """Max-F1 threshold for unanswerable detection."""
    scores, labels = _load_scored(in_path)
    threshold, f1 = evaluation.calibrate_threshold(scores, labels)
    click.echo(f"threshold: {threshold:.6f}")
    click.echo(f"f1: {f1:.6f}")


@eval_group.command("ssa")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
def eval_ssa(in_path):
    """Sensibleness/specificity aggregation with majority voting."""
    votes = evaluation.load_vote_records(in_path)
    report = evaluation.ssa_aggregate(votes)
    click.echo(f"sensibleness: {report.sensibleness:.2f}")
    click.echo(f"specificity: {report.specificity:.2f}")
    click.echo(f"ssa: {report.ssa:.2f}")


@eval_group.command("alpha")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--dimension", type=click.Choice(["sensibleness", "specificity"]),
              default="sensibleness", show_default=True)
def eval_alpha(in_path, dimension):
    """Rater agreement and Krippendorff's alpha for one vote dimension."""
    votes = evaluation.load_vote_records(in_path)
    items = evaluation.votes_to_items(votes, dimension)
    click.echo(f"agreement: {evaluation.agreement(items):.2f}")
    click.echo(f"alpha: {evaluation.krippendorff_alpha(items):.6f}")


@eval_group.command("hits")
@click.option("--pos", "pos_path", required=True, type=click.Path(exists=True))
@click.option("--retriever", "retriever_path", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def eval_hits(pos_path, retriever_path, k, seed):
    """Hits@1/K of a trained retriever over held-out positives."""
    import numpy as np

    positives = corpus.load_examples(pos_path)
    retriever = load_model(retriever_path)
    candidates = sorted({ex.response.text for ex in positives})
    if len(candidates) < k:
        raise RolebotError(f"only {len(candidates)} unique responses; k={k} too large")
    rng = np.random.default_rng(seed)
    items = []
    for ex in positives:
        pool = [c for c in candidates if c != ex.response.text]
        distractors = list(rng.choice(pool, size=k - 1, replace=False))
        items.append(
            evaluation.RankingEvalItem(
                history=ex.history, gold=ex.response.text, distractors=distractors
            )
        )

    def scorer(history, cands):
        ctx = retriever.encode_context(history)
        return [float(ctx @ retriever.encode_candidate(c)) for c in cands]

    rate = evaluation.hits_at_1(scorer, items)
    click.echo(f"hits@1/{k}: {rate:.4f} over {len(items)} items")


def main():
    try:
        cli.main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except RolebotError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except SystemExit:
        raise
    except Exception:
        traceback.print_exc()
        sys.exit(2)


if __name__ == "__main__":
    main()

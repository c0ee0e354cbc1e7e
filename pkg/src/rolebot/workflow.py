"""End-to-end workflow stages: synthesize, filter, train, feedback, eval.

Each stage reads its inputs from the run's output directory, writes its
artifacts plus a manifest of content hashes, and is individually
re-runnable: identical inputs and seeds produce byte-identical outputs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import corpus, filtering, toy_data
from .config import RunConfig, write_manifest
from .corpus import Label, Source
from .errors import SingleClass, StageFailure
from .evaluation import (
    RankingEvalItem,
    build_unanswerable_valset,
    calibrate_threshold,
    hits_at_1,
    roc_auc,
)
from .feedback import (
    ChatService,
    error_rate,
    pipeline_responder,
    routing_error_breakdown,
    save_session_log,
)
from .models import (
    ClassifierConfig,
    GeneratorConfig,
    LossConfig,
    RerankerConfig,
    RetrieverConfig,
    classifier_train,
    generator_train,
    load_model,
    mc_dropout_score,
    reranker_train,
    retriever_train,
    save_model,
)
from .pipeline import ModelsBundle, PipelineConfig, UnanswerableMethod
from .reporting import (
    write_error_rate_report,
    write_roc_report,
    write_routing_report,
    write_stats_report,
)
from .synthesis import HttpBackend, SamplingParams, ScriptedBackend, generate_batch
from .toy_data import TOY_FALLBACK_QUESTIONS, auto_annotate, toy_role_spec, toy_seed_dialogues

GENERATED_FILE = "generated.jsonl"
POSITIVES_FILE = "positives.jsonl"
NEGATIVES_FILE = "negatives.jsonl"
ANNOTATIONS_FILE = "annotations.jsonl"
PIPELINE_FILE = "pipeline_config.json"
SESSIONS_FILE = "feedback_sessions.jsonl"
FEEDBACK_POS_FILE = "feedback_positives.jsonl"
FEEDBACK_NEG_FILE = "feedback_negatives.jsonl"

MODEL_FILES = {
    "generator": "generator.json",
    "retriever": "retriever.json",
    "reranker": "reranker.json",
    "classifier": "classifier.json",
}


def _out_dir(cfg: RunConfig) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir


def stage_synthesize(cfg: RunConfig) -> Path:
    out = _out_dir(cfg)
    section = cfg.synthesize
    n = section.get("n_dialogues", 20)
    params = SamplingParams(
        temperature=section.get("temperature", 0.5),
        nucleus_p=section.get("nucleus_p", 0.8),
        max_tokens=section.get("max_tokens", 512),
    )
    backend_cfg = section.get("backend", "toy")
    if backend_cfg == "toy":
        backend = ScriptedBackend(toy_data.build_toy_transcripts(n=n, seed=cfg.seed))
    else:
        backend = HttpBackend(backend_cfg["url"])
    spec = toy_role_spec()
    examples = toy_seed_dialogues(seed=cfg.seed)
    records = generate_batch(
        backend, spec, examples, params, n=n, rng_seed=cfg.seed,
        workers=section.get("workers", 1),
    )
    path = out / GENERATED_FILE
    corpus.save_corpus([r.dialogue for r in records], path)
    meta = {
        "params": params.to_dict(),
        "seed": cfg.seed,
        "records": [
            {"id": r.dialogue.id, "example_id": r.example_id, "prompt_sha": r.prompt_sha,
             "truncated": r.report.truncated}
            for r in records
        ],
    }
    meta_path = out / "generation_meta.json"
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2), encoding="utf-8")
    write_manifest("synthesize", out, [], [path, meta_path], cfg.seed)
    return path


def stage_filter(cfg: RunConfig) -> tuple[Path, Path]:
    out = _out_dir(cfg)
    generated_path = out / GENERATED_FILE
    if not generated_path.exists():
        raise StageFailure("filter", f"missing {generated_path}; run synthesize first")
    dialogues = corpus.load_corpus(generated_path)
    store = filtering.FilterTaskStore(dialogues)
    annotations = []
    for task in store.tasks():
        annotation = auto_annotate(task.dialogue)
        store.submit_annotation(task.task_id, annotation, elapsed_seconds=None)
        annotations.append(annotation)
    positives, negatives, survival = filtering.export_examples(store.tasks())
    pos_path, neg_path = out / POSITIVES_FILE, out / NEGATIVES_FILE
    corpus.save_examples(positives, pos_path)
    corpus.save_examples(negatives, neg_path)
    ann_path = out / ANNOTATIONS_FILE
    corpus.save_annotations(annotations, ann_path)
    report_path = out / "survival.json"
    report_path.write_text(
        json.dumps(
            {
                "total_turns": survival.total_turns,
                "surviving_turns": survival.surviving_turns,
                "survival_rate": survival.survival_rate,
            },
            sort_keys=True,
            indent=2,
        ),
        encoding="utf-8",
    )
    write_manifest(
        "filter", out, [generated_path], [pos_path, neg_path, ann_path, report_path], cfg.seed
    )
    return pos_path, neg_path


def _train_split(examples, holdout_fraction=0.2, seed=0):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(examples))
    n_val = max(1, int(len(examples) * holdout_fraction)) if len(examples) > 4 else 0
    val_idx = set(order[:n_val].tolist())
    train = [examples[i] for i in range(len(examples)) if i not in val_idx]
    val = [examples[i] for i in sorted(val_idx)]
    return train, val


def stage_train(cfg: RunConfig) -> dict[str, Path]:
    out = _out_dir(cfg)
    pos_path, neg_path = out / POSITIVES_FILE, out / NEGATIVES_FILE
    for p in (pos_path, neg_path):
        if not p.exists():
            raise StageFailure("train", f"missing {p}; run filter first")
    positives = corpus.load_examples(pos_path)
    negatives = corpus.load_examples(neg_path)
    if not positives:
        raise StageFailure("train", "no positive examples to train on")
    section = cfg.train

    def sub(name, cls, **defaults):
        params = dict(defaults)
        params.update(section.get(name, {}))
        params.setdefault("seed", cfg.seed)
        return cls(**params)

    gen_cfg = sub("generator", GeneratorConfig, epochs=15, learning_rate=0.1)
    alpha = section.get("alpha", 1.0)
    generator = generator_train(positives, negatives, gen_cfg, LossConfig(alpha=alpha))
    retr_cfg = sub("retriever", RetrieverConfig, epochs=20)
    retriever = retriever_train(positives, retr_cfg)
    rer_cfg = sub("reranker", RerankerConfig, epochs=10)
    reranker = reranker_train(positives, rer_cfg)
    cls_cfg = sub("classifier", ClassifierConfig, epochs=15)
    classifier = (
        classifier_train(positives, negatives, cls_cfg) if negatives else None
    )

    paths = {}
    for name, model in (
        ("generator", generator),
        ("retriever", retriever),
        ("reranker", reranker),
        ("classifier", classifier),
    ):
        if model is None:
            continue
        path = out / MODEL_FILES[name]
        save_model(model, path)
        paths[name] = path

    # calibrate the unanswerable threshold on a held-out split
    _, val = _train_split(positives, seed=cfg.seed)
    candidates = sorted({ex.response.text for ex in positives})
    method = cfg.pipeline.get("unanswerable_method", "mc_dropout")
    threshold = 0.0
    if val and len(candidates) >= 2:
        mix = cfg.pipeline.get("valset_mix", 0.241)
        items = build_unanswerable_valset(val, retriever, mix=mix, seed=cfg.seed)
        scores = [
            mc_dropout_score(reranker, item.history, item.candidate, seed=cfg.seed + i)[0]
            for i, item in enumerate(items)
        ]
        try:
            threshold, _ = calibrate_threshold(scores, [i.label for i in items])
        except Exception:
            threshold = 0.0
    multiplier = cfg.pipeline.get("threshold_multiplier", 1.0)
    pipeline_doc = {
        "top_k": cfg.pipeline.get("top_k", min(20, len(candidates))),
        "unanswerable_method": method,
        "threshold": threshold * multiplier if threshold > 0 else threshold,
        "response_candidates": candidates,
        "fallback_questions": _fallback_questions(cfg),
        "classifier_threshold": cfg.pipeline.get("classifier_threshold", 0.5),
        "mc_dropout_passes": cfg.pipeline.get("mc_dropout_passes", 10),
    }
    pipe_path = out / PIPELINE_FILE
    pipe_path.write_text(
        json.dumps(pipeline_doc, sort_keys=True, indent=2), encoding="utf-8"
    )
    paths["pipeline"] = pipe_path
    write_manifest(
        "train", out, [pos_path, neg_path], sorted(paths.values()), cfg.seed
    )
    return paths


def _fallback_questions(cfg: RunConfig) -> list[str]:
    path = cfg.pipeline.get("fallback_questions_file")
    if path:
        lines = cfg.resolve(path).read_text(encoding="utf-8").splitlines()
        return [line.strip() for line in lines if line.strip()]
    return list(TOY_FALLBACK_QUESTIONS)


def load_bundle(cfg: RunConfig) -> tuple[ModelsBundle, PipelineConfig]:
    out = cfg.out_dir
    needed = ["generator", "retriever", "reranker"]
    models = {}
    for name in needed + ["classifier"]:
        path = out / MODEL_FILES[name]
        if path.exists():
            models[name] = load_model(path)
        elif name in needed:
            raise StageFailure("serve", f"missing model file {path}; run train first")
    pipe_path = out / PIPELINE_FILE
    if not pipe_path.exists():
        raise StageFailure("serve", f"missing {pipe_path}; run train first")
    doc = json.loads(pipe_path.read_text(encoding="utf-8"))
    pipeline_cfg = PipelineConfig(
        top_k=doc["top_k"],
        unanswerable_method=UnanswerableMethod(doc["unanswerable_method"]),
        threshold=doc["threshold"],
        fallback_questions=doc["fallback_questions"],
        response_candidates=doc["response_candidates"],
        classifier_threshold=doc["classifier_threshold"],
        mc_dropout_passes=doc["mc_dropout_passes"],
    )
    bundle = ModelsBundle(
        generator=models["generator"],
        retriever=models["retriever"],
        reranker=models["reranker"],
        classifier=models.get("classifier"),
    )
    return bundle, pipeline_cfg


def stage_feedback(cfg: RunConfig) -> Path:
    out = _out_dir(cfg)
    bundle, pipeline_cfg = load_bundle(cfg)
    script_path = cfg.feedback.get("script")
    if script_path:
        scripts = json.loads(cfg.resolve(script_path).read_text(encoding="utf-8"))
    else:
        scripts = toy_data.toy_feedback_script(seed=cfg.seed)
    service = ChatService(
        pipeline_responder(bundle, pipeline_cfg),
        config_snapshot={"threshold": pipeline_cfg.threshold},
    )
    all_pos, all_neg = [], []
    for i, actions in enumerate(scripts):
        session = service.start_session(session_id=f"scripted-{cfg.seed}-{i:03d}")
        for action in actions:
            if "message" in action:
                service.post_user_message(session.id, action["message"])
            elif "fix" in action:
                service.fix_response(session.id, corpus.ErrorType(action["fix"]))
            elif "save" in action:
                pos, neg = service.save_session(session.id)
                all_pos.extend(pos)
                all_neg.extend(neg)
    sessions = service.sessions()
    log_path = out / SESSIONS_FILE
    save_session_log(sessions, log_path)
    pos_path, neg_path = out / FEEDBACK_POS_FILE, out / FEEDBACK_NEG_FILE
    corpus.save_examples(all_pos, pos_path)
    corpus.save_examples(all_neg, neg_path)
    report = error_rate(sessions)
    write_error_rate_report(report, out / "reports")
    write_routing_report(
        {k: (v if v is not None else 0.0) for k, v in routing_error_breakdown(sessions).items()},
        out / "reports",
        name="route_error_rates",
    )
    write_manifest(
        "feedback",
        out,
        [out / MODEL_FILES[n] for n in ("generator", "retriever", "reranker")],
        [log_path, pos_path, neg_path],
        cfg.seed,
    )
    return log_path


def stage_eval(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    pos_path = out / POSITIVES_FILE
    if not pos_path.exists():
        raise StageFailure("eval", f"missing {pos_path}; run filter first")
    positives = corpus.load_examples(pos_path)
    neg_path = out / NEGATIVES_FILE
    negatives = corpus.load_examples(neg_path) if neg_path.exists() else []
    dialogues = corpus.load_corpus(out / GENERATED_FILE)
    bundle, pipeline_cfg = load_bundle(cfg)

    stats = corpus.corpus_stats(dialogues, positives + negatives)
    write_stats_report(stats, dialogues, out / "reports")

    results: dict = {"corpus": stats.to_dict()}

    _, val = _train_split(positives, seed=cfg.seed)
    candidates = sorted({ex.response.text for ex in positives})
    k = min(cfg.eval.get("hits_k", 8), len(candidates))
    rng = np.random.default_rng(cfg.seed)
    items = []
    for ex in val:
        pool = [c for c in candidates if c != ex.response.text]
        if len(pool) < k - 1:
            continue
        distractors = list(rng.choice(pool, size=k - 1, replace=False))
        items.append(
            RankingEvalItem(history=ex.history, gold=ex.response.text, distractors=distractors)
        )
    if items:
        retriever = bundle.retriever

        def scorer(history, cands):
            ctx = retriever.encode_context(history)
            return [float(ctx @ retriever.encode_candidate(c)) for c in cands]

        results["hits_at_1"] = hits_at_1(scorer, items)
        results["hits_k"] = k

    if val and len(candidates) >= 2:
        valset = build_unanswerable_valset(
            val, bundle.retriever, mix=cfg.pipeline.get("valset_mix", 0.241), seed=cfg.seed
        )
        scores = [
            mc_dropout_score(bundle.reranker, it.history, it.candidate, seed=cfg.seed + i)[0]
            for i, it in enumerate(valset)
        ]
        labels = [it.label for it in valset]
        try:
            results["unanswerable_auc"] = roc_auc(scores, labels)
            threshold, f1 = calibrate_threshold(scores, labels)
            results["max_f1_threshold"] = threshold
            results["max_f1"] = f1
            write_roc_report(scores, labels, out / "reports", threshold=threshold)
        except SingleClass:
            pass  # tiny held-out split may contain only one label

    results_path = out / "eval_results.json"
    results_path.write_text(
        json.dumps(results, sort_keys=True, indent=2), encoding="utf-8"
    )
    write_manifest("eval", out, [pos_path], [results_path], cfg.seed)
    return results


STAGES = {
    "synthesize": stage_synthesize,
    "filter": stage_filter,
    "train": stage_train,
    "feedback": stage_feedback,
    "eval": stage_eval,
}

RUN_ORDER = ["synthesize", "filter", "train", "feedback", "eval"]


def run_all(cfg: RunConfig) -> None:
    for name in RUN_ORDER:
        try:
            STAGES[name](cfg)
        except StageFailure:
            raise
        except Exception as exc:
            raise StageFailure(name, str(exc))

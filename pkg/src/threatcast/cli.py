"""Command-line entry point: ``threatcast <group> <action> [options]``.

Every stage writes into ``<output>/<stage-name>/`` together with ``manifest.json``
(config digest, seed, input digests, output digests). Outputs are staged in a hidden
directory and only moved into place when the stage succeeds.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import annotation, corpus, featurize, forecast, glove, insights, linker, linmodel, metrics, nvd, plots
from . import convnet
from .config import PipelineConfig
from .errors import ConfigError, ValidationError

log = logging.getLogger("threatcast")


# -- stage plumbing -----------------------------------------------------------

def _digest(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for f in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(f.relative_to(path).as_posix().encode("utf-8") + b"\0")
            h.update(_digest(f).encode("ascii"))
        return h.hexdigest()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Stage:
    """Staging directory for one stage's outputs plus its manifest."""

    def __init__(self, cfg: PipelineConfig, name: str, command: list[str]):
        self.cfg = cfg
        self.name = name
        self.command = command
        self.final = cfg.output / name
        self.tmp = cfg.output / f".{name}.partial"
        self.inputs: dict[str, dict[str, str]] = {}
        self.extra: dict = {}

    def __enter__(self) -> "Stage":
        if self.tmp.exists():
            shutil.rmtree(self.tmp)
        self.tmp.mkdir(parents=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        self._commit()
        return False

    def input(self, label: str, path: Path) -> Path:
        path = Path(path)
        self.inputs[label] = {"path": str(path), "sha256": _digest(path)}
        return path

    def out(self, filename: str) -> Path:
        return self.tmp / filename

    def _commit(self) -> None:
        outputs = {p.relative_to(self.tmp).as_posix(): _digest(p)
                   for p in sorted(self.tmp.rglob("*")) if p.is_file()}
        manifest = {
            "stage": self.name,
            "command": self.command,
            "seed": self.cfg.seed,
            "config_sha256": self.cfg.digest(),
            "config": self.cfg.canonical(),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": outputs,
            **self.extra,
        }
        with open(self.tmp / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if self.final.exists():
            shutil.rmtree(self.final)
        self.tmp.rename(self.final)


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _upstream(cfg: PipelineConfig, stage: str, filename: str) -> Path | None:
    p = cfg.output / stage / filename
    return p if p.exists() else None


def _need_upstream(cfg: PipelineConfig, stage: str, filename: str, hint: str) -> Path:
    p = _upstream(cfg, stage, filename)
    if p is None:
        raise ConfigError(f"{cfg.output / stage / filename} not found; run `threatcast {hint}` first")
    return p


# -- shared loaders -------------------------------------------------------------

def _annotated_tweets(cfg: PipelineConfig, st: Stage) -> list[corpus.Tweet]:
    path = (_upstream(cfg, "corpus-dedup", "tweets.jsonl") or _upstream(cfg, "corpus-ingest", "tweets.jsonl")
            or cfg.require("corpus")["corpus"])
    return corpus.read_tweets(st.input("corpus", path))


def _votes(cfg: PipelineConfig, st: Stage) -> list[annotation.Vote]:
    path = _upstream(cfg, "annotate-filter-workers", "votes.csv") or cfg.require("votes")["votes"]
    return annotation.read_votes(st.input("votes", path))


def _labels(cfg: PipelineConfig, st: Stage, phase: str) -> dict[str, bool]:
    path = _upstream(cfg, "annotate-aggregate", f"{phase}.jsonl")
    if path is not None:
        labels = annotation.read_labels(st.input(f"{phase}_labels", path))
    else:
        labels = annotation.aggregate(_votes(cfg, st), phase, cfg.get_bool("annotate", "strict"))
    return {lab.tweet_id: lab.label for lab in labels}


def _labeled(cfg: PipelineConfig, st: Stage, task: str) -> list[tuple[corpus.Instance, bool]]:
    tweets = _annotated_tweets(cfg, st)
    labels = _labels(cfg, st, task)
    data = [(corpus.normalize(t, 0 if t.entities else None), labels[t.id]) for t in tweets if t.id in labels]
    if not data:
        raise ValidationError(f"no tweets carry {task} labels")
    return data


def _split(cfg: PipelineConfig, task: str, data: list) -> tuple[list, list, list]:
    counts = cfg.get_list("corpus", f"{task}_counts", int)
    fractions = cfg.get_list("corpus", f"{task}_fractions", float)
    if counts and len(counts) != 3 or fractions and len(fractions) != 3:
        raise ConfigError(f"corpus.{task}_counts/fractions need three values")
    spec = corpus.SplitSpec(cfg.seed, tuple(counts) if counts else None, tuple(fractions) if fractions else None)
    return corpus.split(data, spec)


def _write_scores(path: Path, ids, scores, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tweet_id", "score", "label"])
        for i, s, y in zip(ids, scores, labels):
            w.writerow([i, repr(float(s)), int(y)])


def _read_scores(path: Path) -> tuple[list[str], list[float], list[bool]]:
    ids, scores, labels = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["tweet_id"])
            scores.append(float(row["score"]))
            labels.append(row["label"] == "1")
    return ids, scores, labels


def _auc_or_none(scores, labels) -> float | None:
    return metrics.average_precision(scores, labels) if any(labels) else None


def _embeddings(cfg: PipelineConfig, st: Stage) -> dict[str, np.ndarray] | None:
    path = _upstream(cfg, "embed-train", "embeddings.txt") or cfg.path("embeddings")
    if path is None:
        return None
    if not path.exists():
        raise ConfigError(f"paths.embeddings = {path} does not exist")
    return glove.load_vectors(st.input("embeddings", path))


def _severity_classifier(cfg: PipelineConfig, st: Stage):
    kind = cfg.get("forecast", "model")
    if kind == "lr":
        d = "train-severity-lr"
        model = linmodel.LinearModel.load(st.input("severity_model", _need_upstream(cfg, d, "model.txt", "train severity --model lr")))
        vocab = featurize.Vocabulary.load(st.input("severity_vocab", cfg.output / d / "vocab.tsv"))
        return linmodel.NgramClassifier(model, vocab)
    if kind == "cnn":
        d = "train-severity-cnn"
        model = convnet.ConvModel.load(st.input("severity_model", _need_upstream(cfg, d, "model.bin", "train severity --model cnn")))
        vocab = featurize.Vocabulary.load(st.input("severity_vocab", cfg.output / d / "vocab.tsv"))
        return convnet.SequenceClassifier(model, vocab, cfg.get_int("featurize", "max_len"))
    raise ConfigError(f"forecast.model must be lr or cnn, got {kind!r}")


def _store(cfg: PipelineConfig, st: Stage) -> nvd.NvdStore:
    return nvd.load_nvd(st.input("nvd", cfg.require("nvd")["nvd"]))


def _exploits(cfg: PipelineConfig, st: Stage, required: bool = False) -> frozenset[str] | None:
    files = cfg.get_list("paths", "exploits")
    if not files:
        if required:
            cfg.require("exploits")
        return None
    cfg.require("exploits")
    for i, f in enumerate(files):
        st.input(f"exploits_{i}", Path(f))
    return nvd.load_exploits(files)


def _forecast_tweets(cfg: PipelineConfig, st: Stage) -> list[corpus.Tweet]:
    return corpus.read_tweets(st.input("forecast_corpus", cfg.require("forecast_corpus")["forecast_corpus"]))


def _filtered_table(cfg: PipelineConfig, st: Stage) -> linker.LinkTable:
    path = _need_upstream(cfg, "link-build", "filtered.csv", "link build")
    return linker.LinkTable.read_csv(st.input("links", path))


def _tweet_scores(cfg: PipelineConfig, st: Stage, table: linker.LinkTable, reuse: bool = True) -> dict[str, float]:
    # the stage that writes tweet_scores.csv must not read its own previous output
    cached = _upstream(cfg, "forecast-rank-model", "tweet_scores.csv") if reuse else None
    if cached is not None:
        ids, scores, _ = _read_scores(st.input("tweet_scores", cached))
        out = dict(zip(ids, scores))
        if all(tid in out for tid in table.by_tweet):
            return out
    classifier = _severity_classifier(cfg, st)
    by_id = {t.id: t for t in _forecast_tweets(cfg, st)}
    missing = [tid for tid in table.by_tweet if tid not in by_id]
    if missing:
        raise ValidationError(f"linked tweets missing from the forecast corpus: {missing[:5]}")
    return {tid: forecast.tweet_severity(by_id[tid], classifier) for tid in sorted(table.by_tweet)}


# -- corpus ---------------------------------------------------------------------

def cmd_corpus_ingest(cfg, args, st):
    tweets = corpus.read_tweets(st.input("corpus", cfg.require("corpus")["corpus"]))
    corpus.write_tweets(st.out("tweets.jsonl"), tweets)
    _write_json(st.out("summary.json"), {"n_tweets": len(tweets),
                                         "n_with_entities": sum(bool(t.entities) for t in tweets)})


def cmd_corpus_dedup(cfg, args, st):
    path = _upstream(cfg, "corpus-ingest", "tweets.jsonl") or cfg.require("corpus")["corpus"]
    tweets = corpus.read_tweets(st.input("corpus", path))
    summary = {"n_input": len(tweets)}
    for method in cfg.get_list("corpus", "dedup"):
        if method == "jaccard":
            tweets = corpus.dedup_by_jaccard(tweets, cfg.get_float("corpus", "jaccard_threshold"))
        elif method == "lcs":
            tweets = corpus.dedup_by_lcs(tweets, cfg.get_float("corpus", "lcs_ratio"))
        else:
            raise ConfigError(f"unknown dedup method {method!r}")
        summary[f"after_{method}"] = len(tweets)
    corpus.write_tweets(st.out("tweets.jsonl"), tweets)
    _write_json(st.out("summary.json"), summary)


def cmd_corpus_split(cfg, args, st):
    data = _labeled(cfg, st, args.task)
    parts = _split(cfg, args.task, data)
    sizes = {}
    for name, part in zip(("train", "dev", "test"), parts):
        with open(st.out(f"{name}.txt"), "w", encoding="utf-8", newline="\n") as fh:
            for inst, _ in part:
                fh.write(inst.tweet_id + "\n")
        sizes[name] = {"n": len(part), "positive": sum(y for _, y in part)}
    _write_json(st.out("summary.json"), sizes)


# -- annotation -----------------------------------------------------------------

def cmd_annotate_aggregate(cfg, args, st):
    votes = _votes(cfg, st)
    strict = cfg.get_bool("annotate", "strict")
    summary = {}
    for phase in annotation.Phase:
        if not any(v.phase is phase for v in votes):
            continue
        labels = annotation.aggregate(votes, phase, strict)
        annotation.write_labels(st.out(f"{phase.value}.jsonl"), labels)
        pos = sum(lab.label for lab in labels)
        summary[phase.value] = {"n_tweets": len(labels), "positive": pos,
                                "positive_pct": round(100 * pos / len(labels), 1) if labels else None}
    _write_json(st.out("summary.json"), summary)


def cmd_annotate_filter_workers(cfg, args, st):
    votes = annotation.read_votes(st.input("votes", cfg.require("votes")["votes"]))
    threshold = cfg.get_float("annotate", "min_agreement")
    kept = annotation.filter_workers(votes, threshold)
    counts = annotation._agreement_counts(votes)
    with open(st.out("agreement.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["worker_id", "agreement", "evaluable", "removed"])
        for worker in sorted(counts):
            m, n = counts[worker]
            rate = m / n if n else None
            w.writerow([worker, "" if rate is None else repr(rate), n, int(rate is not None and rate < threshold)])
    annotation.write_votes(st.out("votes.csv"), kept)
    removed = sorted({v.worker_id for v in votes} - {v.worker_id for v in kept})
    _write_json(st.out("summary.json"), {"n_votes": len(votes), "n_kept": len(kept), "removed_workers": removed})


def _parse_expert(value: str, phase: annotation.Phase) -> bool:
    low = value.strip().lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    return value.strip() == annotation.POSITIVE[phase]


def cmd_annotate_kappa(cfg, args, st):
    path = st.input("expert", cfg.require("expert")["expert"])
    expert: dict[str, dict[str, bool]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            phase = annotation.Phase(row["phase"])
            expert.setdefault(phase.value, {})[row["tweet_id"]] = _parse_expert(row["label"], phase)
    result = {}
    for phase, gold in sorted(expert.items()):
        crowd = _labels(cfg, st, phase)
        shared = sorted(set(gold) & set(crowd))
        if not shared:
            raise ValidationError(f"no {phase} tweets shared between expert and crowd labels")
        result[phase] = {"n": len(shared), "kappa": annotation.cohens_kappa(
            [gold[t] for t in shared], [crowd[t] for t in shared])}
    _write_json(st.out("kappa.json"), result)


# -- embeddings -----------------------------------------------------------------

def cmd_embed_train(cfg, args, st):
    for key in ("unlabeled", "forecast_corpus", "corpus"):
        if cfg.path(key) is not None:
            tweets = corpus.read_tweets(st.input("embedding_corpus", cfg.require(key)[key]))
            break
    else:
        raise ConfigError("set paths.unlabeled (or forecast_corpus / corpus) to train embeddings")
    docs = [corpus.tokenize(t.text) for t in tweets]
    gcfg = glove.GloveConfig(
        dim=cfg.get_int("glove", "dim"), window=cfg.get_int("glove", "window"),
        x_max=cfg.get_float("glove", "x_max"), alpha=cfg.get_float("glove", "alpha"),
        learning_rate=cfg.get_float("glove", "learning_rate"), epochs=cfg.get_int("glove", "epochs"),
        seed=cfg.seed)
    table = glove.count_cooccurrences(docs, gcfg.window, cfg.get_int("glove", "min_count"))
    losses: list[float] = []
    emb = glove.train_embeddings(table, gcfg, losses)
    emb.save_text(st.out("embeddings.txt"))
    with open(st.out("words.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(w + "\n" for w in table.words)
    table.save(st.out("cooccurrence.bin"))
    with open(st.out("loss.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        w.writerows([i, repr(v)] for i, v in enumerate(losses))
    plots.training_curve(range(len(losses)), losses, st.out("loss.png"), "weighted least-squares loss")


def cmd_embed_neighbors(cfg, args, st):
    path = _upstream(cfg, "embed-train", "embeddings.txt") or cfg.require("embeddings")["embeddings"]
    vecs = glove.load_vectors(st.input("embeddings", path))
    with open(st.out("neighbors.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("token\trank\tneighbor\tcosine\n")
        for token in args.token:
            if token not in vecs:
                raise ValidationError(f"{token!r} is not in the embedding vocabulary")
            for r, (nb, sim) in enumerate(glove.nearest_neighbors(vecs, token, args.k), 1):
                fh.write(f"{token}\t{r}\t{nb}\t{sim!r}\n")


# -- classifiers ----------------------------------------------------------------

def cmd_train(cfg, args, st):
    data = _labeled(cfg, st, args.task)
    train, dev, test = _split(cfg, args.task, data)
    if args.model == "lr":
        scorer, summary = _train_lr(cfg, st, train, dev)
    else:
        scorer, summary = _train_cnn(cfg, st, train, dev)
    for name, part in (("dev", dev), ("test", test)):
        ids = [inst.tweet_id for inst, _ in part]
        labels = [y for _, y in part]
        scores = scorer([inst.tokens for inst, _ in part]) if part else []
        _write_scores(st.out(f"scores-{name}.csv"), ids, scores, labels)
        summary[f"{name}_auc"] = _auc_or_none(scores, labels) if part else None
    summary.update({"task": args.task, "model": args.model,
                    "n_train": len(train), "n_dev": len(dev), "n_test": len(test)})
    _write_json(st.out("metrics.json"), summary)


def _xy(part, vocab):
    X = featurize.to_matrix([featurize.vectorize(inst.tokens, vocab) for inst, _ in part], len(vocab))
    return X, np.array([y for _, y in part], dtype=np.float64)


def _train_lr(cfg, st, train, dev):
    vocab = featurize.build_vocab([inst.tokens for inst, _ in train], cfg.get_list("featurize", "orders", int),
                                  cfg.get_int("featurize", "min_count"))
    lcfg = linmodel.LinearConfig(cfg.get_float("linmodel", "learning_rate"), cfg.get_int("linmodel", "epochs"),
                                 cfg.get_float("linmodel", "l2"), cfg.get_bool("linmodel", "backtrack"))
    tlog = linmodel.TrainingLog()
    model = linmodel.train(_xy(train, vocab), _xy(dev, vocab) if dev else None, lcfg, log=tlog)
    model.save(st.out("model.txt"))
    vocab.save(st.out("vocab.tsv"))
    tlog.write_csv(st.out("loss.csv"))
    plots.training_curve([r.epoch for r in tlog.records], [r.loss for r in tlog.records], st.out("loss.png"))
    with open(st.out("top_features.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ngram", "weight"])
        w.writerows([t, repr(v)] for t, v in linmodel.top_features(model, vocab, 20))
    clf = linmodel.NgramClassifier(model, vocab)
    return clf.probabilities, {"best_epoch": tlog.best_epoch}


def _train_cnn(cfg, st, train, dev):
    max_len = cfg.get_int("featurize", "max_len")
    vocab = featurize.build_word_vocab([inst.tokens for inst, _ in train])
    emb = _embeddings(cfg, st)
    dim = len(next(iter(emb.values()))) if emb else cfg.get_int("glove", "dim")
    ccfg = convnet.ConvConfig(embed_dim=dim, widths=tuple(cfg.get_list("convnet", "widths", int)),
                              n_filters=cfg.get_int("convnet", "filters"),
                              learning_rate=cfg.get_float("convnet", "learning_rate"),
                              epochs=cfg.get_int("convnet", "epochs"), max_len=max_len, seed=cfg.seed)
    seq = lambda part: [featurize.index_sequence(inst.tokens, vocab, max_len) for inst, _ in part]  # noqa: E731
    history: list[dict] = []
    model = convnet.train_cnn((seq(train), [y for _, y in train]), (seq(dev), [y for _, y in dev]) if dev else None,
                              vocab, emb, ccfg, history)
    model.save(st.out("model.bin"))
    vocab.save(st.out("vocab.tsv"))
    with open(st.out("history.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "dev_auc"])
        for h in history:
            w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["dev_auc"]) if "dev_auc" in h else ""])
    clf = convnet.SequenceClassifier(model, vocab, max_len)
    return clf.probabilities, {"config": {"widths": list(ccfg.widths), "filters": ccfg.n_filters,
                                          "embed_dim": dim, "epochs": ccfg.epochs, "seed": ccfg.seed,
                                          "pretrained_embeddings": emb is not None}}


def cmd_eval_pr(cfg, args, st):
    curves, summary = {}, {}
    for model in ("lr", "cnn"):
        path = _upstream(cfg, f"train-{args.task}-{model}", "scores-test.csv")
        if path is None:
            continue
        ids, scores, labels = _read_scores(st.input(f"{model}_scores", path))
        items = metrics.scored(scores, labels, ids)
        curve = metrics.pr_curve(items)
        metrics.write_curve_csv(st.out(f"curve-{model}.csv"), curve)
        curves[model.upper()] = curve
        summary[model] = metrics.summary(items)
    if not curves:
        raise ConfigError(f"no trained {args.task} model found; run `threatcast train {args.task}` first")
    _write_json(st.out("summary.json"), summary)
    plots.pr_curves(curves, st.out("pr.png"), f"{args.task} classifier (test)")


# -- linking --------------------------------------------------------------------

def _provider(cfg, st, live: bool):
    cache_dir = cfg.path("page_cache")
    if cache_dir is None:
        if live:
            raise ConfigError("live fetching needs paths.page_cache to store pages")
        return None
    if not live:
        cfg.require("page_cache")
        st.input("page_cache", cache_dir)
        return linker.OfflineCache(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    return linker.LiveFetcher(linker.OfflineCache(cache_dir), cfg.get_float("linker", "timeout"),
                              cfg.get_int("linker", "per_host"))


def cmd_link_build(cfg, args, st):
    tweets = _forecast_tweets(cfg, st)
    store = _store(cfg, st)
    provider = _provider(cfg, st, args.live)
    table = linker.build_link_table(tweets, provider, cfg.get_int("linker", "workers"))
    filtered = linker.apply_time_constraints(table, store, cfg.get_int("linker", "min_lead_days"),
                                             cfg.get_int("linker", "max_lead_days"),
                                             cfg.get_int("linker", "min_tweets"))
    table.write_csv(st.out("links.csv"))
    filtered.write_csv(st.out("filtered.csv"))
    stages = [l.stage for l in table.links()]
    _write_json(st.out("summary.json"), {
        "n_tweets": len(tweets), "linked_tweets": len(table.by_tweet), "linked_cves": len(table),
        "linked_via_text": stages.count(linker.STAGE_TEXT), "linked_via_page": stages.count(linker.STAGE_PAGE),
        "forecast_tweets": len(filtered.by_tweet), "forecast_cves": len(filtered),
    })


def cmd_link_audit(cfg, args, st):
    path = _need_upstream(cfg, "link-build", "filtered.csv" if not args.raw else "links.csv", "link build")
    table = linker.LinkTable.read_csv(st.input("links", path))
    tweets = {t.id: t for t in _forecast_tweets(cfg, st)}
    store = _store(cfg, st)
    with open(st.out("audit.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cve_id", "tweet_id", "stage", "posted_at", "tweet_text", "urls", "nvd_description", "correct"])
        for link in linker.audit_sample(table, args.sample, cfg.seed):
            tw = tweets.get(link.tweet_id)
            rec = store.get(link.cve_id)
            w.writerow([link.cve_id, link.tweet_id, link.stage, corpus.format_timestamp(link.posted_at),
                        tw.text if tw else "", " ".join(tw.urls) if tw else "",
                        rec.description if rec else "", ""])


# -- forecasting ----------------------------------------------------------------

def _severe(store, cve: str) -> bool:
    rec = store.get(cve)
    return rec is not None and nvd.best_score(rec) is not None and nvd.is_severe(rec)


def _scores_for(cfg, st, scorer, table, store):
    if scorer == "volume":
        return forecast.volume_scores(table)
    if scorer == "true-cvss":
        return forecast.cvss_scores(table, store)
    if scorer == "random":
        return forecast.random_scores(table, cfg.seed)
    return forecast.model_scores(table, _tweet_scores(cfg, st, table))


def cmd_forecast_rank(cfg, args, st):
    table = _filtered_table(cfg, st)
    store = _store(cfg, st)
    exploits = _exploits(cfg, st) or frozenset()
    if args.scorer == "model":
        tweet_scores = _tweet_scores(cfg, st, table, reuse=False)
        ids = sorted(tweet_scores)
        _write_scores(st.out("tweet_scores.csv"), ids, [tweet_scores[i] for i in ids],
                      [_severe(store, table.by_tweet[i]) for i in ids])
        scores = forecast.model_scores(table, tweet_scores)
    else:
        scores = _scores_for(cfg, st, args.scorer, table, store)
    ranking = forecast.rank(table, scores, args.scorer)
    ranking.write_csv(st.out("ranking.csv"), store, exploits)


def cmd_forecast_eval(cfg, args, st):
    table = _filtered_table(cfg, st)
    store = _store(cfg, st)
    exploits = _exploits(cfg, st)
    ks = cfg.get_list("forecast", "ks", int)
    result: dict = {"scorer": args.scorer, "n_cves": len(table)}
    if args.scorer == "random":
        result["cvss"] = forecast.evaluate_random(table, store, ks, cfg.get_int("forecast", "trials"), cfg.seed)
    else:
        ranking = forecast.rank(table, _scores_for(cfg, st, args.scorer, table, store), args.scorer)
        result["cvss"] = forecast.evaluate_vs_cvss(ranking, store, ks)
        flags = {"CVSS >= 7.0": [nvd.is_severe(store[c]) for c in ranking.ids()]}
        if exploits is not None:
            try:
                result["exploits"] = forecast.evaluate_vs_exploits(ranking, exploits, ks)
            except ValidationError as exc:
                result["exploits"] = {"error": str(exc)}
            flags["exploited"] = [c in exploits for c in ranking.ids()]
        plots.precision_at_k(flags, st.out("precision_at_k.png"), max(ks), f"{args.scorer} ranking")
    _write_json(st.out("eval.json"), result)


# -- insights -------------------------------------------------------------------

def cmd_insights_adjectives(cfg, args, st):
    lexicon = insights.load_lexicon(st.input("lexicon", cfg.require("lexicon")["lexicon"]))
    store = _store(cfg, st)
    source = cfg.get("insights", "adjective_source")
    severe, other = [], []
    if source == "nvd":
        for cve in sorted(store):
            rec = store[cve]
            if nvd.best_score(rec) is not None:
                (severe if nvd.is_severe(rec) else other).append(corpus.tokenize(rec.description))
    elif source == "tweets":
        table = _filtered_table(cfg, st)
        tweets = {t.id: t for t in _forecast_tweets(cfg, st)}
        for tid, cve in sorted(table.by_tweet.items()):
            if tid in tweets and cve in store and nvd.best_score(store[cve]) is not None:
                (severe if nvd.is_severe(store[cve]) else other).append(corpus.tokenize(tweets[tid].text))
    else:
        raise ConfigError(f"insights.adjective_source must be nvd or tweets, got {source!r}")
    ranked = insights.rank_adjectives(severe, other, lexicon, cfg.get_int("insights", "top_k"),
                                      cfg.get_float("insights", "smoothing"))
    insights.write_ratios_csv(st.out("adjectives.csv"), ranked)


def cmd_insights_temporal(cfg, args, st):
    table = linker.LinkTable.read_csv(st.input("links", _need_upstream(cfg, "link-build", "links.csv", "link build")))
    stats = insights.delay_stats(table, _store(cfg, st), cfg.get_int("insights", "min_lead"))
    stats.write_json(st.out("delays.json"))
    plots.lead_histogram([stats.leads[c] for c in sorted(stats.leads)], st.out("leads.png"))


def cmd_insights_accounts(cfg, args, st):
    table = _filtered_table(cfg, st)
    store = _store(cfg, st)
    truth = cfg.get("insights", "account_truth")
    if truth not in ("cvss", "exploits"):
        raise ConfigError(f"insights.account_truth must be cvss or exploits, got {truth!r}")
    exploits = _exploits(cfg, st, required=True) if truth == "exploits" else None
    tweet_scores = _tweet_scores(cfg, st, table)
    authors = {t.id: t.author for t in _forecast_tweets(cfg, st)}
    stats = forecast.account_reliability(table, tweet_scores, authors, store,
                                         cfg.get_int("insights", "account_min_tweets"),
                                         cfg.get_float("insights", "score_floor"), exploits)
    forecast.write_accounts_csv(st.out("accounts.csv"), stats)


# -- argument parsing -----------------------------------------------------------

COMMANDS = {
    ("corpus", "ingest"): cmd_corpus_ingest,
    ("corpus", "dedup"): cmd_corpus_dedup,
    ("corpus", "split"): cmd_corpus_split,
    ("annotate", "aggregate"): cmd_annotate_aggregate,
    ("annotate", "kappa"): cmd_annotate_kappa,
    ("annotate", "filter-workers"): cmd_annotate_filter_workers,
    ("embed", "train"): cmd_embed_train,
    ("embed", "neighbors"): cmd_embed_neighbors,
    ("train", "existence"): cmd_train,
    ("train", "severity"): cmd_train,
    ("eval", "pr"): cmd_eval_pr,
    ("link", "build"): cmd_link_build,
    ("link", "audit"): cmd_link_audit,
    ("forecast", "rank"): cmd_forecast_rank,
    ("forecast", "eval"): cmd_forecast_eval,
    ("insights", "adjectives"): cmd_insights_adjectives,
    ("insights", "temporal"): cmd_insights_temporal,
    ("insights", "accounts"): cmd_insights_accounts,
}

HELP = {
    "corpus": "ingest, deduplicate and split tweet files",
    "annotate": "aggregate crowd votes, filter workers, expert agreement",
    "embed": "train domain word embeddings and query neighbours",
    "train": "train threat existence / severity classifiers",
    "eval": "precision/recall evaluation of trained classifiers",
    "link": "link tweets to CVE records",
    "forecast": "rank CVEs and evaluate the rankings",
    "insights": "adjective log-odds, disclosure delays, account reliability",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="INI config file or a stage manifest.json")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="shortcut for --set run.seed=N")
    common.add_argument("--output", "-o", help="shortcut for --set run.output=DIR")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = _Parser(prog="threatcast", description="Threat-severity analysis and CVE severity forecasting.")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    actions: dict[str, argparse._SubParsersAction] = {}
    for (group, action) in COMMANDS:
        if group not in actions:
            g = groups.add_parser(group, help=HELP[group])
            actions[group] = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
        sub = actions[group].add_parser(action, parents=[common], help=COMMANDS[(group, action)].__name__[4:].replace("_", " "))
        if (group, action) == ("corpus", "split"):
            sub.add_argument("--task", choices=("existence", "severity"), required=True)
        elif group == "train":
            sub.add_argument("--model", choices=("lr", "cnn"), default="lr")
        elif (group, action) == ("eval", "pr"):
            sub.add_argument("--task", choices=("existence", "severity"), default="severity")
        elif (group, action) == ("embed", "neighbors"):
            sub.add_argument("--token", action="append", required=True)
            sub.add_argument("--k", type=int, default=5)
        elif (group, action) == ("link", "build"):
            sub.add_argument("--live", action="store_true", help="fetch uncached pages over the network")
        elif (group, action) == ("link", "audit"):
            sub.add_argument("--sample", type=int, default=100)
            sub.add_argument("--raw", action="store_true", help="sample before time constraints")
        elif group == "forecast":
            sub.add_argument("--scorer", choices=forecast.SCORERS, default="model")
    return parser


def _stage_name(args) -> tuple[str, list[str]]:
    cmd = [args.group, args.action]
    name = f"{args.group}-{args.action}"
    if args.group == "train":
        args.task = args.action
        name += f"-{args.model}"
        cmd += ["--model", args.model]
    elif args.group == "corpus" and args.action == "split":
        name += f"-{args.task}"
        cmd += ["--task", args.task]
    elif args.group == "eval":
        name += f"-{args.task}"
        cmd += ["--task", args.task]
    elif args.group == "forecast":
        name += f"-{args.scorer}"
        cmd += ["--scorer", args.scorer]
    elif args.group == "embed" and args.action == "neighbors":
        for t in args.token:
            cmd += ["--token", t]
        cmd += ["--k", str(args.k)]
    elif args.group == "link" and args.action == "audit":
        cmd += ["--sample", str(args.sample)] + (["--raw"] if args.raw else [])
    elif args.group == "link" and args.action == "build" and args.live:
        cmd += ["--live"]
    return name, cmd


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.output is not None:
        overrides.append(f"run.output={args.output}")
    try:
        cfg = PipelineConfig.load(args.config, overrides)
        name, cmd = _stage_name(args)
        cfg.output.mkdir(parents=True, exist_ok=True)
        with Stage(cfg, name, cmd) as st:
            COMMANDS[(args.group, args.action)](cfg, args, st)
    except ConfigError as exc:
        print(f"threatcast: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        log.debug("stage failed", exc_info=True)
        print(f"threatcast: error: {exc}", file=sys.stderr)
        return 1
    print(cfg.output / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())

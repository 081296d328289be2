"""Stage orchestration over a run directory (``run/<stage>/<artifact>``).

Each stage validates that its prerequisite artifacts exist (naming the
producing subcommand when they do not), consumes upstream files, and writes
its own artifacts stamped with the config hash. Two runs with the same
config, seed, and inputs produce byte-identical artifacts.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import embed as embed_mod
from . import evaluate as eval_mod
from . import factorize as fact_mod
from . import fisher as fisher_mod
from . import retrieval as retr_mod
from . import synth as synth_mod
from . import topics as topics_mod
from .config import PipelineConfig, config_hash, save_config
from .errors import DataError, UsageError
from .features import (
    FeatureSet,
    compute_baseline_descriptor,
    fit_pca,
    project_pca,
    read_features,
    save_pca,
    write_features,
)
from .rng import child_seed, generator

STAGE_PRODUCERS = {
    "ingest/manifest.tsv": "ingest",
    "split/split.tsv": "split",
    "describe/features.mqlf": "describe",
    "lda/model.bin": "lda",
    "lda/tokens.tsv": "lda",
    "factorize/factors.bin": "factorize",
    "pseudo/labels.tsv": "pseudo",
    "embed/embedded.mqlf": "embed",
    "gmm/gmm.bin": "gmm",
    "gmm/reduced.mqlf": "gmm",
    "encode/db_fv.mqlf": "encode",
    "expand/queries.tsv": "expand",
    "expand/expansions.tsv": "expand",
}


def artifact_hash(config: PipelineConfig) -> str:
    """Config hash stamped into artifacts.

    pool_mode and threads select run variants rather than trained state, so
    they stay out of the hash; `evaluate --pool=...` comparisons remain
    compatible with one set of upstream artifacts.
    """
    scrubbed = dataclasses.replace(config, pool_mode="fv", threads=0)
    return config_hash(scrubbed)


@dataclass
class RunDir:
    root: Path

    def path(self, rel: str) -> Path:
        return self.root / rel

    def require(self, rel: str) -> Path:
        p = self.path(rel)
        if not p.exists():
            producer = STAGE_PRODUCERS.get(rel, rel.split("/", 1)[0])
            raise UsageError(f"missing artifact {rel}; run `{producer}` first")
        return p

    def stage(self, name: str) -> Path:
        p = self.root / name
        p.mkdir(parents=True, exist_ok=True)
        return p


def _hash_header(config: PipelineConfig) -> str:
    return f"config_hash={artifact_hash(config)}"


# ---------------------------------------------------------------------------
# Corpus-facing stages
# ---------------------------------------------------------------------------

def stage_synth(run: RunDir, config: PipelineConfig, spec: synth_mod.SynthSpec,
                rasterize: bool = False) -> synth_mod.SynthResult:
    out = run.stage("synth")
    result = synth_mod.generate(spec)
    corpus_mod.write_manifest(out / "manifest.tsv", result.corpus, header=_hash_header(config))
    write_features(out / "features.mqlf", result.features, config_hash=artifact_hash(config))
    synth_mod.write_queries(out / "queries.tsv", result.truth.query_photo_ids,
                            header=_hash_header(config))
    if rasterize:
        synth_mod.rasterize_blobs(result, out / "images")
    return result


def stage_ingest(run: RunDir, config: PipelineConfig, manifest_path) -> corpus_mod.Corpus:
    out = run.stage("ingest")
    corpus = corpus_mod.ingest_manifest(manifest_path, album_mode=config.album_mode)
    corpus_mod.write_manifest(out / "manifest.tsv", corpus, header=_hash_header(config))
    counts = dict(corpus.counts(), config_hash=artifact_hash(config))
    (out / "counts.json").write_text(json.dumps(counts, sort_keys=True) + "\n")
    return corpus


def load_corpus(run: RunDir, config: PipelineConfig) -> corpus_mod.Corpus:
    return corpus_mod.ingest_manifest(
        run.require("ingest/manifest.tsv"), album_mode=config.album_mode
    )


def stage_split(run: RunDir, config: PipelineConfig) -> corpus_mod.SplitAssignment:
    corpus = load_corpus(run, config)
    split = corpus_mod.split_corpus(corpus, config.split_ratios, config.seed)
    out = run.stage("split")
    corpus_mod.write_split(out / "split.tsv", split, header=_hash_header(config))
    return split


def stage_describe(run: RunDir, config: PipelineConfig,
                   features_path=None) -> FeatureSet:
    """Import an existing feature file or compute baseline descriptors from
    the manifest's image paths."""
    corpus = load_corpus(run, config)
    out = run.stage("describe")
    if features_path is not None:
        feats = read_features(features_path)
        missing = set(corpus.photo_order) - set(feats.photo_ids)
        if missing:
            raise DataError(
                f"feature file lacks {len(missing)} corpus photos "
                f"(e.g. {sorted(missing)[0]!r})"
            )
        feats = feats.subset(corpus.photo_order)
    else:
        from PIL import Image

        rows = []
        for pid in corpus.photo_order:
            rec = corpus.photos[pid]
            if rec.image_path is None:
                raise DataError(
                    f"photo {pid!r} has no image_path; import a feature file instead"
                )
            with Image.open(rec.image_path) as img:
                raster = np.asarray(img.convert("RGB"))
            rows.append(compute_baseline_descriptor(raster))
        feats = FeatureSet(list(corpus.photo_order), np.asarray(rows, dtype=np.float32))
    write_features(out / "features.mqlf", feats, config_hash=artifact_hash(config))
    return feats


# ---------------------------------------------------------------------------
# Topic stage
# ---------------------------------------------------------------------------

def stage_lda(run: RunDir, config: PipelineConfig) -> topics_mod.TopicModel:
    corpus = load_corpus(run, config)
    feats = read_features(run.require("describe/features.mqlf"))
    out = run.stage("lda")

    if config.vocab_mode == "photo-id":
        codebook = None
    else:
        codebook = topics_mod.build_codebook(
            feats.values.astype(np.float64), config.vocab_size, config.seed
        )
        write_features(
            out / "codebook.mqlf",
            FeatureSet(
                [f"w{i}" for i in range(codebook.size)],
                codebook.centroids.astype(np.float32),
            ),
            config_hash=artifact_hash(config),
        )
    tokenized = topics_mod.tokenize_corpus(corpus, codebook, feats)
    model = topics_mod.fit_lda(
        tokenized,
        n_topics=config.topics_z,
        alpha=config.alpha,
        eta=config.lda_eta,
        sweeps=config.lda_sweeps,
        burn_in=config.lda_burn_in,
        seed=child_seed(config.seed, "lda"),
        thin=config.lda_thin,
    )
    topics_mod.save_topic_model(out / "model.bin", model, config_hash=artifact_hash(config))
    with open(out / "tokens.tsv", "w", encoding="utf-8") as fp:
        fp.write(f"# {_hash_header(config)}\n")
        for pid in corpus.photo_order:
            fp.write(f"{pid}\t{model.token_of_photo[pid]}\n")
    return model


def load_topic_model(run: RunDir) -> topics_mod.TopicModel:
    model = topics_mod.load_topic_model(run.require("lda/model.bin"))
    tokens: dict[str, int] = {}
    with open(run.require("lda/tokens.tsv"), "r", encoding="utf-8") as fp:
        for line in fp:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            pid, tok = line.split("\t")
            tokens[pid] = int(tok)
    model.token_of_photo = tokens
    return model


# ---------------------------------------------------------------------------
# Global factorization, pseudo-classes, embedding
# ---------------------------------------------------------------------------

def stage_factorize(run: RunDir, config: PipelineConfig) -> fact_mod.FactorModel:
    """Global factorization over train-split photos, for pseudo-class minting."""
    corpus = load_corpus(run, config)
    split = corpus_mod.read_split(run.require("split/split.tsv"))
    model = load_topic_model(run)
    train_photos = {pid for pid, s in split.assignment.items() if s == "train"}
    dominant = model.dominant_topics()
    all_topics = set(range(model.n_topics))
    matrix = fact_mod.build_matrix(
        corpus, corpus.users, all_topics, dominant, restrict_photos=train_photos
    )
    factors = fact_mod.factorize(
        matrix,
        n_factors=config.latent_dim,
        reg=config.mf_reg,
        lr0=config.mf_lr0,
        epochs=config.mf_epochs,
        seed=child_seed(config.seed, "mf-global"),
        neg_per_pos=config.mf_neg_ratio,
    )
    out = run.stage("factorize")
    fact_mod.save_factor_model(out / "factors.bin", factors, config_hash=artifact_hash(config))
    with open(out / "trace.tsv", "w", encoding="utf-8") as fp:
        fp.write(f"# {_hash_header(config)}\n")
        for epoch, value in enumerate(factors.trace):
            fp.write(f"{epoch}\t{value:.9g}\n")
    return factors


def stage_pseudo(run: RunDir, config: PipelineConfig) -> fact_mod.PseudoClassAssignment:
    factors = fact_mod.load_factor_model(run.require("factorize/factors.bin"))
    n_classes = min(config.pseudo_c, len(factors.photo_ids))
    assignment = fact_mod.pseudo_classes(
        factors, n_classes, seed=child_seed(config.seed, "pseudo")
    )
    out = run.stage("pseudo")
    fact_mod.write_pseudo_labels(out / "labels.tsv", assignment, header=_hash_header(config))
    write_features(
        out / "centroids.mqlf",
        FeatureSet(
            [f"c{i}" for i in range(assignment.n_classes)],
            assignment.centroids.astype(np.float32),
        ),
        config_hash=artifact_hash(config),
    )
    return assignment


def stage_embed(run: RunDir, config: PipelineConfig) -> FeatureSet:
    """Train the pseudo-class embedding on train photos, embed every photo.

    In passthrough mode the imported descriptors are used as-is (the path for
    externally exported deep features)."""
    corpus = load_corpus(run, config)
    feats = read_features(run.require("describe/features.mqlf"))
    out = run.stage("embed")
    if config.embed_passthrough:
        embedded = FeatureSet(list(feats.photo_ids), feats.values.copy())
        write_features(out / "embedded.mqlf", embedded, config_hash=artifact_hash(config))
        return embedded

    labels_map = fact_mod.read_pseudo_labels(run.require("pseudo/labels.tsv"))
    train_ids = sorted(set(labels_map) & set(corpus.photo_order))
    if not train_ids:
        raise DataError("no labeled training photos; run `pseudo` first")
    feat_index = feats.index()
    x = feats.values[[feat_index[p] for p in train_ids]].astype(np.float64)
    y = np.array([labels_map[p] for p in train_ids], dtype=np.int64)
    n_classes = int(y.max()) + 1
    model = embed_mod.train_embedding(
        x,
        y,
        n_hidden=config.hidden_h,
        epochs=config.embed_epochs,
        lr0=config.embed_lr0,
        seed=child_seed(config.seed, "embed"),
        batch_size=config.embed_batch,
        n_classes=n_classes,
    )
    embed_mod.save_embedding(out / "model.bin", model, config_hash=artifact_hash(config))
    hidden = embed_mod.embed(model, feats.values.astype(np.float64))
    embedded = FeatureSet(list(feats.photo_ids), hidden.astype(np.float32))
    write_features(out / "embedded.mqlf", embedded, config_hash=artifact_hash(config))
    return embedded


# ---------------------------------------------------------------------------
# GMM fitting and database encoding
# ---------------------------------------------------------------------------

def stage_gmm(run: RunDir, config: PipelineConfig) -> fisher_mod.GmmModel:
    """PCA-reduce embedded features (fitted on train split) and fit the GMM."""
    embedded = read_features(run.require("embed/embedded.mqlf"))
    split = corpus_mod.read_split(run.require("split/split.tsv"))
    out = run.stage("gmm")
    train_ids = [p for p in embedded.photo_ids if split.assignment.get(p) == "train"]
    idx = embedded.index()
    train = embedded.values[[idx[p] for p in train_ids]].astype(np.float64)
    pca_dim = min(config.pca_dim, train.shape[1])
    pca = fit_pca(train, pca_dim)
    save_pca(out / "pca.bin", pca, config_hash=artifact_hash(config))
    reduced_all = project_pca(pca, embedded.values.astype(np.float64))
    reduced = FeatureSet(list(embedded.photo_ids), reduced_all.astype(np.float32))
    write_features(out / "reduced.mqlf", reduced, config_hash=artifact_hash(config))
    train_reduced = reduced_all[[idx[p] for p in train_ids]]
    gmm = fisher_mod.fit_gmm(
        train_reduced,
        n_components=min(config.gmm_g, train_reduced.shape[0]),
        seed=child_seed(config.seed, "gmm"),
        max_iters=config.gmm_max_iters,
        tol=config.gmm_tol,
    )
    fisher_mod.save_gmm(out / "gmm.bin", gmm, config_hash=artifact_hash(config))
    return gmm


def stage_encode(run: RunDir, config: PipelineConfig) -> FeatureSet:
    """Singleton Fisher vector per database photo (the FV-space database)."""
    gmm = fisher_mod.load_gmm(run.require("gmm/gmm.bin"))
    reduced = read_features(run.require("gmm/reduced.mqlf"))
    out = run.stage("encode")
    encoded = fisher_mod.fisher_encode(gmm, reduced.values.astype(np.float64))
    normalized = np.empty_like(encoded)
    for i in range(encoded.shape[0]):
        normalized[i] = fisher_mod.signed_sqrt_normalize(encoded[i]).values
    db_fv = FeatureSet(list(reduced.photo_ids), normalized.astype(np.float32))
    write_features(out / "db_fv.mqlf", db_fv, config_hash=artifact_hash(config))
    return db_fv


# ---------------------------------------------------------------------------
# Per-query expansion
# ---------------------------------------------------------------------------

def sample_queries(corpus: corpus_mod.Corpus, split: corpus_mod.SplitAssignment,
                   config: PipelineConfig) -> list[str]:
    """Fixed-seed sample of test-split photos per landmark (junk never queries)."""
    queries = []
    for landmark in corpus.landmarks:
        pool = sorted(
            pid
            for pid in corpus.photos_of_landmark(landmark)
            if split.assignment.get(pid) == "test"
            and corpus.photos[pid].is_junk_of is None
        )
        rng = generator(config.seed, f"queries:{landmark}")
        rng.shuffle(pool)
        queries.extend(pool[: config.queries_per_landmark])
    return queries


def expand_one(
    corpus: corpus_mod.Corpus,
    model: topics_mod.TopicModel,
    dominant: dict[str, int],
    config: PipelineConfig,
    query_id: str,
) -> fact_mod.MultiQuerySet:
    """Topic detection, community, per-community factorization, top-K."""
    token = model.token_of_photo[query_id]
    topic_set = topics_mod.candidate_topics(
        model, token, config.topic_lambda, query_photo_id=query_id
    )
    community = topics_mod.related_users(corpus, model, topic_set)
    pool = set(corpus.photo_order) - {query_id} - corpus.junk_of(query_id)
    try:
        matrix = fact_mod.build_matrix(
            corpus, community, topic_set, dominant, restrict_photos=pool
        )
        factors = fact_mod.factorize(
            matrix,
            n_factors=min(config.latent_dim, max(2, matrix.shape[1])),
            reg=config.mf_reg,
            lr0=config.mf_lr0,
            epochs=config.expand_mf_epochs,
            seed=child_seed(config.seed, f"expand:{query_id}"),
            neg_per_pos=config.mf_neg_ratio,
        )
        user = corpus.photos[query_id].user_id
        if user not in factors.user_index:
            raise DataError(f"query user {user!r} absent from the community matrix")
        scores = fact_mod.confidence_scores(factors, user)
        return fact_mod.expand_query(
            factors.photo_ids, scores, config.expansion_k, query_id
        )
    except DataError:
        # degenerate community: fall back to the bare query (flagged short)
        return fact_mod.MultiQuerySet(
            query_photo_id=query_id, expanded_ids=[], scores=[], short_pool=True
        )


def stage_expand(run: RunDir, config: PipelineConfig,
                 queries_path=None) -> dict[str, fact_mod.MultiQuerySet]:
    corpus = load_corpus(run, config)
    split = corpus_mod.read_split(run.require("split/split.tsv"))
    model = load_topic_model(run)
    out = run.stage("expand")
    if queries_path is not None:
        queries = synth_mod.read_queries(queries_path)
        unknown = [q for q in queries if q not in corpus.photos]
        if unknown:
            raise DataError(f"queries not in corpus: {unknown[:3]}")
    else:
        queries = sample_queries(corpus, split, config)
    if not queries:
        raise DataError("no queries to expand; is the test split empty?")

    dominant = model.dominant_topics()
    workers = config.threads if config.threads > 0 else None
    results: list[fact_mod.MultiQuerySet]
    if workers == 1:
        results = [expand_one(corpus, model, dominant, config, q) for q in queries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda q: expand_one(corpus, model, dominant, config, q), queries)
            )

    synth_mod.write_queries(out / "queries.tsv", queries, header=_hash_header(config))
    with open(out / "expansions.tsv", "w", encoding="utf-8") as fp:
        fp.write(f"# {_hash_header(config)}\n")
        for mqs in results:
            ids = ",".join(mqs.expanded_ids)
            scores = ",".join(f"{s:.9g}" for s in mqs.scores)
            flag = "short" if mqs.short_pool else "full"
            fp.write(f"{mqs.query_photo_id}\t{ids}\t{scores}\t{flag}\n")
    return {m.query_photo_id: m for m in results}


def read_expansions(path) -> dict[str, fact_mod.MultiQuerySet]:
    out: dict[str, fact_mod.MultiQuerySet] = {}
    with open(path, "r", encoding="utf-8") as fp:
        for line in fp:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            qid, ids, scores, flag = line.split("\t")
            id_list = ids.split(",") if ids else []
            score_list = [float(s) for s in scores.split(",")] if scores else []
            out[qid] = fact_mod.MultiQuerySet(
                query_photo_id=qid,
                expanded_ids=id_list,
                scores=score_list,
                short_pool=flag == "short",
            )
    if not out:
        raise DataError("empty expansions file")
    return out


# ---------------------------------------------------------------------------
# Retrieval and evaluation
# ---------------------------------------------------------------------------

def _variant(config: PipelineConfig, baseline: str) -> str:
    return f"{config.pool_mode}_{baseline}"


def build_query_representation(
    query_id: str,
    mqs: fact_mod.MultiQuerySet | None,
    embedded: FeatureSet,
    reduced: FeatureSet,
    gmm: fisher_mod.GmmModel | None,
    config: PipelineConfig,
) -> np.ndarray:
    """Pooled representation of {query} U compacted expansion.

    FV mode pools Fisher encodings of the PCA-reduced features; average mode
    pools the embedded features directly.
    """
    emb_idx = embedded.index()
    pool_ids = [query_id]
    if mqs is not None and mqs.expanded_ids:
        qvec = embedded.values[emb_idx[query_id]].astype(np.float64)
        exp_vecs = embedded.values[
            [emb_idx[p] for p in mqs.expanded_ids]
        ].astype(np.float64)
        pool_ids += retr_mod.compact_multiquery(
            qvec, mqs.expanded_ids, exp_vecs, config.compact_s
        )
    if config.pool_mode == "fv":
        red_idx = reduced.index()
        vecs = reduced.values[[red_idx[p] for p in pool_ids]].astype(np.float64)
        return fisher_mod.pool_and_normalize(gmm, vecs).values
    vecs = embedded.values[[emb_idx[p] for p in pool_ids]].astype(np.float64)
    return fisher_mod.average_pool(vecs)


def stage_retrieve(run: RunDir, config: PipelineConfig,
                   baseline: str = "multi",
                   output: str = "text") -> dict[str, retr_mod.RankedList]:
    if baseline not in ("multi", "single", "aqe"):
        raise UsageError(f"baseline must be multi|single|aqe, got {baseline!r}")
    if output not in ("text", "json"):
        raise UsageError(f"output must be text|json, got {output!r}")
    corpus = load_corpus(run, config)
    embedded = read_features(run.require("embed/embedded.mqlf"))
    expansions = read_expansions(run.require("expand/expansions.tsv"))
    if config.pool_mode == "fv":
        gmm = fisher_mod.load_gmm(run.require("gmm/gmm.bin"))
        reduced = read_features(run.require("gmm/reduced.mqlf"))
        db = read_features(run.require("encode/db_fv.mqlf"))
    else:
        gmm, reduced = None, embedded
        db = embedded
    out = run.stage(f"retrieve/{_variant(config, baseline)}")

    db_matrix = db.values.astype(np.float64)
    db_ids = list(db.photo_ids)
    db_index = {pid: db_matrix[i] for i, pid in enumerate(db_ids)}

    def one(query_id: str) -> retr_mod.RankedList:
        mqs = expansions[query_id] if baseline == "multi" else None
        rep = build_query_representation(
            query_id, mqs, embedded, reduced, gmm, config
        )
        n_out = config.ranked_n + len(corpus.junk_of(query_id))
        if baseline == "aqe":
            first_pass = retr_mod.rank(
                rep, db_ids, db_matrix, n_out, query_photo_id=query_id
            )
            rep = retr_mod.aqe_requery(
                first_pass, db_index, rep, min(config.aqe_k, len(first_pass.entries))
            )
        return retr_mod.rank(rep, db_ids, db_matrix, n_out, query_photo_id=query_id)

    queries = sorted(expansions)
    workers = config.threads if config.threads > 0 else None
    if workers == 1:
        ranked = [one(q) for q in queries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ranked = list(pool.map(one, queries))
    for rl in ranked:
        retr_mod.write_ranked_list(
            out / f"q_{rl.query_photo_id}.tsv", rl, config_hash=artifact_hash(config)
        )
        if output == "json":
            payload = retr_mod.ranked_list_json(rl)
            payload["config_hash"] = artifact_hash(config)
            (out / f"q_{rl.query_photo_id}.json").write_text(
                json.dumps(payload, sort_keys=True) + "\n"
            )
    return {rl.query_photo_id: rl for rl in ranked}


def stage_evaluate(run: RunDir, config: PipelineConfig, baseline: str = "multi",
                   force: bool = False) -> eval_mod.EvalReport:
    corpus = load_corpus(run, config)
    variant = _variant(config, baseline)
    ranked_dir = run.path(f"retrieve/{variant}")
    if not ranked_dir.exists():
        raise UsageError(f"missing artifact retrieve/{variant}; run `retrieve` first")

    expected = artifact_hash(config)
    seen_hashes = set()
    ranked: dict[str, retr_mod.RankedList] = {}
    for path in sorted(ranked_dir.glob("q_*.tsv")):
        with open(path, "r", encoding="utf-8") as fp:
            first = fp.readline().rstrip("\n")
        if first.startswith("# config_hash="):
            seen_hashes.add(first.split("=", 1)[1])
        rl = retr_mod.read_ranked_list(path)
        ranked[rl.query_photo_id] = rl
    if not ranked:
        raise DataError(f"no ranked lists under retrieve/{variant}")
    feats_hash = read_features(run.require("describe/features.mqlf")).config_hash
    if feats_hash:
        seen_hashes.add(feats_hash)
    if not force and seen_hashes - {expected}:
        raise UsageError(
            f"mixed config hashes {sorted(seen_hashes)} (expected {expected}); "
            "rerun upstream stages or pass --force"
        )

    results = []
    pr_by_landmark: dict[str, list[list[tuple[float, float]]]] = {}
    for qid in sorted(ranked):
        landmark = corpus.photos[qid].landmark_id
        junk = corpus.junk_of(qid)
        relevant = {
            pid
            for pid in corpus.photos_of_landmark(landmark)
            if pid != qid and pid not in junk
        }
        ap = eval_mod.average_precision(ranked[qid], relevant, junk, config.ranked_n)
        results.append((qid, landmark, ap))
        pr_by_landmark.setdefault(landmark, []).append(
            eval_mod.precision_recall_curve(ranked[qid], relevant, junk)
        )

    pr_curves = {}
    for landmark, curves in sorted(pr_by_landmark.items()):
        depth = min(len(c) for c in curves)
        pr_curves[landmark] = [
            (
                sum(c[r][0] for c in curves) / len(curves),
                sum(c[r][1] for c in curves) / len(curves),
            )
            for r in range(depth)
        ]

    report = eval_mod.build_report(
        results,
        protocol_n=config.ranked_n,
        queries_per_landmark=config.queries_per_landmark,
        pool_mode=config.pool_mode,
        pr_curves=pr_curves,
    )
    out = run.stage(f"evaluate/{variant}")
    (out / "report.txt").write_text(
        f"# {_hash_header(config)}\n" + report.render_text()
    )
    (out / "report.json").write_text(
        json.dumps(report.to_json(), sort_keys=True, indent=1) + "\n"
    )
    pr_dir = out / "pr"
    pr_dir.mkdir(exist_ok=True)
    for landmark, points in report.pr_curves.items():
        with open(pr_dir / f"{landmark}.tsv", "w", encoding="utf-8") as fp:
            for recall, precision in points:
                fp.write(f"{recall:.9g}\t{precision:.9g}\n")
    return report


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def run_pipeline(
    run: RunDir,
    config: PipelineConfig,
    manifest_path=None,
    features_path=None,
    queries_path=None,
    synth_spec: synth_mod.SynthSpec | None = None,
    baseline: str = "multi",
) -> eval_mod.EvalReport:
    """Chain every stage: corpus in, EvalReport out."""
    save_config(run.stage(".") / "config.cfg", config)
    if synth_spec is not None:
        result = stage_synth(run, config, synth_spec)
        manifest_path = run.path("synth/manifest.tsv")
        features_path = run.path("synth/features.mqlf")
        if queries_path is None:
            queries_path = run.path("synth/queries.tsv")
    if manifest_path is None:
        raise UsageError("pipeline needs a manifest (or a synth spec)")
    stage_ingest(run, config, manifest_path)
    stage_split(run, config)
    stage_describe(run, config, features_path=features_path)
    stage_lda(run, config)
    stage_factorize(run, config)
    if not config.embed_passthrough:
        stage_pseudo(run, config)
    stage_embed(run, config)
    stage_gmm(run, config)
    stage_encode(run, config)
    stage_expand(run, config, queries_path=queries_path)
    stage_retrieve(run, config, baseline=baseline)
    return stage_evaluate(run, config, baseline=baseline)

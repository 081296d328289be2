"""Visual vocabulary, LDA over user albums, topic detection, user community.

Albums play the role of documents; each photo contributes one token obtained
by vector-quantizing its descriptor against a k-means codebook (or, in
``photo-id`` vocabulary mode, by being its own token). Inference is collapsed
Gibbs sampling with theta/phi estimated from averaged post-burn-in counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cluster, kernels
from .errors import DataError
from .features import FeatureSet, read_features, write_features
from .rng import SplitMix64, child_seed


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

@dataclass
class VocabCodebook:
    centroids: np.ndarray  # (V, d)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]


def build_codebook(descriptors: np.ndarray, vocab_size: int, seed: int) -> VocabCodebook:
    """k-means codebook over training descriptors."""
    x = np.asarray(descriptors, dtype=np.float64)
    if vocab_size < 2:
        raise DataError("vocabulary size must be >= 2")
    if x.shape[0] < vocab_size:
        raise DataError(
            f"cannot build a {vocab_size}-word codebook from {x.shape[0]} descriptors"
        )
    result = cluster.kmeans(x, vocab_size, seed=child_seed(seed, "codebook"))
    return VocabCodebook(centroids=result.centroids)


def tokenize(codebook: VocabCodebook, descriptor: np.ndarray) -> int:
    """Nearest-centroid token; ties break toward the lowest index."""
    return int(cluster.assign(codebook.centroids, descriptor)[0])


def tokenize_all(codebook: VocabCodebook, features: FeatureSet) -> dict[str, int]:
    labels = cluster.assign(codebook.centroids, features.values.astype(np.float64))
    return {pid: int(t) for pid, t in zip(features.photo_ids, labels)}


@dataclass
class TokenizedCorpus:
    """Albums rendered as token lists, aligned with their photo ids."""

    album_ids: list[str]
    doc_tokens: list[list[int]]
    doc_photo_ids: list[list[str]]
    vocab_size: int

    def __post_init__(self):
        for toks in self.doc_tokens:
            for t in toks:
                if not 0 <= t < self.vocab_size:
                    raise DataError(f"token {t} outside vocabulary of {self.vocab_size}")

    @property
    def token_of_photo(self) -> dict[str, int]:
        return {
            pid: tok
            for toks, pids in zip(self.doc_tokens, self.doc_photo_ids)
            for pid, tok in zip(pids, toks)
        }


def tokenize_corpus(corpus, codebook: VocabCodebook | None, features: FeatureSet) -> TokenizedCorpus:
    """Render corpus albums as token documents.

    With a codebook, tokens are quantized descriptors; without one
    (photo-id vocabulary mode) every photo is its own token.
    """
    album_ids = sorted(corpus.albums)
    if codebook is None:
        order = {pid: i for i, pid in enumerate(corpus.photo_order)}
        token_map = {pid: order[pid] for pid in corpus.photo_order}
        vocab = len(order)
    else:
        token_map = tokenize_all(codebook, features)
        vocab = codebook.size
    doc_tokens, doc_photo_ids = [], []
    for aid in album_ids:
        pids = corpus.albums[aid].photo_ids
        try:
            doc_tokens.append([token_map[p] for p in pids])
        except KeyError as exc:
            raise DataError(f"no descriptor/token for photo {exc.args[0]!r}") from None
        doc_photo_ids.append(list(pids))
    return TokenizedCorpus(album_ids, doc_tokens, doc_photo_ids, vocab)


# ---------------------------------------------------------------------------
# Collapsed Gibbs sampling
# ---------------------------------------------------------------------------

class GibbsSampler:
    """Collapsed Gibbs chain over flattened (document, token) positions.

    Exposed separately from fit_lda so tests can drive single sweeps and
    check count/assignment consistency.
    """

    def __init__(self, tokenized: TokenizedCorpus, n_topics: int, alpha: float,
                 eta: float, seed: int):
        if n_topics < 1:
            raise DataError("topic count must be >= 1")
        if not tokenized.doc_tokens or all(len(d) == 0 for d in tokenized.doc_tokens):
            raise DataError("empty document list")
        self.n_topics = n_topics
        self.alpha = alpha
        self.eta = eta
        self.vocab = tokenized.vocab_size
        self.doc_ids = np.array(
            [i for i, doc in enumerate(tokenized.doc_tokens) for _ in doc],
            dtype=np.int32,
        )
        self.tokens = np.array(
            [t for doc in tokenized.doc_tokens for t in doc], dtype=np.int32
        )
        self.n_docs = len(tokenized.doc_tokens)
        self._rng_state = SplitMix64(child_seed(seed, "gibbs")).state
        sm = SplitMix64(self._rng_state)
        self.z = np.array(
            [sm.randint(n_topics) for _ in range(len(self.tokens))], dtype=np.int32
        )
        self._rng_state = sm.state
        self.n_iz = np.zeros((self.n_docs, n_topics), dtype=np.int64)
        self.n_zv = np.zeros((n_topics, self.vocab), dtype=np.int64)
        self.n_z = np.zeros(n_topics, dtype=np.int64)
        np.add.at(self.n_iz, (self.doc_ids, self.z), 1)
        np.add.at(self.n_zv, (self.z, self.tokens), 1)
        np.add.at(self.n_z, self.z, 1)

    def sweep(self) -> None:
        self._rng_state = kernels.gibbs_sweep(
            self.doc_ids, self.tokens, self.z,
            self.n_iz, self.n_zv, self.n_z,
            self.alpha, self.eta, self._rng_state,
        )

    def counts_from_assignments(self):
        """Recompute sufficient statistics from scratch (for consistency checks)."""
        n_iz = np.zeros_like(self.n_iz)
        n_zv = np.zeros_like(self.n_zv)
        n_z = np.zeros_like(self.n_z)
        np.add.at(n_iz, (self.doc_ids, self.z), 1)
        np.add.at(n_zv, (self.z, self.tokens), 1)
        np.add.at(n_z, self.z, 1)
        return n_iz, n_zv, n_z


@dataclass
class TopicModel:
    n_topics: int
    vocab_size: int
    alpha: float
    eta: float
    theta: np.ndarray  # (n_albums, Z), rows sum to 1
    phi: np.ndarray    # (Z, V), rows sum to 1
    album_ids: list[str]
    assignments: np.ndarray | None = None     # final-sweep topic per position
    position_photo_ids: list[str] | None = None
    token_of_photo: dict[str, int] = field(default_factory=dict)

    def topic_posterior(self, token: int) -> np.ndarray:
        """p~(z|token): phi column normalized over topics."""
        col = self.phi[:, token]
        total = col.sum()
        if total <= 0.0:
            return np.full(self.n_topics, 1.0 / self.n_topics)
        return col / total

    def dominant_topic_of_token(self) -> np.ndarray:
        """argmax_z p~(z|v) per vocabulary entry (normalization cancels)."""
        return self.phi.argmax(axis=0)

    def dominant_topics(self) -> dict[str, int]:
        """Dominant topic per photo, via its token."""
        by_token = self.dominant_topic_of_token()
        return {pid: int(by_token[tok]) for pid, tok in self.token_of_photo.items()}


def fit_lda(
    tokenized: TokenizedCorpus,
    n_topics: int,
    alpha: float,
    eta: float,
    sweeps: int,
    burn_in: int,
    seed: int,
    thin: int = 10,
) -> TopicModel:
    """Collapsed Gibbs fit; theta/phi from thinned post-burn-in count averages.

    theta_i[z] = (n_iz + alpha) / (N_i + Z*alpha)
    phi_z[v]  = (n_zv + eta) / (n_z + V*eta)
    """
    if not (sweeps > burn_in >= 0):
        raise DataError(f"need sweeps > burn_in >= 0, got {sweeps}, {burn_in}")
    sampler = GibbsSampler(tokenized, n_topics, alpha, eta, seed)
    acc_iz = np.zeros_like(sampler.n_iz, dtype=np.float64)
    acc_zv = np.zeros_like(sampler.n_zv, dtype=np.float64)
    n_samples = 0
    for s in range(1, sweeps + 1):
        sampler.sweep()
        if s > burn_in and (s - burn_in - 1) % thin == 0:
            acc_iz += sampler.n_iz
            acc_zv += sampler.n_zv
            n_samples += 1
    acc_iz /= n_samples
    acc_zv /= n_samples

    doc_len = acc_iz.sum(axis=1)  # equals true N_i: every sample preserves totals
    theta = (acc_iz + alpha) / (doc_len[:, None] + n_topics * alpha)
    topic_mass = acc_zv.sum(axis=1)
    phi = (acc_zv + eta) / (topic_mass[:, None] + tokenized.vocab_size * eta)

    position_photo_ids = [p for pids in tokenized.doc_photo_ids for p in pids]
    return TopicModel(
        n_topics=n_topics,
        vocab_size=tokenized.vocab_size,
        alpha=alpha,
        eta=eta,
        theta=theta,
        phi=phi,
        album_ids=list(tokenized.album_ids),
        assignments=sampler.z.copy(),
        position_photo_ids=position_photo_ids,
        token_of_photo=dict(tokenized.token_of_photo),
    )


def fold_in_theta(model: TopicModel, tokens: list[int], iters: int = 20) -> np.ndarray:
    """Estimate a topic mixture for an unseen document, phi held fixed.

    Fixed-point EM on theta: responsibilities under the current mixture,
    then a smoothed re-estimate. Deterministic.
    """
    theta = np.full(model.n_topics, 1.0 / model.n_topics)
    cols = model.phi[:, tokens]  # (Z, N)
    for _ in range(iters):
        weighted = theta[:, None] * cols
        totals = weighted.sum(axis=0)
        totals[totals == 0.0] = 1.0
        resp = (weighted / totals).sum(axis=1)
        theta = (resp + model.alpha) / (len(tokens) + model.n_topics * model.alpha)
    return theta


def per_token_log_likelihood(
    model: TopicModel, doc_tokens: list[list[int]], theta_mode: str = "fold-in"
) -> float:
    """Mean log p(token) under the model.

    theta_mode "fit" scores the training documents with their fitted mixtures
    (doc order must match); "fold-in" estimates a mixture per held-out
    document with phi fixed.
    """
    if theta_mode == "fit":
        thetas = model.theta
        if len(doc_tokens) != thetas.shape[0]:
            raise DataError("fit mode requires the training document list")
    elif theta_mode == "fold-in":
        thetas = np.array(
            [
                fold_in_theta(model, doc)
                if doc
                else np.full(model.n_topics, 1.0 / model.n_topics)
                for doc in doc_tokens
            ]
        )
    else:
        raise DataError(f"unknown theta_mode {theta_mode!r}")
    total, count = 0.0, 0
    for i, doc in enumerate(doc_tokens):
        if not doc:
            continue
        probs = thetas[i] @ model.phi[:, doc]
        total += float(np.log(probs).sum())
        count += len(doc)
    if count == 0:
        raise DataError("no tokens to score")
    return total / count


# ---------------------------------------------------------------------------
# Topic detection and user community
# ---------------------------------------------------------------------------

@dataclass
class TopicSet:
    query_photo_id: str
    topics: set[int]
    threshold: float
    fallback: bool = False


def candidate_topics(
    model: TopicModel, query_token: int, threshold: float, query_photo_id: str = ""
) -> TopicSet:
    """Topics whose normalized posterior for the query token clears the threshold.

    Falls back to the argmax topic (flagged) when nothing clears it.
    """
    if not 0.0 < threshold < 1.0:
        raise DataError(f"threshold must be in (0, 1), got {threshold}")
    posterior = model.topic_posterior(query_token)
    topics = {int(z) for z in np.flatnonzero(posterior >= threshold)}
    if topics:
        return TopicSet(query_photo_id, topics, threshold, fallback=False)
    return TopicSet(
        query_photo_id, {int(posterior.argmax())}, threshold, fallback=True
    )


def related_users(corpus, model: TopicModel, topic_set: TopicSet) -> list[str]:
    """Users with at least one photo whose dominant topic is in the set.

    The query user is always included. Returns a sorted list for determinism.
    """
    if not topic_set.topics:
        raise DataError("empty topic set")
    dominant = model.dominant_topics()
    community = {
        rec.user_id
        for pid, rec in corpus.photos.items()
        if dominant.get(pid) in topic_set.topics
    }
    if topic_set.query_photo_id:
        community.add(corpus.photos[topic_set.query_photo_id].user_id)
    return sorted(community)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_topic_model(path, model: TopicModel, config_hash: str | None = None) -> None:
    """Header line ``Z V alpha eta`` then phi and theta as codec blocks."""
    with open(path, "wb") as fp:
        fp.write(
            f"{model.n_topics} {model.vocab_size} {model.alpha!r} {model.eta!r}\n".encode()
        )
        write_features(
            fp,
            FeatureSet(
                [f"z{z}" for z in range(model.n_topics)],
                model.phi.astype(np.float32),
            ),
        )
        write_features(
            fp,
            FeatureSet(list(model.album_ids), model.theta.astype(np.float32)),
            config_hash=config_hash,
        )


def load_topic_model(path) -> TopicModel:
    """Inverse of save_topic_model; assignments and tokens are not persisted."""
    with open(path, "rb") as fp:
        header = fp.readline().decode().split()
        if len(header) != 4:
            raise DataError("malformed topic model header")
        n_topics, vocab_size = int(header[0]), int(header[1])
        alpha, eta = float(header[2]), float(header[3])
        phi_set = read_features(fp)
        theta_set = read_features(fp)
    return TopicModel(
        n_topics=n_topics,
        vocab_size=vocab_size,
        alpha=alpha,
        eta=eta,
        theta=theta_set.values.astype(np.float64),
        phi=phi_set.values.astype(np.float64),
        album_ids=list(theta_set.photo_ids),
    )

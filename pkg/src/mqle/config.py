"""Pipeline configuration: flat key=value text, CLI flags override file values.

Defaults sit at the published operating point where one exists (K=40,
lambda=0.4, L=64, s=20, C=1000, G=256, n=100, beta=0.05, 70/10/20 split);
everything is overridable. The config hash stamped into artifacts is the
sha256 of the canonical key=value rendering.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from .errors import UsageError


@dataclass
class PipelineConfig:
    # paper-stated operating points
    expansion_k: int = 40          # K: multi-query set size
    topic_lambda: float = 0.4      # candidate-topic threshold
    latent_dim: int = 64           # L: matrix-factorization rank
    compact_s: int = 20            # s: compacted multi-query size
    pseudo_c: int = 1000           # C: pseudo-class count
    gmm_g: int = 256               # G: GMM components
    ranked_n: int = 100            # n: evaluation cutoff
    mf_reg: float = 0.05           # balance weight in the MF objective
    split_train: float = 0.7
    split_validation: float = 0.1
    split_test: float = 0.2
    queries_per_landmark: int = 20
    # values the published description leaves open
    topics_z: int = 20
    vocab_size: int = 256
    vocab_mode: str = "codebook"   # codebook | photo-id
    album_mode: str = "manifest"   # manifest | user | user-landmark
    lda_alpha: float = 0.0         # 0 -> 50/Z heuristic
    lda_eta: float = 0.01
    lda_sweeps: int = 500
    lda_burn_in: int = 200
    lda_thin: int = 10
    mf_lr0: float = 0.05
    mf_epochs: int = 60
    mf_neg_ratio: int = 1
    expand_mf_epochs: int = 20     # per-query community factorization
    hidden_h: int = 256
    embed_epochs: int = 30
    embed_lr0: float = 0.01
    embed_batch: int = 32
    embed_passthrough: bool = False
    pca_dim: int = 64
    gmm_max_iters: int = 200
    gmm_tol: float = 1e-6
    pool_mode: str = "fv"          # fv | average
    aqe_k: int = 10                # re-query depth for the AQE baseline
    seed: int = 0
    threads: int = 0               # 0 -> available cores

    @property
    def split_ratios(self) -> tuple[float, float, float]:
        return (self.split_train, self.split_validation, self.split_test)

    @property
    def alpha(self) -> float:
        return self.lda_alpha if self.lda_alpha > 0 else 50.0 / self.topics_z

    def validate(self) -> None:
        if self.pool_mode not in ("fv", "average"):
            raise UsageError(f"pool_mode: expected fv|average, got {self.pool_mode!r}")
        if self.vocab_mode not in ("codebook", "photo-id"):
            raise UsageError(
                f"vocab_mode: expected codebook|photo-id, got {self.vocab_mode!r}"
            )
        if self.album_mode not in ("manifest", "user", "user-landmark"):
            raise UsageError(f"album_mode: unknown value {self.album_mode!r}")
        if not 0 < self.topic_lambda < 1:
            raise UsageError(
                f"topic_lambda: must be in (0, 1), got {self.topic_lambda}"
            )
        positive = [
            "expansion_k", "latent_dim", "compact_s", "pseudo_c", "gmm_g",
            "ranked_n", "topics_z", "vocab_size", "lda_sweeps", "mf_epochs",
            "expand_mf_epochs", "hidden_h", "embed_epochs", "embed_batch",
            "pca_dim", "gmm_max_iters", "queries_per_landmark", "mf_neg_ratio",
            "aqe_k",
        ]
        for name in positive:
            if getattr(self, name) < 1:
                raise UsageError(f"{name}: must be >= 1")
        if self.lda_burn_in < 0 or self.lda_burn_in >= self.lda_sweeps:
            raise UsageError("lda_burn_in: need lda_sweeps > lda_burn_in >= 0")


def render(config: PipelineConfig) -> str:
    lines = [
        f"{f.name}={getattr(config, f.name)}" for f in dataclasses.fields(config)
    ]
    return "\n".join(lines) + "\n"


def config_hash(config: PipelineConfig) -> str:
    return hashlib.sha256(render(config).encode()).hexdigest()[:16]


def _coerce(name: str, kind, raw: str):
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise UsageError(f"config field {name!r}: cannot parse {raw!r} as {kind.__name__}")


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse key=value lines over a base config; '#' starts a comment."""
    config = dataclasses.replace(base) if base else PipelineConfig()
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise UsageError(f"config line {lineno}: unknown field {key!r}")
        kind = type(getattr(config, key))
        setattr(config, key, _coerce(key, kind, value.strip("'\"")))
    config.validate()
    return config


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fp:
        return parse_config(fp.read(), base)


def save_config(path, config: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(render(config))

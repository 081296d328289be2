"""Multi-query expansion landmark retrieval engine.

Pipeline: ingest a user/album/photo corpus, discover latent topics over user
albums, expand a (possibly biased) query photo into a multi-query set via
collaborative matrix factorization, learn a pseudo-class-supervised embedding,
aggregate the set with Fisher-vector encoding, rank the database, and score
the ranking with an AP/mAP harness.
"""

__version__ = "0.1.0"

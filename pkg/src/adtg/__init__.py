"""Task-structure learning from annotated demonstrations.

Builds action-succession task graphs, learns action embeddings as
pre-to-post-condition transformations, and uses them for per-second task
tracking, next-action recommendation, and beam-search plan generation.
"""

__version__ = "0.1.0"

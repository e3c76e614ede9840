"""Language-augmented multi-agent reinforcement learning on grid worlds."""

from ._lamarl import (
    GridEnv,
    Team,
    __version__,
    action_change,
    episode_seed,
    evaluate_success,
    read_embeddings,
    run_cli,
    silhouette_score,
)

__all__ = [
    "GridEnv",
    "Team",
    "action_change",
    "episode_seed",
    "evaluate_success",
    "read_embeddings",
    "run_cli",
    "silhouette_score",
]

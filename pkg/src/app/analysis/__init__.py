from src.app.analysis.attention_stats import (
    AttnStack,
    AttnStats,
    attn_distance,
    attn_entropy,
    collect_attention,
    compute_stats,
    relevance_frame,
    rollout,
    rollout_from_layers,
    stats_frame,
)

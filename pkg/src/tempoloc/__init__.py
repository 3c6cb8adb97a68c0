"""Timeline prompts, timestamped-output parsing and scoring, and
adaptive-reward group RL for audio temporal tasks."""

from .intervals import (
    Event,
    EventList,
    TaskKind,
    TimeInterval,
    intersect,
    normalize_label,
    union_length,
)
from .metrics import (
    MatchConfig,
    MetricReport,
    clip_miou,
    dac_metrics,
    eb_f1,
    eb_f1_corpus,
    grounding_metrics,
    iou,
    meteor_lite,
    recall_at,
)
from .parsers import (
    ParsedOutput,
    ParseError,
    ParseErrorKind,
    parse_ag,
    parse_dac,
    parse_output,
    parse_sed,
    serialize_ag,
    serialize_dac,
    serialize_output,
    serialize_sed,
)
from .prompts import (
    PromptSequence,
    TimestampToken,
    TimestampVocab,
    build_time_prompt,
    render_prompt,
)
from .embeddings import (
    CharTokenizer,
    EmbeddingTable,
    build_timestamp_embeddings,
    read_table,
    semantic_init,
    write_table,
)
from .rewards import (
    GroupRewardBundle,
    RewardConfig,
    adaptive_reward,
    grpo_advantages,
    sample_reward,
    score_group,
)
from .toy import (
    EnvConfig,
    Observation,
    PolicyParams,
    TrainReport,
    env_sample,
    init_policy,
    logprob_grad,
    policy_act,
    train,
)
from .rng import derive_rng

__version__ = "0.1.0"

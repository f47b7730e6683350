"""Dialogue relation extraction with extracted explanations.

The pipeline ranks relations for an entity pair, extracts a supporting
dialogue span per candidate relation, and re-ranks conditioned on each span;
the span policy trains from partial trigger supervision plus two
policy-gradient rewards.
"""

from .corpus import (
    DatasetSplit,
    Dialogue,
    DialogueExample,
    ModelInput,
    PairExample,
    RelationalTriple,
    TriggerSpan,
    align_trigger,
    build_input,
    load_dialogre,
    load_report,
    mask_span,
    pair_examples,
)
from .encoder import EncoderConfig, EncoderOutput, TinyEncoder, build_encoder
from .heads import (
    Explanation,
    RelationClassifier,
    RelationScores,
    SpanDistribution,
    SpanExtractor,
    classify,
    decode_explanation,
    joint_loss,
    relation_loss,
    span_distributions,
    span_loss,
)
from .metrics import (
    MetricReport,
    RankedPrediction,
    aggregate_runs,
    loo_metric,
    mrr,
    ranked_prediction,
    relation_f1,
    trigger_token_f1,
)
from .models import JointModel, RelationModel, SpanModel, load_model, save_model
from .schema import (
    DIALOGRE_SCHEMA,
    RelationSchema,
    UNANSWERABLE,
    relation_to_natural_language,
)
from .system import (
    DrexConfig,
    DrexSystem,
    drex_infer,
    drex_train_step,
    ensemble_probs,
    load_system,
    policy_gradient_loss,
    rerank_reward,
    save_system,
)

__version__ = "0.1.0"

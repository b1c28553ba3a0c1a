"""Sentiment-controlled neural dialogue generation.

Four model families over a shared recurrent substrate: a sentiment-context
seq2seq generator, its conditional-VAE extension, and adversarially trained
versions of both (a conditional discriminator scores generated triples and
the generator follows the policy gradient of that score). Includes the
deterministic synthetic verification corpus, evaluation metrics, a CLI, and
an HTTP inference service.
"""

from .autodiff import Tensor, finite_difference_check
from .config import ConfigError, TrainRunConfig, parse_config
from .corpus import (
    CorpusError,
    CorpusSplit,
    DialogueExample,
    SentimentLabel,
    Utterance,
    Vocabulary,
    build_vocabulary,
    generate_synthetic_corpus,
    load_corpus,
    load_emoji_table,
    map_emoji_to_sentiment,
    tokenize,
)
from .cvae import CvaeGenerator, DiagGaussian, kl_diag_gauss, reparameterize
from .discriminator import Discriminator, DiscriminatorDims
from .evaluation import (
    FULL_SCALE_REFERENCE,
    EvalReport,
    SentimentClassifier,
    corpus_perplexity,
    export_human_eval,
    import_human_eval,
    sentiment_accuracy,
    train_sentiment_classifier,
)
from .recurrent import (
    GruParams,
    OptimizerState,
    adam_update,
    attention_context,
    clip_gradients,
    encode_bidirectional,
    gru_step,
    load_checkpoint,
    save_checkpoint,
    softmax_cross_entropy,
)
from .seq2seq import GeneratorDims, Seq2SeqGenerator
from .trainer import (
    RewardRecord,
    TrainingDiverged,
    adversarial_train,
    pretrain_discriminator,
    pretrain_generator,
    reinforce_step,
    run_training,
    teacher_forcing_step,
    update_baseline,
)

__version__ = "0.1.0"

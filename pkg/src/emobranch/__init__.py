"""Two-branch multimodal speech emotion recognition engine.

One branch fuses audio features with per-frame word vectors; the other fuses
the sentence embeddings of neighboring dialogue utterances. Includes the
feature front end, a numpy gradient engine, training with a newbob schedule,
and a cross-validation evaluation harness.
"""
__version__ = "0.1.0"

from .audio import AudioSignal, read_wav, write_wav
from .autograd import Tensor
from .dataset import CorpusData, assemble_inputs, build_corpus, extract_audio25, extract_fbk250
from .errors import (EmobranchError, FormatError, InvalidAlignment, InvalidConfig,
                     InvalidInput, InvalidLabel, InvalidSpec, MissingData, ShapeError)
from .evaluation import (FoldPlan, LabelScheme, MetricReport, audit_folds,
                         compute_metrics, make_folds, map_labels)
from .experiments import CvReport, run_cv
from .features import (FeatureMatrix, FramingSpec, StreamTag, append_deltas,
                       extract_fbank, frame_signal, log_mel_fbank, normalize_features)
from .gradcheck import check_gradients
from .layers import (AttentionConfig, MarginConfig, affine, attention_penalty,
                     large_margin_softmax_loss, self_attentive_pool, tdnn_residual_block)
from .manifest import UtteranceRecord, read_manifest, write_manifest
from .model import (FusionConfig, ModelConfig, ModelInput, TabConfig, TsbConfig,
                    TwoBranchModel, model_loss)
from .pitch import PitchFrame, extract_pitch, track_pitch
from .textio import (ContextWindow, SentenceEmbeddingStore, WordAlignment,
                     WordEmbeddingTable, assemble_context, load_sentence_store,
                     load_word_table, words_to_frames)
from .training import NewbobState, TrainConfig, fit, newbob_step, train_epoch

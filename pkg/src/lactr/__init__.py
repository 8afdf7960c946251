"""Joint model of user interest, social attention, and item topics for
vote-based recommendation, with baselines, evaluation harness, and a
synthetic-data generator.
"""
from .errors import InputError, NumericError
from .corpus import (Corpus, Document, Vocabulary, build_vocabulary,
                     corpus_from_tokens, filter_activity)
from .social import (AttentionEdgeSet, FollowerGraph, SourceAttribution,
                     Vote, VoteLog, attribute_sources, build_attention_edges)
from .topics import TopicModel, fit_lda, responsibilities, update_beta
from .model import (Hyperparams, ModelState, RatingView, SweepRecord,
                    TrainTrace, log_likelihood, log_likelihood_terms, train)
from .baselines import CtrState, PairRatings, popularity_scores, train_ctr
from .evaluate import (EvalModel, ExperimentResult, FoldPlan, RecallCurve,
                       describe_user, predict_scores, recall_at_x,
                       register_model_kind, run_experiment, score_items)
from .synth import SynthConfig, SynthResult, generate
from .store import (load_bundle, load_model, load_topics, save_bundle,
                    save_model, save_topics)
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "AttentionEdgeSet", "Corpus", "CtrState", "Document", "EvalModel",
    "ExperimentResult", "FoldPlan", "FollowerGraph", "Hyperparams",
    "InputError", "ModelState", "NumericError", "PairRatings", "RatingView",
    "RecallCurve", "RunConfig", "SourceAttribution", "SweepRecord",
    "SynthConfig", "SynthResult", "TopicModel", "TrainTrace", "Vocabulary",
    "Vote", "VoteLog", "attribute_sources", "build_attention_edges",
    "build_vocabulary", "corpus_from_tokens", "describe_user",
    "filter_activity", "fit_lda", "generate", "load_bundle", "load_model",
    "load_topics", "log_likelihood", "log_likelihood_terms",
    "popularity_scores", "predict_scores", "recall_at_x",
    "register_model_kind", "responsibilities", "run_experiment",
    "save_bundle", "save_model", "save_topics", "score_items", "train",
    "train_ctr", "update_beta", "__version__",
]

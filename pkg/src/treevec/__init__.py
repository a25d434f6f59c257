"""Grammar-guided recursive variational autoencoder for syntax trees of a
small Python-like language, with latent-space analyses."""

from .grammar import (Grammar, GrammarError, SyntacticElement, Tree, leaf,
                      load_grammar, minipy, node, parse_tree, serialize_tree,
                      tree_size, validate)
from .frontend import FrontendError, SourceProgram, parse_program, tokenize
from .ted import ted, ted_oracle
from .autoencoder import (Model, ModelConfig, ModelError, decode,
                          decode_logprob, encode, grad, init_model, kl_term,
                          load, loss, save, train)
from .analysis import (AnalysisError, DynSys, GMMModel, PCAModel,
                       ProjectionModel, Trace, detect_outliers, dynsys_step,
                       embed, fit_dynsys, fit_gmm, fit_pca, fit_projection,
                       gmm_assign, gmm_logdensity, gmm_posterior,
                       predict_eval, prediction_errors, project, simulate,
                       stability_check)
from .corpus import (Corpus, CorpusError, TreeTrace, enumerate_trees,
                     growth_prefixes, kfold_by_student, load_traces,
                     min_completion, minipy_tree_of_size, synth_corpus,
                     synth_traces, unique_trees)
from .cli import cli_main

__version__ = "0.1.0"

"""Text-derived chemical element embeddings and sparse-property prediction."""

from .annotate import (
    AttributeTag,
    KeywordTagger,
    PromptSet,
    Summary,
    TaggedSentence,
    build_attribute_subsets,
    compose_local_input,
    summarize,
    tag_sentence,
)
from .corpus import ElementRecord, Sentence, load_corpus, segment_sentences
from .dataset import PropertyTable, SplitSpec, fit_standardizer, kfold, load_property_table, make_split
from .embed import (
    EmbeddingCache,
    EmbeddingVector,
    HashEmbeddingProvider,
    VariantDescriptor,
    aggregate_locals,
    embed_element,
    embed_text,
    hash_embed,
)
from .models import fit_linear, fit_mlp, fit_softmax, rank_features, rmse
from .ttt import TttConfig, TttResult, attention_backward, attention_forward, ttt_impute

__version__ = "0.1.0"

"""Supervised convex-sparse audio hashing for species classification."""

from .archetypes import (
    AaConfig,
    ArchetypalAnalysis,
    ArchetypalDictionary,
    ConcatenatedDictionary,
    encode,
    encode_batch,
    learn_dictionary,
    simplex_lstsq,
)
from .codes import (
    BloomConfig,
    ConvCode,
    EffectiveSet,
    MinHashPermutation,
    bloom_encode,
    effective_set,
    jaccard_bits,
    jaccard_sets,
    min_hash,
)
from .exceptions import ConvHashError, DataError, ModelFormatError
from .frontend import (
    AudioClip,
    CsfExtractor,
    CsfMatrix,
    ProjectionMatrix,
    SegmentList,
    Spectrogram,
    build_csf,
    compute_spectrogram,
    make_projection,
    segment_energy_fallback,
)
from .index import (
    DirectAddressTable,
    HashTable,
    VocalizationPrediction,
    build_direct_table,
    build_hash_table,
    classify_csf,
    classify_csf_minhash,
    classify_vocalization,
    kmedoids_jaccard,
)
from .model import ConvexHashClassifier

__version__ = "0.1.0"

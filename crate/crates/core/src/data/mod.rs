//! Dataset model, on-disk formats, label codecs, normalization,
//! augmentation, splits, and synthetic task generators.

pub mod augment;
pub mod codec;
pub mod dataset;
pub mod io;
pub mod synth;

pub use augment::{augment, load_synonyms, spell_label, PartOfSpeech, SynonymEntry, SynonymTable};
pub use codec::{default_phonetic_alphabet, encode_label, Representation};
pub use dataset::{
    apply_normalization, normalize_streams, split_dataset, split_indices, Dataset, Norms,
    SequenceRecord, SplitIndices, SIL,
};
pub use io::{load_dataset, load_embeddings, load_lexicon, save_dataset, DATASET_FORMAT_VERSION};
pub use synth::{gen_lissajous, gen_lissajous_dataset, gen_toy_grounding, toy_vocab};

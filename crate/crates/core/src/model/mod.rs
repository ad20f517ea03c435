//! The encoder-decoder transformer forecaster.

mod config;
mod positional;
mod transformer;

pub use config::TransformerConfig;
pub use positional::{positional_encoding, PositionalEncoding};
pub use transformer::{
    decoder_forward, embed, encoder_forward, ffn_forward, init_parameters, transformer_forward, DecoderBlock,
    EncoderBlock, FfnWeights, LayerNormWeights, Transformer, INPUT_PROJ, OUTPUT_BIAS, OUTPUT_PROJ, QUERY_TOKENS,
};

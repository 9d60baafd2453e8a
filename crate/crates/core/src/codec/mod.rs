//! Payload entropy coding and packet framing.
//!
//! A packet on the wire is
//!
//! ```text
//! 0x55 0xAA 0xC0 0xDE | Huffman-coded payload, zero-padded to a byte | Fletcher-32 (big-endian)
//! ```
//!
//! The payload carries exactly [`FrameLayout::symbol_count`] symbols (600 at
//! the default layout); there is no length field, the decoder stops after the
//! last symbol.
//!
//! [`FrameLayout::symbol_count`]: crate::filter::FrameLayout::symbol_count

mod bits;
mod fletcher;
mod huffman;
mod packet;

pub use bits::{BitReader, BitWriter, EncodedBits};
pub use fletcher::fletcher32;
pub use huffman::{build_dictionary, byte_histogram, huffman_decode, huffman_encode, HuffmanDictionary, HUF_MAGIC, MAX_CODE_LEN};
pub use packet::{deframe_stream, frame_packet, packet_bits, Deframer, DeframerStats, PREAMBLE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("cannot build a dictionary from an empty corpus")]
    EmptyCorpus,
    #[error("payload truncated after {decoded} of {expected} symbols")]
    Truncated { decoded: usize, expected: usize },
    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

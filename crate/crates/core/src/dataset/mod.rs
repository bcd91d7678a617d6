//! Audio decoding and dataset manifests.

pub mod manifest;
pub mod scan;
pub mod wav;

pub use manifest::{load_manifest, manifest_to_csv, parse_manifest, save_manifest, write_atomic, Manifest, ManifestEntry, Split};
pub use scan::{parse_diagnosis_listing, scan_dataset, Layout};
pub use wav::{decode_wav, encode_wav_f32, encode_wav_pcm16, read_wav, write_wav_pcm16, WavInfo};

//! On-disk dataset layout with lossless per-modality formats, sequence
//! metadata and a validating reader.

pub mod formats;
pub mod layout;
pub mod metadata;
pub mod reader;
pub mod writer;

pub use layout::{LayoutManifest, Modality, SequenceLayout, FORMAT_VERSION};
pub use metadata::{tick_time, write_ct_metadata, write_metadata, write_sequence_metadata, CameraParams, PoseRecord, Trajectory};
pub use reader::{read_sequence, validate_room, validate_sequence, Sequence, ValidationReport};
pub use writer::{quantize_bundle, write_frame, write_room_manifest, RoomManifest};

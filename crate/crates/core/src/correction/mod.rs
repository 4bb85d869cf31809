//! Segmentation from boxes and attention maps, and the rewrite of attention
//! logits that removes cross-object leakage.

mod cam;
mod correct;
mod otsu;
mod segment;

pub use cam::{resample_mean, resample_nearest, BlockCams, CamStack, ObjectTokens, TokenRoles, REFERENCE_SIZE};
pub use correct::{
    build_conflict_mask, correct_block, correct_stack, BlockCorrection, CorrectedStack, CorrectionRecord,
    CorrectionStats, SmoothSchedule, SCALE_GUARD, SCALE_MAX, SCALE_MIN,
};
pub use otsu::{compare_fractions, otsu, otsu_bin, otsu_bin_edge, split_score, OTSU_BINS};
pub use segment::{channel_mean, segment, ObjectMask, SegmentationSet};

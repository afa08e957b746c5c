//! Detector construction: boxes, anchors, fusion graphs, proposals and heads.

pub mod anchors;
pub mod bbox;
pub mod config;
pub mod head;
pub mod labels;
pub mod model;
pub mod rpn;

pub use anchors::{generate_anchors, Anchor, PEDESTRIAN_RATIOS};
pub use bbox::{decode_bbox, encode_bbox, iou, BBox};
pub use config::{DetectorConfig, FusionStage, FEATURE_STRIDE};
pub use head::{detection_head_forward, score_boxes, HEAD_DELTA_STDS};
pub use labels::{assign_proposal_labels, ProposalLabel, POSITIVE_IOU};
pub use model::{build_detector, DetectorModel, Features, Frame, LayerInfo, Modality};
pub use rpn::{proposals_from_maps, rpn_forward, Proposal};

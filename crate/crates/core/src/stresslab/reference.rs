//! Reference results reported for the released 1024x1024 face model.
//!
//! These numbers require that model's weights and are NOT reproducible with
//! the toy generator; they ship as metadata so desk-scale reports can be
//! read side by side with the published ones. Loss values carry the
//! conventional 1e5 factor.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub condition: &'static str,
    pub loss_x1e5: f64,
    pub dist_to_mean: f64,
}

/// Affine-transform stress results (translation in pixels at 1024).
pub const AFFINE_TABLE: &[ReferenceRow] = &[
    ReferenceRow { condition: "translate_right_140", loss_x1e5: 0.782, dist_to_mean: 48.56 },
    ReferenceRow { condition: "translate_left_160", loss_x1e5: 0.406, dist_to_mean: 44.12 },
    ReferenceRow { condition: "zoom_out_2x", loss_x1e5: 0.225, dist_to_mean: 38.04 },
    ReferenceRow { condition: "zoom_in_2x", loss_x1e5: 0.718, dist_to_mean: 40.55 },
    ReferenceRow { condition: "rotate_90", loss_x1e5: 0.622, dist_to_mean: 47.21 },
    ReferenceRow { condition: "rotate_180", loss_x1e5: 0.599, dist_to_mean: 42.93 },
];

/// Defective-image stress results.
pub const DEFECT_TABLE: &[ReferenceRow] = &[
    ReferenceRow { condition: "non_defective", loss_x1e5: 0.204, dist_to_mean: 29.19 },
    ReferenceRow { condition: "eyes", loss_x1e5: 0.271, dist_to_mean: 34.90 },
    ReferenceRow { condition: "nose", loss_x1e5: 0.311, dist_to_mean: 39.20 },
    ReferenceRow { condition: "mouth", loss_x1e5: 0.301, dist_to_mean: 37.04 },
    ReferenceRow { condition: "eyes_and_mouth", loss_x1e5: 0.233, dist_to_mean: 39.62 },
    ReferenceRow { condition: "eyes_nose_and_mouth", loss_x1e5: 0.285, dist_to_mean: 37.59 },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitReferenceRow {
    pub class: &'static str,
    pub init: &'static str,
    pub loss_x1e5: f64,
    pub dist_to_mean: f64,
}

/// Initialization comparison (mean style vector vs uniform random).
pub const INIT_TABLE: &[InitReferenceRow] = &[
    InitReferenceRow { class: "face", init: "mean", loss_x1e5: 0.309, dist_to_mean: 30.67 },
    InitReferenceRow { class: "face", init: "random", loss_x1e5: 0.351, dist_to_mean: 35.60 },
    InitReferenceRow { class: "cat", init: "mean", loss_x1e5: 0.752, dist_to_mean: 70.86 },
    InitReferenceRow { class: "cat", init: "random", loss_x1e5: 0.740, dist_to_mean: 70.97 },
    InitReferenceRow { class: "dog", init: "mean", loss_x1e5: 0.922, dist_to_mean: 74.78 },
    InitReferenceRow { class: "dog", init: "random", loss_x1e5: 0.845, dist_to_mean: 75.14 },
    InitReferenceRow { class: "painting", init: "mean", loss_x1e5: 3.530, dist_to_mean: 103.61 },
    InitReferenceRow { class: "painting", init: "random", loss_x1e5: 3.451, dist_to_mean: 105.29 },
    InitReferenceRow { class: "car", init: "mean", loss_x1e5: 1.390, dist_to_mean: 82.53 },
    InitReferenceRow { class: "car", init: "random", loss_x1e5: 1.269, dist_to_mean: 82.60 },
];

//! Per-keypoint standard deviations for the 133-point whole-body layout,
//! as published with the COCO-WholeBody evaluation toolkit
//! (`sigmas_wholebody` in xtcocotools). Order: 17 body, 6 foot, 68 face,
//! 21 left hand, 21 right hand.

use crate::geometry::NUM_KEYPOINTS;

const BODY: [f64; 17] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089,
    0.089,
];

const FOOT: [f64; 6] = [0.068, 0.066, 0.066, 0.092, 0.094, 0.094];

const FACE: [f64; 68] = [
    0.042, 0.043, 0.044, 0.043, 0.040, 0.035, 0.031, 0.025, 0.020, 0.023, 0.029, 0.032, 0.037, 0.038, 0.043, 0.041,
    0.045, 0.013, 0.012, 0.011, 0.011, 0.012, 0.012, 0.011, 0.011, 0.013, 0.015, 0.009, 0.007, 0.007, 0.007, 0.012,
    0.009, 0.008, 0.016, 0.010, 0.017, 0.011, 0.009, 0.011, 0.009, 0.007, 0.013, 0.008, 0.011, 0.012, 0.010, 0.034,
    0.008, 0.008, 0.009, 0.008, 0.008, 0.007, 0.010, 0.008, 0.009, 0.009, 0.009, 0.007, 0.007, 0.008, 0.011, 0.008,
    0.008, 0.008, 0.01, 0.008,
];

const HAND: [f64; 21] = [
    0.029, 0.022, 0.035, 0.037, 0.047, 0.026, 0.025, 0.024, 0.035, 0.018, 0.024, 0.022, 0.026, 0.017, 0.021, 0.021,
    0.032, 0.02, 0.019, 0.022, 0.031,
];

pub const WHOLEBODY_SIGMAS: [f64; NUM_KEYPOINTS] = {
    let mut out = [0.0; NUM_KEYPOINTS];
    let mut i = 0;
    while i < NUM_KEYPOINTS {
        out[i] = if i < 17 {
            BODY[i]
        } else if i < 23 {
            FOOT[i - 17]
        } else if i < 91 {
            FACE[i - 23]
        } else if i < 112 {
            HAND[i - 91]
        } else {
            HAND[i - 112]
        };
        i += 1;
    }
    out
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        assert_eq!(BODY.len() + FOOT.len() + FACE.len() + 2 * HAND.len(), NUM_KEYPOINTS);
        assert_eq!(WHOLEBODY_SIGMAS[0], 0.026);
        assert_eq!(WHOLEBODY_SIGMAS[22], 0.094);
        assert_eq!(WHOLEBODY_SIGMAS[23], 0.042);
        assert_eq!(WHOLEBODY_SIGMAS[91], 0.029);
        assert_eq!(WHOLEBODY_SIGMAS[132], 0.031);
        assert!(WHOLEBODY_SIGMAS.iter().all(|&s| s > 0.0 && s < 0.2));
    }
}

use crate::surface::DepthRange;

/// Tracking parameters. Angles are radians.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Weight of the photometric system relative to the geometric one, in `[0, 1]`.
    pub lambda_photo: f64,
    /// Gauss-Newton iterations per pyramid level, coarsest first.
    pub iters_per_level: Vec<usize>,
    /// Largest accepted point distance of a correspondence, meters.
    pub dist_reject: f64,
    /// Largest accepted normal angle of a correspondence, radians.
    pub angle_reject: f64,
    /// Huber threshold on point-to-plane residuals, meters.
    pub huber_delta: f64,
    /// Initial Levenberg-Marquardt damping relative to the largest diagonal entry.
    pub lm_tau: f64,
    /// Correspondences required at the finest level.
    pub min_correspondences: usize,
    /// Predicted and live depths at a photometric sample must agree this well, meters.
    pub photo_depth_gate: f64,
    /// Largest accepted motion between the previous and the new pose.
    pub max_translation_jump: f64,
    pub max_rotation_jump: f64,
    pub depth_range: DepthRange,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda_photo: 0.1,
            iters_per_level: vec![10, 5, 4],
            dist_reject: 0.10,
            angle_reject: 20f64.to_radians(),
            huber_delta: 0.05,
            lm_tau: 1e-4,
            min_correspondences: 500,
            photo_depth_gate: 0.05,
            max_translation_jump: 0.5,
            max_rotation_jump: 30f64.to_radians(),
            depth_range: DepthRange::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.lambda_photo) {
            return Err(format!("lambda_photo {} outside [0, 1]", self.lambda_photo));
        }
        if self.iters_per_level.is_empty() || self.iters_per_level.contains(&0) {
            return Err("iters_per_level needs at least one positive count".into());
        }
        let positive = [
            ("dist_reject", self.dist_reject),
            ("angle_reject", self.angle_reject),
            ("huber_delta", self.huber_delta),
            ("lm_tau", self.lm_tau),
            ("photo_depth_gate", self.photo_depth_gate),
            ("max_translation_jump", self.max_translation_jump),
            ("max_rotation_jump", self.max_rotation_jump),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.min_correspondences == 0 {
            return Err("min_correspondences must be positive".into());
        }
        if !(self.depth_range.near > 0.0 && self.depth_range.far > self.depth_range.near) {
            return Err("depth range needs 0 < near < far".into());
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.iters_per_level.len()
    }
}

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::orders::{covers_all_pairs, GridShape, ScanOrder};

/// Hyperparameters of the toy cross-scan model.
/// Missing fields in a serialized config take their default values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Pixels per image side.
    pub image_size: usize,
    /// Pixels per patch side.
    pub patch_size: usize,
    /// Token width per stage.
    pub channels: Vec<usize>,
    /// SSM state size.
    pub state_dim: usize,
    pub blocks_per_stage: Vec<usize>,
    /// Scan routes used by every block.
    pub routes: Vec<ScanOrder>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 4,
            channels: vec![16, 32],
            state_dim: 4,
            blocks_per_stage: vec![2, 2],
            routes: ScanOrder::CROSS_SCAN.to_vec(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn stage_count(&self) -> usize {
        self.blocks_per_stage.len()
    }

    /// Patch grid side at stage 0.
    pub fn base_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Patch grid at `stage`; only meaningful on a validated config.
    pub fn stage_grid(&self, stage: usize) -> GridShape {
        let side = self.base_side() >> stage;
        GridShape::square(side).expect("validated config has nonempty grids")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.image_size == 0 || self.patch_size == 0 {
            return invalid("image_size and patch_size must be positive".into());
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return invalid(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.blocks_per_stage.is_empty() {
            return invalid("blocks_per_stage must list at least one stage".into());
        }
        if self.blocks_per_stage.contains(&0) {
            return invalid("every stage needs at least one block".into());
        }
        if self.channels.len() != self.blocks_per_stage.len() {
            return invalid(format!(
                "channels lists {} stages but blocks_per_stage lists {}",
                self.channels.len(),
                self.blocks_per_stage.len()
            ));
        }
        if self.channels.contains(&0) {
            return invalid("channel widths must be positive".into());
        }
        if self.state_dim == 0 {
            return invalid("state_dim must be positive".into());
        }
        let side = self.base_side();
        let last = self.stage_count() - 1;
        if last >= usize::BITS as usize || !side.is_multiple_of(1 << last) || side >> last == 0 {
            return invalid(format!(
                "patch grid side {side} cannot be halved {last} times to an integer grid"
            ));
        }
        if self.routes.is_empty() {
            return invalid("routes must be nonempty".into());
        }
        for stage in 0..self.stage_count() {
            let grid = self.stage_grid(stage);
            for &route in &self.routes {
                route
                    .supports(grid)
                    .map_err(|e| ModelError::InvalidConfig(format!("stage {stage}: {e}")))?;
            }
            if !covers_all_pairs(&self.routes, grid)? {
                return invalid(format!(
                    "routes {:?} do not cover every ordered patch pair on the stage-{stage} {grid} grid",
                    self.routes.iter().map(|r| r.name()).collect::<Vec<_>>()
                ));
            }
        }
        Ok(())
    }
}

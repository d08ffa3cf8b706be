//! Versioned JSON checkpoints of the full model state. Integer fields
//! round-trip bit-exactly; floats use shortest round-trip formatting and
//! restore to identical values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ModelState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    state: ModelState,
}

pub fn save(state: &ModelState, path: &Path) -> Result<()> {
    let doc = Checkpoint {
        version: CHECKPOINT_VERSION,
        state: state.clone(),
    };
    let json = serde_json::to_string(&doc).expect("state serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::Manifest(format!(
            "checkpoint version {} unsupported (expected {})",
            doc.version, CHECKPOINT_VERSION
        )));
    }
    Ok(doc.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer;
    use crate::types::{HyperParams, MultiViewChunk, ViewSpec};
    use ndarray::Array2;

    #[test]
    fn checkpoint_round_trip_restores_identical_state_and_stream() {
        let views = vec![ViewSpec::new(0, 4, "a"), ViewSpec::new(1, 3, "b")];
        let mut params = HyperParams::defaults(2, 2);
        params.chunk_size = 5;
        params.kernel_bandwidth = crate::types::BandwidthPolicy::Fixed(1.0);
        params.max_inner_iters = 10;
        let mut state = ModelState::new(params, views).unwrap();

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut chunks = Vec::new();
        for t in 1..=3 {
            chunks.push(MultiViewChunk {
                t,
                rows: 5,
                per_view: vec![
                    Array2::from_shape_fn((5, 4), |_| rng.random::<f64>()),
                    Array2::from_shape_fn((5, 3), |_| rng.random::<f64>()),
                ],
                labels: None,
            });
        }
        optimizer::process_chunk(&mut state, &chunks[0]).unwrap();
        optimizer::process_chunk(&mut state, &chunks[1]).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save(&state, &path).unwrap();
        let mut restored = load(&path).unwrap();
        assert_eq!(state, restored);

        // the restored state continues the stream identically
        optimizer::process_chunk(&mut state, &chunks[2]).unwrap();
        optimizer::process_chunk(&mut restored, &chunks[2]).unwrap();
        assert_eq!(state, restored);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let views = vec![ViewSpec::new(0, 2, "a")];
        let state = ModelState::new(HyperParams::defaults(1, 1), views).unwrap();
        let doc = Checkpoint { version: 99, state };
        std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        assert!(load(&path).is_err());
    }
}

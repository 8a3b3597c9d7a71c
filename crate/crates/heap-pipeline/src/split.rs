use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::{PipelineError, ProtocolParams};

/// Index bookkeeping for one dataset: which steps train the autoencoder,
/// which are held out, and which consecutive-pair starts train the predictor.
/// All indices are absolute trajectory positions at or past the transient
/// cutoff; dev sets are random samples disjoint from their training sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub transient_cutoff: usize,
    pub ae_train: Vec<usize>,
    pub ae_dev: Vec<usize>,
    pub pair_train: Vec<usize>,
    pub pair_dev: Vec<usize>,
    pub split_seed: u64,
}

pub fn make_split(
    traj_len: usize,
    protocol: &ProtocolParams,
    seed: u64,
) -> Result<DatasetSplit, PipelineError> {
    protocol.validate_for(traj_len)?;
    let cutoff = protocol.transient_cutoff;

    let mut steps: Vec<usize> = (cutoff..traj_len).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    steps.shuffle(&mut rng);
    let ae_dev: Vec<usize> = steps[..protocol.ae_dev].to_vec();
    let ae_train: Vec<usize> = steps[protocol.ae_dev..protocol.ae_dev + protocol.ae_train].to_vec();

    // Pair starts i use (i, i+1); a separate stream keeps the two samplings
    // independent of each other's sizes.
    let mut starts: Vec<usize> = (cutoff..traj_len - 1).collect();
    let mut rng2 = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    starts.shuffle(&mut rng2);
    let pair_dev: Vec<usize> = starts[..protocol.pair_dev].to_vec();
    let pair_train: Vec<usize> =
        starts[protocol.pair_dev..protocol.pair_dev + protocol.pair_train].to_vec();

    Ok(DatasetSplit {
        transient_cutoff: cutoff,
        ae_train,
        ae_dev,
        pair_train,
        pair_dev,
        split_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Scale;

    #[test]
    fn deterministic_and_disjoint() {
        let p = Scale::Desk.params();
        let a = make_split(1200, &p, 5).unwrap();
        let b = make_split(1200, &p, 5).unwrap();
        assert_eq!(a, b);
        let c = make_split(1200, &p, 6).unwrap();
        assert_ne!(a.ae_train, c.ae_train);

        assert_eq!(a.ae_train.len(), 900);
        assert_eq!(a.ae_dev.len(), 100);
        assert!(a.ae_train.iter().all(|i| !a.ae_dev.contains(i)));
        assert!(a.ae_train.iter().chain(&a.ae_dev).all(|&i| i >= 200 && i < 1200));
        assert!(a.pair_train.iter().all(|i| !a.pair_dev.contains(i)));
        assert!(a.pair_train.iter().chain(&a.pair_dev).all(|&i| i >= 200 && i + 1 < 1200));
    }

    #[test]
    fn full_scale_sizes() {
        let p = Scale::Paper.params();
        let s = make_split(4800, &p, 0).unwrap();
        assert_eq!(s.ae_train.len(), 4000);
        assert_eq!(s.ae_dev.len(), 300);
        assert_eq!(s.ae_train.len() + s.ae_dev.len(), 4300);
        assert_eq!(s.pair_train.len(), 4000);
    }

    #[test]
    fn too_short_rejected() {
        let p = Scale::Desk.params();
        assert!(make_split(800, &p, 0).is_err());
    }
}

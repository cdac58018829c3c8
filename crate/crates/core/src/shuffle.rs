//! Seeded permutation primitives.
//!
//! Every permutation drawn by the engines comes from its own [`RngStream`],
//! addressed by `(master_seed, stream_index)`. Results therefore do not
//! depend on how iterations are scheduled across threads.
//!
//! A restricted shuffle permutes values only within the strata defined by a
//! confounder: each stratum's multiset is preserved. A standard shuffle
//! permutes freely.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Address of an independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Derives a child seed from a parent seed and a tag (SplitMix64 finalizer).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Row indices grouped by stratum, strata in ascending code order and rows
/// in ascending index order within each stratum.
pub fn strata(codes: &[u32]) -> Vec<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &c) in codes.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    groups.into_values().collect()
}

/// A permutation that maps each stratum's index set onto itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestrictedPermutation {
    /// `out[i] = y[perm[i]]`.
    pub perm: Vec<usize>,
    pub strata: Vec<Vec<usize>>,
}

impl RestrictedPermutation {
    /// Draws a uniformly random restricted permutation.
    pub fn sample<R: rand::Rng + ?Sized>(codes: &[u32], rng: &mut R) -> Self {
        let strata = strata(codes);
        let mut perm: Vec<usize> = (0..codes.len()).collect();
        for group in &strata {
            let mut shuffled = group.clone();
            shuffled.shuffle(rng);
            for (&dst, &src) in group.iter().zip(&shuffled) {
                perm[dst] = src;
            }
        }
        Self { perm, strata }
    }

    /// True if every stratum is mapped onto itself bijectively.
    pub fn is_valid(&self) -> bool {
        let n = self.perm.len();
        let mut seen = vec![false; n];
        for group in &self.strata {
            let members: std::collections::HashSet<usize> = group.iter().copied().collect();
            for &i in group {
                let j = self.perm[i];
                if j >= n || !members.contains(&j) || seen[j] {
                    return false;
                }
                seen[j] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn apply<T: Clone>(&self, y: &[T]) -> Vec<T> {
        self.perm.iter().map(|&j| y[j].clone()).collect()
    }
}

/// Index permutation drawn uniformly within each stratum of `codes`.
pub fn restricted_permutation<R: rand::Rng + ?Sized>(codes: &[u32], rng: &mut R) -> Vec<usize> {
    RestrictedPermutation::sample(codes, rng).perm
}

/// Index permutation drawn uniformly over all `n!` orderings.
pub fn standard_permutation<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Shuffles `y` within the levels of `c`.
pub fn restricted_shuffle<T: Clone>(y: &[T], c: &[u32], stream: RngStream) -> Result<Vec<T>> {
    check_len(y.len(), c.len())?;
    let mut rng = stream.rng();
    Ok(RestrictedPermutation::sample(c, &mut rng).apply(y))
}

/// Shuffles `y` freely.
pub fn standard_shuffle<T: Clone>(y: &[T], stream: RngStream) -> Result<Vec<T>> {
    if y.is_empty() {
        return Err(Error::InvalidParameter("cannot shuffle an empty vector".into()));
    }
    let mut rng = stream.rng();
    let perm = standard_permutation(y.len(), &mut rng);
    Ok(perm.iter().map(|&j| y[j].clone()).collect())
}

/// Number of distinct restricted index permutations, `prod_s n_s!`,
/// saturating at `u128::MAX`.
pub fn count_restricted(c: &[u32]) -> u128 {
    strata(c).iter().fold(1u128, |acc, g| {
        (1..=g.len() as u128).fold(acc, |a, k| a.saturating_mul(k))
    })
}

/// Every restricted index permutation of `c`, each exactly once.
pub fn enumerate_restricted_permutations(c: &[u32], cap: u128) -> Result<Vec<Vec<usize>>> {
    let count = count_restricted(c);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let groups = strata(c);
    let per_stratum: Vec<Vec<Vec<usize>>> = groups
        .iter()
        .map(|g| g.iter().copied().permutations(g.len()).collect())
        .collect();
    let mut out = Vec::with_capacity(count as usize);
    for choice in per_stratum.iter().map(|v| v.iter()).multi_cartesian_product() {
        let mut perm: Vec<usize> = (0..c.len()).collect();
        for (group, images) in groups.iter().zip(choice) {
            for (&dst, &src) in group.iter().zip(images) {
                perm[dst] = src;
            }
        }
        out.push(perm);
    }
    // multi_cartesian_product yields nothing for zero strata
    if groups.is_empty() {
        out.push(Vec::new());
    }
    Ok(out)
}

/// Every restricted rearrangement of `y` (distinct as index permutations).
pub fn enumerate_restricted<T: Clone>(y: &[T], c: &[u32], cap: u128) -> Result<Vec<Vec<T>>> {
    check_len(y.len(), c.len())?;
    Ok(enumerate_restricted_permutations(c, cap)?
        .into_iter()
        .map(|p| p.iter().map(|&j| y[j].clone()).collect())
        .collect())
}

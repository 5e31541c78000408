//! Three-phase blending curriculum: `m` epochs on the full auxiliary set plus
//! the target split, `n` epochs with a shrinking auxiliary sample, `k` epochs
//! on the target split alone.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Record;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayLaw {
    /// `round(n_ours · f^i)` for phase-2 epoch `i` (1-based).
    #[default]
    Geometric,
    /// `round(n_ours · max(0, 1 − i·(1 − f)))`.
    Linear,
}

impl std::str::FromStr for DecayLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(DecayLaw::Geometric),
            "linear" => Ok(DecayLaw::Linear),
            other => Err(Error::invalid(format!("unknown decay law {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendPlan {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub blend_factor: f64,
    pub decay: DecayLaw,
    pub n_ours: usize,
    pub n_target: usize,
    pub per_epoch_aux_counts: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochManifest {
    pub epoch: usize,
    pub aux_ids: Vec<String>,
    pub include_target: bool,
}

impl Record for EpochManifest {
    fn record_id(&self) -> String {
        format!("epoch {}", self.epoch)
    }
}

fn phase_two_count(law: DecayLaw, n_ours: usize, f: f64, i: usize) -> usize {
    let scale = match law {
        DecayLaw::Geometric => f.powi(i as i32),
        DecayLaw::Linear => (1.0 - i as f64 * (1.0 - f)).max(0.0),
    };
    (n_ours as f64 * scale).round() as usize
}

pub fn make_plan(
    m: usize,
    n: usize,
    k: usize,
    blend_factor: f64,
    n_ours: usize,
    n_target: usize,
    seed: u64,
) -> Result<BlendPlan> {
    make_plan_with(m, n, k, blend_factor, DecayLaw::Geometric, n_ours, n_target, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn make_plan_with(
    m: usize,
    n: usize,
    k: usize,
    blend_factor: f64,
    decay: DecayLaw,
    n_ours: usize,
    n_target: usize,
    seed: u64,
) -> Result<BlendPlan> {
    if !(0.0..=1.0).contains(&blend_factor) {
        return Err(Error::invalid(format!(
            "blend factor must be in [0, 1], got {blend_factor}"
        )));
    }
    let mut counts = vec![n_ours; m];
    counts.extend((1..=n).map(|i| phase_two_count(decay, n_ours, blend_factor, i)));
    counts.extend(std::iter::repeat_n(0, k));
    Ok(BlendPlan {
        m,
        n,
        k,
        blend_factor,
        decay,
        n_ours,
        n_target,
        per_epoch_aux_counts: counts,
        seed,
    })
}

impl BlendPlan {
    pub fn epochs(&self) -> usize {
        self.m + self.n + self.k
    }

    pub fn check_invariants(&self) -> Result<()> {
        let c = &self.per_epoch_aux_counts;
        let fail = |msg: &str| Err(Error::Invariant(format!("blend plan: {msg}")));
        if c.len() != self.epochs() {
            return fail("count list length differs from m+n+k");
        }
        if c[..self.m].iter().any(|&x| x != self.n_ours) {
            return fail("phase 1 does not use the full auxiliary set");
        }
        if c[self.m..self.m + self.n].windows(2).any(|w| w[1] > w[0]) {
            return fail("phase 2 counts increase");
        }
        if c[self.m + self.n..].iter().any(|&x| x != 0) {
            return fail("phase 3 includes auxiliary instances");
        }
        if c.iter().any(|&x| x > self.n_ours) {
            return fail("count exceeds the auxiliary set");
        }
        Ok(())
    }

    /// Epoch, aux count, target count, total.
    pub fn render_table(&self) -> String {
        let rows: Vec<[String; 4]> = self
            .per_epoch_aux_counts
            .iter()
            .enumerate()
            .map(|(e, &a)| {
                [
                    e.to_string(),
                    a.to_string(),
                    self.n_target.to_string(),
                    (a + self.n_target).to_string(),
                ]
            })
            .collect();
        let header = ["epoch", "aux", "target", "total"].map(String::from);
        let widths: Vec<usize> = (0..4)
            .map(|c| {
                rows.iter()
                    .chain(std::iter::once(&header))
                    .map(|r| r[c].len())
                    .max()
                    .unwrap()
            })
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&rows) {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:>w$}"))
                .collect();
            writeln!(out, "{}", cells.join("  ")).unwrap();
        }
        out
    }
}

/// Samples each epoch's auxiliary ids without replacement, seeding epoch `e`
/// with `plan.seed + e`. Ids within a manifest are sorted.
pub fn emit_manifests(plan: &BlendPlan, aux_ids: &[String]) -> Result<Vec<EpochManifest>> {
    if aux_ids.len() != plan.n_ours {
        return Err(Error::invalid(format!(
            "plan expects {} auxiliary ids, got {}",
            plan.n_ours,
            aux_ids.len()
        )));
    }
    let mut seen = HashSet::with_capacity(aux_ids.len());
    if let Some(dup) = aux_ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::invalid(format!("duplicate auxiliary id {dup:?}")));
    }
    let mut universe = aux_ids.to_vec();
    universe.sort();
    plan.per_epoch_aux_counts
        .iter()
        .enumerate()
        .map(|(epoch, &count)| {
            if count > universe.len() {
                return Err(Error::invalid(format!(
                    "epoch {epoch} needs {count} ids from a universe of {}",
                    universe.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed.wrapping_add(epoch as u64));
            let mut picks = index::sample(&mut rng, universe.len(), count).into_vec();
            picks.sort_unstable();
            Ok(EpochManifest {
                epoch,
                aux_ids: picks.into_iter().map(|i| universe[i].clone()).collect(),
                include_target: true,
            })
        })
        .collect()
}

//! Random SMSM instances with binary item states.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Objective, SmsmInstance, StateOutcome};
use crate::diffusion::sample_rng;

const COVERAGE_ELEMENTS: usize = 3;

/// The built-in objective families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Modular,
    CappedSum,
    Coverage,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 3] = [
        ObjectiveKind::Modular,
        ObjectiveKind::CappedSum,
        ObjectiveKind::Coverage,
    ];
}

// Values on a 0.25 grid keep instance JSON short and exact.
fn grid(rng: &mut impl Rng, lo: u32, hi: u32) -> f64 {
    rng.gen_range(lo..=hi) as f64 / 4.0
}

/// n items, each with two states: a low one (0 half of the time) and a
/// strictly higher one.
pub fn random_instance(rng: &mut impl Rng, n: usize, k: usize, kind: ObjectiveKind) -> SmsmInstance {
    let items = (0..n)
        .map(|_| {
            let low = if rng.gen_bool(0.5) { 0.0 } else { grid(rng, 1, 4) };
            let high = low + grid(rng, 2, 12);
            let q = rng.gen_range(1..=9) as f64 / 10.0;
            vec![
                StateOutcome {
                    value: low,
                    prob: 1.0 - q,
                },
                StateOutcome { value: high, prob: q },
            ]
        })
        .collect::<Vec<_>>();
    let objective = match kind {
        ObjectiveKind::Modular => Objective::Modular {
            weights: (0..n).map(|_| grid(rng, 2, 8)).collect(),
        },
        ObjectiveKind::CappedSum => {
            let weights: Vec<f64> = (0..n).map(|_| grid(rng, 2, 6)).collect();
            let top: f64 = weights.iter().zip(&items).map(|(w, l)| w * l[1].value).sum();
            let cap = (top * rng.gen_range(2..=6) as f64 / 10.0 * 4.0).round() / 4.0;
            Objective::CappedSum {
                cap,
                weights: Some(weights),
            }
        }
        ObjectiveKind::Coverage => Objective::Coverage {
            weights: (0..n)
                .map(|_| {
                    (0..COVERAGE_ELEMENTS)
                        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { grid(rng, 1, 4) })
                        .collect()
                })
                .collect(),
            caps: (0..COVERAGE_ELEMENTS).map(|_| grid(rng, 2, 10)).collect(),
        },
    };
    SmsmInstance::new(k, objective, items).expect("valid by construction")
}

/// `count` instances cycling through the three families and k ∈ {2, 3},
/// with n drawn from k..=5. Instance `i` depends only on (`seed`, `i`).
pub fn random_suite(count: usize, seed: u64) -> Vec<SmsmInstance> {
    (0..count)
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let kind = ObjectiveKind::ALL[i % 3];
            let k = 2 + (i / 3) % 2;
            let n = rng.gen_range(k..=5);
            random_instance(&mut rng, n, k, kind)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_shape_and_determinism() {
        let a = random_suite(12, 3);
        assert_eq!(a, random_suite(12, 3));
        assert_ne!(a, random_suite(12, 4));
        for (i, inst) in a.iter().enumerate() {
            assert!(inst.n <= 5 && inst.k <= inst.n && (2..=3).contains(&inst.k));
            assert!(inst.items.iter().all(|l| l.len() == 2 && l[0].value < l[1].value));
            let kind = match inst.objective {
                Objective::Modular { .. } => ObjectiveKind::Modular,
                Objective::CappedSum { .. } => ObjectiveKind::CappedSum,
                Objective::Coverage { .. } => ObjectiveKind::Coverage,
            };
            assert_eq!(kind, ObjectiveKind::ALL[i % 3]);
        }
    }
}

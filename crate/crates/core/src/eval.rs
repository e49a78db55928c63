//! Classifier-agnostic evaluation and a nearest-neighbour separability probe.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::Sample;

/// Distance floor for inverse-distance weights, so exact duplicates get a
/// finite (dominant) weight.
const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("neighbors must be at least 1")]
    NoNeighbors,
    #[error("sample length mismatch: train has {train} points, test has {test}")]
    LengthMismatch { train: usize, test: usize },
    #[error("label {0} outside confusion-matrix range")]
    LabelRange(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    /// Labels in descending score order, no duplicates.
    pub ranked: Vec<u16>,
    pub truth: u16,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// Applies `map` to every label, dropping repeats that the mapping creates.
    pub fn map_labels(&self, map: impl Fn(u16) -> u16) -> PredictionSet {
        PredictionSet {
            predictions: self
                .predictions
                .iter()
                .map(|p| {
                    let mut seen = BTreeSet::new();
                    let ranked = p.ranked.iter().map(|&l| map(l)).filter(|l| seen.insert(*l)).collect();
                    Prediction {
                        ranked,
                        truth: map(p.truth),
                    }
                })
                .collect(),
        }
    }
}

/// Fraction of samples whose true label is among the first `k` ranked labels.
pub fn topk_accuracy(p: &PredictionSet, k: usize) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let hits = p
        .predictions
        .iter()
        .filter(|pr| pr.ranked.iter().take(k).any(|&l| l == pr.truth))
        .count();
    hits as f64 / p.len() as f64
}

/// Rows are true labels, columns top-1 predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<u16>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, truth: u16, predicted: u16) -> u64 {
        let i = self.labels.binary_search(&truth);
        let j = self.labels.binary_search(&predicted);
        match (i, j) {
            (Ok(i), Ok(j)) => self.counts[i][j],
            _ => 0,
        }
    }
}

/// Confusion matrix over the union of true and predicted labels. Samples with
/// an empty ranking are not counted.
pub fn confusion(p: &PredictionSet) -> ConfusionMatrix {
    let labels: Vec<u16> = p
        .predictions
        .iter()
        .flat_map(|pr| std::iter::once(pr.truth).chain(pr.ranked.first().copied()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<u16, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
    for pr in &p.predictions {
        if let Some(&top) = pr.ranked.first() {
            counts[index[&pr.truth]][index[&top]] += 1;
        }
    }
    ConfusionMatrix { labels, counts }
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y) as f64;
            d * d
        })
        .sum()
}

/// k-nearest-neighbour classifier on raw sample vectors.
///
/// Labels among the `neighbors` closest training samples are ranked by
/// inverse-distance-weighted votes; every other training label follows,
/// ordered by the distance of its closest sample. Ties go to the smaller label.
pub fn knn_classify(train: &[Sample], test: &[Sample], neighbors: usize) -> Result<PredictionSet, EvalError> {
    if train.is_empty() {
        return Err(EvalError::EmptyTrain);
    }
    if neighbors == 0 {
        return Err(EvalError::NoNeighbors);
    }
    let n_points = train[0].values.len();
    if let Some(s) = train.iter().chain(test).find(|s| s.values.len() != n_points) {
        return Err(EvalError::LengthMismatch {
            train: n_points,
            test: s.values.len(),
        });
    }

    let predictions = test
        .par_iter()
        .map(|t| {
            let mut dist: Vec<(f64, u16)> = train
                .iter()
                .map(|s| (squared_distance(&t.values, &s.values).sqrt(), s.label))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut votes: BTreeMap<u16, f64> = BTreeMap::new();
            for &(d, label) in dist.iter().take(neighbors) {
                *votes.entry(label).or_default() += 1.0 / d.max(DISTANCE_FLOOR);
            }
            let mut voted: Vec<(u16, f64)> = votes.into_iter().collect();
            voted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

            let mut ranked: Vec<u16> = voted.iter().map(|v| v.0).collect();
            let mut seen: BTreeSet<u16> = ranked.iter().copied().collect();
            for &(_, label) in &dist {
                if seen.insert(label) {
                    ranked.push(label);
                }
            }
            Prediction { ranked, truth: t.label }
        })
        .collect();
    Ok(PredictionSet { predictions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_train: usize,
    pub n_test: usize,
    pub neighbors: usize,
    pub relabeled_by_class: bool,
    /// (k, accuracy) for k = 1..=5.
    pub topk: Vec<(usize, f64)>,
    pub confusion: ConfusionMatrix,
}

pub fn report(p: &PredictionSet, n_train: usize, neighbors: usize, relabeled_by_class: bool) -> EvalReport {
    EvalReport {
        n_train,
        n_test: p.len(),
        neighbors,
        relabeled_by_class,
        topk: (1..=5).map(|k| (k, topk_accuracy(p, k))).collect(),
        confusion: confusion(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pred(ranked: &[u16], truth: u16) -> Prediction {
        Prediction {
            ranked: ranked.to_vec(),
            truth,
        }
    }

    #[test]
    fn perfect_rankings() {
        let p = PredictionSet {
            predictions: vec![pred(&[1, 2, 3], 1), pred(&[2, 1, 3], 2)],
        };
        for k in 1..=5 {
            assert_eq!(topk_accuracy(&p, k), 1.0);
        }
        let cm = confusion(&p);
        assert_eq!(cm.get(1, 1), 1);
        assert_eq!(cm.get(2, 2), 1);
        assert_eq!(cm.get(1, 2), 0);
    }

    #[test]
    fn random_rankings_hit_k_over_c() {
        // Monte Carlo reference: a random permutation puts the truth in the
        // first k slots with probability k / C.
        let classes: Vec<u16> = (0..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let predictions = (0..100_000)
            .map(|i| {
                let mut ranked = classes.clone();
                ranked.shuffle(&mut rng);
                pred(&ranked, (i % 20) as u16)
            })
            .collect();
        let p = PredictionSet { predictions };
        for k in 1..=5 {
            let acc = topk_accuracy(&p, k);
            assert!((acc - k as f64 / 20.0).abs() < 0.01, "k={k}: {acc}");
        }
    }

    #[test]
    fn constant_predictor_fills_one_column() {
        let p = PredictionSet {
            predictions: (0..9).map(|i| pred(&[7], (i % 3) as u16)).collect(),
        };
        let cm = confusion(&p);
        assert_eq!(cm.total(), 9);
        let col = cm.labels.iter().position(|&l| l == 7).unwrap();
        for (i, row) in cm.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if j != col {
                    assert_eq!(c, 0, "row {i} col {j}");
                }
            }
        }
    }

    #[test]
    fn identical_sample_ranks_first() {
        let train = vec![
            Sample {
                label: 5,
                values: vec![0.0, 1.0, 0.0],
            },
            Sample {
                label: 3,
                values: vec![0.2, 0.9, 0.1],
            },
            Sample {
                label: 4,
                values: vec![1.0, 0.0, 0.0],
            },
        ];
        let test = vec![Sample {
            label: 5,
            values: vec![0.0, 1.0, 0.0],
        }];
        let p = knn_classify(&train, &test, 3).unwrap();
        assert_eq!(p.predictions[0].ranked[0], 5);
        assert_eq!(p.predictions[0].ranked.len(), 3);
    }

    #[test]
    fn separated_toy_classes() {
        let mk = |label: u16, v: f32| Sample {
            label,
            values: vec![v; 8],
        };
        let train: Vec<Sample> = (0..10)
            .map(|i| mk(1, 0.1 + 0.01 * i as f32))
            .chain((0..10).map(|i| mk(2, 0.9 - 0.01 * i as f32)))
            .collect();
        let test = vec![mk(1, 0.12), mk(2, 0.88), mk(1, 0.0), mk(2, 1.0)];
        let p = knn_classify(&train, &test, 3).unwrap();
        assert_eq!(topk_accuracy(&p, 1), 1.0);
    }

    #[test]
    fn knn_errors() {
        let s = vec![Sample {
            label: 1,
            values: vec![0.0; 4],
        }];
        assert_eq!(knn_classify(&[], &s, 1), Err(EvalError::EmptyTrain));
        assert_eq!(knn_classify(&s, &s, 0), Err(EvalError::NoNeighbors));
        let short = vec![Sample {
            label: 1,
            values: vec![0.0; 3],
        }];
        assert!(matches!(
            knn_classify(&s, &short, 1),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn equal_votes_prefer_smaller_label() {
        let train = vec![
            Sample {
                label: 9,
                values: vec![1.0, 0.0],
            },
            Sample {
                label: 2,
                values: vec![-1.0, 0.0],
            },
        ];
        let test = vec![Sample {
            label: 2,
            values: vec![0.0, 0.0],
        }];
        let p = knn_classify(&train, &test, 2).unwrap();
        assert_eq!(p.predictions[0].ranked, vec![2, 9]);
    }

    fn arb_predictions() -> impl Strategy<Value = PredictionSet> {
        prop::collection::vec((Just((0u16..12).collect::<Vec<_>>()).prop_shuffle(), 0u16..12), 1..60).prop_map(|v| {
            PredictionSet {
                predictions: v
                    .into_iter()
                    .map(|(ranked, truth)| Prediction { ranked, truth })
                    .collect(),
            }
        })
    }

    proptest! {
        #[test]
        fn topk_monotone(p in arb_predictions()) {
            for k in 1..12 {
                prop_assert!(topk_accuracy(&p, k + 1) >= topk_accuracy(&p, k));
            }
            prop_assert_eq!(confusion(&p).total(), p.len() as u64);
        }

        #[test]
        fn merging_labels_never_hurts(p in arb_predictions(), buckets in 1u16..6) {
            let merged = p.map_labels(|l| l % buckets);
            for k in 1..=5 {
                prop_assert!(topk_accuracy(&merged, k) >= topk_accuracy(&p, k));
            }
        }

        #[test]
        fn knn_ignores_training_order(
            seed in 0u64..1000,
            points in prop::collection::vec((0u16..4, prop::collection::vec(0.0f32..1.0, 6)), 2..30),
        ) {
            let train: Vec<Sample> = points.iter().map(|(l, v)| Sample { label: *l, values: v.clone() }).collect();
            let test: Vec<Sample> = train.iter().take(5).cloned().collect();
            let mut shuffled = train.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = knn_classify(&train, &test, 3).unwrap();
            let b = knn_classify(&shuffled, &test, 3).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

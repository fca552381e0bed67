//! Threshold-sweep evaluation: average precision, precision-recall curves,
//! and bits-required-versus-AP tables.
//!
//! Scores are packed-code inner products; sweeping the threshold over every
//! distinct score traces the PR curve without touching the codes. Ties are
//! broken by stable input order so every number here is reproducible
//! bit-for-bit.

use rayon::prelude::*;

use crate::bitcode::PackedCodeMatrix;
use crate::datagen::{CrossLabels, Dataset};
use crate::train::{CodeSide, TrainedModel};
use crate::{Error, Result};

/// How pair scores are aggregated into one AP number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// One pooled ranking over all (query, database) pairs.
    Micro,
    /// Mean of per-query APs (queries without positives are skipped).
    Macro,
}

/// One point of the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub theta: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Evaluation output for one model at one code length.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ap: f64,
    pub pr_points: Vec<PrPoint>,
    pub pairs: usize,
    pub positives: usize,
}

/// Average precision of a scored list: rank by descending score (ties keep
/// input order) and average the precision at each positive's rank.
pub fn average_precision(scored: &[(f64, i8)]) -> Result<f64> {
    let positives = scored.iter().filter(|&&(_, l)| l == 1).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let mut seen_pos = 0usize;
    let mut acc = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if scored[idx].1 == 1 {
            seen_pos += 1;
            acc += seen_pos as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(acc / positives as f64)
}

/// Precision and recall at every distinct score threshold (inclusive:
/// an item is retrieved when its score is at least the threshold).
pub fn pr_curve(scored: &[(f64, i8)]) -> Result<Vec<PrPoint>> {
    let positives = scored.iter().filter(|&&(_, l)| l == 1).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scored[order[i]].0;
        while i < order.len() && scored[order[i]].0 == threshold {
            if scored[order[i]].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            theta: threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(points)
}

/// Packs one model side into concrete codes, hashing the given points when
/// the side is parametric (after subtracting the stored center, if any).
pub fn side_codes(
    side: &CodeSide,
    points: Option<&Dataset>,
    center: Option<&[f64]>,
) -> Result<PackedCodeMatrix> {
    match side {
        CodeSide::Codes(c) => Ok(c.clone()),
        CodeSide::Hash(h) => {
            let x = points.ok_or_else(|| {
                Error::invalid("a parametric model side needs feature points to hash")
            })?;
            if x.d() != h.d() {
                return Err(Error::dims(format!(
                    "hash expects dimension {}, points have {}",
                    h.d(),
                    x.d()
                )));
            }
            if let Some(c) = center {
                if c.len() != x.d() {
                    return Err(Error::dims(
                        "center length does not match dimension".to_string(),
                    ));
                }
            }
            let cols: Vec<Vec<i8>> = (0..x.n())
                .into_par_iter()
                .map(|i| match center {
                    Some(c) => {
                        let shifted: Vec<f64> =
                            x.point(i).iter().zip(c).map(|(a, b)| a - b).collect();
                        h.apply(&shifted)
                    }
                    None => h.apply(x.point(i)),
                })
                .collect();
            PackedCodeMatrix::from_columns(h.k(), &cols)
        }
    }
}

/// Scores every (query, database) pair by packed inner product and reports
/// AP plus the threshold-sweep PR curve.
pub fn evaluate_codes(
    query: &PackedCodeMatrix,
    db: &PackedCodeMatrix,
    labels: &CrossLabels,
    pooling: Pooling,
) -> Result<EvalReport> {
    if query.k() != db.k() {
        return Err(Error::dims(format!(
            "k mismatch: {} vs {}",
            query.k(),
            db.k()
        )));
    }
    if query.n() != labels.rows() || db.n() != labels.cols() {
        return Err(Error::dims(format!(
            "labels are {}x{}, codes are {} queries x {} database items",
            labels.rows(),
            labels.cols(),
            query.n(),
            db.n()
        )));
    }
    let k = query.k();
    let rows: Vec<Vec<(f64, i8)>> = (0..query.n())
        .into_par_iter()
        .map(|i| {
            let qi = query.column(i);
            (0..db.n())
                .map(|j| {
                    let score = crate::bitcode::inner_product_words(qi, db.column(j), k) as f64;
                    (score, labels.get(i, j))
                })
                .collect()
        })
        .collect();

    let pooled: Vec<(f64, i8)> = rows.iter().flatten().copied().collect();
    let positives = pooled.iter().filter(|&&(_, l)| l == 1).count();
    let ap = match pooling {
        Pooling::Micro => average_precision(&pooled)?,
        Pooling::Macro => {
            let mut aps = Vec::new();
            for row in &rows {
                match average_precision(row) {
                    Ok(ap) => aps.push(ap),
                    Err(Error::NoPositives) => continue,
                    Err(e) => return Err(e),
                }
            }
            if aps.is_empty() {
                return Err(Error::NoPositives);
            }
            aps.iter().sum::<f64>() / aps.len() as f64
        }
    };
    let pr_points = pr_curve(&pooled)?;
    Ok(EvalReport {
        ap,
        pr_points,
        pairs: pooled.len(),
        positives,
    })
}

/// Evaluates a model: parametric sides are hashed over the given point sets,
/// stored codewords are used as-is.
pub fn evaluate_model(
    model: &TrainedModel,
    x_query: Option<&Dataset>,
    x_db: Option<&Dataset>,
    labels: &CrossLabels,
    pooling: Pooling,
) -> Result<EvalReport> {
    let q = side_codes(&model.query, x_query, model.center.as_deref())?;
    let d = side_codes(&model.database, x_db, model.center.as_deref())?;
    evaluate_codes(&q, &d, labels, pooling)
}

/// AP at every recorded bit stage of a trained model.
pub fn stage_aps(
    model: &TrainedModel,
    x_query: Option<&Dataset>,
    x_db: Option<&Dataset>,
    labels: &CrossLabels,
    pooling: Pooling,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(model.stages.len());
    for stage in &model.stages {
        let q = side_codes(&stage.query, x_query, model.center.as_deref())?;
        let d = side_codes(&stage.database, x_db, model.center.as_deref())?;
        let report = evaluate_codes(&q, &d, labels, pooling)?;
        out.push((stage.k, report.ap));
    }
    Ok(out)
}

/// One row of the bits-required table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitsRequired {
    pub target: f64,
    /// First code length whose AP reaches the target; `None` if never.
    pub bits: Option<usize>,
}

/// First-crossing table: for each AP target, the smallest recorded `k` whose
/// AP meets it.
pub fn bits_for_ap(per_stage: &[(usize, f64)], targets: &[f64]) -> Result<Vec<BitsRequired>> {
    if targets.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::invalid("AP targets must lie strictly inside (0, 1)"));
    }
    Ok(targets
        .iter()
        .map(|&target| {
            let bits = per_stage
                .iter()
                .find(|&&(_, ap)| ap >= target)
                .map(|&(k, _)| k);
            BitsRequired { target, bits }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcode::SignMatrix;
    use crate::datagen::{gen_uniform, SimilarityMatrix};
    use crate::mat::Mat;
    use crate::train::{LinearHash, TrainConfig, Variant};
    use rand::Rng;

    /// Independent AP reference: repeated minimum selection instead of a
    /// sort, precision recomputed from scratch at each positive.
    fn ap_oracle(scored: &[(f64, i8)]) -> f64 {
        let n = scored.len();
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut ranked = Vec::new();
        while !remaining.is_empty() {
            let mut best = 0;
            for (pos, &idx) in remaining.iter().enumerate() {
                let (bs, bi) = (scored[remaining[best]].0, remaining[best]);
                let (cs, ci) = (scored[idx].0, idx);
                if cs > bs || (cs == bs && ci < bi) {
                    best = pos;
                }
            }
            ranked.push(remaining.remove(best));
        }
        let total_pos = scored.iter().filter(|&&(_, l)| l == 1).count();
        let mut acc = 0.0;
        for (rank0, &idx) in ranked.iter().enumerate() {
            if scored[idx].1 == 1 {
                let correct = ranked[..=rank0]
                    .iter()
                    .filter(|&&other| scored[other].1 == 1)
                    .count();
                acc += correct as f64 / (rank0 + 1) as f64;
            }
        }
        acc / total_pos as f64
    }

    fn trapezoid_area(points: &[PrPoint]) -> f64 {
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        let mut prev_precision = 1.0;
        for p in points {
            area += (p.recall - prev_recall) * (p.precision + prev_precision) / 2.0;
            prev_recall = p.recall;
            prev_precision = p.precision;
        }
        area
    }

    #[test]
    fn ap_all_positives_first_is_one() {
        let scored = vec![(5.0, 1), (4.0, 1), (3.0, -1), (2.0, -1)];
        assert_eq!(average_precision(&scored).unwrap(), 1.0);
    }

    #[test]
    fn ap_hand_enumerated_case() {
        // order: +, -, + gives (1/1 + 2/3) / 2 = 5/6
        let scored = vec![(3.0, 1), (2.0, -1), (1.0, 1)];
        assert!((average_precision(&scored).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ap_matches_independent_oracle() {
        let mut rng = crate::seed_stream(61, "test/eval");
        for _ in 0..200 {
            let n = 2 + rng.random_range(0..29);
            let mut scored: Vec<(f64, i8)> = (0..n)
                .map(|_| {
                    // coarse scores so ties actually happen
                    let s = (rng.random::<f64>() * 6.0).round();
                    (s, if rng.random::<bool>() { 1 } else { -1 })
                })
                .collect();
            if !scored.iter().any(|&(_, l)| l == 1) {
                scored[0].1 = 1;
            }
            let got = average_precision(&scored).unwrap();
            assert!((got - ap_oracle(&scored)).abs() < 1e-12);
        }
    }

    #[test]
    fn ap_needs_positives() {
        assert!(matches!(
            average_precision(&[(1.0, -1)]),
            Err(Error::NoPositives)
        ));
    }

    #[test]
    fn ap_is_invariant_under_monotone_transforms() {
        let mut rng = crate::seed_stream(62, "test/eval");
        let scored: Vec<(f64, i8)> = (0..40)
            .map(|_| {
                (
                    rng.random::<f64>() * 4.0,
                    if rng.random::<bool>() { 1 } else { -1 },
                )
            })
            .collect();
        let base = average_precision(&scored).unwrap();
        let squeezed: Vec<(f64, i8)> = scored
            .iter()
            .map(|&(s, l)| ((s / 3.0).tanh() * 7.0 + 2.0, l))
            .collect();
        assert!((average_precision(&squeezed).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn ap_from_inner_product_equals_ap_from_negated_hamming() {
        let mut rng = crate::seed_stream(63, "test/eval");
        let k = 12i64;
        let scored_ip: Vec<(f64, i8)> = (0..60)
            .map(|_| {
                let d = rng.random_range(0..=k);
                (
                    (k - 2 * d) as f64,
                    if rng.random::<bool>() { 1 } else { -1 },
                )
            })
            .collect();
        let scored_nh: Vec<(f64, i8)> = scored_ip
            .iter()
            .map(|&(ip, l)| (-((k as f64 - ip) / 2.0), l))
            .collect();
        assert_eq!(
            average_precision(&scored_ip).unwrap(),
            average_precision(&scored_nh).unwrap()
        );
    }

    #[test]
    fn pr_curve_perfect_separation_passes_through_one_one() {
        let scored = vec![(4.0, 1), (3.0, 1), (1.0, -1)];
        let points = pr_curve(&scored).unwrap();
        assert!(points
            .iter()
            .any(|p| (p.precision - 1.0).abs() < 1e-15 && (p.recall - 1.0).abs() < 1e-15));
    }

    #[test]
    fn pr_curve_lowest_threshold_hits_recall_one_at_base_rate() {
        let mut rng = crate::seed_stream(64, "test/eval");
        let scored: Vec<(f64, i8)> = (0..50)
            .map(|_| {
                (
                    (rng.random::<f64>() * 5.0).round(),
                    if rng.random::<f64>() < 0.3 { 1 } else { -1 },
                )
            })
            .collect();
        let positives = scored.iter().filter(|&&(_, l)| l == 1).count().max(1);
        let mut scored = scored;
        if positives == 0 {
            scored[0].1 = 1;
        }
        let points = pr_curve(&scored).unwrap();
        let last = points.last().unwrap();
        assert!((last.recall - 1.0).abs() < 1e-15);
        let base = scored.iter().filter(|&&(_, l)| l == 1).count() as f64 / scored.len() as f64;
        assert!((last.precision - base).abs() < 1e-15);
    }

    #[test]
    fn pr_curve_area_matches_reference_trapezoid() {
        let mut rng = crate::seed_stream(65, "test/eval");
        let scored: Vec<(f64, i8)> = (0..80)
            .map(|_| {
                (
                    (rng.random::<f64>() * 8.0).round(),
                    if rng.random::<f64>() < 0.4 { 1 } else { -1 },
                )
            })
            .collect();
        let points = pr_curve(&scored).unwrap();
        // reference: recompute the curve by brute force at each distinct score
        let mut thresholds: Vec<f64> = scored.iter().map(|&(s, _)| s).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let positives = scored.iter().filter(|&&(_, l)| l == 1).count();
        let reference: Vec<PrPoint> = thresholds
            .iter()
            .map(|&th| {
                let retrieved: Vec<_> = scored.iter().filter(|&&(s, _)| s >= th).collect();
                let tp = retrieved.iter().filter(|&&&(_, l)| l == 1).count();
                PrPoint {
                    theta: th,
                    precision: tp as f64 / retrieved.len() as f64,
                    recall: tp as f64 / positives as f64,
                }
            })
            .collect();
        assert!((trapezoid_area(&points) - trapezoid_area(&reference)).abs() < 1e-9);
    }

    #[test]
    fn exact_codes_on_their_own_similarity_reach_ap_one() {
        let inst = crate::datagen::theorem1_instance(4).unwrap();
        let labels = CrossLabels::from_square(&inst.similarity);
        let report =
            evaluate_codes(&inst.codes_query, &inst.codes_db, &labels, Pooling::Micro).unwrap();
        assert_eq!(report.ap, 1.0);
        assert_eq!(report.pairs, inst.n * inst.n);
    }

    #[test]
    fn pooled_ap_equals_oracle_over_flat_pair_list() {
        let mut rng = crate::seed_stream(66, "test/eval");
        let n = 8;
        let k = 5;
        let cols = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<i8>> {
            (0..n)
                .map(|_| {
                    (0..k)
                        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                        .collect()
                })
                .collect()
        };
        let q = PackedCodeMatrix::from_columns(k, &cols(&mut rng)).unwrap();
        let d = PackedCodeMatrix::from_columns(k, &cols(&mut rng)).unwrap();
        let mut signs = vec![0i8; n * n];
        for v in signs.iter_mut() {
            *v = if rng.random::<f64>() < 0.4 { 1 } else { -1 };
        }
        signs[0] = 1;
        let s = SimilarityMatrix::from_signs(n, signs).unwrap();
        let labels = CrossLabels::from_square(&s);
        let report = evaluate_codes(&q, &d, &labels, Pooling::Micro).unwrap();
        let mut flat = Vec::new();
        for i in 0..n {
            for j in 0..n {
                flat.push((q.inner_product(i, &d, j).unwrap() as f64, s.get(i, j)));
            }
        }
        assert!((report.ap - ap_oracle(&flat)).abs() < 1e-12);
    }

    #[test]
    fn lin_v_database_side_uses_stored_codewords() {
        // database codes deliberately disagree with anything the query hash
        // would produce on the db points
        let x = gen_uniform(6, 3, 70).unwrap();
        let hash = LinearHash::new(Mat::from_fn(2, 3, |i, j| ((i + j) as f64) - 1.2)).unwrap();
        let stored = SignMatrix::from_rows(vec![vec![-1; 6], vec![-1; 6]])
            .unwrap()
            .to_packed();
        let model = TrainedModel {
            variant: Variant::LinV,
            beta: 0.7,
            theta: 0.0,
            query: CodeSide::Hash(hash.clone()),
            database: CodeSide::Codes(stored.clone()),
            center: None,
            loss_trace: Vec::new(),
            stages: Vec::new(),
        };
        let labels = CrossLabels::from_radius(&x, &x, 0.8).unwrap();
        let report = evaluate_model(&model, Some(&x), Some(&x), &labels, Pooling::Micro);
        // manual scores against the stored codewords
        let q = side_codes(&model.query, Some(&x), None).unwrap();
        let mut flat = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                flat.push((
                    q.inner_product(i, &stored, j).unwrap() as f64,
                    labels.get(i, j),
                ));
            }
        }
        match (report, average_precision(&flat)) {
            (Ok(r), Ok(ap)) => assert_eq!(r.ap, ap),
            (Err(Error::NoPositives), Err(Error::NoPositives)) => {}
            (r, ap) => panic!("mismatched outcomes: {r:?} vs {ap:?}"),
        }
        // and the hashed db side would score differently
        let hashed_db = side_codes(&CodeSide::Hash(hash), Some(&x), None).unwrap();
        assert_ne!(hashed_db, stored);
    }

    #[test]
    fn macro_pooling_averages_per_query() {
        let q = PackedCodeMatrix::from_columns(2, &[vec![1, 1], vec![-1, -1]]).unwrap();
        let d = q.clone();
        // query 0: one positive (itself); query 1: no positives -> skipped
        let s = SimilarityMatrix::from_signs(2, vec![1, -1, -1, -1]).unwrap();
        let labels = CrossLabels::from_square(&s);
        let report = evaluate_codes(&q, &d, &labels, Pooling::Macro).unwrap();
        assert_eq!(report.ap, 1.0);
    }

    #[test]
    fn bits_table_first_crossing_and_monotonicity() {
        let per_stage = vec![(1, 0.2), (2, 0.5), (3, 0.4), (4, 0.9)];
        // any vanishing target is met by the first stage (AP > 0 with positives)
        let tiny = bits_for_ap(&per_stage, &[1e-12]).unwrap();
        assert_eq!(tiny[0].bits, Some(1));
        let table = bits_for_ap(&per_stage, &[0.1, 0.45, 0.45, 0.85, 0.95]).unwrap();
        assert_eq!(table[0].bits, Some(1));
        assert_eq!(table[1].bits, Some(2));
        assert_eq!(table[3].bits, Some(4));
        assert_eq!(table[4].bits, None);
        // non-decreasing in target among reached entries
        let reached: Vec<usize> = table.iter().filter_map(|r| r.bits).collect();
        assert!(reached.windows(2).all(|w| w[1] >= w[0]));
        assert!(bits_for_ap(&per_stage, &[0.0]).is_err());
        assert!(bits_for_ap(&per_stage, &[1.0]).is_err());
    }

    #[test]
    fn gap_instance_bits_table_favors_the_asymmetric_trainer() {
        let inst = crate::datagen::theorem1_instance(4).unwrap();
        let labels = CrossLabels::from_square(&inst.similarity);
        let config = TrainConfig {
            k_max: 8,
            seed: 4,
            sweeps_per_bit: 8,
            ..TrainConfig::default()
        };
        let uv = crate::train::train_unconstrained(&inst.similarity, &config).unwrap();
        let sym = crate::train::train_symmetric(&inst.similarity, &config).unwrap();
        let uv_aps = stage_aps(&uv, None, None, &labels, Pooling::Micro).unwrap();
        let sym_aps = stage_aps(&sym, None, None, &labels, Pooling::Micro).unwrap();
        let targets = [0.3, 0.5, 0.7, 0.9];
        let uv_table = bits_for_ap(&uv_aps, &targets).unwrap();
        let sym_table = bits_for_ap(&sym_aps, &targets).unwrap();
        for (a, s) in uv_table.iter().zip(&sym_table) {
            if let (Some(ka), Some(ks)) = (a.bits, s.bits) {
                assert!(ka <= ks, "target {}: asym {ka} bits vs sym {ks}", a.target);
            }
        }
    }
}

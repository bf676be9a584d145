use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::data::dataset::{Dataset, SequenceRecord, SIL};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

/// One noisy Lissajous trajectory with probabilistic pattern switching.
///
/// The trajectory runs `cycles` cycles of `steps_per_cycle` samples each,
/// with a global phase Δφ = 2π/steps_per_cycle:
///
///   x_t = sin(a·t·Δφ + delta) + ν,   y_t = sin(b·t·Δφ) + ν,   ν ~ N(0, σ²)
///
/// The frequency pair (a, b) starts at `patterns[0]`; at each cycle
/// boundary it advances to the next pattern in the list with probability
/// `transition_prob`. The label records the active pattern per cycle
/// ("p0", "p1", …) and ends with the silence token.
pub fn gen_lissajous(
    patterns: &[(f64, f64)],
    delta: f64,
    sigma: f64,
    steps_per_cycle: usize,
    cycles: usize,
    transition_prob: f64,
    rng: &mut Rng,
    id: &str,
) -> Result<SequenceRecord> {
    if patterns.is_empty() {
        return Err(Error::invalid("no Lissajous patterns supplied"));
    }
    if steps_per_cycle < 2 {
        return Err(Error::invalid(format!(
            "steps_per_cycle {steps_per_cycle} must be at least 2"
        )));
    }
    if cycles == 0 {
        return Err(Error::invalid("cycles must be at least 1"));
    }
    if !(0.0..=1.0).contains(&transition_prob) {
        return Err(Error::invalid(format!(
            "transition probability {transition_prob} outside [0, 1]"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise std {sigma} must be ≥ 0")));
    }
    let dphi = TAU / steps_per_cycle as f64;
    let mut pattern = 0usize;
    let mut rows = Vec::with_capacity(steps_per_cycle * cycles);
    let mut label_text = Vec::with_capacity(cycles);
    for cycle in 0..cycles {
        if cycle > 0 && rng.uniform() < transition_prob {
            pattern = (pattern + 1) % patterns.len();
        }
        label_text.push(format!("p{pattern}"));
        let (a, b) = patterns[pattern];
        for step in 0..steps_per_cycle {
            let t = (cycle * steps_per_cycle + step) as f64;
            let mut x = (a * t * dphi + delta).sin();
            let mut y = (b * t * dphi).sin();
            if sigma > 0.0 {
                x += rng.normal_scaled(0.0, sigma);
                y += rng.normal_scaled(0.0, sigma);
            }
            rows.push(vec![x, y]);
        }
    }
    // utterances open and close with silence (see spell_label)
    let mut label_phonemes = vec![SIL.to_string()];
    label_phonemes.extend(label_text.iter().cloned());
    label_phonemes.push(SIL.to_string());
    let mut streams = BTreeMap::new();
    streams.insert("xy".to_string(), Matrix::from_rows(&rows)?);
    Ok(SequenceRecord {
        id: id.to_string(),
        label_text,
        label_phonemes,
        streams,
    })
}

/// A corpus of Lissajous trajectories sharing one pattern list. The
/// alphabet is the pattern names plus the silence token.
pub fn gen_lissajous_dataset(
    patterns: &[(f64, f64)],
    delta: f64,
    sigma: f64,
    steps_per_cycle: usize,
    cycles: usize,
    transition_prob: f64,
    n_records: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_records == 0 {
        return Err(Error::invalid("need at least one record"));
    }
    let mut alphabet: Vec<String> = (0..patterns.len()).map(|i| format!("p{i}")).collect();
    alphabet.push(SIL.to_string());
    let mut ds = Dataset::new(vec![("xy".to_string(), 2)], alphabet);
    let mut rng = Rng::new(seed);
    for i in 0..n_records {
        ds.records.push(gen_lissajous(
            patterns,
            delta,
            sigma,
            steps_per_cycle,
            cycles,
            transition_prob,
            &mut rng,
            &format!("liss{i:04}"),
        )?);
    }
    ds.validate()?;
    Ok(ds)
}

const WALK_STEP: f64 = 0.08;
const WALK_SMOOTH: f64 = 0.3;

/// A smooth random walk in [0.05, 0.95] that settles toward 0.5 over the
/// final quarter of the sequence (a "return to rest" tail shared by every
/// prototype, so only the earlier portion is discriminative).
fn prototype_walk(seq_len: usize, dim: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(seq_len, dim);
    let mut raw = vec![0.0; dim];
    let mut smooth = vec![0.0; dim];
    for d in 0..dim {
        raw[d] = rng.uniform_in(0.2, 0.8);
        smooth[d] = raw[d];
    }
    let tail = seq_len / 4;
    let active = seq_len - tail;
    for t in 0..seq_len {
        for d in 0..dim {
            if t > 0 {
                raw[d] = (raw[d] + WALK_STEP * rng.normal()).clamp(0.05, 0.95);
                smooth[d] = (1.0 - WALK_SMOOTH) * smooth[d] + WALK_SMOOTH * raw[d];
            }
            let v = if t >= active && tail > 0 {
                let u = (t - active + 1) as f64 / tail as f64;
                (1.0 - u) * smooth[d] + u * 0.5
            } else {
                smooth[d]
            };
            m.set(t, d, v);
        }
    }
    m
}

/// A desk-scale crossmodal grounding task: every (action, object) pair has
/// fixed per-modality prototype sequences, and records are noisy copies.
///
/// Modality 0 depends only on the action, modality 1 only on the object,
/// and any further modalities on the full pair — so producing the label
/// `[action-word, object-word]` requires integrating at least the first
/// two modalities. Words come from `vocab` (actions first, then objects);
/// phonetic labels spell the words letter by letter, separated and
/// terminated by the silence token.
pub fn gen_toy_grounding(
    n_actions: usize,
    n_objects: usize,
    modality_dims: &[usize],
    seq_len: usize,
    noise_sigma: f64,
    vocab: &[String],
    records_per_pair: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    if n_actions < 2 || n_objects < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 actions and 2 objects, got {n_actions}×{n_objects}"
        )));
    }
    if seq_len < 10 {
        return Err(Error::invalid(format!("seq_len {seq_len} must be at least 10")));
    }
    if modality_dims.is_empty() || modality_dims.contains(&0) {
        return Err(Error::invalid("every modality needs a positive dimension"));
    }
    if records_per_pair == 0 {
        return Err(Error::invalid("records_per_pair must be at least 1"));
    }
    if vocab.len() < n_actions + n_objects {
        return Err(Error::invalid(format!(
            "vocab has {} words, need {} (actions then objects)",
            vocab.len(),
            n_actions + n_objects
        )));
    }
    let words = &vocab[..n_actions + n_objects];
    {
        let mut sorted: Vec<&String> = words.iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != words.len() {
            return Err(Error::invalid("vocab words must be distinct"));
        }
    }
    for word in words {
        if word.is_empty() || !word.chars().all(|c| c.is_ascii_lowercase()) {
            return Err(Error::invalid(format!(
                "word '{word}' must be non-empty lowercase ascii (it is spelled letterwise)"
            )));
        }
    }

    // alphabet: every letter that occurs in a used word, sorted, then SIL
    let mut letters: Vec<String> = words
        .iter()
        .flat_map(|w| w.chars())
        .map(|c| c.to_string())
        .collect();
    letters.sort_unstable();
    letters.dedup();
    letters.push(SIL.to_string());

    let modalities: Vec<(String, usize)> = modality_dims
        .iter()
        .enumerate()
        .map(|(i, &d)| (format!("m{i}"), d))
        .collect();
    let mut ds = Dataset::new(modalities.clone(), letters);
    let mut lexicon = BTreeMap::new();
    for word in words {
        lexicon.insert(
            word.clone(),
            word.chars().map(|c| c.to_string()).collect::<Vec<_>>(),
        );
    }
    ds.lexicon = Some(lexicon);

    // Prototypes are drawn first, in a fixed order, so the record count
    // never shifts which walk a pair receives.
    let n_pairs = n_actions * n_objects;
    let mut prototypes: Vec<Vec<Matrix>> = Vec::with_capacity(modalities.len());
    for (m, &dim) in modality_dims.iter().enumerate() {
        let keys = match m {
            0 => n_actions,
            1 => n_objects,
            _ => n_pairs,
        };
        prototypes.push((0..keys).map(|_| prototype_walk(seq_len, dim, rng)).collect());
    }

    for action in 0..n_actions {
        for object in 0..n_objects {
            let label_text = vec![words[action].clone(), words[n_actions + object].clone()];
            let label_phonemes =
                crate::data::augment::spell_label(&label_text, ds.lexicon.as_ref().unwrap())?;
            for r in 0..records_per_pair {
                let mut streams = BTreeMap::new();
                for (m, (name, _)) in modalities.iter().enumerate() {
                    let key = match m {
                        0 => action,
                        1 => object,
                        _ => action * n_objects + object,
                    };
                    let mut stream = prototypes[m][key].clone();
                    if noise_sigma > 0.0 {
                        for v in stream.as_mut_slice() {
                            *v += rng.normal_scaled(0.0, noise_sigma);
                        }
                    }
                    streams.insert(name.clone(), stream);
                }
                ds.records.push(SequenceRecord {
                    id: format!("a{action}_o{object}_r{r}"),
                    label_text: label_text.clone(),
                    label_phonemes: label_phonemes.clone(),
                    streams,
                });
            }
        }
    }
    ds.validate()?;
    Ok(ds)
}

/// Default word list for the toy grounding task: actions first, then
/// objects, all letter-spellable.
pub fn toy_vocab() -> Vec<String> {
    ["push", "pull", "lift", "shake", "slide", "ball", "cube", "cup", "ring", "block"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lissajous_starts_at_origin_without_phase() {
        let rec = gen_lissajous(&[(1.0, 2.0)], 0.0, 0.0, 20, 1, 0.0, &mut Rng::new(1), "r").unwrap();
        let xy = &rec.streams["xy"];
        assert_eq!(xy.get(0, 0), 0.0);
        assert_eq!(xy.get(0, 1), 0.0);
        assert_eq!(xy.rows(), 20);
    }

    #[test]
    fn unit_circle_when_frequencies_match_and_phase_is_quarter_turn() {
        let rec = gen_lissajous(
            &[(1.0, 1.0)],
            std::f64::consts::FRAC_PI_2,
            0.0,
            36,
            1,
            0.0,
            &mut Rng::new(1),
            "r",
        )
        .unwrap();
        let xy = &rec.streams["xy"];
        assert!((xy.get(0, 0) - 1.0).abs() < 1e-15);
        assert!(xy.get(0, 1).abs() < 1e-15);
        for r in 0..xy.rows() {
            let (x, y) = (xy.get(r, 0), xy.get(r, 1));
            assert!((x * x + y * y - 1.0).abs() < 1e-12, "row {r}: ({x}, {y})");
        }
    }

    #[test]
    fn noiseless_fixed_pattern_is_periodic() {
        let rec = gen_lissajous(&[(3.0, 2.0)], 0.4, 0.0, 50, 3, 0.0, &mut Rng::new(7), "r").unwrap();
        let xy = &rec.streams["xy"];
        for t in 0..100 {
            assert!((xy.get(t, 0) - xy.get(t + 50, 0)).abs() < 1e-9);
            assert!((xy.get(t, 1) - xy.get(t + 50, 1)).abs() < 1e-9);
        }
        assert_eq!(rec.label_text, vec!["p0", "p0", "p0"]);
        assert_eq!(rec.label_phonemes.last().unwrap(), SIL);
    }

    #[test]
    fn noise_stays_within_gaussian_tails() {
        let sigma = 0.05;
        let noisy =
            gen_lissajous(&[(2.0, 3.0)], 0.1, sigma, 40, 5, 0.0, &mut Rng::new(11), "n").unwrap();
        let clean =
            gen_lissajous(&[(2.0, 3.0)], 0.1, 0.0, 40, 5, 0.0, &mut Rng::new(11), "c").unwrap();
        let (n, c) = (&noisy.streams["xy"], &clean.streams["xy"]);
        for (a, b) in n.as_slice().iter().zip(c.as_slice()) {
            assert!((a - b).abs() <= 5.0 * sigma, "deviation {}", a - b);
        }
    }

    #[test]
    fn transitions_advance_through_the_pattern_list() {
        let rec = gen_lissajous(
            &[(1.0, 2.0), (3.0, 4.0)],
            0.0,
            0.0,
            10,
            40,
            1.0,
            &mut Rng::new(3),
            "r",
        )
        .unwrap();
        // transition_prob = 1 → strict alternation from p0
        let expect: Vec<String> =
            (0..40).map(|c| format!("p{}", c % 2)).collect();
        assert_eq!(rec.label_text, expect);

        let rec = gen_lissajous(
            &[(1.0, 2.0), (3.0, 4.0)],
            0.0,
            0.0,
            10,
            6,
            0.5,
            &mut Rng::new(3),
            "r",
        )
        .unwrap();
        assert_eq!(rec.label_text.len(), 6);
    }

    #[test]
    fn lissajous_dataset_validates_and_replays() {
        let a = gen_lissajous_dataset(&[(1.0, 2.0), (3.0, 2.0)], 0.0, 0.02, 30, 4, 0.3, 12, 5)
            .unwrap();
        let b = gen_lissajous_dataset(&[(1.0, 2.0), (3.0, 2.0)], 0.0, 0.02, 30, 4, 0.3, 12, 5)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert_eq!(a.alphabet, vec!["p0", "p1", SIL]);
    }

    #[test]
    fn toy_grounding_counts_and_labels() {
        let ds = gen_toy_grounding(
            3,
            3,
            &[4, 5],
            20,
            0.02,
            &toy_vocab(),
            4,
            &mut Rng::new(2),
        )
        .unwrap();
        assert_eq!(ds.len(), 36);
        let labels: std::collections::BTreeSet<_> =
            ds.records.iter().map(|r| r.label_text.join(" ")).collect();
        assert_eq!(labels.len(), 9);
        // objects are the three words after the three actions
        assert_eq!(ds.records[0].label_text, vec!["push", "shake"]);
        assert_eq!(
            ds.records[0].label_phonemes,
            vec![SIL, "p", "u", "s", "h", SIL, "s", "h", "a", "k", "e", SIL]
        );
        assert_eq!(ds.alphabet.last().unwrap(), SIL);
    }

    #[test]
    fn zero_noise_repeats_the_prototype() {
        let ds = gen_toy_grounding(2, 2, &[3], 16, 0.0, &toy_vocab(), 3, &mut Rng::new(8)).unwrap();
        for pair in 0..4 {
            let first = &ds.records[pair * 3];
            for r in 1..3 {
                assert_eq!(ds.records[pair * 3 + r].streams, first.streams);
            }
        }
    }

    #[test]
    fn action_modality_ignores_the_object() {
        let ds = gen_toy_grounding(2, 3, &[4, 4], 24, 0.0, &toy_vocab(), 1, &mut Rng::new(4)).unwrap();
        // records are a-major: a0_o0, a0_o1, a0_o2, a1_o0, ...
        assert_eq!(ds.records[0].streams["m0"], ds.records[1].streams["m0"]);
        assert_eq!(ds.records[0].streams["m0"], ds.records[2].streams["m0"]);
        assert_ne!(ds.records[0].streams["m0"], ds.records[3].streams["m0"]);
        // object modality is the transpose of that pattern
        assert_eq!(ds.records[0].streams["m1"], ds.records[3].streams["m1"]);
        assert_ne!(ds.records[0].streams["m1"], ds.records[1].streams["m1"]);
    }

    #[test]
    fn same_pair_records_correlate_more_than_cross_pair() {
        let ds = gen_toy_grounding(2, 2, &[4, 4], 40, 0.05, &toy_vocab(), 2, &mut Rng::new(6)).unwrap();
        let flatten = |r: &SequenceRecord| -> Vec<f64> {
            let mut v = r.streams["m0"].as_slice().to_vec();
            v.extend_from_slice(r.streams["m1"].as_slice());
            v
        };
        let pearson = |a: &[f64], b: &[f64]| -> f64 {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let mut cov = 0.0;
            let mut va = 0.0;
            let mut vb = 0.0;
            for (x, y) in a.iter().zip(b) {
                cov += (x - ma) * (y - mb);
                va += (x - ma) * (x - ma);
                vb += (y - mb) * (y - mb);
            }
            cov / (va.sqrt() * vb.sqrt())
        };
        let mut within = Vec::new();
        let mut across = Vec::new();
        for i in 0..ds.len() {
            for j in (i + 1)..ds.len() {
                let r = pearson(&flatten(&ds.records[i]), &flatten(&ds.records[j]));
                let same = ds.records[i].label_text == ds.records[j].label_text;
                if same {
                    within.push(r);
                } else {
                    across.push(r);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&within) > mean(&across) + 0.1,
            "within {} vs across {}",
            mean(&within),
            mean(&across)
        );
    }

    #[test]
    fn toy_grounding_rejects_bad_arguments() {
        let v = toy_vocab();
        let mut rng = Rng::new(0);
        assert!(gen_toy_grounding(1, 3, &[4], 20, 0.0, &v, 1, &mut rng).is_err());
        assert!(gen_toy_grounding(3, 3, &[4], 5, 0.0, &v, 1, &mut rng).is_err());
        assert!(gen_toy_grounding(3, 3, &[], 20, 0.0, &v, 1, &mut rng).is_err());
        assert!(gen_toy_grounding(5, 6, &[4], 20, 0.0, &v, 1, &mut rng).is_err(), "vocab too small");
        let dup = vec!["a".to_string(), "a".to_string(), "b".to_string(), "c".to_string()];
        assert!(gen_toy_grounding(2, 2, &[4], 20, 0.0, &dup, 1, &mut rng).is_err());
    }
}

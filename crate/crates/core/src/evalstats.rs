//! Evaluation arithmetic: exact Wilcoxon signed-rank test, matched-pairs
//! rank-biserial correlation, effect-size bands and questionnaire sub-scale
//! aggregation.

use serde::{Deserialize, Serialize};

use crate::{par, Error, Result};

/// Largest number of non-zero differences the exact test accepts.
pub const MAX_EXACT_N: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    /// `(baseline, treatment)`
    pub pairs: Vec<(f64, f64)>,
}

impl PairedSample {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("sample", "needs at least one pair"));
        }
        if let Some(i) = pairs.iter().position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::invalid("sample", format!("pair {i} is not finite")));
        }
        Ok(Self { pairs })
    }

    /// The same sample with the two columns exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub n_eff: usize,
    pub p_two_tailed: f64,
}

/// Non-zero differences with their doubled (hence integral) average ranks.
fn signed_doubled_ranks(sample: &PairedSample) -> Result<Vec<(bool, u64)>> {
    let mut diffs: Vec<f64> = sample
        .pairs
        .iter()
        .map(|(base, treat)| treat - base)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::Degenerate("every difference is zero".into()));
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut out = Vec::with_capacity(diffs.len());
    let mut i = 0;
    while i < diffs.len() {
        let mut j = i;
        while j + 1 < diffs.len() && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        // positions i+1 ..= j+1 share the rank (i+1 + j+1) / 2
        let doubled = (i + 1 + j + 1) as u64;
        for d in &diffs[i..=j] {
            out.push((*d > 0.0, doubled));
        }
        i = j + 1;
    }
    Ok(out)
}

pub fn wilcoxon_exact(sample: &PairedSample) -> Result<WilcoxonResult> {
    let ranks = signed_doubled_ranks(sample)?;
    let n = ranks.len();
    if n > MAX_EXACT_N {
        return Err(Error::invalid(
            "sample",
            format!("{n} non-zero differences exceed the exact-test limit of {MAX_EXACT_N}"),
        ));
    }
    let plus2: u64 = ranks.iter().filter(|(pos, _)| *pos).map(|(_, r)| r).sum();
    let total2: u64 = ranks.iter().map(|(_, r)| r).sum();
    let minus2 = total2 - plus2;
    let w2 = plus2.min(minus2);

    // counts[s] = number of sign assignments whose doubled R+ equals s
    let mut counts = vec![0u128; total2 as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for (_, r) in &ranks {
        let r = *r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let hits: u128 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as u64).min(total2 - *s as u64) <= w2)
        .map(|(_, c)| *c)
        .sum();
    let p = hits as f64 / 2f64.powi(n as i32);

    Ok(WilcoxonResult {
        w: w2 as f64 / 2.0,
        r_plus: plus2 as f64 / 2.0,
        r_minus: minus2 as f64 / 2.0,
        n_eff: n,
        p_two_tailed: p.min(1.0),
    })
}

/// `(R+ - R-) / (R+ + R-)`
pub fn rank_biserial(sample: &PairedSample) -> Result<f64> {
    let ranks = signed_doubled_ranks(sample)?;
    let plus: u64 = ranks.iter().filter(|(pos, _)| *pos).map(|(_, r)| r).sum();
    let total: u64 = ranks.iter().map(|(_, r)| r).sum();
    let minus = total - plus;
    Ok((plus as f64 - minus as f64) / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EffectSize {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectSize {
    pub fn label(self) -> &'static str {
        match self {
            EffectSize::Negligible => "negligible",
            EffectSize::Small => "small",
            EffectSize::Medium => "medium",
            EffectSize::Large => "large",
        }
    }
}

pub fn effect_label(r: f64) -> Result<EffectSize> {
    let m = r.abs();
    if !m.is_finite() || m > 1.0 {
        return Err(Error::invalid("r", format!("|{r}| must be at most 1")));
    }
    Ok(if m < 0.10 {
        EffectSize::Negligible
    } else if m < 0.30 {
        EffectSize::Small
    } else if m < 0.50 {
        EffectSize::Medium
    } else {
        EffectSize::Large
    })
}

/// Full per-item report, as printed by the stats tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub wilcoxon: WilcoxonResult,
    pub r_rb: f64,
    pub effect: EffectSize,
}

pub fn paired_report(sample: &PairedSample) -> Result<PairedReport> {
    let wilcoxon = wilcoxon_exact(sample)?;
    let r_rb = rank_biserial(sample)?;
    Ok(PairedReport {
        wilcoxon,
        r_rb,
        effect: effect_label(r_rb)?,
    })
}

/// Reports for many samples, fanned out when the `parallel` feature is on.
pub fn paired_reports(samples: &[PairedSample]) -> Vec<Result<PairedReport>> {
    par::map(samples, paired_report)
}

pub fn paired_reports_seq(samples: &[PairedSample]) -> Vec<Result<PairedReport>> {
    samples.iter().map(paired_report).collect()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn check_items(items: &[f64], expected: usize) -> Result<()> {
    if items.len() != expected {
        return Err(Error::invalid(
            "items",
            format!("expected {expected} item means, got {}", items.len()),
        ));
    }
    if let Some(i) = items.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid("items", format!("item {} is not finite", i + 1)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeqsScores {
    /// Pragmatic quality, items 1-4.
    pub pq: f64,
    /// Hedonic quality, items 5-8.
    pub hq: f64,
    pub overall: f64,
}

/// Items in order Q1..Q8.
pub fn ueqs_aggregate(items: &[f64]) -> Result<UeqsScores> {
    check_items(items, 8)?;
    Ok(UeqsScores {
        pq: mean(items[..4].iter().copied()),
        hq: mean(items[4..].iter().copied()),
        overall: mean(items.iter().copied()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Q13Scores {
    pub utility: f64,
    pub acceptance: f64,
    /// Virtual-pet mediation.
    pub vp: f64,
    pub overall: f64,
}

const Q13_UTILITY: [usize; 5] = [1, 3, 5, 7, 9];
const Q13_ACCEPTANCE: [usize; 3] = [2, 6, 10];
const Q13_VP: [usize; 3] = [4, 8, 11];

/// Items in order Q13.1..Q13.11.
pub fn q13_aggregate(items: &[f64]) -> Result<Q13Scores> {
    check_items(items, 11)?;
    let pick = |idx: &[usize]| mean(idx.iter().map(|i| items[i - 1]));
    Ok(Q13Scores {
        utility: pick(&Q13_UTILITY),
        acceptance: pick(&Q13_ACCEPTANCE),
        vp: pick(&Q13_VP),
        overall: mean(items.iter().copied()),
    })
}

/// Position (1-based) of an item label such as `Q3`, `Q.3`, `Q13.7` or `7`.
pub fn item_number(label: &str) -> Option<usize> {
    let digits: String = label
        .trim()
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Half-up rounding that treats values within 1e-9 of a half as the half,
/// so decimal inputs like 4.545 round the way they read.
pub fn round_half_up(v: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    let r = (v.abs() * scale + 0.5 + 1e-9).floor() / scale;
    r.copysign(v)
}

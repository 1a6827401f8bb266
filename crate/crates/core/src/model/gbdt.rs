//! Gradient-boosted regression trees over histogram bins.
//!
//! Missing values (NaN) get their own bin and every split learns which side
//! they go to.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const MAX_BINS: usize = 64;
const LAMBDA: f64 = 1.0;
const MIN_CHILD_WEIGHT: f64 = 1.0;

/// Candidate thresholds per feature, from training rows. A value `x` falls in
/// bin `k` when `x <= thresholds[k]` and `x > thresholds[k - 1]`.
#[derive(Clone, Debug)]
pub struct Binning {
    pub thresholds: Vec<Vec<f64>>,
}

impl Binning {
    pub fn fit(columns: &[Vec<f64>], rows: &[usize]) -> Binning {
        let thresholds = columns
            .iter()
            .map(|col| {
                let mut xs: Vec<f64> = rows.iter().map(|&r| col[r]).filter(|x| !x.is_nan()).collect();
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                if xs.len() <= MAX_BINS {
                    // Midpoints keep splits stable for unseen values.
                    xs.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
                } else {
                    let mut t: Vec<f64> = (1..MAX_BINS).map(|k| xs[k * xs.len() / MAX_BINS - 1]).collect();
                    t.dedup();
                    t
                }
            })
            .collect();
        Binning { thresholds }
    }

    /// Bin codes per feature; the missing bin is `thresholds.len() + 1`.
    pub fn codes(&self, columns: &[Vec<f64>]) -> Vec<Vec<u8>> {
        columns
            .iter()
            .zip(&self.thresholds)
            .map(|(col, t)| {
                col.iter()
                    .map(|&x| if x.is_nan() { (t.len() + 1) as u8 } else { t.partition_point(|&e| x > e) as u8 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, missing_left: bool, left: usize, right: usize },
    Leaf(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(w) => return *w,
                Node::Split { feature, threshold, missing_left, left, right } => {
                    let x = columns[*feature][row];
                    let go_left = if x.is_nan() { *missing_left } else { x <= *threshold };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }
}

pub struct GrowParams {
    pub max_depth: usize,
    pub learning_rate: f64,
}

struct Best {
    gain: f64,
    feature: usize,
    bin: usize,
    missing_left: bool,
}

/// Grow one tree on `rows` with gradients `g` and hessians `h`. Split gains
/// are added to `gains[feature]`.
pub fn grow_tree(
    codes: &[Vec<u8>],
    binning: &Binning,
    rows: Vec<usize>,
    g: &[f64],
    h: &[f64],
    params: &GrowParams,
    gains: &mut [f64],
) -> Tree {
    let mut nodes = Vec::new();
    grow(codes, binning, rows, g, h, params, 0, &mut nodes, gains);
    Tree { nodes }
}

fn score(g: f64, h: f64) -> f64 {
    g * g / (h + LAMBDA)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    codes: &[Vec<u8>],
    binning: &Binning,
    rows: Vec<usize>,
    g: &[f64],
    h: &[f64],
    params: &GrowParams,
    depth: usize,
    nodes: &mut Vec<Node>,
    gains: &mut [f64],
) -> usize {
    let at = nodes.len();
    let (gs, hs) = rows.iter().fold((0.0, 0.0), |(a, b), &r| (a + g[r], b + h[r]));
    nodes.push(Node::Leaf(-gs / (hs + LAMBDA) * params.learning_rate));
    if depth >= params.max_depth || rows.len() < 2 {
        return at;
    }
    let Some(best) = best_split(codes, binning, &rows, g, h, gs, hs) else { return at };
    let missing_bin = binning.thresholds[best.feature].len() + 1;
    let (left, right): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&r| {
        let c = codes[best.feature][r] as usize;
        if c == missing_bin {
            best.missing_left
        } else {
            c <= best.bin
        }
    });
    gains[best.feature] += best.gain;
    let l = grow(codes, binning, left, g, h, params, depth + 1, nodes, gains);
    let r = grow(codes, binning, right, g, h, params, depth + 1, nodes, gains);
    nodes[at] = Node::Split {
        feature: best.feature,
        threshold: binning.thresholds[best.feature][best.bin],
        missing_left: best.missing_left,
        left: l,
        right: r,
    };
    at
}

fn best_split(
    codes: &[Vec<u8>],
    binning: &Binning,
    rows: &[usize],
    g: &[f64],
    h: &[f64],
    gs: f64,
    hs: f64,
) -> Option<Best> {
    let parent = score(gs, hs);
    let mut best: Option<Best> = None;
    for (f, t) in binning.thresholds.iter().enumerate() {
        if t.is_empty() {
            continue;
        }
        let n_bins = t.len() + 2;
        let mut hist = vec![(0.0f64, 0.0f64); n_bins];
        for &r in rows {
            let b = &mut hist[codes[f][r] as usize];
            b.0 += g[r];
            b.1 += h[r];
        }
        let missing = hist[n_bins - 1];
        let (mut gl, mut hl) = (0.0, 0.0);
        // Splitting after bin `k` for k in 0..t.len() puts bins 0..=k left.
        for (k, bin) in hist.iter().take(t.len()).enumerate() {
            gl += bin.0;
            hl += bin.1;
            for missing_left in [false, true] {
                let (lg, lh) = if missing_left { (gl + missing.0, hl + missing.1) } else { (gl, hl) };
                let (rg, rh) = (gs - lg, hs - lh);
                if lh < MIN_CHILD_WEIGHT || rh < MIN_CHILD_WEIGHT {
                    continue;
                }
                let gain = 0.5 * (score(lg, lh) + score(rg, rh) - parent);
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Best { gain, feature: f, bin: k, missing_left });
                }
            }
        }
    }
    best
}

//! Fire-level features, a 2-D embedding and k-means groupings.

mod kmeans;
mod umap;

use std::fmt::Write as _;

use thiserror::Error;

pub use kmeans::{adjusted_rand_index, kmeans, KMeans, MAX_LLOYD_ITERATIONS, RESTARTS};
pub use umap::{fit_ab, fuzzy_graph, knn, smooth_knn, trustworthiness, umap_embed, Embedding, UmapConfig};

use crate::logistic::FireRecovery;
use crate::raster::{FireRecord, RasterError, RasterStack, PRECIP};

pub const DEFAULT_KS: [usize; 3] = [3, 5, 10];
/// Leading frames averaged for the precipitation feature.
pub const EARLY_FRAMES: usize = 5;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("fire {fire}: missing {what}")]
    Join { fire: String, what: &'static str },
    #[error("non-finite value in {0}")]
    NonFiniteFeature(String),
    #[error("embedding diverged")]
    NonFinite,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireFeature {
    pub fire_id: String,
    pub lon: f64,
    pub lat: f64,
    pub k_hat: f64,
    pub l_hat: f64,
    pub precip: f64,
}

impl FireFeature {
    pub fn vector(&self) -> [f64; 5] {
        [self.lon, self.lat, self.k_hat, self.l_hat, self.precip]
    }
}

/// Mean PRECIP over the first [`EARLY_FRAMES`] frames and all pixels.
pub fn early_precip(stack: &RasterStack) -> Result<f64, ClusterError> {
    let ch = stack.require_channel(PRECIP)?;
    let frames = stack.t_len().min(EARLY_FRAMES);
    let mut sum = 0.0;
    for t in 0..frames {
        for r in 0..stack.height() {
            for c in 0..stack.width() {
                sum += stack.get(t, r, c, ch) as f64;
            }
        }
    }
    Ok(sum / (frames * stack.height() * stack.width()).max(1) as f64)
}

/// One feature per recovery, in recovery order. `precip` pairs fire ids
/// with their early precipitation.
pub fn build_features(
    recoveries: &[FireRecovery],
    catalog: &[FireRecord],
    precip: &[(String, f64)],
) -> Result<Vec<FireFeature>, ClusterError> {
    recoveries
        .iter()
        .map(|r| {
            let rec = catalog
                .iter()
                .find(|c| c.id == r.fire_id)
                .ok_or_else(|| ClusterError::Join { fire: r.fire_id.clone(), what: "catalog record" })?;
            let p = precip
                .iter()
                .find(|(id, _)| *id == r.fire_id)
                .map(|x| x.1)
                .ok_or_else(|| ClusterError::Join { fire: r.fire_id.clone(), what: "precipitation" })?;
            let f = FireFeature { fire_id: r.fire_id.clone(), lon: rec.lon, lat: rec.lat, k_hat: r.mean_k, l_hat: r.mean_l, precip: p };
            if f.vector().iter().any(|v| !v.is_finite()) {
                return Err(ClusterError::NonFiniteFeature(f.fire_id));
            }
            Ok(f)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMax {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl MinMax {
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(d, &v)| if self.hi[d] > self.lo[d] { (v - self.lo[d]) / (self.hi[d] - self.lo[d]) } else { 0.5 })
            .collect()
    }

    /// Constant dimensions come back as their single value.
    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(d, &v)| if self.hi[d] > self.lo[d] { self.lo[d] + v * (self.hi[d] - self.lo[d]) } else { self.lo[d] })
            .collect()
    }
}

/// Each dimension to `[0, 1]`; constant dimensions to 0.5.
pub fn minmax_normalize(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, MinMax), ClusterError> {
    if rows.len() < 2 {
        return Err(ClusterError::TooFewPoints { need: 2, got: rows.len() });
    }
    let dim = rows[0].len();
    let mut mm = MinMax { lo: vec![f64::INFINITY; dim], hi: vec![f64::NEG_INFINITY; dim] };
    for r in rows {
        for d in 0..dim {
            mm.lo[d] = mm.lo[d].min(r[d]);
            mm.hi[d] = mm.hi[d].max(r[d]);
        }
    }
    Ok((rows.iter().map(|r| mm.apply(r)).collect(), mm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub ks: Vec<usize>,
    /// `labels[i][f]` is the label of fire `f` under `ks[i]`.
    pub labels: Vec<Vec<usize>>,
    /// `mean_abs_k[i][c]` is the mean |k_hat| of cluster `c` under `ks[i]`.
    pub mean_abs_k: Vec<Vec<f64>>,
}

/// Clusters the normalized feature vectors for each `k` that fits.
pub fn cluster_fires(features: &[FireFeature], normalized: &[Vec<f64>], ks: &[usize], seed: u64) -> Result<ClusterAssignment, ClusterError> {
    let mut out = ClusterAssignment { ks: vec![], labels: vec![], mean_abs_k: vec![] };
    for &k in ks {
        let km = kmeans(normalized, k, seed)?;
        let mut sums = vec![(0.0, 0usize); k];
        for (f, &l) in features.iter().zip(&km.labels) {
            sums[l].0 += f.k_hat.abs();
            sums[l].1 += 1;
        }
        out.ks.push(k);
        out.labels.push(km.labels);
        out.mean_abs_k.push(sums.iter().map(|&(s, n)| s / n.max(1) as f64).collect());
    }
    Ok(out)
}

pub fn clusters_csv(features: &[FireFeature], assignment: &ClusterAssignment, embedding: Option<&Embedding>) -> String {
    let mut out = String::from("fire_id,lon,lat,k_hat,L_hat,p");
    for k in &assignment.ks {
        let _ = write!(out, ",label_k{k}");
    }
    if embedding.is_some() {
        out.push_str(",umap_x,umap_y");
    }
    out.push('\n');
    for (i, f) in features.iter().enumerate() {
        let _ = write!(out, "{},{},{},{},{},{}", f.fire_id, f.lon, f.lat, f.k_hat, f.l_hat, f.precip);
        for labels in &assignment.labels {
            let _ = write!(out, ",{}", labels[i]);
        }
        if let Some(e) = embedding {
            let _ = write!(out, ",{},{}", e.coords[i][0], e.coords[i][1]);
        }
        out.push('\n');
    }
    out
}

/// Labels per `k`, read back from [`clusters_csv`] output.
pub fn parse_cluster_labels(text: &str) -> Result<Vec<(usize, Vec<usize>)>, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
    let cols: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("label_k").and_then(|k| k.parse().ok()).map(|k| (i, k)))
        .collect();
    let mut out: Vec<(usize, Vec<usize>)> = cols.iter().map(|&(_, k)| (k, vec![])).collect();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        for (slot, &(i, _)) in cols.iter().enumerate() {
            let v = fields.get(i).and_then(|f| f.parse().ok()).ok_or_else(|| format!("line {}: bad label", n + 2))?;
            out[slot].1.push(v);
        }
    }
    Ok(out)
}

const PALETTE: [&str; 10] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b2df8a"];
pub const MAX_MARKER_RADIUS: f64 = 14.0;

/// Equirectangular lon/lat scatter for the `which`-th clustering; marker
/// radius scales with the cluster's mean |k_hat|.
pub fn cluster_map_svg(features: &[FireFeature], assignment: &ClusterAssignment, which: usize) -> String {
    let (w, h, pad) = (640.0, 520.0, 50.0);
    let (lo_x, hi_x) = bounds(features.iter().map(|f| f.lon));
    let (lo_y, hi_y) = bounds(features.iter().map(|f| f.lat));
    let sx = |v: f64| pad + (v - lo_x) / (hi_x - lo_x) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - lo_y) / (hi_y - lo_y) * (h - 2.0 * pad);
    let means = &assignment.mean_abs_k[which];
    let top = means.iter().cloned().fold(0.0, f64::max);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(s, "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", h - pad, w - pad, h - pad);
    let _ = writeln!(s, "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>", h - pad);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">longitude ({lo_x:.2} to {hi_x:.2})</text>", w / 2.0, h - 15.0);
    let _ = writeln!(
        s,
        "<text x=\"15\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">latitude ({lo_y:.2} to {hi_y:.2})</text>",
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(s, "<text x=\"{pad}\" y=\"30\" font-size=\"14\">k = {}</text>", assignment.ks[which]);
    for (f, &l) in features.iter().zip(&assignment.labels[which]) {
        let r = marker_radius(means[l], top);
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r:.3}\" fill=\"{}\" fill-opacity=\"0.7\" stroke=\"black\" stroke-width=\"0.5\"><title>{} cluster {l}</title></circle>",
            sx(f.lon),
            sy(f.lat),
            PALETTE[l % PALETTE.len()],
            f.fire_id
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn marker_radius(mean_abs_k: f64, largest: f64) -> f64 {
    if largest > 0.0 {
        MAX_MARKER_RADIUS * mean_abs_k / largest
    } else {
        MAX_MARKER_RADIUS
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{YearMonth, DEFAULT_CHANNELS};

    fn record(id: &str, lon: f64, lat: f64) -> FireRecord {
        FireRecord { id: id.into(), name: id.into(), lon, lat, containment_month: YearMonth { year: 2019, month: 5 }, acres: 5000.0 }
    }

    fn recovery(id: &str, k: f64) -> FireRecovery {
        FireRecovery { fire_id: id.into(), mean_k: k, mean_l: 1.0, n_pixels: 10 }
    }

    #[test]
    fn precip_feature() {
        let mut s = RasterStack::new(8, 3, 3, &DEFAULT_CHANNELS);
        let ch = s.channel_index(PRECIP).unwrap();
        for t in 0..8 {
            for p in 0..9 {
                s.set(t, p / 3, p % 3, ch, if t < 5 { 2.0 } else { 100.0 });
            }
        }
        assert_eq!(early_precip(&s).unwrap(), 2.0);
        for t in 0..5 {
            for p in 0..9 {
                s.set(t, p / 3, p % 3, ch, (t * 9 + p) as f32);
            }
        }
        let want = (0..45).map(|v| v as f64).sum::<f64>() / 45.0;
        assert!((early_precip(&s).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn join_errors_name_the_fire() {
        let cat = vec![record("A", -120.0, 37.0)];
        let p = vec![("A".to_string(), 1.0)];
        let f = build_features(&[recovery("A", 0.2)], &cat, &p).unwrap();
        assert_eq!(f[0].vector(), [-120.0, 37.0, 0.2, 1.0, 1.0]);
        match build_features(&[recovery("B", 0.2)], &cat, &p) {
            Err(ClusterError::Join { fire, .. }) => assert_eq!(fire, "B"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn normalize_examples() {
        let rows = vec![vec![1.0, 5.0, 3.0], vec![3.0, 5.0, -1.0]];
        let (n, mm) = minmax_normalize(&rows).unwrap();
        assert_eq!(n, vec![vec![0.0, 0.5, 1.0], vec![1.0, 0.5, 0.0]]);
        for (r, nr) in rows.iter().zip(&n) {
            assert_eq!(&mm.invert(nr), r);
        }
        assert!(minmax_normalize(&rows[..1]).is_err());
    }

    #[test]
    fn csv_round_trip_and_radii() {
        let feats: Vec<FireFeature> = (0..4)
            .map(|i| FireFeature { fire_id: format!("F{i}"), lon: i as f64, lat: 0.0, k_hat: if i < 2 { 0.1 } else { -0.4 }, l_hat: 1.0, precip: 0.0 })
            .collect();
        let asg = ClusterAssignment { ks: vec![2], labels: vec![vec![0, 0, 1, 1]], mean_abs_k: vec![vec![0.1, 0.4]] };
        let csv = clusters_csv(&feats, &asg, None);
        assert!(csv.starts_with("fire_id,lon,lat,k_hat,L_hat,p,label_k2\n"));
        assert_eq!(parse_cluster_labels(&csv).unwrap(), vec![(2, vec![0, 0, 1, 1])]);
        let r = (marker_radius(0.1, 0.4), marker_radius(0.4, 0.4));
        assert!((r.1 / r.0 - 4.0).abs() < 1e-12);
        let svg = cluster_map_svg(&feats, &asg, 0);
        assert_eq!(svg.matches("<circle").count(), 4);
    }

    #[test]
    fn single_fire_map() {
        let feats = vec![FireFeature { fire_id: "A".into(), lon: -120.0, lat: 36.0, k_hat: 0.3, l_hat: 1.0, precip: 1.0 }];
        let asg = ClusterAssignment { ks: vec![1], labels: vec![vec![0]], mean_abs_k: vec![vec![0.3]] };
        assert_eq!(clusters_csv(&feats, &asg, None).lines().count(), 2);
        assert_eq!(cluster_map_svg(&feats, &asg, 0).matches("<circle").count(), 1);
    }

    #[test]
    fn clustering_computes_means() {
        let feats: Vec<FireFeature> = (0..6)
            .map(|i| FireFeature { fire_id: format!("F{i}"), lon: if i < 3 { 0.0 } else { 10.0 }, lat: 0.0, k_hat: if i < 3 { -0.2 } else { 0.5 }, l_hat: 1.0, precip: 0.0 })
            .collect();
        let rows: Vec<Vec<f64>> = feats.iter().map(|f| f.vector().to_vec()).collect();
        let (norm, _) = minmax_normalize(&rows).unwrap();
        let asg = cluster_fires(&feats, &norm, &[2], 1).unwrap();
        assert_eq!(asg.labels[0], vec![0, 0, 0, 1, 1, 1]);
        assert!((asg.mean_abs_k[0][0] - 0.2).abs() < 1e-12 && (asg.mean_abs_k[0][1] - 0.5).abs() < 1e-12);
    }
}

//! Behavioural statistics over typed data: per-key positions, z-normalized
//! drift over repeated keystrokes, and keyboard scale/offset.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::data::TypedPhrase;
use crate::error::{Error, Result};

/// z values beyond this magnitude are cut off when plotted.
pub const Z_PLOT_LIMIT: f64 = 4.0;
/// Inputs averaged at each end of a session for the offset.
pub const OFFSET_WINDOW: usize = 10;

/// Running mean and population variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn pop_std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharStat {
    pub participant: String,
    pub char: char,
    pub mean_x: f64,
    pub mean_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub count: usize,
}

/// Entries sorted by (participant, char).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CharPositionStats {
    pub entries: Vec<CharStat>,
}

impl CharPositionStats {
    pub fn get(&self, participant: &str, c: char) -> Option<&CharStat> {
        self.entries
            .binary_search_by(|e| (e.participant.as_str(), e.char).cmp(&(participant, c)))
            .ok()
            .map(|i| &self.entries[i])
    }
}

type Occurrences = BTreeMap<(String, char), Vec<(f64, f64)>>;

/// Every (participant, char) observation sequence in typing order.
fn occurrences(data: &[TypedPhrase]) -> Occurrences {
    let mut out = Occurrences::new();
    for phrase in data {
        for (c, k) in phrase.phrase.chars().zip(&phrase.points) {
            out.entry((phrase.meta.participant_id.clone(), c))
                .or_default()
                .push((k.point.x, k.point.y));
        }
    }
    out
}

pub fn char_position_stats(data: &[TypedPhrase]) -> CharPositionStats {
    let entries = occurrences(data)
        .into_iter()
        .map(|((participant, c), obs)| {
            let (mut wx, mut wy) = (Welford::default(), Welford::default());
            for (x, y) in &obs {
                wx.push(*x);
                wy.push(*y);
            }
            CharStat {
                participant,
                char: c,
                mean_x: wx.mean,
                mean_y: wy.mean,
                sigma_x: wx.pop_std(),
                sigma_y: wy.pop_std(),
                count: obs.len(),
            }
        })
        .collect();
    CharPositionStats { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZPoint {
    /// 1-based occurrence index.
    pub t: usize,
    pub z_x: f64,
    pub z_y: f64,
    pub count: usize,
}

impl ZPoint {
    pub fn exceeds_plot_limit(&self) -> bool {
        self.z_x.abs() > Z_PLOT_LIMIT || self.z_y.abs() > Z_PLOT_LIMIT
    }
}

/// Mean standard score of the t-th occurrence across all (participant, char)
/// pairs typed at least t times. A pair with zero spread on either axis is
/// left out entirely; indices with no contributing pair are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZSeries {
    pub points: Vec<ZPoint>,
}

pub fn z_series(data: &[TypedPhrase], stats: &CharPositionStats) -> ZSeries {
    let mut sums: Vec<(f64, f64, usize)> = Vec::new();
    for ((participant, c), obs) in occurrences(data) {
        let Some(s) = stats.get(&participant, c) else {
            continue;
        };
        if s.sigma_x == 0.0 || s.sigma_y == 0.0 {
            continue;
        }
        if sums.len() < obs.len() {
            sums.resize(obs.len(), (0.0, 0.0, 0));
        }
        for (t, (x, y)) in obs.iter().enumerate() {
            let e = &mut sums[t];
            e.0 += (x - s.mean_x) / s.sigma_x;
            e.1 += (y - s.mean_y) / s.sigma_y;
            e.2 += 1;
        }
    }
    let points = sums
        .into_iter()
        .enumerate()
        .map(|(i, (zx, zy, n))| ZPoint {
            t: i + 1,
            z_x: zx / n as f64,
            z_y: zy / n as f64,
            count: n,
        })
        .collect();
    ZSeries { points }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut w = Welford::default();
        for &s in samples {
            w.push(s);
        }
        Some(Self {
            mean: w.mean,
            std: w.pop_std(),
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n: samples.len(),
        })
    }
}

/// Raw per-sentence scale samples and per-participant offsets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScaleOffsetSamples {
    pub scale_x: Vec<f64>,
    pub scale_y: Vec<f64>,
    pub offset_x: Vec<f64>,
    pub offset_y: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScaleOffsetStats {
    pub samples: ScaleOffsetSamples,
    pub scale_x: Option<Summary>,
    pub scale_y: Option<Summary>,
    pub offset_x: Option<Summary>,
    pub offset_y: Option<Summary>,
}

fn mean_of(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let (mut wx, mut wy) = (Welford::default(), Welford::default());
    for (x, y) in points {
        wx.push(x);
        wy.push(y);
    }
    (wx.n > 0).then_some((wx.mean, wy.mean))
}

/// Mean 'p' position minus mean space position in one sentence.
fn space_to_p(phrase: &TypedPhrase) -> Option<(f64, f64)> {
    let at = |want: char| {
        mean_of(
            phrase
                .phrase
                .chars()
                .zip(&phrase.points)
                .filter(move |(c, _)| *c == want)
                .map(|(_, k)| (k.point.x, k.point.y)),
        )
    };
    let (px, py) = at('p')?;
    let (sx, sy) = at(' ')?;
    Some((px - sx, py - sy))
}

/// Scale: each qualifying sentence's space-to-'p' vector divided, per axis, by
/// the participant's first one (an axis whose first component is zero yields
/// no samples). Offset: mean of the first `OFFSET_WINDOW` inputs of the whole
/// session minus the mean of the last ones, for sessions of at least twice
/// that many inputs.
pub fn scale_offset_stats(data: &[TypedPhrase]) -> ScaleOffsetStats {
    let mut order: Vec<&str> = Vec::new();
    let mut by_participant: HashMap<&str, Vec<&TypedPhrase>> = HashMap::new();
    for p in data {
        let id = p.meta.participant_id.as_str();
        by_participant
            .entry(id)
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(p);
    }

    let mut s = ScaleOffsetSamples::default();
    for id in order {
        let phrases = &by_participant[id];
        let vectors: Vec<(f64, f64)> = phrases.iter().filter_map(|p| space_to_p(p)).collect();
        if let Some(&(fx, fy)) = vectors.first() {
            if fx != 0.0 {
                s.scale_x.extend(vectors.iter().map(|v| v.0 / fx));
            }
            if fy != 0.0 {
                s.scale_y.extend(vectors.iter().map(|v| v.1 / fy));
            }
        }

        let session: Vec<(f64, f64)> = phrases
            .iter()
            .flat_map(|p| p.points.iter().map(|k| (k.point.x, k.point.y)))
            .collect();
        if session.len() >= 2 * OFFSET_WINDOW {
            let first = mean_of(session[..OFFSET_WINDOW].iter().copied()).expect("non-empty");
            let last = mean_of(session[session.len() - OFFSET_WINDOW..].iter().copied()).expect("non-empty");
            s.offset_x.push(first.0 - last.0);
            s.offset_y.push(first.1 - last.1);
        }
    }
    ScaleOffsetStats {
        scale_x: Summary::of(&s.scale_x),
        scale_y: Summary::of(&s.scale_y),
        offset_x: Summary::of(&s.offset_x),
        offset_y: Summary::of(&s.offset_y),
        samples: s,
    }
}

pub const CHAR_STATS_FILE: &str = "char_stats.csv";
pub const Z_SERIES_FILE: &str = "z_series.csv";
pub const SCALE_OFFSET_FILE: &str = "scale_offset.csv";

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let wrap = |e: csv::Error| Error::InvalidArgument(format!("csv encoding failed: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(wrap)?;
    fill(&mut w).map_err(wrap)?;
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// Writes the three CSV tables into `dir`, creating it if needed.
pub fn export_analysis(
    stats: &CharPositionStats,
    z: &ZSeries,
    scale_offset: &ScaleOffsetStats,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let chars = csv_bytes(
        &["participant", "char", "mean_x", "mean_y", "sigma_x", "sigma_y", "count"],
        |w| {
            for e in &stats.entries {
                w.write_record([
                    e.participant.clone(),
                    e.char.to_string(),
                    e.mean_x.to_string(),
                    e.mean_y.to_string(),
                    e.sigma_x.to_string(),
                    e.sigma_y.to_string(),
                    e.count.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    write_file(dir, CHAR_STATS_FILE, &chars)?;

    let zs = csv_bytes(&["t", "z_x", "z_y", "count"], |w| {
        for p in &z.points {
            w.write_record([p.t.to_string(), p.z_x.to_string(), p.z_y.to_string(), p.count.to_string()])?;
        }
        Ok(())
    })?;
    write_file(dir, Z_SERIES_FILE, &zs)?;

    let rows = [
        ("scale", "x", scale_offset.scale_x),
        ("scale", "y", scale_offset.scale_y),
        ("offset", "x", scale_offset.offset_x),
        ("offset", "y", scale_offset.offset_y),
    ];
    let so = csv_bytes(&["metric", "axis", "mean", "std", "min", "max"], |w| {
        for (metric, axis, sum) in rows {
            if let Some(s) = sum {
                w.write_record([
                    metric.to_string(),
                    axis.to_string(),
                    s.mean.to_string(),
                    s.std.to_string(),
                    s.min.to_string(),
                    s.max.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    write_file(dir, SCALE_OFFSET_FILE, &so)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Keystroke, SessionMeta, SourceCorpus, TouchPoint, VocabSpec};

    pub(crate) fn phrase(pid: &str, text: &str, xy: &[(f64, f64)]) -> TypedPhrase {
        let v = VocabSpec::english();
        TypedPhrase {
            meta: SessionMeta::new(pid, 1080, 1920),
            phrase: text.to_string(),
            points: text
                .chars()
                .zip(xy)
                .enumerate()
                .map(|(i, (c, &(x, y)))| Keystroke {
                    point: TouchPoint::new(x, y, i as i64 * 100),
                    char_index: v.encode_char(c),
                })
                .collect(),
            source_corpus: SourceCorpus::Synthetic,
        }
    }

    fn a_three_times() -> Vec<TypedPhrase> {
        vec![phrase("u1", "aaa", &[(0.0, 5.0), (10.0, 6.0), (20.0, 7.0)])]
    }

    #[test]
    fn char_stats_example() {
        let s = char_position_stats(&a_three_times());
        let a = s.get("u1", 'a').unwrap();
        assert_eq!(a.mean_x, 10.0);
        assert!((a.sigma_x - (200.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((a.sigma_x - 8.1650).abs() < 1e-4);
        assert_eq!(a.count, 3);
    }

    #[test]
    fn single_occurrence_has_zero_sigma() {
        let s = char_position_stats(&[phrase("u1", "q", &[(3.5, 4.0)])]);
        let q = s.get("u1", 'q').unwrap();
        assert_eq!((q.mean_x, q.mean_y, q.sigma_x, q.sigma_y, q.count), (3.5, 4.0, 0.0, 0.0, 1));
    }

    #[test]
    fn participants_are_grouped_separately() {
        let xy = [(1.0, 2.0), (3.0, 4.0)];
        let s = char_position_stats(&[phrase("u1", "ab", &xy), phrase("u2", "ab", &xy)]);
        assert_eq!(s.entries.len(), 4);
        let (a1, a2) = (s.get("u1", 'a').unwrap(), s.get("u2", 'a').unwrap());
        assert_eq!((a1.mean_x, a1.count), (a2.mean_x, a2.count));
    }

    #[test]
    fn z_first_occurrence_example() {
        let data = a_three_times();
        let z = z_series(&data, &char_position_stats(&data));
        assert!((z.points[0].z_x + 1.224_744_871_391_589).abs() < 1e-12);
        assert_eq!(z.points.len(), 3);
        assert_eq!(z.points[0].count, 1);
    }

    #[test]
    fn constant_typist_contributes_nothing() {
        let data = vec![phrase("u1", "abab", &[(1.0, 1.0), (9.0, 9.0), (1.0, 1.0), (9.0, 9.0)])];
        let z = z_series(&data, &char_position_stats(&data));
        assert!(z.points.is_empty());
    }

    #[test]
    fn symmetric_deviations_give_zero() {
        // Two chars whose first occurrences deviate by equal and opposite amounts.
        let data = vec![phrase(
            "u1",
            "abab",
            &[(0.0, 0.0), (12.0, 12.0), (2.0, 2.0), (10.0, 10.0)],
        )];
        let z = z_series(&data, &char_position_stats(&data));
        assert_eq!(z.points[0].z_x, 0.0);
        assert_eq!(z.points[1].z_y, 0.0);
    }

    #[test]
    fn plot_limit_flag() {
        let p = ZPoint { t: 1, z_x: 4.5, z_y: 0.0, count: 1 };
        assert!(p.exceeds_plot_limit());
        assert!(!ZPoint { z_x: 4.0, ..p }.exceeds_plot_limit());
    }

    #[test]
    fn identical_vectors_give_unit_scale() {
        let xy = [(900.0, 1500.0), (500.0, 1800.0)];
        let data: Vec<_> = (0..4).map(|_| phrase("u1", "p ", &xy)).collect();
        let s = scale_offset_stats(&data);
        assert_eq!(s.samples.scale_x, vec![1.0; 4]);
        assert_eq!(s.samples.scale_y, vec![1.0; 4]);
        assert!(s.samples.offset_x.is_empty());
    }

    #[test]
    fn coinciding_windows_give_zero_offset() {
        let xy: Vec<(f64, f64)> = (0..25).map(|i| ((i % 5) as f64 * 10.0, 100.0)).collect();
        let data = vec![phrase("u1", &"abcde".repeat(5), &xy)];
        let s = scale_offset_stats(&data);
        assert_eq!(s.samples.offset_x, vec![0.0]);
        assert_eq!(s.samples.offset_y, vec![0.0]);
    }

    #[test]
    fn short_sessions_and_unqualified_participants_excluded() {
        let data = vec![phrase("u1", "abc", &[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])];
        let s = scale_offset_stats(&data);
        assert_eq!(s, ScaleOffsetStats::default());
    }

    #[test]
    fn scale_ratio_per_sentence() {
        let data = vec![
            phrase("u1", "p a", &[(900.0, 1500.0), (500.0, 1800.0), (0.0, 0.0)]),
            phrase("u1", "p", &[(1.0, 1.0)]),
            phrase("u1", " p", &[(500.0, 1800.0), (1300.0, 1200.0)]),
        ];
        let s = scale_offset_stats(&data);
        assert_eq!(s.samples.scale_x, vec![1.0, 2.0]);
        assert_eq!(s.samples.scale_y, vec![1.0, 2.0]);
        let sum = s.scale_x.unwrap();
        assert_eq!((sum.mean, sum.std, sum.min, sum.max), (1.5, 0.5, 1.0, 2.0));
    }
}

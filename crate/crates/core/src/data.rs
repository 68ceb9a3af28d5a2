//! Datasets, CSV ingestion, standardization and synthetic generators.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng, STREAM_MIXTURE, STREAM_MOONS, STREAM_RINGS};

/// An `N × d` point matrix (row-major) with optional dense class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    values: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        points: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.is_empty() || dim == 0 {
            return Err(Error::InvalidInput(
                "dataset needs at least one non-empty point".into(),
            ));
        }
        if let Some(row) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "row {row} has {} features, expected {dim}",
                points[row].len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::InvalidInput(format!(
                    "{} labels for {} points",
                    l.len(),
                    points.len()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            values: points.into_iter().flatten().collect(),
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Number of distinct labels, if labeled.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut seen: Vec<usize> = l.clone();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        })
    }
}

/// Reads a CSV file. See [`parse_csv`].
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(parse_csv(file, has_header, label_column)?.with_name(name))
}

/// Parses numeric CSV. The optional label column may hold arbitrary strings;
/// they are mapped to dense ids in order of first appearance.
pub fn parse_csv(
    reader: impl Read,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut width = None;
    let mut last_line = 0;

    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        last_line = line;
        if has_header && i == 0 {
            continue;
        }
        if record.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            Some(_) => {}
        }
        if let Some(col) = label_column {
            if col >= record.len() {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "label column {col} out of range for {} fields",
                        record.len()
                    ),
                });
            }
        }

        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_column {
                let next = label_ids.len();
                labels.push(*label_ids.entry(cell.to_string()).or_insert(next));
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value {cell:?} in column {j}"),
            })?;
            row.push(v);
        }
        if row.is_empty() {
            return Err(Error::Parse {
                line,
                message: "row has no feature columns".into(),
            });
        }
        points.push(row);
    }

    if points.is_empty() {
        return Err(Error::Parse {
            line: last_line.max(1),
            message: "no data rows".into(),
        });
    }
    Dataset::new("", points, label_column.map(|_| labels))
}

/// Writes `x0..x{d-1}[,label]` with a header row. Values use the shortest
/// decimal form that parses back to the identical double.
pub fn write_csv(data: &Dataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    if data.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for (i, p) in data.points().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = data.labels() {
            row.push(l[i].to_string());
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(data, std::fs::File::create(path)?)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Per-feature affine transform produced by [`standardize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(crate::error::dim_mismatch(self.mean.len(), data.dim()));
        }
        let values = data
            .values
            .chunks_exact(data.dim)
            .flat_map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(j, v)| (v - self.mean[j]) / self.std[j])
            })
            .collect();
        Ok(Dataset {
            values,
            ..data.clone()
        })
    }
}

/// Zero-mean, unit (population) variance per feature. Constant features are
/// centered and keep a divisor of 1.
pub fn standardize(data: &Dataset) -> Result<(Dataset, Standardization)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "standardization needs at least two points".into(),
        ));
    }
    let d = data.dim();
    let mut mean = vec![0.0; d];
    for p in data.points() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for p in data.points() {
        for j in 0..d {
            var[j] += (p[j] - mean[j]).powi(2);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let transform = Standardization { mean, std };
    Ok((transform.apply(data)?, transform))
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Two noisy concentric circles around a central Gaussian blob.
///
/// Labels: 0 for the blob, then one label per ring in the order of `radii`.
/// Ring points get isotropic noise of `noise_sigma`; the blob's standard
/// deviation is `0.15 · min(radii)`.
pub fn gen_rings(
    n_per_ring: usize,
    radii: [f64; 2],
    noise_sigma: f64,
    center_n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_per_ring == 0 || center_n == 0 {
        return Err(Error::InvalidInput(
            "ring and center counts must be positive".into(),
        ));
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii[0] == radii[1] {
        return Err(Error::InvalidInput(
            "radii must be distinct and positive".into(),
        ));
    }
    check_sigma(noise_sigma)?;
    let mut rng = stream_rng(seed, STREAM_RINGS);
    let blob_sigma = 0.15 * radii[0].min(radii[1]);
    let mut points = Vec::with_capacity(center_n + 2 * n_per_ring);
    let mut labels = Vec::with_capacity(points.capacity());
    for _ in 0..center_n {
        points.push(vec![
            blob_sigma * normal(&mut rng),
            blob_sigma * normal(&mut rng),
        ]);
        labels.push(0);
    }
    for (ring, &r) in radii.iter().enumerate() {
        for _ in 0..n_per_ring {
            let theta = rng.random_range(0.0..2.0 * PI);
            let (s, c) = theta.sin_cos();
            points.push(vec![
                r * c + noise_sigma * normal(&mut rng),
                r * s + noise_sigma * normal(&mut rng),
            ]);
            labels.push(ring + 1);
        }
    }
    Dataset::new("rings", points, Some(labels))
}

/// Two interleaved unit half-circles. Points are evenly spaced along each
/// arc before isotropic noise is added.
pub fn gen_moons(n_per_moon: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n_per_moon == 0 {
        return Err(Error::InvalidInput("moon size must be positive".into()));
    }
    check_sigma(noise_sigma)?;
    let mut rng = stream_rng(seed, STREAM_MOONS);
    let mut points = Vec::with_capacity(2 * n_per_moon);
    let mut labels = Vec::with_capacity(2 * n_per_moon);
    let step = if n_per_moon > 1 {
        PI / (n_per_moon - 1) as f64
    } else {
        0.0
    };
    for moon in 0..2 {
        for i in 0..n_per_moon {
            let (s, c) = (i as f64 * step).sin_cos();
            let (x, y) = if moon == 0 {
                (c, s)
            } else {
                (1.0 - c, 0.5 - s)
            };
            points.push(vec![
                x + noise_sigma * normal(&mut rng),
                y + noise_sigma * normal(&mut rng),
            ]);
            labels.push(moon);
        }
    }
    Dataset::new("moons", points, Some(labels))
}

/// Isotropic Gaussian mixture; component `k` gets label `k`.
pub fn gen_gaussian_mixture(
    counts: &[usize],
    means: &[Vec<f64>],
    sigmas: &[f64],
    seed: u64,
) -> Result<Dataset> {
    if counts.is_empty() || counts.len() != means.len() || counts.len() != sigmas.len() {
        return Err(Error::InvalidInput(
            "counts, means and sigmas must be non-empty parallel lists".into(),
        ));
    }
    let dim = means[0].len();
    if dim == 0 || means.iter().any(|m| m.len() != dim) {
        return Err(Error::InvalidInput(
            "component means must share a positive dimension".into(),
        ));
    }
    if counts.contains(&0) {
        return Err(Error::InvalidInput(
            "component counts must be positive".into(),
        ));
    }
    for &s in sigmas {
        check_sigma(s)?;
    }
    let mut rng = stream_rng(seed, STREAM_MIXTURE);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (k, ((&n, mean), &sigma)) in counts.iter().zip(means).zip(sigmas).enumerate() {
        for _ in 0..n {
            points.push(mean.iter().map(|m| m + sigma * normal(&mut rng)).collect());
            labels.push(k);
        }
    }
    Dataset::new("gaussian-mixture", points, Some(labels))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "noise sigma must be non-negative, got {sigma}"
        )))
    }
}

/// Named synthetic layouts used by the command line and the demo.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Rings,
    Moons,
    Gauss3,
    Gauss4,
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rings" => Ok(Shape::Rings),
            "moons" => Ok(Shape::Moons),
            "gauss3" => Ok(Shape::Gauss3),
            "gauss4" => Ok(Shape::Gauss4),
            other => Err(Error::InvalidInput(format!(
                "unknown shape {other:?} (expected rings, moons, gauss3 or gauss4)"
            ))),
        }
    }
}

impl Shape {
    /// Generates `n` points per component. `noise` overrides the default
    /// spread (0.05 for rings and moons, 0.35 for the mixtures).
    pub fn generate(self, n: usize, noise: Option<f64>, seed: u64) -> Result<Dataset> {
        match self {
            Shape::Rings => gen_rings(n, [1.0, 2.0], noise.unwrap_or(0.05), n, seed),
            Shape::Moons => gen_moons(n, noise.unwrap_or(0.05), seed),
            Shape::Gauss3 => {
                let means = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![1.5, 2.6]];
                let s = noise.unwrap_or(0.35);
                gen_gaussian_mixture(&[n; 3], &means, &[s; 3], seed).map(|d| d.with_name("gauss3"))
            }
            Shape::Gauss4 => {
                let means = vec![
                    vec![-2.0, -2.0],
                    vec![2.0, -2.0],
                    vec![-2.0, 2.0],
                    vec![2.0, 2.0],
                ];
                let s = noise.unwrap_or(0.35);
                gen_gaussian_mixture(&[n; 4], &means, &[s; 4], seed).map(|d| d.with_name("gauss4"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_label_column() {
        let d = parse_csv("1,2,A\n3,4,B".as_bytes(), false, Some(2)).unwrap();
        assert_eq!(d.point(0), &[1.0, 2.0]);
        assert_eq!(d.point(1), &[3.0, 4.0]);
        assert_eq!(d.labels(), Some(&[0, 1][..]));
    }

    #[test]
    fn header_is_skipped() {
        let d = parse_csv("a,b\n1,2\n3,4\n".as_bytes(), true, None).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.labels().is_none());
    }

    #[test]
    fn ragged_row_names_its_line() {
        match parse_csv("1,2\n3\n".as_bytes(), false, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_empty_inputs_fail() {
        assert!(matches!(
            parse_csv("1,x\n".as_bytes(), false, None),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_csv("".as_bytes(), false, None),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_csv("h1,h2\n".as_bytes(), true, None),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn labels_map_in_first_appearance_order() {
        let d = parse_csv("1,z\n2,a\n3,z\n".as_bytes(), false, Some(1)).unwrap();
        assert_eq!(d.labels(), Some(&[0, 1, 0][..]));
    }

    #[test]
    fn standardize_centers_and_scales() {
        let data = Dataset::new(
            "t",
            vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]],
            None,
        )
        .unwrap();
        let (s, t) = standardize(&data).unwrap();
        assert_eq!(t.mean, vec![3.0, 5.0]);
        assert_eq!(t.std[1], 1.0);
        assert!((t.std[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let col0: Vec<f64> = s.points().map(|p| p[0]).collect();
        assert!(col0.iter().sum::<f64>().abs() < 1e-12);
        assert!(s.points().all(|p| p[1] == 0.0));
        assert_eq!(t.apply(&data).unwrap(), s);
    }

    #[test]
    fn standardize_is_idempotent_on_standard_data() {
        let data = gen_moons(50, 0.1, 3).unwrap();
        let (once, _) = standardize(&data).unwrap();
        let (_, t) = standardize(&once).unwrap();
        assert!(t.mean.iter().all(|m| m.abs() < 1e-9));
        assert!(t.std.iter().all(|s| (s - 1.0).abs() < 1e-9));
    }

    #[test]
    fn standardize_needs_two_points() {
        let data = Dataset::new("t", vec![vec![1.0]], None).unwrap();
        assert!(standardize(&data).is_err());
    }

    #[test]
    fn rings_shape() {
        let a = gen_rings(40, [1.0, 2.0], 0.0, 30, 7).unwrap();
        let b = gen_rings(40, [1.0, 2.0], 0.0, 30, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 110);
        assert_eq!(a.num_classes(), Some(3));
        let labels = a.labels().unwrap();
        for (i, p) in a.points().enumerate() {
            let r = p[0].hypot(p[1]);
            match labels[i] {
                1 => assert!((r - 1.0).abs() < 1e-12),
                2 => assert!((r - 2.0).abs() < 1e-12),
                _ => {}
            }
        }
        assert!(gen_rings(10, [1.0, 1.0], 0.1, 5, 0).is_err());
    }

    #[test]
    fn moons_shape() {
        let a = gen_moons(30, 0.0, 11).unwrap();
        assert_eq!(a, gen_moons(30, 0.0, 11).unwrap());
        assert_eq!(a.num_classes(), Some(2));
        for (p, &l) in a.points().zip(a.labels().unwrap()) {
            let (cx, cy) = if l == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            assert!(((p[0] - cx).hypot(p[1] - cy) - 1.0).abs() < 1e-12);
            if l == 0 {
                assert!(p[1] >= -1e-12);
            } else {
                assert!(p[1] <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn mixture_shape() {
        let means = vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![-5.0, 5.0]];
        let zero = gen_gaussian_mixture(&[4, 4, 4], &means, &[0.0; 3], 1).unwrap();
        assert_eq!(zero.num_classes(), Some(3));
        for (p, &l) in zero.points().zip(zero.labels().unwrap()) {
            assert_eq!(p, &means[l][..]);
        }

        let n = 2000;
        let sigma = 0.5;
        let d = gen_gaussian_mixture(&[n; 3], &means, &[sigma; 3], 2).unwrap();
        assert_eq!(
            d,
            gen_gaussian_mixture(&[n; 3], &means, &[sigma; 3], 2).unwrap()
        );
        for (k, mean) in means.iter().enumerate() {
            let members: Vec<&[f64]> = d
                .points()
                .zip(d.labels().unwrap())
                .filter(|(_, &l)| l == k)
                .map(|(p, _)| p)
                .collect();
            for j in 0..2 {
                let m = members.iter().map(|p| p[j]).sum::<f64>() / n as f64;
                assert!((m - mean[j]).abs() <= 3.0 * sigma / (n as f64).sqrt());
            }
        }
        assert!(gen_gaussian_mixture(&[1, 2], &means, &[0.1; 3], 0).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_bits() {
        let data = gen_rings(20, [1.0, 2.0], 0.05, 10, 5).unwrap();
        let mut buf = Vec::new();
        write_csv(&data, &mut buf).unwrap();
        let dim = data.dim();
        let back = parse_csv(&buf[..], true, Some(dim)).unwrap();
        assert_eq!(back.with_name("rings"), data);
    }

    #[test]
    fn shapes_parse() {
        assert_eq!("moons".parse::<Shape>().unwrap(), Shape::Moons);
        assert!("spiral".parse::<Shape>().is_err());
        assert_eq!(
            Shape::Gauss4.generate(10, None, 1).unwrap().num_classes(),
            Some(4)
        );
    }
}

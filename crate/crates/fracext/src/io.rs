//! Plain-text field, extension, and metric files.
//!
//! Three self-describing formats, all whitespace-tokenized decimal text with
//! 17-significant-digit samples (lossless for `f64`):
//!
//! * `FLD1 n N period` followed by the `N^n` samples in row-major order;
//! * `EXT1 n N M gamma` followed by the `M` extension heights and then one
//!   `FLD1` block per level and height, level-major;
//! * `MET1 n N` followed by per-point upper-triangle coefficient entries
//!   (1 per point for n = 1, 3 for n = 2).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::extension::ExtensionField;
use crate::grid::{PeriodicGrid, SpectralField};
use crate::operator::MetricField;
use crate::Result;

/// Lossless decimal rendering of one sample (17 significant digits).
fn fmt_sample(v: f64) -> String {
    format!("{v:.16e}")
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedFile(msg.into())
}

/// Whitespace token cursor over a file body.
struct Tokens<'a> {
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens {
            iter: text.split_whitespace(),
        }
    }

    fn word(&mut self, what: &str) -> Result<&'a str> {
        self.iter
            .next()
            .ok_or_else(|| malformed(format!("unexpected end of file, expected {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let w = self.word(what)?;
        w.parse()
            .map_err(|_| malformed(format!("bad {what}: {w:?}")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let w = self.word(what)?;
        w.parse()
            .map_err(|_| malformed(format!("bad {what}: {w:?}")))
    }

    fn finished(&mut self) -> Result<()> {
        match self.iter.next() {
            None => Ok(()),
            Some(w) => Err(malformed(format!("trailing content: {w:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// FLD1
// ---------------------------------------------------------------------------

fn push_field(out: &mut String, field: &SpectralField) {
    let grid = field.grid();
    let _ = writeln!(
        out,
        "FLD1 {} {} {}",
        grid.dimension(),
        grid.size(),
        fmt_sample(grid.period())
    );
    for row in field.values().chunks(grid.size()) {
        let line: Vec<String> = row.iter().map(|&v| fmt_sample(v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn parse_field(tok: &mut Tokens) -> Result<SpectralField> {
    let magic = tok.word("FLD1 magic")?;
    if magic != "FLD1" {
        return Err(malformed(format!("expected FLD1 magic, found {magic:?}")));
    }
    let n = tok.usize("dimension")?;
    let size = tok.usize("grid size")?;
    let period = tok.f64("period")?;
    let grid = PeriodicGrid::new(n, size, period)?;
    let total = grid.total_points();
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        values.push(tok.f64("field sample")?);
    }
    SpectralField::from_values(grid, values)
}

/// Serialize a field to FLD1 text.
pub fn field_to_string(field: &SpectralField) -> String {
    let mut out = String::new();
    push_field(&mut out, field);
    out
}

/// Parse FLD1 text (whole-document: trailing content is an error).
pub fn field_from_str(text: &str) -> Result<SpectralField> {
    let mut tok = Tokens::new(text);
    let field = parse_field(&mut tok)?;
    tok.finished()?;
    Ok(field)
}

pub fn write_field(field: &SpectralField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, field_to_string(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<SpectralField> {
    field_from_str(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// EXT1
// ---------------------------------------------------------------------------

/// Deserialized extension file: the sampled system levels at each height.
/// (The analytic per-mode profiles are not stored; files carry samples.)
pub struct ExtensionData {
    pub gamma: f64,
    pub ys: Vec<f64>,
    /// `levels[k][iy]` is the field `w_k(·, ys[iy])`.
    pub levels: Vec<Vec<SpectralField>>,
}

/// Serialize an extension field to EXT1 text.
pub fn extension_to_string(field: &ExtensionField) -> Result<String> {
    let tg = field.grid().tangential();
    let ys = field.grid().ys();
    let order = field.order();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "EXT1 {} {} {} {}",
        tg.dimension(),
        tg.size(),
        ys.len(),
        fmt_sample(order.gamma)
    );
    let yline: Vec<String> = ys.iter().map(|&y| fmt_sample(y)).collect();
    let _ = writeln!(out, "{}", yline.join(" "));
    for k in 0..=order.m {
        for iy in 0..ys.len() {
            let vals = field.values_at_node(k, iy)?;
            let f = SpectralField::from_values(tg.clone(), vals)?;
            push_field(&mut out, &f);
        }
    }
    Ok(out)
}

pub fn extension_from_str(text: &str) -> Result<ExtensionData> {
    let mut tok = Tokens::new(text);
    let magic = tok.word("EXT1 magic")?;
    if magic != "EXT1" {
        return Err(malformed(format!("expected EXT1 magic, found {magic:?}")));
    }
    let n = tok.usize("dimension")?;
    let size = tok.usize("grid size")?;
    let m_nodes = tok.usize("height count")?;
    let gamma = tok.f64("gamma")?;
    if n == 0 || size == 0 || m_nodes == 0 || !(gamma > 0.0) {
        return Err(malformed("degenerate EXT1 header"));
    }
    let mut ys = Vec::with_capacity(m_nodes);
    for _ in 0..m_nodes {
        ys.push(tok.f64("height")?);
    }
    let m = gamma.floor() as usize;
    let mut levels = Vec::with_capacity(m + 1);
    for _ in 0..=m {
        let mut per_node = Vec::with_capacity(m_nodes);
        for _ in 0..m_nodes {
            per_node.push(parse_field(&mut tok)?);
        }
        levels.push(per_node);
    }
    tok.finished()?;
    Ok(ExtensionData { gamma, ys, levels })
}

pub fn write_extension(field: &ExtensionField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, extension_to_string(field)?)?;
    Ok(())
}

pub fn read_extension(path: impl AsRef<Path>) -> Result<ExtensionData> {
    extension_from_str(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// MET1
// ---------------------------------------------------------------------------

/// Serialize a symmetric coefficient field to MET1 text.
pub fn metric_to_string(metric: &MetricField) -> Result<String> {
    if !metric.is_symmetric() {
        return Err(Error::invalid("MET1 stores symmetric coefficients only"));
    }
    let grid = metric.grid();
    let comps = metric.components();
    let mut out = String::new();
    let _ = writeln!(out, "MET1 {} {}", grid.dimension(), grid.size());
    for i in 0..grid.total_points() {
        let row: Vec<String> = match grid.dimension() {
            1 => vec![fmt_sample(comps[0][i])],
            // stored [a11, a12, a21, a22]; upper triangle
            _ => vec![
                fmt_sample(comps[0][i]),
                fmt_sample(comps[1][i]),
                fmt_sample(comps[3][i]),
            ],
        };
        let _ = writeln!(out, "{}", row.join(" "));
    }
    Ok(out)
}

pub fn metric_from_str(text: &str) -> Result<MetricField> {
    let mut tok = Tokens::new(text);
    let magic = tok.word("MET1 magic")?;
    if magic != "MET1" {
        return Err(malformed(format!("expected MET1 magic, found {magic:?}")));
    }
    let n = tok.usize("dimension")?;
    let size = tok.usize("grid size")?;
    let grid = PeriodicGrid::new(n, size, 2.0 * std::f64::consts::PI)?;
    let np = grid.total_points();
    let ncomp = if n == 1 { 1 } else { 3 };
    let mut comps = vec![Vec::with_capacity(np); ncomp];
    for _ in 0..np {
        for comp in comps.iter_mut() {
            comp.push(tok.f64("metric entry")?);
        }
    }
    tok.finished()?;
    MetricField::from_components(grid, comps)
}

pub fn write_metric(metric: &MetricField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, metric_to_string(metric)?)?;
    Ok(())
}

pub fn read_metric(path: impl AsRef<Path>) -> Result<MetricField> {
    metric_from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::{extend, ExtensionGrid};
    use crate::grid::FractionalOrder;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_round_trip_exact() {
        let grid = PeriodicGrid::standard(1, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let values: Vec<f64> = (0..32).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let f = SpectralField::from_values(grid, values).unwrap();
        let text = field_to_string(&f);
        let back = field_from_str(&text).unwrap();
        // 17 significant digits reproduce the doubles bit for bit
        assert_eq!(f.values(), back.values());
        assert_eq!(text, field_to_string(&back));
    }

    #[test]
    fn field_round_trip_two_dimensional() {
        let grid = PeriodicGrid::standard(2, 16).unwrap();
        let f = SpectralField::from_fn(grid, |x| (x[0].cos() + (2.0 * x[1]).sin()) / 3.0)
            .unwrap();
        let back = field_from_str(&field_to_string(&f)).unwrap();
        assert_eq!(f.values(), back.values());
        assert_eq!(back.grid().dimension(), 2);
    }

    #[test]
    fn wrong_magic_is_malformed() {
        assert!(matches!(
            field_from_str("XXD1 1 8 6.0\n0 0 0 0 0 0 0 0"),
            Err(Error::MalformedFile(_))
        ));
        assert!(matches!(
            extension_from_str("FLD1 1 8 6.0"),
            Err(Error::MalformedFile(_))
        ));
        assert!(matches!(
            metric_from_str(""),
            Err(Error::MalformedFile(_))
        ));
    }

    #[test]
    fn truncated_and_trailing_bodies_fail() {
        let grid = PeriodicGrid::standard(1, 8).unwrap();
        let f = SpectralField::from_fn(grid, |x| x[0].cos()).unwrap();
        let text = field_to_string(&f);
        // drop the final sample token entirely
        let cut = text.trim_end().rsplit_once(char::is_whitespace).unwrap().0;
        assert!(matches!(field_from_str(cut), Err(Error::MalformedFile(_))));
        let extra = format!("{text} 1.0");
        assert!(matches!(
            field_from_str(&extra),
            Err(Error::MalformedFile(_))
        ));
    }

    #[test]
    fn extension_round_trip_samples() {
        let grid = PeriodicGrid::standard(1, 16).unwrap();
        let f = SpectralField::from_fn(grid.clone(), |x| x[0].cos()).unwrap();
        let eg = ExtensionGrid::log_spaced(grid, 1e-3, 2.0, 24).unwrap();
        let field = extend(&f, FractionalOrder::new(1.5).unwrap(), &eg).unwrap();
        let text = extension_to_string(&field).unwrap();
        let data = extension_from_str(&text).unwrap();
        assert_eq!(data.gamma, 1.5);
        assert_eq!(data.ys.len(), 24);
        assert_eq!(data.levels.len(), 2);
        for (iy, &y) in data.ys.iter().enumerate() {
            assert_eq!(y, field.grid().ys()[iy]);
            for k in 0..2 {
                assert_eq!(
                    data.levels[k][iy].values(),
                    &field.values_at_node(k, iy).unwrap()[..]
                );
            }
        }
    }

    #[test]
    fn metric_round_trip_both_dimensions() {
        let g1 = PeriodicGrid::standard(1, 16).unwrap();
        let m1 = MetricField::isotropic(g1, |x| 1.0 + 0.2 * x[0].cos()).unwrap();
        let b1 = metric_from_str(&metric_to_string(&m1).unwrap()).unwrap();
        assert_eq!(m1.components(), b1.components());

        let g2 = PeriodicGrid::standard(2, 8).unwrap();
        let np = g2.total_points();
        let comps = vec![
            vec![1.5; np],
            vec![0.25; np],
            vec![2.0; np],
        ];
        let m2 = MetricField::from_components(g2, comps).unwrap();
        let b2 = metric_from_str(&metric_to_string(&m2).unwrap()).unwrap();
        assert_eq!(m2.components(), b2.components());
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = std::env::temp_dir().join(format!("fracext-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.fld");
        let grid = PeriodicGrid::standard(1, 16).unwrap();
        let f = SpectralField::from_fn(grid, |x| (3.0 * x[0]).sin()).unwrap();
        write_field(&f, &path).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(f.values(), back.values());
        std::fs::remove_dir_all(&dir).ok();
    }
}

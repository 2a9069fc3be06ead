use std::path::Path;

use crate::error::{Error, Result};

/// Design points in ℝ^d with optional responses.
///
/// Points are stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    coords: Vec<f64>,
    dim: usize,
    responses: Option<Vec<f64>>,
}

impl SampleSet {
    /// Build from a flat row-major coordinate buffer of length `n * dim`.
    pub fn from_flat(coords: Vec<f64>, dim: usize, responses: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "coordinate buffer of length {} is not a multiple of dim {dim}",
                coords.len()
            )));
        }
        let n = coords.len() / dim;
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 points, got {n}")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        if let Some(y) = &responses {
            if y.len() != n {
                return Err(Error::invalid(format!(
                    "responses have length {} but there are {n} points",
                    y.len()
                )));
            }
        }
        Ok(SampleSet {
            coords,
            dim,
            responses,
        })
    }

    /// Build from a list of points; every point must have the same dimension.
    pub fn from_points(points: &[Vec<f64>], responses: Option<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::invalid(format!(
                    "point {i} has dimension {} but point 0 has dimension {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(coords, dim, responses)
    }

    /// One-dimensional design.
    pub fn from_line(xs: &[f64], responses: Option<Vec<f64>>) -> Result<Self> {
        Self::from_flat(xs.to_vec(), 1, responses)
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn responses(&self) -> Option<&[f64]> {
        self.responses.as_deref()
    }

    pub fn with_responses(mut self, responses: Vec<f64>) -> Result<Self> {
        if responses.len() != self.n() {
            return Err(Error::invalid(format!(
                "responses have length {} but there are {} points",
                responses.len(),
                self.n()
            )));
        }
        self.responses = Some(responses);
        Ok(self)
    }

    /// Relabel points so that new index `k` holds old point `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("not a permutation of the sample indices"));
        }
        let coords = perm.iter().flat_map(|&p| self.point(p).iter().copied()).collect();
        let responses = self
            .responses
            .as_ref()
            .map(|y| perm.iter().map(|&p| y[p]).collect());
        Self::from_flat(coords, self.dim, responses)
    }

    /// Read a sample set from CSV. A header row is required; a final column
    /// named `y` (or `response`) holds responses, all other columns are coordinates.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_path(path)?;
        let headers = rdr.headers()?.clone();
        let ncol = headers.len();
        let has_y = headers
            .iter()
            .last()
            .map(|h| matches!(h.trim().to_ascii_lowercase().as_str(), "y" | "response"))
            .unwrap_or(false);
        let dim = if has_y { ncol - 1 } else { ncol };
        let mut coords = Vec::new();
        let mut ys = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != ncol {
                return Err(Error::invalid(format!(
                    "csv row {} has {} columns, header has {ncol}",
                    row + 2,
                    rec.len()
                )));
            }
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::invalid(format!("csv row {} column {}: cannot parse `{field}`", row + 2, c + 1))
                })?;
                if has_y && c == dim {
                    ys.push(v);
                } else {
                    coords.push(v);
                }
            }
        }
        Self::from_flat(coords, dim, has_y.then_some(ys))
    }

    /// Write as CSV with header `x1,..,xd[,y]`, floats with 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        if self.responses.is_some() {
            header.push("y".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = self.point(i).iter().map(|&v| crate::fmt_f64(v)).collect();
            if let Some(y) = &self.responses {
                row.push(crate::fmt_f64(y[i]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = SampleSet::from_points(&[vec![0.0, 1.0], vec![2.0]], None).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn response_length_checked() {
        assert!(SampleSet::from_line(&[0.0, 1.0, 2.0], Some(vec![1.0])).is_err());
        assert!(SampleSet::from_line(&[0.0], None).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = SampleSet::from_points(
            &[vec![0.1, 1.0 / 3.0], vec![-2.5, 1e-17], vec![3.0, 4.0]],
            Some(vec![0.7, -1.25, std::f64::consts::PI]),
        )
        .unwrap();
        s.write_csv(&path).unwrap();
        let back = SampleSet::read_csv(&path).unwrap();
        assert_eq!(s, back);

        let bare = SampleSet::from_line(&[0.0, 0.5, 1.0], None).unwrap();
        bare.write_csv(&path).unwrap();
        assert_eq!(SampleSet::read_csv(&path).unwrap(), bare);
    }
}

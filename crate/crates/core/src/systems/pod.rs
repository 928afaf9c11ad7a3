//! Proper orthogonal decomposition of snapshot sets, with a quadratic map
//! expressing trailing mode coefficients through the leading ones.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value threshold used to decide numerical rank.
const RANK_TOL: f64 = 1e-10;

/// Total-degree-2 polynomial regression from leading to trailing coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SlavingMap {
    center: Vec<f64>,
    scale: Vec<f64>,
    /// `n_features x n_trailing`.
    weights: DMatrix<f64>,
    /// Largest slaving misfit over the fitting samples, as an absolute L2 norm
    /// in coefficient space.
    pub fit_residual: f64,
}

impl SlavingMap {
    fn features(&self, leading: &[f64]) -> DVector<f64> {
        let z: Vec<f64> = leading
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(a, (c, s))| (a - c) / s)
            .collect();
        quadratic_features(&z)
    }

    pub fn predict(&self, leading: &[f64]) -> Vec<f64> {
        let phi = self.features(leading);
        (self.weights.transpose() * phi).as_slice().to_vec()
    }

    /// Least-squares fit over `(leading, trailing)` samples; minimum-norm when
    /// the design is rank deficient.
    pub fn fit(leading: &[Vec<f64>], trailing: &[Vec<f64>]) -> Result<Self> {
        let m = leading.len();
        if m == 0 || m != trailing.len() {
            return Err(Error::InvalidInput(
                "slaving fit needs matching, nonempty sample sets".into(),
            ));
        }
        let nl = leading[0].len();
        let nt = trailing[0].len();
        let mut center = vec![0.0; nl];
        for a in leading {
            for k in 0..nl {
                center[k] += a[k] / m as f64;
            }
        }
        let mut scale = vec![0.0; nl];
        for a in leading {
            for k in 0..nl {
                scale[k] = f64::max(scale[k], (a[k] - center[k]).abs());
            }
        }
        for s in scale.iter_mut() {
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        let mut map = Self {
            center,
            scale,
            weights: DMatrix::zeros(0, nt),
            fit_residual: 0.0,
        };
        let n_feat = quadratic_features(&vec![0.0; nl]).len();
        let mut phi = DMatrix::zeros(m, n_feat);
        for (i, a) in leading.iter().enumerate() {
            phi.row_mut(i).copy_from(&map.features(a).transpose());
        }
        let y = DMatrix::from_fn(m, nt, |i, j| trailing[i][j]);
        let svd = phi.svd(true, true);
        let smax = svd.singular_values.max();
        map.weights = svd
            .solve(&y, RANK_TOL * smax)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        map.fit_residual = leading
            .iter()
            .zip(trailing)
            .map(|(a, t)| {
                let pred = map.predict(a);
                pred.iter()
                    .zip(t)
                    .map(|(p, q)| (p - q).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        Ok(map)
    }
}

/// `(1, z_i, z_i z_j for i <= j)`.
fn quadratic_features(z: &[f64]) -> DVector<f64> {
    let n = z.len();
    let mut f = Vec::with_capacity(1 + n + n * (n + 1) / 2);
    f.push(1.0);
    f.extend_from_slice(z);
    for i in 0..n {
        for j in i..n {
            f.push(z[i] * z[j]);
        }
    }
    DVector::from_vec(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodModel {
    /// Orthonormal columns, `full_dim x n_modes`, by decreasing singular value.
    pub basis: DMatrix<f64>,
    pub mean_snapshot: DVector<f64>,
    pub singular_values: Vec<f64>,
    pub n_leading: usize,
    pub n_trailing: usize,
    pub slaving_map: SlavingMap,
    /// Largest relative L2 error of reconstructing a training snapshot
    /// through all retained modes.
    pub reconstruction_residual: f64,
}

/// Builds a POD basis of `n_modes` modes from the mean-centred snapshots and
/// fits the slaving map on the snapshot coefficients. The leading
/// `n_modes / 2` modes are treated as independent.
pub fn build_pod(snapshots: &[Vec<f64>], n_modes: usize) -> Result<PodModel> {
    build_pod_split(snapshots, n_modes, n_modes / 2)
}

pub fn build_pod_split(
    snapshots: &[Vec<f64>],
    n_modes: usize,
    n_leading: usize,
) -> Result<PodModel> {
    if n_modes == 0 || n_leading == 0 || n_leading > n_modes {
        return Err(Error::InvalidInput(format!(
            "invalid mode split: {n_leading} leading of {n_modes}"
        )));
    }
    if snapshots.len() < n_modes {
        return Err(Error::InvalidInput(format!(
            "{} snapshots cannot span {n_modes} modes",
            snapshots.len()
        )));
    }
    let dim = snapshots[0].len();
    if let Some(bad) = snapshots.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            what: "snapshot",
            expected: dim,
            got: bad.len(),
        });
    }
    let m = snapshots.len();
    let mut mean = DVector::zeros(dim);
    for s in snapshots {
        mean += DVector::from_column_slice(s) / m as f64;
    }
    let centered = DMatrix::from_fn(dim, m, |i, k| snapshots[k][i] - mean[i]);
    let svd = centered.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv
        .iter()
        .filter(|&&s| s > RANK_TOL * smax && s > 0.0)
        .count();
    if rank < n_modes {
        return Err(Error::RankDeficient {
            achieved: rank,
            required: n_modes,
        });
    }
    let mut basis = DMatrix::zeros(dim, n_modes);
    for (j, &k) in order.iter().take(n_modes).enumerate() {
        let mut col = u.column(k).into_owned();
        // Deterministic sign: largest-magnitude entry positive.
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        basis.set_column(j, &col);
    }
    let mut model = PodModel {
        basis,
        mean_snapshot: mean,
        singular_values: sv,
        n_leading,
        n_trailing: n_modes - n_leading,
        slaving_map: SlavingMap {
            center: vec![0.0; n_leading],
            scale: vec![1.0; n_leading],
            weights: DMatrix::zeros(
                1 + n_leading + n_leading * (n_leading + 1) / 2,
                n_modes - n_leading,
            ),
            fit_residual: 0.0,
        },
        reconstruction_residual: 0.0,
    };
    model.reconstruction_residual = snapshots
        .iter()
        .map(|s| {
            let rec = model.lift(&model.project(s));
            relative_error(&rec, s)
        })
        .fold(0.0, f64::max);
    let coeffs: Vec<Vec<f64>> = snapshots.iter().map(|s| model.project(s)).collect();
    model.fit_slaving(&coeffs)?;
    Ok(model)
}

pub(crate) fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

impl PodModel {
    pub fn n_modes(&self) -> usize {
        self.basis.ncols()
    }

    pub fn full_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// All `n_modes` coefficients of a full state.
    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        let d = DVector::from_column_slice(full) - &self.mean_snapshot;
        (self.basis.transpose() * d).as_slice().to_vec()
    }

    /// Full state from all `n_modes` coefficients.
    pub fn lift(&self, coeffs: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coeffs);
        (&self.mean_snapshot + &self.basis * c).as_slice().to_vec()
    }

    /// Full state from the leading coefficients, with the trailing ones given
    /// by the slaving map.
    pub fn lift_leading(&self, leading: &[f64]) -> Vec<f64> {
        let mut c = leading.to_vec();
        c.extend(self.slaving_map.predict(leading));
        self.lift(&c)
    }

    /// Refits the slaving map on coefficient vectors of length `n_modes`.
    pub fn fit_slaving(&mut self, coeffs: &[Vec<f64>]) -> Result<()> {
        let lead: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|c| c[..self.n_leading].to_vec())
            .collect();
        let trail: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|c| c[self.n_leading..].to_vec())
            .collect();
        self.slaving_map = SlavingMap::fit(&lead, &trail)?;
        Ok(())
    }

    /// Projection of a full-space vector (for instance a velocity) onto the
    /// leading modes, without the mean offset.
    pub fn project_leading_direction(&self, full: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(full);
        let lead = self.basis.columns(0, self.n_leading);
        (lead.transpose() * v).as_slice().to_vec()
    }
}

/// Reads snapshots stored one per row, comma separated, without header.
pub fn read_snapshots<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("snapshot entry {s:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_snapshots<W: Write>(writer: W, snapshots: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for s in snapshots {
        w.write_record(s.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

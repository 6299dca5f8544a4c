use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::series::SeriesData;

/// Regression form `Y = W·B + E` with `W = [X, Z·β]`.
///
/// Design row `j` corresponds to price row `rows[j] = p + 1 + j`:
/// `Y_j = x_i − x_{i−1}`, `Z_j = x_{i−1}`, `X_j = [1, Δx_{i−1}, …, Δx_{i−p+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    pub y: Mat,
    pub x: Mat,
    pub z: Mat,
    pub w: Mat,
    pub beta: Mat,
    pub p: usize,
    /// Price row index of every design row.
    pub rows: Vec<usize>,
    /// Design-row positions whose price row is an inter-day boundary.
    pub inter: Vec<usize>,
}

impl DesignSet {
    pub fn t(&self) -> usize {
        self.y.nrows()
    }

    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    pub fn r(&self) -> usize {
        self.beta.ncols()
    }

    pub fn with_beta(&self, beta: &Mat) -> Result<DesignSet> {
        check_beta(beta, self.n())?;
        let mut out = self.clone();
        out.beta = beta.clone();
        out.w = assemble_w(&self.x, &self.z, beta);
        Ok(out)
    }

    /// Design positions not in `inter`.
    pub fn intra(&self) -> Vec<usize> {
        let mut it = self.inter.iter().peekable();
        (0..self.t()).filter(|j| it.next_if(|&&i| i == *j).is_none()).collect()
    }

    /// Copy restricted to the given design positions (sorted).
    pub fn subset(&self, positions: &[usize]) -> DesignSet {
        let pick = |m: &Mat| m.select_rows(positions.iter());
        let inter: Vec<usize> = positions
            .iter()
            .enumerate()
            .filter(|(_, p)| self.inter.binary_search(p).is_ok())
            .map(|(j, _)| j)
            .collect();
        DesignSet {
            y: pick(&self.y),
            x: pick(&self.x),
            z: pick(&self.z),
            w: pick(&self.w),
            beta: self.beta.clone(),
            p: self.p,
            rows: positions.iter().map(|&j| self.rows[j]).collect(),
            inter,
        }
    }

    /// `[X, Z]`, the rank-unrestricted regressors.
    pub fn unrestricted_regressors(&self) -> Mat {
        hstack(&self.x, &self.z)
    }
}

fn hstack(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn assemble_w(x: &Mat, z: &Mat, beta: &Mat) -> Mat {
    hstack(x, &(z * beta))
}

fn check_beta(beta: &Mat, n: usize) -> Result<()> {
    if beta.nrows() != n || beta.ncols() == 0 || beta.ncols() >= n {
        return Err(Error::shape(format!(
            "beta must be {n}×r with 1 ≤ r < {n}, got {}x{}",
            beta.nrows(),
            beta.ncols()
        )));
    }
    Ok(())
}

pub fn build_design(series: &SeriesData, p: usize, beta: &Mat) -> Result<DesignSet> {
    let n = series.n();
    let t_raw = series.len();
    if p == 0 {
        return Err(Error::shape("lag order p must be at least 1"));
    }
    if t_raw <= p + 1 {
        return Err(Error::shape(format!(
            "{t_raw} observations are too few for lag order {p} (need more than {})",
            p + 1
        )));
    }
    check_beta(beta, n)?;
    let px = &series.prices;
    let rows: Vec<usize> = (p + 1..t_raw).collect();
    let t = rows.len();
    let diff = |i: usize, j: usize| px[(i, j)] - px[(i - 1, j)];
    let y = Mat::from_fn(t, n, |r, j| diff(rows[r], j));
    let z = Mat::from_fn(t, n, |r, j| px[(rows[r] - 1, j)]);
    let x = Mat::from_fn(t, 1 + n * (p - 1), |r, c| {
        if c == 0 {
            1.0
        } else {
            let lag = 1 + (c - 1) / n;
            diff(rows[r] - lag, (c - 1) % n)
        }
    });
    let inter = rows
        .iter()
        .enumerate()
        .filter(|(_, i)| series.tau_idx.binary_search(i).is_ok())
        .map(|(j, _)| j)
        .collect();
    let w = assemble_w(&x, &z, beta);
    Ok(DesignSet {
        y,
        x,
        z,
        w,
        beta: beta.clone(),
        p,
        rows,
        inter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvar::series::SeriesMeta;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn toy() -> SeriesData {
        SeriesData::new(
            Mat::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 2.0, 3.0, 5.0, 6.0, 9.0]),
            vec![3],
            SeriesMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn hand_constructed_example() {
        let beta = Mat::from_row_slice(2, 1, &[1.0, -1.0]);
        let d = build_design(&toy(), 1, &beta).unwrap();
        assert_eq!(d.y, Mat::from_row_slice(2, 2, &[2.0, 3.0, 3.0, 4.0]));
        assert_eq!(d.z, Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]));
        assert_eq!(d.x, Mat::from_element(2, 1, 1.0));
        assert_eq!(d.inter, vec![1]);
        assert_eq!(d.intra(), vec![0]);
        assert_eq!(d.k(), 2);
    }

    #[test]
    fn too_short() {
        let beta = Mat::from_row_slice(2, 1, &[1.0, -1.0]);
        assert!(build_design(&toy(), 3, &beta).is_err());
    }

    #[test]
    fn lagged_blocks_with_p2() {
        let mut rng = rng_from_seed(41);
        let prices = Mat::from_fn(30, 2, |_, _| rng.random_range(-5.0..5.0));
        let s = SeriesData::new(prices.clone(), vec![5, 10, 29], SeriesMeta::default()).unwrap();
        let beta = Mat::from_row_slice(2, 1, &[1.0, 0.3]);
        let d = build_design(&s, 2, &beta).unwrap();
        assert_eq!(d.t(), 27);
        assert_eq!(d.k(), 4);
        for (j, &i) in d.rows.iter().enumerate() {
            let zrow = prices.row(i - 1);
            let lag = prices.row(i - 1) - prices.row(i - 2);
            let expect = [1.0, lag[0], lag[1], zrow[0] + 0.3 * zrow[1]];
            for c in 0..4 {
                assert!((d.w[(j, c)] - expect[c]).abs() < 1e-12);
            }
        }
        assert_eq!(d.inter.iter().map(|&j| d.rows[j]).collect::<Vec<_>>(), vec![5, 10, 29]);
        let sub = d.subset(&d.intra());
        assert_eq!(sub.t(), 24);
        assert!(sub.inter.is_empty());
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub assets: Vec<String>,
    pub interval: String,
    /// Opaque per-row labels; empty means rows are labelled by index.
    pub timestamps: Vec<String>,
    pub warnings: Vec<String>,
}

/// Price levels (T×n) with the rows that start a trading day.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub prices: Mat,
    /// Sorted 0-based row indices of inter-day boundary rows.
    pub tau_idx: Vec<usize>,
    pub meta: SeriesMeta,
}

impl SeriesData {
    pub fn new(prices: Mat, tau_idx: Vec<usize>, meta: SeriesMeta) -> Result<Self> {
        let s = SeriesData { prices, tau_idx, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.prices.ncols()
    }

    pub fn len(&self) -> usize {
        self.prices.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.nrows() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.prices.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("prices contain non-finite values".into()));
        }
        if self.tau_idx.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("boundary indices must be strictly increasing".into()));
        }
        if self.tau_idx.last().is_some_and(|&t| t >= self.len()) {
            return Err(Error::Validation("boundary index beyond the last row".into()));
        }
        if !self.meta.assets.is_empty() && self.meta.assets.len() != self.n() {
            return Err(Error::Validation("asset label count does not match columns".into()));
        }
        if !self.meta.timestamps.is_empty() && self.meta.timestamps.len() != self.len() {
            return Err(Error::Validation("timestamp count does not match rows".into()));
        }
        Ok(())
    }

    pub fn asset_labels(&self) -> Vec<String> {
        if self.meta.assets.is_empty() {
            (1..=self.n()).map(|i| format!("asset{i}")).collect()
        } else {
            self.meta.assets.clone()
        }
    }

    /// First differences at boundary rows (rows ≥ 1), per asset.
    pub fn inter_day_differences(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n()];
        for &t in self.tau_idx.iter().filter(|&&t| t >= 1) {
            for (j, col) in out.iter_mut().enumerate() {
                col.push(self.prices[(t, j)] - self.prices[(t - 1, j)]);
            }
        }
        out
    }

    /// Per-asset translation by the median and scaling by the standard
    /// deviation. Returns the normalized series and (median, sd) per asset.
    pub fn normalized(&self) -> Result<(SeriesData, Vec<(f64, f64)>)> {
        let mut prices = self.prices.clone();
        let mut stats = Vec::with_capacity(self.n());
        for j in 0..self.n() {
            let col: Vec<f64> = self.prices.column(j).iter().copied().collect();
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            let median = crate::stable::quantile(&sorted, 0.5);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() as f64 - 1.0)).sqrt();
            if !(sd > 0.0) {
                return Err(Error::Validation(format!("asset {j} has zero variance")));
            }
            for i in 0..self.len() {
                prices[(i, j)] = (col[i] - median) / sd;
            }
            stats.push((median, sd));
        }
        Ok((SeriesData::new(prices, self.tau_idx.clone(), self.meta.clone())?, stats))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.asset_labels());
        header.push("is_boundary".into());
        w.write_record(&header).map_err(csv_err)?;
        let mut next_tau = self.tau_idx.iter().peekable();
        for i in 0..self.len() {
            let boundary = next_tau.next_if(|&&t| t == i).is_some();
            let mut rec = Vec::with_capacity(self.n() + 2);
            rec.push(self.meta.timestamps.get(i).cloned().unwrap_or_else(|| i.to_string()));
            rec.extend(self.prices.row(i).iter().map(|v| format_float(*v)));
            rec.push(if boundary { "1" } else { "0" }.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = rdr.headers().map_err(csv_err)?.clone();
        let cols = header.len();
        if cols < 3 || &header[0] != "timestamp" || &header[cols - 1] != "is_boundary" {
            return Err(Error::Parse(
                "header must be `timestamp,<asset>,...,is_boundary` with at least one asset".into(),
            ));
        }
        let assets: Vec<String> = (1..cols - 1).map(|i| header[i].to_string()).collect();
        let n = assets.len();
        let mut values = Vec::new();
        let mut timestamps = Vec::new();
        let mut tau = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != cols {
                return Err(Error::Parse(format!("row {} has {} fields, expected {cols}", row + 1, rec.len())));
            }
            timestamps.push(rec[0].to_string());
            for j in 0..n {
                let v: f64 = rec[j + 1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: `{}` is not a number", row + 1, &rec[j + 1])))?;
                values.push(v);
            }
            match &rec[cols - 1] {
                "1" => tau.push(row),
                "0" => {}
                other => {
                    return Err(Error::Parse(format!("row {}: is_boundary must be 0 or 1, got `{other}`", row + 1)))
                }
            }
        }
        let t = timestamps.len();
        let prices = Mat::from_row_slice(t, n, &values);
        SeriesData::new(
            prices,
            tau,
            SeriesMeta {
                assets,
                interval: String::new(),
                timestamps,
                warnings: Vec::new(),
            },
        )
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_csv_str(&text)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Shortest representation that parses back to the same bits.
fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Schedule of inter-day boundaries over time steps `t = 1..=T`. Row `t−1`
/// of a simulated series holds `x_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauSpec {
    None,
    /// Every step with `t mod modulus == 0`.
    Modulus { modulus: usize },
    /// Explicit 1-based time steps.
    List { steps: Vec<usize> },
}

impl TauSpec {
    /// 0-based row indices for a series of `t_len` rows.
    pub fn row_indices(&self, t_len: usize) -> Result<Vec<usize>> {
        match self {
            TauSpec::None => Ok(Vec::new()),
            TauSpec::Modulus { modulus } => {
                if *modulus == 0 {
                    return Err(Error::Validation("tau modulus must be positive".into()));
                }
                Ok((1..=t_len).filter(|t| t % modulus == 0).map(|t| t - 1).collect())
            }
            TauSpec::List { steps } => {
                let mut rows = Vec::with_capacity(steps.len());
                for &t in steps {
                    if t == 0 || t > t_len {
                        return Err(Error::Validation(format!("tau step {t} outside 1..={t_len}")));
                    }
                    rows.push(t - 1);
                }
                rows.sort_unstable();
                rows.dedup();
                Ok(rows)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SeriesData {
        SeriesData::new(
            Mat::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 2.0, 3.0, 5.0, 6.0, 9.25]),
            vec![2],
            SeriesMeta {
                assets: vec!["A".into(), "B".into()],
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let s = toy();
        let text = s.to_csv_string().unwrap();
        assert!(text.starts_with("timestamp,A,B,is_boundary\n0,0.0,0.0,0\n"));
        let back = SeriesData::from_csv_str(&text).unwrap();
        assert_eq!(back.prices, s.prices);
        assert_eq!(back.tau_idx, s.tau_idx);
        assert_eq!(back.meta.assets, s.meta.assets);
    }

    #[test]
    fn csv_rejects_bad_flags_and_headers() {
        assert!(SeriesData::from_csv_str("timestamp,A,is_boundary\nx,1.0,2\n").is_err());
        assert!(SeriesData::from_csv_str("time,A,is_boundary\nx,1.0,0\n").is_err());
        assert!(SeriesData::from_csv_str("timestamp,A,is_boundary\nx,abc,0\n").is_err());
    }

    #[test]
    fn modulus_schedule() {
        let rows = TauSpec::Modulus { modulus: 20 }.row_indices(200).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0], 19);
        assert_eq!(rows[9], 199);
        assert!(TauSpec::List { steps: vec![0] }.row_indices(10).is_err());
    }

    #[test]
    fn inter_day_differences() {
        let d = toy().inter_day_differences();
        assert_eq!(d, vec![vec![2.0], vec![3.0]]);
    }

    #[test]
    fn normalization_uses_median_and_sd() {
        let (norm, stats) = toy().normalized().unwrap();
        assert_eq!(stats.len(), 2);
        assert!((stats[0].0 - 2.0).abs() < 1e-12);
        let col: Vec<f64> = norm.prices.column(0).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / 4.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!((sd - 1.0).abs() < 1e-12);
    }
}

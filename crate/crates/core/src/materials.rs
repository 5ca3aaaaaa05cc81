//! Optical constants: tabulated gold permittivity, cover-glass index, air gap.

use crate::error::{Error, Result};
use crate::real::Real;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::io::Read;

const HC_EV_NM: f64 = 1_239.841_984;

/// Johnson & Christy (1972) gold: photon energy (eV), n, k.
const GOLD_JOHNSON_CHRISTY: [(f64, f64, f64); 28] = [
    (0.64, 0.92, 13.78),
    (0.77, 0.56, 11.21),
    (0.89, 0.43, 9.519),
    (1.02, 0.35, 8.145),
    (1.14, 0.27, 7.150),
    (1.26, 0.22, 6.350),
    (1.39, 0.17, 5.663),
    (1.51, 0.16, 5.083),
    (1.64, 0.14, 4.542),
    (1.76, 0.13, 4.103),
    (1.88, 0.14, 3.697),
    (2.01, 0.21, 3.272),
    (2.13, 0.29, 2.863),
    (2.26, 0.43, 2.455),
    (2.38, 0.62, 2.081),
    (2.50, 1.04, 1.833),
    (2.63, 1.31, 1.849),
    (2.75, 1.38, 1.914),
    (2.88, 1.45, 1.948),
    (3.00, 1.46, 1.958),
    (3.12, 1.47, 1.952),
    (3.25, 1.46, 1.933),
    (3.37, 1.48, 1.895),
    (3.50, 1.50, 1.866),
    (3.62, 1.48, 1.871),
    (3.74, 1.48, 1.883),
    (3.87, 1.54, 1.898),
    (3.99, 1.53, 1.893),
];

/// Visible window every table has to cover.
pub const WORKING_RANGE_NM: (f64, f64) = (450.0, 750.0);

pub const DEFAULT_GLASS_INDEX: f64 = 1.52;
pub const GAP_INDEX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DielectricRow<T> {
    pub wavelength_nm: T,
    pub permittivity: Complex<T>,
}

/// Complex permittivity sampled on a strictly increasing wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DielectricTable<T> {
    rows: Vec<DielectricRow<T>>,
    provenance: String,
}

impl<T: Real> DielectricTable<T> {
    pub fn new(rows: Vec<DielectricRow<T>>, provenance: impl Into<String>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidTable("need at least 2 rows".into()));
        }
        for (i, w) in rows.windows(2).enumerate() {
            if !(w[1].wavelength_nm > w[0].wavelength_nm) {
                return Err(Error::InvalidTable(format!(
                    "wavelengths not strictly increasing at row {}",
                    i + 1
                )));
            }
        }
        if let Some((i, _)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.permittivity.im >= T::zero()) || !r.permittivity.re.is_finite())
        {
            return Err(Error::InvalidTable(format!(
                "row {i}: imaginary permittivity must be non-negative (passive medium)"
            )));
        }
        let (lo, hi) = (rows[0].wavelength_nm, rows[rows.len() - 1].wavelength_nm);
        if lo > T::lit(WORKING_RANGE_NM.0) || hi < T::lit(WORKING_RANGE_NM.1) {
            return Err(Error::InvalidTable(format!(
                "table spans [{lo}, {hi}] nm but must cover [{}, {}] nm",
                WORKING_RANGE_NM.0, WORKING_RANGE_NM.1
            )));
        }
        Ok(Self {
            rows,
            provenance: provenance.into(),
        })
    }

    /// The bundled gold dataset.
    pub fn gold() -> Self {
        let mut rows: Vec<DielectricRow<T>> = GOLD_JOHNSON_CHRISTY
            .iter()
            .map(|&(ev, n, k)| {
                let eps = Complex::new(n, k).powi(2);
                DielectricRow {
                    wavelength_nm: T::lit(HC_EV_NM / ev),
                    permittivity: Complex::new(T::lit(eps.re), T::lit(eps.im)),
                }
            })
            .collect();
        rows.reverse();
        Self::new(rows, "Johnson & Christy 1972, gold, n+ik squared")
            .expect("bundled gold table is valid")
    }

    /// Reads `wavelength_nm,eps_re,eps_im` (header required).
    pub fn from_csv<R: Read>(reader: R, provenance: impl Into<String>) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = csv
            .headers()
            .map_err(|e| Error::InvalidTable(e.to_string()))?
            .clone();
        let expected = ["wavelength_nm", "eps_re", "eps_im"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::InvalidTable(format!(
                "expected header `wavelength_nm,eps_re,eps_im`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record.map_err(|e| Error::InvalidTable(e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let mut v = [T::zero(); 3];
            for (col, slot) in v.iter_mut().enumerate() {
                let field = record.get(col).unwrap_or("").trim();
                let x: f64 = field.parse().map_err(|_| {
                    Error::InvalidTable(format!(
                        "line {line}, column {}: cannot parse `{field}` as a number",
                        col + 1
                    ))
                })?;
                *slot = T::lit(x);
            }
            rows.push(DielectricRow {
                wavelength_nm: v[0],
                permittivity: Complex::new(v[1], v[2]),
            });
        }
        Self::new(rows, provenance)
    }

    pub fn rows(&self) -> &[DielectricRow<T>] {
        &self.rows
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn span(&self) -> (T, T) {
        (self.rows[0].wavelength_nm, self.rows[self.rows.len() - 1].wavelength_nm)
    }

    /// Piecewise-linear interpolation of Re and Im separately.
    pub fn permittivity(&self, wavelength_nm: T) -> Result<Complex<T>> {
        let (lo, hi) = self.span();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(Error::OutOfRange {
                wavelength_nm: wavelength_nm.as_f64(),
                min_nm: lo.as_f64(),
                max_nm: hi.as_f64(),
            });
        }
        let upper = self
            .rows
            .partition_point(|r| r.wavelength_nm < wavelength_nm)
            .max(1);
        let (a, b) = (&self.rows[upper - 1], &self.rows[upper]);
        let t = (wavelength_nm - a.wavelength_nm) / (b.wavelength_nm - a.wavelength_nm);
        Ok(a.permittivity + (b.permittivity - a.permittivity) * t)
    }

    /// Largest segment slope of |ε| change per nm; a Lipschitz bound for the interpolant.
    pub fn lipschitz_bound(&self) -> T {
        self.rows
            .windows(2)
            .map(|w| (w[1].permittivity - w[0].permittivity).norm() / (w[1].wavelength_nm - w[0].wavelength_nm))
            .fold(T::zero(), T::max)
    }
}

/// Non-dispersive cover glass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlassModel<T> {
    pub index: T,
}

impl<T: Real> Default for GlassModel<T> {
    fn default() -> Self {
        Self {
            index: T::lit(DEFAULT_GLASS_INDEX),
        }
    }
}

impl<T: Real> GlassModel<T> {
    pub fn with_index(index: T) -> Self {
        Self { index }
    }

    pub fn index(&self, wavelength_nm: T) -> Result<T> {
        if !(wavelength_nm > T::zero()) {
            return Err(Error::arg(format!(
                "wavelength must be positive, got {wavelength_nm}"
            )));
        }
        Ok(self.index)
    }

    pub fn permittivity(&self) -> T {
        self.index * self.index
    }
}

/// Every optical constant the device models need.
#[derive(Debug, Clone, PartialEq)]
pub struct Materials<T> {
    pub gold: DielectricTable<T>,
    pub glass: GlassModel<T>,
    pub gap_index: T,
}

impl<T: Real> Default for Materials<T> {
    fn default() -> Self {
        Self {
            gold: DielectricTable::gold(),
            glass: GlassModel::default(),
            gap_index: T::lit(GAP_INDEX),
        }
    }
}

impl<T: Real> Materials<T> {
    pub fn permittivity_gold(&self, wavelength_nm: T) -> Result<Complex<T>> {
        self.gold.permittivity(wavelength_nm)
    }

    pub fn index_glass(&self, wavelength_nm: T) -> Result<T> {
        self.glass.index(wavelength_nm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nodes_are_exact() {
        let table = DielectricTable::<f64>::gold();
        for row in table.rows() {
            assert_eq!(table.permittivity(row.wavelength_nm).unwrap(), row.permittivity);
        }
    }

    #[test]
    fn gold_at_532_is_metallic_and_lossy() {
        let eps = DielectricTable::<f64>::gold().permittivity(532.0).unwrap();
        assert!(eps.re < 0.0 && eps.im > 0.0);
        // Pinned: linear interpolation between the 2.38 eV and 2.26 eV nodes.
        assert!((eps.re - -4.704_117_162).abs() < 1e-8, "{eps}");
        assert!((eps.im - 2.392_890_261).abs() < 1e-8, "{eps}");
    }

    #[test]
    fn out_of_span_wavelength_names_the_span() {
        let rows = vec![
            DielectricRow { wavelength_nm: 450.0, permittivity: Complex::new(-1.0, 1.0) },
            DielectricRow { wavelength_nm: 750.0, permittivity: Complex::new(-20.0, 1.0) },
        ];
        let table = DielectricTable::new(rows, "test").unwrap();
        let err = table.permittivity(400.0).unwrap_err();
        assert_eq!(
            err,
            Error::OutOfRange { wavelength_nm: 400.0, min_nm: 450.0, max_nm: 750.0 }
        );
        assert!(err.to_string().contains("[450, 750]"));
    }

    #[test]
    fn invalid_tables_are_rejected() {
        let row = |w: f64, im: f64| DielectricRow { wavelength_nm: w, permittivity: Complex::new(-2.0, im) };
        assert!(DielectricTable::new(vec![row(450.0, 1.0)], "x").is_err());
        assert!(DielectricTable::new(vec![row(750.0, 1.0), row(450.0, 1.0)], "x").is_err());
        assert!(DielectricTable::new(vec![row(450.0, -0.1), row(750.0, 1.0)], "x").is_err());
        assert!(DielectricTable::new(vec![row(500.0, 1.0), row(750.0, 1.0)], "x").is_err());
    }

    #[test]
    fn csv_table_parses_and_reports_line_numbers() {
        let text = "wavelength_nm,eps_re,eps_im\n400,-1.5,5.0\n800,-25,1.5\n";
        let table = DielectricTable::<f64>::from_csv(text.as_bytes(), "user").unwrap();
        assert_eq!(table.rows().len(), 2);
        assert_eq!(table.permittivity(600.0).unwrap(), Complex::new(-13.25, 3.25));

        let bad = "wavelength_nm,eps_re,eps_im\n400,-1.5,5.0\n800,oops,1.5\n";
        let err = DielectricTable::<f64>::from_csv(bad.as_bytes(), "user").unwrap_err();
        assert!(err.to_string().contains("line 3, column 2"), "{err}");

        let no_header = "400,-1.5,5.0\n800,-25,1.5\n";
        assert!(DielectricTable::<f64>::from_csv(no_header.as_bytes(), "user").is_err());
    }

    #[test]
    fn glass_index_is_constant_with_override() {
        let glass = GlassModel::<f64>::default();
        assert_eq!(glass.index(532.0).unwrap(), 1.52);
        assert_eq!(glass.index(650.0).unwrap(), 1.52);
        let fused = GlassModel::with_index(1.45);
        assert_eq!(fused.index(300.0).unwrap(), 1.45);
        assert_eq!(fused.index(900.0).unwrap(), 1.45);
        assert!(glass.index(0.0).is_err());
        assert!(glass.index(-5.0).is_err());
    }

    #[test]
    fn single_precision_table_agrees() {
        let a = DielectricTable::<f32>::gold().permittivity(560.0).unwrap();
        let b = DielectricTable::<f64>::gold().permittivity(560.0).unwrap();
        assert!((a.re as f64 - b.re).abs() < 1e-4 && (a.im as f64 - b.im).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn interpolation_is_bounded_by_neighbouring_nodes(lambda in 450.0f64..750.0) {
            let table = DielectricTable::<f64>::gold();
            let eps = table.permittivity(lambda).unwrap();
            let rows = table.rows();
            let i = rows.partition_point(|r| r.wavelength_nm < lambda).max(1);
            let (a, b) = (rows[i - 1].permittivity, rows[i].permittivity);
            prop_assert!(eps.re >= a.re.min(b.re) - 1e-12 && eps.re <= a.re.max(b.re) + 1e-12);
            prop_assert!(eps.im >= a.im.min(b.im) - 1e-12 && eps.im <= a.im.max(b.im) + 1e-12);
        }

        #[test]
        fn interpolation_is_lipschitz_continuous(lambda in 450.0f64..749.9) {
            let table = DielectricTable::<f64>::gold();
            let delta = 0.01;
            let jump = (table.permittivity(lambda + delta).unwrap() - table.permittivity(lambda).unwrap()).norm();
            prop_assert!(jump <= table.lipschitz_bound() * delta * (1.0 + 1e-9));
        }
    }
}

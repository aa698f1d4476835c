//! Ordinary least squares, stepwise selection and variance inflation
//! factors, all with an intercept.
//!
//! Columns are centered first and orthogonalized by Gram–Schmidt with one
//! reorthogonalization pass. A column whose residual against the columns
//! before it falls below 1e-9 of its centered norm is treated as exactly
//! collinear. F and t tail probabilities come from `statrs`.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::numfmt::{score3, serialize_ext};

const COLLINEAR_TOL: f64 = 1e-9;
pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need more observations than predictors + 1 (n = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("design columns are linearly dependent: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("response is constant")]
    ConstantResponse,
    #[error("row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("{0} names for {1} columns")]
    NameCount(usize, usize),
    #[error("non-finite value in column {0}")]
    NonFinite(String),
    #[error("p_enter ({0}) must be below p_remove ({1})")]
    Thresholds(f64, f64),
    #[error("VIF needs at least 2 columns and more rows than columns")]
    VifShape,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub feature: String,
    pub estimate: f64,
    #[serde(serialize_with = "serialize_ext")]
    pub std_error: f64,
    #[serde(serialize_with = "serialize_ext")]
    pub t: f64,
    #[serde(serialize_with = "serialize_ext")]
    pub partial_f: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FStat {
    #[serde(serialize_with = "serialize_ext")]
    pub value: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub feature: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepAction {
    Enter,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub action: StepAction,
    pub feature: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub n: usize,
    /// predictors in the final model, in entry order
    pub selected: Vec<String>,
    pub excluded: Vec<Exclusion>,
    pub intercept: f64,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// `None` for the intercept-only model
    pub f_statistic: Option<FStat>,
    pub steps: Vec<Step>,
    pub residuals: Vec<f64>,
}

/// `p<.0005` below the print resolution, `p=.012` otherwise.
pub fn format_p(p: f64) -> String {
    if p < 0.0005 {
        "p<.0005".to_string()
    } else {
        format!("p={}", score3(p))
    }
}

impl RegressionReport {
    /// One-line summary, e.g. `F(51, 238) = 3.118, p<.0005, R² = .401`.
    pub fn sentence(&self) -> String {
        match &self.f_statistic {
            Some(f) => format!(
                "F({}, {}) = {:.3}, {}, R² = {}",
                f.df1,
                f.df2,
                f.value,
                format_p(f.p_value),
                score3(self.r_squared)
            ),
            None => "no predictor entered the model".to_string(),
        }
    }
}

fn f_sf(f: f64, d1: usize, d2: usize) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f == f64::INFINITY {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    FisherSnedecor::new(d1 as f64, d2 as f64).map(|d| d.sf(f)).unwrap_or(f64::NAN)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

fn centered(a: &[f64]) -> Vec<f64> {
    let m = mean(a);
    a.iter().map(|x| x - m).collect()
}

/// Incremental orthonormal basis of centered columns.
#[derive(Debug, Clone, Default)]
struct Basis {
    q: Vec<Vec<f64>>,
}

impl Basis {
    /// Residual of `v` against the basis and its coordinates.
    fn project_out(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut r = v.to_vec();
        let mut coord = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (k, q) in self.q.iter().enumerate() {
                let c = dot(q, &r);
                coord[k] += c;
                r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
            }
        }
        (r, coord)
    }
}

/// Column-major design: centered columns with their means.
struct Design {
    names: Vec<String>,
    raw: Vec<Vec<f64>>,
    cols: Vec<Vec<f64>>,
    n: usize,
}

impl Design {
    fn new(x: &[Vec<f64>], names: &[String]) -> Result<Self, StatsError> {
        let n = x.len();
        let p = names.len();
        let mut raw = vec![Vec::with_capacity(n); p];
        for (i, row) in x.iter().enumerate() {
            if row.len() != p {
                return Err(StatsError::Ragged { row: i, expected: p, got: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                raw[j].push(*v);
            }
        }
        for (j, c) in raw.iter().enumerate() {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite(names[j].clone()));
            }
        }
        let cols = raw.iter().map(|c| centered(c)).collect();
        Ok(Self { names: names.to_vec(), raw, cols, n })
    }
}

/// Minimal dependent subset containing column `j`, given that `j` lies in
/// the span of the independent columns `basis_cols` (with coordinates
/// `coord` in the orthonormal basis `r`).
fn circuit(d: &Design, j: usize, basis_cols: &[usize], r: &[Vec<f64>], coord: &[f64]) -> Vec<String> {
    // solve R beta = coord for the coefficients on the original columns
    let k = basis_cols.len();
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|m| r[i][m] * beta[m]).sum();
        beta[i] = (coord[i] - s) / r[i][i];
    }
    let scale_j = norm(&d.raw[j]).max(1e-300);
    let mut out = Vec::new();
    let mut offset = mean(&d.raw[j]);
    for (i, &c) in basis_cols.iter().enumerate() {
        offset -= beta[i] * mean(&d.raw[c]);
        if beta[i].abs() * norm(&d.raw[c]) > COLLINEAR_TOL * scale_j {
            out.push(d.names[c].clone());
        }
    }
    if offset.abs() * (d.n as f64).sqrt() > COLLINEAR_TOL * scale_j || out.is_empty() {
        out.insert(0, INTERCEPT.to_string());
    }
    out.push(d.names[j].clone());
    out
}

/// Full-model fit on the given column subset (in order).
fn fit_subset(d: &Design, y: &[f64], subset: &[usize]) -> Result<Fit, StatsError> {
    let n = d.n;
    let p = subset.len();
    if n < p + 2 {
        return Err(StatsError::TooFewObservations { n, p });
    }
    let yc = centered(y);
    let sst = dot(&yc, &yc);
    if sst == 0.0 {
        return Err(StatsError::ConstantResponse);
    }
    let mut basis = Basis::default();
    // R[i][m] = coordinate of column subset[m] on basis vector i
    let mut r = vec![vec![0.0; p]; p];
    for (m, &c) in subset.iter().enumerate() {
        let (res, coord) = basis.project_out(&d.cols[c]);
        let rn = norm(&res);
        if !(rn > COLLINEAR_TOL * norm(&d.cols[c])) {
            return Err(StatsError::RankDeficient(circuit(d, c, &subset[..m], &r, &coord)));
        }
        for (i, v) in coord.iter().enumerate() {
            r[i][m] = *v;
        }
        r[m][m] = rn;
        basis.q.push(res.iter().map(|v| v / rn).collect());
    }
    let qty: Vec<f64> = basis.q.iter().map(|q| dot(q, &yc)).collect();
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|m| r[i][m] * beta[m]).sum();
        beta[i] = (qty[i] - s) / r[i][i];
    }
    // R^-1 (upper triangular) for the coefficient covariance
    let mut rinv = vec![vec![0.0; p]; p];
    for c in 0..p {
        rinv[c][c] = 1.0 / r[c][c];
        for i in (0..c).rev() {
            let s: f64 = (i + 1..=c).map(|m| r[i][m] * rinv[m][c]).sum();
            rinv[i][c] = -s / r[i][i];
        }
    }
    let ybar = mean(y);
    let intercept = ybar - subset.iter().zip(&beta).map(|(&c, b)| b * mean(&d.raw[c])).sum::<f64>();
    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - intercept - subset.iter().zip(&beta).map(|(&c, b)| b * d.raw[c][i]).sum::<f64>())
        .collect();
    let sse = dot(&residuals, &residuals);
    let df2 = n - p - 1;
    let sigma2 = sse / df2 as f64;
    let coefficients = subset
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let var: f64 = (i..p).map(|m| rinv[i][m] * rinv[i][m]).sum::<f64>() * sigma2;
            let se = var.sqrt();
            let t = if se > 0.0 { beta[i] / se } else { f64::INFINITY.copysign(beta[i]) };
            let partial_f = t * t;
            Coefficient {
                feature: d.names[c].clone(),
                estimate: beta[i],
                std_error: se,
                t,
                partial_f,
                p_value: f_sf(partial_f, 1, df2),
            }
        })
        .collect();
    let r_squared = (1.0 - sse / sst).clamp(0.0, 1.0);
    let f_statistic = (p > 0).then(|| {
        let value = if sse > 0.0 { ((sst - sse) / p as f64) / sigma2 } else { f64::INFINITY };
        FStat { value, df1: p, df2, p_value: f_sf(value, p, df2) }
    });
    Ok(Fit {
        intercept,
        coefficients,
        r_squared,
        adj_r_squared: 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df2 as f64,
        f_statistic,
        residuals,
        sse,
        sst,
        basis,
    })
}

struct Fit {
    intercept: f64,
    coefficients: Vec<Coefficient>,
    r_squared: f64,
    adj_r_squared: f64,
    f_statistic: Option<FStat>,
    residuals: Vec<f64>,
    sse: f64,
    sst: f64,
    basis: Basis,
}

fn report(d: &Design, fit: Fit, subset: &[usize], excluded: Vec<Exclusion>, steps: Vec<Step>) -> RegressionReport {
    RegressionReport {
        n: d.n,
        selected: subset.iter().map(|&c| d.names[c].clone()).collect(),
        excluded,
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        r_squared: fit.r_squared,
        adj_r_squared: fit.adj_r_squared,
        f_statistic: fit.f_statistic,
        steps,
        residuals: fit.residuals,
    }
}

/// Least-squares fit of `y` on all columns of `x` (rows) plus an intercept.
pub fn ols_fit(x: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<RegressionReport, StatsError> {
    let p = x.first().map_or(names.len(), Vec::len);
    if names.len() != p {
        return Err(StatsError::NameCount(names.len(), p));
    }
    if x.len() != y.len() {
        return Err(StatsError::Ragged { row: x.len().min(y.len()), expected: x.len(), got: y.len() });
    }
    let d = Design::new(x, names)?;
    let all: Vec<usize> = (0..p).collect();
    let fit = fit_subset(&d, y, &all)?;
    Ok(report(&d, fit, &all, vec![], vec![]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepwiseOptions {
    pub p_enter: f64,
    pub p_remove: f64,
    pub max_steps: usize,
}

impl Default for StepwiseOptions {
    fn default() -> Self {
        Self { p_enter: 0.05, p_remove: 0.10, max_steps: 500 }
    }
}

/// Entry p-value of candidate `c` given the current model: the partial F of
/// the added column, computed from the drop in residual sum of squares.
fn entry_p(d: &Design, fit: &Fit, c: usize) -> Result<f64, ()> {
    let (basis, resid, sse) = (&fit.basis, &fit.residuals, fit.sse);
    let (res, _) = basis.project_out(&d.cols[c]);
    let rr = dot(&res, &res);
    if !(rr.sqrt() > COLLINEAR_TOL * norm(&d.cols[c])) {
        return Err(());
    }
    if sse <= 1e-24 * fit.sst {
        // the model already fits exactly; nothing can add explained variance
        return Ok(1.0);
    }
    let k = basis.q.len() + 1;
    let df2 = d.n - k - 1;
    let gain = dot(&res, resid).powi(2) / rr;
    let sse_new = (sse - gain).max(0.0);
    let f = if sse_new > 0.0 { gain / (sse_new / df2 as f64) } else { f64::INFINITY };
    Ok(f_sf(f, 1, df2))
}

/// Stepwise selection: enter the candidate with the smallest entry p-value
/// below `p_enter`, then remove the predictor with the largest p-value above
/// `p_remove` while one exists; stop when neither happens. Ties go to the
/// column that comes first.
pub fn stepwise_select(
    x: &[Vec<f64>],
    y: &[f64],
    names: &[String],
    opts: &StepwiseOptions,
) -> Result<RegressionReport, StatsError> {
    if opts.p_enter >= opts.p_remove {
        return Err(StatsError::Thresholds(opts.p_enter, opts.p_remove));
    }
    let p = x.first().map_or(names.len(), Vec::len);
    if names.len() != p {
        return Err(StatsError::NameCount(names.len(), p));
    }
    if x.len() != y.len() {
        return Err(StatsError::Ragged { row: x.len().min(y.len()), expected: x.len(), got: y.len() });
    }
    let d = Design::new(x, names)?;
    if d.n < 3 {
        return Err(StatsError::TooFewObservations { n: d.n, p: 1 });
    }
    let mut selected: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    let mut seen_states: Vec<Vec<usize>> = vec![vec![]];
    let mut fit = fit_subset(&d, y, &selected)?;

    for _ in 0..opts.max_steps {
        let mut changed = false;
        if d.n >= selected.len() + 3 {
            let mut best: Option<(f64, usize)> = None;
            for c in (0..p).filter(|c| !selected.contains(c)) {
                if let Ok(pv) = entry_p(&d, &fit, c) {
                    if pv < opts.p_enter && best.is_none_or(|(bp, _)| pv < bp) {
                        best = Some((pv, c));
                    }
                }
            }
            if let Some((pv, c)) = best {
                selected.push(c);
                steps.push(Step { action: StepAction::Enter, feature: d.names[c].clone(), p_value: pv });
                fit = fit_subset(&d, y, &selected)?;
                changed = true;
            }
        }
        loop {
            let worst = fit
                .coefficients
                .iter()
                .enumerate()
                .filter(|(_, c)| c.p_value > opts.p_remove)
                .fold(None::<(usize, f64)>, |acc, (i, c)| match acc {
                    Some((_, bp)) if c.p_value <= bp => acc,
                    _ => Some((i, c.p_value)),
                });
            let Some((i, pv)) = worst else { break };
            let c = selected.remove(i);
            steps.push(Step { action: StepAction::Remove, feature: d.names[c].clone(), p_value: pv });
            fit = fit_subset(&d, y, &selected)?;
            changed = true;
        }
        if !changed {
            break;
        }
        let mut state = selected.clone();
        state.sort_unstable();
        if seen_states.contains(&state) && !selected.is_empty() {
            log::warn!("stepwise selection revisited a model; stopping");
            break;
        }
        seen_states.push(state);
    }

    let mut excluded = Vec::new();
    for c in (0..p).filter(|c| !selected.contains(c)) {
        let reason = if d.n < selected.len() + 3 {
            "insufficient degrees of freedom".to_string()
        } else {
            match entry_p(&d, &fit, c) {
                Ok(pv) => format!("entry p={} >= {}", score3(pv), opts.p_enter),
                Err(()) => {
                    let mut with: Vec<usize> = selected.clone();
                    with.push(c);
                    match fit_subset(&d, y, &with) {
                        Err(StatsError::RankDeficient(set)) => format!("collinear with {}", set.join(", ")),
                        _ => "collinear with the selected predictors".to_string(),
                    }
                }
            }
        };
        excluded.push(Exclusion { feature: d.names[c].clone(), reason });
    }
    Ok(report(&d, fit, &selected, excluded, steps))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifEntry {
    pub feature: String,
    #[serde(serialize_with = "serialize_ext")]
    pub vif: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifReport {
    pub entries: Vec<VifEntry>,
}

/// `VIF_j = 1 / (1 - R²_j)` from regressing column `j` on the others;
/// `+inf` when column `j` lies in their span.
pub fn vif(x: &[Vec<f64>], names: &[String]) -> Result<VifReport, StatsError> {
    let p = names.len();
    if p < 2 || x.len() <= p {
        return Err(StatsError::VifShape);
    }
    let d = Design::new(x, names)?;
    let mut entries = Vec::with_capacity(p);
    for j in 0..p {
        let mut basis = Basis::default();
        for k in (0..p).filter(|&k| k != j) {
            let (res, _) = basis.project_out(&d.cols[k]);
            let rn = norm(&res);
            if rn > COLLINEAR_TOL * norm(&d.cols[k]) {
                basis.q.push(res.iter().map(|v| v / rn).collect());
            }
        }
        let total = norm(&d.cols[j]);
        let (res, _) = basis.project_out(&d.cols[j]);
        let rn = norm(&res);
        let v = if !(rn > COLLINEAR_TOL * total) { f64::INFINITY } else { (total / rn).powi(2) };
        entries.push(VifEntry { feature: d.names[j].clone(), vif: v });
    }
    Ok(VifReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (1..=k).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn three_point_hand_case() {
        // normal equations: slope = Sxy/Sxx = 1/2, intercept = 5/3 - 1/2 = 7/6
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let r = ols_fit(&x, &[1.0, 2.0, 2.0], &names(1)).unwrap();
        assert!((r.coefficients[0].estimate - 0.5).abs() < 1e-12);
        assert!((r.intercept - 7.0 / 6.0).abs() < 1e-12);
        assert!((r.r_squared - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perfect_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 + 1.0).collect();
        let r = ols_fit(&x, &y, &names(1)).unwrap();
        assert!((r.coefficients[0].estimate - 3.0).abs() < 1e-12);
        assert!((r.intercept - 1.0).abs() < 1e-12);
        assert_eq!(r.r_squared, 1.0);
    }

    #[test]
    fn rank_deficiency_names_circuit() {
        let x: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let a = i as f64;
                let b = ((i * 7) % 5) as f64;
                vec![a, b, (i % 3) as f64, 2.0 * a - b + 4.0]
            })
            .collect();
        let y: Vec<f64> = (0..8).map(|i| (i * i % 7) as f64).collect();
        let e = ols_fit(&x, &y, &names(4)).unwrap_err();
        assert_eq!(e, StatsError::RankDeficient(vec![INTERCEPT.into(), "x1".into(), "x2".into(), "x4".into()]));
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let e = ols_fit(&x, &y, &names(2)).unwrap_err();
        assert_eq!(e, StatsError::RankDeficient(vec!["x1".into(), "x2".into()]));
    }

    #[test]
    fn sentence_shape() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, ((i * 13) % 7) as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| i as f64 * 0.1 + ((i * 5) % 3) as f64).collect();
        let r = ols_fit(&x, &y, &names(2)).unwrap();
        let s = r.sentence();
        assert!(s.starts_with("F(2, 27) = "), "{s}");
        assert!(s.contains(", p<.0005, R² = .") || s.contains(", p=."), "{s}");
        assert_eq!(format_p(0.0121), "p=.012");
        assert_eq!(format_p(0.0001), "p<.0005");
    }

    #[test]
    fn vif_cases() {
        // orthogonal, centered columns
        let x = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        let v = vif(&x, &names(2)).unwrap();
        assert!(v.entries.iter().all(|e| (e.vif - 1.0).abs() < 1e-9));
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64, (i % 2) as f64]).collect();
        let v = vif(&x, &names(3)).unwrap();
        assert_eq!(v.entries[0].vif, f64::INFINITY);
        assert_eq!(v.entries[1].vif, f64::INFINITY);
        assert!(v.entries[2].vif.is_finite());
    }

    #[test]
    fn threshold_guard() {
        let o = StepwiseOptions { p_enter: 0.1, p_remove: 0.1, max_steps: 10 };
        assert!(matches!(
            stepwise_select(&[vec![1.0]], &[1.0], &names(1), &o),
            Err(StatsError::Thresholds(..))
        ));
    }
}

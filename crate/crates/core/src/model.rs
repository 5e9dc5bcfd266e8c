//! Model specification: data container, discrimination constraints, the
//! spatial loading structure, priors and identifiability checks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign restriction on a free discrimination entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Free,
}

/// How sign restrictions are enforced during sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    /// Only through the (informative) prior mean and scale.
    #[default]
    Soft,
    /// The conditional draw is truncated to the required half-line.
    Hard,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationFn {
    #[default]
    Exponential,
}

/// Restriction `a*_j = u_j + L_j a_j` on one item's discrimination vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemConstraint {
    /// `u_j`: values taken by the entries that are not active.
    pub fixed: Vec<f64>,
    /// Diagonal of `L_j`.
    pub active: Vec<bool>,
    pub signs: Vec<Sign>,
}

impl ItemConstraint {
    pub fn new(fixed: Vec<f64>, active: Vec<bool>, signs: Vec<Sign>) -> Result<Self> {
        let m = fixed.len();
        if active.len() != m {
            return Err(Error::Dimension {
                context: "constraint activation",
                expected: m,
                got: active.len(),
            });
        }
        if signs.len() != m {
            return Err(Error::Dimension {
                context: "constraint signs",
                expected: m,
                got: signs.len(),
            });
        }
        for k in 0..m {
            if !active[k] && signs[k] != Sign::Free {
                return Err(Error::Invalid(format!(
                    "entry {k} is fixed and cannot also carry a sign constraint"
                )));
            }
            if active[k] && fixed[k] != 0.0 {
                return Err(Error::Invalid(format!(
                    "entry {k} is active and cannot also carry a fixed value"
                )));
            }
            if !fixed[k].is_finite() {
                return Err(Error::Invalid(format!("fixed value of entry {k} is not finite")));
            }
        }
        Ok(ItemConstraint {
            fixed,
            active,
            signs,
        })
    }

    /// All `m` entries free and unsigned.
    pub fn all_free(m: usize) -> Self {
        ItemConstraint {
            fixed: vec![0.0; m],
            active: vec![true; m],
            signs: vec![Sign::Free; m],
        }
    }

    pub fn m(&self) -> usize {
        self.fixed.len()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.m()).filter(|&k| self.active[k]).collect()
    }

    pub fn n_free(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Expands the compact vector of active entries into `a*_j`.
    pub fn resolve_compact(&self, compact: &[f64]) -> Vec<f64> {
        let mut out = self.fixed.clone();
        let mut it = compact.iter();
        for k in 0..self.m() {
            if self.active[k] {
                out[k] += *it.next().expect("compact vector shorter than active count");
            }
        }
        out
    }
}

/// Returns `u + L a` for a full-length free vector `a`.
pub fn apply_constraint(constraint: &ItemConstraint, a_free: &[f64]) -> Result<Vec<f64>> {
    if a_free.len() != constraint.m() {
        return Err(Error::Dimension {
            context: "apply_constraint",
            expected: constraint.m(),
            got: a_free.len(),
        });
    }
    Ok((0..constraint.m())
        .map(|k| {
            if constraint.active[k] {
                constraint.fixed[k] + a_free[k]
            } else {
                constraint.fixed[k]
            }
        })
        .collect())
}

/// Sparsity mask of the `m × g` loading matrix `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadingPattern {
    pub mask: Vec<Vec<bool>>,
}

impl LoadingPattern {
    pub fn new(mask: Vec<Vec<bool>>) -> Result<Self> {
        let g = mask.first().map_or(0, Vec::len);
        if mask.iter().any(|row| row.len() != g) {
            return Err(Error::Invalid("loading pattern rows differ in length".into()));
        }
        if g > mask.len() {
            return Err(Error::Invalid(format!(
                "loading pattern has {g} processes for {} factors",
                mask.len()
            )));
        }
        Ok(LoadingPattern { mask })
    }

    /// No spatial processes at all.
    pub fn none(m: usize) -> Self {
        LoadingPattern {
            mask: vec![Vec::new(); m],
        }
    }

    /// One process per factor, on the diagonal.
    pub fn diagonal(m: usize) -> Self {
        LoadingPattern {
            mask: (0..m).map(|k| (0..m).map(|h| h == k).collect()).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.mask.len()
    }

    pub fn g(&self) -> usize {
        self.mask.first().map_or(0, Vec::len)
    }

    pub fn n_free(&self) -> usize {
        self.mask.iter().flatten().filter(|&&b| b).count()
    }

    /// `(row, col)` of each free entry, row-major.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, row) in self.mask.iter().enumerate() {
            for (h, &on) in row.iter().enumerate() {
                if on {
                    out.push((k, h));
                }
            }
        }
        out
    }
}

/// A loading pattern together with values for its free entries.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadingStructure {
    pub pattern: LoadingPattern,
    pub values: Vec<f64>,
}

/// Places the free values at the pattern positions (row-major) of an `m × g` matrix.
pub fn build_loading_matrix(structure: &LoadingStructure) -> Result<DMatrix<f64>> {
    let positions = structure.pattern.positions();
    if positions.len() != structure.values.len() {
        return Err(Error::Dimension {
            context: "loading values",
            expected: positions.len(),
            got: structure.values.len(),
        });
    }
    let mut t = DMatrix::zeros(structure.pattern.m(), structure.pattern.g());
    for (&(k, h), &v) in positions.iter().zip(&structure.values) {
        t[(k, h)] = v;
    }
    Ok(t)
}

/// Prior hyperparameters. All scale entries are variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Prior variance of each easiness parameter (mean is 0).
    pub c_var: Vec<f64>,
    /// `q × m` prior means of the discrimination entries.
    pub a_mean: Vec<Vec<f64>>,
    /// `q × m` prior variances of the discrimination entries.
    pub a_var: Vec<Vec<f64>>,
    /// Prior variances of `β`, stacked by factor (`m · p`).
    pub beta_var: Vec<f64>,
    pub log_t_mean: Vec<f64>,
    pub log_t_var: Vec<f64>,
    pub log_phi_mean: Vec<f64>,
    pub log_phi_var: Vec<f64>,
    /// LKJ shape for the residual correlation matrix.
    pub lkj_eta: f64,
}

/// Full model specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub m: usize,
    pub constraints: Vec<ItemConstraint>,
    pub loading: LoadingPattern,
    pub corr_fn: CorrelationFn,
    pub sign_mode: SignMode,
    pub priors: PriorSpec,
    /// Fixed residual standard deviations `diag(D)`.
    pub d: Vec<f64>,
}

impl ModelSpec {
    pub fn q(&self) -> usize {
        self.constraints.len()
    }

    pub fn g(&self) -> usize {
        self.loading.g()
    }

    /// Number of covariates implied by the `β` prior.
    pub fn p(&self) -> usize {
        self.priors.beta_var.len().checked_div(self.m).unwrap_or(0)
    }

    pub fn n_corr(&self) -> usize {
        self.m * self.m.saturating_sub(1) / 2
    }

    /// Structural consistency of dimensions and hyperparameters.
    pub fn structural_problems(&self) -> Vec<String> {
        let mut msgs = Vec::new();
        let (m, q) = (self.m, self.q());
        if m == 0 {
            msgs.push("at least one factor is required".into());
        }
        if q == 0 {
            msgs.push("at least one item is required".into());
        }
        for (j, c) in self.constraints.iter().enumerate() {
            if c.m() != m {
                msgs.push(format!("item {j}: constraint has {} entries, expected {m}", c.m()));
            }
        }
        if self.loading.m() != m {
            msgs.push(format!(
                "loading pattern has {} rows, expected {m}",
                self.loading.m()
            ));
        }
        if self.d.len() != m {
            msgs.push(format!("D has {} entries, expected {m}", self.d.len()));
        }
        let pr = &self.priors;
        let check_len = |msgs: &mut Vec<String>, name: &str, len: usize, want: usize| {
            if len != want {
                msgs.push(format!("prior `{name}` has {len} entries, expected {want}"));
            }
        };
        check_len(&mut msgs, "c_var", pr.c_var.len(), q);
        check_len(&mut msgs, "a_mean", pr.a_mean.len(), q);
        check_len(&mut msgs, "a_var", pr.a_var.len(), q);
        for j in 0..q.min(pr.a_mean.len()).min(pr.a_var.len()) {
            if pr.a_mean[j].len() != m || pr.a_var[j].len() != m {
                msgs.push(format!("item {j}: discrimination prior must have {m} entries"));
            }
        }
        if m > 0 && !pr.beta_var.len().is_multiple_of(m) {
            msgs.push(format!(
                "prior `beta_var` length {} is not a multiple of m = {m}",
                pr.beta_var.len()
            ));
        }
        check_len(&mut msgs, "log_t_mean", pr.log_t_mean.len(), self.loading.n_free());
        check_len(&mut msgs, "log_t_var", pr.log_t_var.len(), self.loading.n_free());
        check_len(&mut msgs, "log_phi_mean", pr.log_phi_mean.len(), self.g());
        check_len(&mut msgs, "log_phi_var", pr.log_phi_var.len(), self.g());
        let variances = pr
            .c_var
            .iter()
            .chain(pr.a_var.iter().flatten())
            .chain(&pr.beta_var)
            .chain(&pr.log_t_var)
            .chain(&pr.log_phi_var);
        if variances.clone().any(|v| !(v.is_finite() && *v > 0.0)) {
            msgs.push("all prior variances must be positive and finite".into());
        }
        if !(pr.lkj_eta.is_finite() && pr.lkj_eta > 0.0) {
            msgs.push(format!("LKJ shape must be positive, got {}", pr.lkj_eta));
        }
        msgs
    }

    /// Structural checks followed by the identifiability rules.
    pub fn validate(&self) -> Result<()> {
        let mut msgs = self.structural_problems();
        if msgs.is_empty() {
            msgs.extend(validate_identifiability(self).messages);
        }
        if msgs.is_empty() {
            Ok(())
        } else {
            Err(Error::NotIdentifiable(msgs))
        }
    }

    /// Checks that the spec fits a dataset's item and covariate counts.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.q() != self.q() {
            return Err(Error::Dimension {
                context: "items in dataset vs model",
                expected: self.q(),
                got: data.q(),
            });
        }
        if data.p() * self.m != self.priors.beta_var.len() {
            return Err(Error::Dimension {
                context: "covariates in dataset vs beta prior",
                expected: self.priors.beta_var.len(),
                got: data.p() * self.m,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdentifiabilityReport {
    pub ok: bool,
    pub messages: Vec<String>,
}

/// Checks the rotation, reflection and scaling restrictions of a confirmatory model.
pub fn validate_identifiability(spec: &ModelSpec) -> IdentifiabilityReport {
    let m = spec.m;
    let mut messages = Vec::new();

    // Rotation: enough structural zeros, spread so that some column ordering
    // has at least k zeros in its k-th column.
    if m > 1 {
        let mut zeros_per_col = vec![0usize; m];
        for c in &spec.constraints {
            for k in 0..m.min(c.m()) {
                if !c.active[k] && c.fixed[k] == 0.0 {
                    zeros_per_col[k] += 1;
                }
            }
        }
        let total: usize = zeros_per_col.iter().sum();
        let needed = m * (m - 1) / 2;
        if total < needed {
            messages.push(format!(
                "rotational aliasing: {total} entries fixed to zero, at least {needed} required"
            ));
        } else {
            let mut sorted = zeros_per_col.clone();
            sorted.sort_unstable();
            if sorted.iter().enumerate().any(|(i, &z)| z < i) {
                messages.push(format!(
                    "rotational aliasing: zero counts per factor {zeros_per_col:?} cannot be \
                     arranged in triangular form"
                ));
            }
        }
    }

    // Reflection: each column needs a signed free entry or a fixed nonzero entry.
    for k in 0..m {
        let anchored = spec.constraints.iter().any(|c| {
            k < c.m()
                && ((c.active[k] && c.signs[k] != Sign::Free)
                    || (!c.active[k] && c.fixed[k] != 0.0))
        });
        if !anchored {
            messages.push(format!(
                "reflection aliasing: factor {} has no sign-constrained or fixed nonzero \
                 discrimination",
                k + 1
            ));
        }
    }

    // Scaling: residual standard deviations must be fixed, finite and positive.
    if spec.d.len() != m || spec.d.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        messages.push("scaling aliasing: D must hold m fixed positive standard deviations".into());
    }

    IdentifiabilityReport {
        ok: messages.is_empty(),
        messages,
    }
}

/// Centering and scaling recorded from the training covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateTransform {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl CovariateTransform {
    pub fn apply(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.means.len() {
            return Err(Error::Dimension {
                context: "covariate columns",
                expected: self.means.len(),
                got: raw.ncols(),
            });
        }
        let mut out = raw.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = (*v - self.means[j]) / self.sds[j];
            }
        }
        Ok(out)
    }
}

/// Minimum sample sd for a covariate column to be usable.
pub const MIN_COVARIATE_SD: f64 = 1e-12;

/// Centers each column and scales it to unit sample sd (`n - 1` denominator).
pub fn standardize_covariates(
    x_raw: &DMatrix<f64>,
    names: &[String],
) -> Result<(DMatrix<f64>, CovariateTransform)> {
    let n = x_raw.nrows();
    if x_raw.ncols() > 0 && n < 2 {
        return Err(Error::Invalid(
            "at least two rows are needed to standardize covariates".into(),
        ));
    }
    let mut means = Vec::with_capacity(x_raw.ncols());
    let mut sds = Vec::with_capacity(x_raw.ncols());
    for (j, col) in x_raw.column_iter().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "covariate `{}` has missing or non-finite values",
                column_name(names, j)
            )));
        }
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if !(sd >= MIN_COVARIATE_SD) {
            return Err(Error::ConstantColumn(column_name(names, j)));
        }
        means.push(mean);
        sds.push(sd);
    }
    let transform = CovariateTransform { means, sds };
    let x = transform.apply(x_raw)?;
    Ok((x, transform))
}

fn column_name(names: &[String], j: usize) -> String {
    names.get(j).cloned().unwrap_or_else(|| format!("#{j}"))
}

/// Coordinates closer than this in every component count as duplicates.
pub const DUPLICATE_COORD_TOL: f64 = 1e-9;

/// Binary responses with missingness, locations and standardized covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub item_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Row-major `n × q`; `None` marks a missing response.
    responses: Vec<Option<u8>>,
    pub coords: Vec<[f64; 2]>,
    /// Covariates as supplied.
    pub x_raw: DMatrix<f64>,
    /// Standardized covariates used by the model.
    pub x: DMatrix<f64>,
    pub transform: CovariateTransform,
}

impl Dataset {
    pub fn new(
        ids: Vec<String>,
        item_names: Vec<String>,
        responses: Vec<Option<u8>>,
        coords: Vec<[f64; 2]>,
        covariate_names: Vec<String>,
        x_raw: DMatrix<f64>,
    ) -> Result<Self> {
        let n = coords.len();
        let q = item_names.len();
        if ids.len() != n {
            return Err(Error::Dimension {
                context: "dataset ids",
                expected: n,
                got: ids.len(),
            });
        }
        if responses.len() != n * q {
            return Err(Error::Dimension {
                context: "dataset responses",
                expected: n * q,
                got: responses.len(),
            });
        }
        if x_raw.nrows() != n || x_raw.ncols() != covariate_names.len() {
            return Err(Error::Invalid(format!(
                "covariate matrix is {}×{}, expected {n}×{}",
                x_raw.nrows(),
                x_raw.ncols(),
                covariate_names.len()
            )));
        }
        if let Some(bad) = responses.iter().flatten().find(|&&v| v > 1) {
            return Err(Error::Invalid(format!("response value {bad} is not binary")));
        }
        if let Some(i) = coords
            .iter()
            .position(|c| !(c[0].is_finite() && c[1].is_finite()))
        {
            return Err(Error::Invalid(format!("row {i} has non-finite coordinates")));
        }
        if let Some((first, second)) = find_duplicate_coords(&coords) {
            return Err(Error::DuplicateCoordinates { first, second });
        }
        let (x, transform) = standardize_covariates(&x_raw, &covariate_names)?;
        Ok(Dataset {
            ids,
            item_names,
            covariate_names,
            responses,
            coords,
            x_raw,
            x,
            transform,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn q(&self) -> usize {
        self.item_names.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Response of location `i` to item `j`.
    pub fn y(&self, i: usize, j: usize) -> Option<u8> {
        self.responses[i * self.q() + j]
    }

    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.y(i, j).is_some()
    }

    /// The `n × q` indicator of observed cells.
    pub fn obs_mask(&self) -> DMatrix<u8> {
        DMatrix::from_fn(self.n(), self.q(), |i, j| u8::from(self.observed(i, j)))
    }

    pub fn responses(&self) -> &[Option<u8>] {
        &self.responses
    }

    pub fn n_observed(&self) -> usize {
        self.responses.iter().filter(|r| r.is_some()).count()
    }
}

fn find_duplicate_coords(coords: &[[f64; 2]]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_by(|&a, &b| coords[a][0].total_cmp(&coords[b][0]));
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if coords[j][0] - coords[i][0] > DUPLICATE_COORD_TOL {
                break;
            }
            if (coords[j][1] - coords[i][1]).abs() <= DUPLICATE_COORD_TOL {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    None
}

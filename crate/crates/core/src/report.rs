//! Aggregate report rows over perturbation groups.
//!
//! A row summarizes one (model, dataset, variant filter): mean original and
//! perturbed scores, and the mean NCoH / ANCoH / PDR over groups with
//! bootstrap intervals. Group order never matters: groups are sorted by id
//! before resampling, and every interval is seeded from the row key.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metrics::{classify_effect, cohens_h, group_metrics, pdr, EffectCategory};
use crate::model::VariantType;
use crate::scoring::GroupScores;
use crate::stats::{bootstrap_ci, pearson_r, significant, BootstrapConfig, IntervalEstimate};
use crate::{derive_seed, Error, Result};

/// Reporting refuses bootstrap runs smaller than this.
pub const MIN_REPORT_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantFilter {
    All,
    Superficial,
    Paraphrase,
    Distraction,
}

impl VariantFilter {
    pub const ALL: [VariantFilter; 4] =
        [VariantFilter::All, VariantFilter::Superficial, VariantFilter::Paraphrase, VariantFilter::Distraction];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantFilter::All => "all",
            VariantFilter::Superficial => "superficial",
            VariantFilter::Paraphrase => "paraphrase",
            VariantFilter::Distraction => "distraction",
        }
    }

    pub fn variant_type(self) -> Option<VariantType> {
        match self {
            VariantFilter::All => None,
            VariantFilter::Superficial => Some(VariantType::Superficial),
            VariantFilter::Paraphrase => Some(VariantType::Paraphrase),
            VariantFilter::Distraction => Some(VariantType::Distraction),
        }
    }

    fn of(ty: VariantType) -> Option<Self> {
        match ty {
            VariantType::Original => None,
            VariantType::Superficial => Some(VariantFilter::Superficial),
            VariantType::Paraphrase => Some(VariantFilter::Paraphrase),
            VariantType::Distraction => Some(VariantFilter::Distraction),
        }
    }
}

impl fmt::Display for VariantFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("unknown variant filter {s:?}")))
    }
}

/// One aggregate row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    pub variant_filter: VariantFilter,
    pub n_groups: usize,
    pub mean_orig: f64,
    pub mean_pert: f64,
    pub nh_mean: f64,
    pub nh_lo: f64,
    pub nh_hi: f64,
    pub nh_significant: bool,
    pub nh_category: EffectCategory,
    pub anh_mean: f64,
    pub anh_lo: f64,
    pub anh_hi: f64,
    pub anh_significant: bool,
    pub anh_category: EffectCategory,
    /// Absent when every group's PDR is undefined.
    pub pdr_mean: Option<f64>,
    pub pdr_lo: Option<f64>,
    pub pdr_hi: Option<f64>,
    pub pdr_n_undefined: usize,
}

impl ReportRow {
    pub fn nh_interval(&self) -> (f64, f64) {
        (self.nh_lo, self.nh_hi)
    }

    pub fn anh_interval(&self) -> (f64, f64) {
        (self.anh_lo, self.anh_hi)
    }

    /// Check the row-level invariants; used after deserializing foreign rows.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, value: f64| Err(Error::OutOfRange { what, value });
        if self.n_groups == 0 {
            return bad("n_groups", 0.0);
        }
        for (what, v) in [("mean_orig", self.mean_orig), ("mean_pert", self.mean_pert)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(what, v);
            }
        }
        if self.anh_mean + 1e-12 < self.nh_mean.abs() || self.anh_mean > 1.0 + 1e-12 {
            return bad("anh_mean", self.anh_mean);
        }
        let excludes_zero = |lo: f64, hi: f64| !(lo <= 0.0 && 0.0 <= hi);
        if self.nh_significant != excludes_zero(self.nh_lo, self.nh_hi)
            || self.anh_significant != excludes_zero(self.anh_lo, self.anh_hi)
        {
            return Err(Error::InvalidData("significance flag disagrees with its interval".into()));
        }
        Ok(())
    }
}

fn interval_seed(master: u64, model: &str, dataset: &str, filter: VariantFilter, metric: &str) -> u64 {
    derive_seed(master, &[model, dataset, filter.as_str(), metric])
}

/// Aggregate groups into one row.
///
/// With a type filter, each group's perturbed mean is recomputed over its
/// variants of that type only; groups without such variants are dropped.
pub fn aggregate(
    model: &str,
    dataset: &str,
    groups: &[GroupScores],
    filter: VariantFilter,
    config: &BootstrapConfig,
) -> Result<ReportRow> {
    config.validate()?;
    if config.replicates < MIN_REPORT_REPLICATES {
        return Err(Error::OutOfRange { what: "bootstrap replicates for reporting", value: config.replicates as f64 });
    }
    let mut selected: Vec<GroupScores> = match filter.variant_type() {
        None => groups.to_vec(),
        Some(ty) => groups.iter().filter_map(|g| g.restricted_to(ty)).collect(),
    };
    if selected.is_empty() {
        return Err(Error::EmptySample("groups after filtering"));
    }
    selected.sort_by(|a, b| a.group_id().cmp(b.group_id()));

    let n = selected.len() as f64;
    let mut nh = Vec::with_capacity(selected.len());
    let mut anh = Vec::with_capacity(selected.len());
    let mut pdrs = Vec::with_capacity(selected.len());
    let (mut sum_o, mut sum_p) = (0.0, 0.0);
    for g in &selected {
        let (p, e) = group_metrics(g)?;
        sum_o += f64::from(g.score_o());
        sum_p += g.score_p();
        nh.push(Some(e.nh));
        anh.push(Some(e.anh));
        pdrs.push(p.value());
    }

    let seeded = |metric: &str| config.with_seed(interval_seed(config.seed, model, dataset, filter, metric));
    let nh_ci = bootstrap_ci(&nh, &seeded("nh"))?;
    let anh_ci = bootstrap_ci(&anh, &seeded("anh"))?;
    let pdr_n_undefined = pdrs.iter().filter(|p| p.is_none()).count();
    let pdr_ci: Option<IntervalEstimate> =
        if pdr_n_undefined == pdrs.len() { None } else { Some(bootstrap_ci(&pdrs, &seeded("pdr"))?) };

    Ok(ReportRow {
        model: model.into(),
        dataset: dataset.into(),
        variant_filter: filter,
        n_groups: selected.len(),
        mean_orig: sum_o / n,
        mean_pert: sum_p / n,
        nh_mean: nh_ci.mean,
        nh_lo: nh_ci.lo,
        nh_hi: nh_ci.hi,
        nh_significant: significant(&nh_ci),
        nh_category: classify_effect(nh_ci.mean * PI)?,
        anh_mean: anh_ci.mean,
        anh_lo: anh_ci.lo,
        anh_hi: anh_ci.hi,
        anh_significant: significant(&anh_ci),
        anh_category: classify_effect(anh_ci.mean * PI)?,
        pdr_mean: pdr_ci.map(|c| c.mean),
        pdr_lo: pdr_ci.map(|c| c.lo),
        pdr_hi: pdr_ci.map(|c| c.hi),
        pdr_n_undefined,
    })
}

/// The `all` row followed by one row per variant type present in the groups.
pub fn breakdown_by_type(
    model: &str,
    dataset: &str,
    groups: &[GroupScores],
    config: &BootstrapConfig,
) -> Result<Vec<ReportRow>> {
    let mut rows = alloc::vec![aggregate(model, dataset, groups, VariantFilter::All, config)?];
    for ty in VariantType::PERTURBED {
        if groups.iter().any(|g| g.has_type(ty)) {
            let filter = VariantFilter::of(ty).expect("perturbed type");
            rows.push(aggregate(model, dataset, groups, filter, config)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub score_p: f64,
    pub nh: f64,
    /// `-PDR`.
    pub reverse_pdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub score_o: f64,
    pub points: Vec<CurvePoint>,
    pub pearson_r: f64,
}

/// NCoH against reverse PDR over the grid `score_p = 0, step, ..., 1` for a fixed `score_o`.
pub fn correlation_curve(score_o: f64, grid_step: f64) -> Result<CorrelationCurve> {
    if !(score_o > 0.0 && score_o <= 1.0) {
        return Err(Error::OutOfRange { what: "curve score_o (reverse PDR needs score_o > 0)", value: score_o });
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::OutOfRange { what: "grid step", value: grid_step });
    }
    let cells = libm::round(1.0 / grid_step);
    if libm::fabs(cells * grid_step - 1.0) > 1e-9 {
        return Err(Error::OutOfRange { what: "grid step (must divide 1)", value: grid_step });
    }
    let cells = cells as usize;
    let points = (0..=cells)
        .map(|i| {
            let score_p = i as f64 / cells as f64;
            let drop = pdr(score_o, score_p)?.value().expect("defined for score_o > 0");
            Ok(CurvePoint { score_p, nh: cohens_h(score_o, score_p)?.nh, reverse_pdr: -drop })
        })
        .collect::<Result<Vec<_>>>()?;
    let nh: Vec<f64> = points.iter().map(|p| p.nh).collect();
    let rp: Vec<f64> = points.iter().map(|p| p.reverse_pdr).collect();
    let pearson_r = pearson_r(&nh, &rp)?;
    Ok(CorrelationCurve { score_o, points, pearson_r })
}

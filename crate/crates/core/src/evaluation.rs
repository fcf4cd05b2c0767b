//! Split protocols, the end-to-end experiment runner, metrics, report files
//! and cross-validated parameter search.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use thiserror::Error;

use crate::crc::{classify, CrcDecision, CrcError, CrcModel};
use crate::depth_io::{DepthSequence, SequenceMeta};
use crate::glac::{GlacConfig, GlacError};
use crate::mtm::{compute_mtm, MtmConfig, MtmError, TemplateConfig, ZRange};
use crate::parallel::{self, Execution};
use crate::representation::{fit_pca, ActionDescriptor, FeatureSet, PcaError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("subject {subject} is outside the {protocol} roster")]
    UnknownSubject { protocol: String, subject: u16 },
    #[error("action {0} of the subset has no samples")]
    EmptyClassAfterFilter(u16),
    #[error("test class {0} has no training samples")]
    MissingClassInTrain(u16),
    #[error("split leaves the {0} set empty")]
    EmptySplit(&'static str),
    #[error("unknown sample id {0:?}")]
    UnknownSampleId(String),
    #[error("label {label} outside 1..={classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("truth/prediction lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("empty tuning grid")]
    EmptyGrid,
    #[error("{sample}: {source}")]
    Mtm {
        sample: String,
        #[source]
        source: MtmError,
    },
    #[error("{sample}: {source}")]
    Glac {
        sample: String,
        #[source]
        source: GlacError,
    },
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Crc(#[from] CrcError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// MSR-Action3D action subsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSubset {
    As1,
    As2,
    As3,
}

impl ActionSubset {
    pub fn actions(self) -> &'static [u16] {
        match self {
            ActionSubset::As1 => &[2, 3, 5, 6, 10, 13, 18, 20],
            ActionSubset::As2 => &[1, 4, 7, 8, 9, 11, 14, 12],
            ActionSubset::As3 => &[6, 14, 15, 16, 17, 18, 19, 20],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionSubset::As1 => "AS1",
            ActionSubset::As2 => "AS2",
            ActionSubset::As3 => "AS3",
        }
    }
}

impl FromStr for ActionSubset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "AS1" => Ok(ActionSubset::As1),
            "AS2" => Ok(ActionSubset::As2),
            "AS3" => Ok(ActionSubset::As3),
            other => Err(format!("unknown action subset {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubsetTest {
    /// One third of each class trains.
    One,
    /// Two thirds of each class train.
    Two,
    /// Odd subjects train.
    Cross,
}

/// Which samples a custom protocol puts on one side of the split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    /// Everything not selected for training.
    Rest,
    Subjects(Vec<u16>),
    Ids(Vec<String>),
}

impl Selection {
    fn selects(&self, meta: &SequenceMeta) -> bool {
        match self {
            Selection::All => true,
            Selection::Rest => false,
            Selection::Subjects(s) => s.contains(&meta.subject),
            Selection::Ids(ids) => ids.iter().any(|id| *id == meta.id()),
        }
    }

    fn describe(&self) -> String {
        match self {
            Selection::All => "all".into(),
            Selection::Rest => "rest".into(),
            Selection::Subjects(s) => {
                let v: Vec<String> = s.iter().map(u16::to_string).collect();
                format!("subjects:{}", v.join(","))
            }
            Selection::Ids(ids) => format!("ids:{}", ids.join(",")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Protocol {
    MsrSubset { test: SubsetTest, subset: ActionSubset },
    MsrAllCross,
    DhaCross,
    UtdCross,
    Custom { train: Selection, test: Selection },
}

const MSR_SUBJECTS: u16 = 10;
const DHA_SUBJECTS: u16 = 21;
const UTD_SUBJECTS: u16 = 8;

impl Protocol {
    /// Builds a protocol from its name; `subset` is required exactly for `msr_subset_*`.
    pub fn from_name(name: &str, subset: Option<ActionSubset>) -> Result<Self, EvalError> {
        let needs_subset = name.starts_with("msr_subset");
        match (needs_subset, subset) {
            (true, None) => {
                return Err(EvalError::InvalidProtocol(format!("{name} requires a subset")))
            }
            (false, Some(s)) => {
                return Err(EvalError::InvalidProtocol(format!(
                    "{name} does not take a subset (got {})",
                    s.name()
                )))
            }
            _ => {}
        }
        let subset_test = |test| Protocol::MsrSubset {
            test,
            subset: subset.expect("checked"),
        };
        Ok(match name {
            "msr_subset_test1" => subset_test(SubsetTest::One),
            "msr_subset_test2" => subset_test(SubsetTest::Two),
            "msr_subset_cross" => subset_test(SubsetTest::Cross),
            "msr_all_cross" => Protocol::MsrAllCross,
            "dha_cross" => Protocol::DhaCross,
            "utd_cross" => Protocol::UtdCross,
            "custom" => Protocol::Custom {
                train: Selection::Subjects(vec![1, 3, 5, 7, 9]),
                test: Selection::Rest,
            },
            other => return Err(EvalError::InvalidProtocol(format!("unknown protocol {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::MsrSubset { test: SubsetTest::One, .. } => "msr_subset_test1",
            Protocol::MsrSubset { test: SubsetTest::Two, .. } => "msr_subset_test2",
            Protocol::MsrSubset { test: SubsetTest::Cross, .. } => "msr_subset_cross",
            Protocol::MsrAllCross => "msr_all_cross",
            Protocol::DhaCross => "dha_cross",
            Protocol::UtdCross => "utd_cross",
            Protocol::Custom { .. } => "custom",
        }
    }

    pub fn subset(&self) -> Option<ActionSubset> {
        match self {
            Protocol::MsrSubset { subset, .. } => Some(*subset),
            _ => None,
        }
    }

    fn roster(&self) -> Option<u16> {
        match self {
            Protocol::MsrSubset { .. } | Protocol::MsrAllCross => Some(MSR_SUBJECTS),
            Protocol::DhaCross => Some(DHA_SUBJECTS),
            Protocol::UtdCross => Some(UTD_SUBJECTS),
            Protocol::Custom { .. } => None,
        }
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = vec![("protocol".to_string(), self.name().to_string())];
        match self {
            Protocol::MsrSubset { subset, .. } => out.push(("subset".into(), subset.name().into())),
            Protocol::Custom { train, test } => {
                out.push(("train".into(), train.describe()));
                out.push(("test".into(), test.describe()));
            }
            _ => {}
        }
        out
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.subset() {
            Some(s) => write!(f, "{}/{}", self.name(), s.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Indices into the dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn odd_subjects(max: u16) -> Vec<u16> {
    (1..=max).step_by(2).collect()
}

/// Partitions `metas` (by index) according to `protocol`.
pub fn make_split(metas: &[SequenceMeta], protocol: &Protocol) -> Result<Split, EvalError> {
    if let Some(max) = protocol.roster() {
        if let Some(m) = metas.iter().find(|m| m.subject == 0 || m.subject > max) {
            return Err(EvalError::UnknownSubject {
                protocol: protocol.name().into(),
                subject: m.subject,
            });
        }
    }
    let mut pool: Vec<usize> = (0..metas.len()).collect();
    if let Some(subset) = protocol.subset() {
        let actions = subset.actions();
        pool.retain(|&i| actions.contains(&metas[i].action));
        if let Some(&empty) = actions
            .iter()
            .find(|&&a| !pool.iter().any(|&i| metas[i].action == a))
        {
            return Err(EvalError::EmptyClassAfterFilter(empty));
        }
    }

    let by_subjects = |subjects: &[u16]| -> Split {
        let (train, test) = pool
            .iter()
            .partition(|&&i| subjects.contains(&metas[i].subject));
        Split { train, test }
    };

    let mut split = match protocol {
        Protocol::MsrSubset { test, .. } => match test {
            SubsetTest::Cross => by_subjects(&odd_subjects(MSR_SUBJECTS)),
            SubsetTest::One => fractional_split(metas, &pool, 1, 3),
            SubsetTest::Two => fractional_split(metas, &pool, 2, 3),
        },
        Protocol::MsrAllCross => by_subjects(&odd_subjects(MSR_SUBJECTS)),
        Protocol::DhaCross => by_subjects(&odd_subjects(DHA_SUBJECTS)),
        Protocol::UtdCross => by_subjects(&odd_subjects(UTD_SUBJECTS)),
        Protocol::Custom { train, test } => {
            for sel in [train, test] {
                if let Selection::Ids(ids) = sel {
                    if let Some(id) = ids.iter().find(|id| !metas.iter().any(|m| m.id() == **id)) {
                        return Err(EvalError::UnknownSampleId(id.clone()));
                    }
                }
            }
            let tr: Vec<usize> = pool.iter().copied().filter(|&i| train.selects(&metas[i])).collect();
            let te: Vec<usize> = match test {
                Selection::Rest => pool.iter().copied().filter(|i| !tr.contains(i)).collect(),
                sel => pool.iter().copied().filter(|&i| sel.selects(&metas[i])).collect(),
            };
            Split { train: tr, test: te }
        }
    };
    if split.train.is_empty() {
        return Err(EvalError::EmptySplit("train"));
    }
    if split.test.is_empty() {
        return Err(EvalError::EmptySplit("test"));
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Per class, sorted by (subject, trial), the first ⌈num·N/den⌉ samples train.
fn fractional_split(metas: &[SequenceMeta], pool: &[usize], num: usize, den: usize) -> Split {
    let mut groups: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for &i in pool {
        groups.entry(metas[i].action).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for members in groups.values_mut() {
        members.sort_by_key(|&i| (metas[i].subject, metas[i].trial, i));
        let n_train = (num * members.len()).div_ceil(den);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    Split { train, test }
}

/// Everything that shapes an experiment besides the split.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mtm: MtmConfig,
    pub template: TemplateConfig,
    pub glac: GlacConfig,
    pub features: FeatureSet,
    pub mu: f64,
    pub retention: f64,
    pub exec: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mtm: MtmConfig::default(),
            template: TemplateConfig::default(),
            glac: GlacConfig::default(),
            features: FeatureSet::Fused,
            mu: 1e-4,
            retention: 0.99,
            exec: Execution::Parallel,
        }
    }
}

impl ExperimentConfig {
    /// Resolved `key = value` pairs, using the run-config key names.
    pub fn echo(&self) -> Vec<(String, String)> {
        let z_range = match self.mtm.z_range {
            ZRange::Auto => "auto".to_string(),
            ZRange::Explicit { min, max } => format!("{min}..{max}"),
        };
        let size = match self.template.size {
            Some((w, h)) => format!("{w}x{h}"),
            None => "native".to_string(),
        };
        let kv = |k: &str, v: String| (k.to_string(), v);
        vec![
            kv("zeta_m", self.mtm.zeta_m.to_string()),
            kv("zeta_s", self.mtm.zeta_s.to_string()),
            kv("occupancy_zeta_m", self.mtm.occupancy_zeta_m.to_string()),
            kv("occupancy_zeta_s", self.mtm.occupancy_zeta_s.to_string()),
            kv("z_bins", self.mtm.z_bins.to_string()),
            kv("z_range", z_range),
            kv("crop", self.template.crop.to_string()),
            kv("template_size", size),
            kv("bins", self.glac.bins.to_string()),
            kv("delta_r", self.glac.delta_r.to_string()),
            kv(
                "spatial_bins",
                format!("{}x{}", self.glac.spatial_bins.0, self.glac.spatial_bins.1),
            ),
            kv("gradient", self.glac.operator.to_string()),
            kv("signed", self.glac.signed.to_string()),
            kv("features", self.features.to_string()),
            kv("mu", self.mu.to_string()),
            kv("retention", self.retention.to_string()),
        ]
    }
}

/// Runs motion-trail and GLAC extraction for every sequence.
pub fn extract_descriptors(
    seqs: &[&DepthSequence],
    cfg: &ExperimentConfig,
) -> Result<Vec<ActionDescriptor>, EvalError> {
    extract_descriptors_with(seqs, &cfg.mtm, &cfg.template, &cfg.glac, cfg.exec)
}

pub fn extract_descriptors_with(
    seqs: &[&DepthSequence],
    mtm: &MtmConfig,
    template: &TemplateConfig,
    glac: &GlacConfig,
    exec: Execution,
) -> Result<Vec<ActionDescriptor>, EvalError> {
    parallel::try_map(exec, seqs, |seq| {
        let out = compute_mtm(seq, mtm).map_err(|source| EvalError::Mtm {
            sample: seq.id(),
            source,
        })?;
        ActionDescriptor::from_mtm(&out, glac, template, seq.meta()).map_err(|source| {
            EvalError::Glac {
                sample: seq.id(),
                source,
            }
        })
    })
}

/// Counts with rows = actual class, columns = predicted class (0-based indices
/// of 1-based labels).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Diagonal / row sum; `None` for a class without test samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.classes())
            .map(|i| {
                let n = self.row_total(i);
                (n > 0).then(|| self.counts[i][i] as f64 / n as f64)
            })
            .collect()
    }

    /// Sample-weighted accuracy: trace / total.
    pub fn average_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.correct() as f64 / total as f64
        }
    }

    /// Mean of the per-class accuracies over classes that have test samples.
    pub fn class_average_accuracy(&self) -> f64 {
        let accs: Vec<f64> = self.per_class_accuracy().into_iter().flatten().collect();
        if accs.is_empty() {
            0.0
        } else {
            accs.iter().sum::<f64>() / accs.len() as f64
        }
    }
}

/// Tallies 1-based labels into a `classes × classes` matrix.
pub fn confusion_matrix(
    truths: &[usize],
    preds: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix, EvalError> {
    if truths.len() != preds.len() {
        return Err(EvalError::LengthMismatch(truths.len(), preds.len()));
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truths.iter().zip(preds) {
        for label in [t, p] {
            if label == 0 || label > classes {
                return Err(EvalError::LabelOutOfRange { label, classes });
            }
        }
        counts[t - 1][p - 1] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub true_class: u16,
    pub predicted_class: u16,
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Action ids, in confusion-matrix order.
    pub classes: Vec<u16>,
    pub confusion: ConfusionMatrix,
    pub per_class_accuracy: BTreeMap<u16, f64>,
    pub average_accuracy: f64,
    pub class_average_accuracy: f64,
    pub feature_dim: usize,
    pub reduced_dim: usize,
    pub explained_ratio: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub ridge_fallbacks: usize,
    pub predictions: Vec<Prediction>,
    pub config: Vec<(String, String)>,
}

/// Outcome of PCA + CRC on one train/test partition of feature vectors.
struct Classified {
    classes: Vec<u16>,
    decisions: Vec<CrcDecision>,
    feature_dim: usize,
    reduced_dim: usize,
    explained_ratio: f64,
}

fn fit_and_classify(
    train: &[(&[f64], u16)],
    test: &[&[f64]],
    mu: f64,
    retention: f64,
    exec: Execution,
) -> Result<Classified, EvalError> {
    let classes: Vec<u16> = train.iter().map(|t| t.1).collect::<BTreeSet<_>>().into_iter().collect();
    let train_rows: Vec<Vec<f64>> = train.iter().map(|t| t.0.to_vec()).collect();
    let pca = fit_pca(&train_rows, retention)?;
    let project = |v: &&[f64]| pca.project(v);
    let dict_rows = parallel::try_map(exec, &train.iter().map(|t| t.0).collect::<Vec<_>>(), project)?;
    let queries = parallel::try_map(exec, test, project)?;
    let labels = train
        .iter()
        .map(|t| classes.binary_search(&t.1).expect("class collected") + 1)
        .collect();
    let model = CrcModel::from_rows(&dict_rows, labels, mu)?;
    let decisions = parallel::try_map(exec, &queries, |q| {
        classify(&model, &DVector::from_column_slice(q))
    })?;
    Ok(Classified {
        classes,
        decisions,
        feature_dim: pca.dim(),
        reduced_dim: pca.k(),
        explained_ratio: pca.explained_ratio,
    })
}

/// PCA + CRC on already-extracted descriptors.
pub fn evaluate_split(
    descriptors: &[ActionDescriptor],
    split: &Split,
    cfg: &ExperimentConfig,
) -> Result<EvalReport, EvalError> {
    let vectors: Vec<(usize, Vec<f64>)> = split
        .train
        .iter()
        .chain(&split.test)
        .map(|&i| (i, descriptors[i].action_vector(cfg.features).values))
        .collect();
    let lookup: BTreeMap<usize, &[f64]> = vectors.iter().map(|(i, v)| (*i, v.as_slice())).collect();

    let train: Vec<(&[f64], u16)> = split
        .train
        .iter()
        .map(|i| (lookup[i], descriptors[*i].meta.action))
        .collect();
    let train_classes: BTreeSet<u16> = train.iter().map(|t| t.1).collect();
    if let Some(&i) = split
        .test
        .iter()
        .find(|&&i| !train_classes.contains(&descriptors[i].meta.action))
    {
        return Err(EvalError::MissingClassInTrain(descriptors[i].meta.action));
    }
    let test: Vec<&[f64]> = split.test.iter().map(|i| lookup[i]).collect();
    let out = fit_and_classify(&train, &test, cfg.mu, cfg.retention, cfg.exec)?;

    let truths: Vec<usize> = split
        .test
        .iter()
        .map(|&i| out.classes.binary_search(&descriptors[i].meta.action).expect("checked") + 1)
        .collect();
    let preds: Vec<usize> = out.decisions.iter().map(|d| d.predicted_class).collect();
    let confusion = confusion_matrix(&truths, &preds, out.classes.len())?;

    let per_class_accuracy = out
        .classes
        .iter()
        .zip(confusion.per_class_accuracy())
        .filter_map(|(&c, a)| a.map(|a| (c, a)))
        .collect();
    let predictions = split
        .test
        .iter()
        .zip(&out.decisions)
        .map(|(&i, d)| Prediction {
            id: descriptors[i].meta.id(),
            true_class: descriptors[i].meta.action,
            predicted_class: out.classes[d.predicted_class - 1],
            residuals: d.residuals.clone(),
        })
        .collect();

    Ok(EvalReport {
        average_accuracy: confusion.average_accuracy(),
        class_average_accuracy: confusion.class_average_accuracy(),
        classes: out.classes,
        confusion,
        per_class_accuracy,
        feature_dim: out.feature_dim,
        reduced_dim: out.reduced_dim,
        explained_ratio: out.explained_ratio,
        train_count: split.train.len(),
        test_count: split.test.len(),
        ridge_fallbacks: out.decisions.iter().filter(|d| d.coefficients.ridge_fallback).count(),
        predictions,
        config: cfg.echo(),
    })
}

/// Full pipeline: split → features → PCA(train) → CRC → metrics.
pub fn run_experiment(
    dataset: &[DepthSequence],
    protocol: &Protocol,
    cfg: &ExperimentConfig,
) -> Result<EvalReport, EvalError> {
    let metas: Vec<SequenceMeta> = dataset.iter().map(DepthSequence::meta).collect();
    let split = make_split(&metas, protocol)?;

    // extract only what the split uses, then re-index densely
    let used: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
    let seqs: Vec<&DepthSequence> = used.iter().map(|&i| &dataset[i]).collect();
    let descriptors = extract_descriptors(&seqs, cfg)?;
    let dense = Split {
        train: (0..split.train.len()).collect(),
        test: (split.train.len()..used.len()).collect(),
    };
    let mut report = evaluate_split(&descriptors, &dense, cfg)?;
    let mut config = protocol.echo();
    config.append(&mut report.config);
    report.config = config;
    Ok(report)
}

fn write_file(dir: &Path, name: &str, contents: String) -> Result<(), EvalError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl EvalReport {
    pub fn report_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        let mut row = |k: &str, v: String| s.push_str(&format!("{k},{v}\n"));
        row("average_accuracy", format!("{:.6}", self.average_accuracy));
        row("class_average_accuracy", format!("{:.6}", self.class_average_accuracy));
        row("train_samples", self.train_count.to_string());
        row("test_samples", self.test_count.to_string());
        row("feature_dim", self.feature_dim.to_string());
        row("reduced_dim", self.reduced_dim.to_string());
        row("explained_ratio", format!("{:.6}", self.explained_ratio));
        row("ridge_fallbacks", self.ridge_fallbacks.to_string());
        for (c, a) in &self.per_class_accuracy {
            row(&format!("accuracy_a{c:02}"), format!("{a:.6}"));
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let header: Vec<String> = self.classes.iter().map(|c| format!("a{c:02}")).collect();
        let mut s = format!("actual\\predicted,{}\n", header.join(","));
        for (c, row) in self.classes.iter().zip(&self.confusion.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            s.push_str(&format!("a{c:02},{}\n", cells.join(",")));
        }
        s
    }

    pub fn predictions_csv(&self) -> String {
        let q: Vec<String> = (1..=self.classes.len()).map(|j| format!("q_{j}")).collect();
        let mut s = format!("seq_id,true_class,predicted_class,{}\n", q.join(","));
        for p in &self.predictions {
            let r: Vec<String> = p.residuals.iter().map(|v| format!("{v:.12e}")).collect();
            s.push_str(&format!(
                "{},{},{},{}\n",
                p.id,
                p.true_class,
                p.predicted_class,
                r.join(",")
            ));
        }
        s
    }

    pub fn manifest(&self) -> String {
        let mut s = format!("# deptrail {}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.config {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Writes `report.csv`, `confusion.csv`, `predictions.csv` and `manifest.txt`.
    pub fn write_to(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir).map_err(|source| EvalError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_file(dir, "report.csv", self.report_csv())?;
        write_file(dir, "confusion.csv", self.confusion_csv())?;
        write_file(dir, "predictions.csv", self.predictions_csv())?;
        write_file(dir, "manifest.txt", self.manifest())
    }
}

/// Parameter grid for cross-validated tuning; cells enumerate in nested order
/// bins → delta_r → spatial_bins → mu.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TuneGrid {
    pub bins: Vec<usize>,
    pub delta_r: Vec<usize>,
    pub spatial_bins: Vec<(usize, usize)>,
    pub mu: Vec<f64>,
}

impl TuneGrid {
    pub fn len(&self) -> usize {
        self.bins.len() * self.delta_r.len() * self.spatial_bins.len() * self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneRow {
    pub bins: usize,
    pub delta_r: usize,
    pub spatial_bins: (usize, usize),
    pub mu: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneReport {
    pub rows: Vec<TuneRow>,
    /// Index of the first row with the highest accuracy.
    pub best: usize,
    pub folds: usize,
}

impl TuneReport {
    pub fn best_row(&self) -> &TuneRow {
        &self.rows[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bins,delta_r,spatial_bins,mu,cv_accuracy,best\n");
        for (i, r) in self.rows.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{}x{},{},{:.6},{}\n",
                r.bins,
                r.delta_r,
                r.spatial_bins.0,
                r.spatial_bins.1,
                r.mu,
                r.accuracy,
                u8::from(i == self.best)
            ));
        }
        s
    }
}

/// Assigns each index to a fold after sorting by sample identity.
pub fn fold_assignment(metas: &[SequenceMeta], indices: &[usize], folds: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by_key(|&k| (metas[indices[k]], indices[k]));
    let mut fold = vec![0; indices.len()];
    for (pos, &k) in order.iter().enumerate() {
        fold[k] = pos % folds;
    }
    fold
}

/// k-fold cross-validation over the grid, restricted to the protocol's
/// training split. Test samples whose class is absent from a fold's training
/// part count as errors.
pub fn tune(
    dataset: &[DepthSequence],
    protocol: &Protocol,
    base: &ExperimentConfig,
    grid: &TuneGrid,
    folds: usize,
) -> Result<TuneReport, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let folds = folds.max(2);
    let metas: Vec<SequenceMeta> = dataset.iter().map(DepthSequence::meta).collect();
    let split = make_split(&metas, protocol)?;
    let train_seqs: Vec<&DepthSequence> = split.train.iter().map(|&i| &dataset[i]).collect();
    let fold_of = fold_assignment(&metas, &split.train, folds);

    let mut rows = Vec::with_capacity(grid.len());
    for &bins in &grid.bins {
        for &delta_r in &grid.delta_r {
            for &spatial_bins in &grid.spatial_bins {
                let glac = GlacConfig {
                    bins,
                    delta_r,
                    spatial_bins,
                    ..base.glac.clone()
                };
                let descriptors =
                    extract_descriptors_with(&train_seqs, &base.mtm, &base.template, &glac, base.exec)?;
                let vectors: Vec<Vec<f64>> = descriptors
                    .iter()
                    .map(|d| d.action_vector(base.features).values)
                    .collect();
                for &mu in &grid.mu {
                    let accuracy = cross_validate(&vectors, &descriptors, &fold_of, folds, mu, base)?;
                    rows.push(TuneRow {
                        bins,
                        delta_r,
                        spatial_bins,
                        mu,
                        accuracy,
                    });
                }
            }
        }
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.accuracy > rows[best].accuracy {
            best = i;
        }
    }
    Ok(TuneReport { rows, best, folds })
}

fn cross_validate(
    vectors: &[Vec<f64>],
    descriptors: &[ActionDescriptor],
    fold_of: &[usize],
    folds: usize,
    mu: f64,
    base: &ExperimentConfig,
) -> Result<f64, EvalError> {
    let (mut correct, mut total) = (0usize, 0usize);
    for fold in 0..folds {
        let train: Vec<(&[f64], u16)> = (0..vectors.len())
            .filter(|&i| fold_of[i] != fold)
            .map(|i| (vectors[i].as_slice(), descriptors[i].meta.action))
            .collect();
        let held: Vec<usize> = (0..vectors.len()).filter(|&i| fold_of[i] == fold).collect();
        if held.is_empty() || train.len() < 2 {
            continue;
        }
        total += held.len();
        let test: Vec<&[f64]> = held.iter().map(|&i| vectors[i].as_slice()).collect();
        let out = match fit_and_classify(&train, &test, mu, base.retention, base.exec) {
            Ok(out) => out,
            // a degenerate fold scores zero
            Err(EvalError::Pca(PcaError::DegenerateData)) => continue,
            Err(e) => return Err(e),
        };
        correct += held
            .iter()
            .zip(&out.decisions)
            .filter(|(&i, d)| out.classes[d.predicted_class - 1] == descriptors[i].meta.action)
            .count();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

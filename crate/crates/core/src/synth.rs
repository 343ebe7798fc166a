//! Synthetic domains with controlled drift, for exercising the whole toolkit
//! without real encoders.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{
    write_labels, write_loss_log, EmbeddingCloud, LabelTable, LayerStack, LossCurve, LossPoint,
    ProbeSet, RunManifest, STACK_LAYERS,
};
use crate::error::{DriftError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROBE_TEST_DIR: &str = "probe_test";
pub const BASE_TAG: &str = "base";
pub const FT_TAG: &str = "ft";

/// Parameters of the synthetic training-loss curve `C + B·D^(−β) + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthLoss {
    pub asymptote: f64,
    pub coefficient: f64,
    pub exponent: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub points: usize,
    pub steps_per_point: u64,
    pub tokens_per_step: u64,
    pub epochs: f64,
}

impl Default for SynthLoss {
    fn default() -> Self {
        SynthLoss {
            asymptote: 2.0,
            coefficient: 10.0,
            exponent: 0.5,
            noise: 0.005,
            points: 60,
            steps_per_point: 10,
            tokens_per_step: 100,
            epochs: 3.0,
        }
    }
}

/// Recipe for one synthetic domain.
///
/// Each layer of the base model is a Gaussian class mixture. The fine-tuned
/// model applies three transforms whose strength at layer `l` is
/// `drift_layer_profile[l]`: class means scaled toward `class_separation`,
/// covariance stretched toward `anisotropy_factor` along one axis, and a
/// rotation by `drift_rotation_angle` in the plane spanned by the embedding
/// and an independent innovation cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub domain_name: String,
    pub n_samples: usize,
    /// Size of the held-out probe-test set; 0 skips it.
    pub n_test: usize,
    pub dim: usize,
    pub n_classes: usize,
    /// Norm of every base class mean.
    pub base_separation: f64,
    pub class_separation: f64,
    pub drift_rotation_angle: f64,
    pub drift_layer_profile: [f64; STACK_LAYERS],
    pub anisotropy_factor: f64,
    pub labeled: bool,
    pub loss: SynthLoss,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            domain_name: "synth".into(),
            n_samples: 400,
            n_test: 400,
            dim: 16,
            n_classes: 4,
            base_separation: 1.0,
            class_separation: 1.0,
            drift_rotation_angle: 0.0,
            drift_layer_profile: [0.0; STACK_LAYERS],
            anisotropy_factor: 1.0,
            labeled: true,
            loss: SynthLoss::default(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DriftError::Invalid(m));
        if self.domain_name.is_empty()
            || self
                .domain_name
                .chars()
                .any(|c| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return bad(format!("domain name {:?} must be non-empty [A-Za-z0-9_-]", self.domain_name));
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.n_samples < self.n_classes {
            return bad(format!(
                "n_samples {} is smaller than n_classes {}",
                self.n_samples, self.n_classes
            ));
        }
        if self.n_test != 0 && self.n_test < self.n_classes {
            return bad(format!(
                "n_test {} is smaller than n_classes {}",
                self.n_test, self.n_classes
            ));
        }
        if !(self.base_separation.is_finite() && self.base_separation >= 0.0) {
            return bad(format!("base_separation {} must be >= 0", self.base_separation));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return bad(format!("class_separation {} must be >= 0", self.class_separation));
        }
        if !self.drift_rotation_angle.is_finite() {
            return bad("drift_rotation_angle must be finite".into());
        }
        if let Some(l) = self
            .drift_layer_profile
            .iter()
            .position(|s| !(0.0..=1.0).contains(s))
        {
            return bad(format!(
                "drift_layer_profile[{l}] = {} outside [0, 1]",
                self.drift_layer_profile[l]
            ));
        }
        if !(self.anisotropy_factor.is_finite() && self.anisotropy_factor >= 1.0) {
            return bad(format!("anisotropy_factor {} must be >= 1", self.anisotropy_factor));
        }
        let l = &self.loss;
        if !(l.asymptote.is_finite() && l.asymptote >= 0.0)
            || !(l.coefficient.is_finite() && l.coefficient >= 0.0)
            || !(l.exponent.is_finite() && l.exponent > 0.0)
            || !(l.noise.is_finite() && l.noise >= 0.0)
            || !(l.epochs.is_finite() && l.epochs > 0.0)
        {
            return bad("loss parameters must be finite, non-negative, exponent and epochs positive".into());
        }
        if l.points < 2 || l.steps_per_point == 0 || l.tokens_per_step == 0 {
            return bad("loss curve needs >= 2 points and positive step sizes".into());
        }
        Ok(())
    }
}

/// In-memory result of [`synthesize`].
#[derive(Debug, Clone)]
pub struct SynthDomain {
    pub eval: ProbeSet,
    pub probe_test: Option<ProbeSet>,
    pub loss: LossCurve,
}

const STREAMS_PER_LAYER: u64 = 8;
const LOSS_STREAM: u64 = STREAMS_PER_LAYER * STACK_LAYERS as u64;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

fn unit_vector(r: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| normal(r));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Layer-level structure shared by the evaluation and probe-test sets.
struct LayerModel {
    offset: DVector<f64>,
    means: Vec<DVector<f64>>,
    axis: DVector<f64>,
}

impl LayerModel {
    fn draw(spec: &SynthSpec, layer: usize) -> Self {
        let mut r = rng(spec.seed, layer as u64 * STREAMS_PER_LAYER);
        let d = spec.dim;
        let offset = DVector::from_fn(d, |_, _| 0.5 * normal(&mut r));
        let means = (0..spec.n_classes)
            .map(|_| unit_vector(&mut r, d) * spec.base_separation)
            .collect();
        let axis = unit_vector(&mut r, d);
        LayerModel {
            offset,
            means,
            axis,
        }
    }
}

fn to_f32(rows: &[DVector<f64>], d: usize) -> DMatrix<f32> {
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j] as f32)
}

/// Base and ft clouds of one layer for one split.
fn layer_clouds(
    spec: &SynthSpec,
    model: &LayerModel,
    layer: usize,
    split: u64,
    classes: &[usize],
) -> (DMatrix<f32>, DMatrix<f32>) {
    let d = spec.dim;
    let n = classes.len();
    let stream = layer as u64 * STREAMS_PER_LAYER + 1 + 2 * split;
    let mut noise_rng = rng(spec.seed, stream);
    let mut innovation_rng = rng(spec.seed, stream + 1);
    let noise: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(d, |_, _| normal(&mut noise_rng)))
        .collect();
    let base_rows: Vec<DVector<f64>> = noise
        .iter()
        .zip(classes)
        .map(|(e, &c)| &model.offset + &model.means[c] + e)
        .collect();
    let base = to_f32(&base_rows, d);

    let s = spec.drift_layer_profile[layer];
    if s == 0.0 {
        return (base.clone(), base);
    }
    let separation = 1.0 + (spec.class_separation - 1.0) * s;
    let stretch = 1.0 + (spec.anisotropy_factor - 1.0) * s;
    let (sin, cos) = (spec.drift_rotation_angle * s).sin_cos();
    let innovation_scale = (1.0 + spec.base_separation.powi(2) / d as f64).sqrt();
    let ft_rows: Vec<DVector<f64>> = noise
        .iter()
        .zip(classes)
        .map(|(e, &c)| {
            let mut z = &model.means[c] * separation + e;
            let along = model.axis.dot(&z);
            z += &model.axis * ((stretch - 1.0) * along);
            let innovation = DVector::from_fn(d, |_, _| normal(&mut innovation_rng));
            &model.offset + z * cos + innovation * (sin * innovation_scale)
        })
        .collect();
    (base, to_f32(&ft_rows, d))
}

fn class_name(c: usize) -> String {
    format!("class_{c}")
}

fn make_split(spec: &SynthSpec, models: &[LayerModel], split: u64, n: usize) -> Result<ProbeSet> {
    let tag = if split == 0 { "B" } else { "C" };
    let ids: Vec<String> = (0..n)
        .map(|i| format!("{}-{tag}-{i:05}", spec.domain_name))
        .collect();
    let classes: Vec<usize> = (0..n).map(|i| i % spec.n_classes).collect();
    let mut base = Vec::with_capacity(STACK_LAYERS);
    let mut ft = Vec::with_capacity(STACK_LAYERS);
    for (layer, model) in models.iter().enumerate() {
        let (b, f) = layer_clouds(spec, model, layer, split, &classes);
        base.push(EmbeddingCloud::new(layer as u16, BASE_TAG, ids.clone(), b)?);
        ft.push(EmbeddingCloud::new(layer as u16, FT_TAG, ids.clone(), f)?);
    }
    let labels = if spec.labeled {
        Some(LabelTable::new(
            ids.iter().zip(&classes).map(|(id, &c)| (id.clone(), class_name(c))),
        )?)
    } else {
        None
    };
    ProbeSet::new(
        LayerStack::new(BASE_TAG, base)?,
        LayerStack::new(FT_TAG, ft)?,
        labels,
    )
}

fn make_loss(spec: &SynthSpec) -> Result<LossCurve> {
    let l = &spec.loss;
    let mut r = rng(spec.seed, LOSS_STREAM);
    let points = (0..l.points)
        .map(|i| {
            let step = (i as u64 + 1) * l.steps_per_point;
            let tokens = step * l.tokens_per_step;
            let clean = l.asymptote + l.coefficient * (tokens as f64).powf(-l.exponent);
            let train = (clean + l.noise * normal(&mut r)).max(0.0);
            let eval = (clean + 0.05 + l.noise * normal(&mut r)).max(0.0);
            LossPoint {
                step,
                epoch: l.epochs * (i + 1) as f64 / l.points as f64,
                tokens_seen: tokens,
                train_loss: train,
                eval_loss: Some(eval),
            }
        })
        .collect();
    LossCurve::new(points)
}

/// Generate a domain in memory.
pub fn synthesize(spec: &SynthSpec) -> Result<SynthDomain> {
    spec.validate()?;
    let models: Vec<LayerModel> = (0..STACK_LAYERS).map(|l| LayerModel::draw(spec, l)).collect();
    let eval = make_split(spec, &models, 0, spec.n_samples)?;
    let probe_test = if spec.n_test > 0 {
        Some(make_split(spec, &models, 1, spec.n_test)?)
    } else {
        None
    };
    Ok(SynthDomain {
        eval,
        probe_test,
        loss: make_loss(spec)?,
    })
}

fn write_probe_set(set: &ProbeSet, dir: &Path) -> Result<()> {
    set.base.write(dir.join(BASE_TAG))?;
    set.ft.write(dir.join(FT_TAG))?;
    if let Some(labels) = &set.labels {
        write_labels(labels, set.base.sample_ids(), dir.join("labels.csv"))?;
    }
    Ok(())
}

fn probe_manifest(spec: &SynthSpec, split_tag: &str, labeled: bool) -> RunManifest {
    RunManifest {
        domain_name: spec.domain_name.clone(),
        base_dir: PathBuf::from(BASE_TAG),
        ft_dir: PathBuf::from(FT_TAG),
        loss_log: None,
        labels: labeled.then(|| PathBuf::from("labels.csv")),
        seed: spec.seed,
        split_tag: split_tag.into(),
        extraction_notes: Some("synthetic Gaussian class mixtures".into()),
        probe_test: None,
        synthetic: None,
    }
}

/// Write a synthetic domain under `out_dir` and return its run manifest,
/// which is also saved as `out_dir/manifest.json`.
pub fn gen_synthetic_domain(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<RunManifest> {
    let out = out_dir.as_ref();
    let domain = synthesize(spec)?;
    fs::create_dir_all(out).map_err(|e| DriftError::io(out, e))?;
    write_probe_set(&domain.eval, out)?;
    write_loss_log(&domain.loss, out.join("loss.csv"))?;

    let mut manifest = probe_manifest(spec, "B", spec.labeled);
    manifest.loss_log = Some(PathBuf::from("loss.csv"));
    manifest.synthetic = Some(serde_json::to_value(spec).expect("spec serializes"));
    if let Some(test) = &domain.probe_test {
        let dir = out.join(PROBE_TEST_DIR);
        fs::create_dir_all(&dir).map_err(|e| DriftError::io(&dir, e))?;
        write_probe_set(test, &dir)?;
        probe_manifest(spec, "C", spec.labeled).write(dir.join(MANIFEST_FILE))?;
        manifest.probe_test = Some(Path::new(PROBE_TEST_DIR).join(MANIFEST_FILE));
    }
    manifest.write(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Drift profile used by the study generators: strong in the early layers and
/// at the output, weaker in between.
pub fn study_profile() -> [f64; STACK_LAYERS] {
    let mut p = [0.3; STACK_LAYERS];
    p[0] = 0.0;
    p[1] = 1.0;
    p[2] = 1.0;
    p[3] = 1.0;
    p
}

/// `n_domains` domains whose drift magnitude grows linearly from 0 to 1; the
/// same magnitude drives the rotation angle, the class-separation gain and
/// the loss-curve decay coefficient.
pub fn constructed_study(n_domains: usize, seed: u64) -> Vec<SynthSpec> {
    (0..n_domains)
        .map(|i| {
            let m = if n_domains > 1 {
                i as f64 / (n_domains - 1) as f64
            } else {
                0.0
            };
            SynthSpec {
                domain_name: format!("domain_{i:02}"),
                class_separation: 1.0 + 6.0 * m,
                drift_rotation_angle: 1.2 * m,
                drift_layer_profile: study_profile(),
                loss: SynthLoss {
                    coefficient: 4.0 + 20.0 * m,
                    ..SynthLoss::default()
                },
                seed: seed.wrapping_add(i as u64),
                ..SynthSpec::default()
            }
        })
        .collect()
}

/// `n_domains` domains whose rotation, separation gain and loss decay are
/// drawn independently of each other.
pub fn null_study(n_domains: usize, seed: u64) -> Vec<SynthSpec> {
    let mut r = rng(seed, u64::MAX);
    (0..n_domains)
        .map(|i| SynthSpec {
            domain_name: format!("domain_{i:02}"),
            class_separation: 1.0 + 6.0 * r.random::<f64>(),
            drift_rotation_angle: 1.2 * r.random::<f64>(),
            drift_layer_profile: study_profile(),
            loss: SynthLoss {
                coefficient: 4.0 + 20.0 * r.random::<f64>(),
                ..SynthLoss::default()
            },
            seed: seed.wrapping_add(i as u64),
            ..SynthSpec::default()
        })
        .collect()
}

/// Generate every domain under `out_dir/<domain_name>/` and return the
/// manifest paths in input order.
pub fn write_study(specs: &[SynthSpec], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out = out_dir.as_ref();
    specs
        .iter()
        .map(|spec| {
            let dir = out.join(&spec.domain_name);
            gen_synthetic_domain(spec, &dir)?;
            Ok(dir.join(MANIFEST_FILE))
        })
        .collect()
}

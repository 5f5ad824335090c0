//! Branch, single-column and fused architectures and the prediction front end.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::normalize::{Normalizer, NormalizerSet};
use super::{FeatureTable, Label};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::nn::network::{weighted_cross_entropy, ForwardCache, Mode};
use crate::nn::{LayerSpec, MlpParams, MlpSpec, Network};

pub const FUSION_HIDDEN: usize = 32;
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            dropout: 0.25,
            leaky_slope: crate::nn::spec::DEFAULT_LEAKY_SLOPE,
        }
    }
}

/// Hidden widths of each feature set's column, input first. The last entry is
/// the embedding layer.
pub fn column_widths(set: FeatureSet) -> Vec<usize> {
    match set {
        FeatureSet::Fd => vec![416, 128, 64, 32],
        FeatureSet::Stlt => vec![800, 512, 64],
        FeatureSet::Bicoh => vec![8, 32, 16],
    }
}

/// Embedding branch: the column up to the batch norm after its embedding layer.
pub fn branch_spec(set: FeatureSet, arch: &ArchConfig) -> MlpSpec {
    let layers = MlpSpec::blocks(&column_widths(set), arch.dropout, arch.leaky_slope);
    let tap = layers.len() - 3;
    MlpSpec::new(layers, Some(tap)).expect("fixed architecture is valid")
}

/// Full single-feature classifier: the branch plus a two-way Softmax head.
pub fn single_branch_spec(set: FeatureSet, arch: &ArchConfig) -> MlpSpec {
    let branch = branch_spec(set, arch);
    let mut layers = branch.layers;
    layers.push(LayerSpec::Linear {
        input: set.embedding_dim(),
        output: NUM_CLASSES,
    });
    layers.push(LayerSpec::Softmax);
    MlpSpec::new(layers, branch.tap).expect("fixed architecture is valid")
}

pub fn fusion_head_spec(input: usize, arch: &ArchConfig) -> MlpSpec {
    let mut layers = MlpSpec::blocks(&[input, FUSION_HIDDEN], arch.dropout, arch.leaky_slope);
    layers.push(LayerSpec::Linear {
        input: FUSION_HIDDEN,
        output: NUM_CLASSES,
    });
    layers.push(LayerSpec::Softmax);
    MlpSpec::new(layers, None).expect("fixed architecture is valid")
}

/// Result of one training-mode pass: loss, per-row cross-entropy, gradients and
/// forward caches, aligned with [`Trainable::networks_mut`].
pub struct StepOutput {
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub grads: Vec<MlpParams>,
    pub caches: Vec<ForwardCache>,
}

/// A model the training loop can drive.
pub trait Trainable: Clone {
    fn sets(&self) -> Vec<FeatureSet>;

    fn networks(&self) -> Vec<&Network>;

    fn networks_mut(&mut self) -> Vec<&mut Network>;

    /// `inputs` follow [`sets`](Self::sets) order.
    fn loss_and_grad(&self, inputs: &[ArrayView2<f64>], labels: &[usize], weights: &[f64], seed: u64) -> Result<StepOutput>;

    fn predict_proba(&self, inputs: &[ArrayView2<f64>]) -> Result<Array2<f64>>;
}

fn per_sample_ce(probs: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[[i, y]].max(f64::MIN_POSITIVE).ln())
        .collect()
}

/// A stand-alone column; its spec ends in Softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleModel {
    pub set: FeatureSet,
    pub net: Network,
}

impl SingleModel {
    pub fn new(set: FeatureSet, arch: &ArchConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            set,
            net: Network::new(single_branch_spec(set, arch), seed)?,
        })
    }
}

impl Trainable for SingleModel {
    fn sets(&self) -> Vec<FeatureSet> {
        vec![self.set]
    }

    fn networks(&self) -> Vec<&Network> {
        vec![&self.net]
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        vec![&mut self.net]
    }

    fn loss_and_grad(&self, inputs: &[ArrayView2<f64>], labels: &[usize], weights: &[f64], seed: u64) -> Result<StepOutput> {
        let out = self.net.forward(inputs[0], Mode::Train, seed)?;
        let (loss, grad) = weighted_cross_entropy(&out.output, labels, weights)?;
        let (grads, _) = self.net.backward(&out.cache, grad);
        Ok(StepOutput {
            loss,
            per_sample: per_sample_ce(&out.output, labels),
            grads: vec![grads],
            caches: vec![out.cache],
        })
    }

    fn predict_proba(&self, inputs: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        self.net.eval(inputs[0])
    }
}

/// Three embedding branches feeding one fusion head, trained as one network.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedModel {
    pub branches: Vec<(FeatureSet, Network)>,
    pub head: Network,
}

impl FusedModel {
    /// The fused architecture with branch embeddings of 32, 64 and 16.
    pub fn standard(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let branches: Vec<(FeatureSet, MlpSpec)> = FeatureSet::ALL.iter().map(|&s| (s, branch_spec(s, arch))).collect();
        let width: usize = branches.iter().map(|(_, b)| b.output_dim()).sum();
        for (s, b) in &branches {
            assert_eq!(b.output_dim(), s.embedding_dim(), "{s} embedding width");
        }
        assert_eq!(width, 112, "fusion input width");
        Self::from_specs(branches, fusion_head_spec(width, arch), seed)
    }

    /// Arbitrary branch/head specs; widths must chain.
    pub fn from_specs(branches: Vec<(FeatureSet, MlpSpec)>, head: MlpSpec, seed: u64) -> Result<Self> {
        let width: usize = branches.iter().map(|(_, b)| b.output_dim()).sum();
        if width != head.input_dim() {
            return Err(Error::Spec(format!(
                "branch embeddings total {width}, head expects {}",
                head.input_dim()
            )));
        }
        if !head.ends_in_softmax() || branches.iter().any(|(_, b)| b.ends_in_softmax()) {
            return Err(Error::Spec("only the fusion head may end in softmax".into()));
        }
        let branches = branches
            .into_iter()
            .enumerate()
            .map(|(i, (s, spec))| Ok((s, Network::new(spec, derive_seed(seed, i as u64 + 1))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            branches,
            head: Network::new(head, derive_seed(seed, 0))?,
        })
    }

    pub fn embedding_width(&self) -> usize {
        self.head.spec.input_dim()
    }

    /// Concatenated branch outputs (eval mode).
    pub fn embed(&self, inputs: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        let parts = self
            .branches
            .iter()
            .zip(inputs)
            .map(|((_, net), x)| net.eval(*x))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        concatenate(Axis(1), &views).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

impl Trainable for FusedModel {
    fn sets(&self) -> Vec<FeatureSet> {
        self.branches.iter().map(|(s, _)| *s).collect()
    }

    fn networks(&self) -> Vec<&Network> {
        let mut v: Vec<&Network> = self.branches.iter().map(|(_, n)| n).collect();
        v.push(&self.head);
        v
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        let mut v: Vec<&mut Network> = self.branches.iter_mut().map(|(_, n)| n).collect();
        v.push(&mut self.head);
        v
    }

    fn loss_and_grad(&self, inputs: &[ArrayView2<f64>], labels: &[usize], weights: &[f64], seed: u64) -> Result<StepOutput> {
        if inputs.len() != self.branches.len() {
            return Err(Error::InvalidArgument("one input per branch required".into()));
        }
        let mut outs = Vec::with_capacity(self.branches.len());
        for (i, ((_, net), x)) in self.branches.iter().zip(inputs).enumerate() {
            outs.push(net.forward(*x, Mode::Train, derive_seed(seed, i as u64 + 1))?);
        }
        let views: Vec<_> = outs.iter().map(|o| o.output.view()).collect();
        let joined = concatenate(Axis(1), &views).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let head_out = self.head.forward(joined.view(), Mode::Train, derive_seed(seed, 0))?;
        let (loss, grad) = weighted_cross_entropy(&head_out.output, labels, weights)?;
        let (head_grads, dx) = self.head.backward(&head_out.cache, grad);

        let mut grads = Vec::with_capacity(self.branches.len() + 1);
        let mut caches = Vec::with_capacity(self.branches.len() + 1);
        let mut col = 0;
        for ((_, net), out) in self.branches.iter().zip(outs) {
            let w = net.spec.output_dim();
            let (g, _) = net.backward(&out.cache, dx.slice(s![.., col..col + w]).to_owned());
            col += w;
            grads.push(g);
            caches.push(out.cache);
        }
        grads.push(head_grads);
        caches.push(head_out.cache);
        Ok(StepOutput {
            loss,
            per_sample: per_sample_ce(&head_out.output, labels),
            grads,
            caches,
        })
    }

    fn predict_proba(&self, inputs: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        let joined = self.embed(inputs)?;
        self.head.eval(joined.view())
    }
}

/// A trained model behind a uniform scoring interface.
pub trait Classifier: Send + Sync {
    fn name(&self) -> &str;

    fn sets(&self) -> Vec<FeatureSet>;

    /// P(FAKE) for every row of raw (unnormalized) features.
    fn scores(&self, table: &FeatureTable) -> Result<Vec<f64>>;

    fn predict(&self, table: &FeatureTable) -> Result<Vec<Label>> {
        Ok(self.scores(table)?.into_iter().map(|p| Label::from_probs(1.0 - p, p)).collect())
    }
}

fn proba_to_scores(probs: &Array2<f64>) -> Vec<f64> {
    probs.rows().into_iter().map(|r| r[1]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedDetector {
    pub model: FusedModel,
    pub normalizers: NormalizerSet,
}

impl FusedDetector {
    /// Label and P(FAKE) per row. Ties in probability go to REAL.
    pub fn predict_with_scores(&self, table: &FeatureTable) -> Result<Vec<(Label, f64)>> {
        let inputs = self.normalizers.apply(table, &self.model.sets())?;
        let views: Vec<_> = inputs.iter().map(|a| a.view()).collect();
        let probs = self.model.predict_proba(&views)?;
        Ok(probs.rows().into_iter().map(|r| (Label::from_probs(r[0], r[1]), r[1])).collect())
    }
}

impl Classifier for FusedDetector {
    fn name(&self) -> &str {
        "fused"
    }

    fn sets(&self) -> Vec<FeatureSet> {
        self.model.sets()
    }

    fn scores(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        Ok(self.predict_with_scores(table)?.into_iter().map(|(_, p)| p).collect())
    }

    fn predict(&self, table: &FeatureTable) -> Result<Vec<Label>> {
        Ok(self.predict_with_scores(table)?.into_iter().map(|(l, _)| l).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchDetector {
    pub model: SingleModel,
    pub normalizer: Normalizer,
}

impl BranchDetector {
    pub fn probabilities(&self, table: &FeatureTable) -> Result<Array2<f64>> {
        let x = self.normalizer.apply(table.get(self.model.set)?.view())?;
        self.model.predict_proba(&[x.view()])
    }
}

impl Classifier for BranchDetector {
    fn name(&self) -> &str {
        self.model.set.name()
    }

    fn sets(&self) -> Vec<FeatureSet> {
        vec![self.model.set]
    }

    fn scores(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        Ok(proba_to_scores(&self.probabilities(table)?))
    }

    fn predict(&self, table: &FeatureTable) -> Result<Vec<Label>> {
        let p = self.probabilities(table)?;
        Ok(p.rows().into_iter().map(|r| Label::from_probs(r[0], r[1])).collect())
    }
}

/// Modal label of three votes.
pub fn majority_vote(votes: [Label; 3]) -> Label {
    let fakes = votes.iter().filter(|&&l| l == Label::Fake).count();
    if fakes >= 2 {
        Label::Fake
    } else {
        Label::Real
    }
}

/// Majority vote over the three single-feature classifiers. The score is the
/// fraction of FAKE votes.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorityVote {
    pub members: Vec<BranchDetector>,
}

impl Classifier for MajorityVote {
    fn name(&self) -> &str {
        "majority"
    }

    fn sets(&self) -> Vec<FeatureSet> {
        self.members.iter().map(|m| m.model.set).collect()
    }

    fn scores(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let votes = self.member_votes(table)?;
        Ok(votes
            .iter()
            .map(|v| v.iter().filter(|&&l| l == Label::Fake).count() as f64 / v.len() as f64)
            .collect())
    }

    fn predict(&self, table: &FeatureTable) -> Result<Vec<Label>> {
        Ok(self.member_votes(table)?.into_iter().map(majority_vote).collect())
    }
}

impl MajorityVote {
    fn member_votes(&self, table: &FeatureTable) -> Result<Vec<[Label; 3]>> {
        if self.members.len() != 3 {
            return Err(Error::InvalidArgument("majority vote needs exactly three members".into()));
        }
        let preds = self.members.iter().map(|m| m.predict(table)).collect::<Result<Vec<_>>>()?;
        Ok((0..table.len()).map(|i| [preds[0][i], preds[1][i], preds[2][i]]).collect())
    }
}

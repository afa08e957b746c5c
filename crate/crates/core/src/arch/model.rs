//! Detector graphs: one or two conv branches, an optional fusion junction,
//! an RPN head and a RoI-pooling detection head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::anchors::{generate_anchors, Anchor};
use crate::arch::config::{DetectorConfig, FusionStage, FEATURE_STRIDE, NUM_STAGES, POOLED_STAGES};
use crate::arch::BBox;
use crate::nn::ops::{self, ConvCache, PoolCache, RoiCache};
use crate::nn::param::he_std;
use crate::nn::{Conv2d, GradientTape, LayerKind, Linear, ParamStore, Tensor};
use crate::{Error, Result, Scalar};

/// Value subtracted from every input pixel before the first convolution.
pub const PIXEL_MEAN: f64 = 0.5;
const RPN_INIT_STD: f64 = 0.01;
const CLS_INIT_STD: f64 = 0.01;
const REG_INIT_STD: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Color,
    Thermal,
}

impl Modality {
    pub fn channels(self) -> usize {
        match self {
            Modality::Color => 3,
            Modality::Thermal => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Color => "color",
            Modality::Thermal => "thermal",
        }
    }
}

/// One aligned color/thermal input pair, `(1,3,h,w)` and `(1,1,h,w)`.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a, T> {
    pub color: &'a Tensor<T>,
    pub thermal: &'a Tensor<T>,
}

impl<'a, T: Scalar> Frame<'a, T> {
    pub fn new(color: &'a Tensor<T>, thermal: &'a Tensor<T>) -> Result<Self> {
        let frame = Frame { color, thermal };
        if color.shape()[2..] != thermal.shape()[2..] {
            return Err(Error::contract(format!(
                "color {:?} and thermal {:?} images are not aligned",
                color.shape(),
                thermal.shape()
            )));
        }
        Ok(frame)
    }

    fn get(&self, m: Modality) -> &'a Tensor<T> {
        match m {
            Modality::Color => self.color,
            Modality::Thermal => self.thermal,
        }
    }
}

/// Name and kind of one node of a built graph, in execution order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
}

#[derive(Debug, Clone)]
struct ConvStage {
    name: String,
    conv: Conv2d,
    pool: bool,
}

#[derive(Debug, Clone)]
struct StageCache<T> {
    conv: ConvCache<T>,
    act: Tensor<T>,
    pool: Option<PoolCache>,
}

impl ConvStage {
    fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<(Tensor<T>, StageCache<T>)> {
        let (y, conv) = self.conv.forward(store, x)?;
        let act = ops::relu(&y);
        let (out, pool) = if self.pool {
            let (p, c) = ops::maxpool2x2(&act)?;
            (p, Some(c))
        } else {
            (act.clone(), None)
        };
        Ok((out, StageCache { conv, act, pool }))
    }

    fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &StageCache<T>,
        dy: &Tensor<T>,
        tape: &mut GradientTape<T>,
    ) -> Result<Tensor<T>> {
        let d_act = match &cache.pool {
            Some(p) => ops::maxpool2x2_backward(p, dy),
            None => dy.clone(),
        };
        let d_pre = ops::relu_backward(&cache.act, &d_act);
        self.conv.backward(store, &cache.conv, &d_pre, tape)
    }
}

fn run_stages<T: Scalar>(
    stages: &[ConvStage],
    store: &ParamStore<T>,
    x: Tensor<T>,
) -> Result<(Tensor<T>, Vec<StageCache<T>>)> {
    let mut caches = Vec::with_capacity(stages.len());
    let mut cur = x;
    for s in stages {
        let (y, c) = s.forward(store, &cur)?;
        caches.push(c);
        cur = y;
    }
    Ok((cur, caches))
}

fn back_stages<T: Scalar>(
    stages: &[ConvStage],
    store: &ParamStore<T>,
    caches: &[StageCache<T>],
    dy: Tensor<T>,
    tape: &mut GradientTape<T>,
) -> Result<Tensor<T>> {
    let mut d = dy;
    for (s, c) in stages.iter().zip(caches).rev() {
        d = s.backward(store, c, &d, tape)?;
    }
    Ok(d)
}

#[derive(Debug, Clone)]
struct Branch {
    modality: Modality,
    stages: Vec<ConvStage>,
}

#[derive(Debug, Clone)]
struct RpnHead {
    conv: Conv2d,
    cls: Conv2d,
    reg: Conv2d,
}

#[derive(Debug, Clone)]
struct DetectionHead {
    /// One F6/F7 pair per RoI source (two for late fusion).
    fc6: Vec<Linear>,
    fc7: Vec<Linear>,
    cls: Linear,
    reg: Linear,
}

/// Backbone outputs consumed by the two heads.
#[derive(Debug, Clone)]
pub struct Features<T> {
    /// Map the RPN runs on.
    pub rpn_input: Tensor<T>,
    /// Maps RoIs are pooled from; one per branch for late fusion, otherwise one.
    pub roi_sources: Vec<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct BackboneCache<T> {
    branches: Vec<Vec<StageCache<T>>>,
    junction: Option<(usize, ConvCache<T>, Tensor<T>)>,
    trunk: Vec<StageCache<T>>,
}

/// Raw RPN maps: `logits (1, A, fh, fw)` and `deltas (1, 4A, fh, fw)`.
#[derive(Debug, Clone)]
pub struct RpnOutput<T> {
    pub logits: Tensor<T>,
    pub deltas: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct RpnCache<T> {
    conv: ConvCache<T>,
    act: Tensor<T>,
    cls: ConvCache<T>,
    reg: ConvCache<T>,
}

/// Per-RoI head outputs: class logits/probabilities `(R, 2)` with index 1
/// the pedestrian class, and box deltas `(R, 4)`.
#[derive(Debug, Clone)]
pub struct HeadOutput<T> {
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
    pub deltas: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    rois: Vec<Vec<RoiCache>>,
    pooled: Vec<Tensor<T>>,
    f6: Vec<Tensor<T>>,
    f7: Vec<Tensor<T>>,
    joint: Tensor<T>,
    source_shapes: Vec<[usize; 4]>,
}

/// A detector graph with its parameters.
#[derive(Debug, Clone)]
pub struct DetectorModel<T> {
    pub config: DetectorConfig,
    pub stage: FusionStage,
    pub params: ParamStore<T>,
    branches: Vec<Branch>,
    junction: Option<Conv2d>,
    trunk: Vec<ConvStage>,
    rpn: RpnHead,
    head: DetectionHead,
    anchors: Vec<Anchor>,
    anchor_boxes: Vec<BBox<T>>,
}

/// Builds the graph for `stage` with freshly initialized parameters and
/// verifies it with a dry-run forward pass.
pub fn build_detector<T: Scalar>(config: &DetectorConfig, stage: FusionStage) -> Result<DetectorModel<T>> {
    DetectorModel::new(config, stage)
}

impl<T: Scalar> DetectorModel<T> {
    pub fn new(config: &DetectorConfig, stage: FusionStage) -> Result<Self> {
        config.validate()?;
        if stage == FusionStage::Score {
            return Err(Error::config(
                "score fusion pairs two independently trained none-color and none-thermal models; build those instead",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let w = config.widths;
        let std_for = |shape: [usize; 4]| config.weight_std.unwrap_or_else(|| he_std(shape));

        // stage range per branch, and where the shared trunk starts
        let (modalities, branch_stages, junction_after): (Vec<Modality>, usize, Option<usize>) = match stage {
            FusionStage::NoneColor => (vec![Modality::Color], NUM_STAGES, None),
            FusionStage::NoneThermal => (vec![Modality::Thermal], NUM_STAGES, None),
            FusionStage::Early => (vec![Modality::Color, Modality::Thermal], 1, Some(0)),
            FusionStage::Halfway => (vec![Modality::Color, Modality::Thermal], 4, Some(3)),
            FusionStage::Late => (vec![Modality::Color, Modality::Thermal], NUM_STAGES, None),
            FusionStage::Score => unreachable!(),
        };

        let make_stage = |store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, prefix: &str, i: usize, c_in: usize| {
            let name = format!("{prefix}c{}", i + 1);
            let std = std_for([w[i], c_in, 3, 3]);
            let conv = Conv2d::register(store, &name, c_in, w[i], 3, 1, 1, std, rng)?;
            Ok::<_, Error>(ConvStage { name, conv, pool: POOLED_STAGES.contains(&i) })
        };

        let mut branches = Vec::new();
        for &m in &modalities {
            let mut stages = Vec::new();
            let mut c_in = m.channels();
            for i in 0..branch_stages {
                stages.push(make_stage(&mut store, &mut rng, &format!("{}.", m.name()), i, c_in)?);
                c_in = w[i];
            }
            branches.push(Branch { modality: m, stages });
        }

        let mut junction = None;
        let mut trunk = Vec::new();
        if let Some(j) = junction_after {
            let fused_in = 2 * w[j];
            let fused_out = config.fusion_width.unwrap_or(w[j]);
            let std = std_for([fused_out, fused_in, 1, 1]);
            junction = Some(Conv2d::register_nin(&mut store, "fuse.nin", fused_in, fused_out, std, &mut rng)?);
            let mut c_in = fused_out;
            for i in j + 1..NUM_STAGES {
                trunk.push(make_stage(&mut store, &mut rng, "", i, c_in)?);
                c_in = w[i];
            }
        }

        let c5 = w[NUM_STAGES - 1];
        let rpn_in = if stage == FusionStage::Late { 2 * c5 } else { c5 };
        let a = config.anchors_per_cell();
        let rpn_std = config.weight_std.unwrap_or(RPN_INIT_STD);
        let rpn = RpnHead {
            conv: Conv2d::register(&mut store, "rpn.conv", rpn_in, config.rpn_width, 3, 1, 1, std_for([config.rpn_width, rpn_in, 3, 3]), &mut rng)?,
            cls: Conv2d::register(&mut store, "rpn.cls", config.rpn_width, a, 1, 1, 0, rpn_std, &mut rng)?,
            reg: Conv2d::register(&mut store, "rpn.reg", config.rpn_width, 4 * a, 1, 1, 0, rpn_std, &mut rng)?,
        };

        let roi_d = c5 * config.roi_out * config.roi_out;
        let sources: Vec<&str> = if stage == FusionStage::Late { vec!["color.", "thermal."] } else { vec![""] };
        let mut fc6 = Vec::new();
        let mut fc7 = Vec::new();
        for prefix in &sources {
            let f = config.fc_width;
            fc6.push(Linear::register(&mut store, &format!("{prefix}fc6"), roi_d, f, std_for([f, roi_d, 1, 1]), &mut rng)?);
            fc7.push(Linear::register(&mut store, &format!("{prefix}fc7"), f, f, std_for([f, f, 1, 1]), &mut rng)?);
        }
        let joint = config.fc_width * sources.len();
        let head = DetectionHead {
            fc6,
            fc7,
            cls: Linear::register(&mut store, "head.cls", joint, 2, config.weight_std.unwrap_or(CLS_INIT_STD), &mut rng)?,
            reg: Linear::register(&mut store, "head.reg", joint, 4, config.weight_std.unwrap_or(REG_INIT_STD), &mut rng)?,
        };

        let (fh, fw) = config.feature_hw();
        let anchors = generate_anchors(fh, fw, FEATURE_STRIDE as f64, &config.anchor_scales, &config.anchor_ratios)?;
        let anchor_boxes = anchors.iter().map(Anchor::to_bbox).collect();

        let model = DetectorModel {
            config: config.clone(),
            stage,
            params: store,
            branches,
            junction,
            trunk,
            rpn,
            head,
            anchors,
            anchor_boxes,
        };
        model.dry_run()?;
        Ok(model)
    }

    /// Forward pass on blank inputs; any shape inconsistency in the graph surfaces here.
    pub fn dry_run(&self) -> Result<()> {
        let (color, thermal) = self.blank_inputs();
        let frame = Frame::new(&color, &thermal)?;
        let (feats, _) = self.backbone_forward(&frame)?;
        let (fh, fw) = self.config.feature_hw();
        if feats.rpn_input.shape()[2..] != [fh, fw] {
            return Err(Error::contract(format!(
                "backbone produced {:?}, expected a {fh}x{fw} map",
                feats.rpn_input.shape()
            )));
        }
        let (rpn, _) = self.rpn_forward_maps(&feats.rpn_input)?;
        if rpn.logits.len() != self.anchors.len() || rpn.deltas.len() != 4 * self.anchors.len() {
            return Err(Error::contract("RPN output does not cover every anchor"));
        }
        let roi = BBox::new(T::zero(), T::zero(), T::lit(self.config.image_w as f64), T::lit(self.config.image_h as f64))?;
        let (out, _) = self.head_forward(&feats, &[roi])?;
        if out.probs.shape() != [1, 2, 1, 1] || out.deltas.shape() != [1, 4, 1, 1] {
            return Err(Error::contract("detection head produced unexpected shapes"));
        }
        Ok(())
    }

    pub fn blank_inputs(&self) -> (Tensor<T>, Tensor<T>) {
        let (h, w) = (self.config.image_h, self.config.image_w);
        (Tensor::zeros([1, 3, h, w]), Tensor::zeros([1, 1, h, w]))
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn anchor_boxes(&self) -> &[BBox<T>] {
        &self.anchor_boxes
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn has_concat(&self) -> bool {
        self.junction.is_some() || self.stage == FusionStage::Late
    }

    /// `(input channels, output channels)` of the NIN at the fusion junction.
    pub fn nin_channels(&self) -> Option<(usize, usize)> {
        self.junction.map(|n| (n.c_in, n.c_out))
    }

    /// Number of conv stages applied before the branches are concatenated.
    pub fn junction_depth(&self) -> Option<usize> {
        self.junction.map(|_| self.branches[0].stages.len())
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Count of 2×2 pooling layers on the image-to-C5 path.
    pub fn pooling_layers(&self) -> usize {
        let branch = self.branches[0].stages.iter().filter(|s| s.pool).count();
        branch + self.trunk.iter().filter(|s| s.pool).count()
    }

    /// Graph nodes in execution order, for manifests and inspection.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        let push_stage = |out: &mut Vec<LayerInfo>, s: &ConvStage| {
            out.push(LayerInfo { name: s.name.clone(), kind: s.conv.kind() });
            out.push(LayerInfo { name: format!("{}.relu", s.name), kind: LayerKind::Relu });
            if s.pool {
                out.push(LayerInfo { name: format!("{}.pool", s.name), kind: LayerKind::MaxPool2x2 });
            }
        };
        for b in &self.branches {
            for s in &b.stages {
                push_stage(&mut out, s);
            }
        }
        if let Some(nin) = &self.junction {
            out.push(LayerInfo { name: "fuse.concat".into(), kind: LayerKind::ConcatChannels });
            out.push(LayerInfo { name: "fuse.nin".into(), kind: nin.kind() });
            out.push(LayerInfo { name: "fuse.nin.relu".into(), kind: LayerKind::Relu });
        }
        for s in &self.trunk {
            push_stage(&mut out, s);
        }
        if self.stage == FusionStage::Late {
            out.push(LayerInfo { name: "rpn.concat".into(), kind: LayerKind::ConcatChannels });
        }
        out.push(LayerInfo { name: "rpn.conv".into(), kind: self.rpn.conv.kind() });
        out.push(LayerInfo { name: "rpn.conv.relu".into(), kind: LayerKind::Relu });
        out.push(LayerInfo { name: "rpn.cls".into(), kind: self.rpn.cls.kind() });
        out.push(LayerInfo { name: "rpn.reg".into(), kind: self.rpn.reg.kind() });
        let roi = LayerKind::RoiPool {
            out_h: self.config.roi_out,
            out_w: self.config.roi_out,
            spatial_scale: 1.0 / FEATURE_STRIDE as f64,
        };
        let prefixes: &[&str] = if self.head.fc6.len() == 2 { &["color.", "thermal."] } else { &[""] };
        for p in prefixes {
            out.push(LayerInfo { name: format!("{p}roi_pool"), kind: roi });
            for fc in ["fc6", "fc7"] {
                out.push(LayerInfo { name: format!("{p}{fc}"), kind: LayerKind::FullyConnected });
                out.push(LayerInfo { name: format!("{p}{fc}.relu"), kind: LayerKind::Relu });
            }
        }
        if prefixes.len() == 2 {
            out.push(LayerInfo { name: "head.concat".into(), kind: LayerKind::ConcatChannels });
        }
        out.push(LayerInfo { name: "head.cls".into(), kind: LayerKind::FullyConnected });
        out.push(LayerInfo { name: "head.softmax".into(), kind: LayerKind::Softmax });
        out.push(LayerInfo { name: "head.reg".into(), kind: LayerKind::FullyConnected });
        out
    }

    fn check_input(&self, m: Modality, x: &Tensor<T>) -> Result<()> {
        let want = [1, m.channels(), self.config.image_h, self.config.image_w];
        if x.shape() != want {
            return Err(Error::contract(format!("{} input has shape {:?}, model expects {want:?}", m.name(), x.shape())));
        }
        Ok(())
    }

    pub fn backbone_forward(&self, frame: &Frame<'_, T>) -> Result<(Features<T>, BackboneCache<T>)> {
        let mean = T::lit(PIXEL_MEAN);
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut caches = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let x = frame.get(b.modality);
            self.check_input(b.modality, x)?;
            let (y, c) = run_stages(&b.stages, &self.params, x.map(|v| v - mean))?;
            outs.push(y);
            caches.push(c);
        }
        let mut cache = BackboneCache { branches: caches, junction: None, trunk: Vec::new() };
        let feats = if let Some(nin) = &self.junction {
            let ca = outs[0].c();
            let cat = ops::concat_channels(&outs[0], &outs[1])?;
            let (z, nin_cache) = nin.forward(&self.params, &cat)?;
            let act = ops::relu(&z);
            let (c5, trunk) = run_stages(&self.trunk, &self.params, act.clone())?;
            cache.junction = Some((ca, nin_cache, act));
            cache.trunk = trunk;
            Features { rpn_input: c5.clone(), roi_sources: vec![c5] }
        } else if self.stage == FusionStage::Late {
            let cat = ops::concat_channels(&outs[0], &outs[1])?;
            Features { rpn_input: cat, roi_sources: outs }
        } else {
            let c5 = outs.pop().expect("one branch");
            Features { rpn_input: c5.clone(), roi_sources: vec![c5] }
        };
        Ok((feats, cache))
    }

    pub fn backbone_backward(
        &self,
        cache: &BackboneCache<T>,
        d_rpn_input: &Tensor<T>,
        d_roi_sources: Vec<Tensor<T>>,
        tape: &mut GradientTape<T>,
    ) -> Result<()> {
        let mut d_branch: Vec<Tensor<T>> = if let Some(nin) = &self.junction {
            let mut d_c5 = d_rpn_input.clone();
            d_c5.add_assign(&d_roi_sources[0])?;
            let d_act = back_stages(&self.trunk, &self.params, &cache.trunk, d_c5, tape)?;
            let (ca, nin_cache, act) = cache.junction.as_ref().expect("junction cache");
            let d_z = ops::relu_backward(act, &d_act);
            let d_cat = nin.backward(&self.params, nin_cache, &d_z, tape)?;
            let (a, b) = ops::concat_channels_backward(&d_cat, *ca);
            vec![a, b]
        } else if self.stage == FusionStage::Late {
            let (mut a, mut b) = ops::concat_channels_backward(d_rpn_input, self.config.widths[NUM_STAGES - 1]);
            a.add_assign(&d_roi_sources[0])?;
            b.add_assign(&d_roi_sources[1])?;
            vec![a, b]
        } else {
            let mut d = d_rpn_input.clone();
            d.add_assign(&d_roi_sources[0])?;
            vec![d]
        };
        for (i, b) in self.branches.iter().enumerate().rev() {
            let d = std::mem::replace(&mut d_branch[i], Tensor::zeros([0, 0, 0, 0]));
            back_stages(&b.stages, &self.params, &cache.branches[i], d, tape)?;
        }
        Ok(())
    }

    pub fn rpn_forward_maps(&self, rpn_input: &Tensor<T>) -> Result<(RpnOutput<T>, RpnCache<T>)> {
        let (z, conv) = self.rpn.conv.forward(&self.params, rpn_input)?;
        let act = ops::relu(&z);
        let (logits, cls) = self.rpn.cls.forward(&self.params, &act)?;
        let (deltas, reg) = self.rpn.reg.forward(&self.params, &act)?;
        Ok((RpnOutput { logits, deltas }, RpnCache { conv, act, cls, reg }))
    }

    /// Returns the gradient with respect to the RPN input map.
    pub fn rpn_backward(
        &self,
        cache: &RpnCache<T>,
        d_logits: &Tensor<T>,
        d_deltas: &Tensor<T>,
        tape: &mut GradientTape<T>,
    ) -> Result<Tensor<T>> {
        let mut d_act = self.rpn.cls.backward(&self.params, &cache.cls, d_logits, tape)?;
        d_act.add_assign(&self.rpn.reg.backward(&self.params, &cache.reg, d_deltas, tape)?)?;
        let d_z = ops::relu_backward(&cache.act, &d_act);
        self.rpn.conv.backward(&self.params, &cache.conv, &d_z, tape)
    }

    /// Classifies and regresses each RoI (image coordinates).
    pub fn head_forward(&self, feats: &Features<T>, rois: &[BBox<T>]) -> Result<(HeadOutput<T>, HeadCache<T>)> {
        if rois.is_empty() {
            return Err(Error::contract("detection head needs at least one RoI"));
        }
        let out_hw = (self.config.roi_out, self.config.roi_out);
        let scale = 1.0 / FEATURE_STRIDE as f64;
        let mut cache = HeadCache {
            rois: Vec::new(),
            pooled: Vec::new(),
            f6: Vec::new(),
            f7: Vec::new(),
            joint: Tensor::zeros([0, 0, 0, 0]),
            source_shapes: feats.roi_sources.iter().map(Tensor::shape).collect(),
        };
        let mut f7s = Vec::with_capacity(feats.roi_sources.len());
        for (s, src) in feats.roi_sources.iter().enumerate() {
            let mut parts = Vec::with_capacity(rois.len());
            let mut rc = Vec::with_capacity(rois.len());
            for roi in rois {
                let (p, c) = ops::roi_pool(src, roi, scale, out_hw)?;
                parts.push(p);
                rc.push(c);
            }
            let pooled = Tensor::stack(&parts)?;
            let f6 = ops::relu(&self.head.fc6[s].forward(&self.params, &pooled)?);
            let f7 = ops::relu(&self.head.fc7[s].forward(&self.params, &f6)?);
            cache.rois.push(rc);
            cache.pooled.push(pooled);
            cache.f6.push(f6);
            f7s.push(f7.clone());
            cache.f7.push(f7);
        }
        let joint = if f7s.len() == 2 {
            ops::concat_channels(&f7s[0], &f7s[1])?
        } else {
            f7s.pop().expect("one source")
        };
        let logits = self.head.cls.forward(&self.params, &joint)?;
        let probs = ops::softmax(&logits);
        let deltas = self.head.reg.forward(&self.params, &joint)?;
        cache.joint = joint;
        Ok((HeadOutput { logits, probs, deltas }, cache))
    }

    /// Returns one gradient map per RoI source.
    pub fn head_backward(
        &self,
        cache: &HeadCache<T>,
        d_logits: &Tensor<T>,
        d_deltas: &Tensor<T>,
        tape: &mut GradientTape<T>,
    ) -> Result<Vec<Tensor<T>>> {
        let mut d_joint = self.head.cls.backward(&self.params, &cache.joint, d_logits, tape)?;
        d_joint.add_assign(&self.head.reg.backward(&self.params, &cache.joint, d_deltas, tape)?)?;
        let f = self.config.fc_width;
        let n_src = cache.f7.len();
        let mut out = Vec::with_capacity(n_src);
        for s in 0..n_src {
            let d_f7 = if n_src == 1 { d_joint.clone() } else { d_joint.channel_slice(s * f, f) };
            let d_f7 = ops::relu_backward(&cache.f7[s], &d_f7);
            let d_f6 = self.head.fc7[s].backward(&self.params, &cache.f6[s], &d_f7, tape)?;
            let d_f6 = ops::relu_backward(&cache.f6[s], &d_f6);
            let d_pooled = self.head.fc6[s].backward(&self.params, &cache.pooled[s], &d_f6, tape)?;
            let mut d_src = Tensor::zeros(cache.source_shapes[s]);
            let per = d_pooled.len() / d_pooled.n().max(1);
            for (r, rc) in cache.rois[s].iter().enumerate() {
                ops::roi_pool_backward(rc, &d_pooled.data()[r * per..(r + 1) * per], &mut d_src)?;
            }
            out.push(d_src);
        }
        Ok(out)
    }

    /// Copy of this model with every parameter converted to `U`.
    pub fn cast<U: Scalar>(&self) -> DetectorModel<U> {
        DetectorModel {
            config: self.config.clone(),
            stage: self.stage,
            params: self.params.cast(),
            branches: self.branches.clone(),
            junction: self.junction,
            trunk: self.trunk.clone(),
            rpn: self.rpn.clone(),
            head: self.head.clone(),
            anchors: self.anchors.clone(),
            anchor_boxes: self.anchor_boxes.iter().map(BBox::cast).collect(),
        }
    }
}

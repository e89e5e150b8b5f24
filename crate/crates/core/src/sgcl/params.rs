//! Parameter containers, initialization and flat views.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::real::Real;
use super::tensor::Mat;
use super::SgclError;

/// Shapes of every parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgclConfig {
    /// Width of hidden states, cell representations and fused features.
    pub dim: usize,
    pub c3: usize,
    pub c4: usize,
    pub c5: usize,
    /// Decoder layers feeding the aggregation.
    pub layers: usize,
    pub p4_height: usize,
    pub p4_width: usize,
    pub refine_layers: usize,
    /// Sine positional-encoding temperature.
    pub temperature: f64,
}

impl SgclConfig {
    pub const SELF_ATTENTION_BLOCKS: usize = 2;

    /// Desk-scale shapes: 16-wide, 8x8 P4, three refinement layers.
    pub fn toy() -> Self {
        SgclConfig {
            dim: 16,
            c3: 6,
            c4: 10,
            c5: 12,
            layers: 3,
            p4_height: 8,
            p4_width: 8,
            refine_layers: 3,
            temperature: 10000.0,
        }
    }

    pub fn check(&self) -> Result<(), SgclError> {
        let sizes = [self.dim, self.c3, self.c4, self.c5, self.layers, self.p4_height, self.p4_width];
        if sizes.contains(&0) {
            return Err(SgclError::Config("every size must be positive"));
        }
        if !self.dim.is_multiple_of(8) {
            return Err(SgclError::Config("dim must be a multiple of 8 for the sine encodings"));
        }
        if !(self.temperature > 1.0 && self.temperature.is_finite()) {
            return Err(SgclError::Config("temperature must be finite and above 1"));
        }
        Ok(())
    }
}

/// `y = W x + b` with `W` stored `out x in` and `b` as a `1 x out` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub w: Mat<S>,
    pub b: Mat<S>,
}

/// Projections of one attention block; `wo` maps the attended value back.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<S> {
    pub wq: Mat<S>,
    pub wk: Mat<S>,
    pub wv: Mat<S>,
    pub wo: Mat<S>,
}

/// One enhancement branch: masked self-attention blocks then a cross-attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<S> {
    pub self_attn: Vec<Attention<S>>,
    pub cross: Attention<S>,
}

/// Two-layer perceptron with a tanh hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<S> {
    pub hidden: Linear<S>,
    pub out: Linear<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineLayer<S> {
    /// Projects the anchor sine encoding into the query.
    pub anchor_proj: Mat<S>,
    pub attn: Attention<S>,
    pub delta: Mlp<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgclParams<S> {
    pub config: SgclConfig,
    /// `1 x layers` pre-softmax aggregation weights.
    pub layer_weights: Mat<S>,
    pub conv31: Linear<S>,
    pub conv32: Linear<S>,
    pub conv41: Linear<S>,
    pub conv42: Linear<S>,
    /// `(p4_height * p4_width) x dim`, row-major over positions.
    pub pos: Mat<S>,
    pub proj_row: Linear<S>,
    pub proj_col: Linear<S>,
    pub branch_row: Branch<S>,
    pub branch_col: Branch<S>,
    pub regress: Mlp<S>,
    pub refine: Vec<RefineLayer<S>>,
    pub mask_proj: Mat<S>,
}

type Init<'a> = dyn FnMut(usize, usize, usize) -> Mat<f64> + 'a;

impl Linear<f64> {
    fn build(out: usize, inp: usize, init: &mut Init) -> Self {
        Linear { w: init(out, inp, inp), b: init(1, out, inp) }
    }
}

impl Attention<f64> {
    fn build(d: usize, init: &mut Init) -> Self {
        Attention {
            wq: init(d, d, d),
            wk: init(d, d, d),
            wv: init(d, d, d),
            wo: init(d, d, d),
        }
    }
}

impl Branch<f64> {
    fn build(d: usize, init: &mut Init) -> Self {
        Branch {
            self_attn: (0..SgclConfig::SELF_ATTENTION_BLOCKS).map(|_| Attention::build(d, init)).collect(),
            cross: Attention::build(d, init),
        }
    }
}

impl Mlp<f64> {
    fn build(d: usize, out: usize, init: &mut Init) -> Self {
        Mlp { hidden: Linear::build(d, d, init), out: Linear::build(out, d, init) }
    }
}

impl SgclParams<f64> {
    fn build(cfg: SgclConfig, init: &mut Init) -> Result<Self, SgclError> {
        cfg.check()?;
        let d = cfg.dim;
        Ok(SgclParams {
            config: cfg,
            layer_weights: init(1, cfg.layers, 1),
            conv31: Linear::build(d, cfg.c3, init),
            conv32: Linear::build(d, cfg.c4, init),
            conv41: Linear::build(d, cfg.c4, init),
            conv42: Linear::build(d, cfg.c5, init),
            pos: init(cfg.p4_height * cfg.p4_width, d, d),
            proj_row: Linear::build(d, d, init),
            proj_col: Linear::build(d, d, init),
            branch_row: Branch::build(d, init),
            branch_col: Branch::build(d, init),
            regress: Mlp::build(d, 4, init),
            refine: (0..cfg.refine_layers)
                .map(|_| RefineLayer {
                    anchor_proj: init(d, d, d),
                    attn: Attention::build(d, init),
                    delta: Mlp::build(d, 4, init),
                })
                .collect(),
            mask_proj: init(d, d, d),
        })
    }

    pub fn zeros(cfg: SgclConfig) -> Result<Self, SgclError> {
        SgclParams::build(cfg, &mut |r, c, _| Mat::filled(r, c, 0.0))
    }

    /// Uniform in `±1/sqrt(fan_in)` for every tensor.
    pub fn random(cfg: SgclConfig, rng: &mut impl Rng) -> Result<Self, SgclError> {
        SgclParams::build(cfg, &mut |r, c, fan_in| {
            let a = 1.0 / crate::math::sqrt(fan_in as f64);
            Mat::from_fn(r, c, |_, _| rng.random_range(-a..=a))
        })
    }

    /// Rebuilds a parameter set from values in [`SgclParams::tensors`] order.
    pub fn from_flat<S: Real>(cfg: SgclConfig, values: &[S]) -> Result<SgclParams<S>, SgclError> {
        let template = SgclParams::zeros(cfg)?;
        let expected = template.len();
        if values.len() != expected {
            return Err(SgclError::Shape { what: "parameter vector", expected, found: values.len() });
        }
        let mut it = values.iter();
        Ok(template.map(&mut |_| *it.next().unwrap()))
    }
}

impl<S> Linear<S> {
    fn map<U>(&self, f: &mut dyn FnMut(&S) -> U) -> Linear<U> {
        Linear { w: self.w.map(f), b: self.b.map(f) }
    }

    fn visit<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a Mat<S>)>) {
        out.push((format!("{name}.w"), &self.w));
        out.push((format!("{name}.b"), &self.b));
    }
}

impl<S> Attention<S> {
    fn map<U>(&self, f: &mut dyn FnMut(&S) -> U) -> Attention<U> {
        Attention {
            wq: self.wq.map(f),
            wk: self.wk.map(f),
            wv: self.wv.map(f),
            wo: self.wo.map(f),
        }
    }

    fn visit<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a Mat<S>)>) {
        out.push((format!("{name}.wq"), &self.wq));
        out.push((format!("{name}.wk"), &self.wk));
        out.push((format!("{name}.wv"), &self.wv));
        out.push((format!("{name}.wo"), &self.wo));
    }
}

impl<S> Branch<S> {
    fn map<U>(&self, f: &mut dyn FnMut(&S) -> U) -> Branch<U> {
        Branch {
            self_attn: self.self_attn.iter().map(|a| a.map(f)).collect(),
            cross: self.cross.map(f),
        }
    }

    fn visit<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a Mat<S>)>) {
        for (i, a) in self.self_attn.iter().enumerate() {
            a.visit(&format!("{name}.self{i}"), out);
        }
        self.cross.visit(&format!("{name}.cross"), out);
    }
}

impl<S> Mlp<S> {
    fn map<U>(&self, f: &mut dyn FnMut(&S) -> U) -> Mlp<U> {
        Mlp { hidden: self.hidden.map(f), out: self.out.map(f) }
    }

    fn visit<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a Mat<S>)>) {
        self.hidden.visit(&format!("{name}.hidden"), out);
        self.out.visit(&format!("{name}.out"), out);
    }
}

impl<S> SgclParams<S> {
    /// Applies `f` to every scalar, in [`SgclParams::tensors`] order.
    pub fn map<U>(&self, f: &mut dyn FnMut(&S) -> U) -> SgclParams<U> {
        SgclParams {
            config: self.config,
            layer_weights: self.layer_weights.map(f),
            conv31: self.conv31.map(f),
            conv32: self.conv32.map(f),
            conv41: self.conv41.map(f),
            conv42: self.conv42.map(f),
            pos: self.pos.map(f),
            proj_row: self.proj_row.map(f),
            proj_col: self.proj_col.map(f),
            branch_row: self.branch_row.map(f),
            branch_col: self.branch_col.map(f),
            regress: self.regress.map(f),
            refine: self
                .refine
                .iter()
                .map(|l| RefineLayer {
                    anchor_proj: l.anchor_proj.map(f),
                    attn: l.attn.map(f),
                    delta: l.delta.map(f),
                })
                .collect(),
            mask_proj: self.mask_proj.map(f),
        }
    }

    /// Every tensor with a dotted name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Mat<S>)> {
        let mut out = Vec::new();
        out.push((String::from("layer_weights"), &self.layer_weights));
        self.conv31.visit("conv31", &mut out);
        self.conv32.visit("conv32", &mut out);
        self.conv41.visit("conv41", &mut out);
        self.conv42.visit("conv42", &mut out);
        out.push((String::from("pos"), &self.pos));
        self.proj_row.visit("proj_row", &mut out);
        self.proj_col.visit("proj_col", &mut out);
        self.branch_row.visit("branch_row", &mut out);
        self.branch_col.visit("branch_col", &mut out);
        self.regress.visit("regress", &mut out);
        for (i, l) in self.refine.iter().enumerate() {
            out.push((format!("refine{i}.anchor_proj"), &l.anchor_proj));
            l.attn.visit(&format!("refine{i}.attn"), &mut out);
            l.delta.visit(&format!("refine{i}.delta"), &mut out);
        }
        out.push((String::from("mask_proj"), &self.mask_proj));
        out
    }

    /// Total scalar count.
    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<S>
    where
        S: Clone,
    {
        self.tensors().into_iter().flat_map(|(_, m)| m.data().iter().cloned()).collect()
    }
}

impl<S: Real> SgclParams<S> {
    pub fn values(&self) -> SgclParams<f64> {
        self.map(&mut |v| v.val())
    }
}

impl<S: Real> SgclParams<S> {
    pub fn lift(p: &SgclParams<f64>) -> Self {
        p.map(&mut |&v| S::cst(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn map_and_tensors_agree_on_order() {
        let cfg = SgclConfig::toy();
        let zeros = SgclParams::zeros(cfg).unwrap();
        let mut k = 0.0;
        let counted = zeros.map(&mut |_| {
            k += 1.0;
            k
        });
        let flat = counted.flat();
        assert!(flat.windows(2).all(|w| w[1] == w[0] + 1.0));
        let back = SgclParams::from_flat(cfg, &flat).unwrap();
        assert_eq!(back, counted);
    }

    #[test]
    fn shapes_follow_config() {
        let cfg = SgclConfig::toy();
        let p = SgclParams::random(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let t = p.tensors();
        let names: Vec<&str> = t.iter().map(|(n, _)| n.as_str()).collect();
        let uniq: alloc::collections::BTreeSet<&str> = names.iter().copied().collect();
        assert_eq!(uniq.len(), names.len());
        assert_eq!(p.pos.shape(), (64, 16));
        assert_eq!(p.conv32.w.shape(), (16, 10));
        assert_eq!(p.branch_col.self_attn.len(), 2);
        assert_eq!(p.refine.len(), 3);
        assert!(p.flat().iter().all(|v| v.abs() <= 1.0));
        assert!(SgclParams::from_flat(cfg, &[0.0; 3]).is_err());
    }

    #[test]
    fn config_checks() {
        let mut cfg = SgclConfig::toy();
        cfg.dim = 12;
        assert!(cfg.check().is_err());
        cfg.dim = 16;
        cfg.layers = 0;
        assert!(SgclParams::zeros(cfg).is_err());
    }
}

//! Differentiable attack losses as functions of the training-link signs.

use std::sync::Arc;

use nalgebra::DVector;

use crate::balance;
use crate::error::{Error, Result};
use crate::fextra::{self, needs_ridge, ThetaInit, Transform, RIDGE};
use crate::graph::{EdgeSplit, ObservedGraph, SignedGraph};
use crate::numerics::tape::{Matrix, SignedCountPlan, Tape, Var};
use crate::pole::{self, FactorConfig, WalkMode, WalkParams};

use super::{AttackConfig, AttackTarget};

/// Clip applied inside both logarithms of the likelihood.
pub const LOG_CLIP: f64 = 1e-12;

/// Everything about the clean observed graph that stays fixed while signs
/// are flipped.
#[derive(Debug, Clone)]
pub struct AttackContext {
    pub obs: ObservedGraph,
    /// Training links (`u < v`), in the order of the sign vector.
    pub train: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    /// Clean training signs as ±1.
    pub clean_signs: Vec<f64>,
    /// Self-trained labels for the test links, in `{0, 1}`.
    pub labels: Vec<f64>,
    targets: Vec<Vec<(usize, usize)>>,
    /// Counts over the training edges for the training then test links.
    counts: Arc<SignedCountPlan>,
    empty: Matrix,
    abs_sq: Matrix,
    visible_abs: Matrix,
    /// Symmetric-walk transition of the visible unsigned graph.
    m_abs_sym: Option<Matrix>,
}

impl AttackContext {
    pub fn new(g: &SignedGraph, split: &EdgeSplit, labels: &[bool]) -> Result<Self> {
        if labels.len() != split.test.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} test links",
                labels.len(),
                split.test.len()
            )));
        }
        let obs = ObservedGraph::new(g, split);
        let n = obs.n();
        let train = obs.train_links.clone();
        let targets = train.iter().map(|&(u, v)| vec![(u, v), (v, u)]).collect();
        let clean_signs = split.train.iter().map(|&k| g.edge(k).sign as f64).collect();
        let abs_sq = &obs.abs * &obs.abs;
        let visible_abs = obs.visible_abs();
        let links: Vec<(usize, usize)> = train.iter().chain(&obs.test_links).copied().collect();
        let counts = Arc::new(SignedCountPlan::new(n, &train, &links));
        Ok(Self {
            test: obs.test_links.clone(),
            train,
            clean_signs,
            labels: labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            targets,
            counts,
            empty: Matrix::zeros(n, n),
            abs_sq,
            visible_abs,
            m_abs_sym: None,
            obs,
        })
    }

    pub fn n(&self) -> usize {
        self.obs.n()
    }

    /// Records the observed adjacency as a function of the sign vector `s`.
    pub fn adjacency_on_tape(&self, tape: &mut Tape, s: Var) -> Var {
        tape.scatter(s, &self.targets, &self.empty)
    }

    fn ensure_pol_reference(&mut self, t: f64) -> Result<()> {
        if self.m_abs_sym.is_none() {
            let p = WalkParams::new(t, WalkMode::Sym)?;
            self.m_abs_sym = Some(pole::transition_from(&self.visible_abs, &self.obs.degrees, &p)?);
        }
        Ok(())
    }

    /// Attack objective and its gradient with respect to the sign vector.
    pub fn objective(
        &mut self,
        target: AttackTarget,
        cfg: &AttackConfig,
        signs: &[f64],
    ) -> Result<(f64, DVector<f64>)> {
        if cfg.eta != 0.0 {
            self.ensure_pol_reference(cfg.t)?;
        }
        let mut tape = Tape::new();
        let s = tape.var(Matrix::from_column_slice(signs.len(), 1, signs));
        let mut a = None;
        let ll = match target {
            AttackTarget::FextraOls => attack_loss_fextra(&mut tape, self, s, FextraFit::Ols, cfg)?,
            AttackTarget::FextraMeta => attack_loss_fextra(&mut tape, self, s, FextraFit::Meta, cfg)?,
            AttackTarget::PoleSym | AttackTarget::PoleUnsym => {
                let adj = self.adjacency_on_tape(&mut tape, s);
                a = Some(adj);
                let mode = if target == AttackTarget::PoleSym { WalkMode::Sym } else { WalkMode::Unsym };
                attack_loss_pole(&mut tape, self, adj, mode, cfg)?
            }
        };
        let base = tape.neg(ll);
        let j = if cfg.lambda != 0.0 || cfg.eta != 0.0 {
            let a = match a {
                Some(a) => a,
                None => self.adjacency_on_tape(&mut tape, s),
            };
            penalized_loss(&mut tape, base, a, self, cfg.lambda, cfg.eta, cfg.t)?
        } else {
            base
        };
        let value = tape.scalar(j);
        if !value.is_finite() {
            return Err(Error::numeric("attack objective", "non-finite value"));
        }
        let grad = tape.backward(j).wrt(s);
        Ok((value, DVector::from_column_slice(grad.as_slice())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FextraFit {
    /// Closed-form least squares on logit labels.
    Ols,
    /// Unrolled gradient descent on the cross-entropy.
    Meta,
}

/// `Σ y log p + (1 − y) log(1 − p)` with both arguments clipped below.
pub fn log_likelihood(tape: &mut Tape, p: Var, y: &[f64]) -> Var {
    let k = y.len();
    let lp = tape.clamp(p, LOG_CLIP, 1.0);
    let lp = tape.ln(lp);
    let q = tape.one_minus(p);
    let lq = tape.clamp(q, LOG_CLIP, 1.0);
    let lq = tape.ln(lq);
    let yv = tape.constant(Matrix::from_column_slice(k, 1, y));
    let nv = tape.constant(Matrix::from_iterator(k, 1, y.iter().map(|v| 1.0 - v)));
    let a = tape.mul(yv, lp);
    let b = tape.mul(nv, lq);
    let both = tape.add(a, b);
    tape.sum(both)
}

/// `θ` from the least-squares surrogate, recorded on the tape.
pub fn ols_on_tape(tape: &mut Tape, z: Var, target: Var) -> Result<Var> {
    let zt = tape.transpose(z);
    let mut gram = tape.matmul(zt, z);
    if needs_ridge(tape.value(gram)) {
        let c = tape.shape(gram).0;
        let ridge = tape.constant(Matrix::identity(c, c) * RIDGE);
        gram = tape.add(gram, ridge);
    }
    let rhs = tape.matmul(zt, target);
    tape.solve(gram, rhs).ok_or_else(|| Error::numeric("ols_fit", "Gram matrix singular after ridge"))
}

/// Log-likelihood of the self-trained test labels under a FeXtra model fitted
/// to the training links carrying the signs `s`.
pub fn attack_loss_fextra(
    tape: &mut Tape,
    ctx: &AttackContext,
    s: Var,
    fit: FextraFit,
    cfg: &AttackConfig,
) -> Result<Var> {
    let sizes = [ctx.train.len(), ctx.test.len()];
    let feats = fextra::features_from_signs(tape, s, &ctx.counts, &ctx.abs_sq, &sizes);
    let z_tr = fextra::design_on_tape(tape, feats[0], Transform::Log1p);
    let z_te = fextra::design_on_tape(tape, feats[1], Transform::Log1p);
    let signs = s;
    let theta = match fit {
        FextraFit::Ols => {
            let target = tape.scale(signs, fextra::clipped_logit(1.0));
            ols_on_tape(tape, z_tr, target)?
        }
        FextraFit::Meta => {
            let shifted = tape.add_scalar(signs, 1.0);
            let y = tape.scale(shifted, 0.5);
            let cols = tape.shape(z_tr).1;
            let init = ThetaInit::Uniform { seed: cfg.seed }.draw(cols);
            let mut theta = tape.constant(Matrix::from_column_slice(cols, 1, init.as_slice()));
            let zt = tape.transpose(z_tr);
            let step = cfg.inner_lr / ctx.train.len().max(1) as f64;
            for _ in 0..cfg.inner_l {
                let logits = tape.matmul(z_tr, theta);
                let p = tape.sigmoid(logits);
                let r = tape.sub(p, y);
                let grad = tape.matmul(zt, r);
                let delta = tape.scale(grad, step);
                theta = tape.sub(theta, delta);
            }
            theta
        }
    };
    let logits = tape.matmul(z_te, theta);
    let p = tape.sigmoid(logits);
    Ok(log_likelihood(tape, p, &ctx.labels))
}

/// Log-likelihood of the self-trained test labels under the cosine
/// autocovariance probabilities of the poisoned graph.
pub fn attack_loss_pole(
    tape: &mut Tape,
    ctx: &AttackContext,
    a: Var,
    mode: WalkMode,
    cfg: &AttackConfig,
) -> Result<Var> {
    let walk = WalkParams::new(cfg.t, mode)?;
    let m = pole::transition_on_tape(tape, a, &ctx.obs.degrees, &walk)?;
    let r = pole::autocovariance_on_tape(tape, m, &ctx.obs.degrees);
    let fcfg = FactorConfig { dim: cfg.dim, iterations: cfg.inner_l, lr: cfg.inner_lr, seed: cfg.seed };
    let (u, _) = pole::factorize_on_tape(tape, r, &fcfg)?;
    let p = pole::link_probabilities_on_tape(tape, r, u, &ctx.test);
    Ok(log_likelihood(tape, p, &ctx.labels))
}

/// `base + λ·T(a) + η·Pol(a, t)`. A zero weight skips its term entirely; an
/// undefined metric contributes nothing.
pub fn penalized_loss(
    tape: &mut Tape,
    base: Var,
    a: Var,
    ctx: &AttackContext,
    lambda: f64,
    eta: f64,
    t: f64,
) -> Result<Var> {
    let mut out = base;
    if lambda != 0.0 {
        match balance::balance_ratio_on_tape(tape, a, &ctx.visible_abs) {
            Ok(tr) => {
                let term = tape.scale(tr, lambda);
                out = tape.add(out, term);
            }
            Err(Error::UndefinedMetric(msg)) => log::warn!("balance penalty skipped: {msg}"),
            Err(e) => return Err(e),
        }
    }
    if eta != 0.0 {
        let m_abs = ctx
            .m_abs_sym
            .as_ref()
            .ok_or_else(|| Error::invalid("polarization reference not prepared"))?;
        let p = WalkParams::new(t, WalkMode::Sym)?;
        match balance::graph_polarization_on_tape(tape, a, m_abs, &ctx.obs.degrees, &p) {
            Ok(pol) => {
                let term = tape.scale(pol, eta);
                out = tape.add(out, term);
            }
            Err(Error::UndefinedMetric(msg)) => log::warn!("polarization penalty skipped: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Plain (non-tape) objective for one sign vector, used by oracles.
pub fn objective_value(ctx: &mut AttackContext, target: AttackTarget, cfg: &AttackConfig, signs: &[f64]) -> Result<f64> {
    ctx.objective(target, cfg, signs).map(|(v, _)| v)
}

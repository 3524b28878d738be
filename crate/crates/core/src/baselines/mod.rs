//! Comparison recommenders: per-domain biased MF, per-domain NCF and
//! collective MF with a shared user table.

mod cmf;

pub use cmf::{cmf_train, CmfLayout, CmfModel, DomainFactorIds, FactorConfig, CMF_KIND};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::interactions::Rating;
use crate::neucmf::{self, FusionVariant, NeuCmfConfig, NeuCmfModel, TrainData};
use crate::training::TrainLog;

/// Ratings of a single domain.
#[derive(Debug, Clone, Copy)]
pub struct DomainData<'a> {
    pub domain: Domain,
    pub n_users: usize,
    pub n_items: usize,
    pub train: &'a [Rating],
    pub validation: &'a [Rating],
}

impl<'a> DomainData<'a> {
    /// Two-domain view with the other domain empty.
    fn as_pair(&self) -> TrainData<'a> {
        let mut n_items = [0, 0];
        let mut train: [&[Rating]; 2] = [&[], &[]];
        let mut validation: [&[Rating]; 2] = [&[], &[]];
        n_items[self.domain.index()] = self.n_items;
        train[self.domain.index()] = self.train;
        validation[self.domain.index()] = self.validation;
        TrainData {
            n_users: self.n_users,
            n_items,
            train,
            validation,
        }
    }
}

/// Biased matrix factorization trained on one domain; the collective model
/// with the other domain empty.
#[derive(Debug, Clone)]
pub struct MfModel {
    pub domain: Domain,
    pub inner: CmfModel,
}

impl MfModel {
    /// `σ(b + b_u + b_i + u·v_i)`.
    pub fn predict(&self, user: usize, item: usize) -> Result<f64> {
        self.inner.predict(user, self.domain, item)
    }
}

pub fn mf_train(data: &DomainData<'_>, cfg: &FactorConfig) -> Result<(MfModel, TrainLog)> {
    let (inner, log) = cmf_train(&data.as_pair(), cfg)?;
    Ok((MfModel { domain: data.domain, inner }, log))
}

pub fn mf_predict(m: &MfModel, user: usize, item: usize) -> Result<f64> {
    m.predict(user, item)
}

pub fn cmf_predict(m: &CmfModel, user: usize, domain: Domain, item: usize) -> Result<f64> {
    m.predict(user, domain, item)
}

/// Single-domain neural CF: the stage-2 architecture trained on one domain
/// with the discriminator disabled.
#[derive(Debug, Clone)]
pub struct NcfModel {
    pub domain: Domain,
    pub inner: NeuCmfModel,
}

impl NcfModel {
    pub fn predict(&self, user: usize, item: usize) -> Result<f64> {
        self.inner.predict(user, self.domain, item)
    }
}

/// The config must describe the plain variant; `mi_weight` is forced to 0.
pub fn ncf_train(data: &DomainData<'_>, cfg: &NeuCmfConfig) -> Result<(NcfModel, TrainLog)> {
    if cfg.variant != FusionVariant::MutualInfo {
        return Err(Error::Config(format!("ncf has no KG fusion, got variant {}", cfg.variant)));
    }
    let cfg = NeuCmfConfig {
        mi_weight: 0.0,
        ..cfg.clone()
    };
    let (inner, log) = neucmf::train(&data.as_pair(), None, &cfg)?;
    Ok((NcfModel { domain: data.domain, inner }, log))
}

pub fn ncf_predict(m: &NcfModel, user: usize, item: usize) -> Result<f64> {
    m.predict(user, item)
}

#[cfg(test)]
mod tests;

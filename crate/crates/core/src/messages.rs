//! Message storage and the log-max metric.
//!
//! A [`MessageVector`] holds one length-`m` vector per directed edge, laid out
//! contiguously in directed-edge id order (see [`crate::model::Graph`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::GraphicalModel;

/// Representation of message entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Strictly positive values.
    Probability,
    /// Finite values `-log(mu)`.
    NegLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageVector {
    domain: Domain,
    labels: usize,
    values: Vec<f64>,
}

impl MessageVector {
    pub fn filled(directed_edges: usize, labels: usize, domain: Domain, value: f64) -> Self {
        Self {
            domain,
            labels,
            values: vec![value; directed_edges * labels],
        }
    }

    /// Wraps raw entries; `values.len()` must be a multiple of `labels`.
    pub fn from_values(domain: Domain, labels: usize, values: Vec<f64>) -> Result<Self> {
        if labels == 0 || !values.len().is_multiple_of(labels) {
            return Err(Error::ShapeMismatch(format!(
                "{} entries do not split into messages of length {labels}",
                values.len()
            )));
        }
        Ok(Self {
            domain,
            labels,
            values,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn edge_count(&self) -> usize {
        self.values.len() / self.labels
    }

    /// Message on directed edge id `e`.
    #[inline]
    pub fn message(&self, e: usize) -> &[f64] {
        &self.values[e * self.labels..(e + 1) * self.labels]
    }

    #[inline]
    pub fn message_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.values[e * self.labels..(e + 1) * self.labels]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain == expected {
            Ok(())
        } else {
            Err(Error::DomainMismatch {
                expected,
                found: self.domain,
            })
        }
    }

    /// Checks that the vector has the shape of `model`'s messages.
    pub fn expect_shape(&self, model: &GraphicalModel) -> Result<()> {
        let edges = model.graph().directed_edge_count();
        if self.labels != model.label_count() || self.edge_count() != edges {
            return Err(Error::ShapeMismatch(format!(
                "messages are {} x {}, model needs {} x {}",
                self.edge_count(),
                self.labels,
                edges,
                model.label_count()
            )));
        }
        Ok(())
    }

    /// Scales each directed-edge message to sum to one.
    pub fn normalize(&self) -> Result<Self> {
        self.expect_domain(Domain::Probability)?;
        let mut out = self.clone();
        for msg in out.values.chunks_exact_mut(self.labels) {
            let total: f64 = msg.iter().sum();
            msg.iter_mut().for_each(|v| *v /= total);
        }
        Ok(out)
    }

    /// Entrywise `-log` or `exp(-.)` into the requested domain.
    pub fn convert(&self, to: Domain) -> Self {
        if to == self.domain {
            return self.clone();
        }
        let values = match to {
            Domain::NegLog => self.values.iter().map(|v| -v.ln()).collect(),
            Domain::Probability => self.values.iter().map(|v| (-v).exp()).collect(),
        };
        Self {
            domain: to,
            labels: self.labels,
            values,
        }
    }

    /// `max |log mu - log nu|` over every directed edge and label.
    ///
    /// In the negative-log domain the stored values are already logs, so this
    /// is the max absolute difference, and the two domains agree under
    /// [`MessageVector::convert`].
    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain,
                found: other.domain,
            });
        }
        if self.labels != other.labels || self.values.len() != other.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot compare {} x {} with {} x {} messages",
                self.edge_count(),
                self.labels,
                other.edge_count(),
                other.labels
            )));
        }
        let d = match self.domain {
            Domain::Probability => self
                .values
                .iter()
                .zip(&other.values)
                .fold(0.0_f64, |acc, (a, b)| acc.max((a.ln() - b.ln()).abs())),
            Domain::NegLog => {
                // four running maxima keep the comparison chain short
                let mut lanes = [0.0_f64; 4];
                let a = self.values.chunks_exact(4);
                let b = other.values.chunks_exact(4);
                let tail = a.remainder().iter().zip(b.remainder());
                for (x, y) in a.zip(b) {
                    for l in 0..4 {
                        let v = (x[l] - y[l]).abs();
                        lanes[l] = if v > lanes[l] { v } else { lanes[l] };
                    }
                }
                let head = lanes[0].max(lanes[1]).max(lanes[2].max(lanes[3]));
                tail.fold(head, |acc, (x, y)| acc.max((x - y).abs()))
            }
        };
        Ok(d)
    }
}

/// All ones (probability) or all zeros (negative log): the same point.
pub fn init_messages(model: &GraphicalModel, domain: Domain) -> MessageVector {
    let value = match domain {
        Domain::Probability => 1.0,
        Domain::NegLog => 0.0,
    };
    MessageVector::filled(
        model.graph().directed_edge_count(),
        model.label_count(),
        domain,
        value,
    )
}

/// I.i.d. entries drawn uniformly from the probability-domain interval
/// `[low, high]`; in the negative-log domain the entries are `-log` of those draws.
pub fn random_messages(
    model: &GraphicalModel,
    domain: Domain,
    seed: u64,
    (low, high): (f64, f64),
) -> Result<MessageVector> {
    if !(low > 0.0 && low <= high && high.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "message range [{low}, {high}] must be positive and ordered"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = model.graph().directed_edge_count() * model.label_count();
    let values = (0..count)
        .map(|_| {
            let v = if low == high {
                low
            } else {
                rng.random_range(low..=high)
            };
            match domain {
                Domain::Probability => v,
                Domain::NegLog => -v.ln(),
            }
        })
        .collect();
    MessageVector::from_values(domain, model.label_count(), values)
}

pub fn normalize(mu: &MessageVector) -> Result<MessageVector> {
    mu.normalize()
}

pub fn convert_domain(mu: &MessageVector, to: Domain) -> MessageVector {
    mu.convert(to)
}

pub fn metric_d(mu: &MessageVector, nu: &MessageVector) -> Result<f64> {
    mu.distance(nu)
}

/// Outcome of a fixed-point run.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    /// Number of operator applications performed.
    pub iterations: usize,
    pub converged: bool,
    /// `d(mu^(t), mu^(t-1))` for `t = 1..=iterations`.
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
}

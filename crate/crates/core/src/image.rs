//! Grayscale and RGB image restoration with min-sum CCBP on a 4-connected grid.
//!
//! The energy is `sum_i (x_i - y_i)^2 + lambda * sum_ij min((x_i - x_j)^2, tau)`
//! over 256 labels. Color images are restored one channel at a time.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::messages::{init_messages, Domain, FixedPointReport};
use crate::model::{grid_graph, GraphicalModel, PairwiseTable, WeightTable};
use crate::operators::{
    beliefs_minsum, ccbp_step_minsum, decode, run_fixed_point, Algorithm, OperatorConfig, Semiring,
};
use crate::oracle::energy;

/// Number of intensity labels.
pub const LEVELS: usize = 256;

/// 8-bit image stored as one row-major plane per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    planes: Vec<Vec<u8>>,
}

impl Image {
    pub fn from_planes(width: usize, height: usize, planes: Vec<Vec<u8>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image("dimensions must be positive".into()));
        }
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::Image(format!(
                "{} channels; expected 1 or 3",
                planes.len()
            )));
        }
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::Image(
                "channel planes must hold width * height pixels".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::from_planes(width, height, vec![pixels])
    }

    /// RGB image from interleaved `r, g, b` samples.
    pub fn rgb(width: usize, height: usize, interleaved: &[u8]) -> Result<Self> {
        if interleaved.len() != 3 * width * height {
            return Err(Error::Image(
                "interleaved payload has the wrong length".into(),
            ));
        }
        let planes = (0..3)
            .map(|c| interleaved.iter().skip(c).step_by(3).copied().collect())
            .collect();
        Self::from_planes(width, height, planes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel_count(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, c: usize) -> &[u8] {
        &self.planes[c]
    }

    pub fn pixel(&self, c: usize, col: usize, row: usize) -> u8 {
        self.planes[c][row * self.width + col]
    }

    /// Parses binary PGM (`P5`) or PPM (`P6`) with maxval 255. Comments in
    /// the header are skipped.
    pub fn decode_pnm(bytes: &[u8]) -> Result<Self> {
        let mut header = HeaderReader { bytes, pos: 0 };
        let channels = match header.token()? {
            b"P5" => 1,
            b"P6" => 3,
            other => {
                return Err(Error::Image(format!(
                    "unsupported magic {:?}",
                    String::from_utf8_lossy(other)
                )))
            }
        };
        let width = header.number("width")?;
        let height = header.number("height")?;
        let maxval = header.number("maxval")?;
        if maxval != 255 {
            return Err(Error::Image(format!("maxval {maxval} is not 255")));
        }
        match bytes.get(header.pos) {
            Some(b) if b.is_ascii_whitespace() => header.pos += 1,
            _ => return Err(Error::Image("missing whitespace after maxval".into())),
        }
        let len = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::Image("image dimensions overflow".into()))?;
        let payload = bytes
            .get(header.pos..header.pos + len)
            .ok_or_else(|| Error::Image(format!("truncated payload: expected {len} bytes")))?;
        if channels == 1 {
            Self::gray(width, height, payload.to_vec())
        } else {
            Self::rgb(width, height, payload)
        }
    }

    /// Binary PGM or PPM with maxval 255 and no comments.
    pub fn encode_pnm(&self) -> Vec<u8> {
        let magic = if self.planes.len() == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        let n = self.width * self.height;
        out.reserve(n * self.planes.len());
        for p in 0..n {
            out.extend(self.planes.iter().map(|plane| plane[p]));
        }
        out
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn token(&mut self) -> Result<&'a [u8]> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Image("truncated header".into())),
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::Image(format!(
                    "malformed {what} {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    Image::decode_pnm(&fs::read(path)?)
}

pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, image.encode_pnm())?;
    Ok(())
}

/// Adds `Normal(0, sigma^2)` noise to every sample independently, rounds half
/// away from zero and clamps to `0..=255`. Samples are drawn channel by
/// channel in row-major order.
pub fn corrupt(image: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Image(format!(
            "noise sigma {sigma} must be finite and >= 0"
        )));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = image
        .planes
        .iter()
        .map(|plane| {
            plane
                .iter()
                .map(|&p| add_noise(p, noise.sample(&mut rng)))
                .collect()
        })
        .collect();
    Image::from_planes(image.width, image.height, planes)
}

fn add_noise(pixel: u8, noise: f64) -> u8 {
    (f64::from(pixel) + noise).round().clamp(0.0, 255.0) as u8
}

/// Restoration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestoreParams {
    /// Smoothness weight.
    pub lambda: f64,
    /// Truncation of the squared difference.
    pub tau: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for RestoreParams {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            tau: 100.0,
            gamma: 0.99,
            epsilon: 1e-2,
            max_iter: 1000,
        }
    }
}

impl RestoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda {} must be positive",
                self.lambda
            )));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau {} must be >= 0",
                self.tau
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} outside [0, 1)",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "epsilon and max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Grid model for one channel: `g_i(x) = (x - y_i)^2` and
/// `h_ij(a, b) = lambda * min((a - b)^2, tau)`.
pub fn build_image_model(
    noisy: &[u8],
    width: usize,
    height: usize,
    lambda: f64,
    tau: f64,
) -> Result<GraphicalModel> {
    if noisy.len() != width * height {
        return Err(Error::Dimension(format!(
            "{} pixels for a {width} x {height} grid",
            noisy.len()
        )));
    }
    let graph = grid_graph(width, height)?;
    let mut node_costs = Vec::with_capacity(noisy.len() * LEVELS);
    for &y in noisy {
        node_costs.extend((0..LEVELS).map(|x| {
            let d = x as f64 - f64::from(y);
            d * d
        }));
    }
    let table = PairwiseTable::truncated_quadratic(LEVELS, lambda, tau);
    GraphicalModel::with_shared_table(graph, LEVELS, node_costs, table)
}

/// Per-channel outcome of [`restore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRestoration {
    pub report: FixedPointReport,
    /// Energy of the observed channel under its own model.
    pub noisy_energy: f64,
    /// Energy of the decoded labelling.
    pub restored_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restoration {
    pub image: Image,
    pub channels: Vec<ChannelRestoration>,
}

/// Restores each channel independently with min-sum CCBP from zero messages
/// and uniform weights.
pub fn restore(image: &Image, params: &RestoreParams) -> Result<Restoration> {
    params.validate()?;
    let mut planes = Vec::with_capacity(image.channel_count());
    let mut channels = Vec::with_capacity(image.channel_count());
    for plane in &image.planes {
        let model = build_image_model(plane, image.width, image.height, params.lambda, params.tau)?;
        let cfg = OperatorConfig::new(
            model.graph(),
            WeightTable::uniform(model.graph()),
            params.gamma,
            0.0,
            Semiring::MinSum,
            Algorithm::Ccbp,
        )?;
        let (messages, report) = run_fixed_point(
            |mu| ccbp_step_minsum(&model, &cfg, mu),
            init_messages(&model, Domain::NegLog),
            params.epsilon,
            params.max_iter,
        )?;
        let labels = decode(&beliefs_minsum(&model, &messages)?);
        let observed: Vec<usize> = plane.iter().map(|&p| usize::from(p)).collect();
        channels.push(ChannelRestoration {
            report,
            noisy_energy: energy(&model, &observed)?,
            restored_energy: energy(&model, &labels)?,
        });
        planes.push(labels.into_iter().map(|x| x as u8).collect());
    }
    Ok(Restoration {
        image: Image::from_planes(image.width, image.height, planes)?,
        channels,
    })
}

/// Mean squared pixel difference over all channels.
pub fn pixel_mse(a: &Image, b: &Image) -> Result<f64> {
    if (a.width, a.height, a.planes.len()) != (b.width, b.height, b.planes.len()) {
        return Err(Error::Dimension("images differ in shape".into()));
    }
    let (sum, count) = a
        .planes
        .iter()
        .zip(&b.planes)
        .flat_map(|(p, q)| p.iter().zip(q))
        .fold((0.0, 0usize), |(s, c), (&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            (s + d * d, c + 1)
        });
    Ok(sum / count as f64)
}

/// `out(b) = min_a node_cost(a) + incoming(a) + lambda * min((a - b)^2, tau)`
/// in `O(m)` time.
pub fn minsum_message_fast(node_cost: &[f64], incoming: &[f64], lambda: f64, tau: f64) -> Vec<f64> {
    let base: Vec<f64> = node_cost.iter().zip(incoming).map(|(g, s)| g + s).collect();
    let m = base.len();
    let mut out = vec![0.0; m];
    let mut vertices = vec![0; m];
    let mut bounds = vec![0.0; m + 1];
    truncated_quadratic_min_convolution(&base, lambda, tau, &mut out, &mut vertices, &mut bounds);
    out
}

/// Minimum over four independent lanes, so the comparisons pipeline.
fn lane_min(values: &[f64]) -> f64 {
    let mut lanes = [f64::INFINITY; 4];
    let chunks = values.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        for (l, &v) in lanes.iter_mut().zip(c) {
            *l = if v < *l { v } else { *l };
        }
    }
    let mut m = lanes[0].min(lanes[1]).min(lanes[2].min(lanes[3]));
    for &v in tail {
        m = m.min(v);
    }
    m
}

/// Min-convolution of `base` with `lambda * min(d^2, tau)`.
///
/// The untruncated part is the lower envelope of the parabolas
/// `base(a) + lambda (b - a)^2`; the truncation caps every entry at
/// `min(base) + lambda * tau`. `vertices` needs `m` slots and `bounds` `m + 1`.
pub(crate) fn truncated_quadratic_min_convolution(
    base: &[f64],
    lambda: f64,
    tau: f64,
    out: &mut [f64],
    vertices: &mut [usize],
    bounds: &mut [f64],
) {
    let m = base.len();
    let floor = lane_min(base);
    if m == 0 {
        return;
    }
    if lambda <= 0.0 || tau <= 0.0 {
        out.fill(floor);
        return;
    }
    let cap = floor + lambda * tau;

    // Lower envelope of the parabolas rooted below the cap; the others can
    // never undercut it.
    let first = base.iter().position(|&v| v < cap).unwrap_or(0);
    let mut k = 0;
    vertices[0] = first;
    bounds[0] = f64::NEG_INFINITY;
    bounds[1] = f64::INFINITY;
    for q in first + 1..m {
        if base[q] >= cap {
            continue;
        }
        let qf = q as f64;
        let lifted_q = base[q] + lambda * qf * qf;
        // bounds[0] is -inf, so the scan stops at k == 0 at the latest
        let s = loop {
            let v = vertices[k] as f64;
            let lifted_v = base[vertices[k]] + lambda * v * v;
            let s = (lifted_q - lifted_v) / (2.0 * lambda * (qf - v));
            if s <= bounds[k] {
                k -= 1;
            } else {
                break s;
            }
        };
        k += 1;
        vertices[k] = q;
        bounds[k] = s;
        bounds[k + 1] = f64::INFINITY;
    }

    let mut k = 0;
    for (b, slot) in out.iter_mut().enumerate() {
        let bf = b as f64;
        while bounds[k + 1] < bf {
            k += 1;
        }
        let v = vertices[k];
        let d = bf - v as f64;
        *slot = (base[v] + lambda * (d * d)).min(cap);
    }
}

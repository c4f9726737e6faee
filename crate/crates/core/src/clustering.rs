//! Word clusters from pre-trained embeddings.
//!
//! Embeddings are read from a word2vec-style text file and clustered with a
//! diagonal-covariance Gaussian mixture fitted by EM. Every word gets the
//! component with the highest posterior responsibility; words missing from
//! the embeddings share the extra id `k`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Lower bound on every variance component.
pub const VARIANCE_FLOOR: f64 = 1e-6;
const FORMAT_HEADER: &str = "srl-gmm v1";
/// Points per E-step work unit. Fixed so results do not depend on the thread
/// count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("line {line}: expected {expected} components, found {found}")]
    InconsistentDimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-numeric component {value:?}")]
    NonNumericComponent { line: usize, value: String },
    #[error("line {line}: non-finite component")]
    NonFiniteComponent { line: usize },
    #[error("{have} vectors cannot fill {k} components")]
    TooFewVectors { have: usize, k: usize },
    #[error("component {component} lost all support")]
    DegenerateComponent { component: usize },
    #[error("unsupported cluster model version: {0:?}")]
    VersionMismatch(String),
    #[error("corrupt cluster model: {0}")]
    CorruptModel(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Inserts or replaces a vector. Returns true when `word` was already
    /// present.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> bool {
        assert_eq!(vector.len(), self.dim);
        match self.index.get(word) {
            Some(&i) => {
                self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector);
                true
            }
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.data.extend_from_slice(vector);
                false
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vector(i))
    }

    /// Parses `word v1 .. vdim` lines, with an optional `<count> <dim>`
    /// header. Duplicate words keep the last vector.
    pub fn parse(text: &str) -> Result<Self, ClusterError> {
        let mut table: Option<EmbeddingTable> = None;
        let mut first = true;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if first {
                first = false;
                if let [a, b] = fields[..] {
                    if let (Ok(_), Ok(dim)) = (a.parse::<usize>(), b.parse::<usize>()) {
                        table = Some(EmbeddingTable::new(dim));
                        continue;
                    }
                }
            }
            let found = fields.len() - 1;
            let t = table.get_or_insert_with(|| EmbeddingTable::new(found));
            if found != t.dim || found == 0 {
                return Err(ClusterError::InconsistentDimension {
                    line: lineno,
                    expected: t.dim,
                    found,
                });
            }
            let vector = fields[1..]
                .iter()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| ClusterError::NonNumericComponent {
                        line: lineno,
                        value: v.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(ClusterError::NonFiniteComponent { line: lineno });
            }
            if t.insert(fields[0], &vector) {
                warn!("line {lineno}: duplicate embedding for {:?}, keeping the last", fields[0]);
            }
        }
        match table {
            Some(t) if !t.is_empty() => Ok(t),
            _ => Err(ClusterError::EmptyFile),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ClusterError> {
        let text = fs::read_to_string(path).map_err(|e| ClusterError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            k: 128,
            seed: 0,
            max_iter: 200,
            tol: 1e-5,
        }
    }
}

/// A fitted mixture with the hard assignment of every embedded word.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    k: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    words: Vec<(String, usize)>,
    index: HashMap<String, usize>,
}

/// Result of a fit: the model plus the mean log-likelihood per point
/// recorded at every E-step.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: ClusterModel,
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone)]
struct Params {
    k: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl Params {
    /// Per-component `log w_k - 0.5 * sum log(2 pi var)` and `1/var`.
    fn precompute(&self) -> (Vec<f64>, Vec<f64>) {
        let consts = (0..self.k)
            .map(|c| {
                let v = &self.variances[c * self.dim..(c + 1) * self.dim];
                self.weights[c].ln() - 0.5 * v.iter().map(|x| (2.0 * PI * x).ln()).sum::<f64>()
            })
            .collect();
        let inv = self.variances.iter().map(|v| 1.0 / v).collect();
        (consts, inv)
    }

    fn log_joint(&self, x: &[f64], consts: &[f64], inv: &[f64], out: &mut [f64]) {
        for c in 0..self.k {
            let m = &self.means[c * self.dim..(c + 1) * self.dim];
            let iv = &inv[c * self.dim..(c + 1) * self.dim];
            let q: f64 = x
                .iter()
                .zip(m)
                .zip(iv)
                .map(|((xi, mi), ivi)| (xi - mi) * (xi - mi) * ivi)
                .sum();
            out[c] = consts[c] - 0.5 * q;
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Sufficient statistics of one E-step.
struct Stats {
    log_likelihood: f64,
    mass: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Stats {
    fn zeros(k: usize, dim: usize) -> Self {
        Stats {
            log_likelihood: 0.0,
            mass: vec![0.0; k],
            sum: vec![0.0; k * dim],
            sum_sq: vec![0.0; k * dim],
        }
    }

    fn add(&mut self, other: &Stats) {
        self.log_likelihood += other.log_likelihood;
        let pairs = [
            (&mut self.mass, &other.mass),
            (&mut self.sum, &other.sum),
            (&mut self.sum_sq, &other.sum_sq),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
        }
    }
}

fn e_step(data: &[f64], p: &Params) -> Stats {
    let (consts, inv) = p.precompute();
    let (k, dim) = (p.k, p.dim);
    let partials: Vec<Stats> = data
        .par_chunks(CHUNK * dim)
        .map(|chunk| {
            let mut s = Stats::zeros(k, dim);
            let mut lj = vec![0.0; k];
            for x in chunk.chunks_exact(dim) {
                p.log_joint(x, &consts, &inv, &mut lj);
                let lse = log_sum_exp(&lj);
                s.log_likelihood += lse;
                for c in 0..k {
                    let r = (lj[c] - lse).exp();
                    if r == 0.0 {
                        continue;
                    }
                    s.mass[c] += r;
                    let sum = &mut s.sum[c * dim..(c + 1) * dim];
                    let sq = &mut s.sum_sq[c * dim..(c + 1) * dim];
                    for d in 0..dim {
                        sum[d] += r * x[d];
                        sq[d] += r * x[d] * x[d];
                    }
                }
            }
            s
        })
        .collect();
    let mut total = Stats::zeros(k, dim);
    for s in &partials {
        total.add(s);
    }
    total
}

fn m_step(stats: &Stats, n: usize, k: usize, dim: usize) -> Result<Params, ClusterError> {
    let mut weights = vec![0.0; k];
    let mut means = vec![0.0; k * dim];
    let mut variances = vec![0.0; k * dim];
    for c in 0..k {
        let nk = stats.mass[c];
        if nk.partial_cmp(&f64::MIN_POSITIVE) != Some(std::cmp::Ordering::Greater) {
            return Err(ClusterError::DegenerateComponent { component: c });
        }
        weights[c] = nk / n as f64;
        for d in 0..dim {
            let m = stats.sum[c * dim + d] / nk;
            let v = stats.sum_sq[c * dim + d] / nk - m * m;
            means[c * dim + d] = m;
            variances[c * dim + d] = v.max(VARIANCE_FLOOR);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Params {
        k,
        dim,
        weights,
        means,
        variances,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding; returns indices of the chosen points.
fn kmeans_pp(data: &[f64], n: usize, dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, ClusterError> {
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centers = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(point(i), point(centers[0])))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(ClusterError::DegenerateComponent {
                component: centers.len(),
            });
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, d) in d2.iter().enumerate() {
            acc += d;
            if *d > 0.0 && acc >= target {
                chosen = Some(i);
                break;
            }
        }
        // rounding can leave acc just below target
        let chosen = chosen.unwrap_or_else(|| d2.iter().rposition(|d| *d > 0.0).expect("total > 0"));
        centers.push(chosen);
        let c = point(chosen);
        d2.par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(sq_dist(point(i), c)));
    }
    Ok(centers)
}

/// Fits a `k`-component diagonal Gaussian mixture to every vector in
/// `table`. Deterministic for a given table and config.
pub fn fit_gmm(table: &EmbeddingTable, config: &GmmConfig) -> Result<GmmFit, ClusterError> {
    let (n, dim, k) = (table.len(), table.dim(), config.k);
    if k == 0 || n < k {
        return Err(ClusterError::TooFewVectors { have: n, k });
    }
    // centre the data to keep E[x^2] - E[x]^2 well conditioned
    let mut centre = vec![0.0; dim];
    for i in 0..n {
        centre.iter_mut().zip(table.vector(i)).for_each(|(c, x)| *c += x);
    }
    centre.iter_mut().for_each(|c| *c /= n as f64);
    let data: Vec<f64> = (0..n)
        .flat_map(|i| table.vector(i).iter().zip(&centre).map(|(x, c)| x - c))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds = kmeans_pp(&data, n, dim, k, &mut rng)?;

    // initial parameters from a hard nearest-seed partition
    let mut init = Stats::zeros(k, dim);
    for x in data.chunks_exact(dim) {
        let c = (0..k)
            .min_by(|&a, &b| {
                let da = sq_dist(x, &data[seeds[a] * dim..(seeds[a] + 1) * dim]);
                let db = sq_dist(x, &data[seeds[b] * dim..(seeds[b] + 1) * dim]);
                da.total_cmp(&db)
            })
            .expect("k >= 1");
        init.mass[c] += 1.0;
        for d in 0..dim {
            init.sum[c * dim + d] += x[d];
            init.sum_sq[c * dim + d] += x[d] * x[d];
        }
    }
    let mut params = m_step(&init, n, k, dim)?;

    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iter {
        let stats = e_step(&data, &params);
        let ll = stats.log_likelihood / n as f64;
        let prev = trace.last().copied();
        trace.push(ll);
        if let Some(prev) = prev {
            if ll - prev < config.tol {
                converged = true;
                break;
            }
        }
        params = m_step(&stats, n, k, dim)?;
    }
    if !converged {
        // score the last M-step so the trace covers the returned parameters
        let ll = e_step(&data, &params).log_likelihood / n as f64;
        trace.push(ll);
    }

    let (consts, inv) = params.precompute();
    let assignments: Vec<usize> = data
        .par_chunks(dim)
        .map(|x| {
            let mut lj = vec![0.0; k];
            params.log_joint(x, &consts, &inv, &mut lj);
            argmax(&lj)
        })
        .collect();

    // undo the centring
    let mut means = params.means;
    for c in 0..k {
        for d in 0..dim {
            means[c * dim + d] += centre[d];
        }
    }
    let words: Vec<(String, usize)> = table
        .words()
        .iter()
        .cloned()
        .zip(assignments)
        .collect();
    let model = ClusterModel::from_parts(k, dim, params.weights, means, params.variances, words)?;
    Ok(GmmFit {
        model,
        log_likelihood: trace,
        converged,
    })
}

impl ClusterModel {
    pub fn from_parts(
        k: usize,
        dim: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
        words: Vec<(String, usize)>,
    ) -> Result<Self, ClusterError> {
        let corrupt = |m: &str| Err(ClusterError::CorruptModel(m.to_string()));
        if weights.len() != k || means.len() != k * dim || variances.len() != k * dim {
            return corrupt("parameter sizes do not match k and dim");
        }
        if variances.iter().any(|v| !(*v >= VARIANCE_FLOOR)) {
            return corrupt("variance below floor");
        }
        if words.iter().any(|(_, id)| *id >= k) {
            return corrupt("assignment out of range");
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i))
            .collect();
        Ok(ClusterModel {
            k,
            dim,
            weights,
            means,
            variances,
            words,
            index,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Id shared by every word without an embedding.
    pub fn unknown_id(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    pub fn variance(&self, c: usize) -> &[f64] {
        &self.variances[c * self.dim..(c + 1) * self.dim]
    }

    pub fn words(&self) -> &[(String, usize)] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).map(|&i| self.words[i].1)
    }

    /// Stored assignment of `word`, or [`Self::unknown_id`].
    pub fn assign(&self, word: &str) -> usize {
        self.get(word).unwrap_or(self.k)
    }

    /// Component with the highest posterior for an arbitrary vector.
    pub fn classify(&self, x: &[f64]) -> usize {
        let p = Params {
            k: self.k,
            dim: self.dim,
            weights: self.weights.clone(),
            means: self.means.clone(),
            variances: self.variances.clone(),
        };
        let (consts, inv) = p.precompute();
        let mut lj = vec![0.0; self.k];
        p.log_joint(x, &consts, &inv, &mut lj);
        argmax(&lj)
    }

    /// Text serialization; floats use round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        writeln!(s, "k {} dim {} unknown {}", self.k, self.dim, self.unknown_id()).unwrap();
        writeln!(s, "weights {}", join(&self.weights)).unwrap();
        for c in 0..self.k {
            writeln!(s, "mean {c} {}", join(self.mean(c))).unwrap();
            writeln!(s, "var {c} {}", join(self.variance(c))).unwrap();
        }
        writeln!(s, "words {}", self.words.len()).unwrap();
        for (w, id) in &self.words {
            writeln!(s, "{w} {id}").unwrap();
        }
        writeln!(s, "end").unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ClusterError> {
        let corrupt = |m: String| ClusterError::CorruptModel(m);
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != FORMAT_HEADER {
            return Err(ClusterError::VersionMismatch(header.to_string()));
        }
        let mut next = |what: &str| lines.next().ok_or_else(|| corrupt(format!("missing {what}")));
        let dims: Vec<&str> = next("dimensions")?.split(' ').collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| corrupt(format!("bad number {s:?}")));
        let (k, dim, unknown) = match dims[..] {
            ["k", k, "dim", d, "unknown", u] => (num(k)?, num(d)?, num(u)?),
            _ => return Err(corrupt("bad dimension line".into())),
        };
        if unknown != k {
            return Err(corrupt("unknown id must equal k".into()));
        }
        let floats = |s: &str, n: usize| -> Result<Vec<f64>, ClusterError> {
            let v = s
                .split(' ')
                .map(|x| x.parse::<f64>().map_err(|_| corrupt(format!("bad float {x:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if v.len() != n {
                return Err(corrupt(format!("expected {n} values, found {}", v.len())));
            }
            Ok(v)
        };
        let w = next("weights")?;
        let weights = floats(w.strip_prefix("weights ").ok_or_else(|| corrupt("bad weights".into()))?, k)?;
        let mut means = Vec::with_capacity(k * dim);
        let mut variances = Vec::with_capacity(k * dim);
        for c in 0..k {
            for (tag, dest) in [("mean", &mut means), ("var", &mut variances)] {
                let line = next(tag)?;
                let prefix = format!("{tag} {c} ");
                let body = line
                    .strip_prefix(&prefix)
                    .ok_or_else(|| corrupt(format!("expected {prefix:?}")))?;
                dest.extend(floats(body, dim)?);
            }
        }
        let count_line = next("word count")?;
        let count = num(count_line.strip_prefix("words ").ok_or_else(|| corrupt("bad word count".into()))?)?;
        let mut words = Vec::with_capacity(count);
        for _ in 0..count {
            let line = next("word")?;
            let (w, id) = line.rsplit_once(' ').ok_or_else(|| corrupt(format!("bad word line {line:?}")))?;
            words.push((w.to_string(), num(id)?));
        }
        if next("end")? != "end" {
            return Err(corrupt("missing end marker".into()));
        }
        ClusterModel::from_parts(k, dim, weights, means, variances, words)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClusterError> {
        fs::write(path, self.to_text()).map_err(|e| ClusterError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ClusterError> {
        let text = fs::read_to_string(path).map_err(|e| ClusterError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

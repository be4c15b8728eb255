//! Projective-measurement bitstrings and the joint / shuffled-marginal pairs
//! fed to the neural estimator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits;
use crate::error::{Error, Result};
use crate::exact::Partition;
use crate::wavefunction::WaveFunction;

const HEADER_TAG: &str = "# qmine-bitstrings v1";

/// Standard dataset sizes, plus the larger ones used for convergence fits.
pub const DEFAULT_SIZES: [usize; 3] = [5000, 10000, 15000];
pub const FIT_SIZES: [usize; 5] = [5000, 10000, 15000, 30000, 45000];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetMeta {
    pub field_x: f64,
    pub field_z: f64,
    pub seed: u64,
}

/// Measured configurations of an `n_sites` chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BitstringDataset {
    samples: Vec<u32>,
    n_sites: usize,
    meta: DatasetMeta,
}

impl BitstringDataset {
    pub fn new(n_sites: usize, samples: Vec<u32>, meta: DatasetMeta) -> Result<Self> {
        if n_sites == 0 || n_sites > 24 {
            return Err(Error::InvalidParams(format!("n_sites must be in [1, 24], got {n_sites}")));
        }
        let limit = 1u64 << n_sites;
        if let Some(&s) = samples.iter().find(|&&s| s as u64 >= limit) {
            return Err(Error::IndexOutOfRange { index: s as usize, width: limit as usize });
        }
        Ok(Self { samples, n_sites, meta })
    }

    pub fn samples(&self) -> &[u32] {
        &self.samples
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `n` i.i.d. Born-rule draws by inverse-CDF lookup.
pub fn sample_bitstrings(psi: &WaveFunction, n: usize, seed: u64) -> Result<BitstringDataset> {
    sample_bitstrings_with_meta(psi, n, DatasetMeta { field_x: f64::NAN, field_z: f64::NAN, seed })
}

pub fn sample_bitstrings_with_meta(psi: &WaveFunction, n: usize, meta: DatasetMeta) -> Result<BitstringDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let sampler = BornSampler::new(psi);
    let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
    let samples = (0..n).map(|_| sampler.draw(&mut rng)).collect();
    BitstringDataset::new(psi.n_sites(), samples, meta)
}

/// Cumulative Born distribution of a wave function.
#[derive(Debug, Clone)]
pub struct BornSampler {
    cdf: Vec<f64>,
}

impl BornSampler {
    pub fn new(psi: &WaveFunction) -> Self {
        let mut acc = 0.0;
        let cdf = psi
            .amplitudes()
            .iter()
            .map(|a| {
                acc += a * a;
                acc
            })
            .collect();
        Self { cdf }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let total = *self.cdf.last().unwrap_or(&0.0);
        let u = rng.gen::<f64>() * total;
        // First state whose cumulative weight exceeds u; zero-weight states are never picked.
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) as u32
    }
}

/// Restricts every sample to `sites`, packed in list order.
pub fn project(dataset: &BitstringDataset, sites: &[usize]) -> Result<Vec<u32>> {
    if let Some(&s) = sites.iter().find(|&&s| s >= dataset.n_sites) {
        return Err(Error::IndexOutOfRange { index: s, width: dataset.n_sites });
    }
    Ok(dataset.samples.iter().map(|&x| bits::gather(x, sites)).collect())
}

/// Aligned pairs `(aᵢ, bᵢ)` and the same A-side paired with a permuted B-side.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub joint: Vec<(u32, u32)>,
    pub marginal: Vec<(u32, u32)>,
    pub partition: Partition,
}

pub fn make_pair_batch(
    dataset: &BitstringDataset,
    part: &Partition,
    indices: &[usize],
    seed: u64,
) -> Result<PairBatch> {
    let a = project(dataset, part.sites_a())?;
    let b = project(dataset, part.sites_b())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (joint, marginal) = pair_indices(&a, &b, indices, &mut rng)?;
    Ok(PairBatch { joint, marginal, partition: part.clone() })
}

/// Pair construction on pre-projected subsystem views.
pub fn pair_indices<R: Rng + ?Sized>(
    a: &[u32],
    b: &[u32],
    indices: &[usize],
    rng: &mut R,
) -> Result<(Vec<(u32, u32)>, Vec<(u32, u32)>)> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= a.len()) {
        return Err(Error::IndexOutOfRange { index: i, width: a.len() });
    }
    let joint: Vec<(u32, u32)> = indices.iter().map(|&i| (a[i], b[i])).collect();
    let mut shuffled: Vec<u32> = joint.iter().map(|p| p.1).collect();
    shuffled.shuffle(rng);
    let marginal = joint.iter().zip(shuffled).map(|(p, bt)| (p.0, bt)).collect();
    Ok((joint, marginal))
}

fn header(dataset: &BitstringDataset) -> String {
    format!(
        "{HEADER_TAG} N={} Bx={} Bz={} seed={}",
        dataset.n_sites, dataset.meta.field_x, dataset.meta.field_z, dataset.meta.seed
    )
}

pub fn write_dataset_to<W: Write>(dataset: &BitstringDataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", header(dataset))?;
    for &s in &dataset.samples {
        writeln!(out, "{}", bits::to_string(s, dataset.n_sites))?;
    }
    out.flush()
}

pub fn write_dataset(dataset: &BitstringDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<BitstringDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(BufReader::new(file))
}

pub fn read_dataset_from<R: BufRead>(reader: R) -> Result<BitstringDataset> {
    let mut lines = reader.lines();
    let first = match lines.next() {
        Some(line) => line.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let (n_sites, meta) = parse_header(&first)?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        if line.len() != n_sites {
            return Err(parse_err(lineno, format!("expected {n_sites} characters, got {}", line.len())));
        }
        let config = bits::from_str(&line)
            .ok_or_else(|| parse_err(lineno, "characters other than 0/1".into()))?;
        samples.push(config);
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    BitstringDataset::new(n_sites, samples, meta)
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn parse_header(line: &str) -> Result<(usize, DatasetMeta)> {
    let rest = line
        .strip_prefix(HEADER_TAG)
        .ok_or_else(|| parse_err(1, format!("header must start with {HEADER_TAG:?}")))?;
    let mut n_sites = None;
    let mut fx = None;
    let mut fz = None;
    let mut seed = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field {field:?}")))?;
        let bad = |_| parse_err(1, format!("bad value for {key}: {value:?}"));
        match key {
            "N" => n_sites = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "Bx" => fx = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "Bz" => fz = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(parse_err(1, format!("unknown header key {key:?}"))),
        }
    }
    match (n_sites, fx, fz, seed) {
        (Some(n), Some(field_x), Some(field_z), Some(seed)) if (1..=24).contains(&n) => {
            Ok((n, DatasetMeta { field_x, field_z, seed }))
        }
        _ => Err(parse_err(1, "header needs N (1..=24), Bx, Bz and seed".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> DatasetMeta {
        DatasetMeta { field_x: 0.5, field_z: 1.25, seed: 9 }
    }

    #[test]
    fn ferromagnet_samples_are_constant() {
        let psi = WaveFunction::basis_state(6, 0).unwrap();
        let d = sample_bitstrings(&psi, 500, 3).unwrap();
        assert!(d.samples().iter().all(|&s| s == 0));
        assert_eq!(d.len(), 500);
    }

    #[test]
    fn project_identity_and_single_site() {
        let d = BitstringDataset::new(4, vec![0b0001, 0b1010, 0b1111], meta()).unwrap();
        assert_eq!(project(&d, &[0, 1, 2, 3]).unwrap(), d.samples());
        assert_eq!(project(&d, &[1]).unwrap(), vec![0, 1, 1]);
        assert!(matches!(project(&d, &[4]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn batch_of_one_is_aligned() {
        let d = BitstringDataset::new(4, vec![0b0011, 0b1100], meta()).unwrap();
        let part = Partition::half(4).unwrap();
        let batch = make_pair_batch(&d, &part, &[1], 5).unwrap();
        assert_eq!(batch.joint, batch.marginal);
        assert!(matches!(make_pair_batch(&d, &part, &[], 5), Err(Error::EmptyDataset)));
    }

    #[test]
    fn round_trip_text_format() {
        let d = BitstringDataset::new(5, vec![0, 1, 0b10110, 31], meta()).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "# qmine-bitstrings v1 N=5 Bx=0.5 Bz=1.25 seed=9\n00000\n10000\n01101\n11111\n"
        );
        assert_eq!(read_dataset_from(&buf[..]).unwrap(), d);
    }

    #[test]
    fn header_only_is_empty() {
        let text = "# qmine-bitstrings v1 N=3 Bx=1 Bz=0 seed=1\n";
        assert!(matches!(read_dataset_from(text.as_bytes()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn bad_character_names_line() {
        let text = "# qmine-bitstrings v1 N=3 Bx=1 Bz=0 seed=1\n010\n0x1\n";
        match read_dataset_from(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "# qmine-bitstrings v1 N=3 Bx=1 Bz=0 seed=1\n010 \n";
        assert!(matches!(read_dataset_from(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn bad_header() {
        assert!(matches!(read_dataset_from("010\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        let text = "# qmine-bitstrings v1 N=3 Bx=1 seed=1\n010\n";
        assert!(matches!(read_dataset_from(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}

//! Binary checkpoints of trajectories, ensembles and eigen-triples.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "FKNS"  version:u16  kind:u16  dealias_num:u16  dealias_den:u16
//! K:u64  N:u64  d:u64  ν:f64  dt:f64  h:f64  t:f64
//! n_frames:u64  n_aux:u64
//! n_frames × { label:f64  weight:f64  n_modes × (re:f64, im:f64) }
//! n_aux × f64
//! ```
//!
//! A frame's label is a time for trajectories and a symbol for ensembles.
//! Coefficients are stored at full precision so that a resumed run
//! continues bitwise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::eigen::{EigenTripleEstimate, SymbolGrid};
use crate::ensemble::WeightedEnsemble;
use crate::error::{Error, Result};
use crate::integrator::{Integrator, Trajectory};
use crate::model::TimeSymbol;
use crate::spectral::{SpectralField, TorusSpec};

pub const MAGIC: &[u8; 4] = b"FKNS";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    Trajectory = 1,
    Ensemble = 2,
    Triple = 3,
}

impl CheckpointKind {
    fn from_code(code: u16) -> Result<Self> {
        match code {
            1 => Ok(Self::Trajectory),
            2 => Ok(Self::Ensemble),
            3 => Ok(Self::Triple),
            _ => Err(Error::Checkpoint(format!("unknown checkpoint kind {code}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub kind: CheckpointKind,
    pub torus: Arc<TorusSpec>,
    pub noise_dim: usize,
    pub viscosity: f64,
    pub dt: f64,
    pub symbol: f64,
    pub time: f64,
}

impl CheckpointHeader {
    pub fn for_integrator(kind: CheckpointKind, integ: &Integrator, symbol: TimeSymbol, time: f64) -> Self {
        Self {
            kind,
            torus: Arc::clone(integ.torus()),
            noise_dim: integ.noise_dim(),
            viscosity: integ.params().viscosity(),
            dt: integ.dt(),
            symbol: symbol.value(),
            time,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub label: f64,
    pub weight: f64,
    pub field: SpectralField,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub frames: Vec<Frame>,
    /// Kind-specific trailing values.
    pub aux: Vec<f64>,
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Checkpoint(format!("truncated file while reading {what}")),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let h = &self.header;
        let (num, den) = h.torus.dealias_fraction();
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(h.kind as u16).to_le_bytes())?;
        out.write_all(&(num as u16).to_le_bytes())?;
        out.write_all(&(den as u16).to_le_bytes())?;
        out.write_all(&u64::from(h.torus.truncation()).to_le_bytes())?;
        out.write_all(&(h.torus.grid_size() as u64).to_le_bytes())?;
        out.write_all(&(h.noise_dim as u64).to_le_bytes())?;
        for x in [h.viscosity, h.dt, h.symbol, h.time] {
            out.write_all(&x.to_le_bytes())?;
        }
        out.write_all(&(self.frames.len() as u64).to_le_bytes())?;
        out.write_all(&(self.aux.len() as u64).to_le_bytes())?;
        for f in &self.frames {
            if **f.field.spec() != *h.torus {
                return Err(Error::TruncationMismatch);
            }
            out.write_all(&f.label.to_le_bytes())?;
            out.write_all(&f.weight.to_le_bytes())?;
            for c in f.field.coeffs() {
                out.write_all(&c.re.to_le_bytes())?;
                out.write_all(&c.im.to_le_bytes())?;
            }
        }
        for x in &self.aux {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader { inner: input };
        let magic: [u8; 4] = r.bytes("magic")?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            if version.swap_bytes() == VERSION {
                return Err(Error::Checkpoint("big-endian checkpoint; only little-endian files are supported".into()));
            }
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let kind = CheckpointKind::from_code(r.u16("kind")?)?;
        let num = r.u16("dealias numerator")?;
        let den = r.u16("dealias denominator")?;
        let k = r.u64("truncation")?;
        let n = r.u64("grid size")?;
        let d = r.u64("noise dimension")?;
        let k = u32::try_from(k).map_err(|_| Error::Checkpoint(format!("truncation {k} out of range")))?;
        let torus = TorusSpec::with_dealias(k, n as usize, u32::from(num), u32::from(den))?;
        let viscosity = r.f64("viscosity")?;
        let dt = r.f64("dt")?;
        let symbol = r.f64("symbol")?;
        let time = r.f64("time")?;
        let n_frames = r.u64("frame count")?;
        let n_aux = r.u64("aux count")?;
        let n_modes = torus.n_modes();
        let mut frames = Vec::new();
        for i in 0..n_frames {
            let what = format!("frame {i}");
            let label = r.f64(&what)?;
            let weight = r.f64(&what)?;
            let mut coeffs = Vec::with_capacity(n_modes);
            for _ in 0..n_modes {
                let re = r.f64(&what)?;
                let im = r.f64(&what)?;
                coeffs.push(Complex64::new(re, im));
            }
            frames.push(Frame {
                label,
                weight,
                field: SpectralField::from_coeffs(&torus, coeffs)?,
            });
        }
        let mut aux = Vec::new();
        for _ in 0..n_aux {
            aux.push(r.f64("aux values")?);
        }
        Ok(Self {
            header: CheckpointHeader {
                kind,
                torus,
                noise_dim: d as usize,
                viscosity,
                dt,
                symbol,
                time,
            },
            frames,
            aux,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    fn expect(&self, kind: CheckpointKind) -> Result<()> {
        if self.header.kind == kind {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {:?}", self.header.kind)))
        }
    }

    /// Recorded states of a trajectory, labelled by time; the aux block holds
    /// the symbol reached at each frame.
    pub fn from_trajectory(integ: &Integrator, traj: &Trajectory) -> Self {
        let time = traj.times.last().copied().unwrap_or(0.0);
        Self {
            header: CheckpointHeader::for_integrator(CheckpointKind::Trajectory, integ, traj.symbol, time),
            frames: traj
                .times
                .iter()
                .zip(&traj.states)
                .map(|(&t, w)| Frame {
                    label: t,
                    weight: 1.0,
                    field: w.clone(),
                })
                .collect(),
            aux: traj.symbols.iter().map(|h| h.value()).collect(),
        }
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        self.expect(CheckpointKind::Trajectory)?;
        if self.aux.len() != self.frames.len() {
            return Err(Error::Checkpoint("trajectory needs one symbol per frame".into()));
        }
        Ok(Trajectory {
            symbol: TimeSymbol::new(self.header.symbol),
            times: self.frames.iter().map(|f| f.label).collect(),
            symbols: self.aux.iter().map(|&h| TimeSymbol::new(h)).collect(),
            states: self.frames.iter().map(|f| f.field.clone()).collect(),
        })
    }

    /// A weighted ensemble at symbol `h`; the aux block holds the total mass.
    pub fn from_ensemble(integ: &Integrator, ensemble: &WeightedEnsemble, h: TimeSymbol, time: f64) -> Self {
        Self {
            header: CheckpointHeader::for_integrator(CheckpointKind::Ensemble, integ, h, time),
            frames: ensemble
                .particles()
                .iter()
                .zip(ensemble.weights())
                .map(|(x, &w)| Frame {
                    label: h.value(),
                    weight: w,
                    field: x.clone(),
                })
                .collect(),
            aux: vec![ensemble.total_mass()],
        }
    }

    pub fn to_ensemble(&self) -> Result<WeightedEnsemble> {
        self.expect(CheckpointKind::Ensemble)?;
        let ens = WeightedEnsemble::new(
            self.frames.iter().map(|f| f.field.clone()).collect(),
            self.frames.iter().map(|f| f.weight).collect(),
        )?;
        Ok(match self.aux.first() {
            Some(&m) => ens.scaled(m / ens.total_mass())?,
            None => ens,
        })
    }

    /// Eigenmeasure ensembles of a triple, frames labelled by their node.
    /// The aux block is `[n_nodes, per node: n_particles, λ − offset, σ_λ,
    /// log multiplier, its σ]`.
    pub fn from_triple(integ: &Integrator, triple: &EigenTripleEstimate) -> Self {
        let mut frames = Vec::new();
        let mut aux = vec![triple.grid.len() as f64];
        for (j, g) in triple.gamma.iter().enumerate() {
            let h = triple.grid.node(j);
            frames.extend(g.particles().iter().zip(g.weights()).map(|(x, &w)| Frame {
                label: h.value(),
                weight: w,
                field: x.clone(),
            }));
            aux.extend([
                g.len() as f64,
                triple.lambda_variable[j],
                triple.lambda_se[j],
                triple.log_multiplier[j],
                triple.log_multiplier_se[j],
            ]);
        }
        Self {
            header: CheckpointHeader::for_integrator(CheckpointKind::Triple, integ, TimeSymbol::new(0.0), 0.0),
            frames,
            aux,
        }
    }

    /// Per node `(Γ(h_j), λ(h_j) − offset, σ)` from a triple checkpoint.
    pub fn to_triple_tables(&self) -> Result<(SymbolGrid, Vec<(WeightedEnsemble, f64, f64)>)> {
        self.expect(CheckpointKind::Triple)?;
        let bad = || Error::Checkpoint("malformed triple aux block".into());
        let n = *self.aux.first().ok_or_else(bad)? as usize;
        if self.aux.len() != 1 + 5 * n {
            return Err(bad());
        }
        let grid = SymbolGrid::new(n)?;
        let mut out = Vec::with_capacity(n);
        let mut at = 0;
        for j in 0..n {
            let a = &self.aux[1 + 5 * j..1 + 5 * (j + 1)];
            let len = a[0] as usize;
            let frames = self.frames.get(at..at + len).ok_or_else(bad)?;
            at += len;
            let ens = WeightedEnsemble::new(
                frames.iter().map(|f| f.field.clone()).collect(),
                frames.iter().map(|f| f.weight).collect(),
            )?;
            out.push((ens, a[1], a[2]));
        }
        Ok((grid, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForcingSpec, NoiseSpec, SimulationParams};
    use crate::rng::NoisePath;
    use crate::Wavenumber;

    fn integ() -> Integrator {
        let s = TorusSpec::new(3, 8).unwrap();
        Integrator::new(
            SimulationParams::new(&s, 0.5, 0.01).unwrap(),
            ForcingSpec::standard(&s, 1.0).unwrap(),
            Some(NoiseSpec::standard(&s, 0.7).unwrap()),
        )
    }

    fn bytes(c: &Checkpoint) -> Vec<u8> {
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn trajectory_round_trips_and_resumes_bitwise() {
        let integ = integ();
        let w0 = SpectralField::cos_mode(integ.torus(), Wavenumber::new(1, 0), 1.0).unwrap();
        let h = TimeSymbol::new(0.4);
        let path = NoisePath::new(3, 1);
        let first = integ.solve(&w0, 0.0, 1.0, h, &path, 25).unwrap();
        let back = Checkpoint::read_from(bytes(&Checkpoint::from_trajectory(&integ, &first)).as_slice())
            .unwrap()
            .to_trajectory()
            .unwrap();
        assert_eq!(back.times, first.times);
        assert_eq!(back.states, first.states);
        // continue from the restored state with the next increments
        let n = integ.params().steps_for(1.0) as u64;
        let h_mid = *back.symbols.last().unwrap();
        let (resumed, _) = integ
            .homogenized_step(back.last().unwrap(), h_mid, 1.0, &path, n)
            .unwrap();
        let (whole, _) = integ.homogenized_step(&w0, h, 2.0, &path, 0).unwrap();
        assert_eq!(resumed, whole);
    }

    #[test]
    fn ensemble_round_trips() {
        let integ = integ();
        let s = integ.torus();
        let ens = WeightedEnsemble::new(
            vec![
                SpectralField::zeros(s),
                SpectralField::sin_mode(s, Wavenumber::new(1, 1), 2.0).unwrap(),
            ],
            vec![0.25, 0.75],
        )
        .unwrap();
        let c = Checkpoint::from_ensemble(&integ, &ens, TimeSymbol::new(2.0), 5.0);
        let back = Checkpoint::read_from(bytes(&c).as_slice()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_ensemble().unwrap().weights(), ens.weights());
        assert!(back.to_trajectory().is_err());
    }

    #[test]
    fn rejects_corrupt_headers() {
        let integ = integ();
        let traj = integ
            .solve(&SpectralField::zeros(integ.torus()), 0.0, 0.1, TimeSymbol::new(0.0), &NoisePath::new(0, 0), 1)
            .unwrap();
        let good = bytes(&Checkpoint::from_trajectory(&integ, &traj));

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Checkpoint::read_from(bad_magic.as_slice()), Err(Error::Checkpoint(_))));

        let mut future = good.clone();
        future[4..6].copy_from_slice(&7u16.to_le_bytes());
        assert!(matches!(
            Checkpoint::read_from(future.as_slice()),
            Err(Error::UnsupportedVersion { found: 7, expected: 1 })
        ));

        let mut swapped = good.clone();
        swapped[4..6].copy_from_slice(&VERSION.to_be_bytes());
        let err = Checkpoint::read_from(swapped.as_slice()).unwrap_err().to_string();
        assert!(err.contains("big-endian"), "{err}");

        let truncated = &good[..good.len() - 3];
        let err = Checkpoint::read_from(truncated).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }
}

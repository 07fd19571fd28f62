//! Exponential Euler-Maruyama time stepping of
//!
//! `dw + B(Kw, w) dt = νΔw dt + f(β_t h) dt + Σ g_i dW_i`.
//!
//! The linear part is integrated exactly mode by mode; the nonlinearity and
//! forcing enter through `φ₁(z) = (e^z − 1)/z`; the noise increment is added
//! after the integrating factor:
//!
//! `ŵ' = e^{−ν|k|²dt} ŵ + φ₁(−ν|k|²dt) dt (−B̂ + f̂) + e^{−ν|k|²dt} Σ ĝ_i dW_i`.
//!
//! The time symbol is advanced by repeated rotation `h ← β_dt h`, so a run
//! depends on its start only through the starting symbol. Runs that share a
//! starting symbol and increments are bitwise identical, which is what makes
//! the translation and flow identities exact.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ForcingSpec, NoiseSpec, SimulationParams, TimeSymbol};
use crate::rng::NoisePath;
use crate::spectral::{SpectralField, SpectralWorkspace, TorusSpec};

/// `φ₁(z) = (e^z − 1)/z` with the removable singularity at 0.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + z / 2.0
    } else {
        z.exp_m1() / z
    }
}

#[derive(Clone, Debug)]
pub struct Integrator {
    params: SimulationParams,
    forcing: ForcingSpec,
    noise: Option<NoiseSpec>,
    nonlinear: bool,
    decay: Vec<f64>,
    phi_dt: Vec<f64>,
}

impl Integrator {
    pub fn new(params: SimulationParams, forcing: ForcingSpec, noise: Option<NoiseSpec>) -> Self {
        let nu = params.viscosity();
        let dt = params.dt();
        let (decay, phi_dt) = params
            .torus()
            .modes()
            .iter()
            .map(|k| {
                let z = -nu * k.norm_sq() * dt;
                (z.exp(), phi1(z) * dt)
            })
            .unzip();
        Self {
            params,
            forcing,
            noise,
            nonlinear: true,
            decay,
            phi_dt,
        }
    }

    /// Switches the nonlinearity off, leaving a linear (Ornstein-Uhlenbeck)
    /// system. Used for reductions with closed-form or grid oracles.
    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn is_nonlinear(&self) -> bool {
        self.nonlinear
    }

    pub fn params(&self) -> &SimulationParams {
        &self.params
    }

    pub fn torus(&self) -> &Arc<TorusSpec> {
        self.params.torus()
    }

    pub fn dt(&self) -> f64 {
        self.params.dt()
    }

    pub fn forcing(&self) -> &ForcingSpec {
        &self.forcing
    }

    pub fn noise(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise.as_ref().map_or(0, NoiseSpec::dim)
    }

    pub fn stepper(&self) -> Stepper<'_> {
        Stepper {
            integ: self,
            ws: SpectralWorkspace::new(self.torus()),
            nl: SpectralField::zeros(self.torus()),
            drive: SpectralField::zeros(self.torus()),
            kick: vec![Complex64::default(); self.torus().n_modes()],
        }
    }

    /// Single step at time `t` for symbol `h` with increment `dw ~ N(0, dt)^d`.
    pub fn step(&self, w: &SpectralField, t: f64, h: TimeSymbol, dw: &[f64]) -> Result<SpectralField> {
        let mut out = w.clone();
        if !self.stepper().step_in_place(&mut out, h.shift(t), dw) {
            return Err(Error::BlowUp { time: t + self.dt() });
        }
        Ok(out)
    }

    /// Solution on `[s, t]` with symbol `h`, keeping every `record_every`-th
    /// state (and always the last one).
    pub fn solve(
        &self,
        w0: &SpectralField,
        s: f64,
        t: f64,
        h: TimeSymbol,
        path: &NoisePath,
        record_every: usize,
    ) -> Result<Trajectory> {
        if t < s {
            return Err(crate::error::invalid("t", "end time precedes start time"));
        }
        let n = self.params.steps_for(t - s);
        let every = record_every.max(1);
        let mut traj = Trajectory {
            symbol: h,
            times: Vec::new(),
            symbols: Vec::new(),
            states: Vec::new(),
        };
        let mut w = w0.clone();
        let mut sym = h.shift(s);
        let dt = self.dt();
        self.stepper().run(&mut w, &mut sym, s, n, path, 0, |i, state, at| {
            if i % every == 0 || i == n {
                traj.times.push(s + i as f64 * dt);
                traj.symbols.push(at);
                traj.states.push(state.clone());
            }
        })?;
        Ok(traj)
    }

    /// Advances the homogeneous pair `(w, h) ↦ (Φ_{0,t,h}(w), β_t h)` using
    /// increments `first_step, first_step + 1, …` of `path`.
    pub fn homogenized_step(
        &self,
        w: &SpectralField,
        h: TimeSymbol,
        t: f64,
        path: &NoisePath,
        first_step: u64,
    ) -> Result<(SpectralField, TimeSymbol)> {
        let mut state = w.clone();
        let mut sym = h;
        let n = self.params.steps_for(t);
        self.stepper().run(&mut state, &mut sym, 0.0, n, path, first_step, |_, _, _| {})?;
        Ok((state, sym))
    }
}

/// Recorded solution path. `symbols[i]` is the symbol reached at `times[i]`
/// by repeated stepping, which is what a resumed run must start from.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub symbol: TimeSymbol,
    pub times: Vec<f64>,
    pub symbols: Vec<TimeSymbol>,
    pub states: Vec<SpectralField>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&SpectralField> {
        self.states.last()
    }
}

/// Per-worker stepping state: FFT workspace and scratch fields.
pub struct Stepper<'a> {
    integ: &'a Integrator,
    ws: SpectralWorkspace,
    nl: SpectralField,
    drive: SpectralField,
    kick: Vec<Complex64>,
}

impl Stepper<'_> {
    pub fn integrator(&self) -> &Integrator {
        self.integ
    }

    /// One step from symbol `symbol` with increment `dw`. Returns `false` if
    /// the result is not finite (the state is then garbage).
    pub fn step_in_place(&mut self, w: &mut SpectralField, symbol: TimeSymbol, dw: &[f64]) -> bool {
        let integ = self.integ;
        if integ.nonlinear {
            self.ws.advection_into(w, w, &mut self.nl);
        }
        // drive = f(β_t h) − B(Kw, w)
        let drive = self.drive.coeffs_mut();
        drive.fill(Complex64::default());
        integ.forcing.add_into(symbol, 1.0, drive);
        if integ.nonlinear {
            for (a, b) in drive.iter_mut().zip(self.nl.coeffs()) {
                *a -= b;
            }
        }
        self.kick.fill(Complex64::default());
        if let Some(noise) = &integ.noise {
            for (g, &x) in noise.fields().iter().zip(dw) {
                for (a, b) in self.kick.iter_mut().zip(g.coeffs()) {
                    *a += b * x;
                }
            }
        }
        let mut finite = true;
        for (idx, c) in w.coeffs_mut().iter_mut().enumerate() {
            let v = (*c + self.kick[idx]) * integ.decay[idx] + self.drive.coeffs()[idx] * integ.phi_dt[idx];
            finite &= v.re.is_finite() && v.im.is_finite();
            *c = v;
        }
        finite
    }

    /// Steps the pair `(w, symbol)` `n_steps` times using increments from
    /// `first_step` on. `observe(i, w, symbol)` sees the initial state
    /// (`i = 0`) and every state after a step. `t0` only labels errors.
    #[allow(clippy::too_many_arguments)]
    pub fn run<F>(
        &mut self,
        w: &mut SpectralField,
        symbol: &mut TimeSymbol,
        t0: f64,
        n_steps: usize,
        path: &NoisePath,
        first_step: u64,
        mut observe: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &SpectralField, TimeSymbol),
    {
        let dt = self.integ.dt();
        let d = self.integ.noise_dim();
        let mut inc = path.increments(d, dt, first_step);
        observe(0, w, *symbol);
        for i in 1..=n_steps {
            let dw = inc.next_increment();
            if !self.step_in_place(w, *symbol, dw) {
                return Err(Error::BlowUp {
                    time: t0 + i as f64 * dt,
                });
            }
            *symbol = symbol.shift(dt);
            observe(i, w, *symbol);
        }
        Ok(())
    }
}

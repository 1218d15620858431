//! Solver parameters and their `key=value` text form.
//!
//! ```text
//! # comments and blank lines are ignored
//! lambda = 0.1
//! mu = 0.01
//! tau = auto
//! ```
//!
//! Keys: `lambda`, `mu`, `gamma`, `q`, `tau` (`auto` or a number),
//! `outer_iters` (`auto` or a count), `prox_steps`, `dict_passes`, `p`, `k`,
//! `seed`, `window`, `stride`, `pls_iters`. Unknown keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::dictlearn::DEFAULT_Q;
use crate::error::{Error, Result};
use crate::reflectance::DEFAULT_GAMMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ls,
    Pls,
    Dlnv,
    Pdlnv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ls, Method::Pls, Method::Dlnv, Method::Pdlnv];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Pls => "pls",
            Method::Dlnv => "dlnv",
            Method::Pdlnv => "pdlnv",
        }
    }

    /// Outer iteration budget used when the config leaves it unset.
    pub fn default_outer_iters(self) -> usize {
        match self {
            Method::Dlnv => 20,
            _ => 50,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (expected ls, pls, dlnv, pdlnv)")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Weight of the patch-sparsity regularizer.
    pub lambda: f64,
    /// Hard-threshold level; the sparsity penalty is `mu^2 ||B||_0`.
    pub mu: f64,
    /// Weight of the sum-to-one penalty row in the slope update.
    pub gamma: f64,
    pub q: f64,
    /// Proximal step size; `None` uses `1 / (2 ||L||^2)`.
    pub tau: Option<f64>,
    /// `None` picks the per-method default.
    pub outer_iters: Option<usize>,
    pub prox_steps: usize,
    pub dict_passes: usize,
    pub p: usize,
    pub atoms: usize,
    pub seed: u64,
    pub window: usize,
    pub stride: usize,
    pub pls_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            mu: 0.01,
            gamma: DEFAULT_GAMMA,
            q: DEFAULT_Q,
            tau: None,
            outer_iters: None,
            prox_steps: 25,
            dict_passes: 1,
            p: 2,
            atoms: 192,
            seed: 0,
            window: 8,
            stride: 4,
            pls_iters: 200,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'")))
}

fn parse_auto<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

impl SolverConfig {
    pub fn outer_iters_for(&self, method: Method) -> usize {
        self.outer_iters.unwrap_or_else(|| method.default_outer_iters())
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [("lambda", self.lambda), ("mu", self.mu), ("gamma", self.gamma), ("q", self.q)];
        for (name, v) in weights {
            if !(v >= 0.0) || v.is_nan() {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.q < self.mu {
            return Err(Error::Config(format!("q ({}) must be at least mu ({})", self.q, self.mu)));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tau must be positive, got {t}")));
            }
        }
        let counts = [
            ("p", self.p),
            ("k", self.atoms),
            ("window", self.window),
            ("stride", self.stride),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda" => self.lambda = parse_num(key, value)?,
            "mu" => self.mu = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "q" => self.q = parse_num(key, value)?,
            "tau" => self.tau = parse_auto(key, value)?,
            "outer_iters" => self.outer_iters = parse_auto(key, value)?,
            "prox_steps" => self.prox_steps = parse_num(key, value)?,
            "dict_passes" => self.dict_passes = parse_num(key, value)?,
            "p" => self.p = parse_num(key, value)?,
            "k" => self.atoms = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "window" => self.window = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "pls_iters" => self.pls_iters = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Defaults overridden by the `key=value` lines in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SolverConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let auto = |v: Option<String>| v.unwrap_or_else(|| "auto".to_string());
        let mut s = String::new();
        let _ = writeln!(s, "lambda = {:e}", self.lambda);
        let _ = writeln!(s, "mu = {:e}", self.mu);
        let _ = writeln!(s, "gamma = {:e}", self.gamma);
        let _ = writeln!(s, "q = {:e}", self.q);
        let _ = writeln!(s, "tau = {}", auto(self.tau.map(|t| format!("{t:e}"))));
        let _ = writeln!(s, "outer_iters = {}", auto(self.outer_iters.map(|t| t.to_string())));
        let _ = writeln!(s, "prox_steps = {}", self.prox_steps);
        let _ = writeln!(s, "dict_passes = {}", self.dict_passes);
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "k = {}", self.atoms);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "window = {}", self.window);
        let _ = writeln!(s, "stride = {}", self.stride);
        let _ = writeln!(s, "pls_iters = {}", self.pls_iters);
        s
    }
}

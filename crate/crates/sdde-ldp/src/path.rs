//! Sampled paths on `[-tau, T]`: the prescribed history segment and full
//! trajectories, with linear interpolation between nodes and a plain CSV
//! representation (`t,v0,...,v{d-1}`).

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::stats;
use serde::Serialize;
use std::io::{BufRead, BufReader, Read, Write};

/// Which dynamics produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Skeleton,
    Sdde,
    Controlled,
}

/// The prescribed path on `[-tau, 0]`, sampled at the grid history nodes
/// and interpolated linearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSegment {
    dim: usize,
    delay: f64,
    step: f64,
    /// `(n_history + 1) * dim` values, node order from `-tau` to `0`.
    samples: Vec<f64>,
}

impl InitialSegment {
    pub fn new(grid: &TimeGrid, dim: usize, samples: Vec<f64>) -> Result<Self> {
        let expect = (grid.n_history() + 1) * dim;
        if samples.len() != expect {
            return Err(Error::InvalidArgument(format!(
                "initial segment needs {} samples ({} nodes x dim {}), got {}",
                expect,
                grid.n_history() + 1,
                dim,
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial segment has non-finite samples".into()));
        }
        Ok(Self { dim, delay: grid.delay(), step: grid.step(), samples })
    }

    /// Constant history `phi(t) = value`.
    pub fn constant(grid: &TimeGrid, value: &[f64]) -> Result<Self> {
        let mut samples = Vec::with_capacity((grid.n_history() + 1) * value.len());
        for _ in 0..=grid.n_history() {
            samples.extend_from_slice(value);
        }
        Self::new(grid, value.len(), samples)
    }

    /// Build from arbitrary `(t, value)` samples covering `[-tau, 0]`,
    /// resampled onto the grid history nodes by linear interpolation.
    pub fn from_samples(grid: &TimeGrid, dim: usize, times: &[f64], values: &[f64]) -> Result<Self> {
        if times.len() < 2 || values.len() != times.len() * dim {
            return Err(Error::InvalidArgument("initial segment data is empty or ragged".into()));
        }
        let slack = 1e-9 * grid.delay().max(1.0);
        if times[0] > -grid.delay() + slack || *times.last().unwrap() < -slack {
            return Err(Error::InvalidArgument(format!(
                "initial segment data covers [{}, {}] but [-{}, 0] is required",
                times[0],
                times.last().unwrap(),
                grid.delay()
            )));
        }
        let mut samples = Vec::with_capacity((grid.n_history() + 1) * dim);
        for i in 0..=grid.n_history() {
            let t = (i as f64 - grid.n_history() as f64) * grid.step();
            interp_at(times, values, dim, t, &mut samples);
        }
        Self::new(grid, dim, samples)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Value at `t = 0`, the launch point of the dynamics.
    pub fn at_origin(&self) -> &[f64] {
        self.node(self.n_nodes() - 1)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Evaluate at `t` in `[-tau, 0]`.
    pub fn eval(&self, t: f64, out: &mut [f64]) -> Result<()> {
        eval_uniform(&self.samples, self.dim, -self.delay, self.step, t, out)
    }
}

/// A path sampled on all nodes of `[-tau, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    /// `grid.n_nodes() * dim` values, node-major.
    values: Vec<f64>,
    origin: Origin,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>, origin: Origin) -> Result<Self> {
        if values.len() != grid.n_nodes() * dim {
            return Err(Error::InvalidArgument(format!(
                "trajectory needs {} values, got {}",
                grid.n_nodes() * dim,
                values.len()
            )));
        }
        Ok(Self { grid, dim, values, origin })
    }

    /// Allocate a trajectory containing the history segment and zeros ahead.
    pub fn with_history(grid: TimeGrid, phi: &InitialSegment, origin: Origin) -> Result<Self> {
        if phi.n_nodes() != grid.n_history() + 1 {
            return Err(Error::GridMismatch(format!(
                "initial segment has {} nodes, grid history needs {}",
                phi.n_nodes(),
                grid.n_history() + 1
            )));
        }
        let mut values = vec![0.0; grid.n_nodes() * phi.dim()];
        values[..phi.samples().len()].copy_from_slice(phi.samples());
        Ok(Self { grid, dim: phi.dim(), values, origin })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Value at the final time `T`.
    pub fn endpoint(&self) -> &[f64] {
        self.node(self.grid.n_nodes() - 1)
    }

    /// Linear interpolation at `t` in `[-tau, T]`; exact at the nodes.
    pub fn eval(&self, t: f64, out: &mut [f64]) -> Result<()> {
        eval_uniform(&self.values, self.dim, -self.grid.delay(), self.grid.step(), t, out)
    }

    /// Convenience wrapper allocating the output.
    pub fn eval_vec(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval(t, &mut out)?;
        Ok(out)
    }

    /// Largest Euclidean node norm over `[0, T]`.
    pub fn sup_norm_forward(&self) -> f64 {
        (self.grid.origin_index()..self.grid.n_nodes())
            .map(|i| stats::norm(self.node(i)))
            .fold(0.0, f64::max)
    }

    /// True when the nodes on `[-tau, 0]` equal `phi` bit-exactly.
    pub fn history_matches(&self, phi: &InitialSegment) -> bool {
        self.dim == phi.dim() && self.values[..phi.samples().len()] == *phi.samples()
    }

    /// Write as CSV with header `t,v0,...,v{d-1}`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write_csv(w, self.dim, (0..self.grid.n_nodes()).map(|i| (self.grid.node_time(i), self.node(i))))
    }

    /// Read back a trajectory written by [`Trajectory::write_csv`],
    /// reconstructing the grid from the time column.
    pub fn read_csv<R: Read>(r: R, origin: Origin) -> Result<Self> {
        let (times, values, dim) = read_csv(r)?;
        if times.len() < 3 {
            return Err(Error::Csv("trajectory file needs at least 3 rows".into()));
        }
        let h = times[1] - times[0];
        if h <= 0.0 {
            return Err(Error::Csv("time column must be strictly increasing".into()));
        }
        for k in 1..times.len() {
            if ((times[k] - times[k - 1]) - h).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::Csv(format!("non-uniform time step near row {k}")));
            }
        }
        let delay = -times[0];
        let horizon = *times.last().unwrap();
        if delay <= 0.0 || horizon <= 0.0 {
            return Err(Error::Csv("trajectory must span [-tau, T] with tau, T > 0".into()));
        }
        let grid = TimeGrid::new(horizon, h, delay)?;
        Trajectory::new(grid, dim, values, origin)
    }
}

/// Interpolate node-major `values` sampled uniformly from `t0` with step `h`.
fn eval_uniform(values: &[f64], dim: usize, t0: f64, h: f64, t: f64, out: &mut [f64]) -> Result<()> {
    let n_nodes = values.len() / dim;
    let t_end = t0 + (n_nodes - 1) as f64 * h;
    let slack = 1e-9 * h;
    if t < t0 - slack || t > t_end + slack {
        return Err(Error::TimeOutOfRange { t, lo: t0, hi: t_end });
    }
    let s = ((t - t0) / h).clamp(0.0, (n_nodes - 1) as f64);
    // snap to the node when rounding noise is the only thing separating us
    // from it, so node reads reproduce stored samples exactly
    let nearest = s.round();
    if (s - nearest).abs() < 1e-9 && (0.0..=(n_nodes - 1) as f64).contains(&nearest) {
        let j = nearest as usize;
        out.copy_from_slice(&values[j * dim..(j + 1) * dim]);
        return Ok(());
    }
    let j = (s.floor() as usize).min(n_nodes - 2);
    let w = s - j as f64;
    let a = &values[j * dim..(j + 1) * dim];
    let b = &values[(j + 1) * dim..(j + 2) * dim];
    for c in 0..dim {
        out[c] = a[c] + w * (b[c] - a[c]);
    }
    Ok(())
}

pub(crate) fn interp_at(times: &[f64], values: &[f64], dim: usize, t: f64, out: &mut Vec<f64>) {
    let n = times.len();
    if t <= times[0] {
        out.extend_from_slice(&values[..dim]);
        return;
    }
    if t >= times[n - 1] {
        out.extend_from_slice(&values[(n - 1) * dim..]);
        return;
    }
    let j = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
        Ok(j) => {
            out.extend_from_slice(&values[j * dim..(j + 1) * dim]);
            return;
        }
        Err(j) => j - 1,
    };
    let w = (t - times[j]) / (times[j + 1] - times[j]);
    for c in 0..dim {
        let a = values[j * dim + c];
        let b = values[(j + 1) * dim + c];
        out.push(a + w * (b - a));
    }
}

pub(crate) fn write_csv<'a, W: Write, I>(w: &mut W, dim: usize, rows: I) -> Result<()>
where
    I: Iterator<Item = (f64, &'a [f64])>,
{
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..dim).map(|c| format!("v{c}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (t, vals) in rows {
        let mut line = String::with_capacity(24 * (dim + 1));
        line.push_str(&format!("{t}"));
        for v in vals {
            line.push(',');
            line.push_str(&format!("{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub(crate) fn read_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Csv("empty file".into()))?
        .map_err(Error::Io)?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(Error::Csv(format!("expected header t,v0,... got '{header}'")));
    }
    let dim = cols.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Csv(format!("row {} has {} fields, expected {}", idx + 2, fields.len(), dim + 1)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Csv(format!("bad number '{s}' in row {}", idx + 2)))
        };
        times.push(parse(fields[0])?);
        for f in &fields[1..] {
            values.push(parse(f)?);
        }
    }
    Ok((times, values, dim))
}

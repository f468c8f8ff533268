//! Euler scheme simulation of discrete diffusion observations, subsampling
//! and CSV persistence.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::NoiseSource;

/// Equidistant grid `t_i = i * dt` on `[0, T]` with `dt = T / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::RejectedInput(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::RejectedInput("grid needs at least one step".into()));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }
}

/// Discrete observation `(X_{t_i}, 0 <= i <= n)`; immutable after creation.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    dim: usize,
    /// Row-major (n_steps + 1) x dim state storage.
    data: Vec<f64>,
}

impl Path {
    pub fn from_states(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::RejectedInput("state dimension must be positive".into()));
        }
        if data.len() != (grid.n_steps() + 1) * dim {
            return Err(Error::RejectedInput(format!(
                "path storage has {} values, expected {} rows of {}",
                data.len(),
                grid.n_steps() + 1,
                dim
            )));
        }
        Ok(Path { grid, dim, data })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_steps() + 1
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first_state(&self) -> &[f64] {
        self.state(0)
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.n_steps())
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Simulates `dX = mu(X, theta) dt + nu(X) dW` by the Euler scheme.
///
/// Per step the k driving normals are drawn in component order 1..k, steps
/// in increasing order, from the given stream; the increment is
/// `mu dt + nu * sqrt(dt) z`, followed by the model's domain guard. The
/// result is a deterministic function of `(model, theta, x0, grid, noise)`.
pub fn euler_simulate(
    model: &ModelSpec,
    theta: &[f64],
    x0: &[f64],
    grid: TimeGrid,
    noise: &NoiseSource,
) -> Result<Path> {
    let k = model.state_dim();
    // Validate the inputs once through the checked evaluator.
    model.drift(x0, theta)?;

    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut stream = noise.gaussians();

    let mut data = Vec::with_capacity((n + 1) * k);
    data.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut z = vec![0.0; k];
    let mut next = vec![0.0; k];

    for step in 1..=n {
        let mu = model.drift_raw(&x, theta);
        let nu = model.diffusion_raw(&x);
        stream.fill(&mut z);
        for l in 0..k {
            let mut diff = 0.0;
            for j in 0..k {
                diff += nu[(l, j)] * z[j];
            }
            next[l] = x[l] + mu[l] * dt + sqrt_dt * diff;
        }
        let guarded = model.guard(&next);
        if guarded.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged { step });
        }
        data.extend_from_slice(&guarded);
        x = guarded;
    }

    Path::from_states(grid, k, data)
}

/// Keeps every `2^(l-k)`-th row of a path with `2^l` steps, producing the
/// observation at subsample level `k` (grid `(T, 2^k)`). First and last rows
/// are always preserved.
pub fn subsample(path: &Path, level_k: u32) -> Result<Path> {
    let n = path.n_steps();
    if !n.is_power_of_two() {
        return Err(Error::RejectedInput(format!(
            "subsampling requires a power-of-two step count, got {n}"
        )));
    }
    let l = n.trailing_zeros();
    if level_k > l {
        return Err(Error::RejectedInput(format!(
            "subsample level {level_k} exceeds path resolution 2^{l}"
        )));
    }
    let stride = 1usize << (l - level_k);
    let m = 1usize << level_k;
    let grid = TimeGrid::new(path.grid().horizon(), m)?;
    let mut data = Vec::with_capacity((m + 1) * path.dim());
    for i in 0..=m {
        data.extend_from_slice(path.state(i * stride));
    }
    Path::from_states(grid, path.dim(), data)
}

/// Writes the CSV representation: header `t,x1,...,xk`, one row per grid
/// point, 17 significant digits, LF line endings.
pub fn write_path(path: &Path, out: &mut impl Write) -> Result<()> {
    let mut header = String::from("t");
    for j in 1..=path.dim() {
        header.push_str(&format!(",x{j}"));
    }
    writeln!(out, "{header}")?;
    for (i, state) in path.states().enumerate() {
        let mut line = format!("{:.16e}", path.grid().t(i));
        for v in state {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_path_file(path: &Path, destination: impl AsRef<FsPath>) -> Result<()> {
    let mut file = std::fs::File::create(destination)?;
    write_path(path, &mut file)
}

/// Reads a path written by `write_path`. Round trips are bitwise exact on
/// state values; malformed rows, ragged columns and non-monotone times are
/// reported with their line number.
pub fn read_path(input: impl Read) -> Result<Path> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();

    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::Parse { line: 1, message: "missing header line".into() }),
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header 't,x1,...,xk', got '{header}'"),
        });
    }
    let dim = cols.len() - 1;

    let mut times = Vec::new();
    let mut data = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", dim + 1, fields.len()),
            });
        }
        let mut parsed = Vec::with_capacity(dim + 1);
        for f in &fields {
            match f.trim().parse::<f64>() {
                Ok(v) => parsed.push(v),
                Err(_) => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("cannot parse '{f}' as a number"),
                    })
                }
            }
        }
        if let Some(&prev) = times.last() {
            if parsed[0] <= prev {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-monotone time {} after {}", parsed[0], prev),
                });
            }
        }
        times.push(parsed[0]);
        data.extend_from_slice(&parsed[1..]);
    }

    if times.len() < 2 {
        return Err(Error::Parse {
            line: times.len() + 1,
            message: "a path needs at least two rows".into(),
        });
    }
    let n = times.len() - 1;
    let horizon = times[n];
    let grid = TimeGrid::new(horizon, n)?;
    let tol = 1e-9 * horizon.max(1.0);
    for (i, &t) in times.iter().enumerate() {
        if (t - grid.t(i)).abs() > tol {
            return Err(Error::Parse {
                line: i + 2,
                message: format!("time {} deviates from the equidistant grid", t),
            });
        }
    }
    Path::from_states(grid, dim, data)
}

pub fn read_path_file(source: impl AsRef<FsPath>) -> Result<Path> {
    read_path(std::fs::File::open(source)?)
}

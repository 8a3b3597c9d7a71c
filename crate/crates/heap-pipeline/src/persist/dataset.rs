//! Trajectory dataset file:
//!
//! ```text
//! magic "HWDS" | version u32 | nx u32 | ny u32 | channels u32 (=2)
//! n_steps u64 | dt_output f64
//! solver params, each as f64, declared order:
//!   alpha kappa d_n d_p nx ny box_length dt_internal output_stride seed
//! payload: [step][channel (n=0, phi=1)][y][x] f32, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use heap_solver::{Field2D, SolverParams, SystemState, Trajectory};

use super::{r_f32s, r_f64, r_u32, r_u64, w_f32s, w_f64, w_u32, w_u64};
use crate::PipelineError;

const MAGIC: &[u8; 4] = b"HWDS";
const VERSION: u32 = 1;

fn params_as_f64(p: &SolverParams) -> [f64; 10] {
    [
        p.alpha,
        p.kappa,
        p.d_n,
        p.d_p,
        p.nx as f64,
        p.ny as f64,
        p.box_length,
        p.dt_internal,
        p.output_stride as f64,
        p.seed as f64,
    ]
}

fn params_from_f64(v: &[f64; 10]) -> SolverParams {
    SolverParams {
        alpha: v[0],
        kappa: v[1],
        d_n: v[2],
        d_p: v[3],
        nx: v[4] as usize,
        ny: v[5] as usize,
        box_length: v[6],
        dt_internal: v[7],
        output_stride: v[8] as usize,
        seed: v[9] as u64,
    }
}

fn state_to_f32(state: &SystemState) -> Vec<f32> {
    let mut out = Vec::with_capacity(2 * state.n.values().len());
    out.extend(state.n.values().iter().map(|&v| v as f32));
    out.extend(state.phi.values().iter().map(|&v| v as f32));
    out
}

/// Incremental writer used when streaming a long simulation to disk; the
/// header's step count is patched at finalize and the file only appears at
/// its final path after a successful finish.
pub struct DatasetWriter {
    file: BufWriter<File>,
    tmp: PathBuf,
    path: PathBuf,
    nx: usize,
    ny: usize,
    steps: u64,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, params: &SolverParams, dt_output: f64) -> Result<Self, PipelineError> {
        let path = path.as_ref().to_path_buf();
        let tmp: PathBuf = {
            let mut os = path.as_os_str().to_os_string();
            os.push(".tmp");
            os.into()
        };
        let file = File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC).map_err(|e| PipelineError::io(&tmp, e))?;
        w_u32(&mut w, VERSION, &tmp)?;
        w_u32(&mut w, params.nx as u32, &tmp)?;
        w_u32(&mut w, params.ny as u32, &tmp)?;
        w_u32(&mut w, 2, &tmp)?;
        w_u64(&mut w, 0, &tmp)?; // patched on finish
        w_f64(&mut w, dt_output, &tmp)?;
        for v in params_as_f64(params) {
            w_f64(&mut w, v, &tmp)?;
        }
        Ok(Self { file: w, tmp, path, nx: params.nx, ny: params.ny, steps: 0 })
    }

    pub fn push(&mut self, state: &SystemState) -> Result<(), PipelineError> {
        debug_assert_eq!((state.n.nx(), state.n.ny()), (self.nx, self.ny));
        w_f32s(&mut self.file, &state_to_f32(state), &self.tmp)?;
        self.steps += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<(), PipelineError> {
        let DatasetWriter { mut file, tmp, path, steps, .. } = self;
        file.flush().map_err(|e| PipelineError::io(&tmp, e))?;
        let mut inner = file.into_inner().map_err(|e| PipelineError::io(&tmp, e.into()))?;
        // n_steps sits after magic(4) + version(4) + nx(4) + ny(4) + channels(4).
        inner.seek(SeekFrom::Start(20)).map_err(|e| PipelineError::io(&tmp, e))?;
        inner.write_all(&steps.to_le_bytes()).map_err(|e| PipelineError::io(&tmp, e))?;
        inner.sync_all().map_err(|e| PipelineError::io(&tmp, e))?;
        drop(inner);
        std::fs::rename(&tmp, &path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(())
    }
}

pub fn write_dataset(path: impl AsRef<Path>, traj: &Trajectory) -> Result<(), PipelineError> {
    let mut w = DatasetWriter::create(&path, &traj.params, traj.dt_output)?;
    for s in &traj.states {
        w.push(s)?;
    }
    w.finish()
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Trajectory, PipelineError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let total_len = file.metadata().map_err(|e| PipelineError::io(path, e))?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| PipelineError::io(path, e))?;
    if &magic != MAGIC {
        return Err(PipelineError::format(path, format!("bad magic {magic:?}")));
    }
    let version = r_u32(&mut r, path)?;
    if version != VERSION {
        return Err(PipelineError::format(path, format!("unsupported version {version}")));
    }
    let nx = r_u32(&mut r, path)? as usize;
    let ny = r_u32(&mut r, path)? as usize;
    let channels = r_u32(&mut r, path)? as usize;
    if channels != 2 {
        return Err(PipelineError::format(path, format!("expected 2 channels, got {channels}")));
    }
    let n_steps = r_u64(&mut r, path)?;
    let dt_output = r_f64(&mut r, path)?;
    let mut pv = [0f64; 10];
    for v in pv.iter_mut() {
        *v = r_f64(&mut r, path)?;
    }
    let params = params_from_f64(&pv);
    if params.nx != nx || params.ny != ny {
        return Err(PipelineError::format(
            path,
            format!("header grid {nx}x{ny} disagrees with params {}x{}", params.nx, params.ny),
        ));
    }

    let header_bytes = 4 + 4 + 4 + 4 + 4 + 8 + 8 + 80;
    let expected_payload = n_steps * 2 * (nx as u64) * (ny as u64) * 4;
    let actual_payload = total_len.saturating_sub(header_bytes);
    if actual_payload != expected_payload {
        return Err(PipelineError::Truncated {
            path: path.display().to_string(),
            expected: expected_payload,
            actual: actual_payload,
        });
    }

    let per_field = nx * ny;
    let mut states = Vec::with_capacity(n_steps as usize);
    for _ in 0..n_steps {
        let data = r_f32s(&mut r, 2 * per_field, path)?;
        let n = Field2D::from_values(nx, ny, data[..per_field].iter().map(|&v| v as f64).collect())
            .map_err(|e| PipelineError::format(path, e.to_string()))?;
        let phi =
            Field2D::from_values(nx, ny, data[per_field..].iter().map(|&v| v as f64).collect())
                .map_err(|e| PipelineError::format(path, e.to_string()))?;
        states.push(SystemState { n, phi });
    }
    Ok(Trajectory { states, dt_output, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_trajectory() -> Trajectory {
        let params = SolverParams { nx: 8, ny: 8, ..Default::default() };
        let mk = |o: f64| SystemState {
            // f32-representable values so the f64 -> f32 -> f64 trip is exact.
            n: Field2D::from_fn(8, 8, |x, y| (x as f64 + 8.0 * y as f64 + o) * 0.5),
            phi: Field2D::from_fn(8, 8, |x, y| (x as f64 - y as f64 - o) * 0.25),
        };
        Trajectory { states: vec![mk(0.0), mk(1.0), mk(2.0)], dt_output: 1.0, params }
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("heap-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let traj = tiny_trajectory();
        let p = tmp("rt.hwds");
        write_dataset(&p, &traj).unwrap();
        let back = read_dataset(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.dt_output, traj.dt_output);
        assert_eq!(back.params, traj.params);
        for (a, b) in back.states.iter().zip(&traj.states) {
            assert_eq!(a.n.values(), b.n.values());
            assert_eq!(a.phi.values(), b.phi.values());
        }
        // Writing what was read reproduces the same bytes.
        let p2 = tmp("rt2.hwds");
        write_dataset(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupted_magic_rejected() {
        let p = tmp("bad.hwds");
        write_dataset(&p, &tiny_trajectory()).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_dataset(&p), Err(PipelineError::Format { .. })));
    }

    #[test]
    fn truncated_payload_reports_lengths() {
        let p = tmp("trunc.hwds");
        write_dataset(&p, &tiny_trajectory()).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        match read_dataset(&p) {
            Err(PipelineError::Truncated { expected, actual, .. }) => {
                assert_eq!(expected, 3 * 2 * 64 * 4);
                assert_eq!(actual, expected - 10);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let p = tmp("ver.hwds");
        write_dataset(&p, &tiny_trajectory()).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[4] = 99;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_dataset(&p), Err(PipelineError::Format { .. })));
    }
}

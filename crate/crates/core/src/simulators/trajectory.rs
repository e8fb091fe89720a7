use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which forward model produced a trajectory or defines a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemId {
    GramacyLee,
    Rastrigin,
    Burgers,
    Ks,
    Billiards2d,
    Billiards4d,
}

impl SystemId {
    pub fn name(&self) -> &'static str {
        match self {
            SystemId::GramacyLee => "gramacy_lee",
            SystemId::Rastrigin => "rastrigin",
            SystemId::Burgers => "burgers",
            SystemId::Ks => "ks",
            SystemId::Billiards2d => "billiards2d",
            SystemId::Billiards4d => "billiards4d",
        }
    }
}

/// Time-ordered sequence of equally sized states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub system: SystemId,
    pub frames: Vec<Vec<f64>>,
    pub frame_times: Vec<f64>,
}

impl Trajectory {
    pub fn new(system: SystemId, frames: Vec<Vec<f64>>, frame_times: Vec<f64>) -> Result<Self> {
        if frames.is_empty() || frames.len() != frame_times.len() {
            return Err(Error::shape(format!(
                "trajectory needs matching nonempty frames/times, got {} and {}",
                frames.len(),
                frame_times.len()
            )));
        }
        let width = frames[0].len();
        if frames.iter().any(|f| f.len() != width) {
            return Err(Error::shape("trajectory frames differ in length"));
        }
        if frame_times[0] != 0.0 || frame_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::shape("frame times must start at 0 and strictly increase"));
        }
        Ok(Self {
            system,
            frames,
            frame_times,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_len(&self) -> usize {
        self.frames[0].len()
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.frames[0]
    }

    /// Frames concatenated in time order.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().flatten().copied()
    }

    /// Sum of squared differences over every frame and component.
    pub fn squared_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.frame_count() != other.frame_count() || self.frame_len() != other.frame_len() {
            return Err(Error::shape(format!(
                "cannot compare {}x{} trajectory with {}x{}",
                self.frame_count(),
                self.frame_len(),
                other.frame_count(),
                other.frame_len()
            )));
        }
        let mut acc = 0.0;
        for (a, b) in self.flat().zip(other.flat()) {
            let d = a - b;
            acc += d * d;
        }
        Ok(acc)
    }

    /// CSV dump, header `t,x0,x1,...`, 17 significant digits per value.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.frame_len()).map(|i| format!("x{i}")));
        out.write_record(&header)?;
        for (t, frame) in self.frame_times.iter().zip(&self.frames) {
            let mut row = vec![format_f64(*t)];
            row.extend(frame.iter().map(|v| format_f64(*v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Round-trip exact decimal representation (17 significant digits).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

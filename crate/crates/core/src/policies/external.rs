use std::fs::File;
use std::io::{BufRead, BufReader};

use nalgebra::Vector3;

use super::{Observation, Policy, PolicyError};
use crate::gait::GaitMode;
use crate::wtg::Action;

/// Replays actions from a line-oriented stream: `vx vy vz yaw_rate [bit ...]`
/// separated by whitespace or commas. Blank lines and `#` comments are skipped.
pub struct ExternalPolicy {
    lines: Box<dyn BufRead + Send>,
    n_bits: usize,
}

impl ExternalPolicy {
    pub fn new(reader: Box<dyn BufRead + Send>, mode: GaitMode) -> Self {
        Self { lines: reader, n_bits: mode.kind.action_bits() }
    }

    pub fn open(path: &str, mode: GaitMode) -> Result<Self, PolicyError> {
        Ok(Self::new(Box::new(BufReader::new(File::open(path)?)), mode))
    }

    pub fn parse_line(line: &str, n_bits: usize) -> Result<Action, PolicyError> {
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if fields.len() != 4 + n_bits {
            return Err(PolicyError::External(format!("expected {} fields, got {}: {line:?}", 4 + n_bits, fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| PolicyError::External(format!("{s:?}: {e}")));
        let bit = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(PolicyError::External(format!("contact bit {s:?} is not 0 or 1"))),
        };
        Ok(Action {
            v_cmd: Vector3::new(num(fields[0])?, num(fields[1])?, num(fields[2])?),
            yaw_rate: num(fields[3])?,
            contact_bits: fields[4..].iter().map(|s| bit(s)).collect::<Result<_, _>>()?,
        })
    }
}

impl Policy for ExternalPolicy {
    fn act(&mut self, _obs: &Observation) -> Result<Action, PolicyError> {
        let mut line = String::new();
        loop {
            line.clear();
            if self.lines.read_line(&mut line)? == 0 {
                return Err(PolicyError::External("action stream ended".into()));
            }
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Self::parse_line(t, self.n_bits);
            }
        }
    }
}
